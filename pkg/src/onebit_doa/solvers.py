"""Sparse grid-power recovery: ISTA and a trainable tied unrolled network.

The unrolled network applies I layers of
    nu <- soft(nu + W_i^T (c - Phi nu), eta_i)
starting from zero, with one weight matrix and one threshold per layer.
Gradients are hand-written reverse mode (no autodiff framework); training
is mini-batch Adam on the mean squared recovery error.
"""

import struct
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .arrays import (
    SourceScene,
    build_linear_model,
    generate_snapshots,
    rayleigh_beamwidth_deg,
    stack_covariance,
    true_covariance,
)
from .quantization import estimate_covariance, quantize_snapshot_file


class TrainingDiverged(RuntimeError):
    """Training loss blew past the divergence guard."""


def soft_threshold(x, eta):
    """Componentwise shrinkage sgn(x) * max(0, |x| - eta)."""
    if eta < 0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - eta, 0.0)


def spectral_norm_sq(phi, tol=1e-13, max_iter=5000):
    """Largest eigenvalue of phi^T phi by power iteration (deterministic start)."""
    phi = np.asarray(phi, dtype=float)
    gram = phi.T @ phi
    v = np.full(gram.shape[0], 1.0 / np.sqrt(gram.shape[0]))
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        lam_new = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    return lam


def ista_step_size(phi):
    """Step 1/sigma_max(phi)^2, deflated a hair so the descent bound holds."""
    lam = spectral_norm_sq(phi)
    if lam <= 0:
        raise ValueError("dictionary has zero spectral norm")
    return 1.0 / (lam * (1.0 + 1e-9))


def ista_objective(phi, c, nu, penalty):
    r = c - phi @ nu
    return 0.5 * float(r @ r) + penalty * float(np.sum(np.abs(nu)))


def ista_solve(model, c, penalty, iterations, step=None, record=False):
    """Solve the l1-penalized covariance fit by proximal gradient.

    Parameters
    ----------
    model : LinearModel
    c : (2M^2,) clean measurement (offset already removed)
    penalty : positive l1 weight
    iterations : iteration count
    step : optional step size; defaults to 1/sigma_max^2 via power iteration
    record : when true also return the (iterations+1, L) iterate history

    The objective is nonincreasing along the returned iterates.
    """
    phi = model.dictionary
    if not np.all(np.isfinite(phi)):
        raise ValueError("model dictionary has non-finite entries")
    if not np.all(np.isfinite(c)):
        raise ValueError("measurement has non-finite entries")
    if step is None:
        step = ista_step_size(phi)
    return kernels.ista_run(phi, c, penalty, step, iterations, record=record)


@dataclass
class ListaParams:
    """Per-layer weights (I, 2M^2, L) and nonnegative thresholds (I,)."""

    weights: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=float)
        self.thresholds = np.ascontiguousarray(self.thresholds, dtype=float)
        if self.weights.ndim != 3 or self.depth < 1:
            raise ValueError("need a (layers, dim, grid) weight stack")
        if self.thresholds.shape != (self.depth,):
            raise ValueError("need one threshold per layer")
        if np.any(self.thresholds < 0):
            raise ValueError("thresholds must be nonnegative")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.thresholds))):
            raise ValueError("parameters must be finite")

    @property
    def depth(self):
        return self.weights.shape[0]

    def copy(self):
        return ListaParams(self.weights.copy(), self.thresholds.copy())

    @classmethod
    def ista_init(cls, model, penalty, depth, step=None):
        """Parameters that make the network reproduce ISTA exactly."""
        if step is None:
            step = ista_step_size(model.dictionary)
        w = np.repeat((step * model.dictionary)[None, :, :], depth, axis=0)
        eta = np.full(depth, step * penalty)
        return cls(w, eta)


def lista_forward(params, model, c):
    """Apply all layers to one measurement.

    Returns (final estimate, list of the I per-layer outputs). The start
    iterate is always zero.
    """
    outputs, _, _ = kernels.lista_forward_batch(
        params.weights, params.thresholds, model.dictionary, np.atleast_2d(c)
    )
    layers = [outputs[i + 1, 0].copy() for i in range(params.depth)]
    return layers[-1], layers


def _forward_cache(params, phi, c_batch):
    outputs, preacts, residuals = kernels.lista_forward_batch(
        params.weights, params.thresholds, phi, c_batch
    )
    for i in range(params.depth):
        if not np.all(np.isfinite(preacts[i])):
            raise TrainingDiverged(f"non-finite activations in layer {i}")
    return outputs, preacts, residuals


def lista_backward(params, model, target_batch, measurement_batch):
    """Gradients of the batch-mean squared recovery error.

    Returns (grad_weights, grad_thresholds, loss) where loss is
    mean_j ||nu_final_j - target_j||_2^2. The shrinkage subgradient at the
    kink |u| = eta is 0.
    """
    targets = np.atleast_2d(np.asarray(target_batch, dtype=float))
    c_batch = np.atleast_2d(np.asarray(measurement_batch, dtype=float))
    if targets.shape[0] != c_batch.shape[0] or targets.shape[0] == 0:
        raise ValueError("need a nonempty batch of (target, measurement) pairs")
    phi = model.dictionary
    outputs, preacts, residuals = _forward_cache(params, phi, c_batch)
    grad_w, grad_eta = kernels.lista_backward_batch(
        params.weights, params.thresholds, phi, outputs, preacts, residuals, targets
    )
    loss = float(np.mean(np.sum((outputs[-1] - targets) ** 2, axis=1)))
    return grad_w, grad_eta, loss


@dataclass(frozen=True)
class TrainingSet:
    """Target grid powers and clean measurements, split into train/validation."""

    targets: np.ndarray
    measurements: np.ndarray
    num_train: int
    num_val: int
    dither_scales: np.ndarray = None

    def __post_init__(self):
        if self.targets.shape[0] != self.measurements.shape[0]:
            raise ValueError("one measurement per target required")
        if self.num_train + self.num_val != self.targets.shape[0]:
            raise ValueError("split sizes must sum to the sample count")
        if np.any(self.targets < 0):
            raise ValueError("target powers must be nonnegative")
        if not np.all(np.isfinite(self.measurements)):
            raise ValueError("measurements must be finite")

    @property
    def size(self):
        return self.targets.shape[0]

    def train_split(self):
        return self.targets[: self.num_train], self.measurements[: self.num_train]

    def val_split(self):
        return self.targets[self.num_train :], self.measurements[self.num_train :]


@dataclass(frozen=True)
class TrainOptions:
    """Adam hyperparameters and the weight parameterization used in training.

    ``weight_structure`` controls which family the per-layer weights are
    optimized over; every choice yields ordinary full weight matrices:
      * "dictionary_gain" (default): W_i = Phi diag(g_i), one gain per grid
        cell per layer. Preserves the dictionary geometry, which keeps the
        recovered power lobes smooth; free-form training on the severely
        coherent covariance dictionary memorizes measurement noise instead.
      * "scalar_step": W_i = a_i Phi, one learned step size per layer.
      * "full": every entry of every W_i free (the literal unrolled form).
    """

    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    divergence_factor: float = 10.0
    weight_structure: str = "dictionary_gain"
    average_checkpoints: int = 1

    def __post_init__(self):
        if self.weight_structure not in ("dictionary_gain", "scalar_step", "full"):
            raise ValueError(f"unknown weight structure {self.weight_structure!r}")
        if self.average_checkpoints < 1:
            raise ValueError("average_checkpoints must be at least 1")


@dataclass
class TrainReport:
    """Per-epoch losses, timing, and the best-validation parameters."""

    train_losses: list
    val_losses: list
    epoch_seconds: list
    params: ListaParams
    best_epoch: int


def default_penalty(model, dataset):
    """Default l1 weight policy: 0.1 * ||Phi^T c_bar||_inf over the dataset mean."""
    c_bar = dataset.measurements.mean(axis=0)
    return 0.1 * float(np.max(np.abs(model.dictionary.T @ c_bar)))


def _mean_loss(params, phi, targets, measurements, chunk=512):
    total = 0.0
    for lo in range(0, targets.shape[0], chunk):
        out, _, _ = kernels.lista_forward_batch(
            params.weights, params.thresholds, phi, measurements[lo : lo + chunk]
        )
        total += float(np.sum((out[-1] - targets[lo : lo + chunk]) ** 2))
    return total / targets.shape[0]


class _WeightStructure:
    """Maps between full weight stacks and the trained parameterization."""

    def __init__(self, kind, phi, depth):
        self.kind = kind
        self.phi = phi
        self.depth = depth
        self.col_norm_sq = np.sum(phi**2, axis=0)

    def project(self, weights):
        """Structure coordinates best matching a full weight stack (exact
        when the stack already has the structure, e.g. the ISTA init)."""
        if self.kind == "full":
            return weights.copy()
        gains = np.einsum("idl,dl->il", weights, self.phi) / self.col_norm_sq
        if self.kind == "scalar_step":
            return gains.mean(axis=1, keepdims=True)
        return gains

    def materialize(self, theta):
        if self.kind == "full":
            return theta.copy()
        return self.phi[None, :, :] * theta[:, None, :]

    def grad(self, grad_weights):
        if self.kind == "full":
            return grad_weights
        gains_grad = np.einsum("idl,dl->il", grad_weights, self.phi)
        if self.kind == "scalar_step":
            return gains_grad.sum(axis=1, keepdims=True)
        return gains_grad


def train(dataset, init_params, options=TrainOptions(), model=None, seed=0):
    """Mini-batch Adam on the empirical squared recovery error.

    The weights are optimized inside the family selected by
    ``options.weight_structure`` (see TrainOptions); gradients come from
    the full reverse-mode pass and are chained onto the structure
    coordinates. Shuffles the training split each epoch with a generator
    seeded by ``seed`` (identical seeds give identical loss sequences),
    projects the thresholds back to nonnegative after every update, and
    aborts with ``TrainingDiverged`` if the epoch training loss exceeds
    the divergence guard. Returns best-validation parameters as ordinary
    full weight matrices: the single best epoch, or with
    ``average_checkpoints`` > 1 the parameter average of the k
    lowest-validation-loss epochs (checkpoint averaging smooths the
    stochastic wobble of late training).
    """
    if model is None:
        raise ValueError("model (LinearModel) is required")
    phi = model.dictionary
    train_t, train_c = dataset.train_split()
    val_t, val_c = dataset.val_split()
    if train_t.shape[0] == 0 or val_t.shape[0] == 0:
        raise ValueError("both splits must be nonempty")

    opt = options
    structure = _WeightStructure(opt.weight_structure, phi, init_params.depth)
    theta = structure.project(init_params.weights)
    eta = init_params.thresholds.copy()
    params = ListaParams(structure.materialize(theta), eta)

    m_t = np.zeros_like(theta)
    v_t = np.zeros_like(theta)
    m_e = np.zeros_like(eta)
    v_e = np.zeros_like(eta)
    rng = np.random.default_rng(seed)

    initial_loss = _mean_loss(params, phi, train_t, train_c)
    guard = opt.divergence_factor * max(initial_loss, 1e-30)

    train_losses, val_losses, epoch_seconds = [], [], []
    snapshots = []
    best_val = np.inf
    best_params = params.copy()
    best_epoch = -1
    step = 0
    for epoch in range(opt.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(train_t.shape[0])
        sq_sum = 0.0
        for lo in range(0, order.size, opt.batch_size):
            idx = order[lo : lo + opt.batch_size]
            grad_w, grad_eta, loss = lista_backward(params, model, train_t[idx], train_c[idx])
            sq_sum += loss * idx.size
            if opt.learning_rate != 0.0:
                step += 1
                bc1 = 1.0 - opt.beta1**step
                bc2 = 1.0 - opt.beta2**step
                g_t = structure.grad(grad_w)
                m_t = opt.beta1 * m_t + (1 - opt.beta1) * g_t
                v_t = opt.beta2 * v_t + (1 - opt.beta2) * g_t**2
                theta -= opt.learning_rate * (m_t / bc1) / (np.sqrt(v_t / bc2) + opt.adam_eps)
                m_e = opt.beta1 * m_e + (1 - opt.beta1) * grad_eta
                v_e = opt.beta2 * v_e + (1 - opt.beta2) * grad_eta**2
                eta -= opt.learning_rate * (m_e / bc1) / (np.sqrt(v_e / bc2) + opt.adam_eps)
                np.maximum(eta, 0.0, out=eta)
                params = ListaParams(structure.materialize(theta), eta)
        epoch_train = sq_sum / order.size
        if not np.isfinite(epoch_train) or epoch_train > guard:
            raise TrainingDiverged(
                f"training loss {epoch_train:.6g} exceeded {opt.divergence_factor}x "
                f"the initial loss {initial_loss:.6g} at epoch {epoch}"
            )
        epoch_val = _mean_loss(params, phi, val_t, val_c)
        train_losses.append(epoch_train)
        val_losses.append(epoch_val)
        epoch_seconds.append(time.perf_counter() - t0)
        if opt.average_checkpoints > 1:
            snapshots.append((theta.copy(), eta.copy()))
        if epoch_val < best_val:
            best_val = epoch_val
            best_params = params.copy()
            best_epoch = epoch

    if opt.average_checkpoints > 1 and snapshots:
        k = min(opt.average_checkpoints, len(snapshots))
        chosen = np.argsort(val_losses, kind="stable")[:k]
        theta_avg = np.mean([snapshots[i][0] for i in chosen], axis=0)
        eta_avg = np.maximum(np.mean([snapshots[i][1] for i in chosen], axis=0), 0.0)
        best_params = ListaParams(structure.materialize(theta_avg), eta_avg)

    return TrainReport(
        train_losses=train_losses,
        val_losses=val_losses,
        epoch_seconds=epoch_seconds,
        params=best_params,
        best_epoch=best_epoch,
    )


def make_scene_sampler(cfg, num_sources, noise_variance, power_value=1.0,
                       power_range=None, min_separation_deg=None):
    """Random-scene generator: DoAs uniform over the grid interval.

    Draws are rejected until all pairwise separations reach
    ``min_separation_deg``, which defaults to one Rayleigh beamwidth
    (targets closer than the aperture resolution are not separable by any
    method on this grid, so admitting them turns every downstream metric
    into sampler luck). Powers are either all ``power_value`` or uniform
    over ``power_range``.
    """
    if min_separation_deg is None:
        min_separation_deg = rayleigh_beamwidth_deg(cfg)
    lo, hi = cfg.grid_start, cfg.grid_stop

    def sample(rng):
        for _ in range(10_000):
            doas = rng.uniform(lo, hi, num_sources)
            if num_sources == 1 or np.min(np.diff(np.sort(doas))) >= min_separation_deg:
                break
        else:
            raise ValueError("could not place sources with the requested separation")
        if power_range is not None:
            powers = rng.uniform(power_range[0], power_range[1], num_sources)
        else:
            powers = np.full(num_sources, power_value)
        return SourceScene.on_grid(cfg, doas, powers, noise_variance)

    return sample


def sample_measurement(cfg, scene, num_snapshots, snapshot_seed, dither_seed,
                       dither_margin=1.2, dither_fixed=None, noise_known=True,
                       exact_covariance=False):
    """One pipeline pass: scene -> snapshots -> one-bit -> covariance -> (nu, c).

    Returns (target grid powers, clean measurement, dither scale, estimate).
    With ``exact_covariance`` the quantizer is bypassed and the exact
    covariance is stacked instead (scale reported as 0).
    """
    model = build_linear_model(cfg, scene.noise_variance if noise_known else 0.0,
                               np.zeros(2 * cfg.sensor_count**2))
    if exact_covariance:
        b = stack_covariance(true_covariance(scene, cfg))
        scale = 0.0
        estimate = None
    else:
        snaps = generate_snapshots(scene, cfg, num_snapshots, snapshot_seed)
        bits = quantize_snapshot_file(snaps, margin=dither_margin,
                                      fixed_scale=dither_fixed, seed=dither_seed)
        estimate = estimate_covariance(bits)
        b = stack_covariance(estimate.matrix)
        scale = bits.scale
    c = b - model.noise_offset
    return scene.grid_powers(cfg), c, scale, estimate


def make_training_set(cfg, scene_sampler, size, num_snapshots, seed,
                      num_val=None, dither_margin=1.2, dither_fixed=None,
                      noise_known=True, exact_covariance=False, noise_copies=1):
    """Build the (target, measurement) pairs for training the network.

    ``size`` counts scenes; each training scene contributes
    ``noise_copies`` rows that share the target but have independent
    snapshot and dither draws (so per-row quantization noise carries no
    learnable signal). Validation scenes always get a single row. All
    randomness derives from ``seed``; the result is deterministic. A
    fixed dither scale that clips any sample raises DynamicRangeError.
    """
    if size < 2:
        raise ValueError("need at least two samples to split")
    if num_val is None:
        num_val = max(1, round(0.2 * size))
    if not 0 < num_val < size:
        raise ValueError("validation split must be a proper subset")
    if noise_copies < 1:
        raise ValueError("need at least one noise copy per scene")
    master = np.random.default_rng(seed)
    width = cfg.grid_size
    dim = 2 * cfg.sensor_count**2
    num_train_scenes = size - num_val
    rows = noise_copies * num_train_scenes + num_val
    targets = np.empty((rows, width))
    measurements = np.empty((rows, dim))
    scales = np.empty(rows)
    row = 0
    for j in range(size):
        scene = scene_sampler(master)
        copies = noise_copies if j < num_train_scenes else 1
        for _ in range(copies):
            snap_seed = int(master.integers(2**63))
            dith_seed = int(master.integers(2**63))
            targets[row], measurements[row], scales[row], _ = sample_measurement(
                cfg, scene, num_snapshots, snap_seed, dith_seed,
                dither_margin=dither_margin, dither_fixed=dither_fixed,
                noise_known=noise_known, exact_covariance=exact_covariance,
            )
            row += 1
    return TrainingSet(
        targets=targets,
        measurements=measurements,
        num_train=noise_copies * num_train_scenes,
        num_val=num_val,
        dither_scales=scales,
    )


CHECKPOINT_MAGIC = b"LSTA"
CHECKPOINT_VERSION = 1
DATASET_MAGIC = b"DSET"


def write_checkpoint(path, params):
    """Checkpoint format: magic, version, I, M, L; then per layer W row-major, eta."""
    depth, dim, width = params.weights.shape
    m = int(round(np.sqrt(dim / 2)))
    if 2 * m * m != dim:
        raise ValueError("weight rows must equal 2*M^2 for some sensor count M")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IIII", CHECKPOINT_VERSION, depth, m, width))
        for i in range(depth):
            fh.write(params.weights[i].astype("<f8").tobytes(order="C"))
            fh.write(struct.pack("<d", params.thresholds[i]))


def read_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        version, depth, m, width = struct.unpack("<IIII", fh.read(16))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        dim = 2 * m * m
        weights = np.empty((depth, dim, width))
        thresholds = np.empty(depth)
        for i in range(depth):
            weights[i] = np.frombuffer(fh.read(8 * dim * width), dtype="<f8").reshape(dim, width)
            (thresholds[i],) = struct.unpack("<d", fh.read(8))
    return ListaParams(weights, thresholds)


def write_dataset(path, dataset):
    """Dataset format: magic, S, L, 2M^2; then per sample target then measurement."""
    s = dataset.size
    width = dataset.targets.shape[1]
    dim = dataset.measurements.shape[1]
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<III", s, width, dim))
        for j in range(s):
            fh.write(dataset.targets[j].astype("<f8").tobytes())
            fh.write(dataset.measurements[j].astype("<f8").tobytes())


def read_dataset(path, num_val=None):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DATASET_MAGIC:
            raise ValueError(f"not a dataset file (magic {magic!r})")
        s, width, dim = struct.unpack("<III", fh.read(12))
        targets = np.empty((s, width))
        measurements = np.empty((s, dim))
        for j in range(s):
            targets[j] = np.frombuffer(fh.read(8 * width), dtype="<f8")
            measurements[j] = np.frombuffer(fh.read(8 * dim), dtype="<f8")
    if num_val is None:
        num_val = max(1, round(0.2 * s))
    return TrainingSet(
        targets=targets,
        measurements=measurements,
        num_train=s - num_val,
        num_val=num_val,
    )
