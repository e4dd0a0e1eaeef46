"""Theoretical error bounds and the Monte-Carlo checks run against them.

The covariance-error bound is verified as a rate (log-log slope of the
median error versus the snapshot count) because its universal constants
depend on an unquantified subgaussian norm. The per-layer recovery bound
is evaluated literally and compared against measured error curves.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .arrays import generate_snapshots, true_covariance
from .quantization import DitherParams, estimate_covariance, pick_dither_scale, quantize
from .solvers import lista_forward


def worker_count():
    """Thread cap from ONEBIT_DOA_THREADS, defaulting to the hardware count."""
    env = os.environ.get("ONEBIT_DOA_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class BoundParams:
    """Constants of the per-layer recovery bound.

    ``cov_constant`` is contextual provenance only; it never enters the
    numbers.
    """

    sparsity: int
    amplitude: float
    layer_decay: float
    probability_margin: float
    prefactor: float
    dither_scale: float
    sensor_count: int
    num_snapshots: int
    cov_constant: float = None

    def __post_init__(self):
        positives = {
            "sparsity": self.sparsity,
            "amplitude": self.amplitude,
            "layer_decay": self.layer_decay,
            "prefactor": self.prefactor,
            "dither_scale": self.dither_scale,
            "sensor_count": self.sensor_count,
            "num_snapshots": self.num_snapshots,
        }
        for name, value in positives.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.probability_margin < 0:
            raise ValueError("probability_margin must be nonnegative")


def covariance_error_norms(reference, estimate):
    """(max entrywise modulus, Frobenius norm) of the difference."""
    r = np.asarray(reference)
    e = np.asarray(estimate)
    if r.shape != e.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {e.shape}")
    diff = e - r
    return float(np.max(np.abs(diff))), float(np.linalg.norm(diff))


def layer_error_bound(layer_index, p):
    """Per-layer recovery bound: s*B*exp(-c2*i) + C*T^2*M^2*sqrt((ln M + t)/N)."""
    decay = p.sparsity * p.amplitude * np.exp(-p.layer_decay * layer_index)
    floor = (
        p.prefactor
        * p.dither_scale**2
        * p.sensor_count**2
        * np.sqrt((np.log(p.sensor_count) + p.probability_margin) / p.num_snapshots)
    )
    return float(decay + floor)


def per_layer_error_curve(params, model, target_nu, c):
    """l2 error of every layer output against the target power vector."""
    _, layers = lista_forward(params, model, c)
    target = np.asarray(target_nu, dtype=float)
    return np.array([float(np.linalg.norm(layer - target)) for layer in layers])


def _one_covariance_error(scene, cfg, num_snapshots, scale, snap_seed, dither_seed):
    snaps = generate_snapshots(scene, cfg, num_snapshots, snap_seed)
    bits = quantize(snaps, DitherParams(scale=scale, seed=dither_seed))
    est = estimate_covariance(bits)
    return covariance_error_norms(true_covariance(scene, cfg), est.matrix)


def covariance_error_sweep(scene, cfg, snapshot_counts, num_seeds, seed,
                           margin=1.2, fixed_scale=None):
    """Monte-Carlo covariance errors over a snapshot-count sweep.

    The dither scale is calibrated once on the largest count (so it is a
    true constant across the sweep) unless ``fixed_scale`` pins it. Each
    (count, trial) pair gets independent snapshot and dither seeds derived
    from ``seed``. Returns (scale, {count: (max_norms, fro_norms)}).
    """
    counts = sorted(int(n) for n in snapshot_counts)
    master = np.random.default_rng(seed)
    if fixed_scale is None:
        calib = generate_snapshots(scene, cfg, counts[-1], int(master.integers(2**63)))
        scale = pick_dither_scale(calib, margin)
    else:
        scale = float(fixed_scale)
    jobs = []
    for count in counts:
        for _ in range(num_seeds):
            jobs.append((count, int(master.integers(2**63)), int(master.integers(2**63))))
    threads = worker_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(lambda j: _one_covariance_error(scene, cfg, j[0], scale, j[1], j[2]), jobs)
            )
    else:
        results = [_one_covariance_error(scene, cfg, j[0], scale, j[1], j[2]) for j in jobs]
    out = {}
    for count in counts:
        rows = [r for j, r in zip(jobs, results) if j[0] == count]
        out[count] = (np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))
    return scale, out


def loglog_slope(xs, ys):
    """Least-squares slope of log(y) against log(x)."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    lx = lx - lx.mean()
    return float((lx @ (ly - ly.mean())) / (lx @ lx))


def write_sweep_csv(path, sweep_variable, values, medians, q25, q75, bound_values,
                    provenance=None):
    """Bound/error CSV: sweep_variable, value, empirical quartiles, bound.

    Empirical columns may be NaN when only the bound is being exported.
    """
    rows = len(values)

    def col(x):
        if x is None:
            return [float("nan")] * rows
        return list(x)

    with open(path, "w", newline="") as fh:
        if provenance:
            fh.write(f"# config_hash={provenance['config_hash']} seed={provenance['seed']}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["sweep_variable", "value", "empirical_median", "empirical_q25",
             "empirical_q75", "bound"]
        )
        for value, med, lo, hi, bnd in zip(values, col(medians), col(q25), col(q75),
                                           col(bound_values)):
            writer.writerow([sweep_variable, f"{value:.10g}", f"{med:.10g}",
                             f"{lo:.10g}", f"{hi:.10g}", f"{bnd:.10g}"])
