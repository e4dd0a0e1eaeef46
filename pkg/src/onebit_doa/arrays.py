"""Uniform linear array model.

Steering vectors on an overcomplete angle grid, multi-snapshot data
simulation, the exact signal covariance, and its real-stacked linear
form  b = Phi @ nu + z  used by the sparse solvers. Angles are degrees
at every interface and radians only inside the trig calls.
"""

import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

SNAPSHOT_MAGIC = b"OBDA"
SNAPSHOT_VERSION = 1

_DEG = np.pi / 180.0


@dataclass(frozen=True)
class ArrayConfig:
    """Sensor count, element spacing (in wavelengths) and the DoA grid."""

    sensor_count: int
    spacing_ratio: float = 0.5
    grid_start: float = -60.0
    grid_stop: float = 60.0
    grid_step: float = 1.0

    def __post_init__(self):
        if self.sensor_count < 2:
            raise ValueError("at least 2 sensors required")
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        if self.grid_stop < self.grid_start:
            raise ValueError("grid_stop must be >= grid_start")
        if not 0 < self.spacing_ratio <= 0.5:
            warnings.warn(
                f"element spacing {self.spacing_ratio} wavelengths aliases angles "
                "(expected 0 < d <= 0.5)",
                stacklevel=2,
            )
        if self.grid_size <= self.sensor_count:
            raise ValueError(
                f"grid must be overcomplete: {self.grid_size} points for "
                f"{self.sensor_count} sensors"
            )

    @property
    def grid_size(self):
        span = (self.grid_stop - self.grid_start) / self.grid_step
        return int(np.floor(span + 1e-9)) + 1

    def grid_angles(self):
        """Grid angles in degrees, length ``grid_size``."""
        return self.grid_start + self.grid_step * np.arange(self.grid_size)

    def to_dict(self):
        return {
            "sensor_count": self.sensor_count,
            "spacing_ratio": self.spacing_ratio,
            "grid_start": self.grid_start,
            "grid_stop": self.grid_stop,
            "grid_step": self.grid_step,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            sensor_count=int(d["sensor_count"]),
            spacing_ratio=float(d.get("spacing_ratio", 0.5)),
            grid_start=float(d.get("grid_start", -60.0)),
            grid_stop=float(d.get("grid_stop", 60.0)),
            grid_step=float(d.get("grid_step", 1.0)),
        )


@dataclass(frozen=True)
class SourceScene:
    """Ground truth for one simulated scenario.

    ``grid_support`` holds the grid index nearest to each true DoA
    (ties broken toward the lower index), which is where the simulator
    actually places the sources.
    """

    true_doas_deg: np.ndarray
    source_variances: np.ndarray
    noise_variance: float
    grid_support: np.ndarray

    @classmethod
    def on_grid(cls, cfg, doas_deg, source_variances, noise_variance):
        """Build a scene for ``cfg``, snapping each DoA to its nearest grid point."""
        doas = np.atleast_1d(np.asarray(doas_deg, dtype=float))
        powers = np.atleast_1d(np.asarray(source_variances, dtype=float))
        if doas.ndim != 1 or doas.shape != powers.shape:
            raise ValueError("need one variance per DoA")
        if doas.size >= cfg.sensor_count:
            raise ValueError(
                f"{doas.size} sources not identifiable with {cfg.sensor_count} sensors"
            )
        if np.any(powers <= 0):
            raise ValueError("source variances must be positive")
        if noise_variance < 0:
            raise ValueError("noise variance must be nonnegative")
        grid = cfg.grid_angles()
        if np.any(doas < cfg.grid_start) or np.any(doas > cfg.grid_stop):
            raise ValueError("true DoAs must lie inside the grid interval")
        support = np.array([int(np.argmin(np.abs(grid - th))) for th in doas])
        if len(set(support.tolist())) != doas.size:
            raise ValueError("two sources map to the same grid point")
        return cls(
            true_doas_deg=doas,
            source_variances=powers,
            noise_variance=float(noise_variance),
            grid_support=support,
        )

    @property
    def num_sources(self):
        return self.true_doas_deg.size

    def grid_powers(self, cfg):
        """Length-L nonnegative power vector with the source variances on the support."""
        nu = np.zeros(cfg.grid_size)
        nu[self.grid_support] = self.source_variances
        return nu

    def to_dict(self):
        return {
            "true_doas_deg": [float(x) for x in self.true_doas_deg],
            "source_variances": [float(x) for x in self.source_variances],
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, cfg, d):
        return cls.on_grid(
            cfg, d["true_doas_deg"], d["source_variances"], float(d["noise_variance"])
        )


@dataclass(frozen=True)
class SnapshotSet:
    """Complex array measurements, one column per snapshot, plus the seed used."""

    data: np.ndarray
    seed: int

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError("snapshot data must be a sensors x snapshots matrix")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("snapshot data must be finite")

    @property
    def num_sensors(self):
        return self.data.shape[0]

    @property
    def num_snapshots(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class LinearModel:
    """Real-stacked covariance model: measurement = dictionary @ nu + noise_offset."""

    dictionary: np.ndarray
    noise_offset: np.ndarray
    measurement: np.ndarray
    clean_measurement: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.clean_measurement is None:
            object.__setattr__(
                self, "clean_measurement", self.measurement - self.noise_offset
            )

    @property
    def stacked_dim(self):
        return self.dictionary.shape[0]

    @property
    def grid_size(self):
        return self.dictionary.shape[1]


def rayleigh_beamwidth_deg(cfg):
    """Aperture resolution limit lambda/(M d) expressed in degrees."""
    return float(np.degrees(1.0 / (cfg.sensor_count * cfg.spacing_ratio)))


def steering_vector(theta_deg, cfg):
    """Array response a(theta): entry m is exp(-2j pi m d sin(theta) / lambda).

    The first entry is exactly 1+0j and all entries have unit modulus.
    """
    phase = -2.0 * np.pi * cfg.spacing_ratio * np.sin(theta_deg * _DEG)
    return np.exp(1j * phase * np.arange(cfg.sensor_count))


def build_dictionary(cfg):
    """Steering matrix over the full grid, shape (sensors, grid_size)."""
    phases = -2.0 * np.pi * cfg.spacing_ratio * np.sin(cfg.grid_angles() * _DEG)
    return np.exp(1j * np.outer(np.arange(cfg.sensor_count), phases))


def generate_snapshots(scene, cfg, num_snapshots, seed):
    """Simulate ``num_snapshots`` array measurements for a scene.

    Per snapshot the active grid cells carry independent circular complex
    Gaussian amplitudes with the scene's variances, plus circular complex
    Gaussian sensor noise. Bitwise reproducible for a given seed.
    """
    if num_snapshots < 1:
        raise ValueError("need at least one snapshot")
    if scene.num_sources >= cfg.sensor_count:
        raise ValueError("scene has too many sources for this array")
    if np.any(scene.grid_support >= cfg.grid_size):
        raise ValueError("scene support does not fit this grid")
    rng = np.random.default_rng(seed)
    k = scene.num_sources
    m = cfg.sensor_count
    amp = np.sqrt(scene.source_variances / 2.0)[:, None]
    sources = amp * (
        rng.standard_normal((k, num_snapshots)) + 1j * rng.standard_normal((k, num_snapshots))
    )
    noise_amp = np.sqrt(scene.noise_variance / 2.0)
    noise = noise_amp * (
        rng.standard_normal((m, num_snapshots)) + 1j * rng.standard_normal((m, num_snapshots))
    )
    atoms = build_dictionary(cfg)[:, scene.grid_support]
    return SnapshotSet(data=atoms @ sources + noise, seed=int(seed))


def true_covariance(scene, cfg):
    """Exact covariance of the simulated snapshots (Hermitian PSD)."""
    atoms = build_dictionary(cfg)[:, scene.grid_support]
    r = (atoms * scene.source_variances) @ atoms.conj().T
    r += scene.noise_variance * np.eye(cfg.sensor_count)
    return (r + r.conj().T) / 2.0


def stack_covariance(r):
    """Column-major vectorization split into stacked real and imaginary halves."""
    y = np.asarray(r).ravel(order="F")
    return np.concatenate([y.real, y.imag])


def build_linear_model(cfg, noise_variance, b_source):
    """Assemble the real-stacked linear model for a measured covariance.

    ``dictionary`` stacks Re and Im of the columnwise Khatri-Rao product
    conj(A) (*) A; ``noise_offset`` carries noise_variance at the real
    positions of the covariance diagonal and is zero elsewhere.
    """
    m = cfg.sensor_count
    b = np.asarray(b_source, dtype=float)
    if b.shape != (2 * m * m,):
        raise ValueError(f"expected a length-{2 * m * m} stacked vector, got {b.shape}")
    a = build_dictionary(cfg)
    # columnwise kron(conj(a_l), a_l): index j*M+i holds conj(a_j) a_i = vec(a a^H)
    kr = (a.conj()[:, None, :] * a[None, :, :]).reshape(m * m, cfg.grid_size)
    phi = np.concatenate([kr.real, kr.imag], axis=0)
    z = np.zeros(2 * m * m)
    z[(np.arange(m) * m + np.arange(m))] = noise_variance
    return LinearModel(dictionary=phi, noise_offset=z, measurement=b)


def write_snapshots(path, snapshots):
    """Write the OBDA binary format: header + f64 (re, im) pairs, snapshot-major."""
    m, n = snapshots.data.shape
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<III", SNAPSHOT_VERSION, m, n))
        fh.write(np.asfortranarray(snapshots.data.astype("<c16")).tobytes(order="F"))


def read_snapshots(path, seed=0):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"not a snapshot file (magic {magic!r})")
        version, m, n = struct.unpack("<III", fh.read(12))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot file version {version}")
        raw = fh.read(16 * m * n)
    data = np.frombuffer(raw, dtype="<c16").reshape((m, n), order="F")
    return SnapshotSet(data=data.copy(), seed=seed)


def save_scene(path, cfg, scene):
    payload = {"array": cfg.to_dict(), "scene": scene.to_dict()}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scene(path):
    with open(path) as fh:
        payload = json.load(fh)
    cfg = ArrayConfig.from_dict(payload["array"])
    scene = SourceScene.from_dict(cfg, payload["scene"])
    return cfg, scene
