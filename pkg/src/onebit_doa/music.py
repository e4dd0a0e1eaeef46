"""MUSIC benchmark and shared peak extraction.

The eigensolver is a hand-rolled cyclic Jacobi (see ``kernels``); the
array sizes here never exceed a few dozen, so robustness beats speed.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .arrays import build_dictionary

_SPECTRUM_KINDS = ("music", "lista", "ista")


@dataclass(frozen=True)
class Spectrum:
    """Nonnegative values over the angle grid with a solver tag."""

    angles_deg: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.values.shape != self.angles_deg.shape:
            raise ValueError("one value per grid angle required")
        if self.kind not in _SPECTRUM_KINDS:
            raise ValueError(f"kind must be one of {_SPECTRUM_KINDS}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectrum values must be finite")
        if np.any(self.values < 0):
            raise ValueError("spectrum values must be nonnegative")


def hermitian_eig(matrix):
    """Eigenvalues (ascending) and orthonormal eigenvectors.

    Mildly non-Hermitian inputs are symmetrized first; non-finite input
    is rejected.
    """
    a = np.asarray(matrix, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return kernels.jacobi_eigh((a + a.conj().T) / 2.0)


def music_spectrum(matrix, num_sources, cfg):
    """MUSIC pseudospectrum of a covariance (estimate) over the config grid.

    Scores each grid angle by the inverse energy of its steering vector in
    the noise subspace (the eigenvectors of the M-K smallest eigenvalues).
    """
    m = cfg.sensor_count
    if not 1 <= num_sources < m:
        raise ValueError(f"source count must satisfy 1 <= K < {m}")
    _, vectors = hermitian_eig(matrix)
    noise_basis = vectors[:, : m - num_sources]
    atoms = build_dictionary(cfg)
    energy = np.sum(np.abs(noise_basis.conj().T @ atoms) ** 2, axis=0)
    values = 1.0 / np.maximum(energy, 1e-30)
    return Spectrum(angles_deg=cfg.grid_angles(), values=values, kind="music")


def power_spectrum(nu, cfg, kind="lista"):
    """Wrap a recovered grid-power vector as a Spectrum (negatives clamped)."""
    return Spectrum(
        angles_deg=cfg.grid_angles(),
        values=np.maximum(np.asarray(nu, dtype=float), 0.0),
        kind=kind,
    )


def find_peaks(spec, count, min_separation=2):
    """Largest local maxima, at most ``count``, separated by >= min_separation cells.

    Ties in value break toward the lower angle; grid endpoints count as
    peaks when they dominate their single neighbor. Returns (angle, value)
    pairs sorted by descending value; fewer than ``count`` entries simply
    means the spectrum did not have that many separated peaks.
    """
    if count < 1:
        raise ValueError("need a positive peak count")
    v = spec.values
    n = v.size
    candidates = []
    for i in range(n):
        left_ok = i == 0 or v[i] > v[i - 1]
        right_ok = i == n - 1 or v[i] > v[i + 1]
        if left_ok and right_ok:
            candidates.append(i)
    candidates.sort(key=lambda i: (-v[i], i))
    chosen = []
    for i in candidates:
        if all(abs(i - j) >= min_separation for j in chosen):
            chosen.append(i)
        if len(chosen) == count:
            break
    return [(float(spec.angles_deg[i]), float(v[i])) for i in chosen]


def match_peaks(true_doas_deg, peaks, tol_deg):
    """Greedy one-to-one match of peaks to true DoAs within a tolerance.

    Returns (all_matched, errors) where errors[k] is the absolute angle
    error of the peak assigned to the k-th true DoA (NaN when unmatched).
    """
    truths = np.atleast_1d(np.asarray(true_doas_deg, dtype=float))
    errors = np.full(truths.size, np.nan)
    if peaks:
        angles = np.array([p[0] for p in peaks])
        dist = np.abs(truths[:, None] - angles[None, :])
        taken_t, taken_p = set(), set()
        for _ in range(min(truths.size, angles.size)):
            masked = dist.copy()
            masked[list(taken_t), :] = np.inf
            masked[:, list(taken_p)] = np.inf
            k, j = np.unravel_index(np.argmin(masked), masked.shape)
            if not np.isfinite(masked[k, j]):
                break
            taken_t.add(int(k))
            taken_p.add(int(j))
            errors[k] = dist[k, j]
    matched = bool(np.all(np.isfinite(errors)) and np.all(errors <= tol_deg + 1e-12))
    return matched, errors


def write_spectrum_csv(path, spectra, provenance=None):
    """CSV export with columns angle_deg, value, kind; one row per grid angle.

    ``spectra`` may be a single Spectrum or a list (rows concatenated).
    ``provenance`` adds a leading comment line with config hash and seed.
    """
    if not isinstance(spectra, (list, tuple)):
        spectra = [spectra]
    with open(path, "w", newline="") as fh:
        if provenance:
            fh.write(f"# config_hash={provenance['config_hash']} seed={provenance['seed']}\n")
        writer = csv.writer(fh)
        writer.writerow(["angle_deg", "value", "kind"])
        for spec in spectra:
            for angle, value in zip(spec.angles_deg, spec.values):
                writer.writerow([f"{angle:.10g}", f"{value:.17g}", spec.kind])
