"""Backend selection for the hot kernels.

The compiled extension ``onebit_doa._kernels`` is preferred when it was
built; otherwise the pure-numpy ``_kernels_py`` module is used. Setting
the environment variable ``ONEBIT_DOA_PURE_PYTHON=1`` forces the numpy
path regardless of what is installed. ``BACKEND`` names the active one.

All wrappers normalize dtypes/contiguity so both backends see identical
inputs.
"""

import os

import numpy as np

from . import _kernels_py


def _select():
    if os.environ.get("ONEBIT_DOA_PURE_PYTHON", "").strip().lower() in ("1", "true", "yes"):
        return _kernels_py, "python"
    try:
        from . import _kernels  # noqa: PLC0415

        return _kernels, "compiled"
    except ImportError:
        return _kernels_py, "python"


_impl, BACKEND = _select()


def jacobi_eigh(matrix):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix."""
    a = np.ascontiguousarray(matrix, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return _impl.jacobi_eigh(a)


def lista_forward_batch(weights, thresholds, phi, measurements):
    w = np.ascontiguousarray(weights, dtype=np.float64)
    eta = np.ascontiguousarray(thresholds, dtype=np.float64)
    p = np.ascontiguousarray(phi, dtype=np.float64)
    c = np.ascontiguousarray(measurements, dtype=np.float64)
    if w.ndim != 3 or w.shape[1:] != p.shape:
        raise ValueError(f"weight stack {w.shape} does not match dictionary {p.shape}")
    if eta.shape != (w.shape[0],):
        raise ValueError("one threshold per layer required")
    if c.ndim != 2 or c.shape[1] != p.shape[0]:
        raise ValueError(f"measurement batch {c.shape} does not match dictionary {p.shape}")
    return _impl.lista_forward_batch(w, eta, p, c)


def lista_backward_batch(weights, thresholds, phi, outputs, preacts, residuals, targets):
    w = np.ascontiguousarray(weights, dtype=np.float64)
    eta = np.ascontiguousarray(thresholds, dtype=np.float64)
    p = np.ascontiguousarray(phi, dtype=np.float64)
    t = np.ascontiguousarray(targets, dtype=np.float64)
    o = np.ascontiguousarray(outputs, dtype=np.float64)
    u = np.ascontiguousarray(preacts, dtype=np.float64)
    r = np.ascontiguousarray(residuals, dtype=np.float64)
    if t.shape != o.shape[1:]:
        raise ValueError(f"target batch {t.shape} does not match forward outputs {o.shape[1:]}")
    return _impl.lista_backward_batch(w, eta, p, o, u, r, t)


def ista_run(phi, measurement, penalty, step, iterations, record=False):
    p = np.ascontiguousarray(phi, dtype=np.float64)
    c = np.ascontiguousarray(measurement, dtype=np.float64)
    if c.shape != (p.shape[0],):
        raise ValueError(f"measurement length {c.shape} does not match dictionary {p.shape}")
    if penalty <= 0:
        raise ValueError("penalty must be positive")
    if step <= 0:
        raise ValueError("step must be positive")
    return _impl.ista_run(p, c, float(penalty), float(step), int(iterations), bool(record))
