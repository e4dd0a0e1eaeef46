"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled ``_kernels`` extension; selected by
``onebit_doa.kernels`` when the extension is unavailable or when
``ONEBIT_DOA_PURE_PYTHON=1`` is set.
"""

import numpy as np

_JACOBI_MAX_SWEEPS = 60
_JACOBI_REL_TOL = 1e-14


def _soft(u, eta):
    return np.sign(u) * np.maximum(np.abs(u) - eta, 0.0)


def jacobi_eigh(matrix):
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    matrix : (M, M) complex ndarray
        Hermitian input (caller is responsible for symmetrizing).

    Returns
    -------
    values : (M,) float ndarray, ascending
    vectors : (M, M) complex ndarray, columns are orthonormal eigenvectors
    """
    a = np.array(matrix, dtype=np.complex128)
    m = a.shape[0]
    q = np.eye(m, dtype=np.complex128)
    if m == 1:
        return a.real.reshape(1).copy(), q

    scale = np.linalg.norm(a)
    tol = _JACOBI_REL_TOL * max(scale, 1e-300)
    offdiag = ~np.eye(m, dtype=bool)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = np.sqrt(np.sum(np.abs(a[offdiag]) ** 2))
        if off <= tol:
            break
        for p in range(m - 1):
            for r in range(p + 1, m):
                g = abs(a[p, r])
                if g <= 1e-300:
                    continue
                w = a[p, r] / g
                tau = (a[r, r].real - a[p, p].real) / (2.0 * g)
                # hypot avoids overflow of tau*tau for nearly-diagonal pairs
                if tau >= 0.0:
                    t = 1.0 / (tau + np.hypot(1.0, tau))
                else:
                    t = -1.0 / (-tau + np.hypot(1.0, tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- V^H A V with the plane rotation V = [[w c, w s], [-s, c]]
                col_p = a[:, p].copy()
                col_q = a[:, r].copy()
                a[:, p] = w * c * col_p - s * col_q
                a[:, r] = w * s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[r, :].copy()
                a[p, :] = np.conj(w) * c * row_p - s * row_q
                a[r, :] = np.conj(w) * s * row_p + c * row_q
                a[p, r] = 0.0
                a[r, p] = 0.0
                a[p, p] = a[p, p].real
                a[r, r] = a[r, r].real
                col_p = q[:, p].copy()
                col_q = q[:, r].copy()
                q[:, p] = w * c * col_p - s * col_q
                q[:, r] = w * s * col_p + c * col_q

    values = np.diag(a).real.copy()
    order = np.argsort(values, kind="stable")
    return values[order], q[:, order]


def lista_forward_batch(weights, thresholds, phi, measurements):
    """Run all layers of the tied shrinkage network on a batch.

    Parameters
    ----------
    weights : (I, D, L) float ndarray
    thresholds : (I,) float ndarray
    phi : (D, L) float ndarray
    measurements : (B, D) float ndarray

    Returns
    -------
    outputs : (I+1, B, L) layer outputs, outputs[0] is the zero start
    preacts : (I, B, L) pre-shrinkage values
    residuals : (I, B, D) measurement residuals entering each layer
    """
    depth = weights.shape[0]
    batch, dim = measurements.shape
    width = phi.shape[1]
    outputs = np.zeros((depth + 1, batch, width))
    preacts = np.empty((depth, batch, width))
    residuals = np.empty((depth, batch, dim))
    v = outputs[0]
    for i in range(depth):
        r = measurements - v @ phi.T
        u = v + r @ weights[i]
        v = _soft(u, thresholds[i])
        residuals[i] = r
        preacts[i] = u
        outputs[i + 1] = v
    return outputs, preacts, residuals


def lista_backward_batch(weights, thresholds, phi, outputs, preacts, residuals, targets):
    """Reverse-mode gradients of the batch-mean squared error.

    Loss is mean_j ||outputs[-1, j] - targets[j]||_2^2. Returns
    (grad_weights (I, D, L), grad_thresholds (I,)). The shrinkage
    subgradient at |u| == eta is taken as 0 (strict mask).
    """
    depth = weights.shape[0]
    batch = targets.shape[0]
    grad_w = np.empty_like(weights)
    grad_eta = np.empty(depth)
    g = (2.0 / batch) * (outputs[depth] - targets)
    for i in range(depth - 1, -1, -1):
        u = preacts[i]
        active = np.abs(u) > thresholds[i]
        d = np.where(active, g, 0.0)
        grad_eta[i] = -np.sum(np.sign(u) * d)
        grad_w[i] = residuals[i].T @ d
        g = d - (d @ weights[i].T) @ phi
    return grad_w, grad_eta


def ista_run(phi, measurement, penalty, step, iterations, record=False):
    """Proximal-gradient iterations for the l1-penalized least squares.

    Iterates nu <- soft(nu + step * phi^T (measurement - phi nu), step*penalty)
    from nu = 0. Returns the final iterate, or (final, history) with
    history shaped (iterations+1, L) when ``record`` is true.
    """
    width = phi.shape[1]
    nu = np.zeros(width)
    thresh = step * penalty
    history = np.zeros((iterations + 1, width)) if record else None
    for t in range(iterations):
        r = measurement - phi @ nu
        nu = _soft(nu + step * (phi.T @ r), thresh)
        if record:
            history[t + 1] = nu
    if record:
        return nu, history
    return nu
