# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: Jacobi Hermitian eigensolver, unrolled
shrinkage-network forward/backward, and the ISTA iteration loop.

Same contracts as ``_kernels_py``; matrix products go through BLAS, the
elementwise shrinkage/mask work is fused in C loops.
"""

import numpy as np

from libc.math cimport fabs, hypot, sqrt
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm, dgemv

DEF JACOBI_MAX_SWEEPS = 60
DEF JACOBI_REL_TOL = 1e-14


cdef inline void _gemm_rm(bint trans_a, bint trans_b, int m, int n, int k,
                          double alpha, const double* a, int a_cols,
                          const double* b, int b_cols,
                          double beta, double* c) noexcept nogil:
    """C(m,n) = alpha * op(A) op(B) + beta * C on row-major buffers.

    a_cols/b_cols are the physical column counts (row strides) of the
    buffers. Implemented by computing C^T column-major via Fortran dgemm.
    """
    cdef char ta = b'T' if trans_a else b'N'
    cdef char tb = b'T' if trans_b else b'N'
    cdef int lda = a_cols
    cdef int ldb = b_cols
    cdef int ldc = n
    # column-major view of a row-major X is X^T, so swap the operand order
    dgemm(&tb, &ta, &n, &m, &k, &alpha,
          <double*> b, &ldb, <double*> a, &lda, &beta, c, &ldc)


def jacobi_eigh(const double complex[:, ::1] matrix):
    """Cyclic-Jacobi eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues ascending, eigenvector columns).
    """
    cdef Py_ssize_t m = matrix.shape[0]
    a_arr = np.array(matrix, dtype=np.complex128)
    q_arr = np.eye(m, dtype=np.complex128)
    cdef double complex[:, ::1] a = a_arr
    cdef double complex[:, ::1] q = q_arr
    cdef Py_ssize_t p, r, i, sweep
    cdef double g, tau, t, c, s, off, scale, tol
    cdef double complex w, wc, ws, cwc, cws, xp, xq
    if m == 1:
        return np.array([a_arr[0, 0].real]), q_arr

    scale = 0.0
    for p in range(m):
        for r in range(m):
            scale += (a[p, r].real * a[p, r].real + a[p, r].imag * a[p, r].imag)
    scale = sqrt(scale)
    tol = JACOBI_REL_TOL * (scale if scale > 1e-300 else 1e-300)

    with nogil:
        for sweep in range(JACOBI_MAX_SWEEPS):
            off = 0.0
            for p in range(m):
                for r in range(m):
                    if p != r:
                        off += (a[p, r].real * a[p, r].real
                                + a[p, r].imag * a[p, r].imag)
            if sqrt(off) <= tol:
                break
            for p in range(m - 1):
                for r in range(p + 1, m):
                    g = sqrt(a[p, r].real * a[p, r].real
                             + a[p, r].imag * a[p, r].imag)
                    if g <= 1e-300:
                        continue
                    w = a[p, r] / g
                    tau = (a[r, r].real - a[p, p].real) / (2.0 * g)
                    if tau >= 0.0:
                        t = 1.0 / (tau + hypot(1.0, tau))
                    else:
                        t = -1.0 / (-tau + hypot(1.0, tau))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    wc = w * c
                    ws = w * s
                    cwc = wc.conjugate()
                    cws = ws.conjugate()
                    for i in range(m):
                        xp = a[i, p]
                        xq = a[i, r]
                        a[i, p] = wc * xp - s * xq
                        a[i, r] = ws * xp + c * xq
                    for i in range(m):
                        xp = a[p, i]
                        xq = a[r, i]
                        a[p, i] = cwc * xp - s * xq
                        a[r, i] = cws * xp + c * xq
                    a[p, r] = 0.0
                    a[r, p] = 0.0
                    a[p, p] = a[p, p].real
                    a[r, r] = a[r, r].real
                    for i in range(m):
                        xp = q[i, p]
                        xq = q[i, r]
                        q[i, p] = wc * xp - s * xq
                        q[i, r] = ws * xp + c * xq

    values = np.diag(a_arr).real.copy()
    order = np.argsort(values, kind="stable")
    return values[order], q_arr[:, order]


def lista_forward_batch(const double[:, :, ::1] weights,
                        const double[::1] thresholds,
                        const double[:, ::1] phi,
                        const double[:, ::1] measurements):
    """All layers of the tied shrinkage network on a batch.

    Returns (outputs (I+1,B,L), preacts (I,B,L), residuals (I,B,D)).
    """
    cdef int depth = weights.shape[0]
    cdef int dim = weights.shape[1]
    cdef int width = weights.shape[2]
    cdef int batch = measurements.shape[0]
    outputs_arr = np.zeros((depth + 1, batch, width))
    preacts_arr = np.empty((depth, batch, width))
    residuals_arr = np.empty((depth, batch, dim))
    cdef double[:, :, ::1] outputs = outputs_arr
    cdef double[:, :, ::1] preacts = preacts_arr
    cdef double[:, :, ::1] residuals = residuals_arr
    cdef int i, j, l
    cdef double eta, u
    cdef const double* phi_p = &phi[0, 0]
    cdef const double* meas_p = &measurements[0, 0]
    with nogil:
        for i in range(depth):
            # residual R = C - V @ phi^T
            memcpy(&residuals[i, 0, 0], meas_p, sizeof(double) * batch * dim)
            _gemm_rm(0, 1, batch, dim, width, -1.0,
                     &outputs[i, 0, 0], width, phi_p, width,
                     1.0, &residuals[i, 0, 0])
            # preactivation U = V + R @ W_i
            memcpy(&preacts[i, 0, 0], &outputs[i, 0, 0],
                   sizeof(double) * batch * width)
            _gemm_rm(0, 0, batch, width, dim, 1.0,
                     &residuals[i, 0, 0], dim, &weights[i, 0, 0], width,
                     1.0, &preacts[i, 0, 0])
            eta = thresholds[i]
            for j in range(batch):
                for l in range(width):
                    u = preacts[i, j, l]
                    if u > eta:
                        outputs[i + 1, j, l] = u - eta
                    elif u < -eta:
                        outputs[i + 1, j, l] = u + eta
                    else:
                        outputs[i + 1, j, l] = 0.0
    return outputs_arr, preacts_arr, residuals_arr


def lista_backward_batch(const double[:, :, ::1] weights,
                         const double[::1] thresholds,
                         const double[:, ::1] phi,
                         const double[:, :, ::1] outputs,
                         const double[:, :, ::1] preacts,
                         const double[:, :, ::1] residuals,
                         const double[:, ::1] targets):
    """Reverse-mode gradients of the batch-mean squared error.

    Returns (grad_weights (I,D,L), grad_thresholds (I,)); the shrinkage
    subgradient at |u| == eta is 0.
    """
    cdef int depth = weights.shape[0]
    cdef int dim = weights.shape[1]
    cdef int width = weights.shape[2]
    cdef int batch = targets.shape[0]
    grad_w_arr = np.empty((depth, dim, width))
    grad_eta_arr = np.empty(depth)
    g_arr = np.empty((batch, width))
    d_arr = np.empty((batch, width))
    tmp_arr = np.empty((batch, dim))
    cdef double[:, :, ::1] grad_w = grad_w_arr
    cdef double[::1] grad_eta = grad_eta_arr
    cdef double[:, ::1] g = g_arr
    cdef double[:, ::1] d = d_arr
    cdef double[:, ::1] tmp = tmp_arr
    cdef int i, j, l
    cdef double eta, u, acc, coef
    coef = 2.0 / batch
    with nogil:
        for j in range(batch):
            for l in range(width):
                g[j, l] = coef * (outputs[depth, j, l] - targets[j, l])
        for i in range(depth - 1, -1, -1):
            eta = thresholds[i]
            acc = 0.0
            for j in range(batch):
                for l in range(width):
                    u = preacts[i, j, l]
                    if fabs(u) > eta:
                        d[j, l] = g[j, l]
                        if u > 0:
                            acc -= g[j, l]
                        else:
                            acc += g[j, l]
                    else:
                        d[j, l] = 0.0
            grad_eta[i] = acc
            # grad_W_i = residuals_i^T @ D
            _gemm_rm(1, 0, dim, width, batch, 1.0,
                     &residuals[i, 0, 0], dim, &d[0, 0], width,
                     0.0, &grad_w[i, 0, 0])
            # G = D - (D @ W_i^T) @ phi
            _gemm_rm(0, 1, batch, dim, width, 1.0,
                     &d[0, 0], width, &weights[i, 0, 0], width,
                     0.0, &tmp[0, 0])
            memcpy(&g[0, 0], &d[0, 0], sizeof(double) * batch * width)
            _gemm_rm(0, 0, batch, width, dim, -1.0,
                     &tmp[0, 0], dim, &phi[0, 0], width,
                     1.0, &g[0, 0])
    return grad_w_arr, grad_eta_arr


def ista_run(const double[:, ::1] phi, const double[::1] measurement,
             double penalty, double step, int iterations, bint record=False):
    """Proximal-gradient iterations from zero; optionally records iterates."""
    cdef int dim = phi.shape[0]
    cdef int width = phi.shape[1]
    nu_arr = np.zeros(width)
    r_arr = np.empty(dim)
    grad_arr = np.empty(width)
    history_arr = np.zeros((iterations + 1, width)) if record else None
    cdef double[::1] nu = nu_arr
    cdef double[::1] r = r_arr
    cdef double[::1] grad = grad_arr
    cdef double[:, ::1] history
    cdef bint rec = record
    if record:
        history = history_arr
    cdef int t, l
    cdef double thresh = step * penalty
    cdef double u
    cdef char tn = b'N'
    cdef char tt = b'T'
    cdef int inc = 1
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef double negone = -1.0
    cdef const double* phi_p = &phi[0, 0]
    with nogil:
        for t in range(iterations):
            # r = measurement - phi @ nu   (phi row-major: cm view is phi^T)
            memcpy(&r[0], &measurement[0], sizeof(double) * dim)
            dgemv(&tt, &width, &dim, &negone, <double*> phi_p, &width,
                  &nu[0], &inc, &one, &r[0], &inc)
            # grad = phi^T @ r
            dgemv(&tn, &width, &dim, &one, <double*> phi_p, &width,
                  &r[0], &inc, &zero, &grad[0], &inc)
            for l in range(width):
                u = nu[l] + step * grad[l]
                if u > thresh:
                    nu[l] = u - thresh
                elif u < -thresh:
                    nu[l] = u + thresh
                else:
                    nu[l] = 0.0
            if rec:
                memcpy(&history[t + 1, 0], &nu[0], sizeof(double) * width)
    if record:
        return nu_arr, history_arr
    return nu_arr
