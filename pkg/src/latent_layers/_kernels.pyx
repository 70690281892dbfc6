# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled symmetric eigensolver (cyclic Jacobi) and PSD projection."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

from .errors import EigenFailure

cnp.import_array()


cdef double _offdiag_norm(double[:, ::1] A, Py_ssize_t n) nogil:
    cdef Py_ssize_t p, q
    cdef double s = 0.0
    for p in range(n):
        for q in range(p + 1, n):
            s += A[p, q] * A[p, q]
    return sqrt(2.0 * s)


cdef int _sweeps(double[:, ::1] A, double[:, ::1] V, Py_ssize_t n, double target, int max_sweeps) nogil:
    cdef Py_ssize_t p, q, r
    cdef double apq, theta, t, c, s, tau, g, h
    cdef int sweep
    for sweep in range(max_sweeps):
        if _offdiag_norm(A, n) <= target:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if fabs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                A[p, p] -= t * apq
                A[q, q] += t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                for r in range(n):
                    if r != p and r != q:
                        g = A[r, p]
                        h = A[r, q]
                        A[r, p] = g - s * (h + g * tau)
                        A[r, q] = h + s * (g - h * tau)
                        A[p, r] = A[r, p]
                        A[q, r] = A[r, q]
                for r in range(n):
                    g = V[r, p]
                    h = V[r, q]
                    V[r, p] = g - s * (h + g * tau)
                    V[r, q] = h + s * (g - h * tau)
    if _offdiag_norm(A, n) <= target:
        return max_sweeps
    return -1


def jacobi_eigh(M, double tol=1e-13, int max_sweeps=60, V0=None):
    """Eigen-decomposition ``M = V diag(w) V^T`` of a symmetric matrix.

    ``V0`` (orthogonal) warm-starts the rotation from a nearby basis.
    """
    cdef cnp.ndarray[double, ndim=2] A
    cdef cnp.ndarray[double, ndim=2] V
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if V0 is None:
        A = np.ascontiguousarray(M, dtype=np.float64).copy()
        V = np.eye(n)
    else:
        V = np.ascontiguousarray(V0, dtype=np.float64).copy()
        A = np.ascontiguousarray(V.T @ M @ V)
        A = 0.5 * (A + A.T)
    scale = np.linalg.norm(M)
    target = tol * (scale if scale > 0 else 1.0)
    used = _sweeps(A, V, n, target, max_sweeps)
    if used < 0:
        raise EigenFailure(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    return w, V


def project_psd(M, V0=None, double tol=1e-13):
    """Nearest PSD matrix in Frobenius norm; returns ``(P, V, w)``."""
    w, V = jacobi_eigh(M, tol=tol, V0=V0)
    P = (V * np.maximum(w, 0.0)) @ V.T
    return 0.5 * (P + P.T), V, w
