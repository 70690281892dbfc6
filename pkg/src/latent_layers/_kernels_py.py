"""Pure-numpy fallback for the compiled kernels.

Same cyclic-Jacobi contract, but rotations are applied a round at a time:
a round-robin schedule pairs every index exactly once per round, so the
n/2 disjoint rotations of a round vectorize.
"""
from __future__ import annotations

import numpy as np

from .errors import EigenFailure

_SCHEDULES: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}


def _schedule(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    if n in _SCHEDULES:
        return _SCHEDULES[n]
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    _SCHEDULES[n] = rounds
    return rounds


def _offdiag_norm(A: np.ndarray) -> float:
    # direct, not ||A||^2 - ||diag||^2, which cancels at ~sqrt(eps) ||A||
    off = A - np.diag(np.diag(A))
    return float(np.linalg.norm(off))


def jacobi_eigh(M, tol: float = 1e-13, max_sweeps: int = 60, V0=None):
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if V0 is None:
        A = M.copy()
        V = np.eye(n)
    else:
        V = np.array(V0, dtype=np.float64)
        A = V.T @ M @ V
        A = 0.5 * (A + A.T)
    scale = np.linalg.norm(M)
    target = tol * (scale if scale > 0 else 1.0)
    rounds = _schedule(n)
    for _ in range(max_sweeps + 1):
        if _offdiag_norm(A) <= target:
            return np.diag(A).copy(), V
        for P, Q in rounds:
            if P.size == 0:
                continue
            apq = A[P, Q]
            active = np.abs(apq) >= 1e-300
            safe = np.where(active, apq, 1.0)
            theta = (A[Q, Q] - A[P, P]) / (2.0 * safe)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            Ap, Aq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = c * Ap - s * Aq
            A[:, Q] = s * Ap + c * Aq
            Ap, Aq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * Ap - s[:, None] * Aq
            A[Q, :] = s[:, None] * Ap + c[:, None] * Aq
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            Vp, Vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = c * Vp - s * Vq
            V[:, Q] = s * Vp + c * Vq
    raise EigenFailure(f"Jacobi did not converge in {max_sweeps} sweeps")


def project_psd(M, V0=None, tol: float = 1e-13):
    w, V = jacobi_eigh(M, tol=tol, V0=V0)
    P = (V * np.maximum(w, 0.0)) @ V.T
    return 0.5 * (P + P.T), V, w
