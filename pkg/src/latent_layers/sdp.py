"""Dense SDP solver: maximize ``c.y`` subject to ``A0 + sum_k y_k A_k >= 0``.

The method is ADMM on the splitting ``M(y) = Z, Z >= 0``. The ``y``-step
is a least-squares solve against the span of the ``A_k`` (diagonal for
moment matrices, whose ``A_k`` have disjoint supports), the ``Z``-step is a
PSD projection through the Jacobi kernel, warm-started with the previous
eigenbasis. The penalty is rebalanced from the primal/dual residual ratio.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from . import kernels
from .errors import SolverDidNotConverge

__all__ = ["SdpProblem", "SdpSolution", "solve", "project_psd", "DEFAULT_TOL", "DEFAULT_MAX_ITER"]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200000


def project_psd(M) -> np.ndarray:
    """Nearest PSD matrix (Frobenius), negative eigenvalues clipped."""
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max(initial=0.0))):
        raise ValueError("project_psd needs a symmetric matrix")
    return kernels.project_psd(0.5 * (M + M.T))[0]


class SdpProblem:
    """Affinely parameterized symmetric matrix with a linear objective.

    Built either from an index map (cell -> variable id, ``-1`` pinned to
    1, ``-2`` pinned to 0) or from explicit matrices.
    """

    def __init__(self, index_map, c, constant: float = 0.0):
        idx = np.asarray(index_map, dtype=np.int64)
        if idx.ndim != 2 or idx.shape[0] != idx.shape[1] or not np.array_equal(idx, idx.T):
            raise ValueError("index map must be a symmetric square array")
        self.n = idx.shape[0]
        self.c = np.asarray(c, dtype=float)
        self.m = self.c.size
        self.constant = float(constant)
        flat = idx.ravel()
        self.A0 = (idx == -1).astype(float)
        cols = np.nonzero(flat >= 0)[0]
        self.S = sp.csc_matrix(
            (np.ones(cols.size), (cols, flat[cols])), shape=(self.n * self.n, self.m)
        )
        self.index_map = idx

    @classmethod
    def from_matrices(cls, A0, As, c, constant: float = 0.0) -> "SdpProblem":
        A0 = np.asarray(A0, dtype=float)
        n = A0.shape[0]
        obj = cls.__new__(cls)
        obj.n = n
        obj.c = np.asarray(c, dtype=float)
        obj.m = obj.c.size
        obj.constant = float(constant)
        if len(As) != obj.m:
            raise ValueError("need one coefficient matrix per variable")
        for A in [A0, *As]:
            if not np.allclose(A, np.asarray(A).T):
                raise ValueError("coefficient matrices must be symmetric")
        obj.A0 = A0
        obj.S = sp.csc_matrix(np.column_stack([np.asarray(A, float).ravel() for A in As]) if As else np.zeros((n * n, 0)))
        obj.index_map = None
        return obj

    def matrix(self, y) -> np.ndarray:
        return self.A0 + (self.S @ np.asarray(y, dtype=float)).reshape(self.n, self.n)

    def objective(self, y) -> float:
        return float(self.c @ y) + self.constant

    def to_dict(self) -> dict:
        S = self.S.tocoo()
        return {
            "n": self.n,
            "m": self.m,
            "c": self.c.tolist(),
            "constant": self.constant,
            "A0": self.A0.tolist(),
            "A": [[int(r), int(k), float(v)] for r, k, v in zip(S.row, S.col, S.data)],
        }

    @classmethod
    def from_dict(cls, doc) -> "SdpProblem":
        n, m = doc["n"], doc["m"]
        S = sp.coo_matrix(
            ([v for _, _, v in doc["A"]], ([r for r, _, _ in doc["A"]], [k for _, k, _ in doc["A"]])),
            shape=(n * n, m),
        ).toarray()
        As = [S[:, k].reshape(n, n) for k in range(m)]
        return cls.from_matrices(np.array(doc["A0"]), As, doc["c"], doc.get("constant", 0.0))


@dataclass
class SdpSolution:
    value: float
    y: np.ndarray
    min_eigenvalue: float
    primal_residual: float
    dual_bound: float
    dual_residual: float
    iterations: int
    status: str
    best_feasible: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return abs(self.dual_bound - self.value)

    def residuals(self) -> dict:
        return {
            "min_eigenvalue": self.min_eigenvalue,
            "primal_residual": self.primal_residual,
            "dual_bound": self.dual_bound,
            "dual_residual": self.dual_residual,
            "gap": self.gap,
            "iterations": self.iterations,
        }

    def to_dict(self) -> dict:
        return {"value": self.value, "status": self.status, "y": self.y.tolist(), **self.residuals()}


def solve(p: SdpProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, rho: float = 1.0) -> SdpSolution:
    """ADMM; raises :class:`SolverDidNotConverge` carrying the last iterate."""
    n, m = p.n, p.m
    S, St = p.S, p.S.T.tocsr()
    a0 = p.A0.ravel()
    G = (St @ S).toarray() if m else np.zeros((0, 0))
    diag = np.diag(G).copy() if m else np.zeros(0)
    is_diag = m == 0 or np.count_nonzero(G - np.diag(diag)) == 0
    if is_diag:
        if np.any(diag == 0):
            raise ValueError("a variable appears in no matrix cell")
        ginv = 1.0 / diag
        lin = lambda r: ginv * r  # noqa: E731
    else:
        cf = cho_factor(G)
        lin = lambda r: cho_solve(cf, r)  # noqa: E731

    y = np.zeros(m)
    Z, V, _ = kernels.project_psd(p.A0)
    U = np.zeros((n, n))
    best = -math.inf
    best_trace = []
    pr = dr = math.inf
    it = 0
    scale = max(1.0, np.linalg.norm(p.c))
    for it in range(1, max_iter + 1):
        y = lin(p.c / rho + St @ ((Z - U).ravel() - a0))
        My = (a0 + S @ y).reshape(n, n)
        Zprev = Z
        Z, V, w = kernels.project_psd(My + U, V)
        R = My - Z
        U += R
        pr = float(np.linalg.norm(R))
        dr = float(rho * np.linalg.norm(St @ (Z - Zprev).ravel()))
        if pr < tol and dr < tol * scale:
            break
        if it % 25 == 0:
            # residual balancing; the scaled dual rescales with rho
            if pr > 10 * dr:
                rho *= 2.0
                U /= 2.0
            elif dr > 10 * pr:
                rho /= 2.0
                U *= 2.0
            val = p.objective(y)
            if pr < 10 * tol and val > best:
                best = val
                best_trace.append((it, val))
    w_final, _ = kernels.jacobi_eigh(p.matrix(y))
    lam_min = float(w_final.min()) if n else 0.0
    W, _, _ = kernels.project_psd(-rho * U)
    dual = float(np.sum(W * p.A0)) + p.constant
    dres = float(np.linalg.norm(St @ W.ravel() + p.c)) if m else 0.0
    sol = SdpSolution(
        value=p.objective(y),
        y=y,
        min_eigenvalue=min(lam_min, 0.0),
        primal_residual=pr,
        dual_bound=dual,
        dual_residual=dres,
        iterations=it,
        status="optimal" if (pr < tol and dr < tol * scale) else "max-iter",
        best_feasible=best_trace,
    )
    if sol.status != "optimal":
        raise SolverDidNotConverge(
            f"ADMM stopped after {it} iterations (primal residual {pr:.2e}, dual residual {dr:.2e})",
            solution=sol,
        )
    return sol
