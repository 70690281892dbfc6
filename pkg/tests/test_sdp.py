import math

import cvxpy as cp
import numpy as np
import pytest

from latent_layers.dist import LinearFunctional
from latent_layers.errors import SolverDidNotConverge
from latent_layers.npa import build_algebra, build_moment_matrix
from latent_layers.sdp import SdpProblem, project_psd, solve

RNG = np.random.default_rng(11)


# ---------------------------------------------------------------------------
# 2x2 problems with closed-form optima


def test_off_diagonal_of_correlation_matrix():
    # [[1, y], [y, 1]] >= 0  =>  y <= 1
    p = SdpProblem([[-1, 0], [0, -1]], [1.0])
    assert abs(solve(p).value - 1) < 1e-6
    p = SdpProblem([[-1, 0], [0, -1]], [-1.0])
    assert abs(solve(p).value - 1) < 1e-6


def test_geometric_mean_bound():
    # [[1, y], [y, 2]] >= 0  =>  y <= sqrt 2
    p = SdpProblem.from_matrices(np.diag([1.0, 2.0]), [np.array([[0.0, 1], [1, 0]])], [1.0])
    assert abs(solve(p).value - math.sqrt(2)) < 1e-6


def test_hyperbolic_constraint():
    # [[y1, 1], [1, y2]] >= 0  =>  y1 y2 >= 1; minimize y1 + y2 = 2
    A0 = np.array([[0.0, 1], [1, 0]])
    p = SdpProblem.from_matrices(A0, [np.diag([1.0, 0]), np.diag([0.0, 1])], [-1.0, -1.0])
    sol = solve(p)
    assert abs(sol.value + 2) < 1e-6
    assert np.allclose(sol.y, [1, 1], atol=1e-5)


def test_diagonal_box():
    # diag(1 - y, 1 + y) >= 0  =>  y <= 1
    p = SdpProblem.from_matrices(np.eye(2), [np.diag([-1.0, 1])], [1.0])
    assert abs(solve(p).value - 1) < 1e-6


def test_overlapping_supports_use_the_dense_path():
    # y1 touches the whole matrix, y2 only the diagonal: Gram matrix is not diagonal
    A0 = np.array([[2.0, 0], [0, 1]])
    A1 = np.array([[0.0, 1], [1, 1]])
    A2 = np.eye(2)
    p = SdpProblem.from_matrices(A0, [A1, A2], [1.0, -3.0])
    y = cp.Variable(2)
    ref = cp.Problem(cp.Maximize(y[0] - 3 * y[1]), [A0 + y[0] * A1 + y[1] * A2 >> 0]).solve(solver="CLARABEL")
    assert abs(solve(p).value - ref) < 1e-5


# ---------------------------------------------------------------------------
# random moment-matrix problems against an interior-point oracle


def _cvxpy_value(p: SdpProblem) -> float:
    y = cp.Variable(p.m)
    S = p.S.toarray()
    M = p.A0 + sum(y[k] * S[:, k].reshape(p.n, p.n) for k in range(p.m))
    prob = cp.Problem(cp.Maximize(p.c @ y + p.constant), [(M + M.T) / 2 >> 0])
    return prob.solve(solver="CLARABEL")


@pytest.mark.parametrize("sid", ["bell", "ext_bell_ac"])
@pytest.mark.parametrize("seed", range(3))
def test_random_objectives_match_cvxpy(sid, seed):
    rng = np.random.default_rng(seed)
    mm = build_moment_matrix(build_algebra(sid), 1)
    p = SdpProblem(mm.entries - 1, rng.normal(size=len(mm.variables) - 1))
    sol = solve(p)
    assert abs(sol.value - _cvxpy_value(p)) < 1e-5
    assert sol.min_eigenvalue > -1e-6
    assert abs(sol.dual_bound - sol.value) < 1e-4


def test_dict_round_trip():
    mm = build_moment_matrix(build_algebra("bell"), 1)
    p = SdpProblem(mm.entries - 1, RNG.normal(size=len(mm.variables) - 1), 0.5)
    q = SdpProblem.from_dict(p.to_dict())
    y = RNG.normal(size=p.m)
    assert np.allclose(p.matrix(y), q.matrix(y))
    assert math.isclose(p.objective(y), q.objective(y))


def test_iteration_budget_reports_last_iterate():
    mm = build_moment_matrix(build_algebra("bell"), 1)
    p = SdpProblem(mm.entries - 1, np.ones(len(mm.variables) - 1))
    with pytest.raises(SolverDidNotConverge) as exc:
        solve(p, max_iter=3)
    sol = exc.value.solution
    assert sol.status == "max-iter" and sol.iterations == 3


def test_index_map_validation():
    with pytest.raises(ValueError):
        SdpProblem([[-1, 0], [1, -1]], [1.0, 1.0])
    with pytest.raises(ValueError):
        SdpProblem.from_matrices(np.eye(2), [np.array([[0.0, 1], [0, 0]])], [1.0])


def test_project_psd():
    M = RNG.normal(size=(6, 6))
    M = M + M.T
    P = project_psd(M)
    assert np.linalg.eigvalsh(P).min() > -1e-10
    assert np.allclose(project_psd(P), P, atol=1e-10)
    # Frobenius-nearest: the residual is negative semidefinite and orthogonal to P
    R = M - P
    assert np.linalg.eigvalsh(R).max() < 1e-10
    assert abs(np.sum(R * P)) < 1e-8
    with pytest.raises(ValueError):
        project_psd(RNG.normal(size=(3, 3)) + np.triu(np.ones((3, 3)), 1))
