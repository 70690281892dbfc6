import numpy as np
import pytest

from latent_layers import _kernels_py, kernels
from latent_layers.errors import EigenFailure

compiled = pytest.importorskip("latent_layers._kernels")
BACKENDS = {"cython": compiled, "python": _kernels_py}
RNG = np.random.default_rng(3)


def _sym(n):
    M = RNG.normal(size=(n, n))
    return (M + M.T) / 2


@pytest.mark.parametrize("name", list(BACKENDS))
@pytest.mark.parametrize("n", [1, 2, 3, 7, 16, 33])
def test_eigendecomposition_matches_lapack(name, n):
    M = _sym(n)
    w, V = BACKENDS[name].jacobi_eigh(M)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(M), atol=1e-10)
    assert np.allclose(V.T @ V, np.eye(n), atol=1e-10)
    assert np.allclose(V @ np.diag(w) @ V.T, M, atol=1e-10)


@pytest.mark.parametrize("name", list(BACKENDS))
def test_converges_on_many_sizes_with_spread_diagonal(name):
    # large diagonal next to tiny off-diagonal mass: the stopping test must
    # not lose the off-diagonal norm to cancellation
    rng = np.random.default_rng(0)
    for n in range(2, 48):
        M = rng.normal(size=(n, n))
        M = M + M.T + np.diag(rng.uniform(-50, 50, n))
        w, V = BACKENDS[name].jacobi_eigh(M)
        assert np.allclose(np.sort(w), np.linalg.eigvalsh(M), atol=1e-9)
        assert np.allclose(V @ np.diag(w) @ V.T, M, atol=1e-9)


@pytest.mark.parametrize("name", list(BACKENDS))
def test_degenerate_spectrum(name):
    Q, _ = np.linalg.qr(RNG.normal(size=(6, 6)))
    M = Q @ np.diag([1, 1, 1, -2, -2, 0]) @ Q.T
    w, V = BACKENDS[name].jacobi_eigh(M)
    assert np.allclose(np.sort(w), [-2, -2, 0, 1, 1, 1], atol=1e-10)
    assert np.allclose(V @ np.diag(w) @ V.T, M, atol=1e-10)


@pytest.mark.parametrize("name", list(BACKENDS))
def test_warm_start(name):
    M = _sym(12)
    _, V = BACKENDS[name].jacobi_eigh(M)
    Mp = M + 1e-6 * _sym(12)
    w2, V2 = BACKENDS[name].jacobi_eigh(Mp, V0=V)
    assert np.allclose(np.sort(w2), np.linalg.eigvalsh(Mp), atol=1e-10)
    assert np.allclose(V2.T @ V2, np.eye(12), atol=1e-10)


@pytest.mark.parametrize("n", [2, 5, 20])
def test_backends_agree_on_projection(n):
    M = _sym(n)
    Pc = compiled.project_psd(M)[0]
    Pp = _kernels_py.project_psd(M)[0]
    w, V = np.linalg.eigh(M)
    ref = (V * np.maximum(w, 0)) @ V.T
    assert np.allclose(Pc, ref, atol=1e-10)
    assert np.allclose(Pp, ref, atol=1e-10)


@pytest.mark.parametrize("name", list(BACKENDS))
def test_sweep_budget(name):
    with pytest.raises(EigenFailure):
        BACKENDS[name].jacobi_eigh(_sym(10), max_sweeps=1)


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
