import itertools
import math

import numpy as np
import pytest

from latent_layers.dist import EXT_BELL_SHAPE, Box, LinearFunctional, evaluate, named_functional
from latent_layers.errors import CoordinateNotExpressible, UnsupportedScenario, WordTooLong
from latent_layers.npa import (
    ZERO_WORD,
    assemble_objective,
    bound,
    build_algebra,
    build_moment_matrix,
    canonicalize,
    to_sdp,
)

RNG = np.random.default_rng(7)
SCENARIOS = ["bell", "ext_bell_exo", "ext_bell_ac", "ext_bell_bc", "ext_bell_2il"]


def _words(n_symbols, max_len):
    for length in range(max_len + 1):
        yield from itertools.product(range(n_symbols), repeat=length)


# ---------------------------------------------------------------------------
# a concrete real representation obeying exactly the encoded relations


def _proj(dim):
    v = RNG.normal(size=dim)
    v /= np.linalg.norm(v)
    return np.outer(v, v)


def _representation(algebra):
    """Real projectors on C^2 per party; C's projectors are controlled by its linked partners."""
    I2 = np.eye(2)
    parties = [p.name for p in algebra.shape.parties]
    linked = {next(iter(pair - {"C"})) for pair in algebra.linked}
    local = {s: _proj(2) for s in algebra.symbols}
    ops = {}
    for s in algebra.symbols:
        if s.party != "C":
            factors = [local[s] if p == s.party else I2 for p in parties]
        else:
            factors = None
        if factors is not None:
            ops[s] = _kron(factors)
    for s in algebra.symbols:
        if s.party != "C":
            continue
        settings = dict(s.settings)
        partners = sorted(linked)
        total = np.zeros((2 ** len(parties),) * 2)
        # sum over spectral projectors of the controlling partner observables
        for bits in itertools.product((0, 1), repeat=len(partners)):
            factors = []
            for p in parties:
                if p in partners:
                    sym = algebra.symbol(p, {"X": settings.get("X", 0), "Y": settings.get("Y", 0)})
                    P = local[sym]
                    factors.append(P if bits[partners.index(p)] == 0 else I2 - P)
                elif p == "C":
                    factors.append(_proj(2))
                else:
                    factors.append(I2)
            total = total + _kron(factors)
        ops[s] = total
    return ops


def _kron(factors):
    out = np.eye(1)
    for f in factors:
        out = np.kron(out, f)
    return out


def _product(ops, algebra, word):
    dim = next(iter(ops.values())).shape[0]
    out = np.eye(dim)
    for i in word:
        out = out @ ops[algebra.symbols[i]]
    return out


@pytest.mark.parametrize("sid", SCENARIOS)
def test_canonical_form_is_sound_in_a_representation(sid):
    algebra = build_algebra(sid)
    ops = _representation(algebra)
    # the representation itself must satisfy the encoded commutation table
    for a, b in itertools.product(algebra.symbols, repeat=2):
        A, B = ops[a], ops[b]
        assert np.allclose(A @ A, A)
        if algebra.commutes(a, b):
            assert np.allclose(A @ B, B @ A)
    n = len(algebra.symbols)
    for w in _words(n, 4):
        c = algebra.canonical(w)
        if c is ZERO_WORD:
            assert np.allclose(_product(ops, algebra, w), 0)
        else:
            assert np.allclose(_product(ops, algebra, w), _product(ops, algebra, c))


@pytest.mark.parametrize("sid", SCENARIOS)
def test_canonicalization_is_a_congruence(sid):
    algebra = build_algebra(sid)
    n = len(algebra.symbols)
    words = list(_words(n, 4))
    for w in words:
        c = algebra.canonical(w)
        assert algebra.canonical(c) == c
        assert len(c) <= len(w)
        for s in range(n):
            assert algebra.canonical(c + (s,)) == algebra.canonical(w + (s,))
            assert algebra.canonical((s,) + c) == algebra.canonical((s,) + w)


def test_linked_parties_commute_only_on_shared_settings():
    a = build_algebra("ext_bell_ac")
    A0 = a.symbol("A", {"X": 0})
    assert a.commutes(A0, a.symbol("C", {"X": 0, "Y": 1}))
    assert not a.commutes(A0, a.symbol("C", {"X": 1, "Y": 0}))
    assert a.commutes(a.symbol("B", {"Y": 0}), a.symbol("C", {"X": 1, "Y": 1}))
    b = build_algebra("ext_bell_exo")
    assert all(b.commutes(x, y) for x in b.symbols for y in b.symbols if x.party != y.party)


def test_canonicalize_public_api():
    a = build_algebra("bell")
    A0, A1, B0, _ = a.symbols
    assert canonicalize((B0, A0), a) == (A0, B0)
    assert canonicalize((A0, A0, B0, A0), a) == (A0, B0)
    assert canonicalize((A0, A1), a) == (A0, A1)
    with pytest.raises(WordTooLong):
        canonicalize((A0, A1) * 5, a)


def test_unsupported_scenario():
    with pytest.raises(UnsupportedScenario):
        build_algebra("tetra")


# ---------------------------------------------------------------------------
# moment matrices


@pytest.mark.parametrize("sid,level", [("bell", 1), ("bell", 2), ("ext_bell_ac", 1), ("ext_bell_ac", 2), ("ext_bell_2il", 2)])
def test_moment_matrix_of_a_real_model_is_consistent(sid, level):
    algebra = build_algebra(sid)
    ops = _representation(algebra)
    dim = next(iter(ops.values())).shape[0]
    psi = RNG.normal(size=dim)
    psi /= np.linalg.norm(psi)
    mm = build_moment_matrix(algebra, level)
    G = np.array([[psi @ _product(ops, algebra, u[::-1]) @ _product(ops, algebra, v) @ psi for v in mm.index]
                  for u in mm.index])
    assert np.linalg.eigvalsh(G).min() > -1e-10
    seen = {}
    for (i, j), vid in np.ndenumerate(mm.entries):
        if vid == -1:
            assert abs(G[i, j]) < 1e-10
        elif vid in seen:
            assert abs(G[i, j] - seen[vid]) < 1e-10
        else:
            seen[vid] = G[i, j]
    assert abs(seen[0] - 1) < 1e-12


def test_objective_matches_the_model_box():
    algebra = build_algebra("ext_bell_ac")
    ops = _representation(algebra)
    dim = next(iter(ops.values())).shape[0]
    psi = RNG.normal(size=dim)
    psi /= np.linalg.norm(psi)
    mm = build_moment_matrix(algebra, 2)
    y = np.array([psi @ _product(ops, algebra, w) @ psi for w in mm.variables])
    # box of the same model
    arr = np.zeros(EXT_BELL_SHAPE.dims)
    I = np.eye(dim)
    for a, b, c, x, yy in itertools.product((0, 1), repeat=5):
        ctx = {"X": x, "Y": yy}
        P = [ops[algebra.symbol(p, ctx)] for p in "ABC"]
        P = [Pi if o == 0 else I - Pi for Pi, o in zip(P, (a, b, c))]
        arr[a, b, c, x, yy] = psi @ P[0] @ P[1] @ P[2] @ psi
    box = Box(EXT_BELL_SHAPE, arr)
    f = named_functional("monogamy_bc00")
    obj = assemble_objective(f, mm)
    assert abs(obj.value(y) - float(evaluate(f, box))) < 1e-10


def test_level_one_cannot_express_three_body_terms():
    mm = build_moment_matrix(build_algebra("ext_bell_exo"), 1)
    # <B C> is a two-body moment, present at level 1
    assemble_objective(named_functional("monogamy_bc00"), mm)
    joint = LinearFunctional.from_dict_terms(EXT_BELL_SHAPE, {((0, 0, 0), (0, 0)): 1})
    with pytest.raises(CoordinateNotExpressible):
        assemble_objective(joint, mm)
    assemble_objective(joint, build_moment_matrix(build_algebra("ext_bell_exo"), 2))
    with pytest.raises(ValueError):
        build_moment_matrix(build_algebra("bell"), 4)


def test_moment_matrix_dump():
    mm = build_moment_matrix(build_algebra("bell"), 1)
    d = mm.to_dict()
    assert d["index_words"][0] == "1"
    assert len(d["entry_var_ids"]) == mm.size == 5


# ---------------------------------------------------------------------------
# bounds


def test_bell_chsh_levels():
    for level in (1, 2):
        assert abs(bound("bell", named_functional("chsh"), level).value - 2 * math.sqrt(2)) < 1e-6


def test_ac_bound_level_two():
    res = bound("ext_bell_ac", named_functional("monogamy_bc00"), 2)
    assert abs(res.value - 8 / math.sqrt(3)) < 1e-4


def test_exogenous_level_one_allows_tsirelson_plus_copy():
    # with no linked parties the relaxation reaches 2 sqrt2 + 2
    res = bound("ext_bell_exo", named_functional("monogamy_bc00"), 1)
    assert res.value > 4.8


def test_sdp_encoding_shape():
    mm = build_moment_matrix(build_algebra("bell"), 1)
    p = to_sdp(mm, assemble_objective(named_functional("chsh"), mm))
    assert p.n == mm.size and p.m == len(mm.variables) - 1
