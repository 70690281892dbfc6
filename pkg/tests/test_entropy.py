import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from latent_layers.dist import EXT_BELL_SHAPE, compose_2layer, deterministic_boxes, mixture, named_box
from latent_layers.errors import CoordinateUnavailable, EliminationBlowup
from latent_layers.entropy import (
    EntropicInequality,
    appendix_parts,
    bc_functional,
    build_structure,
    elemental_inequalities,
    entropic_monogamy,
    evaluate_entropic,
    fm_eliminate,
    implication_certificate,
    implied_by,
    verify_combination,
)
from latent_layers.scenarios import get_scenario, interrupted_ext_bell

RNG = np.random.default_rng(5)


@pytest.fixture(scope="module")
def structure():
    g, merge = interrupted_ext_bell("c")
    return build_structure(g), merge


@pytest.fixture(scope="module")
def projected(structure):
    s, merge = structure
    return fm_eliminate(elemental_inequalities(s), lambda c: not s.consistent(c, merge))


def _h(p):
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def _joint_entropies(s, joint):
    """Oracle entropy vector from an explicit joint law over all variables."""
    order = list(s.variables)
    out = np.zeros(len(s))
    for i, c in enumerate(s.coordinates):
        drop = tuple(k for k, v in enumerate(order) if v not in c)
        out[i] = _h(joint.sum(axis=drop).ravel())
    return out


# ---------------------------------------------------------------------------
# structure


def test_structure_counts(structure):
    s, merge = structure
    assert len(s.variables) == 8
    assert len(s.maximal_sets) == 16
    assert all(len(m) == 3 for m in s.maximal_sets)
    # singletons 8, pairs 4+8+8, triples 16
    assert len(s) == 8 + 4 + 8 + 8 + 16
    assert sum(not s.consistent(c, merge) for c in s.coordinates) == 20


def test_bell_structure():
    s = build_structure(get_scenario("bell"))
    assert len(s.maximal_sets) == 4
    assert len(s) == 4 + 4


def test_coordinate_lookup(structure):
    s, _ = structure
    assert s.name(s.parse("A0B1C10")) == "A0B1C10"
    with pytest.raises(CoordinateUnavailable):
        s.parse("A0A1")
    with pytest.raises(CoordinateUnavailable):
        s.coordinate("Z9")


def test_inequality_round_trip(structure):
    s, _ = structure
    f = entropic_monogamy(s, 1, 0, "B")
    assert EntropicInequality.from_dict(s, f.to_dict()) == f
    assert (f + f.scaled(-1)).coefficients == {}


# ---------------------------------------------------------------------------
# elemental inequalities against explicit joint distributions


def test_elemental_inequalities_hold_for_joint_distributions(structure):
    s, _ = structure
    rows = np.array([[float(v) for v in ineq.vector()] for ineq in elemental_inequalities(s)])
    for trial in range(40):
        alpha = 0.05 if trial % 2 else 1.0
        joint = RNG.dirichlet(np.full(2 ** len(s.variables), alpha)).reshape((2,) * len(s.variables))
        h = _joint_entropies(s, joint)
        assert (rows @ h).min() > -1e-9


def test_elemental_system_is_shannon_complete_on_small_cases(structure):
    s, _ = structure
    system = elemental_inequalities(s)
    A0, B0, C = (s.by_name[n] for n in ("A0", "B0", "C00"))
    # subadditivity and a chain-rule inequality follow from the elemental ones
    sub = EntropicInequality(s, {frozenset({A0}): 1, frozenset({B0}): 1, frozenset({A0, B0}): -1})
    chain = EntropicInequality(s, {frozenset({A0, B0, C}): 1, frozenset({A0}): -1})
    assert implied_by(system, sub)
    assert implied_by(system, chain)
    assert not implied_by(system, sub.scaled(-1))


# ---------------------------------------------------------------------------
# exact identities and projection


def test_parts_sum_to_the_monogamy_relation(structure):
    s, _ = structure
    target = entropic_monogamy(s)
    parts = appendix_parts(s)
    assert verify_combination(target, parts, [1, 1, 1, 1])
    assert not verify_combination(target, parts, [1, 1, 1, 2])
    assert not verify_combination(target, parts, [1, 1, 1, Fraction(-1)])
    system = elemental_inequalities(s)
    for p in parts:
        assert implied_by(system, p)


def _lp_implied(rows: np.ndarray, target: np.ndarray) -> bool:
    """Float oracle: min target.h over {rows h >= 0, |h| <= 1} is zero."""
    res = linprog(target, A_ub=-rows, b_ub=np.zeros(rows.shape[0]), bounds=(-1, 1), method="highs")
    return res.status == 0 and res.fun > -1e-9


def test_projection_on_a_tiny_cone(structure):
    s, _ = structure
    a, b, c = (frozenset({s.by_name[n]}) for n in ("A0", "B0", "C00"))
    system = [
        EntropicInequality(s, {a: 1}),
        EntropicInequality(s, {b: 1, a: -1}),
        EntropicInequality(s, {c: 1, b: -1}),
        EntropicInequality(s, {a: 2, b: 1, c: -1}),
    ]
    out = fm_eliminate(system, lambda coord: coord == b)
    got = {frozenset(f.coefficients.items()) for f in out}
    # b is squeezed between max(a, c - 2a) and c: c >= a and 2a >= 0
    assert got == {frozenset({(a, 1)}), frozenset({(c, 1), (a, -1)})}


def test_projected_system_is_sound_and_monogamy_is_implied(structure, projected):
    s, merge = structure
    full = np.array([[float(v) for v in f.vector()] for f in elemental_inequalities(s)])
    for f in projected:
        assert all(s.consistent(c, merge) for c in f.coefficients)
        assert _lp_implied(full, np.array([float(v) for v in f.vector()]))
    for partner, x, y in itertools.product("AB", (0, 1), (0, 1)):
        target = entropic_monogamy(s, x, y, partner)
        assert implied_by(projected, target)
        lam = implication_certificate(projected, target)
        assert lam is not None and all(v >= 0 for v in lam)


def test_blowup_cap(structure):
    s, merge = structure
    with pytest.raises(EliminationBlowup):
        fm_eliminate(elemental_inequalities(s), lambda c: not s.consistent(c, merge), cap=10)


# ---------------------------------------------------------------------------
# evaluation


def _bc_oracle(P):
    """BC_AB of a Bell box array P[a, b, x, y] computed directly."""
    H = lambda p: _h(np.asarray(p).ravel())  # noqa: E731
    val = H(P[:, :, 0, 0]) + H(P[:, :, 0, 1]) + H(P[:, :, 1, 0]) - H(P[:, :, 1, 1])
    val -= H(P[:, :, 0, 0].sum(axis=1)) + H(P[:, :, 0, 0].sum(axis=0))
    return val


def test_bc_on_tsirelson_box(structure):
    s, merge = structure
    box = compose_2layer(named_box("tsirelson"))
    P = np.asarray(named_box("tsirelson").to_float().entries, dtype=float)
    assert math.isclose(evaluate_entropic(bc_functional(s), box, merge), _bc_oracle(P), abs_tol=1e-12)
    assert _bc_oracle(P) > 0


def test_monogamy_holds_on_classical_mixtures(structure):
    s, merge = structure
    dets = list(deterministic_boxes(EXT_BELL_SHAPE))
    for _ in range(30):
        picks = RNG.choice(len(dets), size=4, replace=False)
        w = RNG.dirichlet(np.ones(4))
        box = mixture([dets[i] for i in picks], list(w))
        for partner, x, y in itertools.product("AB", (0, 1), (0, 1)):
            assert evaluate_entropic(entropic_monogamy(s, x, y, partner), box, merge) > -1e-9
