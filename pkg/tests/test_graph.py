import itertools
import json

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from latent_layers.errors import (
    CycleDetected,
    DuplicateName,
    FanoutDetected,
    InconsistentWiring,
    InvalidPartition,
    NotASetting,
    ObservedWithoutCardinality,
    UnknownNode,
    UnknownScenario,
)
from latent_layers.graph import (
    CLASSICAL_ONLY_FLAG,
    CausalScenario,
    InflationSpec,
    Node,
    NodeKind,
    correlation_scenario,
    d_separated,
    exogenize,
    inflate,
    interrupt,
    is_isomorphic,
    nosignaling_constraints,
    reduce,
    validate,
)
from latent_layers.scenarios import (
    ADJACENT_PAIRS,
    TETRA_AC_AD_BD_INFLATION,
    TETRA_INFLATION,
    get_scenario,
    interrupted_ext_bell,
    load_scenario,
    registry_ids,
)

OBS, LQ, LC = NodeKind.OBSERVED, NodeKind.LATENT_QUANTUM, NodeKind.LATENT_CLASSICAL


# ---------------------------------------------------------------------------
# d-separation against brute-force path enumeration


def _open_path_exists(g: CausalScenario, xs, ys, zs) -> bool:
    """Oracle: some simple undirected path between xs and ys is unblocked by zs."""
    und = nx.Graph()
    und.add_nodes_from(g.names)
    und.add_edges_from(g.edges)
    edges = set(g.edges)
    desc_or_self = {n: set(nx.descendants(g.to_networkx(), n)) | {n} for n in g.names}
    for x in xs:
        for y in ys:
            for path in nx.all_simple_paths(und, x, y):
                ok = True
                for i in range(1, len(path) - 1):
                    a, m, b = path[i - 1], path[i], path[i + 1]
                    collider = (a, m) in edges and (b, m) in edges
                    if collider:
                        if not desc_or_self[m] & set(zs):
                            ok = False
                            break
                    elif m in zs:
                        ok = False
                        break
                if ok:
                    return True
    return False


@st.composite
def small_dags(draw):
    n = draw(st.integers(2, 8))
    names = [f"v{i}" for i in range(n)]
    pairs = [(names[i], names[j]) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    perm = draw(st.permutations(names))
    relabel = dict(zip(names, perm))
    nodes = tuple(Node(v, OBS, 2) for v in names)
    g = CausalScenario(nodes, frozenset((relabel[u], relabel[v]) for u, v in chosen))
    x = draw(st.sampled_from(names))
    y = draw(st.sampled_from([v for v in names if v != x]))
    rest = [v for v in names if v not in (x, y)]
    z = draw(st.lists(st.sampled_from(rest), unique=True)) if rest else []
    return g, x, y, z


@settings(max_examples=300, deadline=None)
@given(small_dags())
def test_d_separation_matches_path_oracle(case):
    g, x, y, z = case
    assert d_separated(g, {x}, {y}, z) == (not _open_path_exists(g, [x], [y], z))


@settings(max_examples=100, deadline=None)
@given(small_dags())
def test_d_separation_matches_networkx(case):
    g, x, y, z = case
    nxg = g.to_networkx()
    check = getattr(nx, "is_d_separator", None) or nx.d_separated
    assert d_separated(g, {x}, {y}, z) == check(nxg, {x}, {y}, set(z))


def test_d_separation_textbook_cases():
    chain = CausalScenario(tuple(Node(n, OBS, 2) for n in "abc"), {("a", "b"), ("b", "c")})
    collider = CausalScenario(tuple(Node(n, OBS, 2) for n in "abc"), {("a", "b"), ("c", "b")})
    assert not d_separated(chain, {"a"}, {"c"})
    assert d_separated(chain, {"a"}, {"c"}, {"b"})
    assert d_separated(collider, {"a"}, {"c"})
    assert not d_separated(collider, {"a"}, {"c"}, {"b"})
    with pytest.raises(UnknownNode):
        d_separated(chain, {"a"}, {"zz"})


# ---------------------------------------------------------------------------
# validation and registry


@pytest.mark.parametrize("sid", registry_ids())
def test_registry_scenarios_validate_and_round_trip(sid):
    g = get_scenario(sid)
    c = validate(g)
    assert set(c.settings) | set(c.outcomes) == set(g.observed)
    back = CausalScenario.from_json(g.to_json())
    assert back == g and back.names == g.names


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        get_scenario("nope")
    with pytest.raises(UnknownScenario):
        load_scenario("/no/such/file.json")


def test_load_scenario_from_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(get_scenario("bell").to_json())
    assert load_scenario(str(p)) == get_scenario("bell")


def test_validation_errors():
    with pytest.raises(CycleDetected):
        validate(CausalScenario((Node("a", OBS, 2), Node("b", OBS, 2)), {("a", "b"), ("b", "a")}))
    with pytest.raises(DuplicateName):
        validate(CausalScenario((Node("a", OBS, 2), Node("a", OBS, 2)), set()))
    with pytest.raises(ObservedWithoutCardinality):
        validate(CausalScenario((Node("a", OBS, None),), set()))
    with pytest.raises(UnknownNode):
        CausalScenario((Node("a", OBS, 2),), {("a", "b")})


def test_extended_bell_roles():
    g = get_scenario("ext_bell_bc")
    c = validate(g)
    assert c.settings == ("X", "Y")
    assert c.outcomes == ("A", "B", "C")
    assert c.intermediate_latents == ("M_BC",)


# ---------------------------------------------------------------------------
# exogenization and interruption


@pytest.mark.parametrize("sid", registry_ids())
def test_exogenize_idempotent_and_removes_intermediates(sid):
    g = exogenize(get_scenario(sid))
    assert not g.intermediate_latents
    assert exogenize(g) == g


@pytest.mark.parametrize("sid", ["ext_bell_bc", "ext_bell_ac", "ext_bell_2il"])
def test_exogenized_extended_bell_is_the_plain_one(sid):
    g = exogenize(get_scenario(sid))
    assert is_isomorphic(g, get_scenario("ext_bell_exo"))
    assert CLASSICAL_ONLY_FLAG in g.flags


def test_exogenize_preserves_observed_and_settings():
    for sid in registry_ids():
        g, e = get_scenario(sid), exogenize(get_scenario(sid))
        assert e.observed == g.observed
        assert e.settings == g.settings


def test_interrupt_splits_setting():
    g = interrupt(get_scenario("ext_bell_exo"), "Y", [{"B"}, {"C"}])
    assert g.children("Y") == ("B",)
    assert g.children("Y'") == ("C",)
    assert g.node("Y'").base == "Y"
    with pytest.raises(NotASetting):
        interrupt(g, "A", [{"B"}])
    with pytest.raises(InvalidPartition):
        interrupt(get_scenario("ext_bell_exo"), "Y", [{"B"}])
    with pytest.raises(InvalidPartition):
        interrupt(get_scenario("ext_bell_exo"), "Y", [{"B", "C"}, {"C"}])


def test_interrupted_extended_bell_variants():
    g, merge = interrupted_ext_bell("c")
    assert set(g.settings) == {"X", "X'", "Y", "Y'"}
    assert set(g.setting_parents("C")) == {"X'", "Y'"}
    assert merge == {"X'": "X", "Y'": "Y"}
    g, merge = interrupted_ext_bell("y")
    assert set(g.setting_parents("C")) == {"X", "Y'"}


def test_nosignaling_constraints_bell():
    cons = nosignaling_constraints(get_scenario("bell"))
    got = {(tuple(sorted(c.outputs)), tuple(c.free_settings)) for c in cons}
    assert got == {(("A",), ("Y",)), (("B",), ("X",))}


def test_nosignaling_in_interrupted_scenario():
    g, _ = interrupted_ext_bell("c")
    cons = {(frozenset(c.outputs), next(iter(c.free_settings))) for c in nosignaling_constraints(g)}
    assert (frozenset("AB"), "X'") in cons
    assert (frozenset("AB"), "Y'") in cons
    assert (frozenset("C"), "X") in cons
    assert (frozenset("BC"), "X") in cons
    assert (frozenset("AC"), "Y") in cons
    assert (frozenset("ABC"), "X") not in cons


# ---------------------------------------------------------------------------
# reduction and inflation


def test_reduce_absorbs_single_child_latent():
    g = CausalScenario((Node("L", LC), Node("a", OBS, 2), Node("x", OBS, 2)), {("L", "a"), ("x", "a")})
    r = reduce(g)
    assert r.names == ("a", "x")


def test_reduce_drops_strictly_covered_root_latent():
    nodes = (Node("L", LQ), Node("M", LQ), Node("a", OBS, 2), Node("b", OBS, 2), Node("c", OBS, 2))
    g = CausalScenario(nodes, {("L", "a"), ("L", "b"), ("M", "a"), ("M", "b"), ("M", "c")})
    assert reduce(g).latents == ("M",)


def test_reduce_is_a_fixed_point():
    for sid in registry_ids():
        r = reduce(get_scenario(sid))
        assert reduce(r) == r


def test_correlation_scenario_has_no_settings():
    c = correlation_scenario(get_scenario("ext_bell_exo"))
    assert c.settings == ()
    assert set(c.children("S_X")) == {"X", "A", "C"}


def test_tetra_inflation_chain():
    tetra = get_scenario("tetra")
    inf = inflate(tetra, TETRA_INFLATION)
    for pair in ADJACENT_PAIRS:
        assert pair in inf.injectable
    red = reduce(inf.inflated)
    assert is_isomorphic(red, correlation_scenario(get_scenario("ext_bell_exo")))
    assert not is_isomorphic(red, correlation_scenario(get_scenario("ext_bell_bc")))


def test_tetra_ac_ad_bd_inflation_chain():
    g = get_scenario("tetra_ac_ad_bd")
    inf = inflate(g, TETRA_AC_AD_BD_INFLATION)
    for pair in ADJACENT_PAIRS:
        assert pair in inf.injectable
    assert is_isomorphic(reduce(inf.inflated), correlation_scenario(get_scenario("ext_bell_ac")))


def test_trivial_inflation_is_identity():
    g = get_scenario("tetra")
    inf = inflate(g, InflationSpec({}))
    assert inf.inflated == g
    assert frozenset(g.observed) in inf.injectable


def test_inflation_errors():
    g = get_scenario("tetra")
    with pytest.raises(InconsistentWiring):
        inflate(g, InflationSpec({"A": 2}))
    with pytest.raises(InconsistentWiring):
        inflate(g, InflationSpec({}, wiring={("A", 1, "B"): 1}))
    latent = g.latents[0]
    kid = g.children(latent)[0]
    # two copies of a child both fed by one latent copy would be a fan-out
    with pytest.raises((FanoutDetected, InconsistentWiring)):
        inflate(g, InflationSpec({}, observed_copies={kid: 2}))


def test_injectable_sets_are_downward_closed_on_singletons():
    inf = inflate(get_scenario("tetra"), TETRA_INFLATION)
    singles = {next(iter(s)) for s in inf.injectable if len(s) == 1}
    for s in inf.injectable:
        assert set(s) <= singles
