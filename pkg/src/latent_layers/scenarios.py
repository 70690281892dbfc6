"""Built-in registry of causal scenarios and inflation specs.

Naming: observed parties ``A, B, C, D``; settings ``X, Y``; root sources
``L_<children>``; intermediate latents ``M_<children>``. All latents are
quantum unless stated.
"""
from __future__ import annotations

import json
from pathlib import Path

from .errors import UnknownScenario
from .graph import CausalScenario, InflationSpec, interrupt

__all__ = ["REGISTRY", "get_scenario", "load_scenario", "registry_ids", "TETRA_INFLATION", "TETRA_AC_AD_BD_INFLATION",
           "INTERRUPTIONS", "interrupted_ext_bell"]


def _bell() -> CausalScenario:
    return CausalScenario.build(
        {"X": 2, "Y": 2, "A": 2, "B": 2},
        ["L_AB"],
        [("X", "A"), ("Y", "B"), ("L_AB", "A"), ("L_AB", "B")],
    )


def _ext_bell_exo() -> CausalScenario:
    return CausalScenario.build(
        {"X": 2, "Y": 2, "A": 2, "B": 2, "C": 2},
        ["L_ABC"],
        [
            ("X", "A"), ("X", "C"), ("Y", "B"), ("Y", "C"),
            ("L_ABC", "A"), ("L_ABC", "B"), ("L_ABC", "C"),
        ],
    )


def _ext_bell_bc() -> CausalScenario:
    return CausalScenario.build(
        {"X": 2, "Y": 2, "A": 2, "B": 2, "C": 2},
        ["L_ABC", "M_BC"],
        [
            ("X", "A"), ("X", "C"), ("Y", "M_BC"),
            ("L_ABC", "A"), ("L_ABC", "M_BC"),
            ("M_BC", "B"), ("M_BC", "C"),
        ],
    )


def _ext_bell_ac() -> CausalScenario:
    return CausalScenario.build(
        {"X": 2, "Y": 2, "A": 2, "B": 2, "C": 2},
        ["L_ABC", "M_AC"],
        [
            ("X", "M_AC"), ("Y", "B"), ("Y", "C"),
            ("L_ABC", "B"), ("L_ABC", "M_AC"),
            ("M_AC", "A"), ("M_AC", "C"),
        ],
    )


def _ext_bell_2il() -> CausalScenario:
    return CausalScenario.build(
        {"X": 2, "Y": 2, "A": 2, "B": 2, "C": 2},
        ["L_ABC", "M_AC", "M_BC"],
        [
            ("X", "M_AC"), ("Y", "M_BC"),
            ("L_ABC", "M_AC"), ("L_ABC", "M_BC"),
            ("M_AC", "A"), ("M_AC", "C"), ("M_BC", "B"), ("M_BC", "C"),
        ],
    )


_TETRA_OBS = {"A": 4, "B": 4, "C": 8, "D": 4}


def _tetra() -> CausalScenario:
    edges = []
    for src in ("ABC", "ABD", "ACD", "BCD"):
        edges += [(f"L_{src}", p) for p in src]
    return CausalScenario.build(_TETRA_OBS, ["L_ABC", "L_ABD", "L_ACD", "L_BCD"], edges)


def _tetra_bc() -> CausalScenario:
    return CausalScenario.build(
        _TETRA_OBS,
        ["L_ABC", "L_ABD", "L_ACD", "L_BCD", "M_BC"],
        [
            ("L_ABC", "A"), ("L_ABC", "M_BC"),
            ("L_BCD", "D"), ("L_BCD", "M_BC"),
            ("L_ABD", "A"), ("L_ABD", "B"), ("L_ABD", "D"),
            ("L_ACD", "A"), ("L_ACD", "C"), ("L_ACD", "D"),
            ("M_BC", "B"), ("M_BC", "C"),
        ],
    )


def _tetra_ac_ad_bd() -> CausalScenario:
    return CausalScenario.build(
        _TETRA_OBS,
        ["L_ABC", "L_ABD", "L_ACD", "L_BCD", "M_AC", "M_AD", "M_BD"],
        [
            ("L_ABC", "M_AC"), ("L_ABC", "B"),
            ("L_ABD", "M_AD"), ("L_ABD", "M_BD"),
            ("L_ACD", "M_AC"), ("L_ACD", "M_AD"),
            ("L_BCD", "M_BD"), ("L_BCD", "C"),
            ("M_AC", "A"), ("M_AC", "C"),
            ("M_AD", "A"), ("M_AD", "D"),
            ("M_BD", "B"), ("M_BD", "D"),
        ],
    )


def _fig12a() -> CausalScenario:
    # three bipartite intermediates in parallel (configuration only)
    return CausalScenario.build(
        {"X": 2, "Y": 2, "A": 2, "B": 2, "C": 2, "D": 2},
        ["L_ABCD", "M_BC", "M_BD", "M_CD"],
        [
            ("X", "A"), ("L_ABCD", "A"),
            ("L_ABCD", "M_BC"), ("L_ABCD", "M_BD"), ("L_ABCD", "M_CD"),
            ("Y", "M_BC"), ("Y", "M_BD"), ("Y", "M_CD"),
            ("M_BC", "B"), ("M_BC", "C"), ("M_BD", "B"), ("M_BD", "D"),
            ("M_CD", "C"), ("M_CD", "D"),
        ],
    )


def _fig12b() -> CausalScenario:
    # single tripartite intermediate (configuration only)
    return CausalScenario.build(
        {"X": 2, "Y": 2, "A": 2, "B": 2, "C": 2, "D": 2},
        ["L_ABCD", "M_BCD"],
        [
            ("X", "A"), ("L_ABCD", "A"), ("L_ABCD", "M_BCD"), ("Y", "M_BCD"),
            ("M_BCD", "B"), ("M_BCD", "C"), ("M_BCD", "D"),
        ],
    )


REGISTRY = {
    "bell": _bell,
    "ext_bell_exo": _ext_bell_exo,
    "ext_bell_bc": _ext_bell_bc,
    "ext_bell_ac": _ext_bell_ac,
    "ext_bell_2il": _ext_bell_2il,
    "tetra": _tetra,
    "tetra_bc": _tetra_bc,
    "tetra_ac_ad_bd": _tetra_ac_ad_bd,
    "fig12a": _fig12a,
    "fig12b": _fig12b,
}

DESCRIPTIONS = {
    "bell": "standard Bell scenario (A,B|X,Y)",
    "ext_bell_exo": "extended Bell scenario, exogenous source",
    "ext_bell_bc": "extended Bell scenario with a BC intermediate latent",
    "ext_bell_ac": "extended Bell scenario with an AC intermediate latent",
    "ext_bell_2il": "extended Bell scenario with AC and BC intermediate latents",
    "tetra": "tetrahedron network of four tripartite sources",
    "tetra_bc": "tetrahedron with a BC intermediate latent",
    "tetra_ac_ad_bd": "tetrahedron with AC, AD and BD intermediate latents",
    "fig12a": "three bipartite intermediates in parallel (open problem, no verdict)",
    "fig12b": "single tripartite intermediate (open problem, no verdict)",
}


def registry_ids() -> list[str]:
    return list(REGISTRY)


def get_scenario(scenario_id: str) -> CausalScenario:
    try:
        return REGISTRY[scenario_id]()
    except KeyError:
        raise UnknownScenario(f"unknown scenario id {scenario_id!r}; known: {registry_ids()}") from None


def load_scenario(id_or_path: str) -> CausalScenario:
    """Resolve a registry id, or read a JSON scenario file."""
    if id_or_path in REGISTRY:
        return get_scenario(id_or_path)
    path = Path(id_or_path)
    if path.exists():
        return CausalScenario.from_json(path.read_text())
    raise UnknownScenario(f"{id_or_path!r} is neither a registry id nor a readable file")


# Inflation of the tetrahedron along the chain D^1 - A - C - B - D^2.
TETRA_INFLATION = InflationSpec(
    copies={"L_ABC": 1, "L_ABD": 2, "L_ACD": 2, "L_BCD": 2},
    observed_copies={"D": 2},
    wiring={
        ("A", 1, "L_ABD"): 1, ("A", 1, "L_ACD"): 1,
        ("B", 1, "L_ABD"): 2, ("B", 1, "L_BCD"): 1,
        ("C", 1, "L_ACD"): 1, ("C", 1, "L_BCD"): 1,
        ("D", 1, "L_ABD"): 1, ("D", 1, "L_ACD"): 1, ("D", 1, "L_BCD"): 2,
        ("D", 2, "L_ABD"): 2, ("D", 2, "L_ACD"): 2, ("D", 2, "L_BCD"): 1,
    },
)

# Same chain for the tetrahedron with AC, AD and BD intermediates.
TETRA_AC_AD_BD_INFLATION = InflationSpec(
    copies={
        "L_ABC": 1, "L_ABD": 2, "L_ACD": 2, "L_BCD": 2,
        "M_AC": 1, "M_AD": 2, "M_BD": 2,
    },
    observed_copies={"D": 2},
    wiring={
        ("A", 1, "M_AD"): 1,
        ("B", 1, "M_BD"): 2,
        ("C", 1, "L_BCD"): 1,
        ("D", 1, "M_AD"): 1, ("D", 1, "M_BD"): 1,
        ("D", 2, "M_AD"): 2, ("D", 2, "M_BD"): 2,
        ("M_AD", 1, "L_ABD"): 1, ("M_AD", 1, "L_ACD"): 1,
        ("M_AD", 2, "L_ABD"): 2, ("M_AD", 2, "L_ACD"): 2,
        ("M_BD", 1, "L_ABD"): 1, ("M_BD", 1, "L_BCD"): 2,
        ("M_BD", 2, "L_ABD"): 2, ("M_BD", 2, "L_BCD"): 1,
    },
)

# Injectable pairs in both inflations (the four adjacent pairs of the chain).
ADJACENT_PAIRS = [
    frozenset({"A", "D^1"}),
    frozenset({"A", "C"}),
    frozenset({"B", "C"}),
    frozenset({"B", "D^2"}),
]


# Interruptions of the exogenized extended Bell scenario. "c" hands C its
# own copies of both settings; "y" and "x" split a single setting only.
INTERRUPTIONS = {
    "c": ((("Y", ({"B"}, {"C"})), ("X", ({"A"}, {"C"}))), {"Y'": "Y", "X'": "X"}),
    "y": ((("Y", ({"B"}, {"C"})),), {"Y'": "Y"}),
    "x": ((("X", ({"A"}, {"C"})),), {"X'": "X"}),
}


def interrupted_ext_bell(kind: str = "c") -> tuple[CausalScenario, dict[str, str]]:
    """Interrupted exogenized extended Bell scenario and its merge map.

    Only ``"c"`` separates C's inputs from both A's and B's; with a single
    setting split, C still sees the true value of the other setting and the
    tripartite no-signaling constraints do not force monogamy.
    """
    if kind not in INTERRUPTIONS:
        raise UnknownScenario(f"unknown interruption {kind!r}; known: {list(INTERRUPTIONS)}")
    splits, merge = INTERRUPTIONS[kind]
    s = get_scenario("ext_bell_exo")
    for setting, blocks in splits:
        s = interrupt(s, setting, [set(b) for b in blocks])
    return s, dict(merge)


def dump_registry() -> str:
    return json.dumps({k: get_scenario(k).to_dict() for k in REGISTRY}, indent=2)
