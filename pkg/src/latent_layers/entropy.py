"""Shannon-cone bookkeeping on coexisting sets and entropic monogamy relations.

Contextual variables are outcome nodes instantiated at their setting
parents (``A0``, ``C01``, ...). Entropy coordinates are the nonempty subsets
of maximal coexisting sets; a global joint entropy is never referenced.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .dist import BELL_SHAPE, Box, BoxShape, compose_2layer, correlator, deterministic_box, deterministic_strategies, mixture, qubit_box, PHI_PLUS
from .errors import CoordinateUnavailable, EliminationBlowup, ShapeMismatch, UnsupportedScenario
from .graph import CausalScenario
from .lp import _phase1
from .qfield import QField

__all__ = [
    "Variable",
    "CoexistenceStructure",
    "EntropicInequality",
    "build_structure",
    "elemental_inequalities",
    "fm_eliminate",
    "verify_combination",
    "implied_by",
    "entropy_vector",
    "evaluate_entropic",
    "bc_functional",
    "entropic_monogamy",
    "appendix_parts",
    "derive_monogamy",
    "search_bc_violation",
    "DEFAULT_FM_CAP",
]

DEFAULT_FM_CAP = 20000


@dataclass(frozen=True, order=True)
class Variable:
    """An outcome node at a fixed assignment of its setting parents."""

    party: str
    settings: tuple[tuple[str, int], ...] = ()

    @property
    def name(self) -> str:
        return self.party + "".join(str(v) for _, v in self.settings)

    def __str__(self) -> str:
        return self.name


Coordinate = frozenset  # of Variable


def coord_name(coord: Iterable[Variable]) -> str:
    return "".join(v.name for v in sorted(coord))


class CoexistenceStructure:
    def __init__(self, variables: Sequence[Variable], maximal_sets: Sequence[frozenset], parties: Sequence[str]):
        self.parties = tuple(parties)
        self.variables = tuple(sorted(variables, key=self.sort_key))
        self.maximal_sets = tuple(maximal_sets)
        coords = set()
        for m in self.maximal_sets:
            members = sorted(m, key=self.sort_key)
            for r in range(1, len(members) + 1):
                for sub in itertools.combinations(members, r):
                    coords.add(frozenset(sub))
        self.coordinates = sorted(coords, key=self.coord_key)
        self.index = {c: i for i, c in enumerate(self.coordinates)}
        self.by_name = {v.name: v for v in self.variables}

    def sort_key(self, v: Variable):
        return (self.parties.index(v.party), v.settings)

    def coord_key(self, c: frozenset):
        return (len(c), [self.sort_key(v) for v in sorted(c, key=self.sort_key)])

    def name(self, c: frozenset) -> str:
        return "".join(v.name for v in sorted(c, key=self.sort_key))

    def coordinate(self, *names: str) -> frozenset:
        """Coordinate from variable names, e.g. ``coordinate("A0", "C00")``."""
        try:
            c = frozenset(self.by_name[n] for n in names)
        except KeyError as e:
            raise CoordinateUnavailable(f"unknown variable {e.args[0]!r}") from None
        if c not in self.index:
            raise CoordinateUnavailable(f"{names} is not inside a coexisting set")
        return c

    def parse(self, text: str) -> frozenset:
        """Parse ``"A0B0C00"`` into a coordinate."""
        names = []
        pos = 0
        by_len = sorted(self.by_name, key=len, reverse=True)
        while pos < len(text):
            for n in by_len:
                if text.startswith(n, pos):
                    names.append(n)
                    pos += len(n)
                    break
            else:
                raise CoordinateUnavailable(f"cannot parse coordinate {text!r}")
        return self.coordinate(*names)

    def consistent(self, coord: frozenset, merge_map: Mapping[str, str]) -> bool:
        """True if the coordinate's variables agree on every merged setting."""
        seen: dict[str, int] = {}
        for v in coord:
            for s, val in v.settings:
                key = merge_map.get(s, s)
                if seen.setdefault(key, val) != val:
                    return False
        return True

    def __len__(self) -> int:
        return len(self.coordinates)


def build_structure(interrupted: CausalScenario) -> CoexistenceStructure:
    """One maximal set per joint assignment of all settings."""
    outcomes = interrupted.outcomes
    if not outcomes:
        raise UnsupportedScenario("scenario has no outcome nodes")
    for o in outcomes:
        for p in interrupted.parents(o):
            if interrupted.node(p).kind.name == "OBSERVED" and p not in interrupted.settings:
                raise UnsupportedScenario(f"outcome {o} has an observed non-setting parent {p}")
    settings = interrupted.settings
    dims = [interrupted.node(s).cardinality for s in settings]
    variables = set()
    maximal = []
    for vals in itertools.product(*(range(d) for d in dims)):
        ctx = dict(zip(settings, vals))
        members = []
        for o in outcomes:
            v = Variable(o, tuple((s, ctx[s]) for s in interrupted.setting_parents(o)))
            variables.add(v)
            members.append(v)
        fs = frozenset(members)
        if fs not in maximal:
            maximal.append(fs)
    return CoexistenceStructure(sorted(variables), maximal, outcomes)


class EntropicInequality:
    """``sum coefficient * H(coordinate) >= 0`` with exact rational coefficients."""

    __slots__ = ("structure", "coefficients", "name")

    def __init__(self, structure: CoexistenceStructure, coefficients: Mapping, name: str = ""):
        self.structure = structure
        coeffs = {}
        for c, v in coefficients.items():
            if isinstance(c, str):
                c = structure.parse(c)
            if c not in structure.index:
                raise CoordinateUnavailable(f"{c} is not a coordinate of the structure")
            v = Fraction(v)
            if v:
                coeffs[c] = coeffs.get(c, Fraction(0)) + v
        self.coefficients = {c: v for c, v in coeffs.items() if v}
        self.name = name

    def vector(self) -> np.ndarray:
        out = np.zeros(len(self.structure), dtype=object)
        out[:] = Fraction(0)
        for c, v in self.coefficients.items():
            out[self.structure.index[c]] = v
        return out

    @classmethod
    def from_vector(cls, structure, vec, name: str = "") -> "EntropicInequality":
        return cls(structure, {structure.coordinates[i]: Fraction(v) for i, v in enumerate(vec) if v}, name)

    def __add__(self, other: "EntropicInequality") -> "EntropicInequality":
        coeffs = dict(self.coefficients)
        for c, v in other.coefficients.items():
            coeffs[c] = coeffs.get(c, Fraction(0)) + v
        return EntropicInequality(self.structure, coeffs)

    def scaled(self, k) -> "EntropicInequality":
        return EntropicInequality(self.structure, {c: v * Fraction(k) for c, v in self.coefficients.items()}, self.name)

    def __eq__(self, other) -> bool:
        return isinstance(other, EntropicInequality) and self.coefficients == other.coefficients

    def __hash__(self):
        return hash(frozenset(self.coefficients.items()))

    def __str__(self) -> str:
        s = self.structure
        parts = []
        for c in sorted(self.coefficients, key=s.coord_key):
            v = self.coefficients[c]
            mag = "" if abs(v) == 1 else f"{abs(v)}"
            parts.append(f"{'-' if v < 0 else '+'} {mag}H({s.name(c)})")
        text = " ".join(parts)
        if text.startswith("+ "):
            text = text[2:]
        return (text or "0") + " >= 0"

    def to_dict(self) -> dict:
        s = self.structure
        return {
            "name": self.name,
            "coefficients": {s.name(c): str(v) for c, v in sorted(self.coefficients.items(), key=lambda kv: s.name(kv[0]))},
            "sense": ">=0",
        }

    @classmethod
    def from_dict(cls, structure, doc) -> "EntropicInequality":
        return cls(structure, {k: Fraction(v) for k, v in doc["coefficients"].items()}, doc.get("name", ""))


# ---------------------------------------------------------------------------
# elemental system


def elemental_inequalities(s: CoexistenceStructure) -> list[EntropicInequality]:
    """Monotonicity for nested pairs and submodularity, within each maximal set."""
    seen = set()
    out = []

    def add(coeffs, name):
        key = frozenset((c, v) for c, v in coeffs.items() if v)
        if key and key not in seen:
            seen.add(key)
            out.append(EntropicInequality(s, coeffs, name))

    for m in s.maximal_sets:
        members = sorted(m, key=s.sort_key)
        subsets = [frozenset(c) for r in range(0, len(members) + 1) for c in itertools.combinations(members, r)]
        for T in subsets:
            if not T:
                continue
            for S in subsets:
                if S < T:
                    coeffs = {T: 1}
                    if S:
                        coeffs[S] = -1
                    add(coeffs, f"mono H({s.name(T)})>=H({s.name(S)})")
        for u, v in itertools.combinations(members, 2):
            rest = [w for w in members if w not in (u, v)]
            for r in range(len(rest) + 1):
                for S in itertools.combinations(rest, r):
                    S = frozenset(S)
                    coeffs: dict = {}
                    for c, k in ((S | {u}, 1), (S | {v}, 1), (S | {u, v}, -1), (S, -1)):
                        if c:
                            coeffs[c] = coeffs.get(c, 0) + k
                    add(coeffs, f"submod I({u};{v}|{s.name(S)})")
    return out


# ---------------------------------------------------------------------------
# Fourier-Motzkin


def _normalize(row: np.ndarray) -> np.ndarray:
    g = int(np.gcd.reduce(np.abs(row)))
    return row // g if g > 1 else row


def _float_redundant(rows: np.ndarray, i: int) -> np.ndarray | None:
    """Float LP: is row i a nonnegative combination of the others? Returns support."""
    from scipy.optimize import linprog

    others = np.delete(np.arange(rows.shape[0]), i)
    A = rows[others].T.astype(float)
    b = rows[i].astype(float)
    res = linprog(np.ones(len(others)), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    return others[res.x > 1e-9]


def _exact_combination(rows: np.ndarray, support: np.ndarray, target: np.ndarray) -> list[Fraction] | None:
    """Exact nonnegative multipliers ``lam`` with ``rows[support].T @ lam == target``."""
    if support.size == 0:
        return [] if not np.any(target) else None
    cols = [j for j in range(rows.shape[1]) if np.any(rows[support, j]) or target[j]]
    A = [[Fraction(int(rows[k, j])) for k in support] for j in cols]
    b = [QField(int(target[j])) for j in cols]
    feasible, x, _, _ = _phase1(A, b)
    if not feasible:
        return None
    lam = [v.a for v in x]
    if any(v.b for v in x):
        return None
    return lam


def _prune_redundant(rows: np.ndarray, hist: list[frozenset], log: list) -> tuple[np.ndarray, list[frozenset]]:
    """Drop rows implied by the remaining ones (float search, exact confirmation)."""
    keep = np.ones(rows.shape[0], dtype=bool)
    for i in range(rows.shape[0]):
        idx = np.nonzero(keep)[0]
        local = np.searchsorted(idx, i)
        sub = rows[idx]
        support = _float_redundant(sub, int(local))
        if support is None:
            continue
        if _exact_combination(sub, support, rows[i]) is not None:
            keep[i] = False
    log.append({"pruned": int((~keep).sum())})
    return rows[keep], [h for h, k in zip(hist, keep) if k]


def fm_eliminate(
    system: Sequence[EntropicInequality],
    drop: Callable[[frozenset], bool],
    cap: int = DEFAULT_FM_CAP,
    prune: bool = True,
    log: list | None = None,
) -> list[EntropicInequality]:
    """Project out every coordinate selected by ``drop``.

    Chernikov's rule discards combinations built from more than ``k + 1``
    input rows after ``k`` eliminations; that and exact-confirmed LP
    redundancy removal are the only pruning steps, so every output row is a
    nonnegative combination of the input system.
    """
    if not system:
        return []
    s = system[0].structure
    log = log if log is not None else []
    rows = np.array([[int(v) for v in ineq.vector()] for ineq in system], dtype=np.int64) if system else None
    if any(v.denominator != 1 for ineq in system for v in ineq.coefficients.values()):
        den = [math.lcm(*[v.denominator for v in ineq.coefficients.values()]) for ineq in system]
        rows = np.array([[int(v * d) for v in ineq.vector()] for ineq, d in zip(system, den)], dtype=np.int64)
    hist = [frozenset([i]) for i in range(len(system))]
    todo = [i for i, c in enumerate(s.coordinates) if drop(c)]
    todo = [j for j in todo if np.any(rows[:, j])]
    eliminated = 0
    while todo:
        # eliminate the column producing the fewest new rows
        costs = []
        for j in todo:
            pos = int((rows[:, j] > 0).sum())
            neg = int((rows[:, j] < 0).sum())
            costs.append((pos * neg - pos - neg, s.coord_key(s.coordinates[j]), j))
        _, _, j = min(costs)
        todo.remove(j)
        col = rows[:, j]
        P = np.nonzero(col > 0)[0]
        N = np.nonzero(col < 0)[0]
        Zr = np.nonzero(col == 0)[0]
        eliminated += 1
        new_rows = [rows[k] for k in Zr]
        new_hist = [hist[k] for k in Zr]
        for p in P:
            for n in N:
                h = hist[p] | hist[n]
                if len(h) > eliminated + 1:
                    continue  # Chernikov: redundant
                r = _normalize(rows[p] * (-col[n]) + rows[n] * col[p])
                if not np.any(r):
                    continue
                new_rows.append(r)
                new_hist.append(h)
        if len(new_rows) > cap:
            raise EliminationBlowup(f"{len(new_rows)} rows after eliminating {s.name(s.coordinates[j])} (cap {cap})")
        # exact duplicates and history supersets
        uniq: dict[bytes, int] = {}
        kept_rows, kept_hist = [], []
        for r, h in zip(new_rows, new_hist):
            key = r.tobytes()
            if key in uniq:
                k = uniq[key]
                if len(h) < len(kept_hist[k]):
                    kept_hist[k] = h
                continue
            uniq[key] = len(kept_rows)
            kept_rows.append(r)
            kept_hist.append(h)
        rows = np.array(kept_rows, dtype=np.int64).reshape(-1, len(s))
        hist = kept_hist
        if np.abs(rows).max(initial=0) > 2**40:
            raise EliminationBlowup("coefficient growth beyond int64 safety margin")
        log.append({"eliminated": s.name(s.coordinates[j]), "rows": int(rows.shape[0])})
        todo = [k for k in todo if np.any(rows[:, k])]
        if prune and rows.shape[0] > 1:
            rows, hist = _prune_redundant(rows, hist, log)
    out = []
    for r in rows:
        out.append(EntropicInequality.from_vector(s, [Fraction(int(v)) for v in r]))
    return out


# ---------------------------------------------------------------------------
# certificates


def verify_combination(
    target: EntropicInequality, parts: Sequence[EntropicInequality], multipliers: Sequence
) -> bool:
    """Exact check ``sum multiplier * part == target`` with nonnegative multipliers."""
    if len(parts) != len(multipliers):
        raise ShapeMismatch("one multiplier per part is required")
    acc: dict = {}
    for part, m in zip(parts, multipliers):
        m = Fraction(m)
        if m < 0:
            return False
        if part.structure is not target.structure and part.structure.coordinates != target.structure.coordinates:
            raise ShapeMismatch("parts live on a different coexistence structure")
        for c, v in part.coefficients.items():
            acc[c] = acc.get(c, Fraction(0)) + m * v
    return {c: v for c, v in acc.items() if v} == target.coefficients


def implied_by(system: Sequence[EntropicInequality], target: EntropicInequality) -> bool:
    """Exact cone membership: target is a nonnegative combination of the system."""
    return implication_certificate(system, target) is not None


def implication_certificate(system: Sequence[EntropicInequality], target: EntropicInequality):
    if not target.coefficients:
        return [Fraction(0)] * len(system)
    if not system:
        return None
    s = target.structure
    rows = []
    for ineq in system:
        vec = ineq.vector()
        den = math.lcm(*[Fraction(v).denominator for v in vec])
        rows.append([Fraction(v) for v in vec])
    tvec = [Fraction(v) for v in target.vector()]
    from scipy.optimize import linprog

    A = np.array([[float(v) for v in r] for r in rows]).T
    b = np.array([float(v) for v in tvec])
    res = linprog(np.ones(len(rows)), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    candidates = []
    if res.status == 0:
        candidates.append([i for i in range(len(rows)) if res.x[i] > 1e-9])
    candidates.append(list(range(len(rows))))
    for support in candidates:
        cols = [j for j in range(len(s)) if tvec[j] or any(rows[i][j] for i in support)]
        Aex = [[rows[i][j] for i in support] for j in cols]
        bex = [QField(tvec[j]) for j in cols]
        feasible, x, _, _ = _phase1(Aex, bex)
        if feasible:
            lam = [Fraction(0)] * len(rows)
            for i, v in zip(support, x):
                lam[i] = v.a
            if verify_combination(target, list(system), lam):
                return lam
        elif support == candidates[-1]:
            return None
    return None


# ---------------------------------------------------------------------------
# evaluation


def _entropy_bits(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def _coordinate_distribution(coord: frozenset, box: Box, merge_map: Mapping[str, str]) -> np.ndarray:
    shape = box.shape
    ctx = [0] * len(shape.settings)
    fixed: dict[str, int] = {}
    for v in coord:
        try:
            party = shape.party(v.party)
        except ShapeMismatch:
            raise CoordinateUnavailable(f"box has no party {v.party}") from None
        own = dict(v.settings)
        for s_orig in party.settings:
            # variable settings are named after interrupted copies; map back
            matches = [val for name, val in own.items() if merge_map.get(name, name) == s_orig]
            if len(matches) != 1:
                raise CoordinateUnavailable(f"variable {v} does not fix setting {s_orig}")
            if fixed.setdefault(s_orig, matches[0]) != matches[0]:
                raise CoordinateUnavailable(f"coordinate {coord_name(coord)} mixes contexts")
    for name, val in fixed.items():
        ctx[shape.setting_index(name)] = val
    arr = np.asarray(box.to_float().entries, dtype=float)
    sub = arr[(slice(None),) * len(shape.parties) + tuple(ctx)]
    keep = sorted({shape.party_index(v.party) for v in coord})
    if len(keep) != len(coord):
        raise CoordinateUnavailable(f"coordinate {coord_name(coord)} repeats a party")
    drop = tuple(i for i in range(len(shape.parties)) if i not in keep)
    return sub.sum(axis=drop) if drop else sub


def entropy_vector(s: CoexistenceStructure, box: Box, merge_map: Mapping[str, str] | None = None, only: Iterable | None = None) -> dict:
    """Shannon entropies (bits) of every consistent coordinate."""
    merge_map = merge_map or {}
    out = {}
    for c in only if only is not None else s.coordinates:
        if not s.consistent(c, merge_map):
            continue
        out[c] = _entropy_bits(_coordinate_distribution(c, box, merge_map))
    return out


def evaluate_entropic(f: EntropicInequality, box: Box, merge_map: Mapping[str, str] | None = None) -> float:
    merge_map = merge_map if merge_map is not None else {"X'": "X", "Y'": "Y"}
    total = 0.0
    for c, v in f.coefficients.items():
        total += float(v) * _entropy_bits(_coordinate_distribution(c, box, merge_map))
    return total


# ---------------------------------------------------------------------------
# named relations


def _vars(s: CoexistenceStructure, party: str, *vals: int) -> Variable:
    for v in s.variables:
        if v.party == party and tuple(x for _, x in v.settings) == vals:
            return v
    raise CoordinateUnavailable(f"no variable {party}{''.join(map(str, vals))}")


def bc_functional(s: CoexistenceStructure, minus: tuple[int, int] = (1, 1), parties=("A", "B")) -> EntropicInequality:
    """Braunstein-Caves ``BC >= 0`` with ``minus`` the subtracted setting pair."""
    pa, pb = parties
    xs, ys = minus
    coeffs: dict = {}
    for x, y in itertools.product((0, 1), repeat=2):
        c = frozenset({_vars(s, pa, x), _vars(s, pb, y)})
        coeffs[c] = coeffs.get(c, 0) + (-1 if (x, y) == minus else 1)
    coeffs[frozenset({_vars(s, pa, 1 - xs)})] = -1
    coeffs[frozenset({_vars(s, pb, 1 - ys)})] = -1
    return EntropicInequality(s, coeffs, f"BC_{pa}{pb}[{xs}{ys}]")


def entropic_monogamy(
    s: CoexistenceStructure, x: int = 0, y: int = 0, partner: str = "A", minus: tuple[int, int] = (1, 1)
) -> EntropicInequality:
    """``BC_AB + H(P|C_xy) + H(C_xy|P) >= 0`` with ``P`` = A_x or B_y."""
    p = _vars(s, "A", x) if partner == "A" else _vars(s, "B", y)
    c = _vars(s, "C", x, y)
    extra = EntropicInequality(s, {frozenset({p, c}): 2, frozenset({p}): -1, frozenset({c}): -1})
    out = bc_functional(s, minus) + extra
    out.name = f"BC_AB[{minus[0]}{minus[1]}] + H({p}|{c}) + H({c}|{p})"
    return out


def appendix_parts(s: CoexistenceStructure) -> list[EntropicInequality]:
    """The four conditional-entropy plus conditional-mutual-information terms."""
    A0, A1 = _vars(s, "A", 0), _vars(s, "A", 1)
    B0, B1 = _vars(s, "B", 0), _vars(s, "B", 1)
    C = _vars(s, "C", 0, 0)

    def H(*vs):
        return frozenset(vs)

    def cond_plus_cmi(t, u, v, w):
        # H(t|u v) + I(u;v|w) with w == t in every use
        coeffs: dict = {}
        for c, k in ((H(t, u, v), 1), (H(u, v), -1), (H(u, w), 1), (H(v, w), 1), (H(u, v, w), -1), (H(w), -1)):
            coeffs[c] = coeffs.get(c, 0) + k
        return EntropicInequality(s, coeffs, f"H({t}|{u}{v}) + I({u};{v}|{w})")

    return [
        cond_plus_cmi(A0, B0, C, A0),
        cond_plus_cmi(A0, B1, C, A0),
        cond_plus_cmi(B0, A1, C, B0),
        cond_plus_cmi(C, B1, A1, C),
    ]


def derive_monogamy(
    interrupted: CausalScenario,
    merge_map: Mapping[str, str],
    cap: int = DEFAULT_FM_CAP,
    log: list | None = None,
) -> tuple[CoexistenceStructure, list[EntropicInequality]]:
    """Elemental system projected onto context-consistent coordinates."""
    s = build_structure(interrupted)
    system = elemental_inequalities(s)
    projected = fm_eliminate(system, lambda c: not s.consistent(c, merge_map), cap=cap, log=log)
    return s, projected


# ---------------------------------------------------------------------------
# violation search


def _bc_from_box_arrays(P: np.ndarray, minus=(1, 1)) -> np.ndarray:
    """BC_AB for a stack of Bell boxes ``P[..., a, b, x, y]`` (bits)."""

    def H(p, axes):
        q = np.where(p > 0, p, 1.0)
        return -(p * np.log2(q)).sum(axis=axes)

    total = 0.0
    xs, ys = minus
    for x, y in itertools.product((0, 1), repeat=2):
        h = H(P[..., :, :, x, y], (-2, -1))
        total = total + (-h if (x, y) == minus else h)
    pa = P[..., :, :, 1 - xs, 0].sum(axis=-1)
    pb = P[..., :, :, 0, 1 - ys].sum(axis=-2)
    return total - H(pa, (-1,)) - H(pb, (-1,))


@dataclass
class ScanResult:
    value: float
    p: float
    alice: tuple[float, float]
    bob: tuple[float, float]
    deterministic: int
    evaluated: int
    box: Box | None = None
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "bc_ab": self.value,
            "p": self.p,
            "alice_angles": list(self.alice),
            "bob_angles": list(self.bob),
            "deterministic": self.deterministic,
            "evaluated": self.evaluated,
        }


def _scan_chunk(first: Sequence[float], angles: np.ndarray, p_grid: np.ndarray, state, keep_rows: bool):
    dets = np.stack([np.asarray(b.to_float().entries, dtype=float) for b in _bell_deterministic()])
    pw = p_grid[:, None, None, None, None, None]
    best = (math.inf, None)
    rows = []
    evaluated = 0
    for a0 in first:
        for a1, b0, b1 in itertools.product(angles, repeat=3):
            Q = np.asarray(qubit_box(state, (a0, a1), (b0, b1)).entries, dtype=float)
            vals = _bc_from_box_arrays(pw * Q + (1 - pw) * dets[None])
            evaluated += vals.size
            i, k = np.unravel_index(np.argmin(vals), vals.shape)
            if vals[i, k] < best[0]:
                best = (float(vals[i, k]), (float(p_grid[i]), (float(a0), float(a1)), (float(b0), float(b1)), int(k)))
            if keep_rows:
                rows.append((float(a0), float(a1), float(b0), float(b1), float(vals.min())))
    return best, evaluated, rows


def search_bc_violation(
    p_grid: Sequence[float] | None = None,
    angle_steps: int = 8,
    refine: bool = True,
    state=PHI_PLUS,
    keep_rows: bool = False,
    jobs: int = 1,
) -> ScanResult:
    """Minimize BC_AB over ``p * qubit_box + (1 - p) * deterministic``.

    A coarse grid over Bloch-plane angles and all 16 local deterministic
    boxes is followed by a Nelder-Mead polish of the best point. ``jobs``
    splits the grid over worker processes.
    """
    p_grid = np.linspace(0.0, 1.0, 11) if p_grid is None else np.asarray(p_grid, dtype=float)
    angles = np.linspace(0.0, np.pi, angle_steps, endpoint=False)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunks = [list(angles[i::jobs]) for i in range(jobs) if len(angles[i::jobs])]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_scan_chunk, chunks, [angles] * len(chunks), [p_grid] * len(chunks),
                                [state] * len(chunks), [keep_rows] * len(chunks)))
    else:
        parts = [_scan_chunk(list(angles), angles, p_grid, state, keep_rows)]
    best = min((part[0] for part in parts), key=lambda b: b[0])
    evaluated = sum(part[1] for part in parts)
    rows = [r for part in parts for r in part[2]]
    value, (p, al, bo, k) = best
    dets = _bell_deterministic()
    if refine:
        from scipy.optimize import minimize

        det = np.asarray(dets[k].to_float().entries, dtype=float)

        def fun(z):
            pp = 1 / (1 + math.exp(-z[0]))
            Q = np.asarray(qubit_box(state, z[1:3], z[3:5]).entries, dtype=float)
            return float(_bc_from_box_arrays(pp * Q + (1 - pp) * det))

        z0 = np.array([math.log(max(p, 1e-6) / max(1 - p, 1e-6)), *al, *bo])
        res = minimize(fun, z0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        if res.fun < value:
            value = float(res.fun)
            p = 1 / (1 + math.exp(-res.x[0]))
            al, bo = tuple(res.x[1:3]), tuple(res.x[3:5])
    box = mixture([qubit_box(state, al, bo), dets[k].to_float()], [p, 1 - p])
    return ScanResult(value, float(p), tuple(map(float, al)), tuple(map(float, bo)), k, evaluated, box, rows)


def _bell_deterministic() -> list[Box]:
    return [deterministic_box(BELL_SHAPE, s) for s in deterministic_strategies(BELL_SHAPE)]
