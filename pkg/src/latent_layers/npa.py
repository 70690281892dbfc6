"""Moment-matrix relaxations with partial commutation between parties.

Each party contributes one projector per setting tuple and non-last outcome
(the last outcome is eliminated by completeness). Which cross-party pairs
commute is read from a small hand-checked registry: two parties linked by an
intermediate latent commute only when the settings they share agree.
"""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .dist import BoxShape, LinearFunctional, Party
from .errors import CoordinateNotExpressible, UnsupportedScenario, WordTooLong
from .graph import CausalScenario
from .qfield import QField
from .scenarios import get_scenario

__all__ = [
    "OperatorSymbol",
    "Algebra",
    "MomentMatrix",
    "ZERO_WORD",
    "LINKED_PAIRS",
    "build_algebra",
    "canonicalize",
    "build_moment_matrix",
    "assemble_objective",
    "to_sdp",
    "bound",
    "bound_escalating",
]

MAX_WORD = 8

# Party pairs joined by an intermediate latent, per registered scenario.
LINKED_PAIRS: dict[str, tuple[frozenset, ...]] = {
    "bell": (),
    "ext_bell_exo": (),
    "ext_bell_ac": (frozenset("AC"),),
    "ext_bell_bc": (frozenset("BC"),),
    "ext_bell_2il": (frozenset("AC"), frozenset("BC")),
}


@dataclass(frozen=True, order=True)
class OperatorSymbol:
    party: str
    settings: tuple[tuple[str, int], ...]
    outcome: int = 0

    @property
    def label(self) -> str:
        return f"{self.party}{''.join(str(v) for _, v in self.settings)}"

    def __str__(self) -> str:
        return self.label if self.outcome == 0 else f"{self.label}|{self.outcome}"


ZERO_WORD = None  # canonical form of a word that vanishes


class Algebra:
    """Alphabet plus a symmetric commutation predicate."""

    def __init__(self, shape: BoxShape, symbols: Sequence[OperatorSymbol], linked, scenario_id: str = ""):
        self.shape = shape
        self.symbols = tuple(symbols)
        self.linked = tuple(linked)
        self.scenario_id = scenario_id
        self.position = {s: i for i, s in enumerate(self.symbols)}
        n = len(self.symbols)
        self.commute = np.zeros((n, n), dtype=bool)
        self.orthogonal = np.zeros((n, n), dtype=bool)
        for i, a in enumerate(self.symbols):
            for j, b in enumerate(self.symbols):
                self.commute[i, j] = self._commutes(a, b)
                self.orthogonal[i, j] = (
                    a.party == b.party and a.settings == b.settings and a.outcome != b.outcome
                )
        self._canon = lru_cache(maxsize=None)(self._canonicalize)

    def _commutes(self, a: OperatorSymbol, b: OperatorSymbol) -> bool:
        if a.party == b.party:
            # projectors of one measurement commute; different settings do not
            return a.settings == b.settings
        if frozenset((a.party, b.party)) in self.linked:
            sa, sb = dict(a.settings), dict(b.settings)
            return all(sa[k] == sb[k] for k in sa.keys() & sb.keys())
        return True

    def commutes(self, a: OperatorSymbol, b: OperatorSymbol) -> bool:
        return bool(self.commute[self.position[a], self.position[b]])

    def symbol(self, party: str, context: Mapping[str, int], outcome: int = 0) -> OperatorSymbol:
        p = self.shape.party(party)
        return OperatorSymbol(party, tuple((s, int(context[s])) for s in p.settings), outcome)

    # words are tuples of symbol indices internally
    def _canonicalize(self, word: tuple[int, ...]):
        best = word
        seen = {word}
        todo = deque([word])
        while todo:
            w = todo.popleft()
            for i in range(len(w) - 1):
                a, b = w[i], w[i + 1]
                if a == b:
                    nxt = w[:i] + w[i + 1 :]
                elif self.orthogonal[a, b]:
                    return ZERO_WORD
                elif self.commute[a, b]:
                    nxt = w[:i] + (b, a) + w[i + 2 :]
                else:
                    continue
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
                    if (len(nxt), nxt) < (len(best), best):
                        best = nxt
        return best

    def canonical(self, word: Sequence[int]):
        return self._canon(tuple(word))

    def moment_key(self, word: Sequence[int]):
        """Shared key of a word and its adjoint (real-moment convention)."""
        c = self.canonical(word)
        if c is ZERO_WORD:
            return ZERO_WORD
        d = self.canonical(c[::-1])
        return min(c, d, key=lambda w: (len(w), w))

    def word_str(self, word) -> str:
        if word is ZERO_WORD:
            return "0"
        return " ".join(str(self.symbols[i]) for i in word) or "1"


def _scenario_id(scenario) -> str:
    if isinstance(scenario, str):
        if scenario not in LINKED_PAIRS:
            raise UnsupportedScenario(
                f"no commutation table for {scenario!r}; encodable: {list(LINKED_PAIRS)}"
            )
        return scenario
    for sid in LINKED_PAIRS:
        if get_scenario(sid) == scenario:
            return sid
    raise UnsupportedScenario(
        f"scenario is not one of the encodable registry entries {list(LINKED_PAIRS)}"
    )


def observable_shape(scenario: CausalScenario) -> BoxShape:
    """Outcome parties with every setting among their ancestors."""
    settings = scenario.settings
    parties = []
    for o in scenario.outcomes:
        anc = scenario.ancestors([o])
        parties.append(Party.simple(o, scenario.node(o).cardinality, tuple(s for s in settings if s in anc)))
    return BoxShape(tuple(parties), tuple((s, scenario.node(s).cardinality) for s in settings))


def build_algebra(scenario: CausalScenario | str) -> Algebra:
    sid = _scenario_id(scenario)
    s = get_scenario(sid) if isinstance(scenario, str) else scenario
    shape = observable_shape(s)
    symbols = []
    for p in shape.parties:
        dims = [dict(shape.settings)[n] for n in p.settings]
        for vals in itertools.product(*(range(d) for d in dims)):
            for out in range(p.cardinality - 1):
                symbols.append(OperatorSymbol(p.name, tuple(zip(p.settings, vals)), out))
    return Algebra(shape, symbols, LINKED_PAIRS[sid], sid)


def canonicalize(word: Sequence[OperatorSymbol], algebra: Algebra):
    """Normal form of a symbol word: a tuple of symbols, or ``None`` for zero."""
    if len(word) > MAX_WORD:
        raise WordTooLong(f"word of length {len(word)} exceeds {MAX_WORD}")
    c = algebra.canonical(tuple(algebra.position[s] for s in word))
    if c is ZERO_WORD:
        return ZERO_WORD
    return tuple(algebra.symbols[i] for i in c)


@dataclass
class MomentMatrix:
    algebra: Algebra
    level: int
    index: list[tuple[int, ...]]
    entries: np.ndarray  # variable id per cell; -1 for a pinned zero
    variables: list[tuple[int, ...]]  # variable id -> representative word; id 0 is the unit

    @property
    def size(self) -> int:
        return len(self.index)

    def variable_of(self, word) -> int | None:
        key = self.algebra.moment_key(word)
        if key is ZERO_WORD:
            return -1
        return self._lookup.get(key)

    def __post_init__(self):
        self._lookup = {w: i for i, w in enumerate(self.variables)}

    def to_dict(self) -> dict:
        a = self.algebra
        return {
            "scenario": a.scenario_id,
            "level": self.level,
            "index_words": [a.word_str(w) for w in self.index],
            "variables": [a.word_str(w) for w in self.variables],
            "entry_var_ids": self.entries.tolist(),
        }


def build_moment_matrix(algebra: Algebra, level: int) -> MomentMatrix:
    if level not in (1, 2, 3):
        raise ValueError("level must be 1, 2 or 3")
    n = len(algebra.symbols)
    index: list[tuple[int, ...]] = []
    seen = set()
    for length in range(level + 1):
        for w in itertools.product(range(n), repeat=length):
            c = algebra.canonical(w)
            if c is ZERO_WORD or c in seen:
                continue
            seen.add(c)
            index.append(c)
    index.sort(key=lambda w: (len(w), w))
    variables: list[tuple[int, ...]] = [()]
    lookup = {(): 0}
    m = len(index)
    entries = np.empty((m, m), dtype=np.int64)
    for i in range(m):
        left = index[i][::-1]
        for j in range(i, m):
            key = algebra.moment_key(left + index[j])
            if key is ZERO_WORD:
                vid = -1
            else:
                vid = lookup.get(key)
                if vid is None:
                    vid = lookup[key] = len(variables)
                    variables.append(key)
            entries[i, j] = entries[j, i] = vid
    return MomentMatrix(algebra, level, index, entries, variables)


def _coordinate_moments(algebra: Algebra, outcomes, context) -> dict[tuple[int, ...], int]:
    """Expand ``P(outcomes|context)`` into projector-product words."""
    shape = algebra.shape
    ctx = dict(zip(shape.setting_names, context))
    factors = []
    for p, o in zip(shape.parties, outcomes):
        if o < p.cardinality - 1:
            factors.append([(algebra.position[algebra.symbol(p.name, ctx, o)], 1)])
        else:
            # completeness: last projector = 1 - sum of the others
            opts = [(None, 1)]
            for k in range(p.cardinality - 1):
                opts.append((algebra.position[algebra.symbol(p.name, ctx, k)], -1))
            factors.append(opts)
    out: dict[tuple[int, ...], int] = {}
    for combo in itertools.product(*factors):
        word = tuple(s for s, _ in combo if s is not None)
        sign = 1
        for _, sg in combo:
            sign *= sg
        out[word] = out.get(word, 0) + sign
    return out


@dataclass
class Objective:
    coefficients: dict[int, float]  # variable id -> coefficient (id 0 is the constant)
    words: dict[str, float]

    def value(self, y: np.ndarray) -> float:
        return float(sum(c * y[v] for v, c in self.coefficients.items()))


def assemble_objective(f: LinearFunctional, matrix: MomentMatrix) -> Objective:
    algebra = matrix.algebra
    if f.shape.dims != algebra.shape.dims:
        raise CoordinateNotExpressible("functional shape does not match the algebra's parties and settings")
    acc: dict[tuple[int, ...], float] = {}
    for (o, ctx), c in f.coefficients().items():
        cf = float(c)
        for w, sg in _coordinate_moments(algebra, o, ctx).items():
            key = algebra.moment_key(w)
            if key is ZERO_WORD:
                continue
            acc[key] = acc.get(key, 0.0) + sg * cf
    coeffs: dict[int, float] = {}
    const = float(f.constant)
    if const:
        coeffs[0] = const
    words = {}
    for key, c in acc.items():
        if abs(c) < 1e-14:
            continue
        vid = matrix._lookup.get(key)
        if vid is None:
            raise CoordinateNotExpressible(
                f"moment <{algebra.word_str(key)}> is not in the level-{matrix.level} matrix; raise the level"
            )
        coeffs[vid] = coeffs.get(vid, 0.0) + c
        words[algebra.word_str(key)] = c
    return Objective(coeffs, words)


def to_sdp(matrix: MomentMatrix, objective: Objective):
    """Encode as ``maximize c.y + c0`` over ``M(y) = A0 + sum y_k A_k >= 0``."""
    from .sdp import SdpProblem

    nvar = len(matrix.variables) - 1
    c = np.zeros(nvar)
    for vid, coef in objective.coefficients.items():
        if vid > 0:
            c[vid - 1] += coef
    return SdpProblem(matrix.entries - 1, c, objective.coefficients.get(0, 0.0))


@dataclass
class BoundResult:
    value: float
    level: int
    status: str
    size: int
    n_variables: int
    solution: object = None
    history: list | None = None

    def to_dict(self) -> dict:
        out = {
            "value": self.value,
            "level": self.level,
            "status": self.status,
            "matrix_size": self.size,
            "n_variables": self.n_variables,
        }
        if self.solution is not None:
            out["residuals"] = self.solution.residuals()
        if self.history is not None:
            out["history"] = self.history
        return out


def bound(scenario, f: LinearFunctional, level: int = 1, tol: float = 1e-8, max_iter: int = 200000) -> BoundResult:
    """Upper bound on ``f`` over quantum models of the scenario."""
    from .sdp import solve

    algebra = scenario if isinstance(scenario, Algebra) else build_algebra(scenario)
    mm = build_moment_matrix(algebra, level)
    obj = assemble_objective(f, mm)
    sol = solve(to_sdp(mm, obj), tol=tol, max_iter=max_iter)
    return BoundResult(sol.value, level, sol.status, mm.size, len(mm.variables) - 1, sol)


def bound_escalating(
    scenario, f: LinearFunctional, agree: float = 1e-4, max_level: int = 3, tol: float = 1e-8, max_iter: int = 200000
) -> BoundResult:
    """Raise the level until two consecutive values agree within ``agree``.

    Levels whose matrix cannot express ``f`` are skipped.
    """
    algebra = scenario if isinstance(scenario, Algebra) else build_algebra(scenario)
    history = []
    prev = None
    last = None
    for level in range(1, max_level + 1):
        try:
            res = bound(algebra, f, level, tol, max_iter)
        except CoordinateNotExpressible:
            history.append({"level": level, "value": None})
            continue
        history.append({"level": level, "value": res.value})
        last = res
        if prev is not None and abs(prev.value - res.value) <= agree:
            res.history = history
            return res
        prev = res
    last.history = history
    last.status = "not-stabilized"
    return last
