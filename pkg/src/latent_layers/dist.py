"""Conditional probability boxes, linear functionals and the concrete protocols.

A :class:`Box` stores ``P(outcomes | settings)`` as a dense tensor indexed by
one flattened outcome per party followed by one value per setting. Entries
are :class:`~latent_layers.qfield.QField` objects in exact mode and floats
otherwise.
"""
from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import InvalidState, NormalizationError, ShapeMismatch, SupportViolation, UnknownId
from .graph import CausalScenario
from .qfield import QField, as_qfield

__all__ = [
    "Party",
    "BoxShape",
    "Box",
    "LinearFunctional",
    "BELL_SHAPE",
    "EXT_BELL_SHAPE",
    "TETRA_2LT_SHAPE",
    "deterministic_strategies",
    "deterministic_box",
    "deterministic_boxes",
    "chsh_value",
    "correlator",
    "named_box",
    "qubit_box",
    "mixture",
    "compose_2layer",
    "compose_2lt",
    "tetra_reduce",
    "opt_copy_box",
    "evaluate",
    "chsh_functional",
    "correlator_functional",
    "monogamy_functional",
    "payoff_functional",
    "constant_functional",
    "named_functional",
    "FUNCTIONAL_IDS",
    "PHI_PLUS",
    "maximize_qubit",
]

ZERO = QField(0)
ONE = QField(1)


# ---------------------------------------------------------------------------
# shapes


@dataclass(frozen=True)
class Party:
    """An outcome node; its outcome may be a tuple of named components."""

    name: str
    components: tuple[tuple[str, int], ...]
    settings: tuple[str, ...] = ()

    @classmethod
    def simple(cls, name: str, cardinality: int = 2, settings: Sequence[str] = ()) -> "Party":
        return cls(name, ((name.lower(), cardinality),), tuple(settings))

    @property
    def cardinality(self) -> int:
        return math.prod(c for _, c in self.components)

    def split(self, index: int) -> dict[str, int]:
        """Flattened outcome index -> component values (row-major)."""
        cards = [c for _, c in self.components]
        values = np.unravel_index(index, cards)
        return {n: int(v) for (n, _), v in zip(self.components, values)}

    def join(self, values: Mapping[str, int]) -> int:
        cards = [c for _, c in self.components]
        return int(np.ravel_multi_index([values[n] for n, _ in self.components], cards))


@dataclass(frozen=True)
class BoxShape:
    parties: tuple[Party, ...]
    settings: tuple[tuple[str, int], ...] = ()

    @classmethod
    def from_scenario(cls, scenario: CausalScenario) -> "BoxShape":
        parties = tuple(
            Party.simple(o, scenario.node(o).cardinality, scenario.setting_parents(o))
            for o in scenario.outcomes
        )
        settings = tuple((s, scenario.node(s).cardinality) for s in scenario.settings)
        return cls(parties, settings)

    @property
    def party_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parties)

    @property
    def setting_names(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.settings)

    @property
    def outcome_dims(self) -> tuple[int, ...]:
        return tuple(p.cardinality for p in self.parties)

    @property
    def setting_dims(self) -> tuple[int, ...]:
        return tuple(c for _, c in self.settings)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.outcome_dims + self.setting_dims

    def party(self, name: str) -> Party:
        for p in self.parties:
            if p.name == name:
                return p
        raise ShapeMismatch(f"no party {name!r} in shape {self.party_names}")

    def party_index(self, name: str) -> int:
        return self.party_names.index(self.party(name).name)

    def setting_index(self, name: str) -> int:
        try:
            return self.setting_names.index(name)
        except ValueError:
            raise ShapeMismatch(f"no setting {name!r} in shape {self.setting_names}") from None

    def outcomes(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(d) for d in self.outcome_dims))

    def contexts(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(d) for d in self.setting_dims))

    def coordinates(self) -> Iterator[tuple[tuple[int, ...], tuple[int, ...]]]:
        for s in self.contexts():
            for o in self.outcomes():
                yield (o, s)

    def local_settings(self, party: Party, context: Sequence[int]) -> tuple[int, ...]:
        return tuple(context[self.setting_index(s)] for s in party.settings)

    def to_dict(self) -> dict:
        return {
            "parties": [
                {"name": p.name, "components": [list(c) for c in p.components], "settings": list(p.settings)}
                for p in self.parties
            ],
            "settings": [list(s) for s in self.settings],
        }

    @classmethod
    def from_dict(cls, doc) -> "BoxShape":
        parties = tuple(
            Party(d["name"], tuple((n, int(c)) for n, c in d["components"]), tuple(d.get("settings", ())))
            for d in doc["parties"]
        )
        return cls(parties, tuple((n, int(c)) for n, c in doc.get("settings", ())))


BELL_SHAPE = BoxShape(
    (Party.simple("A", 2, ["X"]), Party.simple("B", 2, ["Y"])), (("X", 2), ("Y", 2))
)
EXT_BELL_SHAPE = BoxShape(
    (Party.simple("A", 2, ["X"]), Party.simple("B", 2, ["Y"]), Party.simple("C", 2, ["X", "Y"])),
    (("X", 2), ("Y", 2)),
)
TETRA_2LT_SHAPE = BoxShape(
    (
        Party("A", (("a_x", 2), ("a_o", 2))),
        Party("B", (("b_y", 2), ("b_o", 2))),
        Party("C", (("c_x", 2), ("c_y", 2), ("c_o", 2))),
        Party("D", (("d_x", 2), ("d_y", 2))),
    ),
    (),
)


# ---------------------------------------------------------------------------
# boxes


class Box:
    """An immutable conditional probability tensor."""

    __slots__ = ("shape", "entries", "exact")

    def __init__(self, shape: BoxShape, entries, exact: bool | None = None, check: bool = True):
        arr = np.asarray(entries)
        if exact is None:
            exact = arr.dtype == object
        if exact:
            arr = np.vectorize(as_qfield, otypes=[object])(arr) if arr.size else arr.astype(object)
        else:
            arr = np.asarray(
                np.vectorize(float, otypes=[float])(arr) if arr.dtype == object else arr, dtype=float
            )
        if arr.shape != shape.dims:
            raise ShapeMismatch(f"entries have shape {arr.shape}, expected {shape.dims}")
        arr.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "exact", bool(exact))
        if check:
            self.check()

    def __setattr__(self, name, value):
        raise AttributeError("Box is immutable")

    @property
    def numeric_mode(self) -> str:
        return "exact" if self.exact else "float"

    def __repr__(self):
        return f"Box({self.shape.party_names}|{self.shape.setting_names}, {self.numeric_mode})"

    def __call__(self, outcomes: Sequence[int], context: Sequence[int] = ()):
        return self.entries[tuple(outcomes) + tuple(context)]

    def context_slice(self, context: Sequence[int]) -> np.ndarray:
        k = len(self.shape.parties)
        idx = (slice(None),) * k + tuple(context)
        return self.entries[idx]

    def check(self) -> None:
        k = len(self.shape.parties)
        axes = tuple(range(k))
        if self.exact:
            for s in self.shape.contexts():
                block = self.context_slice(s)
                total = ZERO
                for v in block.flat:
                    if v.sign() < 0:
                        raise NormalizationError(f"negative entry {v} in context {s}")
                    total = total + v
                if total != 1:
                    raise NormalizationError(f"context {s} sums to {total}, not 1")
        else:
            if np.any(self.entries < -1e-12):
                raise NormalizationError("negative entry")
            sums = self.entries.sum(axis=axes) if k else self.entries
            if np.any(np.abs(np.asarray(sums) - 1.0) > 1e-12):
                raise NormalizationError(f"contexts do not sum to 1 (max deviation {np.max(np.abs(sums - 1))})")

    def to_float(self) -> "Box":
        if not self.exact:
            return self
        return Box(self.shape, np.vectorize(float, otypes=[float])(self.entries), exact=False, check=False)

    def allclose(self, other: "Box", atol: float = 1e-12) -> bool:
        if self.shape.dims != other.shape.dims:
            return False
        return bool(np.allclose(self.to_float().entries, other.to_float().entries, atol=atol, rtol=0))

    def equals_exactly(self, other: "Box") -> bool:
        if not (self.exact and other.exact) or self.shape.dims != other.shape.dims:
            return False
        return all(a == b for a, b in zip(self.entries.flat, other.entries.flat))

    def marginal(self, parties: Sequence[str]) -> "Box":
        """Marginal on ``parties``; settings are kept (caller checks no-signaling)."""
        keep = [self.shape.party_index(p) for p in parties]
        drop = tuple(i for i in range(len(self.shape.parties)) if i not in keep)
        arr = self.entries.sum(axis=drop) if drop else self.entries
        # reorder kept party axes to the requested order
        order = sorted(keep)
        perm = [order.index(i) for i in keep] + list(range(len(keep), arr.ndim))
        arr = np.transpose(arr, perm)
        shape = BoxShape(tuple(self.shape.parties[i] for i in keep), self.shape.settings)
        if self.exact:
            arr = np.vectorize(as_qfield, otypes=[object])(arr)
        return Box(shape, arr, exact=self.exact, check=False)

    # ---- serialization ---------------------------------------------
    def to_dict(self) -> dict:
        flat = [e.to_json() if self.exact else float(e) for e in self.entries.flat]
        return {"shape": self.shape.to_dict(), "mode": self.numeric_mode, "entries": flat}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc) -> "Box":
        shape = BoxShape.from_dict(doc["shape"])
        exact = doc.get("mode", "float") == "exact"
        vals = [QField.from_json(e) for e in doc["entries"]] if exact else [float(e) for e in doc["entries"]]
        arr = np.empty(len(vals), dtype=object if exact else float)
        arr[:] = vals
        return cls(shape, arr.reshape(shape.dims), exact=exact)

    @classmethod
    def from_json(cls, text: str) -> "Box":
        return cls.from_dict(json.loads(text))


def _exact_zeros(dims) -> np.ndarray:
    arr = np.empty(dims, dtype=object)
    arr.fill(ZERO)
    return arr


# ---------------------------------------------------------------------------
# deterministic strategies


def deterministic_strategies(shape: BoxShape) -> Iterator[tuple[tuple[int, ...], ...]]:
    """All local response tables, one per party, indexed by the party's local settings."""
    per_party = []
    for p in shape.parties:
        n_inputs = math.prod(shape.setting_dims[shape.setting_index(s)] for s in p.settings)
        per_party.append(list(itertools.product(range(p.cardinality), repeat=n_inputs)))
    return itertools.product(*per_party)


def _local_index(shape: BoxShape, party: Party, context) -> int:
    dims = [shape.setting_dims[shape.setting_index(s)] for s in party.settings]
    vals = shape.local_settings(party, context)
    return int(np.ravel_multi_index(vals, dims)) if dims else 0


def strategy_outcome(shape: BoxShape, strategy, context) -> tuple[int, ...]:
    return tuple(strategy[i][_local_index(shape, p, context)] for i, p in enumerate(shape.parties))


def deterministic_box(shape: BoxShape, strategy) -> Box:
    arr = _exact_zeros(shape.dims)
    for s in shape.contexts():
        arr[strategy_outcome(shape, strategy, s) + s] = ONE
    return Box(shape, arr, exact=True, check=False)


def deterministic_boxes(shape: BoxShape) -> Iterator[Box]:
    for strat in deterministic_strategies(shape):
        yield deterministic_box(shape, strat)


# ---------------------------------------------------------------------------
# correlators


def _sign_table(shape: BoxShape, parties: Sequence[str]) -> dict[tuple[int, ...], int]:
    idx = [shape.party_index(p) for p in parties]
    for p in parties:
        if shape.party(p).cardinality != 2:
            raise ShapeMismatch(f"correlators need binary outcomes; {p} is not binary")
    return {o: (-1) ** sum(o[i] for i in idx) for o in shape.outcomes()}


def correlator(box: Box, parties: Sequence[str], context: Sequence[int]):
    """``sum (-1)^(sum of outcomes of parties) P(o|context)``."""
    signs = _sign_table(box.shape, parties)
    total = ZERO if box.exact else 0.0
    for o, sg in signs.items():
        v = box(o, context)
        total = total + v if sg > 0 else total - v
    return total


def _chsh_context(shape: BoxShape, x: int, y: int, sx: str = "X", sy: str = "Y") -> tuple[int, ...]:
    ctx = [0] * len(shape.settings)
    ctx[shape.setting_index(sx)] = x
    ctx[shape.setting_index(sy)] = y
    return tuple(ctx)


def chsh_value(box: Box, parties=("A", "B"), settings=("X", "Y")):
    """``<A0B0> + <A0B1> + <A1B0> - <A1B1>`` over the named parties."""
    shape = box.shape
    for s in settings:
        if shape.setting_dims[shape.setting_index(s)] != 2:
            raise ShapeMismatch("CHSH needs binary settings")
    total = ZERO if box.exact else 0.0
    for x, y in itertools.product((0, 1), repeat=2):
        c = correlator(box, parties, _chsh_context(shape, x, y, *settings))
        total = total - c if (x and y) else total + c
    return total


# ---------------------------------------------------------------------------
# named boxes


def _pr_entry(a, b, x, y) -> QField:
    return QField(Fraction(1, 2)) if (a ^ b) == (x & y) else ZERO


def _tsirelson_entry(a, b, x, y) -> QField:
    sign = 1 if (a ^ b) == (x & y) else -1
    return QField(Fraction(1, 4), Fraction(sign, 8))


def _bell_box(fn) -> Box:
    arr = _exact_zeros(BELL_SHAPE.dims)
    for a, b, x, y in itertools.product((0, 1), repeat=4):
        arr[a, b, x, y] = fn(a, b, x, y)
    return Box(BELL_SHAPE, arr, exact=True)


_DET_RE = re.compile(r"^(?:deterministic|det)[(:]?(\d+)\)?$")


def named_box(box_id: str) -> Box:
    """``tsirelson``, ``pr``, ``uniform`` or ``deterministic(k)`` with k in 0..15."""
    if box_id == "tsirelson":
        return _bell_box(_tsirelson_entry)
    if box_id == "pr":
        return _bell_box(_pr_entry)
    if box_id == "uniform":
        return _bell_box(lambda *_: QField(Fraction(1, 4)))
    m = _DET_RE.match(box_id)
    if m:
        k = int(m.group(1))
        strategies = list(deterministic_strategies(BELL_SHAPE))
        if not 0 <= k < len(strategies):
            raise UnknownId(f"deterministic index {k} out of range 0..{len(strategies) - 1}")
        return deterministic_box(BELL_SHAPE, strategies[k])
    raise UnknownId(f"unknown box id {box_id!r}")


_PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
_PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])

PHI_PLUS = np.outer([1, 0, 0, 1], [1, 0, 0, 1]) / 2.0


def _projector(theta: float, outcome: int) -> np.ndarray:
    obs = math.cos(theta) * _PAULI_Z + math.sin(theta) * _PAULI_X
    return 0.5 * (np.eye(2) + (-1) ** outcome * obs)


def qubit_box(state, alice_angles: Sequence[float], bob_angles: Sequence[float]) -> Box:
    """Two-qubit box from projective X-Z plane measurements at the given angles."""
    rho = np.asarray(state, dtype=complex)
    if rho.shape != (4, 4):
        raise InvalidState("state must be a 4x4 density matrix")
    if not np.allclose(rho, rho.conj().T, atol=1e-9):
        raise InvalidState("state is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-9:
        raise InvalidState("state does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-9:
        raise InvalidState("state is not positive semidefinite")
    arr = np.empty(BELL_SHAPE.dims)
    for x, y in itertools.product(range(len(alice_angles)), range(len(bob_angles))):
        for a, b in itertools.product((0, 1), repeat=2):
            op = np.kron(_projector(alice_angles[x], a), _projector(bob_angles[y], b))
            arr[a, b, x, y] = np.trace(rho @ op).real
    arr = np.clip(arr, 0.0, None)
    arr /= arr.sum(axis=(0, 1), keepdims=True)
    return Box(BELL_SHAPE, arr, exact=False)


def mixture(boxes: Sequence[Box], weights: Sequence) -> Box:
    if not boxes:
        raise ValueError("empty mixture")
    dims = boxes[0].shape.dims
    if any(b.shape.dims != dims for b in boxes):
        raise ShapeMismatch("mixture components have different shapes")
    exact = all(b.exact for b in boxes) and not any(isinstance(w, float) for w in weights)
    if exact:
        arr = _exact_zeros(dims)
        for b, w in zip(boxes, weights):
            arr = arr + b.entries * as_qfield(w)
        return Box(boxes[0].shape, arr, exact=True)
    arr = sum(float(w) * b.to_float().entries for b, w in zip(boxes, weights))
    return Box(boxes[0].shape, arr, exact=False)


# ---------------------------------------------------------------------------
# composed protocols


def _require_binary_bell(inner: Box):
    if inner.shape.dims != BELL_SHAPE.dims:
        raise ShapeMismatch(f"expected a binary (A,B|X,Y) box, got {inner.shape.dims}")


def compose_2layer(inner: Box, copied: str = "B") -> Box:
    """``P(a,b,c|x,y) = inner(a,b|x,y) * [c equals the copied party's outcome]``."""
    _require_binary_bell(inner)
    if copied not in ("A", "B"):
        raise ShapeMismatch("copied party must be A or B")
    if inner.exact:
        arr = _exact_zeros(EXT_BELL_SHAPE.dims)
    else:
        arr = np.zeros(EXT_BELL_SHAPE.dims)
    for a, b, x, y in itertools.product((0, 1), repeat=4):
        c = b if copied == "B" else a
        arr[a, b, c, x, y] = inner.entries[a, b, x, y]
    return Box(EXT_BELL_SHAPE, arr, exact=inner.exact)


def compose_2lt(inner: Box) -> Box:
    """Tetrahedron protocol: uniform classical settings copied to C and D."""
    _require_binary_bell(inner)
    shape = TETRA_2LT_SHAPE
    A, B, C, D = shape.parties
    arr = _exact_zeros(shape.dims) if inner.exact else np.zeros(shape.dims)
    quarter = QField(Fraction(1, 4)) if inner.exact else 0.25
    for ax, ao, by, bo in itertools.product((0, 1), repeat=4):
        idx = (
            A.join({"a_x": ax, "a_o": ao}),
            B.join({"b_y": by, "b_o": bo}),
            C.join({"c_x": ax, "c_y": by, "c_o": bo}),
            D.join({"d_x": ax, "d_y": by}),
        )
        arr[idx] = quarter * inner.entries[ao, bo, ax, by]
    return Box(shape, arr, exact=inner.exact)


def tetra_reduce(p2lt: Box) -> Box:
    """Condition a tetrahedron box on the copied settings; yields an (A,B,C|X,Y) box.

    ``D``'s bits play the role of the settings ``(X, Y)``.
    """
    shape = p2lt.shape
    if shape.dims != TETRA_2LT_SHAPE.dims:
        raise ShapeMismatch("expected the tetrahedron composite-outcome shape")
    A, B, C, D = shape.parties
    exact = p2lt.exact
    zero = ZERO if exact else 0.0
    joint = {}
    weight = {(x, y): zero for x in (0, 1) for y in (0, 1)}
    off = zero
    for idx in itertools.product(*(range(d) for d in shape.dims)):
        v = p2lt.entries[idx]
        a, b, c, d = A.split(idx[0]), B.split(idx[1]), C.split(idx[2]), D.split(idx[3])
        x, y = d["d_x"], d["d_y"]
        on = a["a_x"] == c["c_x"] == x and b["b_y"] == c["c_y"] == y
        if not on:
            off = off + v
            continue
        key = (a["a_o"], b["b_o"], c["c_o"], x, y)
        joint[key] = joint.get(key, zero) + v
        weight[(x, y)] = weight[(x, y)] + v
    if (exact and off != 0) or (not exact and abs(off) > 1e-12):
        raise SupportViolation(f"mass {float(off):.3g} lies outside the copied-setting pattern")
    arr = _exact_zeros(EXT_BELL_SHAPE.dims) if exact else np.zeros(EXT_BELL_SHAPE.dims)
    for (ao, bo, co, x, y), v in joint.items():
        w = weight[(x, y)]
        if (exact and w == 0) or (not exact and w <= 0):
            raise SupportViolation(f"setting pair ({x},{y}) has zero probability")
        arr[ao, bo, co, x, y] = v / w
    return Box(EXT_BELL_SHAPE, arr, exact=exact)


def opt_copy_box() -> Box:
    """PR box with C copying B; C can compute b as a XOR x*y."""
    pr = named_box("pr")
    box = compose_2layer(pr)
    for a, b, x, y in itertools.product((0, 1), repeat=4):
        if pr.entries[a, b, x, y] != 0:
            assert (a ^ (x & y)) == b
    return box


# ---------------------------------------------------------------------------
# linear functionals


Coordinate = tuple[tuple[int, ...], tuple[int, ...]]


@dataclass(frozen=True)
class LinearFunctional:
    """``sum coefficient * P(outcomes|settings)``, optionally with a bound ``<= bound``."""

    shape: BoxShape
    terms: tuple[tuple[QField, Coordinate], ...]
    name: str = ""
    bound: QField | None = None
    presentation: str | None = None
    constant: QField = field(default_factory=lambda: ZERO)

    def __post_init__(self):
        for coef, (o, s) in self.terms:
            if len(o) != len(self.shape.parties) or len(s) != len(self.shape.settings):
                raise ShapeMismatch(f"coordinate {(o, s)} does not fit shape")
            for v, d in zip(o + s, self.shape.dims):
                if not 0 <= v < d:
                    raise ShapeMismatch(f"coordinate {(o, s)} out of range")

    @classmethod
    def from_dict_terms(cls, shape, coeffs: Mapping[Coordinate, object], **kw) -> "LinearFunctional":
        terms = tuple((as_qfield(c), k) for k, c in sorted(coeffs.items()) if c != 0)
        return cls(shape, terms, **kw)

    def coefficients(self) -> dict[Coordinate, QField]:
        out: dict[Coordinate, QField] = {}
        for c, k in self.terms:
            out[k] = out.get(k, ZERO) + c
        return {k: v for k, v in out.items() if v}

    def __add__(self, other: "LinearFunctional") -> "LinearFunctional":
        if self.shape != other.shape:
            raise ShapeMismatch("functionals live on different shapes")
        coeffs = self.coefficients()
        for k, v in other.coefficients().items():
            coeffs[k] = coeffs.get(k, ZERO) + v
        return LinearFunctional.from_dict_terms(
            self.shape, coeffs, constant=self.constant + other.constant
        )

    def scaled(self, factor) -> "LinearFunctional":
        f = as_qfield(factor)
        return LinearFunctional(
            self.shape,
            tuple((c * f, k) for c, k in self.terms),
            self.name,
            None if self.bound is None else self.bound * f,
            self.presentation,
            self.constant * f,
        )

    def with_bound(self, bound, name: str | None = None) -> "LinearFunctional":
        return LinearFunctional(
            self.shape, self.terms, self.name if name is None else name, as_qfield(bound),
            self.presentation, self.constant,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "shape": self.shape.to_dict(),
            "coefficients": {
                _coord_key(self.shape, k): str(v) for k, v in sorted(self.coefficients().items())
            },
            "constant": str(self.constant),
            "bound": None if self.bound is None else str(self.bound),
            "correlator_form": self.presentation,
        }

    @classmethod
    def from_dict(cls, doc) -> "LinearFunctional":
        shape = BoxShape.from_dict(doc["shape"])
        coeffs = {_parse_coord_key(shape, k): QField.parse(v) for k, v in doc["coefficients"].items()}
        bound = doc.get("bound")
        return cls.from_dict_terms(
            shape,
            coeffs,
            name=doc.get("name", ""),
            bound=None if bound is None else QField.parse(bound),
            presentation=doc.get("correlator_form"),
            constant=QField.parse(doc.get("constant", "0")),
        )


def _coord_key(shape: BoxShape, coord: Coordinate) -> str:
    o, s = coord
    left = ",".join(f"{p.name.lower()}={v}" for p, v in zip(shape.parties, o))
    right = ",".join(f"{n.lower()}={v}" for n, v in zip(shape.setting_names, s))
    return f"P({left}|{right})" if right else f"P({left})"


def _parse_coord_key(shape: BoxShape, key: str) -> Coordinate:
    m = re.match(r"^P\((.*?)(?:\|(.*))?\)$", key)
    if not m:
        raise ShapeMismatch(f"bad coordinate key {key!r}")
    outs = [int(t.split("=")[1]) for t in m.group(1).split(",") if t]
    sets = [int(t.split("=")[1]) for t in (m.group(2) or "").split(",") if t]
    return tuple(outs), tuple(sets)


def evaluate(f: LinearFunctional, box: Box):
    """``constant + sum coefficient * P(coordinate)``; exact for exact boxes."""
    if f.shape.dims != box.shape.dims:
        raise ShapeMismatch(f"functional shape {f.shape.dims} vs box shape {box.shape.dims}")
    if box.exact:
        total = f.constant
        for c, (o, s) in f.terms:
            total = total + c * box.entries[o + s]
        return total
    total = float(f.constant)
    for c, (o, s) in f.terms:
        total += float(c) * float(box.entries[o + s])
    return total


def constant_functional(shape: BoxShape, value=1) -> LinearFunctional:
    """The constant functional, written as ``value * sum_o P(o|first context)``."""
    ctx = next(iter(shape.contexts()))
    terms = tuple((as_qfield(value), (o, ctx)) for o in shape.outcomes())
    return LinearFunctional(shape, terms, name=f"constant_{value}")


def correlator_functional(
    shape: BoxShape, parties: Sequence[str], context: Mapping[str, int], coefficient=1
) -> LinearFunctional:
    ctx = [0] * len(shape.settings)
    for k, v in context.items():
        ctx[shape.setting_index(k)] = v
    ctx = tuple(ctx)
    signs = _sign_table(shape, parties)
    coef = as_qfield(coefficient)
    terms = tuple((coef if sg > 0 else -coef, (o, ctx)) for o, sg in signs.items())
    label = "".join(parties)
    return LinearFunctional(shape, terms, name=f"<{label}>{dict(context)}")


def chsh_functional(shape: BoxShape = BELL_SHAPE, parties=("A", "B"), settings=("X", "Y")) -> LinearFunctional:
    f = None
    for x, y in itertools.product((0, 1), repeat=2):
        g = correlator_functional(shape, parties, {settings[0]: x, settings[1]: y}, -1 if (x and y) else 1)
        f = g if f is None else f + g
    return LinearFunctional(f.shape, f.terms, name="chsh", presentation="<A0B0>+<A0B1>+<A1B0>-<A1B1>")


def monogamy_functional(
    shape: BoxShape = EXT_BELL_SHAPE, partner: str = "B", x: int | None = None, y: int | None = None
) -> LinearFunctional:
    """``CHSH(A,B|X,Y) + 2<partner C>``.

    With ``x``/``y`` given the correlator is taken at that setting pair;
    otherwise it is averaged over all four pairs.
    """
    f = chsh_functional(shape)
    pairs = [(x, y)] if x is not None and y is not None else list(itertools.product((0, 1), repeat=2))
    weight = Fraction(2, len(pairs))
    for xx, yy in pairs:
        f = f + correlator_functional(shape, (partner, "C"), {"X": xx, "Y": yy}, weight)
    p = partner
    if len(pairs) == 1:
        sub = f"{xx}" if p == "A" else f"{yy}"
        name = f"monogamy_{p.lower()}c{xx}{yy}"
        pres = f"CHSH(A,B|X,Y) + 2<{p}{sub}C{xx}{yy}>"
    else:
        name = f"monogamy_{p.lower()}c"
        pres = f"CHSH(A,B|X,Y) + 2<{p}_{'X' if p == 'A' else 'Y'}C_XY> (averaged over X,Y)"
    return LinearFunctional(f.shape, f.terms, name=name, presentation=pres)


def payoff_functional(shape: BoxShape = BELL_SHAPE) -> LinearFunctional:
    """``CHSH + 2<A0B0>``."""
    f = chsh_functional(shape) + correlator_functional(shape, ("A", "B"), {"X": 0, "Y": 0}, 2)
    return LinearFunctional(f.shape, f.terms, name="payoff_chsh_a0b0", presentation="CHSH(A,B|X,Y) + 2<A0B0>")


FUNCTIONAL_IDS = (
    ["chsh", "monogamy_bc", "monogamy_ac", "payoff_chsh_a0b0"]
    + [f"monogamy_bc{x}{y}" for x in (0, 1) for y in (0, 1)]
    + [f"monogamy_ac{x}{y}" for x in (0, 1) for y in (0, 1)]
)


def named_functional(fid: str, shape: BoxShape | None = None) -> LinearFunctional:
    if fid == "chsh":
        return chsh_functional(shape or BELL_SHAPE)
    if fid == "payoff_chsh_a0b0":
        return payoff_functional(shape or BELL_SHAPE)
    m = re.match(r"^monogamy_(bc|ac)(\d\d)?$", fid)
    if m:
        partner = "B" if m.group(1) == "bc" else "A"
        if m.group(2):
            return monogamy_functional(shape or EXT_BELL_SHAPE, partner, int(m.group(2)[0]), int(m.group(2)[1]))
        return monogamy_functional(shape or EXT_BELL_SHAPE, partner)
    raise UnknownId(f"unknown functional id {fid!r}; known: {FUNCTIONAL_IDS}")


def functional_library(shape: BoxShape = EXT_BELL_SHAPE) -> list[dict]:
    """Named witnesses with their classical bounds, for export."""
    out = []
    for fid in ["monogamy_bc", "monogamy_ac"] + [f"monogamy_bc{x}{y}" for x in (0, 1) for y in (0, 1)]:
        out.append(named_functional(fid, shape).with_bound(4).to_dict())
    out.append(chsh_functional(shape).with_bound(2).to_dict())
    return out


def maximize_qubit(
    f: LinearFunctional, state=PHI_PLUS, steps: int = 8, polish: bool = True
) -> tuple[float, tuple[float, float], tuple[float, float]]:
    """Largest value of ``f`` over Bloch-plane measurement angles on ``state``.

    A uniform grid over the four angles is polished by Nelder-Mead.
    Returns ``(value, alice_angles, bob_angles)``.
    """
    if f.shape.dims != BELL_SHAPE.dims:
        raise ShapeMismatch("qubit boxes live on the two-party Bell shape")
    coeffs = np.zeros(BELL_SHAPE.dims)
    for (o, s), c in f.coefficients().items():
        coeffs[o + s] += float(c)
    const = float(f.constant)

    def value(z) -> float:
        box = qubit_box(state, z[:2], z[2:])
        return float((coeffs * np.asarray(box.entries, dtype=float)).sum()) + const

    grid = np.linspace(0.0, 2 * np.pi, steps, endpoint=False)
    best = max(itertools.product(grid, repeat=4), key=value)
    z = np.array(best, dtype=float)
    v = value(z)
    if polish:
        from scipy.optimize import minimize

        res = minimize(lambda t: -value(t), z, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
        if -res.fun > v:
            z, v = res.x, -float(res.fun)
    return v, (float(z[0]), float(z[1])), (float(z[2]), float(z[3]))
