"""Exact feasibility LPs for interrupted scenarios and Farkas witness extraction.

Rows are ``sum_j A[i, j] Q_j = b_i`` with rational ``A`` and right-hand
sides in Q(sqrt 2); all variables are nonnegative. Because ``A`` is rational
the simplex tableau body stays rational and only the right-hand-side column
lives in the quadratic field.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .dist import Box, BoxShape, LinearFunctional, deterministic_strategies, strategy_outcome
from .errors import CertificateInvalid, FloatTargetRejected, ShapeMismatch
from .graph import CausalScenario, nosignaling_constraints
from .qfield import QField, as_qfield

try:  # GMP rationals are an order of magnitude faster than Fraction
    from gmpy2 import mpq as _Q
except ImportError:  # pragma: no cover
    _Q = Fraction

__all__ = [
    "Row",
    "LinearProgram",
    "FeasibilityResult",
    "assemble",
    "solve",
    "extract_witness",
    "classical_bound",
    "verify_feasible",
    "verify_certificate",
    "correlator_form",
    "correlator_terms",
    "certificate_to_dict",
]

ZERO = QField(0)


@dataclass(frozen=True)
class Row:
    coeffs: Mapping[int, Fraction]
    rhs: QField
    kind: str  # "normalization" | "nosignaling" | "compatibility"
    detail: str = ""
    # target coordinate pinned by a compatibility row
    coordinate: tuple | None = None


@dataclass
class LinearProgram:
    shape: BoxShape
    rows: list[Row]
    target_shape: BoxShape | None = None

    @property
    def n_vars(self) -> int:
        return math.prod(self.shape.dims)

    def variable(self, index: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        idx = np.unravel_index(index, self.shape.dims)
        k = len(self.shape.parties)
        return tuple(int(i) for i in idx[:k]), tuple(int(i) for i in idx[k:])

    def index(self, outcomes, context) -> int:
        return int(np.ravel_multi_index(tuple(outcomes) + tuple(context), self.shape.dims))

    def dense(self) -> tuple[list[list[Fraction]], list[QField]]:
        n = self.n_vars
        A = []
        for r in self.rows:
            row = [Fraction(0)] * n
            for j, v in r.coeffs.items():
                row[j] = Fraction(v)
            A.append(row)
        return A, [r.rhs for r in self.rows]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.kind] = out.get(r.kind, 0) + 1
        return out


@dataclass
class FeasibilityResult:
    feasible: bool
    assignment: list[QField] | None = None
    certificate: list[Fraction] | None = None
    pivots: list[tuple[int, int]] = field(default_factory=list)

    @property
    def status(self) -> str:
        return "Feasible" if self.feasible else "Infeasible"


# ---------------------------------------------------------------------------
# assembly


def assemble(
    interrupted: CausalScenario, target: Box | None, merge_map: Mapping[str, str] | None = None
) -> LinearProgram:
    """Normalization, no-signaling and compatibility rows for ``Q(outcomes|settings)``.

    ``merge_map`` maps each setting copy of the interrupted scenario to the
    original setting it equals in the compatibility rows; an empty map gives
    no compatibility rows.
    """
    merge_map = dict(merge_map or {})
    shape = BoxShape.from_scenario(interrupted)
    lp = LinearProgram(shape, [], target.shape if target is not None else None)
    k = len(shape.parties)
    outcomes = list(shape.outcomes())
    contexts = list(shape.contexts())

    for ctx in contexts:
        coeffs = {lp.index(o, ctx): Fraction(1) for o in outcomes}
        lp.rows.append(Row(coeffs, QField(1), "normalization", f"context {ctx}"))

    for con in nosignaling_constraints(interrupted):
        (s,) = con.free_settings
        si = shape.setting_index(s)
        out_idx = [shape.party_index(p) for p in sorted(con.outputs, key=shape.party_names.index)]
        for ctx in contexts:
            if ctx[si] == 0:
                continue
            base = list(ctx)
            base[si] = 0
            base = tuple(base)
            for sub in itertools.product(*(range(shape.parties[i].cardinality) for i in out_idx)):
                coeffs: dict[int, Fraction] = {}
                for o in outcomes:
                    if tuple(o[i] for i in out_idx) != sub:
                        continue
                    coeffs[lp.index(o, ctx)] = coeffs.get(lp.index(o, ctx), 0) + Fraction(1)
                    coeffs[lp.index(o, base)] = coeffs.get(lp.index(o, base), 0) - Fraction(1)
                lp.rows.append(Row(coeffs, ZERO, "nosignaling", f"{con} at {ctx} outcomes {sub}"))

    if merge_map and target is not None:
        if not target.exact:
            raise FloatTargetRejected("compatibility rows need an exact target box")
        ts = target.shape
        if [(p.name, p.cardinality) for p in ts.parties] != [(p.name, p.cardinality) for p in shape.parties]:
            raise ShapeMismatch("target parties do not match the interrupted scenario's outcomes")
        for name in shape.setting_names:
            if merge_map.get(name, name) not in ts.setting_names:
                raise ShapeMismatch(f"setting {name} has no counterpart in the target")
        for tctx in ts.contexts():
            ictx = tuple(tctx[ts.setting_index(merge_map.get(n, n))] for n in shape.setting_names)
            for o in outcomes:
                lp.rows.append(
                    Row(
                        {lp.index(o, ictx): Fraction(1)},
                        as_qfield(target.entries[tuple(o) + tuple(tctx)]),
                        "compatibility",
                        f"Q{o}|{ictx} = P{o}|{tctx}",
                        (tuple(o), tuple(tctx)),
                    )
                )
    elif target is not None and not target.exact and merge_map:
        raise FloatTargetRejected("compatibility rows need an exact target box")
    return lp


# ---------------------------------------------------------------------------
# presolve


def _independent_rows(A: list[list[Fraction]]) -> list[int]:
    """Indices of a maximal set of linearly independent rows (first-come order).

    Float QR selects candidates; the exact solve is re-verified against every
    original row afterwards, so a misjudged rank can only cost a re-solve.
    """
    M = np.array([[float(v) for v in row] for row in A])
    if M.size == 0:
        return []
    keep: list[int] = []
    basis = np.zeros((0, M.shape[1]))
    for i, row in enumerate(M):
        r = row.copy()
        if basis.shape[0]:
            r -= basis.T @ (basis @ r)
        nrm = np.linalg.norm(r)
        if nrm > 1e-9 * max(1.0, np.linalg.norm(row)):
            keep.append(i)
            basis = np.vstack([basis, r / nrm])
    return keep


# ---------------------------------------------------------------------------
# simplex


def _to_fraction(q) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


def _qsign(a, b) -> int:
    """Sign of ``a + b sqrt2`` for rationals ``a, b``."""
    sa = (a > 0) - (a < 0)
    sb = (b > 0) - (b < 0)
    if sb == 0:
        return sa
    if sa == 0 or sa == sb:
        return sb
    return sa if a * a > 2 * b * b else sb


def _phase1(A: list[list[Fraction]], b: list[QField]):
    """Bland-rule phase 1 on ``A x = b, x >= 0``.

    Returns ``(feasible, x, y, pivots)`` where ``y`` is a Farkas vector
    (``A^T y >= 0``, ``b.y < 0``) when infeasible. The right-hand side is
    carried as two rational columns (rational and sqrt2 parts), so every
    row operation is rational and runs on ``_Q``.
    """
    m = len(A)
    n = len(A[0]) if m else 0
    sign = [(-1 if bi.sign() < 0 else 1) for bi in b]
    zero, one = _Q(0), _Q(1)
    width = n + m
    # tableau rows: original columns, one artificial per row, then rhs parts
    T = []
    for i in range(m):
        s = sign[i]
        row = [_Q(v * s) for v in A[i]] + [zero] * m + [_Q(b[i].a * s), _Q(b[i].b * s)]
        row[n + i] = one
        T.append(row)
    ra, rb = width, width + 1
    basis = [n + i for i in range(m)]
    # reduced costs (and objective parts) for minimizing the sum of artificials
    d = [zero] * (width + 2)
    for row in T:
        for j in range(n):
            if row[j]:
                d[j] -= row[j]
        d[ra] -= row[ra]
        d[rb] -= row[rb]
    pivots = []
    while True:
        enter = next((j for j in range(width) if d[j] < 0), None)
        if enter is None:
            break
        best = None
        for i in range(m):
            a = T[i][enter]
            if a > 0:
                pa, pb = T[i][ra] / a, T[i][rb] / a
                if best is None:
                    best = (pa, pb, i)
                    continue
                c = _qsign(pa - best[0], pb - best[1])
                if c < 0 or (c == 0 and basis[i] < basis[best[2]]):
                    best = (pa, pb, i)
        if best is None:
            # unbounded direction cannot occur in phase 1 (objective bounded below)
            raise RuntimeError("phase-1 simplex found an unbounded ray")
        r = best[2]
        pivots.append((r, enter))
        prow = T[r]
        piv = prow[enter]
        if piv != 1:
            inv = 1 / piv
            prow = [v * inv if v else v for v in prow]
            T[r] = prow
        nz = [j for j in range(width + 2) if prow[j]]
        for i in range(m):
            if i == r:
                continue
            row = T[i]
            f = row[enter]
            if not f:
                continue
            for j in nz:
                row[j] -= f * prow[j]
        f = d[enter]
        for j in nz:
            d[j] -= f * prow[j]
        basis[r] = enter
    # d[ra], d[rb] hold minus the phase-1 objective
    if _qsign(d[ra], d[rb]) < 0:
        # artificial reduced costs are 1 - pi_i
        y = [_to_fraction(-(1 - d[n + i]) * sign[i]) for i in range(m)]
        return False, None, y, pivots
    x = [ZERO] * n
    for i, j in enumerate(basis):
        if j < n:
            x[j] = QField(_to_fraction(T[i][ra]), _to_fraction(T[i][rb]))
    return True, x, None, pivots


def verify_feasible(lp: LinearProgram, x: Sequence[QField]) -> bool:
    if any(v.sign() < 0 for v in x):
        return False
    for r in lp.rows:
        total = ZERO
        for j, c in r.coeffs.items():
            if c:
                total = total + x[j] * c
        if total != r.rhs:
            return False
    return True


def combine_certificate(lp: LinearProgram, y: Sequence[Fraction]) -> tuple[dict[int, Fraction], QField]:
    """``(A^T y, b . y)`` computed exactly."""
    col: dict[int, Fraction] = {}
    rhs = ZERO
    for r, yi in zip(lp.rows, y):
        if not yi:
            continue
        for j, c in r.coeffs.items():
            col[j] = col.get(j, Fraction(0)) + c * yi
        rhs = rhs + r.rhs * yi
    return col, rhs


def verify_certificate(lp: LinearProgram, y: Sequence[Fraction]) -> bool:
    """True iff ``A^T y >= 0`` coefficientwise and ``b . y < 0``."""
    if len(y) != len(lp.rows):
        return False
    col, rhs = combine_certificate(lp, y)
    return all(v >= 0 for v in col.values()) and rhs.sign() < 0


def solve(lp: LinearProgram) -> FeasibilityResult:
    """Decide feasibility exactly; returns a point or a verified Farkas vector."""
    A, b = lp.dense()
    keep = _independent_rows(A)
    for rows in (keep, list(range(len(A)))):
        feasible, x, y, pivots = _phase1([A[i] for i in rows], [b[i] for i in rows])
        if feasible:
            if verify_feasible(lp, x):
                return FeasibilityResult(True, assignment=x, pivots=pivots)
            continue  # dropped a row that was not redundant after all
        full = [Fraction(0)] * len(A)
        for i, v in zip(rows, y):
            full[i] = v
        if not verify_certificate(lp, full):
            raise CertificateInvalid("phase-1 duals do not form a Farkas certificate")
        return FeasibilityResult(False, certificate=full, pivots=pivots)
    raise CertificateInvalid("feasible point failed exact verification on the full row set")


# ---------------------------------------------------------------------------
# witnesses


def _normalize_integer(coeffs: dict, bound: Fraction) -> tuple[dict, Fraction]:
    vals = [v for v in coeffs.values() if v] + ([bound] if bound else [])
    if not vals:
        return coeffs, bound
    lcm = 1
    for v in vals:
        lcm = lcm * v.denominator // math.gcd(lcm, v.denominator)
    ints = [int(v * lcm) for v in vals]
    g = 0
    for v in ints:
        g = math.gcd(g, abs(v))
    scale = Fraction(lcm, g)
    return {k: v * scale for k, v in coeffs.items()}, bound * scale


def extract_witness(result: FeasibilityResult, lp: LinearProgram) -> LinearFunctional:
    """Project a Farkas certificate onto the compatibility rows.

    The result reads ``sum coef * P(coordinate) <= bound`` and holds for
    every target admitting a solution of the no-signaling system.
    """
    if result.feasible or result.certificate is None:
        raise CertificateInvalid("no infeasibility certificate to extract from")
    y = result.certificate
    if not verify_certificate(lp, y):
        raise CertificateInvalid("certificate fails exact verification")
    if lp.target_shape is None:
        raise CertificateInvalid("LP has no compatibility rows")
    coeffs: dict = {}
    bound = Fraction(0)
    for r, yi in zip(lp.rows, y):
        if not yi:
            continue
        if r.kind == "compatibility":
            coeffs[r.coordinate] = coeffs.get(r.coordinate, Fraction(0)) - yi
        elif r.kind == "normalization":
            if not r.rhs.is_rational():
                raise CertificateInvalid("normalization rows must have rational rhs")
            bound += yi * r.rhs.a
        elif r.rhs:
            raise CertificateInvalid("no-signaling rows must have zero rhs")
    coeffs, bound = _normalize_integer(coeffs, bound)
    shape = lp.target_shape
    f = LinearFunctional.from_dict_terms(shape, coeffs, name="farkas_witness", bound=QField(bound))
    pres = correlator_form(f) if all(p.cardinality == 2 for p in shape.parties) else None
    return LinearFunctional(f.shape, f.terms, f.name, f.bound, pres)


def correlator_terms(f: LinearFunctional) -> tuple[dict[tuple, Fraction], Fraction]:
    """Coefficients of a binary-outcome functional in the correlator basis.

    Keys are tuples of ``(party, local settings)``; correlators of the same
    parties at the same local settings are merged, which is exact on
    no-signaling boxes. Returns ``(terms, constant)``.
    """
    shape = f.shape
    k = len(shape.parties)
    if any(p.cardinality != 2 for p in shape.parties):
        raise ShapeMismatch("correlator form needs binary outcomes")
    acc: dict[tuple, Fraction] = {}
    norm = Fraction(1, 2**k)
    for (o, ctx), c in f.coefficients().items():
        if not c.is_rational():
            raise ShapeMismatch("correlator form needs rational coefficients")
        for r in range(k + 1):
            for subset in itertools.combinations(range(k), r):
                sgn = (-1) ** sum(o[i] for i in subset)
                label = tuple(
                    (shape.parties[i].name, shape.local_settings(shape.parties[i], ctx)) for i in subset
                )
                acc[label] = acc.get(label, Fraction(0)) + sgn * c.a * norm
    const = acc.pop((), Fraction(0))
    if f.constant.is_rational():
        const += f.constant.a
    return {key: v for key, v in acc.items() if v}, const


def correlator_form(f: LinearFunctional) -> str:
    """Integer-scaled correlator presentation, constant moved to the right."""
    try:
        terms, const = correlator_terms(f)
    except ShapeMismatch:
        return ""
    rhs = -const
    if f.bound is not None:
        if not f.bound.is_rational():
            return ""
        rhs += f.bound.a
    terms, rhs = _normalize_integer(dict(terms), rhs)
    parts = []
    for key, v in sorted(terms.items(), key=lambda kv: (len(kv[0]), kv[0])):
        label = "".join(f"{p}{''.join(map(str, s))}" for p, s in key)
        mag = "" if abs(v) == 1 else str(abs(v))
        parts.append(("-" if v < 0 else "+", f"{mag}<{label}>"))
    text = " ".join(f"{sg} {t}" for sg, t in parts)
    if parts and parts[0][0] == "+":
        text = text[2:]
    if f.bound is not None:
        text += f" <= {rhs}"
    return text


def classical_bound(f: LinearFunctional, shape: BoxShape | None = None) -> QField:
    """Maximum of ``f`` over all local deterministic strategies."""
    shape = shape or f.shape
    if shape.dims != f.shape.dims:
        raise ShapeMismatch("functional does not live on this shape")
    coeffs = f.coefficients()
    by_ctx: dict[tuple, dict] = {}
    for (o, s), c in coeffs.items():
        by_ctx.setdefault(s, {})[o] = c
    best = None
    for strat in deterministic_strategies(shape):
        total = f.constant
        for s, terms in by_ctx.items():
            c = terms.get(strategy_outcome(shape, strat, s))
            if c is not None:
                total = total + c
        if best is None or total > best:
            best = total
    return best


def certificate_to_dict(lp: LinearProgram, result: FeasibilityResult) -> dict:
    """Audit export: nonzero multipliers with their row provenance."""
    rows = []
    for r, yi in zip(lp.rows, result.certificate or []):
        if yi:
            rows.append({"multiplier": str(yi), "kind": r.kind, "detail": r.detail, "rhs": str(r.rhs)})
    return {"status": result.status, "rows": rows}


def witness_to_json(f: LinearFunctional, **kw) -> str:
    return json.dumps(f.to_dict(), **kw)
