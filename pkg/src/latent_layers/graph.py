"""Causal scenarios as DAGs of observed and latent nodes, plus graph transforms.

Every transform is a pure function returning a new :class:`CausalScenario`;
scenarios are immutable and hashable.
"""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import (
    CycleDetected,
    DuplicateName,
    FanoutDetected,
    InconsistentWiring,
    InvalidPartition,
    NotAnIntermediateLatent,
    NotASetting,
    ObservedWithoutCardinality,
    UnknownNode,
)

__all__ = [
    "NodeKind",
    "Node",
    "CausalScenario",
    "Classification",
    "IndependenceConstraint",
    "InflationSpec",
    "InflationResult",
    "CLASSICAL_ONLY_FLAG",
    "validate",
    "exogenize",
    "exogenization_safe",
    "interrupt",
    "merge_copies",
    "d_separated",
    "nosignaling_constraints",
    "reduce",
    "inflate",
    "correlation_scenario",
    "is_isomorphic",
]

CLASSICAL_ONLY_FLAG = "classically-equivalent-only"


class NodeKind(str, Enum):
    OBSERVED = "observed"
    LATENT_CLASSICAL = "latent_classical"
    LATENT_QUANTUM = "latent_quantum"

    @property
    def is_latent(self) -> bool:
        return self is not NodeKind.OBSERVED


@dataclass(frozen=True)
class Node:
    name: str
    kind: NodeKind
    cardinality: int | None = None
    # name of the node this one was copied from (interruption or inflation)
    origin: str | None = None

    @property
    def is_latent(self) -> bool:
        return self.kind.is_latent

    @property
    def base(self) -> str:
        return self.origin if self.origin is not None else self.name


@dataclass(frozen=True, eq=False)
class CausalScenario:
    """A DAG with typed nodes.

    Node order is preserved (it fixes setting/outcome order downstream) but
    does not take part in equality.
    """

    nodes: tuple[Node, ...]
    edges: frozenset[tuple[str, str]]
    flags: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))
        object.__setattr__(self, "flags", frozenset(self.flags))
        names = {n.name for n in self.nodes}
        for u, v in self.edges:
            if u not in names or v not in names:
                raise UnknownNode(f"edge {u}->{v} references an unknown node")

    # ---- identity ---------------------------------------------------
    def _key(self):
        return (frozenset(self.nodes), self.edges)

    def __eq__(self, other):
        if not isinstance(other, CausalScenario):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        parts = []
        for n in self.nodes:
            ps = ",".join(self.parents(n.name))
            parts.append(f"{n.name}<-[{ps}]" if ps else n.name)
        flag = f" flags={sorted(self.flags)}" if self.flags else ""
        return f"CausalScenario({'; '.join(parts)}{flag})"

    # ---- lookups ----------------------------------------------------
    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes)

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise UnknownNode(name)

    def has_node(self, name: str) -> bool:
        return any(n.name == name for n in self.nodes)

    def _order(self) -> dict[str, int]:
        return {n.name: i for i, n in enumerate(self.nodes)}

    def parents(self, name: str) -> tuple[str, ...]:
        order = self._order()
        if name not in order:
            raise UnknownNode(name)
        return tuple(sorted((u for u, v in self.edges if v == name), key=order.__getitem__))

    def children(self, name: str) -> tuple[str, ...]:
        order = self._order()
        if name not in order:
            raise UnknownNode(name)
        return tuple(sorted((v for u, v in self.edges if u == name), key=order.__getitem__))

    @property
    def observed(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes if not n.is_latent)

    @property
    def latents(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes if n.is_latent)

    @property
    def settings(self) -> tuple[str, ...]:
        return tuple(n for n in self.observed if not self.parents(n))

    @property
    def outcomes(self) -> tuple[str, ...]:
        return tuple(n for n in self.observed if self.parents(n))

    @property
    def intermediate_latents(self) -> tuple[str, ...]:
        return tuple(
            n for n in self.latents if any(self.node(p).is_latent for p in self.parents(n))
        )

    def setting_parents(self, outcome: str) -> tuple[str, ...]:
        """Settings that are direct parents of ``outcome``."""
        sets = set(self.settings)
        return tuple(p for p in self.parents(outcome) if p in sets)

    def ancestors(self, names: Iterable[str], include_self: bool = True) -> frozenset[str]:
        todo = deque(names)
        seen: set[str] = set()
        for n in todo:
            if not self.has_node(n):
                raise UnknownNode(n)
        while todo:
            n = todo.popleft()
            for p in (u for u, v in self.edges if v == n):
                if p not in seen:
                    seen.add(p)
                    todo.append(p)
        if include_self:
            seen |= set(names)
        return frozenset(seen)

    def subgraph(self, keep: Iterable[str]) -> "CausalScenario":
        keep = set(keep)
        return CausalScenario(
            tuple(n for n in self.nodes if n.name in keep),
            frozenset((u, v) for u, v in self.edges if u in keep and v in keep),
            self.flags,
        )

    def ancestral_subgraph(self, names: Iterable[str]) -> "CausalScenario":
        return self.subgraph(self.ancestors(names))

    # ---- construction helpers --------------------------------------
    def with_edges(self, edges: Iterable[tuple[str, str]]) -> "CausalScenario":
        return CausalScenario(self.nodes, frozenset(edges), self.flags)

    def without_nodes(self, names: Iterable[str]) -> "CausalScenario":
        drop = set(names)
        return CausalScenario(
            tuple(n for n in self.nodes if n.name not in drop),
            frozenset((u, v) for u, v in self.edges if u not in drop and v not in drop),
            self.flags,
        )

    def with_flags(self, *flags: str) -> "CausalScenario":
        return replace(self, flags=self.flags | set(flags))

    def to_networkx(self):
        import networkx as nx

        g = nx.DiGraph()
        for n in self.nodes:
            g.add_node(n.name, kind=n.kind.value, latent=n.is_latent, cardinality=n.cardinality)
        g.add_edges_from(self.edges)
        return g

    # ---- serialization ---------------------------------------------
    def to_dict(self) -> dict:
        out = []
        for n in self.nodes:
            d = {"name": n.name, "kind": n.kind.value, "parents": list(self.parents(n.name))}
            if n.cardinality is not None:
                d["cardinality"] = n.cardinality
            if n.origin is not None:
                d["origin"] = n.origin
            out.append(d)
        doc = {"nodes": out}
        if self.flags:
            doc["flags"] = sorted(self.flags)
        return doc

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CausalScenario":
        nodes = []
        edges = set()
        for d in doc["nodes"]:
            nodes.append(
                Node(d["name"], NodeKind(d.get("kind", "observed")), d.get("cardinality"), d.get("origin"))
            )
            for p in d.get("parents", ()):
                edges.add((p, d["name"]))
        return cls(tuple(nodes), frozenset(edges), frozenset(doc.get("flags", ())))

    @classmethod
    def from_json(cls, text: str) -> "CausalScenario":
        return cls.from_dict(json.loads(text))

    @classmethod
    def build(
        cls,
        observed: Mapping[str, int],
        latents: Mapping[str, str] | Sequence[str] = (),
        edges: Iterable[tuple[str, str]] = (),
    ) -> "CausalScenario":
        """Shorthand constructor.

        ``latents`` maps names to ``"quantum"``/``"classical"``; a plain
        sequence means all quantum.
        """
        if not isinstance(latents, Mapping):
            latents = {name: "quantum" for name in latents}
        nodes = [Node(n, NodeKind.OBSERVED, c) for n, c in observed.items()]
        for n, k in latents.items():
            kind = NodeKind.LATENT_QUANTUM if k == "quantum" else NodeKind.LATENT_CLASSICAL
            nodes.append(Node(n, kind))
        return cls(tuple(nodes), frozenset(edges))


# ---------------------------------------------------------------------------
# validation


class Classification(NamedTuple):
    settings: tuple[str, ...]
    outcomes: tuple[str, ...]
    latents: tuple[str, ...]
    intermediate_latents: tuple[str, ...]


def _topological_order(scenario: CausalScenario) -> list[str]:
    indeg = {n: 0 for n in scenario.names}
    for _, v in scenario.edges:
        indeg[v] += 1
    order_idx = scenario._order()
    ready = sorted((n for n, d in indeg.items() if d == 0), key=order_idx.__getitem__)
    out = []
    while ready:
        n = ready.pop(0)
        out.append(n)
        for v in scenario.children(n):
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
                ready.sort(key=order_idx.__getitem__)
    if len(out) != len(indeg):
        raise CycleDetected("edge relation contains a directed cycle")
    return out


def validate(scenario: CausalScenario) -> Classification:
    """Check structural invariants and return the role partition."""
    names = [n.name for n in scenario.nodes]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise DuplicateName(f"duplicate node names: {dup}")
    for u, v in scenario.edges:
        if u == v:
            raise CycleDetected(f"self-loop on {u}")
    _topological_order(scenario)
    for n in scenario.nodes:
        if not n.is_latent and (n.cardinality is None or n.cardinality < 2):
            raise ObservedWithoutCardinality(f"observed node {n.name} needs cardinality >= 2")
    return Classification(
        scenario.settings, scenario.outcomes, scenario.latents, scenario.intermediate_latents
    )


# ---------------------------------------------------------------------------
# exogenization


def exogenize(scenario: CausalScenario) -> CausalScenario:
    """Remove intermediate latents by rewiring parents to children.

    Step one adds an arrow from every parent of an intermediate latent to
    every child of it; step two cuts the arrows into the latent. A former
    intermediate left with a child set contained in another latent's child
    set is redundant and dropped.
    """
    validate(scenario)
    g = scenario
    removed_quantum = False
    exogenized: set[str] = set()
    while True:
        inter = g.intermediate_latents
        if not inter:
            break
        mu = inter[0]
        parents = g.parents(mu)
        kids = g.children(mu)
        edges = set(g.edges)
        edges |= {(p, c) for p in parents for c in kids}
        edges -= {(p, mu) for p in parents}
        g = g.with_edges(edges)
        exogenized.add(mu)
        if scenario.node(mu).kind is NodeKind.LATENT_QUANTUM:
            removed_quantum = True
    drop = []
    for mu in sorted(exogenized, key=g._order().__getitem__):
        kids = set(g.children(mu))
        for other in g.latents:
            if other == mu or other in drop:
                continue
            if kids <= set(g.children(other)):
                drop.append(mu)
                break
    g = g.without_nodes(drop)
    if removed_quantum:
        g = g.with_flags(CLASSICAL_ONLY_FLAG)
    return g


def _is_classical_ancestor(scenario: CausalScenario, name: str) -> bool:
    return scenario.node(name).kind is not NodeKind.LATENT_QUANTUM


def exogenization_safe(scenario: CausalScenario, latent: str) -> bool:
    """True when exogenizing ``latent`` cannot change the observable set."""
    if latent not in scenario.intermediate_latents:
        raise NotAnIntermediateLatent(latent)
    if len(scenario.children(latent)) == 1:
        return True
    if len(scenario.parents(latent)) == 1:
        return True
    anc = scenario.ancestors([latent], include_self=False)
    return all(_is_classical_ancestor(scenario, a) for a in anc)


# ---------------------------------------------------------------------------
# interruption


def interrupt(
    scenario: CausalScenario, setting: str, split: Sequence[Iterable[str]]
) -> CausalScenario:
    """Split ``setting`` into one copy per block of a partition of its children.

    The first block keeps the original name, later blocks get primes.
    """
    validate(scenario)
    if setting not in scenario.settings:
        raise NotASetting(setting)
    blocks = [frozenset(b) for b in split]
    kids = set(scenario.children(setting))
    union: set[str] = set()
    for b in blocks:
        if not b or union & b:
            raise InvalidPartition(f"blocks must be nonempty and disjoint: {split!r}")
        union |= b
    if union != kids:
        raise InvalidPartition(f"blocks {split!r} do not partition children {sorted(kids)}")
    orig = scenario.node(setting)
    base = orig.base
    nodes = []
    copy_names = []
    for n in scenario.nodes:
        if n.name != setting:
            nodes.append(n)
            continue
        for i in range(len(blocks)):
            name = setting + "'" * i
            if i and scenario.has_node(name):
                raise InvalidPartition(f"copy name {name} already in use")
            copy_names.append(name)
            nodes.append(Node(name, orig.kind, orig.cardinality, None if i == 0 else base))
    edges = {(u, v) for u, v in scenario.edges if u != setting}
    for name, block in zip(copy_names, blocks):
        edges |= {(name, c) for c in block}
    return CausalScenario(tuple(nodes), frozenset(edges), scenario.flags)


def merge_copies(scenario: CausalScenario) -> CausalScenario:
    """Contract every copied setting back onto its origin."""
    rename = {n.name: n.origin for n in scenario.nodes if n.origin is not None}
    nodes = [n for n in scenario.nodes if n.origin is None]
    edges = {(rename.get(u, u), rename.get(v, v)) for u, v in scenario.edges}
    return CausalScenario(tuple(nodes), frozenset(edges), scenario.flags)


# ---------------------------------------------------------------------------
# d-separation


def d_separated(
    scenario: CausalScenario, xs: Iterable[str], ys: Iterable[str], zs: Iterable[str] = ()
) -> bool:
    """Reachability ("Bayes ball") test for d-separation of xs and ys given zs."""
    xs, ys, zs = set(xs), set(ys), set(zs)
    for n in xs | ys | zs:
        if not scenario.has_node(n):
            raise UnknownNode(n)
    if xs & ys:
        return False
    parents = {n: set() for n in scenario.names}
    children = {n: set() for n in scenario.names}
    for u, v in scenario.edges:
        parents[v].add(u)
        children[u].add(v)
    # nodes with a descendant in zs (including zs) open colliders
    anc_z = set(scenario.ancestors(zs)) if zs else set()
    # (node, direction) with "up" meaning we arrived from a child
    todo = deque((x, "up") for x in xs)
    visited = set()
    while todo:
        node, direction = todo.popleft()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node not in zs and node in ys:
            return False
        if direction == "up" and node not in zs:
            for p in parents[node]:
                todo.append((p, "up"))
            for c in children[node]:
                todo.append((c, "down"))
        elif direction == "down":
            if node not in zs:
                for c in children[node]:
                    todo.append((c, "down"))
            if node in anc_z:
                for p in parents[node]:
                    todo.append((p, "up"))
    return True


@dataclass(frozen=True)
class IndependenceConstraint:
    """The marginal of ``outputs`` does not depend on ``free_settings``."""

    outputs: frozenset[str]
    free_settings: frozenset[str]
    conditioning_settings: frozenset[str]

    def __post_init__(self):
        if not self.outputs:
            raise ValueError("outputs must be nonempty")
        if self.free_settings & self.conditioning_settings:
            raise ValueError("free and conditioning settings overlap")

    def __str__(self):
        out = ",".join(sorted(self.outputs))
        free = ",".join(sorted(self.free_settings))
        cond = ",".join(sorted(self.conditioning_settings))
        return f"P({out}|{cond}) independent of {free}"


def nosignaling_constraints(scenario: CausalScenario) -> list[IndependenceConstraint]:
    """All single-setting independences implied by d-separation."""
    settings = scenario.settings
    outcomes = scenario.outcomes
    out = []
    seen = set()
    for k in range(1, len(outcomes) + 1):
        for subset in itertools.combinations(outcomes, k):
            for s in settings:
                others = frozenset(settings) - {s}
                if d_separated(scenario, {s}, subset, others):
                    c = IndependenceConstraint(frozenset(subset), frozenset({s}), others)
                    if c not in seen:
                        seen.add(c)
                        out.append(c)
    return out


# ---------------------------------------------------------------------------
# reduction rules


def _latent_children(g: CausalScenario, name: str) -> frozenset[str]:
    return frozenset(g.children(name))


def _reduce_step(g: CausalScenario) -> CausalScenario | None:
    lat = g.latents
    # single child: absorb into the child
    for L in lat:
        kids = g.children(L)
        if len(kids) <= 1:
            edges = set(g.edges)
            if kids:
                edges |= {(p, kids[0]) for p in g.parents(L)}
            return g.with_edges(edges).without_nodes([L])
    # intermediate with a single (latent) parent: absorb into the parent
    for L in g.intermediate_latents:
        ps = g.parents(L)
        if len(ps) == 1:
            p = ps[0]
            edges = set(g.edges) | {(p, c) for c in g.children(L)}
            return g.with_edges(edges).without_nodes([L])
    # arrow that duplicates a route through a quantum intermediate child
    for L in lat:
        for mu in g.children(L):
            node = g.node(mu)
            if node.kind is not NodeKind.LATENT_QUANTUM:
                continue
            shared = set(g.children(L)) & set(g.children(mu))
            if shared:
                edges = set(g.edges) - {(L, c) for c in shared}
                return g.with_edges(edges)
    # root latent whose children are strictly covered by another latent
    for L in lat:
        if g.parents(L):
            continue
        kids = _latent_children(g, L)
        for other in lat:
            if other != L and kids < _latent_children(g, other):
                return g.without_nodes([L])
    return None


def reduce(scenario: CausalScenario) -> CausalScenario:
    """Apply the latent simplification rules until nothing changes.

    Rules, in priority order: absorb latents with at most one child, absorb
    intermediates with exactly one parent, drop arrows that duplicate a
    route through a quantum intermediate, drop root latents whose children
    are a strict subset of another latent's children.
    """
    validate(scenario)
    g = scenario
    while True:
        nxt = _reduce_step(g)
        if nxt is None:
            return g
        g = nxt


# ---------------------------------------------------------------------------
# inflation


@dataclass(frozen=True)
class InflationSpec:
    """How many copies of each node to make and which parent copies feed them.

    ``wiring`` keys are ``(child, child_copy, parent)`` with 1-based copy
    indices; missing keys default to copy 1.
    """

    copies: Mapping[str, int]
    observed_copies: Mapping[str, int] = field(default_factory=dict)
    wiring: Mapping[tuple[str, int, str], int] = field(default_factory=dict)

    def count(self, scenario: CausalScenario, name: str) -> int:
        if scenario.node(name).is_latent:
            return int(self.copies.get(name, 1))
        return int(self.observed_copies.get(name, 1))


class InflationResult(NamedTuple):
    inflated: CausalScenario
    injectable: list[frozenset[str]]


def _copy_name(name: str, i: int, count: int) -> str:
    return name if count == 1 else f"{name}^{i}"


def inflate(
    scenario: CausalScenario, spec: InflationSpec, original: CausalScenario | None = None
) -> InflationResult:
    """Build the inflated DAG and list its injectable observed sets."""
    validate(scenario)
    original = scenario if original is None else original
    for name in spec.copies:
        if not scenario.has_node(name) or not scenario.node(name).is_latent:
            raise InconsistentWiring(f"copies given for non-latent {name}")
    for name in spec.observed_copies:
        if name not in scenario.outcomes:
            raise InconsistentWiring(f"observed copies given for non-outcome {name}")
    counts = {n: spec.count(scenario, n) for n in scenario.names}
    for name, c in counts.items():
        if c < 1:
            raise InconsistentWiring(f"{name} must have at least one copy")
    for (child, ci, parent), pj in spec.wiring.items():
        if (parent, child) not in scenario.edges:
            raise InconsistentWiring(f"wiring references missing edge {parent}->{child}")
        if not 1 <= ci <= counts[child]:
            raise InconsistentWiring(f"{child} has no copy {ci}")
        if not 1 <= pj <= counts[parent]:
            raise InconsistentWiring(f"{parent} has no copy {pj}")

    nodes = []
    for n in scenario.nodes:
        c = counts[n.name]
        for i in range(1, c + 1):
            nodes.append(
                Node(_copy_name(n.name, i, c), n.kind, n.cardinality, n.base if c > 1 or n.origin else None)
            )
    edges = set()
    for n in scenario.names:
        for i in range(1, counts[n] + 1):
            for p in scenario.parents(n):
                j = spec.wiring.get((n, i, p), 1)
                edges.add((_copy_name(p, j, counts[p]), _copy_name(n, i, counts[n])))
    inflated = CausalScenario(tuple(nodes), frozenset(edges), scenario.flags)

    for L in inflated.latents:
        origins = [inflated.node(c).base for c in inflated.children(L)]
        if len(origins) != len(set(origins)):
            raise FanoutDetected(f"latent copy {L} feeds several copies of one node")

    return InflationResult(inflated, injectable_sets(inflated, original))


def _is_injectable(inflated: CausalScenario, original: CausalScenario, subset) -> bool:
    anc = inflated.ancestors(subset)
    image = {a: inflated.node(a).base for a in anc}
    if len(set(image.values())) != len(image):
        return False
    if not all(original.has_node(v) for v in image.values()):
        return False
    target = original.ancestors({image[s] for s in subset})
    if set(image.values()) != set(target):
        return False
    mapped = {(image[u], image[v]) for u, v in inflated.edges if u in anc and v in anc}
    expected = {(u, v) for u, v in original.edges if u in target and v in target}
    return mapped == expected


def injectable_sets(inflated: CausalScenario, original: CausalScenario) -> list[frozenset[str]]:
    """Observed sets whose ancestral subgraph maps isomorphically onto the original."""
    obs = inflated.observed
    out = []
    for k in range(1, len(obs) + 1):
        for subset in itertools.combinations(obs, k):
            if _is_injectable(inflated, original, subset):
                out.append(frozenset(subset))
    return out


# ---------------------------------------------------------------------------
# comparison helpers


def correlation_scenario(scenario: CausalScenario) -> CausalScenario:
    """Replace each setting by a classical source that also feeds an observed copy.

    The source of setting ``X`` is named ``S_X`` and the setting itself
    becomes an outcome with the source as its only parent.
    """
    settings = scenario.settings
    nodes = list(scenario.nodes)
    edges = set(scenario.edges)
    for s in settings:
        src = f"S_{s}"
        nodes.append(Node(src, NodeKind.LATENT_CLASSICAL))
        for c in scenario.children(s):
            edges.discard((s, c))
            edges.add((src, c))
        edges.add((src, s))
    return CausalScenario(tuple(nodes), frozenset(edges), scenario.flags)


def is_isomorphic(g1: CausalScenario, g2: CausalScenario) -> bool:
    """DAG isomorphism that respects the observed/latent split."""
    from networkx.algorithms.isomorphism import DiGraphMatcher

    m = DiGraphMatcher(
        g1.to_networkx(), g2.to_networkx(), node_match=lambda a, b: a["latent"] == b["latent"]
    )
    return m.is_isomorphic()
