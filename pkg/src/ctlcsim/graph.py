"""Atomic transfer graphs: nodes, arcs, walks, and connectivity.

An atomic transfer graph (ATG) is a loop-free digraph whose nodes are users
and whose arcs are intended transfers.  Everything downstream — unfolding,
contract synthesis, execution — consumes these values, so they are immutable
and hashable throughout.

Walks are stored *leaf-first*: ``walk[0]`` is the arc farthest from the
designated root user and ``walk[-1]`` ends at the root.  Consecutive arcs
chain leafward, i.e. ``walk[i].sender == walk[i+1].receiver`` read root-ward,
which in tuple order means ``walk[i].receiver == walk[i+1].sender``.  All
suffix tests are taken at the root end (plain tuple suffixes).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional

NodeId = str


class DomainError(ValueError):
    """A precondition on graph-level inputs was violated."""


# ---------------------------------------------------------------- core types

@dataclass(frozen=True, order=True)
class Arc:
    """A directed transfer from ``sender`` to ``receiver``.

    ``tag`` distinguishes parallel arcs between the same pair of users; the
    triple (sender, receiver, tag) is the arc's identity everywhere in the
    pipeline.
    """

    sender: NodeId
    receiver: NodeId
    tag: int = 0

    def __post_init__(self) -> None:
        if not self.sender or not self.receiver:
            raise DomainError("arc endpoints must be non-empty node ids")
        if self.sender == self.receiver:
            raise DomainError(f"loop arc not allowed: {self.sender!r}")

    def __str__(self) -> str:  # compact form used in traces and DOT output
        base = f"{self.sender}>{self.receiver}"
        return base if self.tag == 0 else f"{base}#{self.tag}"


Walk = tuple[Arc, ...]


@dataclass(frozen=True)
class Digraph:
    """A finite digraph over named nodes.  Immutable value object."""

    nodes: frozenset[NodeId]
    arcs: frozenset[Arc]

    def __post_init__(self) -> None:
        if not self.nodes:
            raise DomainError("digraph needs at least one node")
        for a in self.arcs:
            if a.sender not in self.nodes or a.receiver not in self.nodes:
                raise DomainError(f"arc {a} references a node outside the graph")

    # ---- queries ----

    def in_arcs(self, node: NodeId) -> tuple[Arc, ...]:
        """Arcs ending at ``node``, in deterministic (sender, tag) order."""
        self._require(node)
        return tuple(sorted(a for a in self.arcs if a.receiver == node))

    def out_arcs(self, node: NodeId) -> tuple[Arc, ...]:
        self._require(node)
        return tuple(sorted(a for a in self.arcs if a.sender == node))

    def sorted_nodes(self) -> tuple[NodeId, ...]:
        return tuple(sorted(self.nodes))

    def _require(self, node: NodeId) -> None:
        if node not in self.nodes:
            raise DomainError(f"unknown node {node!r}")


def digraph(nodes: Iterable[NodeId], arcs: Iterable[tuple | Arc]) -> Digraph:
    """Convenience constructor accepting (sender, receiver[, tag]) tuples."""
    built = frozenset(a if isinstance(a, Arc) else Arc(*a) for a in arcs)
    return Digraph(frozenset(nodes), built)


# ---------------------------------------------------------------- walk algebra

def is_walk(w: Walk) -> bool:
    """True iff consecutive arcs chain (receiver of each equals the next sender)."""
    return all(w[i].receiver == w[i + 1].sender for i in range(len(w) - 1))


def is_suffix(w2: Walk, w1: Walk) -> bool:
    """True iff ``w1`` is a root-end suffix of ``w2`` (every walk suffixes itself)."""
    if len(w1) > len(w2):
        return False
    return w2[len(w2) - len(w1):] == tuple(w1)


# ---------------------------------------------------------------- connectivity

def extended_in_neighbourhood(d: Digraph, a: NodeId) -> frozenset[NodeId]:
    """All nodes other than ``a`` that have a walk into ``a``.

    Backward breadth-first search over ingoing arcs; linear in |arcs|.
    """
    d._require(a)
    seen: set[NodeId] = {a}
    frontier = [a]
    while frontier:
        nxt: list[NodeId] = []
        for node in frontier:
            for arc in d.arcs:
                if arc.receiver == node and arc.sender not in seen:
                    seen.add(arc.sender)
                    nxt.append(arc.sender)
        frontier = nxt
    return frozenset(seen - {a})


def is_in_semiconnected(d: Digraph, leader: NodeId) -> bool:
    """True iff every node reaches ``leader`` by some walk.

    A single node with no arcs counts as in-semiconnected w.r.t. itself
    (the degenerate one-user graph is accepted and unfolds to an empty tree).
    """
    return extended_in_neighbourhood(d, leader) | {leader} == d.nodes


def leaders(d: Digraph) -> frozenset[NodeId]:
    """All nodes the graph is in-semiconnected with respect to."""
    return frozenset(n for n in d.nodes if is_in_semiconnected(d, n))


def compose(d1: Digraph, a1: NodeId, d2: Digraph, a2: NodeId) -> Digraph:
    """Join two transfer graphs through their leaders.

    When the leaders differ, a two-cycle (a1, a2), (a2, a1) is added so each
    side can still reach the other's leader; when they coincide the plain
    union already suffices.  The result is in-semiconnected w.r.t. both
    leaders, which callers may rely on.
    """
    if not is_in_semiconnected(d1, a1):
        raise DomainError(f"first graph is not in-semiconnected w.r.t. {a1!r}")
    if not is_in_semiconnected(d2, a2):
        raise DomainError(f"second graph is not in-semiconnected w.r.t. {a2!r}")
    nodes = d1.nodes | d2.nodes
    arcs = set(d1.arcs | d2.arcs)
    if a1 != a2:
        arcs.add(Arc(a1, a2))
        arcs.add(Arc(a2, a1))
    return Digraph(frozenset(nodes), frozenset(arcs))


# ---------------------------------------------------------------- ingestion

@dataclass(frozen=True)
class GraphSpec:
    """A parsed graph description: the digraph plus per-arc placement data.

    ``arc_info`` maps each arc to its (tam, fund name) placement; ``t0`` is
    the configured execution-phase start, or None to let the caller derive a
    default from the unfolded tree depth.
    """

    graph_id: str
    graph: Digraph
    leader: NodeId
    t0: Optional[Fraction]
    arc_info: Mapping[Arc, tuple[str, str]] = field(hash=False)

    def tams(self) -> frozenset[str]:
        return frozenset(tam for (tam, _fund) in self.arc_info.values())


def parse_graph_spec(obj: dict) -> GraphSpec:
    """Build a GraphSpec from its JSON object form.

    Expected shape::

        {"id": str, "nodes": [str], "leader": str, "t0": number?,
         "arcs": [{"from": str, "to": str, "tag": int?, "tam": str, "fund": str}]}
    """
    try:
        graph_id = str(obj["id"])
        nodes = frozenset(str(n) for n in obj["nodes"])
        leader = str(obj["leader"])
        raw_arcs = obj["arcs"]
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed graph spec: missing {exc}") from None
    arcs: set[Arc] = set()
    arc_info: dict[Arc, tuple[str, str]] = {}
    for entry in raw_arcs:
        try:
            arc = Arc(str(entry["from"]), str(entry["to"]), int(entry.get("tag", 0)))
            tam = str(entry["tam"])
            fund = str(entry["fund"])
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed arc entry {entry!r}: {exc}") from None
        if arc in arcs:
            raise DomainError(f"duplicate arc {arc}")
        arcs.add(arc)
        arc_info[arc] = (tam, fund)
    d = Digraph(nodes, frozenset(arcs))
    if leader not in d.nodes:
        raise DomainError(f"leader {leader!r} is not a node")
    t0 = obj.get("t0")
    return GraphSpec(
        graph_id=graph_id,
        graph=d,
        leader=leader,
        t0=None if t0 is None else Fraction(str(t0)),
        arc_info=arc_info,
    )


def graph_spec_to_json(spec: GraphSpec) -> dict:
    """Inverse of :func:`parse_graph_spec` (used by trace headers)."""
    return {
        "id": spec.graph_id,
        "nodes": sorted(spec.graph.nodes),
        "leader": spec.leader,
        **({} if spec.t0 is None else {"t0": _number(spec.t0)}),
        "arcs": [
            {
                "from": a.sender,
                "to": a.receiver,
                **({} if a.tag == 0 else {"tag": a.tag}),
                "tam": spec.arc_info[a][0],
                "fund": spec.arc_info[a][1],
            }
            for a in sorted(spec.graph.arcs)
        ],
    }


def _number(x: Fraction):
    """Render a Fraction as an int when integral, else as an exact string."""
    if x.denominator == 1:
        return int(x)
    return str(x)


# ---------------------------------------------------------------- generation

def random_graph_spec(
    rng: "random.Random",
    max_nodes: int = 4,
    *,
    graph_id: Optional[str] = None,
    tams: tuple[str, ...] = ("t1", "t2"),
    extra_arc_p: float = 0.35,
    parallel_arc_p: float = 0.2,
) -> GraphSpec:
    """A random in-semiconnected graph with per-arc tam/fund placement.

    Every non-leader node first gets an arc toward the connected part, which
    guarantees a walk to the leader; extra (and occasionally parallel,
    tag=1) arcs are then sprinkled in.  Deterministic for a given rng state.
    """
    n = rng.randint(2, max_nodes)
    nodes = [f"U{i}" for i in range(1, n + 1)]
    leader = rng.choice(nodes)
    arcs: set[Arc] = set()
    reaching = [leader]
    for x in nodes:
        if x == leader:
            continue
        arcs.add(Arc(x, rng.choice(reaching)))
        reaching.append(x)
    for s in nodes:
        for r in nodes:
            if s == r:
                continue
            if rng.random() < extra_arc_p:
                a = Arc(s, r)
                if a not in arcs:
                    arcs.add(a)
                elif rng.random() < parallel_arc_p:
                    arcs.add(Arc(s, r, 1))
    chs = tams[: rng.randint(1, len(tams))]
    arc_info = {a: (rng.choice(chs), f"f{i}") for i, a in enumerate(sorted(arcs))}
    return GraphSpec(
        graph_id=graph_id or f"g{rng.getrandbits(32):08x}",
        graph=Digraph(frozenset(nodes), frozenset(arcs)),
        leader=leader,
        t0=None,
        arc_info=arc_info,
    )
