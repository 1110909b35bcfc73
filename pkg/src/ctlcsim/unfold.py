"""Unfolding a transfer graph into its transfer tree.

The transfer tree (xtree) of a graph w.r.t. a root user collects every walk
that ends at the root and never enters the same user twice.  Each such walk,
identified with its leaf arc, is one *edge* of the tree; the edge whose walk
drops the leaf arc is its parent.  Because every suffix of an admissible walk
is admissible, the edge set is closed under taking parents, which is what
makes it a tree.

Edges carry their full walk, so two occurrences of the same graph arc in
different positions are distinct tree edges.  Tree traversal order is fixed
once and for all: children are visited in (sender, tag) order of their leaf
arcs, giving a canonical pre-order numbering used for subcontract positions,
trace output and DOT rendering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

from .graph import Arc, Digraph, DomainError, NodeId, Walk, is_walk


class SizeBudgetError(DomainError):
    """The unfolding exceeded the caller-supplied edge budget."""


# ---------------------------------------------------------------- tree edges

@dataclass(frozen=True, order=True)
class Edge:
    """One edge of a transfer tree: a graph arc at a specific tree position.

    ``walk`` runs leaf-first from this edge's own arc up to the root arc;
    ``walk[0] is arc`` always holds.
    """

    arc: Arc
    walk: Walk

    def __post_init__(self) -> None:
        if not self.walk or self.walk[0] != self.arc:
            raise DomainError("edge walk must start at the edge's own arc")
        if not is_walk(self.walk):
            raise DomainError(f"not a chained walk: {self.walk}")

    @property
    def sender(self) -> NodeId:
        return self.arc.sender

    @property
    def receiver(self) -> NodeId:
        return self.arc.receiver

    @property
    def depth(self) -> int:
        return len(self.walk)

    @property
    def parent_walk(self) -> Walk:
        return self.walk[1:]

    def __str__(self) -> str:
        return "/".join(str(a) for a in self.walk)


def edge_from_walk(w: Walk) -> Edge:
    return Edge(arc=w[0], walk=w)


# ---------------------------------------------------------------- the tree

@dataclass(frozen=True)
class Xtree:
    """An unfolded transfer tree plus its source graph and root user.

    All derived structure (parent/children maps, pre-order numbering) is
    computed lazily and cached; the tree itself is an immutable value.
    """

    edges: frozenset[Edge]
    leader: NodeId
    source: Digraph

    def __post_init__(self) -> None:
        for e in self.edges:
            if e.walk[-1].receiver != self.leader:
                raise DomainError(f"edge {e} does not end at the root user")
            if len(e.walk) > 1 and edge_from_walk(e.parent_walk) not in self.edges:
                raise DomainError(f"edge {e} lacks its parent in the tree")

    # ---- shape queries ----

    def __len__(self) -> int:
        return len(self.edges)

    def __contains__(self, e: Edge) -> bool:
        return e in self.edges

    def depth(self) -> int:
        return max((e.depth for e in self.edges), default=0)

    def root_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.preorder if e.depth == 1)

    def children(self, e: Edge) -> tuple[Edge, ...]:
        return self._children.get(e, ())

    def parent(self, e: Edge) -> Edge | None:
        if e not in self.edges:
            raise DomainError(f"edge {e} is not in the tree")
        return edge_from_walk(e.parent_walk) if e.depth > 1 else None

    def edges_at_depth(self, j: int) -> tuple[Edge, ...]:
        return tuple(e for e in self.preorder if e.depth == j)

    def occupied_depths(self) -> tuple[int, ...]:
        return tuple(sorted({e.depth for e in self.edges}))

    @cached_property
    def _children(self) -> dict[Edge, tuple[Edge, ...]]:
        out: dict[Edge, list[Edge]] = {}
        for e in self.edges:
            if e.depth > 1:
                out.setdefault(edge_from_walk(e.parent_walk), []).append(e)
        return {
            p: tuple(sorted(kids, key=lambda k: (k.arc.sender, k.arc.tag)))
            for p, kids in out.items()
        }

    # ---- canonical ordering ----

    @cached_property
    def preorder(self) -> tuple[Edge, ...]:
        """Depth-first pre-order; siblings in (sender, tag) order of leaf arcs."""
        roots = sorted(
            (e for e in self.edges if e.depth == 1),
            key=lambda e: (e.arc.sender, e.arc.tag),
        )
        out: list[Edge] = []

        def visit(e: Edge) -> None:
            out.append(e)
            for child in self.children(e):
                visit(child)

        for r in roots:
            visit(r)
        return tuple(out)

    @cached_property
    def preorder_index(self) -> dict[Edge, int]:
        """1-based pre-order number of each edge."""
        return {e: i for i, e in enumerate(self.preorder, start=1)}


# ---------------------------------------------------------------- unfolding

def unfold(d: Digraph, leader: NodeId, budget: int = 100_000) -> Xtree:
    """Unfold ``d`` into its transfer tree rooted at ``leader``.

    Depth-first over ingoing arcs, keeping the set of users already entered
    on the current root-ward path; a walk stops growing when its start user
    was entered before (or has no ingoing arcs).  Every intermediate walk is
    itself an edge, so emission happens on the way down.

    Raises :class:`SizeBudgetError` once more than ``budget`` edges exist —
    tree size is worst-case super-exponential in the node count.
    """
    if leader not in d.nodes:
        raise DomainError(f"unknown root user {leader!r}")
    edges: set[Edge] = set()

    def grow(node: NodeId, walk_above: Walk, entered: frozenset[NodeId]) -> None:
        if node in entered:
            return
        below = entered | {node}
        for arc in d.in_arcs(node):
            w = (arc,) + walk_above
            edges.add(Edge(arc=arc, walk=w))
            if len(edges) > budget:
                raise SizeBudgetError(
                    f"unfolding of {len(d.nodes)}-node graph exceeds {budget} edges"
                )
            grow(arc.sender, w, below)

    grow(leader, (), frozenset())
    return Xtree(edges=frozenset(edges), leader=leader, source=d)


def on_path_to_root(e: Edge) -> tuple[Edge, ...]:
    """The edges from ``e`` up to the root, inclusive, nearest-first.

    These are exactly the suffix edges of ``e``'s walk and are guaranteed to
    be present in any tree containing ``e``.
    """
    return tuple(edge_from_walk(e.walk[i:]) for i in range(len(e.walk)))


def edge_groups(t: Xtree) -> dict[tuple[int, Arc], tuple[Edge, ...]]:
    """Partition the tree's edges by (depth, underlying arc).

    Edges in one group are simultaneous copies of the same transfer at the
    same level and later share a single subcontract; groups come out in
    pre-order of their first member.
    """
    out: dict[tuple[int, Arc], list[Edge]] = {}
    for e in t.preorder:
        out.setdefault((e.depth, e.arc), []).append(e)
    return {k: tuple(v) for k, v in out.items()}


# ---------------------------------------------------------------- size formula

def complete_graph_size_formula(n: int) -> int:
    """Closed-form edge count ascribed to the complete graph on ``n`` users.

    Evaluates sum_{i=1..n-1} (n-1)!/(n-1-i)! * i * (i+1) exactly.
    """
    if n < 1:
        raise DomainError("need at least one user")
    return sum(
        math.factorial(n - 1) // math.factorial(n - 1 - i) * i * (i + 1)
        for i in range(1, n)
    )


def complete_digraph(n: int) -> Digraph:
    """All arcs in both directions between ``n`` users named U1..Un."""
    names = [f"U{i}" for i in range(1, n + 1)]
    return Digraph(
        frozenset(names),
        frozenset(Arc(a, b) for a in names for b in names if a != b),
    )


# ---------------------------------------------------------------- rendering

def to_dot(t: Xtree, title: str = "xtree") -> str:
    """Graphviz rendering of the tree, one node per edge, pre-order labels."""
    idx = t.preorder_index
    lines = [f'digraph "{title}" {{', "  rankdir=BT;", '  root [shape=doublecircle];']
    for e in t.preorder:
        n = idx[e]
        lines.append(f'  e{n} [label="{n}: {e.arc}"];')
        p = t.parent(e)
        lines.append(f"  e{n} -> {'root' if p is None else f'e{idx[p]}'};")
    lines.append("}")
    return "\n".join(lines)
