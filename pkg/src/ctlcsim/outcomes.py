"""Outcome sets of a transfer tree, and the underwater test on the source graph.

An *outcome* for a user is a set of tree edges that could plausibly be the
executed edges at the end of a run in which that user behaved honestly.  It
must be a partial tree (closed toward the root) and satisfy three predicates
from the user's point of view:

``no_dup``
    at most one copy of any arc involving the user — the user never pays or
    gets paid twice for the same intended transfer;
``honest_root``
    every depth-1 edge paying the user is present — the root user always
    collects the transfers it is owed directly;
``eager_pull``
    whenever an outgoing edge of the user was pulled, each of its direct
    ingoing extensions in the tree is represented in the outcome at the same
    depth or shallower — the user never pays without first securing the
    matching incoming transfer.

Everything here is brute force by design: these functions are the reference
definitions that the execution-layer verdicts are checked against.
"""

from __future__ import annotations

from itertools import product
from typing import Iterable, Optional

from .graph import Arc, Digraph, DomainError, NodeId, Walk
from .unfold import Edge, SizeBudgetError, Xtree, on_path_to_root

Outcome = frozenset[Edge]


# ---------------------------------------------------------------- predicates

def downward_closed(t: Xtree, omega: Outcome) -> bool:
    """True iff omega contains every root-ward ancestor of each of its edges."""
    return all(anc in omega for e in omega for anc in on_path_to_root(e))


def no_dup(user: NodeId, omega: Outcome) -> bool:
    """At most one edge per arc among edges that ``user`` sends or receives."""
    seen: dict[Arc, Walk] = {}
    for e in omega:
        if user not in (e.sender, e.receiver):
            continue
        if seen.setdefault(e.arc, e.walk) != e.walk:
            return False
    return True


def honest_root(t: Xtree, user: NodeId, omega: Outcome) -> bool:
    """Every depth-1 edge whose receiver is ``user`` must be present."""
    return all(e in omega for e in t.root_edges() if e.receiver == user)


def eager_pull(t: Xtree, user: NodeId, omega: Outcome) -> bool:
    """Pulled outgoing edges force representatives of their ingoing extensions.

    The direct extensions of an edge are exactly its children in the tree,
    and all children of an outgoing edge of ``user`` are ingoing to ``user``.
    A representative may sit anywhere in the tree as long as it carries the
    same arc and is no deeper than the extension it stands in for.
    """
    for e in omega:
        if e.sender != user:
            continue
        for ext in t.children(e):
            if not any(o.arc == ext.arc and o.depth <= ext.depth for o in omega):
                return False
    return True


def failed_predicate(t: Xtree, user: NodeId, omega: Outcome) -> Optional[str]:
    """Name of the first violated outcome predicate, or None if all hold."""
    foreign = omega - t.edges
    if foreign:
        raise DomainError(f"outcome references edges outside the tree: {sorted(foreign)}")
    if not downward_closed(t, omega):
        return "downward-closed"
    if not no_dup(user, omega):
        return "no-dup"
    if not honest_root(t, user, omega):
        return "honest-root"
    if not eager_pull(t, user, omega):
        return "eager-pull"
    return None


def check_outcome(t: Xtree, user: NodeId, omega: Outcome) -> bool:
    return failed_predicate(t, user, omega) is None


# ---------------------------------------------------------------- enumeration

def enumerate_outcomes(t: Xtree, user: NodeId, budget: int = 20) -> frozenset[Outcome]:
    """All outcomes of ``user`` on ``t``, by exhausting downward-closed subsets.

    Candidate sets are generated structurally (per edge: absent, or present
    together with any closed choice under each child), so closure never needs
    re-checking; the three user predicates then filter.  Refuses trees above
    ``budget`` edges — candidate counts grow too fast beyond desk scale.
    """
    if len(t) > budget:
        raise SizeBudgetError(f"tree has {len(t)} edges; enumeration budget is {budget}")

    def choices(e: Edge) -> tuple[frozenset[Edge], ...]:
        kids = [choices(k) for k in t.children(e)]
        present = tuple(
            frozenset({e}).union(*pick) if pick else frozenset({e})
            for pick in product(*kids)
        )
        return (frozenset(),) + present

    candidates = (
        frozenset().union(*pick)
        for pick in product(*(choices(r) for r in t.root_edges()))
    )
    return frozenset(
        omega
        for omega in candidates
        if no_dup(user, omega) and honest_root(t, user, omega) and eager_pull(t, user, omega)
    )


def canonical_projection(t: Xtree) -> Outcome:
    """The outcome a fully honest execution settles on.

    Walk the tree level by level in pre-order and keep an edge iff its parent
    was kept and its arc has not been kept already.  Each graph arc ends up
    represented exactly once (by its shallowest surviving copy), so the
    projection covers the source graph and belongs to every user's outcome
    set on trees coming from an unfolding.
    """
    kept: set[Edge] = set()
    taken_arcs: set[Arc] = set()
    for depth in t.occupied_depths():
        for e in t.edges_at_depth(depth):
            parent = t.parent(e)
            if parent is not None and parent not in kept:
                continue
            if e.arc in taken_arcs:
                continue
            kept.add(e)
            taken_arcs.add(e.arc)
    return frozenset(kept)


# ---------------------------------------------------------------- graph-level

def project_arcs(omega: Iterable[Edge]) -> frozenset[Arc]:
    return frozenset(e.arc for e in omega)


def is_underwater(d: Digraph, user: NodeId, executed: frozenset[Arc]) -> bool:
    """True iff ``user`` paid on some arc without collecting on some other.

    ``executed`` is a set of *graph arcs* (not tree edges): an outgoing arc
    of the user was executed while at least one ingoing arc was not.
    """
    stray = executed - d.arcs
    if stray:
        raise DomainError(f"executed arcs outside the graph: {sorted(stray)}")
    paid = any(a.sender == user for a in executed)
    uncollected = any(a not in executed for a in d.in_arcs(user))
    return paid and uncollected


def check_full_coverage(d: Digraph, t: Xtree, omega: Outcome) -> bool:
    """True iff omega's arcs are exactly the source graph's arcs."""
    return project_arcs(omega) == d.arcs


# ---------------------------------------------------------------- serialization

def outcomes_to_json(t: Xtree, outcomes: Iterable[Outcome]) -> list[list[int]]:
    """Each outcome as its sorted list of pre-order edge ids."""
    idx = t.preorder_index
    return sorted(sorted(idx[e] for e in omega) for omega in outcomes)
