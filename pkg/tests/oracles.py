"""Independent reference implementations used only as test oracles.

These deliberately avoid the algorithms used by the package: the tree oracle
enumerates *every* chained arc sequence and filters it through the walk
comprehension literally (maximal walks first, then suffix expansion), the
reachability oracle is a fixpoint closure, and the outcome oracle filters the
full powerset.  Slow on purpose; only ever run on desk-scale inputs.

Everything here works on plain tuples — arcs are (sender, receiver, tag)
triples, walks are leaf-first tuples of arcs — so the oracles do not even
share data types with the package under test.
"""

from __future__ import annotations

import math
from itertools import chain, combinations

PlainArc = tuple[str, str, int]
PlainWalk = tuple[PlainArc, ...]


# ---------------------------------------------------------------- tree oracle

def oracle_unfold(nodes: set[str], arcs: set[PlainArc], leader: str) -> set[tuple[PlainArc, PlainWalk]]:
    """All tree edges of the unfolding, as (arc, walk) pairs.

    A chained sequence [a_{k-1}, ..., a_0] (leaf-first) is a *valid walk* when
    a_0 ends at the leader, consecutive arcs chain (receiver of a_{j+1} is the
    sender of a_j, i.e. in leaf-first tuple order receiver(t[i]) ==
    sender(t[i+1])), and no two arcs share a receiver.  It is *maximal* when
    additionally its start node either already occurs as a receiver of a
    non-leaf arc, or has no ingoing arc at all.  The tree's edges are exactly
    the (leaf arc, walk) pairs for every root-end suffix of every maximal
    walk.
    """
    in_arcs = {n: sorted(a for a in arcs if a[1] == n) for n in nodes}

    def chained(seq: PlainWalk) -> bool:
        return all(seq[i][1] == seq[i + 1][0] for i in range(len(seq) - 1))

    def no_shared_receiver(seq: PlainWalk) -> bool:
        receivers = [a[1] for a in seq]
        return len(receivers) == len(set(receivers))

    def is_maximal(seq: PlainWalk) -> bool:
        start = seq[0][0]
        revisit = any(a[1] == start for a in seq[1:])   # receiver of a non-leaf arc
        dead_end = not in_arcs.get(start)
        return revisit or dead_end

    # Valid walks have pairwise-distinct receivers, hence length <= |nodes|.
    valid: list[PlainWalk] = []
    frontier: list[PlainWalk] = [(a,) for a in arcs if a[1] == leader]
    for _ in range(len(nodes)):
        next_frontier: list[PlainWalk] = []
        for seq in frontier:
            if chained(seq) and no_shared_receiver(seq):
                valid.append(seq)
                start = seq[0][0]
                next_frontier.extend((a,) + seq for a in in_arcs.get(start, ()))
        frontier = next_frontier
    # Anything still in the frontier would need length > |nodes|: impossible.
    assert not any(chained(s) and no_shared_receiver(s) for s in frontier)

    maximal = [seq for seq in valid if is_maximal(seq)]
    edges: set[tuple[PlainArc, PlainWalk]] = set()
    for seq in maximal:
        for i in range(len(seq)):
            suffix = seq[i:]
            edges.add((suffix[0], suffix))
    return edges


def oracle_size_formula(n: int) -> int:
    """The closed-form edge-count sum for the complete digraph on n nodes."""
    total = 0
    for i in range(1, n):
        total += math.factorial(n - 1) // math.factorial(n - 1 - i) * i * (i + 1)
    return total


def complete_digraph(n: int) -> tuple[set[str], set[PlainArc]]:
    names = [chr(ord("A") + i) for i in range(n)]
    arcs = {(a, b, 0) for a in names for b in names if a != b}
    return set(names), arcs


# -------------------------------------------------------- reachability oracle

def oracle_reachable_into(nodes: set[str], arcs: set[PlainArc], target: str) -> set[str]:
    """Nodes with a walk into `target`, via naive transitive-closure fixpoint."""
    reach = {target}
    changed = True
    while changed:
        changed = False
        for (s, r, _t) in arcs:
            if r in reach and s not in reach:
                reach.add(s)
                changed = True
    return reach - {target}


# ------------------------------------------------------------- outcome oracle

def oracle_outcomes(edges: set[tuple[PlainArc, PlainWalk]], user: str) -> set[frozenset[PlainWalk]]:
    """Filter the full powerset of tree edges through the outcome predicates.

    Edges are identified by their walks (the arc is walk[0]).  Returns the set
    of valid outcomes for `user`, each an edge-walk frozenset.
    """
    walks = sorted(w for (_a, w) in edges)
    all_walks = set(walks)

    def suffixes(w: PlainWalk):
        return [w[i:] for i in range(len(w))]

    def downward_closed(subset: frozenset[PlainWalk]) -> bool:
        return all(set(suffixes(w)) <= subset for w in subset)

    def no_dup(subset: frozenset[PlainWalk]) -> bool:
        seen: set[tuple[str, str, int]] = set()
        for w in subset:
            s, r, t = w[0]
            if user in (s, r):
                if (s, r, t) in seen:
                    return False
                seen.add((s, r, t))
        return True

    def honest_root(subset: frozenset[PlainWalk]) -> bool:
        for w in all_walks:
            if len(w) == 1 and w[0][1] == user and w not in subset:
                return False
        return True

    def eager_pull(subset: frozenset[PlainWalk]) -> bool:
        for w1 in all_walks:
            if w1[0][1] != user or len(w1) < 2:
                continue
            w2 = w1[1:]
            if w2 not in subset:
                continue
            s, r, t = w1[0]
            if not any(
                w3[0] == (s, r, t) and w3[0][1] == user and len(w3) <= len(w1)
                for w3 in subset
            ):
                return False
        return True

    out: set[frozenset[PlainWalk]] = set()
    for combo in chain.from_iterable(combinations(walks, k) for k in range(len(walks) + 1)):
        subset = frozenset(combo)
        if (
            downward_closed(subset)
            and no_dup(subset)
            and honest_root(subset)
            and eager_pull(subset)
        ):
            out.add(subset)
    return out


if __name__ == "__main__":
    for n in range(2, 6):
        nodes, arcs = complete_digraph(n)
        tree = oracle_unfold(nodes, arcs, "A")
        depths = max(len(w) for (_a, w) in tree)
        print(f"K{n}: |edges|={len(tree)}  depth={depths}  formula={oracle_size_formula(n)}")
