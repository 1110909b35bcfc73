"""Shared builders for the test suite.

Deliberately cheap: the canonical graphs are tiny, all derived objects are
memoised, and the all-honest runs double as scenario quarries — the rule-level
negative tests use ``state_after`` to dig out intermediate states instead of
re-deriving them by hand.
"""

from __future__ import annotations

import functools
from dataclasses import replace
from fractions import Fraction
from typing import Callable

from ctlcsim.graph import GraphSpec, parse_graph_spec
from ctlcsim.runner import SimResult, run_protocol
from ctlcsim.semantics import Action, HbeState
from ctlcsim.synth import CompiledBatch, Ctlc, TreeSpec, compile_tree, spec_from_graph
from ctlcsim.unfold import Edge, Xtree, unfold

DELTA = Fraction(10)

# (sender, receiver, tag, tam, fund) rows, the shape mk_graph consumes
SWAP_ARCS = (("A", "B", 0, "t1", "fA"), ("B", "A", 0, "t1", "fB"))
CYC3_ARCS = (
    ("A", "B", 0, "t1", "g1"),
    ("B", "C", 0, "t1", "g2"),
    ("C", "A", 0, "t1", "g3"),
)
K3_ARCS = (
    ("A", "B", 0, "t1", "f1"),
    ("B", "A", 0, "t1", "f2"),
    ("A", "C", 0, "t2", "f3"),
    ("C", "A", 0, "t2", "f4"),
    ("B", "C", 0, "t3", "f5"),
    ("C", "B", 0, "t3", "f6"),
)


def mk_graph(gid, nodes, leader, arcs, t0=None) -> GraphSpec:
    return parse_graph_spec(
        {
            "id": gid,
            "nodes": list(nodes),
            "leader": leader,
            **({} if t0 is None else {"t0": t0}),
            "arcs": [
                {"from": s, "to": r, "tag": tag, "tam": tam, "fund": fund}
                for (s, r, tag, tam, fund) in arcs
            ],
        }
    )


def build_spec(gs: GraphSpec, delta: Fraction = DELTA) -> TreeSpec:
    """Tree spec with the CLI's t0 default (depth*delta + 1) when unset."""
    t0 = gs.t0
    if t0 is None:
        t0 = unfold(gs.graph, gs.leader).depth() * delta + 1
    return spec_from_graph(gs, t0=t0)


@functools.cache
def swap_gs() -> GraphSpec:
    return mk_graph("swap", "AB", "B", SWAP_ARCS, t0=100)


@functools.cache
def cyc3_gs() -> GraphSpec:
    return mk_graph("cyc3", "ABC", "A", CYC3_ARCS, t0=150)


@functools.cache
def k3_gs() -> GraphSpec:
    return mk_graph("k3", "ABC", "A", K3_ARCS, t0=200)


_GRAPHS = {"swap": swap_gs, "cyc3": cyc3_gs, "k3": k3_gs}


@functools.cache
def tree_spec(name: str) -> TreeSpec:
    return build_spec(_GRAPHS[name]())


@functools.cache
def compiled(name: str) -> CompiledBatch:
    return compile_tree(tree_spec(name), DELTA)


@functools.cache
def honest_res(name: str, adversary: str = "compliant", seed: int = 0) -> SimResult:
    """All-honest run of one of the canonical graphs."""
    ts = tree_spec(name)
    return run_protocol(
        (ts,), honest=frozenset(ts.xtree.source.nodes), adversary=adversary, seed=seed
    )


# ---------------------------------------------------------------- state mining

def state_after(res: SimResult, pred: Callable[[Action], bool], skip: int = 0) -> HbeState:
    """State right after the (skip+1)-th action matching ``pred``."""
    for a, s in res.run.steps:
        if pred(a):
            if skip == 0:
                return s
            skip -= 1
    raise AssertionError("no run step matched the predicate")


def state_before(res: SimResult, pred: Callable[[Action], bool]) -> HbeState:
    """State right before the first action matching ``pred``."""
    prev = res.run.initial
    for a, s in res.run.steps:
        if pred(a):
            return prev
        prev = s
    raise AssertionError("no run step matched the predicate")


def patch_env(s: HbeState, ch: str, **kw) -> HbeState:
    """Surgically rewrite one tam environment (for premise-isolation tests)."""
    return replace(s, tams={**s.tams, ch: replace(s.tams[ch], **kw)})


def find_ctlc(cb: CompiledBatch, sender: str, receiver: str, tag: int = 0) -> Ctlc:
    for c in cb.batch:
        cid = c.contract_id
        if (cid.sender, cid.receiver, cid.tag) == (sender, receiver, tag):
            return c
    raise AssertionError(f"no contract {sender}>{receiver}#{tag}")


def edge_at(tree: Xtree, index: int) -> Edge:
    """Edge by 1-based pre-order index (the numbering used in test comments)."""
    return tree.preorder[index - 1]


# ---------------------------------------------------------------- invariants

def assert_step_invariants(prev: HbeState, new: HbeState, label: str = "") -> None:
    """Fund conservation and secret monotonicity across one accepted step."""
    assert set(prev.tams) == set(new.tams), label
    for ch in prev.tams:
        p, n = prev.tams[ch], new.tams[ch]
        pav = {f for _o, f in p.available_funds}
        nav = {f for _o, f in n.available_funds}
        assert len(pav) == len(p.available_funds), f"{label}: a fund has two owners in {ch}"
        assert len(nav) == len(n.available_funds), f"{label}: a fund has two owners in {ch}"
        assert not nav & set(n.reserved_funds), (
            f"{label}: fund both available and reserved in {ch}"
        )
        assert nav | set(n.reserved_funds) == pav | set(p.reserved_funds), (
            f"{label}: funds not conserved in {ch}"
        )
        assert p.revealed_secrets <= n.revealed_secrets, (
            f"{label}: a revealed secret vanished in {ch}"
        )
        known_p = p.committed_secrets | p.revealed_secrets
        known_n = n.committed_secrets | n.revealed_secrets
        assert known_p <= known_n, f"{label}: a committed secret vanished in {ch}"


def assert_run_invariants(res: SimResult) -> None:
    prev = res.run.initial
    for i, (a, s) in enumerate(res.run.steps):
        assert_step_invariants(prev, s, label=f"step {i} ({type(a).__name__})")
        prev = s


# ---------------------------------------------------------------- oracle glue

def plain_graph(gs: GraphSpec):
    """GraphSpec -> the (nodes, arcs) tuples the oracle module consumes."""
    nodes = set(gs.graph.nodes)
    arcs = {(a.sender, a.receiver, a.tag) for a in gs.graph.arcs}
    return nodes, arcs


def plain_edges(tree: Xtree):
    """Xtree -> the oracle's (arc, walk) pair set."""
    return {
        (
            (e.arc.sender, e.arc.receiver, e.arc.tag),
            tuple((a.sender, a.receiver, a.tag) for a in e.walk),
        )
        for e in tree.preorder
    }


def plain_outcome(omega) -> frozenset:
    """Outcome (set of edges) -> the oracle's walk-set form."""
    return frozenset(
        tuple((a.sender, a.receiver, a.tag) for a in e.walk) for e in omega
    )
