"""Property tests: generated graphs, independent recomputation, round-trips."""

import random
from fractions import Fraction

from hypothesis import assume, given, settings, strategies as st

from ctlcsim.graph import (
    graph_spec_to_json,
    is_in_semiconnected,
    is_suffix,
    is_walk,
    parse_graph_spec,
    random_graph_spec,
)
from ctlcsim.outcomes import (
    canonical_projection,
    check_full_coverage,
    enumerate_outcomes,
    failed_predicate,
    is_underwater,
    project_arcs,
)
from ctlcsim.runner import run_protocol, serialize
from ctlcsim.synth import (
    compile_tree,
    parse_tree_spec,
    spec_from_graph,
    tree_spec_to_json,
)
from ctlcsim.unfold import complete_graph_size_formula, unfold
from helpers import (
    assert_run_invariants,
    plain_edges,
    plain_graph,
    plain_outcome,
)
from oracles import oracle_outcomes, oracle_size_formula, oracle_unfold

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def gen_graph(seed, max_nodes=4):
    return random_graph_spec(random.Random(seed), max_nodes)


def gen_spec(seed, max_nodes=4):
    gs = gen_graph(seed, max_nodes)
    depth = unfold(gs.graph, gs.leader).depth()
    t0 = gs.t0 if gs.t0 is not None else depth * Fraction(10) + 1
    return spec_from_graph(gs, t0=t0)


@given(seeds)
def test_unfolding_matches_the_oracle(seed):
    gs = gen_graph(seed)
    t = unfold(gs.graph, gs.leader)
    nodes, arcs = plain_graph(gs)
    assert plain_edges(t) == oracle_unfold(nodes, arcs, gs.leader)


@given(seeds)
def test_tree_walks_are_graph_walks_into_the_leader(seed):
    gs = gen_graph(seed)
    t = unfold(gs.graph, gs.leader)
    walks = {e.walk for e in t.edges}
    for e in t.edges:
        assert is_walk(e.walk)
        assert set(e.walk) <= gs.graph.arcs
        assert e.walk[-1].receiver == gs.leader
        # suffix closure: every root-end suffix is itself a tree walk
        for k in range(1, len(e.walk)):
            assert is_suffix(e.walk, e.walk[k:])
            assert e.walk[k:] in walks


@given(seeds)
def test_generated_graphs_are_in_semiconnected(seed):
    gs = gen_graph(seed)
    assert is_in_semiconnected(gs.graph, gs.leader)


@given(st.integers(min_value=2, max_value=8))
def test_size_formula_matches_its_recomputation(n):
    assert complete_graph_size_formula(n) == oracle_size_formula(n)


@settings(max_examples=40)
@given(seeds)
def test_outcome_enumeration_matches_the_oracle(seed):
    gs = gen_graph(seed)
    t = unfold(gs.graph, gs.leader)
    assume(0 < len(t) <= 10)
    nodes, _arcs = plain_graph(gs)
    edges = plain_edges(t)
    for user in sorted(nodes):
        got = {plain_outcome(w) for w in enumerate_outcomes(t, user, budget=10)}
        assert got == oracle_outcomes(edges, user)


@given(seeds)
def test_canonical_projection_is_valid_and_covering(seed):
    gs = gen_graph(seed)
    t = unfold(gs.graph, gs.leader)
    assume(len(t) > 0)
    omega = canonical_projection(t)
    assert check_full_coverage(gs.graph, t, omega)
    assert project_arcs(omega) == gs.graph.arcs
    for user in sorted(gs.graph.nodes):
        assert failed_predicate(t, user, omega) is None
        assert not is_underwater(gs.graph, user, project_arcs(omega))


@given(seeds)
def test_compiled_batch_invariants(seed):
    ts = gen_spec(seed)
    assume(len(ts.xtree) > 0)
    cb = compile_tree(ts, Fraction(10))
    for e, (c, sub, secrets) in cb.per_edge.items():
        assert c.sender == e.sender and c.receiver == e.receiver
        assert sub.level == e.depth
        assert sub.timelock == ts.t0 + sub.level * Fraction(10)
        assert secrets in sub.condition
        for s in secrets:
            assert s.tree_id == ts.tree_id
    for c in cb.batch:
        positions = [sub.position for sub in c.subcontracts]
        assert positions == list(range(1, len(c) + 1))
        locks = [sub.timelock for sub in c.subcontracts]
        assert locks == sorted(set(locks))


@given(seeds)
def test_graph_spec_json_round_trip(seed):
    gs = gen_graph(seed)
    assert parse_graph_spec(graph_spec_to_json(gs)) == gs


@given(seeds)
def test_tree_spec_json_round_trip(seed):
    ts = gen_spec(seed)
    assert parse_tree_spec(tree_spec_to_json(ts)) == ts


@settings(max_examples=25)
@given(seeds, st.sampled_from(["compliant", "reorder", "withhold", "starve", "greedy"]))
def test_runs_are_deterministic_and_conservative(seed, adversary):
    ts = gen_spec(seed, max_nodes=3)
    assume(len(ts.xtree) > 0)
    users = sorted({e.sender for e in ts.xtree.edges}
                   | {e.receiver for e in ts.xtree.edges})
    honest = frozenset(users[:1])
    res = run_protocol((ts,), honest=honest, adversary=adversary, seed=seed % 1000)
    assert_run_invariants(res)
    again = run_protocol((ts,), honest=honest, adversary=adversary, seed=seed % 1000)
    assert serialize(res) == serialize(again)


@settings(max_examples=25)
@given(seeds)
def test_all_honest_random_runs_settle_canonically(seed):
    ts = gen_spec(seed, max_nodes=3)
    assume(len(ts.xtree) > 0)
    users = frozenset({e.sender for e in ts.xtree.edges}
                      | {e.receiver for e in ts.xtree.edges})
    res = run_protocol((ts,), honest=users)
    assert res.final and res.stuck is None
    from ctlcsim.verifier import claimed_edges

    assert frozenset(claimed_edges(res)[ts.tree_id]) == canonical_projection(ts.xtree)
