"""Scheduler adversaries: the contract they must honour and what they do."""

from fractions import Fraction

import pytest

from ctlcsim.adversary import (
    ADVERSARIES,
    adversary_violation,
    agreed_elapse,
    get_adversary,
    round_cap,
)
from ctlcsim.honest import Run
from ctlcsim.outcomes import canonical_projection
from ctlcsim.runner import run_protocol
from ctlcsim.semantics import AdvBatch, Claim, CommitBatch, Elapse
from ctlcsim.verifier import claimed_edges, verify_end_to_end_security
from helpers import compiled, find_ctlc, honest_res, state_after, tree_spec

SWAP_BATCH = compiled("swap").batch
SWAP = honest_res("swap")
S_ADV = state_after(SWAP, lambda a: isinstance(a, AdvBatch))


def test_round_cap_scales_with_mempool():
    assert round_cap({}) == 10
    assert round_cap({"A": (), "B": ()}) == 10
    assert round_cap({"A": (Elapse(1), Elapse(2)), "B": (Elapse(3),)}) == 30


def test_agreed_elapse():
    blocked = (CommitBatch("A", SWAP_BATCH),)
    assert agreed_elapse({}) == 1
    assert agreed_elapse({"A": ()}) == 1
    assert agreed_elapse({"A": (Elapse(Fraction(5)),),
                          "B": (Elapse(Fraction(3)), Elapse(Fraction(7)))}) == 5
    assert agreed_elapse({"A": blocked}) is None
    assert agreed_elapse({"A": blocked + (Elapse(Fraction(2)),)}) == 2


class TestAdversaryViolation:
    run = Run(S_ADV)
    commit = CommitBatch("A", SWAP_BATCH)

    def test_invalid_actions_are_rejected(self):
        c = find_ctlc(compiled("swap"), "A", "B")
        bad = Claim(c, c.at_position(1), c.at_position(1).condition[0])
        why = adversary_violation(self.run, {}, frozenset(), bad)
        assert why is not None and why.startswith("invalid action")

    def test_honest_actions_must_come_from_the_mempool(self):
        why = adversary_violation(self.run, {"A": ()}, frozenset(), self.commit)
        assert why == "action bound to honest user A was never scheduled"

    def test_scheduled_honest_action_is_fine(self):
        mempool = {"A": (self.commit,)}
        assert adversary_violation(self.run, mempool, frozenset(), self.commit) is None

    def test_corrupted_users_are_unconstrained(self):
        assert adversary_violation(
            self.run, {}, frozenset({"A"}), self.commit
        ) is None

    def test_elapse_needs_unanimous_consent(self):
        mempool = {"A": (self.commit,)}
        why = adversary_violation(self.run, mempool, frozenset(), Elapse(Fraction(1)))
        assert why == "time elapse without unanimous consent"

    def test_elapse_may_not_exceed_the_agreed_bound(self):
        mempool = {"A": (Elapse(Fraction(2)),)}
        why = adversary_violation(self.run, mempool, frozenset(), Elapse(Fraction(3)))
        assert "exceeds the agreed bound 2" in why
        assert adversary_violation(
            self.run, mempool, frozenset(), Elapse(Fraction(2))
        ) is None

    def test_elapse_below_epsilon_is_rejected(self):
        mempool = {"A": (Elapse(Fraction(2)),)}
        why = adversary_violation(
            self.run, mempool, frozenset(), Elapse(Fraction(1, 1000))
        )
        assert "below the minimum step" in why
        # a custom epsilon moves the floor
        assert adversary_violation(
            self.run, mempool, frozenset(), Elapse(Fraction(1, 1000)),
            epsilon=Fraction(1, 2000),
        ) is None


def test_builtin_roster():
    assert set(ADVERSARIES) == {"compliant", "reorder", "withhold", "starve", "greedy"}
    assert get_adversary("reorder") is ADVERSARIES["reorder"]
    with pytest.raises(ValueError, match="unknown adversary"):
        get_adversary("chaotic-neutral")


@pytest.mark.parametrize("adversary", ["compliant", "reorder", "starve"])
@pytest.mark.parametrize("seed", [0, 3])
def test_honest_majority_settles_canonically_under_any_scheduler(adversary, seed):
    # with every user honest the scheduler only picks order, not outcome
    ts = tree_spec("cyc3")
    res = run_protocol((ts,), honest=frozenset("ABC"), adversary=adversary, seed=seed)
    assert res.final and res.stuck is None
    assert frozenset(claimed_edges(res)[ts.tree_id]) == canonical_projection(ts.xtree)


def test_withholding_adversary_never_gets_paid():
    ts = tree_spec("swap")
    res = run_protocol((ts,), honest=frozenset({"B"}), adversary="withhold", seed=0)
    assert res.corrupted == {"A"}
    assert res.final and res.stuck is None
    assert claimed_edges(res)[ts.tree_id] == ()
    # nobody lost collateral: the fund sets settle back where they started
    for ch in res.run.last.channels():
        assert res.run.last.tams[ch].available_funds == \
            res.run.initial.tams[ch].available_funds
        assert not res.run.last.tams[ch].reserved_funds


def test_greedy_adversary_completes_the_swap():
    ts = tree_spec("swap")
    res = run_protocol((ts,), honest=frozenset({"B"}), adversary="greedy", seed=0)
    assert res.final
    claimed = claimed_edges(res)[ts.tree_id]
    assert frozenset(claimed) == canonical_projection(ts.xtree)
    for report in verify_end_to_end_security(res):
        assert report.verdict == "pass", report


def test_starving_adversary_cannot_strand_funds():
    ts = tree_spec("swap")
    res = run_protocol((ts,), honest=frozenset({"B"}), adversary="starve", seed=0)
    assert res.final and res.stuck is None
    for report in verify_end_to_end_security(res):
        assert report.verdict == "pass", report


@pytest.mark.parametrize("adversary", sorted(ADVERSARIES))
def test_same_seed_same_run(adversary):
    ts = tree_spec("k3")
    kw = dict(honest=frozenset({"A"}), adversary=adversary, seed=7)
    r1 = run_protocol((ts,), **kw)
    r2 = run_protocol((ts,), **kw)
    assert r1.run.actions() == r2.run.actions()
    assert r1.run.last == r2.run.last
    assert (r1.final, r1.stuck) == (r2.final, r2.stuck)
