"""Scheduler adversaries.

The scheduler decides which action extends the run each step.  It may do
anything *valid*, with two reservations protecting honest users: actions
bound to an honest user may only be drawn from that user's current strategy
output (the mempool), and time may only pass with unanimous honest consent,
by at least ``epsilon`` and at most the smallest consented amount.

`adversary_violation` checks those three constraints for an arbitrary
candidate action; the four built-ins (`compliant`, `reorder`, `withhold`,
`starve`) construct actions that satisfy them, each as a deterministic
function of (run, mempool, corrupted set, seed).
"""
from __future__ import annotations

import hashlib
import random
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Optional

from .graph import NodeId
from .honest import Run
from .semantics import (
    Action,
    AdvCtlc,
    AuthCtlc,
    Claim,
    CommitBatch,
    Elapse,
    EnableCtlc,
    EnableSubC,
    Execute,
    HbeState,
    Refund,
    RevealSecret,
    ShareSecret,
    Timeout,
    actor,
    is_violation,
    owned_secrets,
    step,
    user_knowledge,
    users_of_batch,
)

# Per honest user: the actions their strategy scheduled this round.
Mempool = Mapping[NodeId, tuple[Action, ...]]

AdversaryFn = Callable[[Run, Mempool, frozenset, int], Optional[Action]]

#: Smallest time step an adversary may take (the runner passes delta/1000).
DEFAULT_EPSILON = Fraction(1, 100)

#: Bound on scheduler actions between two Elapses, per unit of mempool size.
ROUND_CAP_FACTOR = 10


def round_cap(mempool: Mempool) -> int:
    return ROUND_CAP_FACTOR * max(1, sum(len(v) for v in mempool.values()))


def agreed_elapse(mempool: Mempool) -> Optional[Fraction]:
    """Largest delta every honest user consents to; None while blocked.

    A user consents to an elapse iff their scheduled output is empty or
    contains an Elapse, and then to any delta up to the one they asked for.
    With no suggestions at all the bound defaults to 1.
    """
    bound: Optional[Fraction] = None
    for acts in mempool.values():
        if not acts:
            continue
        offers = [a.delta for a in acts if isinstance(a, Elapse)]
        if not offers:
            return None
        top = max(offers)
        bound = top if bound is None else min(bound, top)
    return bound if bound is not None else Fraction(1)


def adversary_violation(
    run: Run,
    mempool: Mempool,
    corrupted: frozenset,
    action: Action,
    *,
    epsilon: Fraction = DEFAULT_EPSILON,
) -> Optional[str]:
    """The reason `action` breaks the scheduler contract, or None if it
    is a legal next step of `run`."""
    nxt = step(run.last, action)
    if is_violation(nxt):
        return f"invalid action ({nxt})"
    if isinstance(action, Elapse):
        bound = agreed_elapse(mempool)
        if bound is None:
            return "time elapse without unanimous consent"
        if action.delta > bound:
            return f"elapse {action.delta} exceeds the agreed bound {bound}"
        if action.delta < epsilon:
            return f"elapse {action.delta} is below the minimum step {epsilon}"
        return None
    user = actor(action)
    if user is not None and user not in corrupted and action not in mempool.get(user, ()):
        return f"action bound to honest user {user} was never scheduled"
    return None


# ------------------------------------------------------------- built-ins

def _rng(seed: int, index: int, salt: str) -> random.Random:
    raw = hashlib.sha256(f"{salt}:{seed}:{index}".encode()).digest()
    return random.Random(int.from_bytes(raw[:8], "big"))


def _scheduled(mempool: Mempool) -> Iterator[Action]:
    """Mempool actions in user order, Elapses excluded."""
    for user in sorted(mempool):
        for a in mempool[user]:
            if not isinstance(a, Elapse):
                yield a


def _first_valid(state: HbeState, candidates: Iterable[Action]) -> Optional[Action]:
    for a in candidates:
        if not is_violation(step(state, a)):
            return a
    return None


def compliant(run: Run, mempool: Mempool, corrupted: frozenset, seed: int) -> Optional[Action]:
    """Include scheduled actions first-in-first-out, then let time pass."""
    a = _first_valid(run.last, _scheduled(mempool))
    if a is not None:
        return a
    bound = agreed_elapse(mempool)
    return None if bound is None else Elapse(bound)


def reorder(run: Run, mempool: Mempool, corrupted: frozenset, seed: int) -> Optional[Action]:
    """Include scheduled actions in a fresh seeded shuffle each step."""
    pool = list(_scheduled(mempool))
    _rng(seed, len(run.steps), "reorder").shuffle(pool)
    a = _first_valid(run.last, pool)
    if a is not None:
        return a
    bound = agreed_elapse(mempool)
    return None if bound is None else Elapse(bound)


def starve(run: Run, mempool: Mempool, corrupted: frozenset, seed: int) -> Optional[Action]:
    """Never include an action unless time is blocked, and then include the
    most recently scheduled one (last-in-first-out)."""
    bound = agreed_elapse(mempool)
    if bound is not None:
        return Elapse(bound)
    return _first_valid(run.last, reversed(list(_scheduled(mempool))))


def _claim_chase(state: HbeState, corrupted: frozenset) -> Iterator[Action]:
    """Claims (and the reveals/ferries that unlock them) reachable from what
    corrupted users currently know.  No setup work on anyone's behalf."""
    for ch in state.channels():
        env = state.tams[ch]
        for cid in sorted(env.enabled):
            ctlc = state.contract(cid)
            remnant = env.advertised.get(cid, frozenset())
            if not remnant or min(remnant) not in env.enabled[cid]:
                continue
            sc = ctlc.at_position(min(remnant))
            for alt in sc.condition:
                if alt <= env.revealed_secrets:
                    yield Claim(ctlc, sc, alt)
                    break
                for user in sorted(corrupted & state.membership[ch]):
                    if alt <= user_knowledge(state, user):
                        for s in sorted(alt - env.revealed_secrets):
                            if s.owner == user:
                                yield RevealSecret(user, ch, s)
                            else:
                                yield ShareSecret(user, ch, s)
        for cid, pos in sorted(env.claimed.items()):
            ctlc = state.contract(cid)
            if ctlc.receiver in corrupted:
                yield Execute(ctlc, ctlc.at_position(pos))


def _corrupted_pipeline(state: HbeState, corrupted: frozenset) -> Iterator[Action]:
    """Candidate actions letting corrupted users chase every claim their
    knowledge can satisfy.

    They play along through setup — commit, advertise their outgoing
    contracts, authorize, enable — because an unenabled ingoing contract
    pays nothing.  At execution time they turn greedy: reveal or ferry
    exactly the secrets their own top claims need, claim, cash out, and
    never lift a finger for anyone else's contract."""
    chs = state.channels()
    if not chs:
        return
    rep = state.tams[chs[0]]
    for user in sorted(corrupted):
        for b in sorted(rep.batches, key=lambda b: b.tree_id):
            if user in users_of_batch(b):
                mine = owned_secrets(b, user)
                if mine and not mine <= rep.committed_secrets:
                    yield CommitBatch(user, b)
    for ch in chs:
        env = state.tams[ch]
        for b in sorted(rep.batches, key=lambda b: b.tree_id):
            for ctlc in b:
                cid = ctlc.contract_id
                if not corrupted & {ctlc.sender, ctlc.receiver}:
                    continue
                if ctlc.sender in corrupted and cid not in env.advertised:
                    yield AdvCtlc(ch, ctlc)
                if cid in env.advertised and cid not in env.enabled:
                    for user in (ctlc.receiver, ctlc.sender):
                        if user in corrupted and (user, cid) not in env.authorizations:
                            yield AuthCtlc(user, ctlc)
                    yield EnableCtlc(ch, ctlc)
                if ctlc.sender in corrupted and cid in env.enabled:
                    missing = env.advertised.get(cid, frozenset()) - env.enabled[cid]
                    for p in sorted(missing):
                        yield EnableSubC(ctlc.sender, ctlc.at_position(p))
        for cid in sorted(env.enabled):
            ctlc = state.contract(cid)
            user = ctlc.receiver
            if user not in corrupted or user not in state.membership[ch]:
                continue
            remnant = env.advertised.get(cid, frozenset())
            if not remnant or min(remnant) not in env.enabled[cid]:
                continue
            sc = ctlc.at_position(min(remnant))
            know = user_knowledge(state, user)
            for alt in sc.condition:
                if alt <= env.revealed_secrets:
                    yield Claim(ctlc, sc, alt)
                    break
                if alt <= know:
                    for s in sorted(alt - env.revealed_secrets):
                        if s.owner == user:
                            yield RevealSecret(user, ch, s)
                        else:
                            yield ShareSecret(user, ch, s)
                    break
        for cid, pos in sorted(env.claimed.items()):
            ctlc = state.contract(cid)
            if ctlc.receiver in corrupted:
                yield Execute(ctlc, ctlc.at_position(pos))
        for cid in sorted(env.enabled):
            ctlc = state.contract(cid)
            if ctlc.sender not in corrupted:
                continue
            remnant = env.advertised.get(cid, frozenset())
            if not remnant:
                continue
            sc = ctlc.at_position(min(remnant))
            if sc.timelock <= env.time:
                # recover the sender's own stake once claims have lapsed
                yield Timeout(ctlc, sc) if len(remnant) > 1 else Refund(ctlc)


def withhold(run: Run, mempool: Mempool, corrupted: frozenset, seed: int) -> Optional[Action]:
    """Corrupted users sit out the protocol entirely; the only thing they do
    is pounce on claims already satisfiable from what they know."""
    a = _first_valid(run.last, _claim_chase(run.last, corrupted))
    if a is not None:
        return a
    a = _first_valid(run.last, _scheduled(mempool))
    if a is not None:
        return a
    bound = agreed_elapse(mempool)
    return None if bound is None else Elapse(bound)


def greedy(run: Run, mempool: Mempool, corrupted: frozenset, seed: int) -> Optional[Action]:
    """Corrupted users play along through setup, then run a greedy claim
    pipeline ahead of the honest queue instead of their share of the
    protocol."""
    a = _first_valid(run.last, _corrupted_pipeline(run.last, corrupted))
    if a is not None:
        return a
    a = _first_valid(run.last, _scheduled(mempool))
    if a is not None:
        return a
    bound = agreed_elapse(mempool)
    return None if bound is None else Elapse(bound)


ADVERSARIES: dict[str, AdversaryFn] = {
    "compliant": compliant,
    "reorder": reorder,
    "withhold": withhold,
    "starve": starve,
    "greedy": greedy,
}


def get_adversary(name: str) -> AdversaryFn:
    try:
        return ADVERSARIES[name]
    except KeyError:
        raise ValueError(
            f"unknown adversary {name!r}; choose from {', '.join(sorted(ADVERSARIES))}"
        ) from None
