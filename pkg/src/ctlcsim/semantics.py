"""Small-step execution semantics over a set of tams.

State is a vector of per-tam environments sharing one clock and one global
batch set.  Contracts progress through advertise -> authorize -> enable ->
(claim -> execute | timeout* -> refund); each transition is one of thirteen
rules, applied by `step`.  Rule premises are checked in a fixed order and the
first failing premise produces a Violation naming the rule and a stable code,
so negative tests can pin down exactly which guard tripped.

Contract lifecycle bookkeeping is keyed by contract id: `advertised` and
`enabled` map an id to the set of subcontract positions still present in the
advertisement remnant / enabled remnant, and `claimed` maps an id to the one
position that was claimed.  The full contract body is recovered from the
global batch set.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Optional, Union

from .graph import DomainError, NodeId
from .synth import Batch, ContractId, Ctlc, FundToken, Secret, Subcontract, TreeSpec, validate_treeobj

Time = Fraction


# ---------------------------------------------------------------- actions

@dataclass(frozen=True)
class AdvBatch:
    batch: Batch


@dataclass(frozen=True)
class CommitBatch:
    user: NodeId
    batch: Batch


@dataclass(frozen=True)
class AdvCtlc:
    tam: str
    ctlc: Ctlc


@dataclass(frozen=True)
class AuthCtlc:
    user: NodeId
    ctlc: Ctlc


@dataclass(frozen=True)
class EnableCtlc:
    tam: str
    ctlc: Ctlc


@dataclass(frozen=True)
class EnableSubC:
    user: NodeId
    subcontract: Subcontract


@dataclass(frozen=True)
class RevealSecret:
    user: NodeId
    tam: str
    secret: Secret


@dataclass(frozen=True)
class ShareSecret:
    # tam is the destination; the source tam is found existentially
    user: NodeId
    tam: str
    secret: Secret


@dataclass(frozen=True)
class Timeout:
    ctlc: Ctlc
    subcontract: Subcontract


@dataclass(frozen=True)
class Refund:
    ctlc: Ctlc


@dataclass(frozen=True)
class Claim:
    ctlc: Ctlc
    subcontract: Subcontract
    secrets: frozenset[Secret]


@dataclass(frozen=True)
class Execute:
    ctlc: Ctlc
    subcontract: Subcontract


@dataclass(frozen=True)
class Elapse:
    delta: Fraction


Action = Union[
    AdvBatch, CommitBatch, AdvCtlc, AuthCtlc, EnableCtlc, EnableSubC,
    RevealSecret, ShareSecret, Timeout, Refund, Claim, Execute, Elapse,
]

# variants that only their named user may perform
USER_RESTRICTED = (CommitBatch, AuthCtlc, EnableSubC, RevealSecret, ShareSecret)


def actor(a: Action) -> Optional[NodeId]:
    """The user bound to a user-restricted action, else None."""
    return a.user if isinstance(a, USER_RESTRICTED) else None


def users_of_ctlc(c: Ctlc) -> frozenset[NodeId]:
    return frozenset({c.sender, c.receiver})


def users_of_batch(b: Batch) -> frozenset[NodeId]:
    out: set[NodeId] = set()
    for c in b:
        out |= users_of_ctlc(c)
    return frozenset(out)


def owned_secrets(b: Batch, user: NodeId) -> frozenset[Secret]:
    """S_A of a batch: the batch's secrets owned by this user."""
    return frozenset(s for s in b.all_secrets() if s.owner == user)


def user_knowledge(s: "HbeState", user: NodeId) -> frozenset[Secret]:
    """Every secret this user can produce: their own (from any advertised
    batch) plus whatever has been revealed on a tam they belong to."""
    out: set[Secret] = set()
    chs = s.channels()
    if chs:
        for b in s.tams[chs[0]].batches:  # batches are global
            out |= owned_secrets(b, user)
    for ch in chs:
        if user in s.membership[ch]:
            out |= s.tams[ch].revealed_secrets
    return frozenset(out)


# ---------------------------------------------------------------- state

@dataclass(frozen=True)
class TamEnv:
    committed_secrets: frozenset[Secret] = frozenset()
    revealed_secrets: frozenset[Secret] = frozenset()
    batches: frozenset[Batch] = frozenset()
    advertised: Mapping[ContractId, frozenset[int]] = field(default_factory=dict)
    authorizations: frozenset[tuple[NodeId, ContractId]] = frozenset()
    enabled: Mapping[ContractId, frozenset[int]] = field(default_factory=dict)
    claimed: Mapping[ContractId, int] = field(default_factory=dict)
    available_funds: frozenset[tuple[NodeId, FundToken]] = frozenset()
    reserved_funds: frozenset[FundToken] = frozenset()
    time: Time = Fraction(0)

    # dict-valued fields make the autogenerated hash unusable; states are
    # compared by equality only
    __hash__ = None  # type: ignore[assignment]

    def fund_available(self, owner: NodeId, f: FundToken) -> bool:
        return (owner, f) in self.available_funds


@dataclass(frozen=True)
class HbeState:
    tams: Mapping[str, TamEnv]
    membership: Mapping[str, frozenset[NodeId]]
    honest_users: frozenset[NodeId] = frozenset()

    __hash__ = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if set(self.tams) != set(self.membership):
            raise DomainError("tams and membership must cover the same tam ids")

    @property
    def time(self) -> Time:
        # all tams tick together; any representative works
        return next(iter(self.tams.values())).time if self.tams else Fraction(0)

    def channels(self) -> tuple[str, ...]:
        return tuple(sorted(self.tams))

    @cached_property
    def contract_index(self) -> Mapping[ContractId, Ctlc]:
        # batches are global, so any tam's batch set carries all contracts
        out: dict[ContractId, Ctlc] = {}
        for ch in self.channels():
            for b in self.tams[ch].batches:
                for c in b:
                    out[c.contract_id] = c
            break
        return out

    def contract(self, cid: ContractId) -> Optional[Ctlc]:
        return self.contract_index.get(cid)

    def home_channel(self, cid: ContractId) -> Optional[str]:
        """The tam currently advertising this contract (unique in practice)."""
        for ch in self.channels():
            if cid in self.tams[ch].advertised:
                return ch
        return None


@dataclass(frozen=True)
class Violation:
    """A rule refused to fire; `code` names the first failed premise."""

    rule: str
    code: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.rule}/{self.code}" + (f": {self.detail}" if self.detail else "")


StepResult = Union[HbeState, Violation]


def is_violation(x: StepResult) -> bool:
    return isinstance(x, Violation)


def _set(s: HbeState, ch: str, env: TamEnv) -> HbeState:
    tams = dict(s.tams)
    tams[ch] = env
    return replace(s, tams=tams)


# ---------------------------------------------------------------- the rules

def step(s: HbeState, a: Action) -> StepResult:
    """Apply one action; returns the next state or a Violation."""
    handler = _RULES.get(type(a))
    if handler is None:
        return Violation("step", "unknown-action", repr(a))
    return handler(s, a)


def _adv_batch(s: HbeState, a: AdvBatch) -> StepResult:
    b = a.batch
    # well-formedness: structural coherence, then at least one honest party
    for c in b:
        if c.contract_id.tree_id != b.tree_id:
            return Violation("advBatch", "malformed-batch", f"{c.contract_id} in batch {b.tree_id}")
        if any(sc.timelock <= 0 for sc in c.subcontracts):
            return Violation("advBatch", "malformed-batch", f"non-positive timelock in {c.contract_id}")
    if not (users_of_batch(b) & s.honest_users):
        return Violation("advBatch", "no-honest-user", b.tree_id)
    for ch in s.channels():
        for other in s.tams[ch].batches:
            if other.tree_id == b.tree_id and other != b:
                return Violation("advBatch", "duplicate-advertisement",
                                 f"conflicting batch for tree {b.tree_id}")
        break
    for c in b:
        placeable = [
            ch for ch in s.channels()
            if s.tams[ch].fund_available(c.sender, c.fund)
        ]
        if not placeable:
            return Violation("advBatch", "fund-unavailable", str(c.fund))
        if not any(users_of_ctlc(c) <= s.membership[ch] for ch in placeable):
            return Violation("advBatch", "users-not-confirmed", str(c.contract_id))
    fresh = b.all_secrets()
    for ch in s.channels():
        env = s.tams[ch]
        used = fresh & (env.committed_secrets | env.revealed_secrets)
        if used:
            return Violation("advBatch", "secrets-not-fresh",
                             f"{sorted(map(str, used))[0]} already used in {ch}")
    tams = {ch: replace(env, batches=env.batches | {b}) for ch, env in s.tams.items()}
    return replace(s, tams=tams)


def _commit_batch(s: HbeState, a: CommitBatch) -> StepResult:
    chans = s.channels()
    if not chans:
        return Violation("commitBatch", "unknown-batch", a.batch.tree_id)
    if a.batch not in s.tams[chans[0]].batches:
        return Violation("commitBatch", "unknown-batch", a.batch.tree_id)
    if a.user not in users_of_batch(a.batch):
        return Violation("commitBatch", "not-a-party", a.user)
    mine = owned_secrets(a.batch, a.user)
    for ch in chans:
        env = s.tams[ch]
        used = mine & (env.committed_secrets | env.revealed_secrets)
        if used:
            return Violation("commitBatch", "secrets-not-fresh",
                             f"{sorted(map(str, used))[0]} already used in {ch}")
    tams = {
        ch: replace(env, committed_secrets=env.committed_secrets | mine)
        for ch, env in s.tams.items()
    }
    return replace(s, tams=tams)


def _adv_ctlc(s: HbeState, a: AdvCtlc) -> StepResult:
    if a.tam not in s.tams:
        return Violation("advCTLC", "unknown-tam", a.tam)
    env = s.tams[a.tam]
    c = a.ctlc
    if not any(c in b.ctlcs for b in env.batches):
        return Violation("advCTLC", "unknown-contract", str(c.contract_id))
    if c.contract_id in env.advertised:
        return Violation("advCTLC", "duplicate-advertisement", str(c.contract_id))
    if not c.all_secrets() <= env.committed_secrets:
        return Violation("advCTLC", "secrets-not-committed", str(c.contract_id))
    if not env.fund_available(c.sender, c.fund):
        return Violation("advCTLC", "fund-unavailable", str(c.fund))
    if not (users_of_ctlc(c) & s.honest_users):
        return Violation("advCTLC", "no-honest-user", str(c.contract_id))
    if not users_of_ctlc(c) <= s.membership[a.tam]:
        return Violation("advCTLC", "users-not-confirmed", str(c.contract_id))
    adv = dict(env.advertised)
    adv[c.contract_id] = frozenset(sc.position for sc in c.subcontracts)
    return _set(s, a.tam, replace(env, advertised=adv))


def _auth_ctlc(s: HbeState, a: AuthCtlc) -> StepResult:
    cid = a.ctlc.contract_id
    ch = s.home_channel(cid)
    if ch is None:
        return Violation("authCTLC", "contract-not-advertised", str(cid))
    env = s.tams[ch]
    if (a.user, cid) in env.authorizations:
        return Violation("authCTLC", "duplicate-authorization", f"{a.user} {cid}")
    if a.user == a.ctlc.receiver:
        pass
    elif a.user == a.ctlc.sender:
        if (a.ctlc.receiver, cid) not in env.authorizations:
            return Violation("authCTLC", "receiver-not-authorized", str(cid))
    else:
        return Violation("authCTLC", "not-a-party", a.user)
    if not env.fund_available(a.ctlc.sender, a.ctlc.fund):
        return Violation("authCTLC", "fund-unavailable", str(a.ctlc.fund))
    return _set(s, ch, replace(env, authorizations=env.authorizations | {(a.user, cid)}))


def _enable_ctlc(s: HbeState, a: EnableCtlc) -> StepResult:
    if a.tam not in s.tams:
        return Violation("enableCTLC", "unknown-tam", a.tam)
    env = s.tams[a.tam]
    c = a.ctlc
    cid = c.contract_id
    remnant = env.advertised.get(cid)
    if remnant is None:
        return Violation("enableCTLC", "contract-not-advertised", str(cid))
    if cid in env.enabled:
        return Violation("enableCTLC", "already-enabled", str(cid))
    # the rule enables the subcontract whose position equals the remnant size;
    # for a never-enabled contract that is its top-level rung
    top = len(remnant)
    if top not in remnant:
        return Violation("enableCTLC", "not-top-level", f"{cid} remnant {sorted(remnant)}")
    aut = {(c.sender, cid), (c.receiver, cid)}
    if not aut <= env.authorizations:
        return Violation("enableCTLC", "missing-authorization", str(cid))
    if not env.fund_available(c.sender, c.fund):
        return Violation("enableCTLC", "fund-unavailable", str(c.fund))
    en = dict(env.enabled)
    en[cid] = frozenset({top})
    return _set(s, a.tam, replace(
        env,
        enabled=en,
        authorizations=env.authorizations - aut,
        available_funds=env.available_funds - {(c.sender, c.fund)},
        reserved_funds=env.reserved_funds | {c.fund},
    ))


def _enable_subc(s: HbeState, a: EnableSubC) -> StepResult:
    cid = a.subcontract.contract_id
    ch = s.home_channel(cid)
    if ch is None:
        return Violation("enableSubC", "contract-not-advertised", str(cid))
    env = s.tams[ch]
    if cid not in env.enabled:
        return Violation("enableSubC", "contract-not-enabled", str(cid))
    pos = a.subcontract.position
    if pos not in env.advertised[cid] or pos in env.enabled[cid]:
        return Violation("enableSubC", "not-in-remnant", f"{cid} position {pos}")
    if a.user != a.subcontract.sender:
        return Violation("enableSubC", "wrong-user", a.user)
    en = dict(env.enabled)
    en[cid] = env.enabled[cid] | {pos}
    return _set(s, ch, replace(env, enabled=en))


def _reveal_secret(s: HbeState, a: RevealSecret) -> StepResult:
    if a.tam not in s.tams:
        return Violation("revealSecret", "unknown-tam", a.tam)
    env = s.tams[a.tam]
    if a.secret in env.revealed_secrets:
        return Violation("revealSecret", "already-revealed", str(a.secret))
    if a.secret not in env.committed_secrets:
        return Violation("revealSecret", "secret-not-committed", str(a.secret))
    if a.user != a.secret.owner:
        return Violation("revealSecret", "wrong-user", a.user)
    if a.user not in s.membership[a.tam]:
        return Violation("revealSecret", "users-not-confirmed", a.user)
    return _set(s, a.tam, replace(
        env,
        committed_secrets=env.committed_secrets - {a.secret},
        revealed_secrets=env.revealed_secrets | {a.secret},
    ))


def _share_secret(s: HbeState, a: ShareSecret) -> StepResult:
    if a.tam not in s.tams:
        return Violation("shareSecret", "unknown-tam", a.tam)
    env = s.tams[a.tam]
    if a.secret in env.revealed_secrets:
        return Violation("shareSecret", "already-revealed", str(a.secret))
    sources = [
        ch for ch in s.channels()
        if ch != a.tam and a.secret in s.tams[ch].revealed_secrets
    ]
    if not sources:
        return Violation("shareSecret", "secret-not-revealed", str(a.secret))
    if a.user not in s.membership[a.tam]:
        return Violation("shareSecret", "users-not-confirmed", f"{a.user} not in {a.tam}")
    if not any(a.user in s.membership[ch] for ch in sources):
        return Violation("shareSecret", "users-not-confirmed",
                         f"{a.user} in no tam where {a.secret} is revealed")
    return _set(s, a.tam, replace(env, revealed_secrets=env.revealed_secrets | {a.secret}))


def _timeout(s: HbeState, a: Timeout) -> StepResult:
    cid = a.ctlc.contract_id
    if a.subcontract.contract_id != cid:
        return Violation("timeout", "unknown-subcontract", str(a.subcontract))
    ch = s.home_channel(cid)
    if ch is None:
        return Violation("timeout", "contract-not-advertised", str(cid))
    env = s.tams[ch]
    if cid not in env.enabled:
        return Violation("timeout", "contract-not-enabled", str(cid))
    remnant = env.advertised[cid]
    if len(remnant) <= 1:
        return Violation("timeout", "singleton-contract", str(cid))
    pos = a.subcontract.position
    if pos not in remnant:
        return Violation("timeout", "unknown-subcontract", f"{cid} position {pos}")
    if pos != min(remnant):
        return Violation("timeout", "not-top-level", f"{cid} position {pos}")
    if a.subcontract.timelock > env.time:
        return Violation("timeout", "timelock-not-reached",
                         f"{a.subcontract.timelock} > {env.time}")
    adv = dict(env.advertised)
    adv[cid] = remnant - {pos}
    en = dict(env.enabled)
    en[cid] = env.enabled[cid] - {pos}  # no-op when the rung was never enabled
    return _set(s, ch, replace(env, advertised=adv, enabled=en))


def _refund(s: HbeState, a: Refund) -> StepResult:
    cid = a.ctlc.contract_id
    ch = s.home_channel(cid)
    if ch is None:
        return Violation("refund", "contract-not-advertised", str(cid))
    env = s.tams[ch]
    if cid not in env.enabled:
        return Violation("refund", "contract-not-enabled", str(cid))
    remnant = env.advertised[cid]
    if len(remnant) != 1:
        return Violation("refund", "not-singleton", f"{cid} remnant {sorted(remnant)}")
    sc = a.ctlc.at_position(next(iter(remnant)))
    if env.time < sc.timelock:
        return Violation("refund", "timelock-not-reached", f"{sc.timelock} > {env.time}")
    adv = dict(env.advertised)
    del adv[cid]
    en = dict(env.enabled)
    del en[cid]
    return _set(s, ch, replace(
        env,
        advertised=adv,
        enabled=en,
        available_funds=env.available_funds | {(a.ctlc.sender, a.ctlc.fund)},
        reserved_funds=env.reserved_funds - {a.ctlc.fund},
    ))


def _claim(s: HbeState, a: Claim) -> StepResult:
    cid = a.ctlc.contract_id
    ch = s.home_channel(cid)
    if ch is None:
        return Violation("claim", "contract-not-advertised", str(cid))
    env = s.tams[ch]
    pos = a.subcontract.position
    if cid not in env.enabled:
        return Violation("claim", "contract-not-enabled", str(cid))
    if a.subcontract.contract_id != cid or pos not in env.enabled[cid]:
        return Violation("claim", "subcontract-not-enabled", f"{cid} position {pos}")
    if a.secrets not in a.subcontract.condition:
        return Violation("claim", "bad-witness", f"{cid} position {pos}")
    if not a.secrets <= env.revealed_secrets:
        return Violation("claim", "secrets-not-revealed",
                         f"{sorted(map(str, a.secrets - env.revealed_secrets))[0]}")
    if a.ctlc.fund not in env.reserved_funds:
        return Violation("claim", "fund-not-reserved", str(a.ctlc.fund))
    if pos != min(env.advertised[cid]):
        return Violation("claim", "not-top-level", f"{cid} position {pos}")
    adv = dict(env.advertised)
    del adv[cid]
    en = dict(env.enabled)
    del en[cid]
    cla = dict(env.claimed)
    cla[cid] = pos
    return _set(s, ch, replace(env, advertised=adv, enabled=en, claimed=cla))


def _execute(s: HbeState, a: Execute) -> StepResult:
    cid = a.ctlc.contract_id
    ch = next((c for c in s.channels() if cid in s.tams[c].claimed), None)
    if ch is None:
        return Violation("execute", "contract-not-claimed", str(cid))
    env = s.tams[ch]
    if a.subcontract.contract_id != cid or env.claimed[cid] != a.subcontract.position:
        return Violation("execute", "wrong-subcontract",
                         f"{cid} claimed at {env.claimed[cid]}")
    if a.ctlc.fund not in env.reserved_funds:
        return Violation("execute", "fund-not-reserved", str(a.ctlc.fund))
    cla = dict(env.claimed)
    del cla[cid]
    return _set(s, ch, replace(
        env,
        claimed=cla,
        available_funds=env.available_funds | {(a.ctlc.receiver, a.ctlc.fund)},
        reserved_funds=env.reserved_funds - {a.ctlc.fund},
    ))


def _elapse(s: HbeState, a: Elapse) -> StepResult:
    if not isinstance(a.delta, Fraction) or a.delta <= 0:
        return Violation("elapse", "non-positive-delta", str(a.delta))
    tams = {ch: replace(env, time=env.time + a.delta) for ch, env in s.tams.items()}
    return replace(s, tams=tams)


_RULES = {
    AdvBatch: _adv_batch,
    CommitBatch: _commit_batch,
    AdvCtlc: _adv_ctlc,
    AuthCtlc: _auth_ctlc,
    EnableCtlc: _enable_ctlc,
    EnableSubC: _enable_subc,
    RevealSecret: _reveal_secret,
    ShareSecret: _share_secret,
    Timeout: _timeout,
    Refund: _refund,
    Claim: _claim,
    Execute: _execute,
    Elapse: _elapse,
}


# ---------------------------------------------------------------- construction

def initial_state(
    specs: Iterable[TreeSpec],
    membership: Mapping[str, frozenset[NodeId]],
    start: Time = Fraction(0),
    honest: frozenset[NodeId] = frozenset(),
) -> HbeState:
    """Mint every spec'd fund under its sender; everything else empty."""
    specs = tuple(specs)
    validate_treeobj(specs)
    funds: dict[str, set[tuple[NodeId, FundToken]]] = {ch: set() for ch in membership}
    for ts in specs:
        for e, (tam, fund) in ts.spec.items():
            if tam not in membership:
                raise DomainError(f"spec {ts.tree_id} places edge {e} on unknown tam {tam}")
            funds[tam].add((fund.owner, fund))
    tams = {
        ch: TamEnv(available_funds=frozenset(funds[ch]), time=start)
        for ch in membership
    }
    return HbeState(
        tams=tams,
        membership={ch: frozenset(m) for ch, m in membership.items()},
        honest_users=frozenset(honest),
    )


def is_liquid(specs: Iterable[TreeSpec], s: HbeState) -> bool:
    return not liquidity_gaps(specs, s)


def liquidity_gaps(specs: Iterable[TreeSpec], s: HbeState) -> list[str]:
    """Funds a spec needs that are not currently available where expected."""
    gaps: list[str] = []
    for ts in specs:
        for _e, (tam, fund) in sorted(ts.spec.items(), key=lambda kv: str(kv[0])):
            env = s.tams.get(tam)
            if env is None or not env.fund_available(fund.owner, fund):
                gap = f"{ts.tree_id}: fund {fund} not available on {tam}"
                if gap not in gaps:
                    gaps.append(gap)
    return gaps


# ---------------------------------------------------------------- enumeration

def enabled_actions(
    s: HbeState,
    known: Optional[Mapping[NodeId, frozenset[Secret]]] = None,
    candidate_batches: Iterable[Batch] = (),
) -> list[Action]:
    """Every action that `step` would accept in `s`, in a deterministic order.

    Complete except for batch proposals and time: AdvBatch is only probed for
    the supplied `candidate_batches` (proposals cannot be invented from state
    alone), and Elapse — valid for any positive delta — is represented by a
    single suggestion targeting the next pending timelock.  When a knowledge
    map is given, RevealSecret candidates are limited to secrets the owner
    actually holds.
    """
    found: list[Action] = []

    def probe(a: Action) -> None:
        if not is_violation(step(s, a)):
            found.append(a)

    for b in candidate_batches:
        probe(AdvBatch(b))
    seen_batches = sorted(
        {b for ch in s.channels() for b in s.tams[ch].batches},
        key=lambda b: b.tree_id,
    )
    all_users = sorted({u for m in s.membership.values() for u in m})
    for b in seen_batches:
        for u in sorted(users_of_batch(b)):
            probe(CommitBatch(u, b))
    for ch in s.channels():
        env = s.tams[ch]
        for b in seen_batches:
            for c in b:
                probe(AdvCtlc(ch, c))
                probe(EnableCtlc(ch, c))
        for cid in sorted(env.advertised):
            c = s.contract(cid)
            if c is None:
                continue
            for u in sorted(users_of_ctlc(c)):
                probe(AuthCtlc(u, c))
            for sc in c.subcontracts:
                probe(EnableSubC(sc.sender, sc))
                probe(Timeout(c, sc))
                for alt in sc.condition:
                    probe(Claim(c, sc, alt))
            probe(Refund(c))
        for cid in sorted(env.claimed):
            c = s.contract(cid)
            if c is not None:
                probe(Execute(c, c.at_position(env.claimed[cid])))
        for sec in sorted(env.committed_secrets):
            if known is not None and sec not in known.get(sec.owner, frozenset()):
                continue
            probe(RevealSecret(sec.owner, ch, sec))
        foreign = frozenset().union(
            frozenset(),
            *(s.tams[o].revealed_secrets for o in s.channels() if o != ch),
        )
        for sec in sorted(foreign - env.revealed_secrets):
            for u in all_users:
                probe(ShareSecret(u, ch, sec))
    probe(Elapse(next_deadline_delta(s)))
    return found


def next_deadline_delta(s: HbeState) -> Fraction:
    """Time until the next strictly-future timelock of any live contract, or 1."""
    t = s.time
    deadlines: list[Fraction] = []
    for ch in s.channels():
        env = s.tams[ch]
        for cid, remnant in env.advertised.items():
            c = s.contract(cid)
            if c is None:
                continue
            deadlines.extend(
                c.at_position(p).timelock for p in remnant
                if c.at_position(p).timelock > t
            )
    return min(deadlines) - t if deadlines else Fraction(1)
