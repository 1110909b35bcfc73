"""The honest participant strategy.

An honest user drives each configured tree through three phases:

* batch phase — propose the synthesized batch early enough that every level
  can be enabled one grid step at a time, then commit to its own secrets;
* enabling phase (before t0) — per edge, walk the contract through
  advertise -> authorize (receiver first) -> enable -> enable remaining
  rungs, but only once all child edges (the ones paying this user) are
  enabled, so setup proceeds leaf-to-root;
* execution phase (from t0) — reveal own secrets and claim ingoing edges
  top-down, execute anything claimed, ferry secrets between tams, and time
  out / refund expired rungs.

The strategy is a pure function of the observed run.  Its defining equation
is recursive: while any previously emitted action is still unexecuted and
still valid, the strategy re-emits exactly those pending actions and nothing
else; only when the pending set empties does it derive fresh actions from the
current state (falling back to a time-advance request whose delta lands on
the next t0 + j*delta grid point).  `honest_strategy` implements the
recursion literally; `StrategyCursor` computes the same outputs
incrementally and is what the simulation loop uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .graph import Arc, DomainError, NodeId
from .synth import CompiledBatch, Secret, TreeSpec, compile_tree, validate_treeobj
from .semantics import (
    Action, AdvBatch, AdvCtlc, AuthCtlc, Claim, CommitBatch, Elapse, EnableCtlc,
    EnableSubC, Execute, HbeState, Refund, RevealSecret, ShareSecret, Timeout,
    HbeState as _State, is_liquid, is_violation, owned_secrets, step,
)
from .unfold import Edge


# ---------------------------------------------------------------- runs

@dataclass(frozen=True)
class Run:
    """A run: the initial state and the executed (action, state) steps."""

    initial: HbeState
    steps: tuple[tuple[Action, HbeState], ...] = ()

    @property
    def last(self) -> HbeState:
        return self.steps[-1][1] if self.steps else self.initial

    def actions(self) -> tuple[Action, ...]:
        return tuple(a for a, _s in self.steps)

    def extended(self, action: Action, state: HbeState) -> "Run":
        return Run(self.initial, self.steps + ((action, state),))

    def prefix(self) -> "Run":
        if not self.steps:
            raise DomainError("the empty run has no prefix")
        return Run(self.initial, self.steps[:-1])


def validate_run(r: Run) -> None:
    """Replay every step and insist the recorded states match."""
    s = r.initial
    for i, (a, after) in enumerate(r.steps):
        res = step(s, a)
        if is_violation(res):
            raise DomainError(f"step {i} invalid: {a} -> {res}")
        if res != after:
            raise DomainError(f"step {i} recorded state diverges for {a}")
        s = after


# ---------------------------------------------------------------- bookkeeping

class _RunFacts:
    """What the sub-strategies need to know about past actions."""

    def __init__(self) -> None:
        self.seen: set[Action] = set()
        self.claims: set[tuple] = set()       # (contract id, position, witness)
        self.refunds: set[tuple] = set()      # contract ids refunded
        self.auths: set[tuple] = set()        # (user, contract id)

    def note(self, a: Action) -> None:
        self.seen.add(a)
        if isinstance(a, Claim):
            self.claims.add((a.ctlc.contract_id, a.subcontract.position, a.secrets))
        elif isinstance(a, Refund):
            self.refunds.add(a.ctlc.contract_id)
        elif isinstance(a, AuthCtlc):
            self.auths.add((a.user, a.ctlc.contract_id))

    @classmethod
    def of(cls, r: Run) -> "_RunFacts":
        f = cls()
        for a in r.actions():
            f.note(a)
        return f


def _rep_env(s: HbeState):
    return s.tams[s.channels()[0]]


def _revealed_union(s: HbeState) -> frozenset[Secret]:
    out: frozenset[Secret] = frozenset()
    for ch in s.channels():
        out |= s.tams[ch].revealed_secrets
    return out


def _committed_union(s: HbeState) -> frozenset[Secret]:
    out: frozenset[Secret] = frozenset()
    for ch in s.channels():
        out |= s.tams[ch].committed_secrets
    return out


# ---------------------------------------------------------------- the strategy

class _Tree:
    """Per-tree lookups shared by the sub-strategies."""

    def __init__(self, cb: CompiledBatch) -> None:
        self.cb = cb
        self.ts = cb.spec
        t = self.ts.xtree
        self.preorder = t.preorder
        self.depth = t.depth()
        self.root_edges = t.root_edges()
        self.children = t.children
        self.family: dict[Arc, list[Edge]] = {}
        for e in self.preorder:
            self.family.setdefault(e.arc, []).append(e)

    def channel(self, e: Edge) -> str:
        return self.ts.placement(e)[0]


class _Core:
    """Derives the fresh-output part of the strategy at one state."""

    def __init__(self, user: NodeId, trees: Sequence[_Tree], specs: tuple[TreeSpec, ...]):
        self.user = user
        self.trees = trees
        self.specs = specs

    # ----- batch phase -----

    def _batch_phase(self, s: HbeState, out: list[Action]) -> None:
        if not s.tams:
            return
        env = _rep_env(s)
        liquid = is_liquid(self.specs, s)
        for tr in self.trees:
            b = tr.cb.batch
            if not liquid:
                continue
            if b not in env.batches:
                if s.time <= tr.ts.t0 - tr.depth * tr.cb.delta:
                    out.append(AdvBatch(b))
            else:
                mine = owned_secrets(b, self.user)
                if mine and not mine <= env.committed_secrets and s.time < tr.ts.t0:
                    out.append(CommitBatch(self.user, b))

    # ----- enabling phase -----

    def _sub_enabled_at(self, s: HbeState, tr: _Tree, e: Edge, ch: str) -> bool:
        ctlc, sc, _ = tr.cb.per_edge[e]
        return sc.position in s.tams[ch].enabled.get(ctlc.contract_id, frozenset())

    def _sub_enabled_anywhere(self, s: HbeState, tr: _Tree, e: Edge) -> bool:
        return any(self._sub_enabled_at(s, tr, e, ch) for ch in s.channels())

    def _ingoing(self, s: HbeState, tr: _Tree, e: Edge) -> bool:
        if e.receiver == self.user:
            return True
        for child in tr.children(e):
            if not self._sub_enabled_at(s, tr, child, tr.channel(child)):
                return False
        if not s.time < tr.ts.t0:
            return False
        if tr.cb.batch not in _rep_env(s).batches:
            return False
        if self._sub_enabled_anywhere(s, tr, e):
            return False
        return True

    def _enable_phase_edge(self, s: HbeState, tr: _Tree, e: Edge,
                           facts: _RunFacts) -> Optional[Action]:
        if s.time >= tr.ts.t0:
            return None
        if not self._ingoing(s, tr, e):
            return None
        ctlc, sc, _ = tr.cb.per_edge[e]
        cid = ctlc.contract_id
        ch = tr.channel(e)
        env = s.tams[ch]
        adv = env.advertised.get(cid)
        advertised = adv is not None and sc.position in adv
        en = env.enabled.get(cid)
        outgoing = e.sender == self.user
        if outgoing and advertised and en is not None and sc.position not in en:
            return EnableSubC(self.user, sc)
        if outgoing and advertised and en is None \
                and {(ctlc.sender, cid), (ctlc.receiver, cid)} <= env.authorizations:
            return EnableCtlc(ch, ctlc)
        if advertised and en is None \
                and env.fund_available(ctlc.sender, ctlc.fund) \
                and (self.user != ctlc.sender or (ctlc.receiver, cid) in env.authorizations):
            if (self.user, cid) not in facts.auths:
                return AuthCtlc(self.user, ctlc)
            return None
        if outgoing and not advertised and not self._sub_enabled_anywhere(s, tr, e) \
                and ctlc.all_secrets() <= _committed_union(s):
            return AdvCtlc(ch, ctlc)
        return None

    # ----- expiry phase -----

    def _expiry_edge(self, s: HbeState, tr: _Tree, e: Edge,
                     facts: _RunFacts) -> Optional[Action]:
        ctlc, sc, _ = tr.cb.per_edge[e]
        cid = ctlc.contract_id
        env = s.tams[tr.channel(e)]
        en = env.enabled.get(cid)
        if en is None or self.user not in (ctlc.sender, ctlc.receiver):
            return None
        if sc.position not in en or sc.timelock > env.time:
            return None
        if len(en) > 1 and (sc.position - 1) not in en:
            return Timeout(ctlc, sc)
        if len(en) == 1 and cid not in facts.refunds:
            return Refund(ctlc)
        return None

    # ----- execution phase -----

    def _claimable(self, s: HbeState, tr: _Tree, e: Edge) -> bool:
        """Enabled and first in line: no live rung with an earlier timeout."""
        ctlc, sc, _ = tr.cb.per_edge[e]
        cid = ctlc.contract_id
        env = s.tams[tr.channel(e)]
        if sc.position not in env.enabled.get(cid, frozenset()):
            return False
        remnant = env.advertised.get(cid, frozenset())
        return all(ctlc.at_position(p).timelock >= sc.timelock for p in remnant)

    def _is_ingoing(self, s: HbeState, tr: _Tree, e: Edge, facts: _RunFacts) -> bool:
        if e.receiver != self.user:
            return False
        if e.depth > 1:
            parent = tr.ts.xtree.parent(e)
            ctlc, sc, hsec = tr.cb.per_edge[parent]
            return (ctlc.contract_id, sc.position, hsec) in facts.claims
        for e1 in tr.root_edges:
            ctlc, sc, hsec = tr.cb.per_edge[e1]
            if self._sub_enabled_at(s, tr, e1, tr.channel(e1)):
                continue
            if (ctlc.contract_id, sc.position, hsec) in facts.claims:
                continue
            return False
        return True

    def _nodupl(self, s: HbeState, tr: _Tree, e: Edge) -> bool:
        revealed = _revealed_union(s)
        return not any(
            tr.ts.secret_of(other) in revealed
            for other in tr.family[e.arc] if other != e
        )

    def _execution_edge(self, s: HbeState, tr: _Tree, e: Edge,
                        facts: _RunFacts) -> Optional[Action]:
        ctlc, sc, _ = tr.cb.per_edge[e]
        cid = ctlc.contract_id
        ch = tr.channel(e)
        env = s.tams[ch]
        if env.claimed.get(cid) == sc.position:
            return Execute(ctlc, sc)
        if not self._claimable(s, tr, e) or not self._is_ingoing(s, tr, e, facts):
            return None
        own = tr.ts.secret_of(e)
        missing = [alt - env.revealed_secrets for alt in sc.condition]
        if any(m <= {own} for m in missing) and tr.ts.t0 <= s.time < sc.timelock:
            for alt, m in zip(sc.condition, missing):
                if not m:
                    return Claim(ctlc, sc, alt)
            if self._nodupl(s, tr, e):
                return RevealSecret(self.user, ch, own)
            return None
        # ferry a secret that is public elsewhere into the contract's tam
        needed = sorted(sc.all_secrets() - env.revealed_secrets)
        for sec in needed:
            for src in s.channels():
                if src != ch and sec in s.tams[src].revealed_secrets \
                        and self.user in s.membership[src]:
                    return ShareSecret(self.user, ch, sec)
        return None

    # ----- assembly -----

    def fresh(self, s: HbeState, facts: _RunFacts) -> tuple[Action, ...]:
        """The non-pending output: sub-strategy union, else the Elapse fallback."""
        out: list[Action] = []
        self._batch_phase(s, out)
        for tr in self.trees:
            for e in tr.preorder:
                for derive in (self._enable_phase_edge, self._expiry_edge,
                               self._execution_edge):
                    a = derive(s, tr, e, facts)
                    if a is not None:
                        out.append(a)
        valid = tuple(
            a for a in dict.fromkeys(out) if not is_violation(step(s, a))
        )
        if valid:
            return valid
        return (Elapse(self._grid_delta(s)),)

    def _grid_delta(self, s: HbeState) -> Fraction:
        """Time to the next t0 + j*delta grid point over all trees."""
        if not self.trees:
            return Fraction(1)
        t = s.time
        deltas = []
        for tr in self.trees:
            j = (t - tr.ts.t0) // tr.cb.delta + 1
            deltas.append(tr.ts.t0 + j * tr.cb.delta - t)
        return min(deltas)


def _build_core(user: NodeId, specs: Iterable[TreeSpec], delta: Fraction) -> _Core:
    specs = tuple(specs)
    validate_treeobj(specs)
    trees = [_Tree(compile_tree(ts, delta)) for ts in specs]
    return _Core(user, trees, specs)


def honest_strategy(user: NodeId, specs: Iterable[TreeSpec], r: Run,
                    delta: Fraction) -> tuple[Action, ...]:
    """The honest output at run `r`, by the literal recursive definition.

    Quadratic in run length (each invocation recurses over the whole run);
    use `StrategyCursor` inside loops.
    """
    core = _build_core(user, specs, delta)
    return _strategy_rec(core, r)


def _strategy_rec(core: _Core, r: Run) -> tuple[Action, ...]:
    if r.steps:
        prev_out = _strategy_rec(core, r.prefix())
        executed = set(r.actions())
        # A pending wait is not a commitment: recompute whenever the held
        # output was only an elapse offer, so work unlocked by other users'
        # actions is picked up immediately and the setup cascade meets its
        # per-level schedule.
        pending = tuple(
            a for a in prev_out
            if not isinstance(a, Elapse)
            and a not in executed and not is_violation(step(r.last, a))
        )
        if pending:
            return pending
    return core.fresh(r.last, _RunFacts.of(r))


class StrategyCursor:
    """Incremental evaluator: same outputs as `honest_strategy`, O(1) history.

    Feed it every executed step via `observe`; read the current output from
    `current()`.  The equivalence with the recursive definition follows from
    the recursion only ever consulting the previous output and run-derived
    facts, both of which are carried forward here.
    """

    def __init__(self, user: NodeId, specs: Iterable[TreeSpec],
                 initial: HbeState, delta: Fraction) -> None:
        self._core = _build_core(user, specs, delta)
        self._facts = _RunFacts()
        self._state = initial
        self._out = self._core.fresh(initial, self._facts)

    @property
    def user(self) -> NodeId:
        return self._core.user

    def observe(self, action: Action, state: HbeState) -> None:
        self._facts.note(action)
        self._state = state
        pending = tuple(
            a for a in self._out
            if not isinstance(a, Elapse)
            and a != action and a not in self._facts.seen
            and not is_violation(step(state, a))
        )
        self._out = pending if pending else self._core.fresh(state, self._facts)

    def current(self) -> tuple[Action, ...]:
        return self._out
