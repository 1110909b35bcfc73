"""The conformance loop, trace files, and replay.

`run_protocol` builds a run the way the model prescribes: every honest user's
strategy output forms the round's mempool, one adversary picks each extending
action under the scheduler contract, and time advances only by negotiated
elapses.  The resulting `SimResult` carries the run plus the metadata the
verifier needs (who was honest, which adversary, whether finality was
reached).

Traces are JSON lines: one self-contained header, one line per action, and a
footer with a digest of the final state.  `replay` rebuilds and re-validates a
run from its trace, reporting the first rule violation if the file was
tampered with.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Union

from .adversary import (
    ADVERSARIES,
    AdversaryFn,
    adversary_violation,
    round_cap,
)
from .graph import DomainError, NodeId
from .honest import Run, StrategyCursor
from .semantics import (
    Action,
    AdvBatch,
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
    initial_state,
    is_violation,
    step,
    user_knowledge,
)
from .synth import (
    Batch,
    ContractId,
    Ctlc,
    Secret,
    TreeSpec,
    compile_tree,
    parse_tree_spec,
    tree_spec_to_json,
    walk_from_json,
    walk_to_json,
)

TRACE_FORMAT = 1

STOP_CONDITIONS = ("final", "max_steps", "target_time")


class ConformanceError(DomainError):
    """An action broke the scheduler contract or a replayed trace diverged."""


def spec_users(specs: Iterable[TreeSpec]) -> frozenset[NodeId]:
    out: set[NodeId] = set()
    for ts in specs:
        out.add(ts.xtree.leader)
        for e in ts.xtree.edges:
            out.add(e.sender)
            out.add(e.receiver)
    return frozenset(out)


def final_deadline(specs: Iterable[TreeSpec], delta: Fraction) -> Fraction:
    """The last timelock in play; a run is final once time passes it."""
    return max(ts.t0 + ts.xtree.depth() * delta for ts in specs)


def default_start(specs: Iterable[TreeSpec], delta: Fraction) -> Fraction:
    """One unit before the latest moment every batch can still be advertised."""
    return min(ts.t0 - ts.xtree.depth() * delta for ts in specs) - 1


@dataclass(frozen=True)
class SimResult:
    """A run plus the configuration that produced it."""

    run: Run
    specs: tuple[TreeSpec, ...]
    delta: Fraction
    start: Fraction
    honest: frozenset
    corrupted: frozenset
    membership: Mapping[str, frozenset]
    adversary: str
    seed: int
    stop: str
    max_steps: int
    target_time: Optional[Fraction]
    final: bool
    stuck: Optional[str]


def _resolve_adversary(adversary: Union[str, AdversaryFn]) -> tuple[str, AdversaryFn]:
    if callable(adversary):
        for name, fn in ADVERSARIES.items():
            if fn is adversary:
                return name, fn
        return getattr(adversary, "__name__", "custom"), adversary
    if adversary not in ADVERSARIES:
        raise DomainError(
            f"unknown adversary {adversary!r}; choose from {', '.join(sorted(ADVERSARIES))}"
        )
    return adversary, ADVERSARIES[adversary]


def _knowledge_ok(s: HbeState, a: Action) -> bool:
    if isinstance(a, (RevealSecret, ShareSecret)):
        return a.secret in user_knowledge(s, a.user)
    return True


def run_protocol(
    specs: Iterable[TreeSpec],
    honest: Iterable[NodeId],
    adversary: Union[str, AdversaryFn] = "compliant",
    seed: int = 0,
    stop: str = "final",
    *,
    corrupted: Optional[Iterable[NodeId]] = None,
    membership: Optional[Mapping[str, frozenset]] = None,
    delta: Fraction = Fraction(10),
    start: Optional[Fraction] = None,
    max_steps: int = 5000,
    target_time: Optional[Fraction] = None,
) -> SimResult:
    specs = tuple(specs)
    if not specs:
        raise DomainError("at least one tree spec is required")
    if stop not in STOP_CONDITIONS:
        raise DomainError(f"stop must be one of {STOP_CONDITIONS}, got {stop!r}")
    if stop == "target_time" and target_time is None:
        raise DomainError("stop='target_time' needs target_time")
    name, fn = _resolve_adversary(adversary)
    users = spec_users(specs)
    honest = frozenset(honest)
    corrupted = frozenset(corrupted) if corrupted is not None else users - honest
    if honest & corrupted:
        raise DomainError(f"users {sorted(honest & corrupted)} are both honest and corrupted")
    if membership is None:
        membership = {ch: users for ts in specs for ch in ts.tams()}
    if start is None:
        start = default_start(specs, delta)
    epsilon = delta / 1000

    s0 = initial_state(specs, membership, start=start, honest=honest)
    run = Run(s0)
    cursors = {u: StrategyCursor(u, specs, s0, delta) for u in sorted(honest)}
    deadline = final_deadline(specs, delta)
    stuck: Optional[str] = None
    streak = 0

    while True:
        now = run.last.time
        if stop == "final" and now > deadline:
            break
        if stop == "target_time" and now >= target_time:
            break
        if stop == "max_steps" and now > deadline:
            break
        if len(run.steps) >= max_steps:
            if stop != "max_steps":
                stuck = f"step budget {max_steps} exhausted before {stop} (t={now})"
            break
        mempool = {
            u: tuple(a for a in c.current() if _knowledge_ok(run.last, a))
            for u, c in cursors.items()
        }
        a = fn(run, mempool, corrupted, seed)
        if a is None:
            stuck = f"no conformant action at step {len(run.steps)} (t={now})"
            break
        reason = adversary_violation(run, mempool, corrupted, a, epsilon=epsilon)
        if reason is not None:
            raise ConformanceError(
                f"step {len(run.steps)}: adversary {name!r} broke the contract: {reason}"
            )
        included = any(a in acts for acts in mempool.values())
        nxt = step(run.last, a)
        run = run.extended(a, nxt)
        for c in cursors.values():
            c.observe(a, nxt)
        if isinstance(a, Elapse) or included:
            streak = 0
        else:
            # Bound how long the adversary may act on its own before the next
            # honest inclusion or time step; termination backstop.
            streak += 1
            cap = round_cap(mempool)
            if streak > cap:
                stuck = f"{streak} adversary-only actions exceed the round cap {cap}"
                break

    return SimResult(
        run=run,
        specs=specs,
        delta=delta,
        start=start,
        honest=honest,
        corrupted=corrupted,
        membership=dict(membership),
        adversary=name,
        seed=seed,
        stop=stop,
        max_steps=max_steps,
        target_time=target_time,
        final=run.last.time > deadline,
        stuck=stuck,
    )


# ---------------------------------------------------------------- action codec

def _cid_json(cid: ContractId) -> dict:
    return {"tree": cid.tree_id, "sender": cid.sender, "receiver": cid.receiver, "tag": cid.tag}


def _cid_from_json(obj) -> ContractId:
    return ContractId(obj["tree"], obj["sender"], obj["receiver"], int(obj["tag"]))


def _secret_json(s: Secret) -> dict:
    return {"tree": s.tree_id, "walk": walk_to_json(s.walk)}


def _secret_from_json(obj) -> Secret:
    return Secret(obj["tree"], walk_from_json(obj["walk"]))


def encode_action(a: Action) -> dict:
    if isinstance(a, AdvBatch):
        return {"type": "advbatch", "tree": a.batch.tree_id}
    if isinstance(a, CommitBatch):
        return {"type": "commit", "user": a.user, "tree": a.batch.tree_id}
    if isinstance(a, AdvCtlc):
        return {"type": "advctlc", "tam": a.tam, "cid": _cid_json(a.ctlc.contract_id)}
    if isinstance(a, AuthCtlc):
        return {"type": "authctlc", "user": a.user, "cid": _cid_json(a.ctlc.contract_id)}
    if isinstance(a, EnableCtlc):
        return {"type": "enablectlc", "tam": a.tam, "cid": _cid_json(a.ctlc.contract_id)}
    if isinstance(a, EnableSubC):
        return {
            "type": "enablesubc",
            "user": a.user,
            "cid": _cid_json(a.subcontract.contract_id),
            "position": a.subcontract.position,
        }
    if isinstance(a, RevealSecret):
        return {"type": "reveal", "user": a.user, "tam": a.tam, "secret": _secret_json(a.secret)}
    if isinstance(a, ShareSecret):
        return {"type": "share", "user": a.user, "tam": a.tam, "secret": _secret_json(a.secret)}
    if isinstance(a, Timeout):
        return {
            "type": "timeout",
            "cid": _cid_json(a.ctlc.contract_id),
            "position": a.subcontract.position,
        }
    if isinstance(a, Refund):
        return {"type": "refund", "cid": _cid_json(a.ctlc.contract_id)}
    if isinstance(a, Claim):
        return {
            "type": "claim",
            "cid": _cid_json(a.ctlc.contract_id),
            "position": a.subcontract.position,
            "witness": sorted((_secret_json(s) for s in a.secrets), key=json.dumps),
        }
    if isinstance(a, Execute):
        return {
            "type": "execute",
            "cid": _cid_json(a.ctlc.contract_id),
            "position": a.subcontract.position,
        }
    if isinstance(a, Elapse):
        return {"type": "elapse", "delta": str(a.delta)}
    raise DomainError(f"cannot encode {a!r}")


class TraceCodec:
    """Resolves serialized contract/batch references against compiled specs."""

    def __init__(self, specs: Iterable[TreeSpec], delta: Fraction) -> None:
        self.batches: dict[str, Batch] = {}
        self.contracts: dict[ContractId, Ctlc] = {}
        for ts in specs:
            cb = compile_tree(ts, delta)
            self.batches[ts.tree_id] = cb.batch
            self.contracts.update(cb.by_id)

    def _ctlc(self, obj) -> Ctlc:
        cid = _cid_from_json(obj)
        try:
            return self.contracts[cid]
        except KeyError:
            raise ConformanceError(f"trace references unknown contract {cid}") from None

    def _batch(self, tree_id: str) -> Batch:
        try:
            return self.batches[tree_id]
        except KeyError:
            raise ConformanceError(f"trace references unknown tree {tree_id!r}") from None

    def decode_action(self, obj) -> Action:
        try:
            kind = obj["type"]
            if kind == "advbatch":
                return AdvBatch(self._batch(obj["tree"]))
            if kind == "commit":
                return CommitBatch(obj["user"], self._batch(obj["tree"]))
            if kind == "advctlc":
                return AdvCtlc(obj["tam"], self._ctlc(obj["cid"]))
            if kind == "authctlc":
                return AuthCtlc(obj["user"], self._ctlc(obj["cid"]))
            if kind == "enablectlc":
                return EnableCtlc(obj["tam"], self._ctlc(obj["cid"]))
            if kind == "enablesubc":
                c = self._ctlc(obj["cid"])
                return EnableSubC(obj["user"], c.at_position(int(obj["position"])))
            if kind == "reveal":
                return RevealSecret(obj["user"], obj["tam"], _secret_from_json(obj["secret"]))
            if kind == "share":
                return ShareSecret(obj["user"], obj["tam"], _secret_from_json(obj["secret"]))
            if kind == "timeout":
                c = self._ctlc(obj["cid"])
                return Timeout(c, c.at_position(int(obj["position"])))
            if kind == "refund":
                return Refund(self._ctlc(obj["cid"]))
            if kind == "claim":
                c = self._ctlc(obj["cid"])
                secrets = frozenset(_secret_from_json(s) for s in obj["witness"])
                return Claim(c, c.at_position(int(obj["position"])), secrets)
            if kind == "execute":
                c = self._ctlc(obj["cid"])
                return Execute(c, c.at_position(int(obj["position"])))
            if kind == "elapse":
                return Elapse(Fraction(obj["delta"]))
        except ConformanceError:
            raise
        except (KeyError, TypeError, ValueError, DomainError) as exc:
            raise ConformanceError(f"malformed action record {obj!r}: {exc}") from None
        raise ConformanceError(f"unknown action type {obj.get('type')!r}")


# ---------------------------------------------------------------- trace files

def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _env_snapshot(env) -> dict:
    return {
        "committed": sorted(str(s) for s in env.committed_secrets),
        "revealed": sorted(str(s) for s in env.revealed_secrets),
        "batches": sorted(b.tree_id for b in env.batches),
        "advertised": {str(c): sorted(ps) for c, ps in env.advertised.items()},
        "authorized": sorted(f"{u}:{c}" for u, c in env.authorizations),
        "enabled": {str(c): sorted(ps) for c, ps in env.enabled.items()},
        "claimed": {str(c): p for c, p in env.claimed.items()},
        "available": sorted(f"{o}:{f}" for o, f in env.available_funds),
        "reserved": sorted(str(f) for f in env.reserved_funds),
        "time": str(env.time),
    }


def state_digest(s: HbeState) -> str:
    doc = {
        "tams": {ch: _env_snapshot(s.tams[ch]) for ch in s.channels()},
        "membership": {ch: sorted(s.membership[ch]) for ch in s.channels()},
        "honest": sorted(s.honest_users),
    }
    return hashlib.sha256(_dumps(doc).encode()).hexdigest()


def serialize(res: SimResult) -> str:
    header = {
        "kind": "header",
        "format": TRACE_FORMAT,
        "specs": [tree_spec_to_json(ts) for ts in res.specs],
        "membership": {ch: sorted(us) for ch, us in res.membership.items()},
        "honest": sorted(res.honest),
        "corrupted": sorted(res.corrupted),
        "adversary": res.adversary,
        "seed": res.seed,
        "delta": str(res.delta),
        "start": str(res.start),
        "stop": res.stop,
        "max_steps": res.max_steps,
        "target_time": None if res.target_time is None else str(res.target_time),
    }
    lines = [_dumps(header)]
    for i, (a, _) in enumerate(res.run.steps):
        lines.append(_dumps({"kind": "action", "i": i, "a": encode_action(a)}))
    footer = {
        "kind": "final",
        "steps": len(res.run.steps),
        "time": str(res.run.last.time),
        "final": res.final,
        "stuck": res.stuck,
        "digest": state_digest(res.run.last),
    }
    lines.append(_dumps(footer))
    return "\n".join(lines) + "\n"


def replay(text: str) -> SimResult:
    """Rebuild a run from its trace, validating every step against the rules."""
    records = []
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ConformanceError(f"trace line {n} is not JSON: {exc}") from None
    if not records or records[0].get("kind") != "header":
        raise ConformanceError("trace must start with a header record")
    if records[-1].get("kind") != "final":
        raise ConformanceError("trace must end with a final record")
    header, actions, footer = records[0], records[1:-1], records[-1]
    if header.get("format") != TRACE_FORMAT:
        raise ConformanceError(f"unsupported trace format {header.get('format')!r}")

    specs = tuple(parse_tree_spec(o) for o in header["specs"])
    delta = Fraction(header["delta"])
    start = Fraction(header["start"])
    honest = frozenset(header["honest"])
    corrupted = frozenset(header["corrupted"])
    membership = {ch: frozenset(us) for ch, us in header["membership"].items()}
    target_time = header["target_time"]
    codec = TraceCodec(specs, delta)

    s0 = initial_state(specs, membership, start=start, honest=honest)
    run = Run(s0)
    for idx, rec in enumerate(actions):
        if rec.get("kind") != "action":
            raise ConformanceError(f"record {idx + 1} is not an action")
        a = codec.decode_action(rec["a"])
        nxt = step(run.last, a)
        if is_violation(nxt):
            raise ConformanceError(f"step {idx}: {encode_action(a)['type']} refused: {nxt}")
        run = run.extended(a, nxt)

    if footer["steps"] != len(run.steps):
        raise ConformanceError(
            f"footer claims {footer['steps']} steps, trace has {len(run.steps)}"
        )
    if Fraction(footer["time"]) != run.last.time:
        raise ConformanceError(
            f"footer time {footer['time']} != replayed time {run.last.time}"
        )
    digest = state_digest(run.last)
    if footer["digest"] != digest:
        raise ConformanceError(
            f"final state digest mismatch: trace {footer['digest'][:12]}…, replay {digest[:12]}…"
        )
    return SimResult(
        run=run,
        specs=specs,
        delta=delta,
        start=start,
        honest=honest,
        corrupted=corrupted,
        membership=membership,
        adversary=header["adversary"],
        seed=header["seed"],
        stop=header["stop"],
        max_steps=header["max_steps"],
        target_time=None if target_time is None else Fraction(target_time),
        final=bool(footer["final"]),
        stuck=footer["stuck"],
    )
