"""Mechanical checks of the end-to-end guarantees on finished runs.

Each checker takes a `SimResult` (the run plus the configuration the runner
recorded), inspects the claims that actually happened, and produces
structured `Report`s:

- `verify_protocol_security`: one honest user's claims embed into some
  outcome of every tree — the user never pays without the matching pulls.
- `verify_protocol_correctness`: an all-honest run settles every tree on a
  common outcome covering the whole source graph.
- `verify_end_to_end_security`: graph-level safety — no honest user ends up
  underwater, and no graph arc is claimed twice within a tree.
- `verify_setup_correctness`: the setup cascade meets its schedule — an edge
  at depth d is enabled from t0 − d·Δ onwards.

The security check searches the enumerated outcome sets on small trees and
falls back to a constructive witness on large ones.  The two routes agree:
any witness must contain the user-touching claims and their tree ancestors,
and that closure is itself a witness whenever one exists, so we search for
the closure and report it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .graph import NodeId
from .outcomes import (
    check_full_coverage,
    enumerate_outcomes,
    failed_predicate,
    project_arcs,
    is_underwater,
)
from .runner import SimResult
from .semantics import Claim, EnableCtlc, is_liquid, users_of_ctlc
from .synth import TreeSpec, compile_tree
from .unfold import Edge, SizeBudgetError, on_path_to_root

ENUM_BUDGET = 20


@dataclass(frozen=True)
class Report:
    """One verdict: a check applied to one tree (or graph) and one user."""

    check: str
    tree_id: Optional[str]
    user: Optional[NodeId]
    verdict: str  # "pass" | "fail" | "declined"
    method: str = ""
    witness_edges: tuple[str, ...] = ()
    counterexample: Optional[str] = None
    degenerate: bool = False

    @property
    def ok(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> dict:
        doc = {
            "check": self.check,
            "tree_id": self.tree_id,
            "user": self.user,
            "verdict": self.verdict,
            "method": self.method,
            "witness_edges": list(self.witness_edges),
            "degenerate": self.degenerate,
        }
        if self.counterexample is not None:
            doc["counterexample"] = self.counterexample
        return doc

    def __str__(self) -> str:
        who = f" user={self.user}" if self.user is not None else ""
        what = f" [{self.tree_id}]" if self.tree_id is not None else ""
        tail = f" — {self.counterexample}" if self.counterexample else ""
        deg = " (degenerate)" if self.degenerate else ""
        return f"{self.check}{what}{who}: {self.verdict}{deg}{tail}"


# ---------------------------------------------------------------- claim mining

def claimed_edges(res: SimResult) -> dict[str, tuple[Edge, ...]]:
    """Per tree, the edges whose subcontracts were claimed, in run order.

    Edges sharing a (depth, arc) family share one subcontract, so the
    presented witness — one secret set per family edge — is what picks the
    edge out, not the (contract, position) pair alone.
    """
    rev: dict[tuple, Edge] = {}
    for ts in res.specs:
        cb = compile_tree(ts, res.delta)
        for e, (_c, sub, secrets) in cb.per_edge.items():
            rev[(sub.contract_id, sub.position, secrets)] = e
    out: dict[str, list[Edge]] = {ts.tree_id: [] for ts in res.specs}
    for a in res.run.actions():
        if isinstance(a, Claim):
            key = (a.ctlc.contract_id, a.subcontract.position, a.secrets)
            e = rev.get(key)
            if e is None:
                raise ValueError(
                    f"claim on unknown subcontract "
                    f"{a.ctlc.contract_id}[{a.subcontract.position}]"
                )
            out[a.ctlc.contract_id.tree_id].append(e)
    return {tid: tuple(es) for tid, es in out.items()}


def _touching(user: NodeId, edges: Iterable[Edge]) -> frozenset[Edge]:
    return frozenset(e for e in edges if user in (e.sender, e.receiver))


def _edge_names(t, edges: Iterable[Edge]) -> tuple[str, ...]:
    idx = t.preorder_index
    return tuple(str(e) for e in sorted(edges, key=idx.__getitem__))


def _setup_failed(res: SimResult, ts: TreeSpec, user: NodeId) -> bool:
    """True iff no contract of this tree involving the user was ever enabled."""
    for a in res.run.actions():
        if isinstance(a, EnableCtlc) and a.ctlc.contract_id.tree_id == ts.tree_id:
            if user in users_of_ctlc(a.ctlc):
                return False
    return True


# ---------------------------------------------------------------- security

def _closure_witness(
    t, user: NodeId, mine: frozenset[Edge]
) -> tuple[Optional[frozenset[Edge]], Optional[str]]:
    """The one candidate witness: the user's claims closed under ancestors.

    Any outcome matching the user's claims contains this set, and extra
    edges not touching the user cannot repair a failing predicate, so the
    closure passes iff a witness exists.
    """
    closure = set(mine)
    for e in mine:
        closure.update(on_path_to_root(e))
    missing = _touching(user, closure) - mine
    if missing:
        return None, (
            f"claimed edges depend on unclaimed edges of the same user: "
            f"{sorted(str(e) for e in missing)}"
        )
    omega = frozenset(closure)
    bad = failed_predicate(t, user, omega)
    if bad is not None:
        return None, f"claims violate the {bad} predicate"
    return omega, None


def verify_protocol_security(
    res: SimResult, user: NodeId, budget: int = ENUM_BUDGET
) -> list[Report]:
    """Per tree: the user's claims match some outcome (or the failed-setup ∅)."""
    reports: list[Report] = []
    if not res.final:
        return [Report("security", None, user, "declined",
                       counterexample="run is not final")]
    if user not in res.honest:
        return [Report("security", None, user, "declined",
                       counterexample=f"{user} did not follow the honest strategy")]
    per_tree = claimed_edges(res)
    for ts in res.specs:
        t = ts.xtree
        mine = _touching(user, per_tree[ts.tree_id])
        dup = len(mine) < len([e for e in per_tree[ts.tree_id]
                               if user in (e.sender, e.receiver)])
        if dup:
            reports.append(Report("security", ts.tree_id, user, "fail",
                                  counterexample="same subcontract claimed twice"))
            continue
        if len(t) <= budget:
            method = "enumerate"
            try:
                candidates = sorted(
                    enumerate_outcomes(t, user, budget=budget),
                    key=lambda w: (len(w), sorted(t.preorder_index[e] for e in w)),
                )
            except SizeBudgetError:
                candidates = None
        else:
            candidates = None
        if candidates is None:
            method = "constructive"
            witness, why = _closure_witness(t, user, mine)
        else:
            witness, why = None, None
            for w in candidates:
                if _touching(user, w) == mine:
                    witness = w
                    break
            if witness is None:
                _w, why = _closure_witness(t, user, mine)
        if witness is not None:
            reports.append(Report("security", ts.tree_id, user, "pass",
                                  method=method,
                                  witness_edges=_edge_names(t, witness)))
        elif not mine and _setup_failed(res, ts, user):
            reports.append(Report("security", ts.tree_id, user, "pass",
                                  method=method, degenerate=True))
        else:
            reports.append(Report("security", ts.tree_id, user, "fail",
                                  method=method,
                                  counterexample=why or "no matching outcome"))
    return reports


# ---------------------------------------------------------------- correctness

def _correctness_preconditions(res: SimResult, require_final: bool = True) -> Optional[str]:
    users = set()
    for ts in res.specs:
        users |= {e.sender for e in ts.xtree.edges}
        users |= {e.receiver for e in ts.xtree.edges}
    if require_final and not res.final:
        return "run is not final"
    if not users <= res.honest:
        return f"users {sorted(users - res.honest)} are not honest"
    earliest = min(ts.t0 - ts.xtree.depth() * res.delta for ts in res.specs)
    if not res.start < earliest:
        return f"run started at {res.start}, too late for setup by {earliest}"
    if not is_liquid(res.specs, res.run.initial):
        return "initial funding is not liquid"
    return None


def verify_protocol_correctness(res: SimResult, budget: int = ENUM_BUDGET) -> list[Report]:
    """Per tree: the claimed edges form an outcome of every user and cover
    the source graph's arcs exactly."""
    why = _correctness_preconditions(res)
    if why is not None:
        return [Report("correctness", None, None, "declined", counterexample=why)]
    reports: list[Report] = []
    per_tree = claimed_edges(res)
    for ts in res.specs:
        t = ts.xtree
        claimed = per_tree[ts.tree_id]
        omega = frozenset(claimed)
        if len(claimed) != len(omega):
            reports.append(Report("correctness", ts.tree_id, None, "fail",
                                  counterexample="same subcontract claimed twice"))
            continue
        bad = None
        for u in sorted({e.sender for e in t.edges} | {e.receiver for e in t.edges}):
            name = failed_predicate(t, u, omega)
            if name is not None:
                bad = f"claims violate {name} for user {u}"
                break
        if bad is None and not check_full_coverage(t.source, t, omega):
            missed = t.source.arcs - project_arcs(omega)
            bad = f"arcs never claimed: {sorted(str(a) for a in missed)}"
        if bad is None:
            reports.append(Report("correctness", ts.tree_id, None, "pass",
                                  method="constructive",
                                  witness_edges=_edge_names(t, omega)))
        else:
            reports.append(Report("correctness", ts.tree_id, None, "fail",
                                  counterexample=bad))
    return reports


# ---------------------------------------------------------------- graph level

def verify_end_to_end_security(res: SimResult) -> list[Report]:
    """Per honest user and tree: never underwater; no arc claimed twice."""
    reports: list[Report] = []
    per_tree = claimed_edges(res)
    for ts in res.specs:
        t = ts.xtree
        claimed = per_tree[ts.tree_id]
        arcs = [e.arc for e in claimed]
        dup = {a for a in arcs if arcs.count(a) > 1}
        if dup:
            reports.append(Report("uniqueness", ts.tree_id, None, "fail",
                                  counterexample=f"arcs claimed twice: "
                                                 f"{sorted(str(a) for a in dup)}"))
        else:
            reports.append(Report("uniqueness", ts.tree_id, None, "pass"))
        executed = project_arcs(claimed)
        for u in sorted(res.honest):
            if u not in t.source.nodes:
                continue
            if is_underwater(t.source, u, executed):
                paid = sorted(str(a) for a in executed if a.sender == u)
                owed = sorted(str(a) for a in t.source.in_arcs(u) if a not in executed)
                reports.append(Report("underwater", ts.tree_id, u, "fail",
                                      counterexample=f"paid {paid} but never "
                                                     f"received {owed}"))
            else:
                reports.append(Report("underwater", ts.tree_id, u, "pass",
                                      degenerate=not executed))
    return reports


# ---------------------------------------------------------------- setup grid

def verify_setup_correctness(res: SimResult) -> list[Report]:
    """Per tree: every edge's subcontract enabled from t0 − depth(e)·Δ on."""
    why = _correctness_preconditions(res, require_final=False)
    if why is not None:
        return [Report("setup", None, None, "declined", counterexample=why)]
    reports: list[Report] = []
    states = [res.run.initial] + [s for _a, s in res.run.steps]
    for ts in res.specs:
        cb = compile_tree(ts, res.delta)
        schedule = []
        for e in sorted(ts.xtree.edges, key=ts.xtree.preorder_index.__getitem__):
            ch, _fund = ts.spec[e]
            _c, sub, _h = cb.per_edge[e]
            schedule.append((e, ch, sub.contract_id, sub.position,
                             ts.t0 - e.depth * res.delta))
        bad = None
        for s in states:
            for e, ch, cid, pos, threshold in schedule:
                tam = s.tams[ch]
                if threshold <= tam.time < ts.t0 and pos not in tam.enabled.get(cid, ()):
                    bad = (f"edge {e} due at {threshold} not enabled "
                           f"at time {tam.time}")
                    break
            if bad:
                break
        if bad is None:
            reports.append(Report("setup", ts.tree_id, None, "pass"))
        else:
            reports.append(Report("setup", ts.tree_id, None, "fail",
                                  counterexample=bad))
    return reports


# ---------------------------------------------------------------- aggregation

def check_all(res: SimResult) -> list[Report]:
    """Every check that applies to this run's configuration."""
    reports: list[Report] = []
    for u in sorted(res.honest):
        reports.extend(verify_protocol_security(res, u))
    reports.extend(verify_end_to_end_security(res))
    if _correctness_preconditions(res) is None:
        reports.extend(verify_protocol_correctness(res))
        reports.extend(verify_setup_correctness(res))
    return reports
