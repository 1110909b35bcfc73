"""Compile a specified transfer tree into a batch of chained timelocked contracts.

Each *duplicate family* of tree edges — all copies of one graph arc — becomes a
single contract between that arc's sender and receiver, holding one fund token.
The contract is a ladder of subcontracts, one per tree level the family
occupies, with timelocks stepping by Δ per level.  A subcontract can be
discharged by presenting, for any one family edge at its level, the complete
set of secrets along that edge's path to the root; deeper levels therefore
require strictly more secrets and expire strictly later.

Every edge owns one secret, held by the edge's receiver.  The edge↔subcontract
correspondence is exposed as :func:`edge_map` and is what strategies and
verifiers navigate by.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, NamedTuple

from .graph import Arc, Digraph, DomainError, NodeId, Walk
from .unfold import Edge, Xtree, edge_from_walk, edge_groups, on_path_to_root


# ---------------------------------------------------------------- identifiers

@dataclass(frozen=True, order=True)
class Secret:
    """The secret attached to one tree edge, owned by that edge's receiver."""

    tree_id: str
    walk: Walk

    @property
    def owner(self) -> NodeId:
        return self.walk[0].receiver

    def __str__(self) -> str:
        return f"{self.tree_id}:{'/'.join(str(a) for a in self.walk)}"


@dataclass(frozen=True, order=True)
class FundToken:
    """A transferable fund, resident on one tam, initially held by the payer."""

    fund_id: str
    owner: NodeId
    tam: str

    def __str__(self) -> str:
        return f"{self.fund_id}@{self.tam}"


class ContractId(NamedTuple):
    tree_id: str
    sender: NodeId
    receiver: NodeId
    tag: int

    def __str__(self) -> str:
        base = f"{self.tree_id}:{self.sender}>{self.receiver}"
        return base if self.tag == 0 else f"{base}#{self.tag}"


# ---------------------------------------------------------------- contracts

@dataclass(frozen=True)
class Subcontract:
    """One rung of a contract ladder.

    ``condition`` is a disjunction of secret sets, one per family edge at this
    level, listed in tree pre-order; presenting any one set in full releases
    the rung.  ``position`` is the 1-based index within the parent contract
    (ascending with ``level`` and ``timelock``).
    """

    contract_id: ContractId
    sender: NodeId
    receiver: NodeId
    fund: FundToken
    timelock: Fraction
    condition: tuple[frozenset[Secret], ...]
    level: int
    position: int

    def __post_init__(self) -> None:
        if not self.condition or any(not s for s in self.condition):
            raise DomainError(f"subcontract {self} needs non-empty secret sets")

    def all_secrets(self) -> frozenset[Secret]:
        return frozenset().union(*self.condition)

    def __str__(self) -> str:
        return f"{self.contract_id}[{self.position}]"


@dataclass(frozen=True)
class Ctlc:
    """A chained timelocked contract: subcontracts with strictly rising timelocks."""

    contract_id: ContractId
    subcontracts: tuple[Subcontract, ...]

    def __post_init__(self) -> None:
        for i, sc in enumerate(self.subcontracts, start=1):
            if sc.position != i or sc.contract_id != self.contract_id:
                raise DomainError(f"subcontract {sc} mispositioned in {self.contract_id}")
        locks = [sc.timelock for sc in self.subcontracts]
        if any(a >= b for a, b in zip(locks, locks[1:])):
            raise DomainError(f"timelocks of {self.contract_id} must strictly increase")
        shared = {(sc.sender, sc.receiver, sc.fund) for sc in self.subcontracts}
        if len(shared) > 1:
            raise DomainError(f"subcontracts of {self.contract_id} disagree on parties/fund")

    def __len__(self) -> int:
        return len(self.subcontracts)

    def at_position(self, position: int) -> Subcontract:
        if not 1 <= position <= len(self.subcontracts):
            raise DomainError(f"{self.contract_id} has no position {position}")
        return self.subcontracts[position - 1]

    @property
    def sender(self) -> NodeId:
        return self.contract_id.sender

    @property
    def receiver(self) -> NodeId:
        return self.contract_id.receiver

    @property
    def fund(self) -> FundToken:
        return self.subcontracts[0].fund

    def all_secrets(self) -> frozenset[Secret]:
        return frozenset().union(*(sc.all_secrets() for sc in self.subcontracts))


@dataclass(frozen=True)
class Batch:
    """All contracts synthesized from one tree, in contract-id order."""

    tree_id: str
    ctlcs: tuple[Ctlc, ...]

    def __iter__(self):
        return iter(self.ctlcs)

    def __len__(self) -> int:
        return len(self.ctlcs)

    def all_secrets(self) -> frozenset[Secret]:
        return frozenset().union(
            frozenset(), *(c.all_secrets() for c in self.ctlcs)
        )


# ---------------------------------------------------------------- tree specs

@dataclass(frozen=True)
class TreeSpec:
    """A transfer tree plus everything needed to place it on tams.

    ``spec`` assigns each edge a (tam, fund) pair; the assignment must be
    *valid*: two edges share a (tam, fund) exactly when they are copies of
    the same arc.  One fund token therefore backs each duplicate family, and
    its home tam is where that family's contract will live.
    """

    tree_id: str
    xtree: Xtree
    t0: Fraction
    spec: Mapping[Edge, tuple[str, FundToken]] = field(hash=False)

    def __post_init__(self) -> None:
        if self.t0 <= 0:
            raise DomainError("start time t0 must be positive")
        if set(self.spec) != set(self.xtree.edges):
            raise DomainError(f"spec of {self.tree_id} must cover exactly the tree's edges")
        for e1, (tam1, f1) in self.spec.items():
            if f1.tam != tam1:
                raise DomainError(f"fund {f1} placed on foreign tam {tam1}")
            if f1.owner != e1.sender:
                raise DomainError(f"fund {f1} for edge {e1} not owned by its sender")
            for e2, (tam2, f2) in self.spec.items():
                same_slot = (tam1, f1) == (tam2, f2)
                same_arc = e1.arc == e2.arc
                if same_slot != same_arc:
                    raise DomainError(
                        f"invalid spec: edges {e1} and {e2} "
                        f"{'share' if same_slot else 'split'} a (tam, fund) slot"
                    )

    def placement(self, e: Edge) -> tuple[str, FundToken]:
        try:
            return self.spec[e]
        except KeyError:
            raise DomainError(f"edge {e} not in tree {self.tree_id}") from None

    def tams(self) -> frozenset[str]:
        return frozenset(tam for (tam, _f) in self.spec.values())

    def fund_tokens(self) -> frozenset[FundToken]:
        return frozenset(f for (_tam, f) in self.spec.values())

    def secret_of(self, e: Edge) -> Secret:
        if e not in self.xtree:
            raise DomainError(f"edge {e} not in tree {self.tree_id}")
        return Secret(self.tree_id, e.walk)


def validate_treeobj(specs: tuple[TreeSpec, ...]) -> None:
    """Cross-tree well-formedness: unique ids, no fund token shared anywhere.

    Per-spec validity is already enforced by the TreeSpec constructor; across
    specs (and across families within a spec) every duplicate family must
    bring its own fund token.
    """
    ids = [ts.tree_id for ts in specs]
    if len(set(ids)) != len(ids):
        raise DomainError(f"duplicate tree ids: {sorted(ids)}")
    seen: dict[FundToken, tuple[str, Arc]] = {}
    for ts in specs:
        for e, (_tam, fund) in ts.spec.items():
            prior = seen.setdefault(fund, (ts.tree_id, e.arc))
            if prior != (ts.tree_id, e.arc):
                raise DomainError(f"fund {fund} reused across families {prior} and {(ts.tree_id, e.arc)}")


# ---------------------------------------------------------------- synthesis

def root_path_secrets(ts: TreeSpec, e: Edge) -> frozenset[Secret]:
    """Secrets of all edges from ``e`` to the root, inclusive."""
    return frozenset(ts.secret_of(anc) for anc in on_path_to_root(e))


@dataclass(frozen=True)
class CompiledBatch:
    """A synthesized batch with its navigation indexes precomputed."""

    spec: TreeSpec
    delta: Fraction
    batch: Batch
    per_edge: Mapping[Edge, tuple[Ctlc, Subcontract, frozenset[Secret]]] = field(hash=False)
    by_id: Mapping[ContractId, Ctlc] = field(hash=False)
    secret_edge: Mapping[Secret, Edge] = field(hash=False)

    @property
    def final_deadline(self) -> Fraction:
        """The last timelock of the tree: t0 + depth·Δ."""
        return self.spec.t0 + self.spec.xtree.depth() * self.delta


@lru_cache(maxsize=None)
def compile_tree(ts: TreeSpec, delta: Fraction) -> CompiledBatch:
    """Synthesize ``ts`` and index the result; cached per (spec, Δ) value."""
    if delta <= 0:
        raise DomainError("level spacing delta must be positive")
    t = ts.xtree
    idx = t.preorder_index
    families: dict[Arc, dict[int, list[Edge]]] = {}
    for (depth, arc), edges in edge_groups(t).items():
        families.setdefault(arc, {})[depth] = sorted(edges, key=idx.__getitem__)

    ctlcs: list[Ctlc] = []
    per_edge: dict[Edge, tuple[Ctlc, Subcontract, frozenset[Secret]]] = {}
    for arc in sorted(families):
        cid = ContractId(ts.tree_id, arc.sender, arc.receiver, arc.tag)
        levels = families[arc]
        tam, fund = ts.placement(levels[min(levels)][0])
        subs: list[Subcontract] = []
        for position, level in enumerate(sorted(levels), start=1):
            subs.append(Subcontract(
                contract_id=cid,
                sender=arc.sender,
                receiver=arc.receiver,
                fund=fund,
                timelock=ts.t0 + level * delta,
                condition=tuple(root_path_secrets(ts, e) for e in levels[level]),
                level=level,
                position=position,
            ))
        ctlc = Ctlc(cid, tuple(subs))
        ctlcs.append(ctlc)
        for sc, level in zip(subs, sorted(levels)):
            for e in levels[level]:
                per_edge[e] = (ctlc, sc, root_path_secrets(ts, e))

    batch = Batch(ts.tree_id, tuple(ctlcs))
    return CompiledBatch(
        spec=ts,
        delta=delta,
        batch=batch,
        per_edge=per_edge,
        by_id={c.contract_id: c for c in ctlcs},
        secret_edge={ts.secret_of(e): e for e in t.edges},
    )


def synthesize_batch(ts: TreeSpec, delta: Fraction) -> Batch:
    return compile_tree(ts, delta).batch


def spec_from_graph(gs, t0: Fraction, budget: int = 100_000) -> TreeSpec:
    """Unfold a parsed graph description and place edges per its arc table.

    Every copy of an arc shares the arc's configured (tam, fund) slot, which
    is exactly what spec validity requires.
    """
    from .unfold import unfold  # deferred: graph specs are optional input sugar

    t = unfold(gs.graph, gs.leader, budget=budget)
    spec: dict[Edge, tuple[str, FundToken]] = {}
    for e in t.edges:
        tam, fund_name = gs.arc_info[e.arc]
        spec[e] = (tam, FundToken(fund_id=fund_name, owner=e.sender, tam=tam))
    return TreeSpec(tree_id=gs.graph_id, xtree=t, t0=t0, spec=spec)


def edge_map(ts: TreeSpec, e: Edge, delta: Fraction) -> tuple[Ctlc, Subcontract, frozenset[Secret]]:
    """The contract, subcontract and root-path secret set modelling ``e``."""
    try:
        return compile_tree(ts, delta).per_edge[e]
    except KeyError:
        raise DomainError(f"edge {e} not in tree {ts.tree_id}") from None


# ---------------------------------------------------------------- tree-spec JSON

def walk_to_json(w: Walk) -> list:
    return [[a.sender, a.receiver, a.tag] for a in w]


def walk_from_json(obj) -> Walk:
    try:
        return tuple(Arc(s, r, int(tag)) for s, r, tag in obj)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"malformed walk {obj!r}: {exc}") from None


def tree_spec_to_json(ts: TreeSpec) -> dict:
    """A self-contained description of the tree and its tam placement."""
    edges = []
    for e in ts.xtree.preorder:
        tam, fund = ts.spec[e]
        edges.append({
            "walk": walk_to_json(e.walk),
            "tam": tam,
            "fund": {"id": fund.fund_id, "owner": fund.owner, "tam": fund.tam},
        })
    return {
        "tree_id": ts.tree_id,
        "leader": ts.xtree.leader,
        "t0": str(ts.t0),
        "nodes": sorted(ts.xtree.source.nodes),
        "edges": edges,
    }


def parse_tree_spec(obj) -> TreeSpec:
    """Inverse of :func:`tree_spec_to_json`."""
    try:
        tree_id = obj["tree_id"]
        leader = obj["leader"]
        t0 = Fraction(obj["t0"])
        nodes = frozenset(obj["nodes"])
        rows = obj["edges"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed tree spec: {exc}") from None
    spec: dict[Edge, tuple[str, FundToken]] = {}
    for row in rows:
        e = edge_from_walk(walk_from_json(row["walk"]))
        f = row["fund"]
        spec[e] = (row["tam"], FundToken(f["id"], f["owner"], f["tam"]))
    arcs = frozenset(a for e in spec for a in e.walk)
    tree = Xtree(frozenset(spec), leader, Digraph(nodes, arcs))
    return TreeSpec(tree_id=tree_id, xtree=tree, t0=t0, spec=spec)


def batch_to_json(cb: "CompiledBatch") -> dict:
    """The synthesized contract batch in its file form."""
    contracts = []
    for ctlc in cb.batch:
        contracts.append({
            "id": str(ctlc.contract_id),
            "sender": ctlc.sender,
            "receiver": ctlc.receiver,
            "fund": {
                "id": ctlc.fund.fund_id,
                "owner": ctlc.fund.owner,
                "tam": ctlc.fund.tam,
            },
            "subcontracts": [
                {
                    "position": sc.position,
                    "level": sc.level,
                    "timelock": str(sc.timelock),
                    "condition": [sorted(str(s) for s in alt) for alt in sc.condition],
                }
                for sc in ctlc.subcontracts
            ],
        })
    return {
        "tree_id": cb.batch.tree_id,
        "t0": str(cb.spec.t0),
        "delta": str(cb.delta),
        "contracts": contracts,
    }
