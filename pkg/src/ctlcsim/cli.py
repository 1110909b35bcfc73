"""Operator entry point: ingest graph specs, run pipelines, emit artifacts.

Subcommands are thin wrappers over the library:

- ``unfold``    graph file → transfer tree (JSON, optionally DOT)
- ``size``      edge-count bound for the complete graph on N nodes
- ``synth``     graph file → compiled contract batch (JSON)
- ``simulate``  run the protocol under a chosen adversary, write a trace
- ``check``     replay a trace and run every applicable verifier
- ``sweep``     randomized adversarial sweep over generated graphs

Exit codes: 0 success, 2 a verdict failed (or a run got stuck / a trace
diverged), 3 bad input.  Options may be preloaded from a JSON config file
via ``--config``; explicit flags win over the file, the file wins over
built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
from fractions import Fraction
from hashlib import sha256
from typing import Optional, Sequence

from .adversary import ADVERSARIES
from .graph import (
    DomainError,
    GraphSpec,
    is_in_semiconnected,
    leaders,
    parse_graph_spec,
    random_graph_spec,
)
from .runner import (
    ConformanceError,
    SimResult,
    replay,
    run_protocol,
    serialize,
)
from .synth import batch_to_json, compile_tree, spec_from_graph, walk_to_json
from .unfold import complete_graph_size_formula, to_dot, unfold
from .verifier import (
    Report,
    check_all,
    verify_end_to_end_security,
    verify_protocol_security,
)

EXIT_OK = 0
EXIT_VERDICT = 2
EXIT_INPUT = 3

DEFAULT_DELTA = Fraction(10)


class _CliError(Exception):
    """Bad input; prints the message and exits 3."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse default exits 2; 2 means verdict here
        raise _CliError(message)


def _load_graph(path: str, leader: Optional[str]) -> GraphSpec:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise _CliError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise _CliError(f"{path} is not JSON: {exc}") from None
    if leader is not None:
        obj["leader"] = leader
    if "leader" not in obj:
        raise _CliError(f"{path} names no leader; pass --leader")
    gs = parse_graph_spec(obj)
    if not is_in_semiconnected(gs.graph, gs.leader):
        ok = sorted(leaders(gs.graph))
        hint = f"; possible leaders: {', '.join(ok)}" if ok else ""
        raise _CliError(
            f"not every node reaches {gs.leader!r} in {gs.graph_id!r}{hint}"
        )
    return gs


def _tree_spec(gs: GraphSpec, delta: Fraction, t0: Optional[Fraction]):
    """Apply the t0 default: one step after the earliest possible start."""
    if t0 is None:
        t0 = gs.t0
    if t0 is None:
        depth = unfold(gs.graph, gs.leader).depth()
        t0 = depth * delta + 1
    return spec_from_graph(gs, t0=t0)


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise _CliError(f"not a number: {text!r}") from None


def _print_reports(reports: Sequence[Report], as_json: bool) -> None:
    if as_json:
        print(json.dumps([r.to_json() for r in reports], indent=2))
    else:
        for r in reports:
            print(r)


# ---------------------------------------------------------------- subcommands

def _cmd_unfold(args) -> int:
    gs = _load_graph(args.graph, args.leader)
    t = unfold(gs.graph, gs.leader)
    doc = {
        "id": gs.graph_id,
        "leader": gs.leader,
        "nodes": sorted(gs.graph.nodes),
        "depth": t.depth(),
        "edge_count": len(t),
        "edges": [walk_to_json(e.walk) for e in t.preorder],
    }
    if args.dot:
        with open(args.dot, "w") as fh:
            fh.write(to_dot(t, title=gs.graph_id))
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _cmd_size(args) -> int:
    if args.nodes < 2:
        raise _CliError("--nodes must be at least 2")
    print(complete_graph_size_formula(args.nodes))
    return EXIT_OK


def _cmd_synth(args) -> int:
    gs = _load_graph(args.graph, args.leader)
    ts = _tree_spec(gs, args.delta, args.t0)
    print(json.dumps(batch_to_json(compile_tree(ts, args.delta)), indent=2))
    return EXIT_OK


def _parse_until(text: str):
    if text == "final":
        return "final", None, None
    kind, _, value = text.partition(":")
    if kind == "steps" and value.isdigit():
        return "max_steps", int(value), None
    if kind == "time" and value:
        return "target_time", None, _fraction(value)
    raise _CliError(f"--until must be final, steps:N or time:T, not {text!r}")


def _summary(res: SimResult) -> dict:
    claims = sum(1 for a in res.run.actions() if type(a).__name__ == "Claim")
    return {
        "adversary": res.adversary,
        "seed": res.seed,
        "honest": sorted(res.honest),
        "corrupted": sorted(res.corrupted),
        "steps": len(res.run.steps),
        "time": str(res.run.last.time),
        "claims": claims,
        "final": res.final,
        "stuck": res.stuck,
    }


def _cmd_simulate(args) -> int:
    gs = _load_graph(args.graph, args.leader)
    ts = _tree_spec(gs, args.delta, args.t0)
    users = frozenset(gs.graph.nodes)
    corrupted = frozenset(x for x in (args.corrupt or "").split(",") if x)
    unknown = corrupted - users
    if unknown:
        raise _CliError(f"--corrupt names unknown users: {sorted(unknown)}")
    stop, max_steps, target = _parse_until(args.until)
    res = run_protocol(
        [ts],
        honest=users - corrupted,
        adversary=args.adversary,
        seed=args.seed,
        stop=stop,
        corrupted=corrupted,
        delta=args.delta,
        start=args.start,
        max_steps=max_steps if max_steps is not None else args.max_steps,
        target_time=target,
    )
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(serialize(res))
    print(json.dumps(_summary(res), indent=2))
    return EXIT_OK if res.stuck is None else EXIT_VERDICT


def _cmd_check(args) -> int:
    try:
        with open(args.trace) as fh:
            text = fh.read()
    except OSError as exc:
        raise _CliError(f"cannot read {args.trace}: {exc}") from None
    try:
        res = replay(text)
    except ConformanceError as exc:
        print(f"trace does not replay: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    if args.user is not None:
        if args.user not in res.honest:
            raise _CliError(f"{args.user!r} is not an honest user of this trace")
        reports = verify_protocol_security(res, args.user)
        reports += [r for r in verify_end_to_end_security(res)
                    if r.user in (None, args.user)]
    else:
        reports = check_all(res)
    _print_reports(reports, args.json)
    return EXIT_VERDICT if any(r.verdict == "fail" for r in reports) else EXIT_OK


def _cmd_sweep(args) -> int:
    names = [a for a in args.adversaries.split(",") if a]
    for name in names:
        if name not in ADVERSARIES:
            raise _CliError(
                f"unknown adversary {name!r}; choose from {', '.join(sorted(ADVERSARIES))}"
            )
    totals = {"runs": 0, "final": 0, "stuck": 0, "degenerate": 0, "failures": 0}
    failures: list[str] = []
    for i in range(args.runs):
        rng = random.Random(
            int.from_bytes(sha256(f"sweep:{args.seed}:{i}".encode()).digest()[:8], "big")
        )
        gs = random_graph_spec(rng, args.nodes)
        ts = _tree_spec(gs, args.delta, None)
        users = sorted(gs.graph.nodes)
        honest = rng.choice(users)
        adversary = names[i % len(names)]
        res = run_protocol(
            [ts],
            honest=frozenset([honest]),
            adversary=adversary,
            seed=args.seed + i,
            delta=args.delta,
        )
        totals["runs"] += 1
        totals["final"] += res.final
        if res.stuck is not None:
            totals["stuck"] += 1
            failures.append(f"run {i} ({gs.graph_id}, {adversary}): stuck: {res.stuck}")
            continue
        reports = verify_protocol_security(res, honest)
        reports += verify_end_to_end_security(res)
        totals["degenerate"] += any(r.degenerate for r in reports)
        for r in reports:
            if r.verdict == "fail":
                totals["failures"] += 1
                failures.append(f"run {i} ({gs.graph_id}, {adversary}): {r}")
    print(json.dumps(totals, indent=2))
    for line in failures:
        print(line, file=sys.stderr)
    return EXIT_VERDICT if failures else EXIT_OK


# ---------------------------------------------------------------- wiring

def _build_parser() -> _Parser:
    p = _Parser(prog="ctlcsim", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file with default option values")
    sub = p.add_subparsers(dest="command", required=True)

    u = sub.add_parser("unfold", help="unfold a graph into its transfer tree")
    u.add_argument("graph")
    u.add_argument("--leader", help="override the leader named in the file")
    u.add_argument("--dot", help="also write Graphviz output here")
    u.set_defaults(fn=_cmd_unfold)

    s = sub.add_parser("size", help="edge-count bound for the complete graph")
    s.add_argument("--nodes", type=int, required=True)
    s.set_defaults(fn=_cmd_size)

    y = sub.add_parser("synth", help="compile a graph into its contract batch")
    y.add_argument("graph")
    y.add_argument("--leader")
    y.add_argument("--delta", type=Fraction)
    y.add_argument("--t0", type=Fraction)
    y.set_defaults(fn=_cmd_synth)

    m = sub.add_parser("simulate", help="run the protocol and record a trace")
    m.add_argument("graph")
    m.add_argument("--leader")
    m.add_argument("--adversary", choices=sorted(ADVERSARIES))
    m.add_argument("--seed", type=int)
    m.add_argument("--corrupt", help="comma-separated corrupted users")
    m.add_argument("--until", help="final (default), steps:N or time:T")
    m.add_argument("--delta", type=Fraction)
    m.add_argument("--t0", type=Fraction)
    m.add_argument("--start", type=Fraction)
    m.add_argument("--max-steps", type=int)
    m.add_argument("--trace", help="write the JSON-lines trace here")
    m.set_defaults(fn=_cmd_simulate)

    c = sub.add_parser("check", help="replay a trace and verify it")
    c.add_argument("trace")
    c.add_argument("--user", help="restrict to one honest user's guarantees")
    c.add_argument("--json", action="store_true", help="reports as JSON")
    c.set_defaults(fn=_cmd_check)

    w = sub.add_parser("sweep", help="randomized adversarial sweep")
    w.add_argument("--nodes", type=int, help="max nodes per graph")
    w.add_argument("--runs", type=int)
    w.add_argument("--seed", type=int)
    w.add_argument("--adversaries", help="comma-separated adversary names")
    w.add_argument("--delta", type=Fraction)
    w.set_defaults(fn=_cmd_sweep)

    return p


_DEFAULTS = {
    "delta": DEFAULT_DELTA,
    "adversary": "compliant",
    "seed": 0,
    "until": "final",
    "max_steps": 5000,
    "nodes": 4,
    "runs": 100,
    "adversaries": "reorder,withhold,starve",
}


def _apply_config(args: argparse.Namespace, path: Optional[str]) -> None:
    """Fill unset options from the config file, then from built-in defaults."""
    merged = dict(_DEFAULTS)
    if path:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise _CliError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise _CliError(f"config {path} is not JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise _CliError(f"config {path} must be a JSON object")
        merged.update(loaded)
    for key, value in merged.items():
        if getattr(args, key, None) is None and hasattr(args, key):
            if key in ("delta",) and not isinstance(value, Fraction):
                value = _fraction(str(value))
            setattr(args, key, value)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(args, args.config)
        return args.fn(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DomainError, ConformanceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
