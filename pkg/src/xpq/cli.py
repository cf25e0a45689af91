"""Command line: ``xpq {gen,diff,bench,sssp,invariants}``."""
from __future__ import annotations

import argparse
import os
import sys
import time

from .bench import BACKENDS, QueueSpec, run_bench, run_diff
from .emx import BlockStore, ModelParams
from .ktree import TournamentTree
from .pq import ExternalPQ
from .sssp import GraphError, dijkstra, ingest_graph, parse_dimacs, queue_params
from .workload import KINDS, TraceError, Workload, format_trace, gen_workload, parse_trace


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("XPQ_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"error: XPQ_SEED must be an integer, got {env!r}")
    return 0


def _model(args) -> ModelParams:
    try:
        return ModelParams(args.n, args.b, args.m)
    except ValueError as e:
        raise SystemExit(f"error: {e}")


def _spec(args, params=None) -> QueueSpec:
    params = params or _model(args)
    if args.paper_params:
        return QueueSpec(params, None, None, _seed(args))
    return QueueSpec(params, args.t, args.epsilon, _seed(args))


def _traces(args):
    """Yield ``(label, ops)`` from a trace file or from the generator."""
    if getattr(args, "trace", None):
        try:
            with open(args.trace) as fh:
                text = fh.read()
        except OSError as e:
            raise SystemExit(f"error: {e}")
        try:
            yield args.trace, parse_trace(text, args.n)
        except TraceError as e:
            raise SystemExit(f"error: {args.trace}: {e}")
        return
    base = _seed(args)
    for i in range(args.traces):
        w = Workload(args.kind, args.count, args.n, base + i)
        yield f"{w.kind} seed={w.seed}", gen_workload(w)


def cmd_gen(args) -> int:
    _model(args)
    w = Workload(args.kind, args.count, args.n, _seed(args))
    text = format_trace(gen_workload(w), header=f"kind={w.kind} seed={w.seed} N={w.N} count={w.count}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _diff(args, check: bool) -> int:
    spec = _spec(args)
    failed = 0
    t0 = time.perf_counter()
    for label, ops in _traces(args):
        v = run_diff(ops, spec, args.backend, check=check, inject_fp=args.inject_fp)
        if not v.ok:
            failed += 1
            print(f"{label}: {v.text()}")
        elif args.verbose:
            print(f"{label}: {v.text()}")
    n = 1 if getattr(args, "trace", None) else args.traces
    print(f"{n - failed}/{n} traces passed ({time.perf_counter() - t0:.1f}s)")
    return 1 if failed else 0


def cmd_diff(args) -> int:
    return _diff(args, args.check_invariants)


def cmd_invariants(args) -> int:
    if args.backend != "xpq":
        raise SystemExit("error: invariants are defined for the xpq backend only")
    return _diff(args, True)


def cmd_bench(args) -> int:
    spec = _spec(args)
    backends = args.backend or list(BACKENDS)
    out = []
    for label, ops in _traces(args):
        rep = run_bench(ops, spec, backends)
        if args.format == "csv":
            out.append(rep.csv() if not out else rep.csv().split("\n", 1)[1])
        else:
            out.append(f"# {label}\n" + rep.table())
    sys.stdout.write("".join(out))
    return 0


def cmd_sssp(args) -> int:
    try:
        with open(args.graph) as fh:
            text = fh.read()
    except OSError as e:
        raise SystemExit(f"error: {e}")
    try:
        n, edges = parse_dimacs(text)
    except GraphError as e:
        raise SystemExit(f"error: {args.graph}: {e}")
    t = None if args.paper_params else args.t
    try:
        params = queue_params(n, args.b, args.m, t or 2)
    except ValueError as e:
        raise SystemExit(f"error: {e}")
    store = BlockStore(params)
    g = ingest_graph(n, edges, store)
    if args.backend == "ktree":
        q = TournamentTree(params, seed=_seed(args), store=store)
    else:
        eps = None if args.paper_params else args.epsilon
        q = ExternalPQ(params, t, eps, seed=_seed(args), store=store)
    try:
        res = dijkstra(g, args.source, q)
    except GraphError as e:
        raise SystemExit(f"error: {e}")
    sys.stdout.write("\n".join(res.lines()) + "\n")
    sys.stdout.write(f"# ingest writes={g.ingest_io.writes}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--n", type=int, default=2**16, help="key universe size N (default 2^16)")
    g.add_argument("--b", type=int, default=64, help="block size B in words (default 64)")
    g.add_argument("--m", type=int, default=2**14, help="memory size M in words (default 2^14)")
    g.add_argument("--t", type=int, default=4, help="tree fanout (default 4)")
    g.add_argument("--epsilon", type=float, default=2**-10, help="filter false-positive rate (default 2^-10)")
    g.add_argument("--seed", type=int, default=None, help="seed; falls back to $XPQ_SEED, then 0")
    g.add_argument("--paper-params", action="store_true",
                   help="derive t and epsilon from N instead of the desk-scale defaults")

    work = argparse.ArgumentParser(add_help=False)
    w = work.add_argument_group("workload")
    w.add_argument("trace", nargs="?", help="trace file; omit to generate traces")
    w.add_argument("--kind", choices=KINDS, default="random-mixed")
    w.add_argument("--count", type=int, default=10**4, help="operations per generated trace")
    w.add_argument("--traces", type=int, default=1, help="number of generated traces (seeds seed..seed+k-1)")

    p = argparse.ArgumentParser(prog="xpq", description="External-memory priority queue toolkit.")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("gen", parents=[common], help="write a workload trace")
    s.add_argument("--kind", choices=KINDS, default="random-mixed")
    s.add_argument("--count", type=int, default=10**4)
    s.add_argument("-o", "--out", help="output file (default stdout)")
    s.set_defaults(func=cmd_gen)

    for name, func, helptext in (("diff", cmd_diff, "replay traces against the reference queue"),
                                 ("invariants", cmd_invariants, "replay with invariant checks after every op")):
        s = sub.add_parser(name, parents=[common, work], help=helptext)
        s.add_argument("--backend", choices=BACKENDS, default="xpq")
        s.add_argument("--inject-fp", type=int, default=None, metavar="K",
                       help="force every K-th filter query to answer yes")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "diff":
            s.add_argument("--check-invariants", action="store_true")
        s.set_defaults(func=func)

    s = sub.add_parser("bench", parents=[common, work], help="I/O cost report per backend")
    s.add_argument("--backend", choices=BACKENDS, action="append",
                   help="backend to measure; repeat for several (default: all)")
    s.add_argument("--format", choices=("table", "csv"), default="table")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("sssp", parents=[common], help="shortest paths over a DIMACS-style graph")
    s.add_argument("graph", help="graph file: 'p sp |V| |E|' then 'u v w' lines")
    s.add_argument("--source", type=int, default=1)
    s.add_argument("--backend", choices=BACKENDS, default="xpq")
    s.set_defaults(func=cmd_sssp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
