"""Wall-clock comparison of the numba kernels and the numpy fallback.

The switch is read at import time, so each backend runs in a child process:

    python benchmarks/bench_kernels.py            # both backends, table
    python benchmarks/bench_kernels.py --repeat 5

Also checks that both backends produce the same filter bits and the same
queue I/O counts, since the model counts I/Os and not seconds.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def worker(repeat: int) -> dict:
    import hashlib

    import numpy as np

    from xpq import _kernels as K
    from xpq._accel import backend_name
    from xpq.bench import QueueSpec, measure
    from xpq.emx import ModelParams
    from xpq.filter import Filter, FilterParams
    from xpq.workload import Workload, gen_workload

    rng = np.random.default_rng(0)
    f = Filter(FilterParams(4096, 2**-10, seed=1))
    members = rng.choice(10**9, size=4000, replace=False) + 1
    for k in members:
        f.insert(int(k))
    probes = rng.integers(1, 10**9, size=10**6, dtype=np.int64)
    out = np.zeros(len(probes), dtype=np.bool_)
    p = f.params
    slots = (f.fps << 2) | f.cnt
    words = K.pack_bits(slots, p.slot_bits, p.packed_words)

    def insert_delete():
        g = Filter(FilterParams(512, 2**-10, seed=2))
        for k in members[:500]:
            g.insert(int(k))
        for k in members[:500]:
            g.delete(int(k))

    ops = gen_workload(Workload("random-mixed", 5000, 2**16, 1))
    spec = QueueSpec(ModelParams(2**16, 64, 2**14), 4, 2**-10)

    # warm-up so JIT compilation is not timed
    K.table_query_many(f.fps, f.cnt, f._nb, f._fpb, f._seed, probes[:10], out[:10])
    K.unpack_bits(words, p.slot_bits, len(slots))
    insert_delete()

    res = {"backend": backend_name()}
    res["query_many_1e6"] = _best(lambda: K.table_query_many(f.fps, f.cnt, f._nb, f._fpb, f._seed, probes, out), repeat)
    res["pack_bits"] = _best(lambda: K.pack_bits(slots, p.slot_bits, p.packed_words), repeat)
    res["unpack_bits"] = _best(lambda: K.unpack_bits(words, p.slot_bits, len(slots)), repeat)
    res["filter_insert_delete_1e3"] = _best(insert_delete, repeat)
    row = None

    def replay():
        nonlocal row
        row = measure(ops, spec.build("xpq"), "xpq")

    res["pq_replay_5e3"] = _best(replay, max(1, repeat // 2))
    K.table_query_many(f.fps, f.cnt, f._nb, f._fpb, f._seed, probes, out)
    res["fp_hits"] = int(out.sum())
    res["filter_digest"] = hashlib.sha256(f.to_words().tobytes()).hexdigest()[:16]
    res["pq_total_io"] = row.total
    return res


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.worker:
        print(json.dumps(worker(args.repeat)))
        return 0
    results = []
    for disable in ("0", "1"):
        env = dict(os.environ, XPQ_DISABLE_NUMBA=disable)
        out = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(args.repeat)],
                             env=env, check=True, capture_output=True, text=True)
        results.append(json.loads(out.stdout.strip().splitlines()[-1]))
    a, b = results
    timed = [k for k, v in a.items() if isinstance(v, float)]
    print(f"{'kernel':<26}{a['backend']:>12}{b['backend']:>12}{'speedup':>10}")
    for k in timed:
        print(f"{k:<26}{a[k] * 1e3:>10.2f}ms{b[k] * 1e3:>10.2f}ms{b[k] / a[k]:>9.1f}x")
    same = all(a[k] == b[k] for k in ("fp_hits", "filter_digest", "pq_total_io"))
    print(f"identical outputs across backends: {same} "
          f"(fp_hits={a['fp_hits']}, pq_total_io={a['pq_total_io']})")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
