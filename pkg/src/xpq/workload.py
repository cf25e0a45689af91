"""Deterministic workload generators and the text trace format.

A trace is a list of tuples ``("U", k, p)``, ``("D", k)`` or ``("X",)``.
On disk each operation is one line (``U k p``, ``D k``, ``X``); lines
starting with ``#`` are comments.
"""
from __future__ import annotations

import heapq
import random
from dataclasses import dataclass

from .oracle import RefQueue

KINDS = ("random-mixed", "insert-heavy", "decrease-heavy", "sorted-drain", "sssp-derived")
DEFAULT_MAX_PRIORITY = 10**6


class TraceError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class Workload:
    kind: str
    count: int
    N: int
    seed: int = 0
    max_priority: int = DEFAULT_MAX_PRIORITY

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown workload kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.count < 0 or self.N < 1:
            raise ValueError("count must be >= 0 and N >= 1")


def format_trace(ops, header: str | None = None) -> str:
    out = []
    if header:
        out.extend(f"# {line}" for line in header.splitlines())
    for op in ops:
        out.append(" ".join(map(str, op)))
    return "\n".join(out) + "\n"


def parse_trace(text: str, N: int | None = None) -> list[tuple]:
    ops = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        want = {"U": 3, "D": 2, "X": 1}.get(tag)
        if want is None:
            raise TraceError(lineno, f"unknown operation {tag!r}")
        if len(parts) != want:
            raise TraceError(lineno, f"{tag} takes {want - 1} argument(s), got {len(parts) - 1}")
        try:
            args = [int(x) for x in parts[1:]]
        except ValueError:
            raise TraceError(lineno, f"non-integer argument in {line!r}") from None
        if args:
            k = args[0]
            if k < 1 or (N is not None and k > N):
                raise TraceError(lineno, f"key {k} outside 1..{N if N is not None else 'N'}")
            if tag == "U" and args[1] < 0:
                raise TraceError(lineno, f"negative priority {args[1]}")
        ops.append((tag, *args))
    return ops


def _random_mixed(w: Workload, rng: random.Random):
    N, P = w.N, w.max_priority
    for _ in range(w.count):
        x = rng.random()
        if x < 0.5:
            yield ("U", rng.randint(1, N), rng.randint(0, P))
        elif x < 0.7:
            yield ("D", rng.randint(1, N))
        else:
            yield ("X",)


def _insert_heavy(w: Workload, rng: random.Random):
    N, P = w.N, w.max_priority
    for _ in range(w.count):
        x = rng.random()
        if x < 0.8:
            yield ("U", rng.randint(1, N), rng.randint(0, P))
        elif x < 0.9:
            yield ("D", rng.randint(1, N))
        else:
            yield ("X",)


def _decrease_heavy(w: Workload, rng: random.Random):
    # A shadow queue tells us which keys are live and at what priority, so a
    # DecreaseKey can be aimed at a live key. Half of them lower the priority,
    # the other half restate one that is not smaller (a no-op update).
    N, P = w.N, w.max_priority
    ref = RefQueue()
    live: list[int] = []
    pos: dict[int, int] = {}

    def drop(k):
        i = pos.pop(k)
        last = live.pop()
        if last != k:
            live[i] = last
            pos[last] = i

    for _ in range(w.count):
        x = rng.random()
        if live and x < 0.6:
            k = live[rng.randrange(len(live))]
            p = ref.prio[k]
            if p > 0 and rng.random() < 0.5:
                op = ("U", k, rng.randrange(p))
            else:
                op = ("U", k, rng.randint(p, P))
        elif x < 0.8 or not live:
            op = ("U", rng.randint(1, N), rng.randint(0, P))
        elif x < 0.9:
            op = ("D", live[rng.randrange(len(live))])
        else:
            op = ("X",)
        out = ref.apply(op)
        if op[0] == "U" and op[1] not in pos:
            pos[op[1]] = len(live)
            live.append(op[1])
        elif op[0] == "D":
            drop(op[1])
        elif out is not None:
            drop(out[0])
        yield op


def _sorted_drain(w: Workload, rng: random.Random):
    n = min(w.N, w.count // 2)
    keys = rng.sample(range(1, w.N + 1), n)
    for k in keys:
        yield ("U", k, rng.randint(0, w.max_priority))
    for _ in range(w.count - n):
        yield ("X",)


def random_graph(n: int, m: int, rng: random.Random, max_weight: int = 1000):
    """Directed multigraph on 1..n with ``m`` uniformly random weighted arcs."""
    return [(rng.randint(1, n), rng.randint(1, n), rng.randint(0, max_weight)) for _ in range(m)]


def _sssp_derived(w: Workload, rng: random.Random):
    # Dijkstra runs from successive sources on one random graph with average
    # out-degree 4. Each run drains the queue, so runs concatenate cleanly.
    n = w.N
    maxw = max(1, w.max_priority // max(n, 1))
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n + 1)]
    for u, v, c in random_graph(n, 4 * n, rng, maxw):
        adj[u].append((v, c))
    emitted = 0
    while emitted < w.count:
        src = rng.randint(1, n)
        done = bytearray(n + 1)
        best = {src: 0}
        heap = [(0, src)]
        ops = [("U", src, 0)]
        while heap:
            d, u = heapq.heappop(heap)
            if done[u] or d != best[u]:
                continue
            ops.append(("X",))
            done[u] = 1
            for v, c in adj[u]:
                if done[v]:
                    continue
                ops.append(("U", v, d + c))
                if d + c < best.get(v, d + c + 1):
                    best[v] = d + c
                    heapq.heappush(heap, (d + c, v))
        for op in ops:
            if emitted == w.count:
                return
            emitted += 1
            yield op


_GEN = {
    "random-mixed": _random_mixed,
    "insert-heavy": _insert_heavy,
    "decrease-heavy": _decrease_heavy,
    "sorted-drain": _sorted_drain,
    "sssp-derived": _sssp_derived,
}


def gen_workload(w: Workload) -> list[tuple]:
    rng = random.Random(f"{w.kind}:{w.seed}:{w.N}:{w.count}")
    return list(_GEN[w.kind](w, rng))
