"""External-memory Dijkstra on top of the priority queue.

Graph layout on the block store:

* an index region of ``(start word, degree)`` pairs, ``B // 2`` vertices
  per block, so one block read locates any vertex;
* an adjacency region of ``(target, weight)`` word pairs grouped by source.
  A record is placed at the current tail only if it then spans exactly
  ``ceil(2·deg/B)`` blocks; otherwise the tail is advanced to the next block
  boundary first. Fetching ``v`` therefore costs ``ceil(2·deg/B) + 1`` reads,
  and padding at most doubles the region.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .emx import BlockStore, IoStats, ModelParams, WORD


class GraphError(ValueError):
    def __init__(self, msg: str, lineno: int | None = None):
        super().__init__(f"line {lineno}: {msg}" if lineno is not None else msg)
        self.lineno = lineno


def parse_dimacs(text: str) -> tuple[int, list[tuple[int, int, int]]]:
    """Parse ``p sp |V| |E|`` followed by ``u v w`` (or ``a u v w``) lines."""
    n = m = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0] in ("c", "#"):
            continue
        if parts[0] == "p":
            if n is not None:
                raise GraphError("duplicate problem line", lineno)
            if len(parts) != 4 or parts[1] != "sp":
                raise GraphError(f"malformed problem line {raw.strip()!r}; expected 'p sp |V| |E|'", lineno)
            try:
                n, m = int(parts[2]), int(parts[3])
            except ValueError:
                raise GraphError(f"malformed problem line {raw.strip()!r}", lineno) from None
            if n < 1 or m < 0:
                raise GraphError("vertex count must be >= 1 and edge count >= 0", lineno)
            continue
        if parts[0] == "a":
            parts = parts[1:]
        if n is None:
            raise GraphError("edge before the 'p sp' problem line", lineno)
        if len(parts) != 3:
            raise GraphError(f"malformed edge line {raw.strip()!r}; expected 'u v w'", lineno)
        try:
            u, v, w = (int(x) for x in parts)
        except ValueError:
            raise GraphError(f"malformed edge line {raw.strip()!r}", lineno) from None
        if w < 0:
            raise GraphError(f"negative weight {w}", lineno)
        for x in (u, v):
            if not 1 <= x <= n:
                raise GraphError(f"vertex label {x} out of range 1..{n}", lineno)
        edges.append((u, v, w))
    if n is None:
        raise GraphError("missing 'p sp |V| |E|' problem line")
    if len(edges) != m:
        raise GraphError(f"header announces {m} edges but {len(edges)} were read")
    return n, edges


def format_dimacs(n: int, edges) -> str:
    lines = [f"p sp {n} {len(edges)}"]
    lines.extend(f"{u} {v} {w}" for u, v, w in edges)
    return "\n".join(lines) + "\n"


@dataclass
class ExtGraph:
    n: int
    m: int
    store: BlockStore
    index_blocks: list[int]
    adj_blocks: list[int]
    ingest_io: IoStats

    def _index(self, v: int) -> tuple[int, int]:
        per = self.store.B // 2
        blk = self.store.read_block(self.index_blocks[(v - 1) // per])
        i = 2 * ((v - 1) % per)
        return int(blk[i]), int(blk[i + 1])

    def neighbors(self, v: int):
        """Yield ``(target, weight)`` for ``v``, reading one block at a time."""
        start, deg = self._index(v)
        if not deg:
            return
        st, B = self.store, self.store.B
        tok = st.pin(B)
        try:
            end = start + 2 * deg
            half = None  # a pair may straddle blocks when B is odd
            for b in range(start // B, -(-end // B)):
                blk = st.read_block(self.adj_blocks[b])
                for x in blk[max(start, b * B) - b * B: min(end, (b + 1) * B) - b * B].tolist():
                    if half is None:
                        half = x
                    else:
                        yield half, x
                        half = None
        finally:
            st.unpin(tok)

    def edges(self):
        """All arcs ``(u, v, w)`` in source order (costs I/Os)."""
        for u in range(1, self.n + 1):
            for v, w in self.neighbors(u):
                yield u, v, w


def ingest_graph(n: int, edges, store: BlockStore) -> ExtGraph:
    """Lay out a multigraph on ``store``. Duplicate arcs are kept."""
    B = store.B
    if B < 2:
        raise GraphError("B must be at least 2")
    deg = [0] * (n + 1)
    for u, v, w in edges:
        if not (1 <= u <= n and 1 <= v <= n):
            raise GraphError(f"vertex label out of range in arc ({u}, {v})")
        if w < 0:
            raise GraphError(f"negative weight in arc ({u}, {v}, {w})")
        deg[u] += 1
    start = [0] * (n + 1)
    tail = 0
    for u in range(1, n + 1):
        need = 2 * deg[u]
        if need and -(-(tail % B + need) // B) > -(-need // B):
            tail = -(-tail // B) * B
        start[u] = tail
        tail += need
    adj = np.zeros(max(tail, 1), dtype=WORD)
    fill = start[:]
    # Ingestion groups arcs by source in host memory; the model only charges
    # the block writes that materialize the layout.
    for u, v, w in edges:
        adj[fill[u]] = v
        adj[fill[u] + 1] = w
        fill[u] += 2
    per = B // 2
    index = np.zeros((-(-n // per), B), dtype=WORD)
    flat = index[:, : 2 * per].reshape(-1)
    flat[0:2 * n:2] = start[1:]
    flat[1:2 * n:2] = deg[1:]
    index[:, : 2 * per] = flat.reshape(-1, 2 * per)

    before = store.snapshot_stats()
    tok = store.pin(B)
    try:
        index_blocks = _write_region(store, index.reshape(-1))
        adj_blocks = _write_region(store, adj[:tail]) if tail else []
    finally:
        store.unpin(tok)
    return ExtGraph(n, len(edges), store, index_blocks, adj_blocks, store.snapshot_stats() - before)


def _write_region(store: BlockStore, words: np.ndarray) -> list[int]:
    B = store.B
    bids = []
    for i in range(0, len(words), B):
        bid = store.alloc_block()
        chunk = np.zeros(B, dtype=WORD)
        part = words[i:i + B]
        chunk[: len(part)] = part
        store.write_block(bid, chunk)
        bids.append(bid)
    return bids


@dataclass
class SsspResult:
    source: int
    dist: list[int | None]  # index 0 unused; None means unreachable
    io: IoStats
    adjacency_io: int = 0
    queue_io: int = 0
    updates: int = 0
    extracts: int = 0
    stale: int = 0
    peak_pinned: int = 0
    extra: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = [f"{v} {'inf' if d is None else d}" for v, d in enumerate(self.dist) if v]
        io = self.io
        out.append(
            f"# io reads={io.reads} writes={io.writes} allocs={io.allocs} total={io.total} "
            f"adjacency={self.adjacency_io} queue={self.queue_io} updates={self.updates} "
            f"extracts={self.extracts} stale={self.stale} peak_pinned={self.peak_pinned}"
        )
        return out


def queue_params(n: int, B: int, M: int, t: int) -> ModelParams:
    """Smallest model admitting a queue over keys 1..n with these B, M, t."""
    return ModelParams(max(n, M, t * B + 1), B, M)


def dijkstra(g: ExtGraph, source: int, queue) -> SsspResult:
    """Single-source shortest paths with ``queue`` as the tentative-distance heap.

    ``queue`` must share ``g.store`` so adjacency and queue traffic are
    counted against one memory budget.
    """
    if not 1 <= source <= g.n:
        raise GraphError(f"source {source} out of range 1..{g.n}")
    st = g.store
    if queue.store is not st:
        raise ValueError("queue and graph must share one block store")
    before = st.snapshot_stats()
    settled = bytearray(g.n + 1)
    # The settled bitmap is resident: |V| bits rounded up to words.
    bitmap = st.pin(-(-(g.n + 1) // st.params.w))
    dist: list[int | None] = [None] * (g.n + 1)
    res = SsspResult(source, dist, IoStats(0, 0, 0))
    cap = getattr(queue, "max_priority", None)
    try:
        queue.update(source, 0)
        res.updates += 1
        while True:
            top = queue.extract_min()
            if top is None:
                break
            res.extracts += 1
            v, d = top
            if settled[v]:
                res.stale += 1
                continue
            settled[v] = 1
            dist[v] = d
            a0 = st.reads + st.writes
            nbrs = list(g.neighbors(v))
            res.adjacency_io += st.reads + st.writes - a0
            for u, w in nbrs:
                if settled[u]:
                    continue
                if cap is not None and d + w > cap:
                    raise OverflowError(f"distance {d + w} exceeds the queue's priority range")
                queue.update(u, d + w)
                res.updates += 1
    finally:
        st.unpin(bitmap)
    res.io = st.snapshot_stats() - before
    res.queue_io = res.io.total - res.adjacency_io
    res.peak_pinned = st.peak_pinned
    return res


def dijkstra_memory(n: int, edges, source: int) -> list[int | None]:
    """Plain binary-heap Dijkstra; the reference for distance agreement."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n + 1)]
    for u, v, w in edges:
        adj[u].append((v, w))
    dist: list[int | None] = [None] * (n + 1)
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if dist[u] is not None:
            continue
        dist[u] = d
        for v, w in adj[u]:
            if dist[v] is None:
                heapq.heappush(heap, (d + w, v))
    return dist


def adjacency_reads_bound(deg: int, B: int) -> int:
    return math.ceil(2 * deg / B) + 1
