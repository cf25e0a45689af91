import math
import random

import pytest

from xpq.emx import BlockStore, ModelParams
from xpq.ktree import TournamentTree
from xpq.pq import ExternalPQ
from xpq.sssp import (
    GraphError,
    adjacency_reads_bound,
    dijkstra,
    dijkstra_memory,
    format_dimacs,
    ingest_graph,
    parse_dimacs,
    queue_params,
)
from xpq.workload import random_graph


def run(n, edges, source=1, B=4, M=256, t=2, backend="xpq"):
    p = queue_params(n, B, M, t)
    st = BlockStore(p)
    g = ingest_graph(n, edges, st)
    q = ExternalPQ(p, t, 2**-6, store=st) if backend == "xpq" else TournamentTree(p, store=st)
    return g, dijkstra(g, source, q)


def test_triangle_ingests_to_one_block():
    st = BlockStore(ModelParams(2**14, 32, 2**14))
    g = ingest_graph(3, [(1, 2, 1), (2, 3, 1), (1, 3, 5)], st)
    assert len(g.adj_blocks) == 1 and len(g.index_blocks) == 1
    assert g.ingest_io.writes == 2


def test_ingest_round_trip_multiset():
    rng = random.Random(1)
    edges = random_graph(50, 300, rng) + [(3, 4, 2), (3, 4, 2)]
    for B in (4, 5, 16):
        st = BlockStore(ModelParams(256, B, 256))
        g = ingest_graph(50, edges, st)
        assert sorted(g.edges()) == sorted(edges)


def test_adjacency_fetch_cost():
    rng = random.Random(2)
    edges = random_graph(64, 700, rng)
    deg = [0] * 65
    for u, _, _ in edges:
        deg[u] += 1
    for B in (4, 6, 32):
        st = BlockStore(ModelParams(256, B, 256))
        g = ingest_graph(64, edges, st)
        for v in range(1, 65):
            r0 = st.reads
            list(g.neighbors(v))
            assert st.reads - r0 == (math.ceil(2 * deg[v] / B) + 1 if deg[v] else 1)
            assert st.reads - r0 <= adjacency_reads_bound(deg[v], B)


def test_ingest_write_count_scales_with_edges():
    # 10^5 arcs: writes within 2x of 2|E|/B (plus the index region)
    rng = random.Random(3)
    n, m, B = 2000, 10**5, 64
    st = BlockStore(ModelParams(2**14, B, 2**14))
    g = ingest_graph(n, random_graph(n, m, rng), st)
    ideal = 2 * m / B
    assert ideal <= g.ingest_io.writes - len(g.index_blocks) <= 2 * ideal
    assert g.ingest_io.reads == 0


def test_path_graph():
    _, r = run(3, [(1, 2, 1), (2, 3, 1)])
    assert r.dist[1:] == [0, 1, 2] and r.queue_io > 0


def test_unreachable_vertex():
    _, r = run(4, [(1, 2, 3)])
    assert r.dist[1:] == [0, 3, None, None]
    assert r.lines()[2] == "3 inf"
    assert r.lines()[-1].startswith("# io reads=")


@pytest.mark.parametrize("backend", ["xpq", "ktree"])
def test_random_graphs_match_memory_dijkstra(backend):
    for i in range(12):
        rng = random.Random(100 + i)
        n = rng.randint(1, 300)
        edges = random_graph(n, rng.randint(0, 2000), rng, 10**6)
        src = rng.randint(1, n)
        _, r = run(n, edges, src, B=5 if i % 2 else 4, backend=backend)
        assert r.dist == dijkstra_memory(n, edges, src), i
        assert r.stale == 0
        assert r.updates <= len(edges) + 1
        assert r.extracts <= n


def test_source_out_of_range():
    p = queue_params(3, 4, 256, 2)
    st = BlockStore(p)
    g = ingest_graph(3, [], st)
    with pytest.raises(GraphError):
        dijkstra(g, 4, ExternalPQ(p, 2, store=st))


def test_queue_must_share_store():
    p = queue_params(3, 4, 256, 2)
    g = ingest_graph(3, [], BlockStore(p))
    with pytest.raises(ValueError):
        dijkstra(g, 1, ExternalPQ(p, 2))


def test_dimacs_round_trip():
    edges = [(1, 2, 5), (2, 1, 0), (2, 2, 7)]
    n, got = parse_dimacs("c comment\n" + format_dimacs(2, edges).replace("1 2 5", "a 1 2 5"))
    assert n == 2 and got == edges


@pytest.mark.parametrize("text,line,msg", [
    ("p sp 3 1\n1 2\n", 2, "malformed edge"),
    ("p sp 3 1\n1 2 -4\n", 2, "negative weight"),
    ("p sp 3 1\n1 9 4\n", 2, "out of range"),
    ("1 2 3\n", 1, "before the"),
    ("p sp x 1\n", 1, "malformed problem"),
    ("p sp 3 1\np sp 3 1\n", 2, "duplicate"),
    ("p sp 3 1\n1 2 z\n", 2, "malformed edge"),
])
def test_dimacs_errors_have_line_numbers(text, line, msg):
    with pytest.raises(GraphError) as e:
        parse_dimacs(text)
    assert e.value.lineno == line and msg in str(e.value)


def test_dimacs_edge_count_mismatch():
    with pytest.raises(GraphError):
        parse_dimacs("p sp 3 2\n1 2 3\n")
    with pytest.raises(GraphError):
        parse_dimacs("")


def test_ingest_rejects_bad_arcs():
    st = BlockStore(ModelParams(256, 4, 256))
    with pytest.raises(GraphError):
        ingest_graph(3, [(1, 4, 1)], st)
    with pytest.raises(GraphError):
        ingest_graph(3, [(1, 2, -1)], st)


def test_settled_bitmap_is_pinned():
    g, r = run(200, random_graph(200, 800, random.Random(5)))
    assert g.store.pinned == g.store._pins[next(iter(g.store._pins))]  # only the queue's root pin remains
    assert r.peak_pinned <= 256
