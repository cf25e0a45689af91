import pytest

from xpq.emx import ModelParams
from xpq.pq import INF, ExternalPQ, _Meta

SMALL = dict(N=256, B=4, M=256)


@pytest.fixture
def small_pq():
    return ExternalPQ(ModelParams(**SMALL), t=2, epsilon=2**-6, seed=0)


def bnd(q, p):
    """Boundary rank admitting every key at priority ``p``."""
    return q.rank(q.kmask, p)


def set_node(q, v, entries=(), sig=(), todo=(), boundary=INF):
    """Overwrite a disk node; signals are ints (rank = Update, -k = Delete)."""
    m = _Meta()
    m.off = m.ln = m.sl = 0
    m.bnd = boundary
    todo = list(todo)
    m.todo = q._todo_from(todo)
    m.tl = len(q._todo_sigs(m.todo))
    ranks = sorted(q.rank(k, p) for k, p in entries)
    q._rewrite_list(v, m, ranks)
    if sig:
        q._append_sigs(v, m, list(sig))
    q._write_meta(v, m, force=True)
    q._write_filter(v, q._fresh_filter(v, [k for k, _ in entries]))


def entries(q, v):
    """``(key, priority)`` pairs of ``v``'s list, descending."""
    return [q.split(r) for r in q.peek(v).entries]


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
