import numpy as np
import pytest
from conftest import SMALL, entries, set_node

from xpq.bench import QueueSpec, run_diff
from xpq.emx import ModelParams
from xpq.oracle import (
    INF,
    MarkLog,
    NaiveQueue,
    RefQueue,
    Violation,
    check_invariants,
    final_priorities,
    final_priority,
)
from xpq.pq import ExternalPQ
from xpq.workload import Workload, gen_workload


def built(kind="insert-heavy", n=400, seed=1, fp=None):
    q = ExternalPQ(ModelParams(**SMALL), t=2, epsilon=2**-6)
    q.inject_fp_every = fp
    marks, ref = MarkLog(q), RefQueue()
    for op in gen_workload(Workload(kind, n, 256, seed)):
        q.apply(op)
        ref.apply(op)
    return q, marks, ref


def some_node(q):
    return next(n for n in q.nodes[1:] if len(q.peek(n).entries) >= 2)


def test_ref_queue_matches_naive_scan():
    ref, naive = RefQueue(), NaiveQueue()
    for i, op in enumerate(gen_workload(Workload("random-mixed", 10**4, 256, 9))):
        assert ref.apply(op) == naive.apply(op), i
    assert len(ref) == len(naive.items)


def test_ref_queue_semantics():
    r = RefQueue()
    r.update(5, 3)
    r.update(5, 9)  # larger priority: no-op
    r.update(2, 3)
    assert r.extract_min() == (2, 3)
    r.delete(5)
    assert r.extract_min() is None
    with pytest.raises(ValueError):
        r.apply(("Q",))


def test_violation_line_format():
    v = Violation("5", "/0/1", 42, "actual (42,7) > boundary (3,5)")
    assert v.line() == "INV5 node=/0/1 key=42 actual (42,7) > boundary (3,5)"


@pytest.mark.parametrize("fp", [None, 25])
def test_invariants_hold_after_every_op(fp):
    q = ExternalPQ(ModelParams(**SMALL), t=2, epsilon=2**-6, seed=2)
    q.inject_fp_every = fp
    marks, ref = MarkLog(q), RefQueue()
    for i, op in enumerate(gen_workload(Workload("random-mixed", 600, 256, 4))):
        assert q.apply(op) == ref.apply(op)
        rep = check_invariants(q, marks, ref, filters=True)
        assert rep.ok, (i, rep.text())
    if fp:
        assert marks.events > 0


def test_final_priorities_equal_reference():
    q, _, ref = built("decrease-heavy", 1500, 3)
    assert {k: r >> q.kbits for k, r in final_priorities(q).items()} == ref.prio
    k = next(iter(ref.prio))
    assert final_priority(q, k) == q.rank(k, ref.prio[k])
    gone = next(k for k in range(1, 257) if k not in ref.prio)
    assert final_priority(q, gone) == INF


def test_detects_unsorted_list():
    q, marks, ref = built()
    v = some_node(q)
    m = q._load_meta(v)
    q._write(v.lst, 2 * m.off, q._enc_entries(q.peek(v).entries[::-1]))
    rep = check_invariants(q, marks, ref)
    assert rep.first().invariant == "S" and "descending" in rep.first().detail


def test_detects_boundary_below_entries():
    q, marks, ref = built()
    v = some_node(q)
    m = q._load_meta(v)
    m.bnd = min(q.peek(v).entries)
    m.dh = True
    q._write_meta(v, m)
    rep = check_invariants(q, marks, ref)
    assert {x.invariant for x in rep.violations} == {"5"}
    assert all(x.node == q.node_path(v) for x in rep.violations)


def test_detects_lost_entry():
    q, marks, ref = built()
    v = some_node(q)
    rec = q.peek(v)
    lost = rec.entries[0] & q.kmask
    set_node(q, v, entries=entries(q, v)[1:], sig=rec.sig, todo=rec.todo, boundary=rec.boundary)
    rep = check_invariants(q, marks, ref)
    assert any(x.invariant == "3" and x.key == lost for x in rep.violations)


def test_detects_key_off_its_path():
    q, marks, ref = built()
    leaf = q.path(200)[0]
    rec = q.peek(leaf)
    set_node(q, leaf, entries=entries(q, leaf) + [(1, 0)], todo=rec.todo, boundary=rec.boundary)
    rep = check_invariants(q, marks, ref)
    assert any(x.invariant == "1" and x.key == 1 for x in rep.violations)


def test_detects_duplicate_finite_copies():
    q, marks, ref = built()
    km = q.kmask

    def quiet(k):
        # no signal for k anywhere on its path and no entry in its leaf
        for n in q.path(k):
            r = q.peek(n, with_filter=False)
            if any((-s if s < 0 else s & km) == k for s in r.sig + r.todo):
                return False
        return all((r & km) != k for r in q.peek(q.path(k)[0]).entries)

    k = next(k for k in sorted(ref.prio) if quiet(k))
    leaf = q.path(k)[0]
    rec = q.peek(leaf)
    set_node(q, leaf, entries=entries(q, leaf) + [(k, ref.prio[k] + 1)], todo=rec.todo, boundary=rec.boundary)
    rep = check_invariants(q, marks, ref)
    assert any(x.invariant in ("1", "2") and x.key == k for x in rep.violations)


def test_detects_bad_todo_shape():
    q, marks, ref = built()
    v = some_node(q)
    rec = q.peek(v)
    k = rec.entries[0] & q.kmask
    # two Updates for one key cannot come out of the todo encoder, so write raw
    m = q._load_meta(v)
    sigs = [q.rank(k, 1), q.rank(k, 2)]
    m.tl = 2
    head = np.array([m.off, m.ln, m.sl, m.tl, q._bword(m.bnd)], dtype=np.uint64)
    q._write(v.meta, 0, np.concatenate([head, q._enc_sigs(sigs)]))
    rep = check_invariants(q, marks, ref)
    assert any(x.invariant == "6" and x.key == k for x in rep.violations)


def test_mark_log_records_forced_false_positives():
    q, marks, _ = built("random-mixed", 600, 2, fp=3)
    assert marks.events > 0
    assert check_invariants(q, marks).ok


def _mutate(q):
    # PushSignal stops forwarding Delete signals to children
    orig = q._append_sigs

    def append(v, m, sigs):
        kept = [s for s in sigs if s >= 0]
        if kept:
            orig(v, m, kept)

    q._append_sigs = append
    return q


def test_skipping_delete_forwarding_is_caught():
    spec = QueueSpec(ModelParams(**SMALL), 2, 2**-6)
    verdicts = [
        run_diff(gen_workload(Workload("random-mixed", 3000, 256, seed)), spec, queue=_mutate(spec.build()))
        for seed in range(5)
    ]
    bad = [v for v in verdicts if not v.ok]
    assert bad and "divergence at op" in bad[0].text()


def test_random_structure_check_is_cheap_enough():
    q, marks, ref = built("random-mixed", 300, 5)
    rep = check_invariants(q, marks, ref)
    assert rep.ok and rep.keys_checked >= len(ref.prio)
