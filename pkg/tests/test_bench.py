from fractions import Fraction

import pytest

from xpq.bench import QueueSpec, analytic_refs, run_bench, run_diff
from xpq.emx import ModelParams
from xpq.workload import KINDS, Workload, gen_workload

SPEC = QueueSpec(ModelParams(256, 4, 256), 2, 2**-6, 1)


def test_empty_trace_costs_nothing_beyond_construction():
    rep = run_bench([], SPEC)
    assert all(r.total == 0 and r.amortized == 0 for r in rep.rows)


def test_amortized_is_exact():
    ops = gen_workload(Workload("random-mixed", 1500, 256, 3))
    for r in run_bench(ops, SPEC).rows:
        assert isinstance(r.amortized, Fraction)
        assert r.amortized * r.ops == r.total == r.reads + r.writes


def test_refs():
    a, b = analytic_refs(2**16, 64)
    assert b == pytest.approx(10 / 64) and a == pytest.approx(10 / 256)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("backend", ["xpq", "ktree"])
def test_every_kind_replays_cleanly(kind, backend):
    v = run_diff(gen_workload(Workload(kind, 3000, 256, 7)), SPEC, backend)
    assert v.ok, v.text()


def test_unknown_backend():
    with pytest.raises(ValueError):
        SPEC.build("heap")
