import hashlib

import pytest

from xpq.oracle import RefQueue
from xpq.workload import KINDS, TraceError, Workload, format_trace, gen_workload, parse_trace


@pytest.mark.parametrize("kind", KINDS)
def test_traces_are_byte_identical_per_spec(kind):
    w = Workload(kind, 1000, 256, 1)
    a, b = format_trace(gen_workload(w)), format_trace(gen_workload(w))
    assert a == b
    assert len(gen_workload(w)) == 1000
    assert format_trace(gen_workload(Workload(kind, 1000, 256, 2))) != a


def test_frozen_digest():
    # guards against silent generator drift; regenerate only on purpose
    text = format_trace(gen_workload(Workload("random-mixed", 1000, 256, 1)))
    assert hashlib.sha256(text.encode()).hexdigest()[:16] == FROZEN_DIGEST


FROZEN_DIGEST = "b704c2e9f2d43f7b"


@pytest.mark.parametrize("kind", KINDS)
def test_keys_in_range(kind):
    for op in gen_workload(Workload(kind, 2000, 100, 3)):
        if op[0] != "X":
            assert 1 <= op[1] <= 100
        if op[0] == "U":
            assert op[2] >= 0


def test_sorted_drain_extracts_non_decreasing():
    ref = RefQueue()
    out = [ref.apply(op) for op in gen_workload(Workload("sorted-drain", 1000, 256, 4))]
    prios = [r[1] for r in out if r]
    assert len(prios) == 256 and prios == sorted(prios)


def test_decrease_heavy_exercises_both_update_branches():
    ref = RefQueue()
    lower = same = 0
    for op in gen_workload(Workload("decrease-heavy", 20000, 512, 5)):
        if op[0] == "U" and op[1] in ref.prio:
            before = ref.prio[op[1]]
            ref.apply(op)
            # "if and only if p < p'": the stored value changes exactly when lower
            if op[2] < before:
                lower += 1
                assert ref.prio[op[1]] == op[2]
            else:
                same += 1
                assert ref.prio[op[1]] == before
        else:
            ref.apply(op)
    assert lower > 1000 and same > 1000
    assert 0.4 < lower / (lower + same) < 0.6


def test_sssp_derived_looks_like_dijkstra():
    ops = gen_workload(Workload("sssp-derived", 5000, 300, 6))
    assert ops[0][0] == "U" and ops[0][2] == 0
    assert {o[0] for o in ops} == {"U", "X"}


def test_parse_round_trip_and_comments():
    ops = [("U", 3, 7), ("D", 2), ("X",)]
    text = format_trace(ops, header="a\nb")
    assert text.startswith("# a\n# b\n")
    assert parse_trace(text) == ops
    assert parse_trace("\n  # c\nX\n") == [("X",)]


@pytest.mark.parametrize("bad,line", [
    ("X\nQ 1\n", 2),
    ("U 1\n", 1),
    ("X\nX\nD x\n", 3),
    ("U 300 1\n", 1),
    ("U 3 -1\n", 1),
    ("X 1\n", 1),
])
def test_parse_errors_carry_line_numbers(bad, line):
    with pytest.raises(TraceError) as e:
        parse_trace(bad, N=256)
    assert e.value.lineno == line and str(e.value).startswith(f"line {line}:")


def test_workload_validation():
    with pytest.raises(ValueError):
        Workload("nope", 1, 1)
    with pytest.raises(ValueError):
        Workload("random-mixed", -1, 10)
