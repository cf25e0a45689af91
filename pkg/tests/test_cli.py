import pytest

from xpq.cli import main
from xpq.workload import parse_trace

SMALL = ["--n", "256", "--b", "4", "--m", "256", "--t", "2", "--epsilon", "0.015625"]


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_gen_is_deterministic(capsys, tmp_path):
    _, a = run(capsys, "gen", *SMALL, "--count", "300", "--seed", "4")
    _, b = run(capsys, "gen", *SMALL, "--count", "300", "--seed", "4")
    assert a == b and len(parse_trace(a, 256)) == 300
    out = tmp_path / "t.txt"
    assert main(["gen", *SMALL, "--count", "300", "--seed", "4", "-o", str(out)]) == 0
    assert out.read_text() == a


def test_seed_falls_back_to_env(capsys, monkeypatch):
    _, a = run(capsys, "gen", *SMALL, "--count", "50", "--seed", "9")
    monkeypatch.setenv("XPQ_SEED", "9")
    _, b = run(capsys, "gen", *SMALL, "--count", "50")
    assert a == b
    monkeypatch.setenv("XPQ_SEED", "x")
    with pytest.raises(SystemExit, match="XPQ_SEED"):
        main(["gen", *SMALL])


@pytest.mark.parametrize("backend", ["xpq", "ktree"])
def test_diff_passes(capsys, backend):
    code, out = run(capsys, "diff", *SMALL, "--count", "2000", "--traces", "3", "--backend", backend)
    assert code == 0 and "3/3 traces passed" in out


def test_diff_on_trace_file(capsys, tmp_path):
    f = tmp_path / "t.txt"
    f.write_text("U 3 5\nU 2 9\nX\nD 2\nX\n")
    code, out = run(capsys, "diff", *SMALL, str(f), "-v", "--check-invariants")
    assert code == 0 and "pass: 5 ops" in out


def test_trace_errors_name_the_line(tmp_path):
    f = tmp_path / "t.txt"
    f.write_text("U 3 5\nU 999 1\n")
    with pytest.raises(SystemExit, match="line 2"):
        main(["diff", *SMALL, str(f)])


def test_divergence_exits_nonzero(capsys, monkeypatch):
    from xpq import pq

    real = pq.ExternalPQ.extract_min

    def wrong(self):
        r = real(self)
        return None if r is None else (r[0], r[1] + 1)

    monkeypatch.setattr(pq.ExternalPQ, "extract_min", wrong)
    code, out = run(capsys, "diff", *SMALL, "--count", "200")
    assert code == 1 and "divergence at op" in out


def test_violation_exits_nonzero(capsys, monkeypatch):
    from xpq import bench
    from xpq.oracle import Report, Violation

    def broken(q, marks=None, ref=None, **kw):
        return Report([Violation("3", "/", 1, "planted")], 0)

    monkeypatch.setattr(bench, "check_invariants", broken)
    code, out = run(capsys, "invariants", *SMALL, "--count", "20")
    assert code == 1 and "INV3 node=/ key=1 planted" in out


def test_invariants_with_injected_fp(capsys):
    code, out = run(capsys, "invariants", *SMALL, "--count", "400", "--inject-fp", "25", "-v")
    assert code == 0 and "FP marks" in out
    with pytest.raises(SystemExit):
        main(["invariants", *SMALL, "--backend", "ktree"])


def test_bench_formats(capsys):
    code, csv = run(capsys, "bench", *SMALL, "--count", "500", "--format", "csv", "--traces", "2")
    lines = csv.strip().splitlines()
    assert code == 0 and lines[0].startswith("backend,ops,total_io,amortized")
    assert len(lines) == 5 and lines[1].startswith("xpq,500,")
    _, table = run(capsys, "bench", *SMALL, "--count", "500", "--backend", "xpq")
    assert "# N=256 B=4 M=256" in table and "ratio" not in table


def test_bench_paper_params(capsys):
    code, out = run(capsys, "bench", "--n", "4096", "--b", "16", "--m", "1024", "--paper-params",
                    "--count", "300", "--format", "csv", "--backend", "xpq")
    assert code == 0 and out.splitlines()[1].startswith("xpq,300,")


def test_bad_model_is_an_error():
    with pytest.raises(SystemExit, match="error"):
        main(["gen", "--n", "256", "--b", "1", "--m", "256"])


GRAPH = "c triangle\np sp 4 3\n1 2 5\n2 3 1\n1 3 9\n"


@pytest.mark.parametrize("backend", ["xpq", "ktree"])
def test_sssp_triangle(capsys, tmp_path, backend):
    f = tmp_path / "g.txt"
    f.write_text(GRAPH)
    code, out = run(capsys, "sssp", "--b", "4", "--m", "256", str(f), "--source", "1", "--backend", backend)
    lines = out.splitlines()
    assert code == 0
    assert lines[:4] == ["1 0", "2 5", "3 6", "4 inf"]
    assert lines[4].startswith("# io reads=")


def test_sssp_rejects_negative_weight(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text("p sp 3 2\n1 2 4\n2 3 -1\n")
    with pytest.raises(SystemExit, match="line 3"):
        main(["sssp", str(f)])
