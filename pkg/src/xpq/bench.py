"""Differential replay and I/O cost reports."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .emx import ModelParams
from .ktree import TournamentTree
from .oracle import MarkLog, RefQueue, check_invariants
from .pq import ExternalPQ

BACKENDS = ("xpq", "ktree")
PROCEDURES = ("push_signal", "apply_todo", "empty_list", "fill_up")


@dataclass(frozen=True)
class QueueSpec:
    """Everything needed to build a fresh queue: model, fanout, FP rate, seed."""

    params: ModelParams
    t: int | None = 4
    epsilon: float | None = 2**-10
    seed: int = 0

    def build(self, backend: str = "xpq"):
        if backend == "xpq":
            return ExternalPQ(self.params, self.t, self.epsilon, seed=self.seed)
        if backend == "ktree":
            return TournamentTree(self.params, seed=self.seed)
        raise ValueError(f"unknown backend {backend!r}; expected one of {', '.join(BACKENDS)}")


@dataclass
class Verdict:
    ok: bool
    ops: int
    index: int | None = None
    op: tuple | None = None
    got: object = None
    want: object = None
    violations: list = field(default_factory=list)
    marks: int = 0
    queue: object = None

    def text(self) -> str:
        if self.ok:
            return f"pass: {self.ops} ops, {self.marks} FP marks"
        if self.violations:
            head = f"invariant violation after op {self.index} {_fmt_op(self.op)}"
            return "\n".join([head] + [v.line() for v in self.violations])
        return f"divergence at op {self.index} {_fmt_op(self.op)}: queue returned {self.got}, reference returned {self.want}"


def _fmt_op(op) -> str:
    return " ".join(map(str, op)) if op else ""


def run_diff(ops, spec: QueueSpec, backend: str = "xpq", check: bool = False,
             inject_fp: int | None = None, queue=None) -> Verdict:
    """Replay ``ops`` on a queue and on :class:`RefQueue`; stop at the first mismatch.

    ``check`` runs the invariant suite after every operation (xpq only).
    ``inject_fp`` forces every k-th filter query to answer yes.
    """
    q = queue if queue is not None else spec.build(backend)
    marks = None
    if inject_fp:
        q.inject_fp_every = inject_fp
    if check:
        if not isinstance(q, ExternalPQ):
            raise ValueError("invariant checks need the xpq backend")
        marks = MarkLog(q)
    ref = RefQueue()
    n = 0
    for i, op in enumerate(ops):
        got = q.apply(op)
        want = ref.apply(op)
        n += 1
        if got != want:
            return Verdict(False, n, i, op, got, want, marks=marks.events if marks else 0, queue=q)
        if check:
            rep = check_invariants(q, marks, ref)
            if not rep.ok:
                return Verdict(False, n, i, op, violations=rep.violations, marks=marks.events, queue=q)
    return Verdict(True, n, marks=marks.events if marks else 0, queue=q)


def analytic_refs(N: int, B: int) -> tuple[float, float]:
    """Per-operation references ``log2(N/B)/(B log2 log2 N)`` and ``log2(N/B)/B``."""
    lg = math.log2(N / B)
    return lg / (B * math.log2(math.log2(N))), lg / B


@dataclass
class CostRow:
    backend: str
    ops: int
    total: int
    reads: int
    writes: int
    peak_pinned: int
    h: int
    t: int | None
    proc_max: dict = field(default_factory=dict)

    @property
    def amortized(self) -> Fraction:
        return Fraction(self.total, self.ops) if self.ops else Fraction(0)


@dataclass
class CostReport:
    N: int
    B: int
    M: int
    rows: list[CostRow]

    @property
    def refs(self) -> tuple[float, float]:
        return analytic_refs(self.N, self.B)

    def row(self, backend: str) -> CostRow:
        for r in self.rows:
            if r.backend == backend:
                return r
        raise KeyError(backend)

    def ratio(self) -> float | None:
        try:
            new, base = self.row("xpq"), self.row("ktree")
        except KeyError:
            return None
        return float(new.amortized / base.amortized) if base.total else None

    _COLS = ("backend", "ops", "total_io", "amortized", "peak_pinned", "h", "t", "ref_loglog", "ref_log")

    def _cells(self):
        a, b = self.refs
        for r in self.rows:
            yield (r.backend, r.ops, r.total, f"{float(r.amortized):.6f}", r.peak_pinned, r.h,
                   "" if r.t is None else r.t, f"{a:.6f}", f"{b:.6f}")

    def csv(self) -> str:
        lines = [",".join(self._COLS)]
        lines.extend(",".join(map(str, c)) for c in self._cells())
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        rows = [self._COLS] + [tuple(map(str, c)) for c in self._cells()]
        widths = [max(len(r[i]) for r in rows) for i in range(len(self._COLS))]
        out = [f"# N={self.N} B={self.B} M={self.M}"]
        for r in rows:
            out.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
        ratio = self.ratio()
        if ratio is not None:
            out.append(f"# ratio xpq/ktree = {ratio:.4f}")
        return "\n".join(out) + "\n"


def measure(ops, q, backend: str) -> CostRow:
    """Replay ``ops`` on ``q`` and record I/Os beyond construction."""
    st = q.store
    before = st.snapshot_stats()
    n = 0
    for op in ops:
        q.apply(op)
        n += 1
    io = st.snapshot_stats() - before
    return CostRow(backend, n, io.total, io.reads, io.writes, st.peak_pinned, q.height,
                   getattr(q, "t", None), {k: v[2] for k, v in q.proc_stats.items()})


def run_bench(ops, spec: QueueSpec, backends=BACKENDS) -> CostReport:
    ops = list(ops)
    rows = [measure(ops, spec.build(b), b) for b in backends]
    p = spec.params
    return CostReport(p.N, p.B, p.M, rows)
