"""Ground truth for testing: reference queues and tree invariant checkers.

Everything here reads the tree through uncounted peeks, so running a check
never changes measured I/O. Signals use the same integer encoding as
:mod:`xpq.pq`: a non-negative rank is ``Update``, ``-key`` is ``Delete``.
Priorities inside the tree are compared as ranks (priority, then key).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .pq import INF, ExternalPQ, Node


class RefQueue:
    """Exact priority queue on a key->priority table (ties by ascending key)."""

    def __init__(self):
        self.prio: dict[int, int] = {}
        self._heap: list[tuple[int, int]] = []

    def update(self, k: int, p: int) -> None:
        old = self.prio.get(k)
        if old is None or p < old:
            self.prio[k] = p
            heapq.heappush(self._heap, (p, k))

    def delete(self, k: int) -> None:
        self.prio.pop(k, None)

    def extract_min(self):
        h = self._heap
        while h:
            p, k = heapq.heappop(h)
            if self.prio.get(k) == p:
                del self.prio[k]
                return k, p
        return None

    def apply(self, op):
        c = op[0]
        if c == "U":
            self.update(op[1], op[2])
        elif c == "D":
            self.delete(op[1])
        elif c == "X":
            return self.extract_min()
        else:
            raise ValueError(f"unknown operation {op!r}")
        return None

    def __len__(self):
        return len(self.prio)


class NaiveQueue:
    """List-scan queue, used only to cross-check :class:`RefQueue`."""

    def __init__(self):
        self.items: list[list[int]] = []

    def apply(self, op):
        c = op[0]
        if c == "U":
            for it in self.items:
                if it[0] == op[1]:
                    it[1] = min(it[1], op[2])
                    return None
            self.items.append([op[1], op[2]])
        elif c == "D":
            self.items = [it for it in self.items if it[0] != op[1]]
        elif c == "X":
            if not self.items:
                return None
            best = min(self.items, key=lambda it: (it[1], it[0]))
            self.items.remove(best)
            return best[0], best[1]
        return None


class MarkLog:
    """Marked-node sets ``M_k``, fed by the tree's observer hooks.

    A node enters ``M_k`` when a filter false positive routes ``Update(k, .)``
    into its todo buffer although its list holds no ``k``; it leaves on a
    pushed-down signal for ``k`` or when its todo buffer is applied.
    """

    def __init__(self, tree: ExternalPQ):
        self.tree = tree
        self.marks: dict[int, set[int]] = {}
        self.events = 0
        tree.observer = self

    def update_via_check(self, c: Node, k: int, rank: int) -> None:
        km = self.tree.kmask
        rec = self.tree.peek(c, with_filter=False)
        if not any((r & km) == k for r in rec.entries):
            self.marks.setdefault(k, set()).add(c.nid)
            self.events += 1

    def unmark(self, c: Node, k: int) -> None:
        s = self.marks.get(k)
        if s:
            s.discard(c.nid)

    def todo_applied(self, v: Node) -> None:
        for s in self.marks.values():
            s.discard(v.nid)

    def marked(self, k: int) -> set[int]:
        return self.marks.get(k, set())


# -- Definitions 2 and 3 ------------------------------------------------------
def fold(start, sigs, k: int, km: int):
    """Apply ``k``'s signals in order to a current value (``INF`` when absent)."""
    cur = start
    for s in sigs:
        if s < 0:
            if -s == k:
                cur = INF
        elif (s & km) == k and s < cur:
            cur = s
    return cur


def actual_priority(rec, k: int, km: int):
    """Rank of ``k`` in the node's list after folding its todo buffer."""
    start = INF
    for r in rec.entries:
        if (r & km) == k:
            start = r
            break
    return fold(start, rec.todo, k, km)


def final_priority(tree: ExternalPQ, k: int, v: Node | None = None, records=None):
    """Rank of ``k`` after all its signals from Leaf(k) up to ``v`` (default root)."""
    km = tree.kmask
    get = (lambda n: records[n.nid]) if records is not None else (lambda n: tree.peek(n, with_filter=False))
    cur = INF
    for node in tree.path(k):
        rec = get(node)
        if node.leaf:
            cur = actual_priority(rec, k, km)
        else:
            cur = fold(cur, rec.sig, k, km)
            a = actual_priority(rec, k, km)
            if a < cur:
                cur = a
        if node is v:
            break
    return cur


def _snapshot(tree: ExternalPQ, with_filter=False):
    return {n.nid: tree.peek(n, with_filter=with_filter) for n in tree.nodes}


def _keys_present(records, km) -> set[int]:
    ks = set()
    for rec in records.values():
        ks.update(r & km for r in rec.entries)
        ks.update(-s if s < 0 else s & km for s in rec.sig)
        ks.update(-s if s < 0 else s & km for s in rec.todo)
    return ks


def final_priorities(tree: ExternalPQ) -> dict[int, int]:
    """Every key with a finite ``Final(k, root)``, mapped to its rank."""
    recs = _snapshot(tree)
    out = {}
    for k in _keys_present(recs, tree.kmask):
        f = final_priority(tree, k, records=recs)
        if f != INF:
            out[k] = f
    return out


# -- invariant checks -------------------------------------------------------
@dataclass(frozen=True)
class Violation:
    invariant: str  # "1".."7", or "S" for structural bounds
    node: str
    key: int
    detail: str

    def line(self) -> str:
        return f"INV{self.invariant} node={self.node} key={self.key} {self.detail}"


@dataclass
class Report:
    violations: list[Violation] = field(default_factory=list)
    keys_checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, inv, node, key, detail):
        self.violations.append(Violation(str(inv), node, key, detail))

    def first(self) -> Violation | None:
        return self.violations[0] if self.violations else None

    def text(self) -> str:
        return "\n".join(v.line() for v in self.violations)


def check_invariants(tree: ExternalPQ, marks: MarkLog | None = None, ref: RefQueue | None = None,
                     structure: bool = True, filters: bool = False) -> Report:
    """Evaluate Invariants 1-7 on the whole tree at a quiescent point.

    ``ref`` enables Invariant 3. ``structure`` adds list order, key
    uniqueness and buffer-capacity checks (reported as ``S``); ``filters``
    also verifies that every list key passes its node's filter.
    """
    km = tree.kmask
    rep = Report()
    recs = _snapshot(tree, with_filter=filters)
    path_of, ranges, paths = _geometry(tree)
    nodes = {n.nid: n for n in tree.nodes}
    cap, B = tree.cap, tree.B

    def ksig(s):
        return -s if s < 0 else s & km

    # per node, per key: list rank, signal buffer and todo signals
    lists, sigs, todos = {}, {}, {}
    for nid, rec in recs.items():
        node, where = nodes[nid], path_of[nid]
        li = {}
        for r in rec.entries:
            li[r & km] = r
        lists[nid] = li
        sb: dict[int, list[int]] = {}
        for s in rec.sig:
            sb.setdefault(ksig(s), []).append(s)
        sigs[nid] = sb
        tb: dict[int, list[int]] = {}
        for s in rec.todo:
            tb.setdefault(ksig(s), []).append(s)
        todos[nid] = tb
        if structure:
            if any(a <= b for a, b in zip(rec.entries, rec.entries[1:])):
                rep.add("S", where, 0, "list not strictly descending")
            if len(li) != len(rec.entries):
                rep.add("S", where, 0, "duplicate key in list")
            if len(rec.entries) > 2 * cap:
                rep.add("S", where, 0, f"list holds {len(rec.entries)} > 2tB entries")
            if len(rec.sig) > cap:
                rep.add("S", where, 0, f"signal buffer holds {len(rec.sig)} > tB signals")
            if node.leaf and rec.sig:
                rep.add("S", where, 0, "leaf has a signal buffer")
            if len(rec.todo) > B:
                rep.add("S", where, 0, f"todo buffer holds {len(rec.todo)} > B signals")
            if filters and rec.filter is not None:
                for k in li:
                    if not rec.filter.query(k):
                        rep.add("S", where, k, "list key missing from filter")
            lo, hi = ranges[nid]
            for k in list(li) + list(sb) + list(tb):
                if not lo <= k <= hi:
                    rep.add("1", where, k, "key stored off its leaf-to-root path")

    # Invariant 4, boundary part: Boundary(v) >= Boundary(parent)
    for n in tree.nodes:
        if n.parent is not None and recs[n.nid].boundary < recs[n.parent.nid].boundary:
            rep.add("4", path_of[n.nid], 0,
                    f"boundary {_fmt(recs[n.nid].boundary, tree)} < parent boundary {_fmt(recs[n.parent.nid].boundary, tree)}")

    keys = _keys_present(recs, km)
    if ref is not None:
        keys |= set(ref.prio)
    rep.keys_checked = len(keys)
    bnd = {nid: rec.boundary for nid, rec in recs.items()}
    anc_max = {}
    for n in tree.nodes:  # parents come first
        anc_max[n.nid] = -1 if n.parent is None else max(anc_max[n.parent.nid], bnd[n.parent.nid])
    for k in sorted(keys):
        path = paths[(k - 1) // cap]  # leaf first
        mk = marks.marked(k) if marks is not None else ()
        h = len(path)
        act = [INF] * h
        bufs = [None] * h
        dels = [False] * h
        ups = False
        final = INF
        for i, node in enumerate(path):
            nid = node.nid
            tb = todos[nid].get(k)
            a = lists[nid].get(k, INF)
            if tb:
                a = fold(a, tb, k, km)
                # Invariant 6: todo shape per key
                if not (len(tb) == 1 or (len(tb) == 2 and tb[0] < 0 <= tb[1])):
                    rep.add(6, path_of[nid], k, f"todo signals {_fmt_sigs(tb, tree)}")
            act[i] = a
            sb = sigs[nid].get(k)
            if sb:
                bufs[i] = sb
                final = fold(final, sb, k, km)
                for x in sb:
                    if x < 0:
                        dels[i] = True
                    else:
                        ups = True
                        # Invariant 4: buffered updates respect the node's boundary
                        if x < bnd[nid]:
                            rep.add(4, path_of[nid], k, f"buffered update {_fmt(x, tree)} < boundary {_fmt(bnd[nid], tree)}")
            if a < final:
                final = a
            if nid in mk:
                # Invariant 7: shape of marked nodes
                tb = tb or []
                if len(tb) != 1 or tb[0] < 0 or not tb[0] > bnd[nid]:
                    rep.add(7, path_of[nid], k, f"marked node todo {_fmt_sigs(tb, tree)}, boundary {_fmt(bnd[nid], tree)}")
                if k in lists[nid]:
                    rep.add(7, path_of[nid], k, "marked node still lists the key")
            if a != INF:
                if nid not in mk and a > bnd[nid]:
                    rep.add(5, path_of[nid], k, f"actual {_fmt(a, tree)} > boundary {_fmt(bnd[nid], tree)}")
                if a < anc_max[nid]:
                    rep.add(4, path_of[nid], k, f"actual {_fmt(a, tree)} < ancestor boundary {_fmt(anc_max[nid], tree)}")

        finite = [i for i in range(h) if act[i] != INF]
        if len(finite) > 1 or (finite and ups):
            # prefix counts of Delete-carrying signal buffers along the path
            cum = [0] * (h + 1)
            for i in range(h):
                cum[i + 1] = cum[i] + dels[i]

            def has_delete(lo, hi):
                """A Delete(k) in the signal buffer of a path node with index in (lo, hi]."""
                return cum[hi + 1] - cum[lo + 1] > 0

            # Invariant 1: two finite actuals, the upper one unmarked, need a Delete between
            for x, vi in enumerate(finite):
                for ui in finite[x + 1:]:
                    if path[ui].nid not in mk and not has_delete(vi, ui):
                        rep.add(1, path_of[path[ui].nid], k,
                                f"finite actual also at {path_of[path[vi].nid]} with no Delete between")
            # Invariant 2: an Update below an unmarked finite actual must be cancelled
            if ups:
                for vi in finite:
                    if path[vi].nid in mk:
                        continue
                    for bi in range(vi + 1):
                        buf = bufs[bi]
                        if not buf:
                            continue
                        for pos, x in enumerate(buf):
                            if x >= 0 and not (any(y < 0 for y in buf[pos + 1:]) or has_delete(bi, vi)):
                                rep.add(2, path_of[path[vi].nid], k,
                                        f"update {_fmt(x, tree)} at {path_of[path[bi].nid]} not cancelled by a Delete")

        # Invariant 3: final priority at the root
        if ref is not None:
            want = ref.prio.get(k)
            want = INF if want is None else tree.rank(k, want)
            if final != want:
                rep.add(3, "/", k, f"final {_fmt(final, tree)} != expected {_fmt(want, tree)}")
    return rep


def _geometry(tree):
    """Node paths, covered key ranges and per-leaf root paths, cached on the tree."""
    g = getattr(tree, "_oracle_geometry", None)
    if g is None:
        path_of = {n.nid: tree.node_path(n) for n in tree.nodes}
        ranges = {}
        N, cap = tree.cfg.params.N, tree.cap
        for n in reversed(tree.nodes):
            if n.leaf:
                ranges[n.nid] = (n.index * cap + 1, min(N, (n.index + 1) * cap))
            else:
                ranges[n.nid] = (ranges[n.children[0].nid][0], ranges[n.children[-1].nid][1])
        paths = [tree.path(leaf.index * cap + 1) for leaf in tree.levels[-1]]
        g = tree._oracle_geometry = (path_of, ranges, paths)
    return g


def _fmt(r, tree) -> str:
    if r == INF:
        return "inf"
    k, p = tree.split(r)
    return f"({k},{p})"


def _fmt_sigs(sigs, tree) -> str:
    return "[" + ", ".join(f"D({-s})" if s < 0 else f"U{_fmt(s, tree)}" for s in sigs) + "]"
