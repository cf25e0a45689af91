"""External-memory priority queue with DecreaseKey.

A static ``t``-ary tree over the key range ``1..N``. Every node holds a list
of entries, a buffer of signals waiting to be pushed to its children, a todo
buffer of signals waiting to be applied to its own list, a fingerprint filter
summarising its list keys, and a boundary value. The root lives in memory;
every other node lives on a :class:`~xpq.emx.BlockStore` and is only touched
through counted block transfers.

Priorities are compared as ranks ``(priority << keybits) | key``: a total
order in which equal priorities fall back to ascending key. Boundaries are
ranks too, which keeps the tie rule consistent with heap order.

On-disk layout of a non-root node, four independent block regions:

``meta``  ``[list_off, list_len, sig_len, todo_len, boundary]`` then the todo
          buffer as two-word signals
``lst``   entries ``[key, priority]`` sorted by descending rank, starting at
          entry ``list_off``
``sig``   signal buffer, two-word signals in arrival order (internal nodes)
``flt``   serialized :class:`~xpq.filter.Filter`

A signal is ``[key | tag, priority]`` where the tag is bit ``w - 1`` (set for
Update); a Delete stores priority 0. The boundary word is a rank, with
``2**w - 1`` standing for +infinity.
"""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import hash32
from .emx import BlockStore, ModelParams
from .filter import HEADER_WORDS, Filter, FilterParams

INF = float("inf")
HDR = 5
_TODO, _LIST, _VIRTUAL = 0, 1, 2


class KeyError_(ValueError):
    """Key or priority outside the static domain."""


@dataclass(frozen=True)
class TreeConfig:
    params: ModelParams
    t: int
    epsilon: float

    def __post_init__(self):
        if self.t < 2:
            raise ValueError("fanout t must be >= 2")
        p = self.params
        if p.M <= p.B * self.t:
            raise ValueError(f"memory M={p.M} must exceed B*t={p.B * self.t}")
        if p.N <= self.t * p.B:
            raise ValueError(f"N={p.N} must exceed t*B={self.t * p.B} (the tree needs two leaves)")

    @classmethod
    def build(cls, params: ModelParams, t: int | None = None, epsilon: float | None = None) -> "TreeConfig":
        lg = math.log2(params.N)
        if t is None:
            t = max(2, math.floor(lg ** 0.01))
        if epsilon is None:
            epsilon = 1 / lg ** 3
        return cls(params, t, epsilon)

    @property
    def B(self) -> int:
        return self.params.B

    @property
    def cap(self) -> int:
        """Entries per node after EmptyList/FillUp (``tB``)."""
        return self.t * self.params.B

    @property
    def leaves(self) -> int:
        return -(-self.params.N // self.cap)

    @property
    def height(self) -> int:
        h, span = 0, 1
        while span < self.leaves:
            span *= self.t
            h += 1
        return h


def leaf_of(k: int, cfg: TreeConfig) -> int:
    """1-based leaf index holding key ``k``."""
    if not 1 <= k <= cfg.params.N:
        raise KeyError_(f"key {k} outside 1..{cfg.params.N}")
    return (k - 1) // cfg.cap + 1


class Node:
    __slots__ = ("nid", "depth", "index", "parent", "children", "leaf", "span", "meta", "lst", "sig", "flt")

    def __init__(self, nid, depth, index, parent, leaf, span):
        self.nid = nid
        self.depth = depth
        self.index = index
        self.parent = parent
        self.children: list[Node] = []
        self.leaf = leaf
        self.span = span  # leaves covered by each child
        self.meta: list[int] = []
        self.lst: list[int] = []
        self.sig: list[int] = []
        self.flt: list[int] = []

    @property
    def is_root(self):
        return self.parent is None

    def __repr__(self):
        return f"Node(d={self.depth}, i={self.index})"


@dataclass
class NodeRecord:
    """Decoded node contents; signals are ints (rank for Update, ``-key`` for Delete)."""

    node: Node
    entries: list  # ranks, descending
    sig: list
    todo: list
    boundary: float
    filter: Filter | None


class _Meta:
    __slots__ = ("off", "ln", "sl", "tl", "bnd", "todo", "raw", "dh", "dt", "filt", "fdirty", "out", "inbuf", "used")

    def __init__(self):
        self.filt = None
        self.fdirty = False
        self.dh = False
        self.dt = False


class ExternalPQ:
    """The priority queue. ``update`` covers Insert and DecreaseKey.

    Inserting a key that is already present with a smaller priority leaves it
    unchanged: both operations are the same min-update.
    """

    def __init__(self, params: ModelParams, t: int | None = None, epsilon: float | None = None,
                 seed: int = 0, store: BlockStore | None = None):
        self.cfg = cfg = TreeConfig.build(params, t, epsilon)
        self.store = store if store is not None else BlockStore(params)
        self.B = cfg.B
        self.t = cfg.t
        self.cap = cfg.cap
        self.seed = seed & 0xFFFFFFFF
        self.kbits = params.N.bit_length()
        self.kmask = (1 << self.kbits) - 1
        self.w = params.w
        self.tag = 1 << (params.w - 1)
        self.inf_word = (1 << params.w) - 1
        self.max_priority = (1 << (params.w - self.kbits)) - 2
        self.fparams = FilterParams(2 * self.cap, cfg.epsilon)
        self.observer = None
        self.inject_fp_every: int | None = None
        self.fp_requeued = 0  # updates sent back down after a filter false positive
        self.filter_queries = 0
        self._rebuilds = 0
        self.proc_stats: dict[str, list[int]] = {}
        self.store.scope_hook = self._record_scope
        self._build()
        self._root_list: list[int] = []
        self._root_keys: dict[int, int] = {}
        self._root_sig: list[int] = []
        self._root_bnd = INF
        self._root_pin = self.store.pin(2 * (2 * self.cap + 1) + 2 * (self.cap + 1))

    # ------------------------------------------------------------------ build
    def _build(self):
        cfg, st = self.cfg, self.store
        h = cfg.height
        self.height = h
        levels: list[list[Node]] = []
        nid = 0
        for d in range(h + 1):
            per = self.t ** (h - d)
            count = -(-cfg.leaves // per)
            row = []
            for i in range(count):
                parent = levels[d - 1][i // self.t] if d else None
                n = Node(nid, d, i, parent, d == h, per // self.t if d < h else 0)
                nid += 1
                if parent is not None:
                    parent.children.append(n)
                row.append(n)
            levels.append(row)
        self.levels = levels
        self.root = levels[0][0]
        self.nodes = [n for row in levels for n in row]
        hdr_blocks = -(-HDR // self.B)
        for n in self.nodes[1:]:
            n.meta = [st.alloc_block() for _ in range(hdr_blocks)]
            m = _Meta()
            m.off = m.ln = m.sl = m.tl = 0
            m.bnd = INF
            m.todo = {}
            self._write_meta(n, m, force=True)
            self._write_filter(n, Filter(self.fparams.with_seed(hash32(n.nid, self.seed))))
        self.construction_io = st.snapshot_stats()

    def _record_scope(self, label, n):
        s = self.proc_stats.get(label)
        if s is None:
            self.proc_stats[label] = [1, n, n]
        else:
            s[0] += 1
            s[1] += n
            if n > s[2]:
                s[2] = n

    # ---------------------------------------------------------------- helpers
    def rank(self, k: int, p: int) -> int:
        return (p << self.kbits) | k

    def split(self, r) -> tuple[int, int]:
        return r & self.kmask, r >> self.kbits

    def _child_toward(self, v: Node, k: int) -> Node:
        leaf = (k - 1) // self.cap
        return v.children[leaf // v.span - v.index * self.t]

    def path(self, k: int) -> list[Node]:
        """Nodes from Leaf(k) up to the root."""
        v = self.levels[-1][(k - 1) // self.cap]
        out = []
        while v is not None:
            out.append(v)
            v = v.parent
        return out

    def _check_key(self, k: int):
        if not 1 <= k <= self.cfg.params.N:
            raise KeyError_(f"key {k} outside 1..{self.cfg.params.N}")

    def _bword(self, b) -> int:
        return self.inf_word if b == INF else b

    def _bval(self, w: int):
        return INF if w == self.inf_word else w

    # region I/O --------------------------------------------------------------
    def _read(self, blocks, lo, hi):
        """Words ``[lo, hi)`` of a region; reads exactly the covering blocks."""
        B = self.B
        b0, b1 = lo // B, -(-hi // B)
        arr = self.store.read_blocks(blocks[b0:b1])
        return arr[lo - b0 * B: hi - b0 * B]

    def _write(self, blocks, lo, words):
        """Write ``words`` starting at block-aligned offset ``lo``."""
        B = self.B
        b0 = lo // B
        nb = -(-len(words) // B)
        while len(blocks) < b0 + nb:
            blocks.append(self.store.alloc_block())
        self.store.write_blocks(blocks[b0:b0 + nb], words)

    def _append(self, blocks, end, words):
        """Append ``words`` at word offset ``end``, re-reading a partial tail block."""
        B = self.B
        part = end % B
        if part:
            head = self.store.read_blocks(blocks[end // B: end // B + 1])[:part]
            words = np.concatenate([head, words])
        self._write(blocks, end - part, words)

    def _enc_sigs(self, sigs) -> np.ndarray:
        out = np.empty(2 * len(sigs), dtype=np.uint64)
        km, kb, tag = self.kmask, self.kbits, self.tag
        ks, ps = [], []
        for s in sigs:
            if s < 0:
                ks.append(-s)
                ps.append(0)
            else:
                ks.append((s & km) | tag)
                ps.append(s >> kb)
        out[0::2] = ks
        out[1::2] = ps
        return out

    def _dec_sigs(self, arr) -> list[int]:
        kb, tag = self.kbits, self.tag
        ks = arr[0::2].tolist()
        ps = arr[1::2].tolist()
        return [((p << kb) | (k ^ tag)) if k & tag else -k for k, p in zip(ks, ps)]

    def _enc_entries(self, ranks_desc) -> np.ndarray:
        r = np.asarray(ranks_desc, dtype=np.uint64)
        out = np.empty(2 * len(r), dtype=np.uint64)
        out[0::2] = r & np.uint64(self.kmask)
        out[1::2] = r >> np.uint64(self.kbits)
        return out

    def _dec_entries(self, arr) -> list[int]:
        """Decode descending on-disk entries into ascending ranks."""
        r = (arr[1::2] << np.uint64(self.kbits)) | arr[0::2]
        return r[::-1].tolist()

    # meta ----------------------------------------------------------------------
    def _load_meta(self, v: Node, todo: bool = True) -> _Meta:
        B = self.B
        hb = -(-HDR // B)
        raw = self.store.read_blocks(v.meta[:hb])
        m = _Meta()
        m.off, m.ln, m.sl, m.tl, bw = raw[:HDR].tolist()
        m.bnd = self._bval(bw)
        m.todo = None
        if todo:
            end = HDR + 2 * m.tl
            if end > hb * B:
                raw = np.concatenate([raw, self.store.read_blocks(v.meta[hb: -(-end // B)])])
            m.todo = self._todo_from(self._dec_sigs(raw[HDR:end]))
        m.raw = raw
        return m

    def _todo_from(self, sigs) -> dict:
        """Todo buffer as ``key -> (has_delete, update_rank or None)``."""
        todo = {}
        km = self.kmask
        for s in sigs:
            if s < 0:
                todo[-s] = (True, None)
            else:
                k = s & km
                e = todo.get(k)
                todo[k] = (e[0] if e else False, s)
        return todo

    def _write_meta(self, v: Node, m: _Meta, force: bool = False):
        head = np.array([m.off, m.ln, m.sl, m.tl, self._bword(m.bnd)], dtype=np.uint64)
        if m.dt or force:
            words = np.concatenate([head, self._enc_sigs(self._todo_sigs(m.todo))])
            self._write(v.meta, 0, words)
        elif m.dh:
            hb = -(-HDR // self.B)
            raw = m.raw[: hb * self.B].copy()
            raw[:HDR] = head
            self._write(v.meta, 0, raw)
        m.dh = m.dt = False

    @staticmethod
    def _todo_sigs(todo) -> list[int]:
        out = []
        for k, (d, u) in todo.items():
            if d:
                out.append(-k)
            if u is not None:
                out.append(u)
        return out

    # filter --------------------------------------------------------------------
    def _load_filter(self, v: Node) -> Filter:
        base = HEADER_WORDS + self.fparams.packed_words
        words = self._read(v.flt, 0, base)
        nspill = int(words[4])
        if nspill:
            words = np.concatenate([words, self._read(v.flt, base, base + nspill)])
        return Filter.from_words(words, self.cfg.epsilon)

    def _write_filter(self, v: Node, f: Filter):
        self._write(v.flt, 0, f.to_words())

    def _fresh_filter(self, v: Node, keys) -> Filter:
        self._rebuilds += 1
        seed = hash32(self._rebuilds & 0xFFFFFFFF, self.seed ^ v.nid)
        return Filter.rebuild(self.fparams.with_seed(seed), keys)

    # list ------------------------------------------------------------------------
    def _read_list(self, v: Node, m: _Meta, lo: int, hi: int) -> list[int]:
        """Entries at list positions ``[lo, hi)``, returned ascending."""
        if hi <= lo:
            return []
        return self._dec_entries(self._read(v.lst, 2 * (m.off + lo), 2 * (m.off + hi)))

    def _rewrite_list(self, v: Node, m: _Meta, ranks_asc):
        m.off = 0
        m.ln = len(ranks_asc)
        m.dh = True
        if ranks_asc:
            self._write(v.lst, 0, self._enc_entries(ranks_asc[::-1]))

    def _append_sigs(self, v: Node, m: _Meta, sigs):
        self._append(v.sig, 2 * m.sl, self._enc_sigs(sigs))
        m.sl += len(sigs)
        m.dh = True

    # todo edits --------------------------------------------------------------------
    @staticmethod
    def _set_delete(m: _Meta, k: int):
        e = m.todo.get(k)
        m.tl += 1 - (e[0] + (e[1] is not None) if e else 0)
        m.todo[k] = (True, None)
        m.dt = True

    @staticmethod
    def _merge_update(m: _Meta, k: int, r: int):
        e = m.todo.get(k)
        if e is None:
            m.todo[k] = (False, r)
            m.tl += 1
        elif e[1] is None:
            m.todo[k] = (e[0], r)
            m.tl += 1
        elif r < e[1]:
            m.todo[k] = (e[0], r)
        else:
            return
        m.dt = True

    def _check_in_actual(self, c: Node, m: _Meta, k: int) -> bool:
        """Could ``k`` have a finite actual priority at ``c``? One-sided."""
        e = m.todo.get(k)
        if e is not None:
            # a lone Delete in the todo buffer pins the actual value to +inf
            return e[1] is not None
        if m.filt is None:
            m.filt = self._load_filter(c)
        self.filter_queries += 1
        if self.inject_fp_every and self.filter_queries % self.inject_fp_every == 0:
            return True
        return m.filt.query(k)

    # ---------------------------------------------------------------- procedures
    def _push_signal(self, v: Node):
        st = self.store
        st.begin_scope("push_signal")
        tok = st.pin(0)
        held = 0
        vm = None
        if v.parent is None:
            sigs, self._root_sig = self._root_sig, []
        else:
            vm = self._load_meta(v, todo=False)
            held = len(vm.raw) + 4 * vm.sl
            st.repin(tok, held)
            sigs = self._dec_sigs(self._read(v.sig, 0, 2 * vm.sl)) if vm.sl else []
            vm.sl = 0
            vm.dh = True
        obs = self.observer
        km, bnd_cache = self.kmask, {}
        kids: dict[Node, _Meta] = {}
        for s in sigs:
            k = -s if s < 0 else s & km
            c = self._child_toward(v, k)
            cm = kids.get(c)
            if cm is None:
                cm = self._load_meta(c)
                cm.out = []
                kids[c] = cm
                held += len(cm.raw) + 2 * self.B
                st.repin(tok, held)
            if c.leaf:
                if s < 0:
                    self._set_delete(cm, k)
                else:
                    self._merge_update(cm, k, s)
                continue
            if s < 0:
                had_filter = cm.filt is not None
                if self._check_in_actual(c, cm, k):
                    self._set_delete(cm, k)
                if not had_filter and cm.filt is not None:
                    held += cm.filt.size_words()
                    st.repin(tok, held)
                cm.out.append(s)
                if obs is not None:
                    obs.unmark(c, k)
            elif s <= cm.bnd:
                self._merge_update(cm, k, s)
                cm.out.append(-k)
                if obs is not None:
                    obs.unmark(c, k)
            else:
                e = cm.todo.get(k)
                had_update = e is not None and e[1] is not None
                had_filter = cm.filt is not None
                hit = self._check_in_actual(c, cm, k)
                if not had_filter and cm.filt is not None:
                    held += cm.filt.size_words()
                    st.repin(tok, held)
                if hit:
                    if obs is not None and not had_update:
                        obs.update_via_check(c, k, s)
                    self._merge_update(cm, k, s)
                else:
                    cm.out.append(s)
        for c, cm in kids.items():
            if cm.out:
                self._append_sigs(c, cm, cm.out)
            self._write_meta(c, cm)
        if vm is not None:
            self._write_meta(v, vm)
        st.unpin(tok)
        st.end_scope()
        cap, B = self.cap, self.B
        for c, cm in kids.items():
            if cm.tl > B:
                self._apply_todo(c)
            elif cm.sl > cap:
                self._push_signal(c)

    def _apply_todo(self, v: Node, settle: bool = True):
        if v.parent is None:
            if self._root_list:
                self._root_bnd = self._root_list[-1]
            return
        st = self.store
        st.begin_scope("apply_todo")
        m = self._load_meta(v)
        if m.tl == 0:
            st.end_scope()
            return
        tok = st.pin(len(m.raw) + 4 * m.ln + 2 * m.tl + self.fparams.packed_words + HEADER_WORDS)
        keys = {r & self.kmask: r for r in self._read_list(v, m, 0, m.ln)}
        back = []
        for k, (d, u) in m.todo.items():
            if d:
                keys.pop(k, None)
            if u is not None:
                old = keys.get(k)
                if old is not None:
                    if u < old:
                        keys[k] = u
                elif v.leaf or u <= m.bnd:
                    keys[k] = u
                else:
                    back.append(u)  # filter false positive: send it on down
        new = sorted(keys.values())
        m.todo = {}
        m.tl = 0
        m.dt = True
        if v.leaf:
            m.bnd = INF
        elif new:
            m.bnd = new[-1]
        self._rewrite_list(v, m, new)
        self._write_filter(v, self._fresh_filter(v, keys))
        if back:
            self.fp_requeued += len(back)
            self._append_sigs(v, m, back)
        self._write_meta(v, m)
        if self.observer is not None:
            self.observer.todo_applied(v)
        st.unpin(tok)
        st.end_scope()
        if settle:
            if m.sl > self.cap:
                self._push_signal(v)
            if len(new) > 2 * self.cap:
                self._empty_list(v)
            elif not new and not v.leaf:
                self._fill_up(v)

    def _empty_list(self, v: Node):
        self._apply_todo(v, settle=False)
        if v.parent is not None or self._root_sig:
            self._push_signal(v)
        st = self.store
        st.begin_scope("empty_list")
        cap, km = self.cap, self.kmask
        tok = st.pin(0)
        vm = None
        if v.parent is None:
            if len(self._root_list) <= cap:
                st.unpin(tok)
                st.end_scope()
                return
            moved = self._root_list[cap:]
            del self._root_list[cap:]
            for r in moved:
                del self._root_keys[r & km]
            self._root_bnd = self._root_list[-1]
            held = 0
        else:
            vm = self._load_meta(v, todo=False)
            excess = vm.ln - cap
            if excess <= 0:
                st.unpin(tok)
                st.end_scope()
                if vm.ln == 0 and not v.leaf:
                    self._fill_up(v)
                return
            held = len(vm.raw) + 2 * (excess + 1)
            st.repin(tok, held)
            got = self._read_list(v, vm, 0, excess + 1)  # ascending; got[0] is the new maximum
            vm.bnd = got[0]
            moved = got[1:]
            vm.off += excess
            vm.ln -= excess
            vm.dh = True
            vf = self._load_filter(v)
            held += vf.size_words()
            st.repin(tok, held)
            for r in moved:
                vf.delete(r & km)
            self._write_filter(v, vf)
            self._write_meta(v, vm)
        groups: dict[Node, list[int]] = {}
        for r in reversed(moved):  # descending
            groups.setdefault(self._child_toward(v, r & km), []).append(r)
        over = []
        for c, rs in groups.items():
            cm = self._load_meta(c)
            cf = self._load_filter(c)
            held += len(cm.raw) + cf.size_words() + 2 * len(rs)
            st.repin(tok, held)
            app = []
            for r in rs:
                k = r & km
                e = cm.todo.get(k)
                if e is not None:
                    # only a lone Delete can be waiting here; it becomes the Update
                    cm.todo[k] = (False, r)
                    cm.dt = True
                else:
                    app.append(r)
                    cf.insert(k)
            if app:
                self._append(c.lst, 2 * (cm.off + cm.ln), self._enc_entries(app))
                cm.ln += len(app)
                cm.dh = True
                self._write_filter(c, cf)
            self._write_meta(c, cm)
            held -= len(cm.raw) + cf.size_words()
            st.repin(tok, held)
            if cm.ln > 2 * cap:
                over.append(c)
        st.unpin(tok)
        st.end_scope()
        for c in over:
            self._empty_list(c)

    def _fill_up(self, v: Node) -> bool:
        """Refill ``v`` to ``tB`` entries from its children; False if the subtree is empty."""
        if v.leaf:
            return True
        self._apply_todo(v, settle=False)
        if v.parent is not None or self._root_sig:
            self._push_signal(v)
        st = self.store
        st.begin_scope("fill_up")
        exhausted: set[Node] = set()
        while True:
            c = self._fill_round(v, exhausted)
            if c is None:
                break
            if not self._fill_up(c):
                exhausted.add(c)
        st.end_scope()
        n = self._fill_len
        if n > 2 * self.cap:
            self._empty_list(v)
        return n > 0

    def _fill_round(self, v: Node, exhausted: set) -> Node | None:
        """One selection pass of FillUp.

        Returns a child whose subtree must be refilled before the selection can
        go on, after writing every piece of state back to disk; returns None
        when ``v`` is full or nothing is left below it.
        """
        st = self.store
        km, B, cap = self.kmask, self.B, self.cap
        tok = st.pin(0)
        root = v.parent is None
        if root:
            ranks = self._root_list
            vm = None
            held = 0
        else:
            vm = self._load_meta(v, todo=False)
            ranks = self._read_list(v, vm, 0, vm.ln)
            held = len(vm.raw) + 2 * cap + HEADER_WORDS + self.fparams.packed_words
            st.repin(tok, held)
        need = cap - len(ranks)
        heap = []
        kids: list[tuple[Node, _Meta]] = []
        state: dict[Node, _Meta] = {}

        def load_batch(c, cm):
            rem = cm.ln - cm.used
            lo = max(0, rem - B)
            batch = self._read_list(c, cm, lo, rem)
            cm.inbuf = len(batch)
            return batch

        byid = {}
        if need > 0:
            for c in v.children:
                cm = self._load_meta(c)
                cm.used = 0
                cm.inbuf = 0
                held += len(cm.raw) + 2 * B
                st.repin(tok, held)
                state[c] = cm
                byid[c.nid] = c
                kids.append((c, cm))
                for k, (d, u) in cm.todo.items():
                    if u is not None and (c.leaf or u <= cm.bnd):
                        heap.append((u, _TODO, c.nid))
                if cm.ln:
                    heap.extend((r, _LIST, c.nid) for r in load_batch(c, cm))
                elif not c.leaf and c not in exhausted and cm.bnd != INF:
                    # an infinite boundary proves the subtree below c empty
                    heap.append((cm.bnd, _VIRTUAL, c.nid))
            heapq.heapify(heap)
        picked = []
        recurse = None
        while need > 0 and heap:
            r, kind, cid = heapq.heappop(heap)
            c = byid[cid]
            cm = state[c]
            if kind == _VIRTUAL:
                recurse = c
                break
            k = r & km
            if kind == _TODO:
                e = cm.todo.get(k)
                if e is None or e[1] != r:
                    continue  # superseded by a list entry moved up earlier
                cm.tl -= e[0]
                cm.todo[k] = (True, None)
                cm.dt = True
                picked.append(r)
                need -= 1
                continue
            cm.used += 1
            cm.inbuf -= 1
            if cm.filt is None:
                cm.filt = self._load_filter(c)
                held += cm.filt.size_words()
                st.repin(tok, held)
            cm.filt.delete(k)
            cm.fdirty = True
            cm.dh = True
            e = cm.todo.get(k)
            if e is None or not e[0]:
                if e is not None:
                    del cm.todo[k]
                    cm.tl -= 1
                    cm.dt = True
                picked.append(r)
                need -= 1
            if cm.inbuf == 0 and need > 0:
                if cm.ln > cm.used:
                    for item in load_batch(c, cm):
                        heapq.heappush(heap, (item, _LIST, cid))
                elif not c.leaf and c not in exhausted and cm.bnd != INF:
                    heapq.heappush(heap, (cm.bnd, _VIRTUAL, cid))
        for c, cm in kids:
            if cm.used:
                cm.ln -= cm.used
            if cm.fdirty:
                self._write_filter(c, cm.filt)
            self._write_meta(c, cm)
        new = ranks + picked
        self._fill_len = len(new)
        if root:
            self._root_list = new
            for r in picked:
                self._root_keys[r & km] = r
            if new:
                self._root_bnd = new[-1]
            elif recurse is None:
                self._root_bnd = INF
        else:
            if picked:
                self._rewrite_list(v, vm, new)
                self._write_filter(v, self._fresh_filter(v, (r & km for r in new)))
            if new:
                vm.bnd = new[-1]
            elif recurse is None:
                vm.bnd = INF  # nothing left below: an empty subtree holds nothing
            vm.dh = True
            self._write_meta(v, vm)
        st.unpin(tok)
        return recurse

    # ------------------------------------------------------------ public API
    def update(self, k: int, p: int) -> None:
        """Insert ``k`` with priority ``p`` or lower its priority to ``p``."""
        self._check_key(k)
        if not 0 <= p <= self.max_priority:
            raise KeyError_(f"priority {p} outside 0..{self.max_priority}")
        r = (p << self.kbits) | k
        old = self._root_keys.get(k)
        if old is not None:
            if r < old:
                lst = self._root_list
                del lst[bisect.bisect_left(lst, old)]
                bisect.insort(lst, r)
                self._root_keys[k] = r
            return
        if r > self._root_bnd:
            self._root_sig.append(r)
            if len(self._root_sig) > self.cap:
                self._push_signal(self.root)
            return
        bisect.insort(self._root_list, r)
        self._root_keys[k] = r
        self._root_sig.append(-k)
        if len(self._root_sig) > self.cap:
            self._push_signal(self.root)
        if len(self._root_list) > 2 * self.cap:
            self._empty_list(self.root)

    insert = update
    decrease_key = update

    def delete(self, k: int) -> None:
        self._check_key(k)
        old = self._root_keys.pop(k, None)
        if old is not None:
            lst = self._root_list
            del lst[bisect.bisect_left(lst, old)]
            if not lst:
                self._fill_up(self.root)
            return
        self._root_sig.append(-k)
        if len(self._root_sig) > self.cap:
            self._push_signal(self.root)

    def extract_min(self) -> tuple[int, int] | None:
        """Remove and return ``(key, priority)`` of the minimum, or None if empty."""
        if not self._root_list:
            return None
        r = self._root_list[0]
        k = r & self.kmask
        self.delete(k)
        return k, r >> self.kbits

    def find_min(self) -> tuple[int, int] | None:
        if not self._root_list:
            return None
        r = self._root_list[0]
        return r & self.kmask, r >> self.kbits

    def apply(self, op) -> tuple[int, int] | None:
        """Run one trace operation: ``("U", k, p)``, ``("D", k)`` or ``("X",)``."""
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

    # ------------------------------------------------------------ inspection
    def io_stats(self):
        return self.store.snapshot_stats()

    def peek(self, v: Node, with_filter: bool = True) -> NodeRecord:
        """Uncounted decode of one node for checkers and debugging."""
        if v.parent is None:
            return NodeRecord(v, self._root_list[::-1], list(self._root_sig), [], self._root_bnd, None)
        st, B = self.store, self.B

        def words(blocks, lo, hi):
            if hi <= lo:
                return np.zeros(0, dtype=np.uint64)
            b0 = lo // B
            arr = st.peek_blocks(blocks[b0: -(-hi // B)])
            return arr[lo - b0 * B: hi - b0 * B]

        off, ln, sl, tl, bw = words(v.meta, 0, HDR).tolist()
        todo = self._dec_sigs(words(v.meta, HDR, HDR + 2 * tl))
        entries = self._dec_entries(words(v.lst, 2 * off, 2 * (off + ln)))[::-1]
        sig = self._dec_sigs(words(v.sig, 0, 2 * sl))
        filt = None
        if with_filter:
            base = HEADER_WORDS + self.fparams.packed_words
            fw = words(v.flt, 0, base)
            fw = np.concatenate([fw, words(v.flt, base, base + int(fw[4]))])
            filt = Filter.from_words(fw, self.cfg.epsilon)
        return NodeRecord(v, entries, sig, todo, self._bval(bw), filt)

    def node_path(self, v: Node) -> str:
        """``/`` for the root, else child positions from the root, e.g. ``/0/3``."""
        parts = []
        while v.parent is not None:
            parts.append(str(v.index - v.parent.index * self.t))
            v = v.parent
        return "/" + "/".join(reversed(parts))

    def size_words(self, v: Node) -> int:
        """Serialized words held by node ``v`` (live contents, not allocated blocks)."""
        if v.parent is None:
            return 2 * (len(self._root_list) + len(self._root_sig)) + 1
        rec = self.peek(v)
        return HDR + 2 * (len(rec.todo) + len(rec.entries) + len(rec.sig)) + rec.filter.size_words()

    def items(self) -> dict[int, int]:
        """Exact contents ``{key: priority}`` recovered by replaying all buffers (uncounted)."""
        from .oracle import final_priorities

        return {k: r >> self.kbits for k, r in final_priorities(self).items()}
