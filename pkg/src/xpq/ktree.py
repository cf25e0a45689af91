"""Baseline: the binary external-memory tournament tree.

Each node keeps up to ``C`` entries with heap-ordered boundaries and each
internal node a signal buffer of ``C`` signals. Pushing a buffer down loads
both children's full lists, so a push costs ``O(C/B)`` transfers for ``C``
signals and an operation pays about ``1/B`` per level of a ``log2(N/C)``-deep
tree.

``C`` defaults to ``(M - 4B) // 16`` entries: the pinned root takes ``4C``
words and a push holds the parent buffer, two child lists and the outgoing
signals; buffers and lists may sit one batch over capacity until their own
overflow is handled, so a push can need about ``12C`` more. Ranks, the in-memory
root and the ``update``/``delete``/``extract_min`` API match
:class:`xpq.pq.ExternalPQ`.

Node layout: ``meta`` = ``[list_len, sig_len, boundary]``; ``lst`` = entries
``[key, priority]`` ascending by rank; ``sig`` = two-word signals as in
:mod:`xpq.pq`.
"""

from __future__ import annotations

import bisect

import numpy as np

from .emx import BlockStore, ModelParams

INF = float("inf")


class _Node:
    __slots__ = ("nid", "depth", "index", "parent", "children", "leaf", "lo", "hi", "meta", "lst", "sig")

    def __init__(self, nid, depth, index, parent, leaf, lo, hi):
        self.nid, self.depth, self.index, self.parent = nid, depth, index, parent
        self.children: list[_Node] = []
        self.leaf = leaf
        self.lo, self.hi = lo, hi
        self.meta: list[int] = []
        self.lst: list[int] = []
        self.sig: list[int] = []


class _State:
    __slots__ = ("ranks", "keys", "sl", "bnd", "out", "dirty", "ln")


class TournamentTree:
    """Binary tournament-tree priority queue on a :class:`BlockStore`."""

    def __init__(self, params: ModelParams, capacity: int | None = None, seed: int = 0,
                 store: BlockStore | None = None):
        self.params = params
        self.store = store if store is not None else BlockStore(params)
        self.B = params.B
        self.C = capacity if capacity is not None else max(2, (params.M - 4 * params.B) // 16)
        self.kbits = params.N.bit_length()
        self.kmask = (1 << self.kbits) - 1
        self.tag = 1 << (params.w - 1)
        self.inf_word = (1 << params.w) - 1
        self.max_priority = (1 << (params.w - self.kbits)) - 2
        self.proc_stats: dict[str, list[int]] = {}
        self.store.scope_hook = self._record_scope
        self._build()
        self._root_list: list[int] = []
        self._root_keys: dict[int, int] = {}
        self._root_sig: list[int] = []
        self._root_bnd = INF
        self._root_pin = self.store.pin(4 * (self.C + 1))

    def _build(self):
        N, C = self.params.N, self.C
        leaves = -(-N // C)
        h = max(1, (leaves - 1).bit_length())
        self.height = h
        nid = 0
        self.root = _Node(nid, 0, 0, None, False, 1, N)
        self.nodes = [self.root]
        frontier = [self.root]
        for d in range(1, h + 1):
            span = C << (h - d)
            nxt = []
            for p in frontier:
                for j in range(2):
                    i = p.index * 2 + j
                    lo = i * span + 1
                    if lo > N:
                        continue
                    nid += 1
                    n = _Node(nid, d, i, p, d == h, lo, min(N, lo + span - 1))
                    p.children.append(n)
                    nxt.append(n)
                    self.nodes.append(n)
            frontier = nxt
        for n in self.nodes[1:]:
            n.meta = [self.store.alloc_block()]
            self.store.write_block(n.meta[0], self._meta_words(0, 0, INF))
        self.construction_io = self.store.snapshot_stats()

    def _record_scope(self, label, n):
        s = self.proc_stats.setdefault(label, [0, 0, 0])
        s[0] += 1
        s[1] += n
        s[2] = max(s[2], n)

    # -- encoding ----------------------------------------------------------
    def _meta_words(self, ln, sl, bnd):
        w = np.zeros(self.B, dtype=np.uint64)
        w[:3] = [ln, sl, self.inf_word if bnd == INF else bnd]
        return w

    def _enc_entries(self, ranks) -> np.ndarray:
        r = np.asarray(ranks, dtype=np.uint64)
        out = np.empty(2 * len(r), dtype=np.uint64)
        out[0::2] = r & np.uint64(self.kmask)
        out[1::2] = r >> np.uint64(self.kbits)
        return out

    def _dec_entries(self, arr) -> list[int]:
        return ((arr[1::2] << np.uint64(self.kbits)) | arr[0::2]).tolist()

    def _enc_sigs(self, sigs) -> np.ndarray:
        out = np.empty(2 * len(sigs), dtype=np.uint64)
        out[0::2] = [-s if s < 0 else (s & self.kmask) | self.tag for s in sigs]
        out[1::2] = [0 if s < 0 else s >> self.kbits for s in sigs]
        return out

    def _dec_sigs(self, arr) -> list[int]:
        kb, tag = self.kbits, self.tag
        return [((p << kb) | (k ^ tag)) if k & tag else -k for k, p in zip(arr[0::2].tolist(), arr[1::2].tolist())]

    # -- region I/O --------------------------------------------------------
    def _read(self, blocks, nwords):
        nb = -(-nwords // self.B)
        return self.store.read_blocks(blocks[:nb])[:nwords]

    def _write(self, blocks, lo, words):
        B = self.B
        b0 = lo // B
        nb = -(-len(words) // B)
        while len(blocks) < b0 + nb:
            blocks.append(self.store.alloc_block())
        self.store.write_blocks(blocks[b0:b0 + nb], words)

    def _append(self, blocks, end, words):
        part = end % self.B
        if part:
            head = self.store.read_blocks(blocks[end // self.B: end // self.B + 1])[:part]
            words = np.concatenate([head, words])
        self._write(blocks, end - part, words)

    def _load(self, v: _Node, with_list: bool = True) -> _State:
        s = _State()
        ln, s.sl, bw = self.store.read_blocks(v.meta)[:3].tolist()
        s.bnd = INF if bw == self.inf_word else bw
        s.ranks = self._dec_entries(self._read(v.lst, 2 * ln)) if ln and with_list else []
        s.ln = ln
        s.keys = {r & self.kmask: r for r in s.ranks}
        s.out = []
        s.dirty = False
        return s

    def _store(self, v: _Node, s: _State):
        if s.dirty and s.ranks:
            self._write(v.lst, 0, self._enc_entries(s.ranks))
        if s.out:
            self._flush_out(v, s)
        self.store.write_block(v.meta[0], self._meta_words(len(s.ranks), s.sl, s.bnd))

    def _flush_out(self, v: _Node, s: _State):
        self._append(v.sig, 2 * s.sl, self._enc_sigs(s.out))
        s.sl += len(s.out)
        s.out = []

    def _child(self, v: _Node, k: int) -> _Node:
        for c in v.children:
            if c.lo <= k <= c.hi:
                return c
        raise AssertionError("key outside node range")

    # -- procedures --------------------------------------------------------
    def _push_signal(self, v: _Node):
        st = self.store
        st.begin_scope("push_signal")
        tok = st.pin(0)
        if v.parent is None:
            sigs, self._root_sig = self._root_sig, []
            vs = None
        else:
            vs = self._load(v, with_list=False)
            st.repin(tok, 2 * vs.sl + self.B)
            sigs = self._dec_sigs(self._read(v.sig, 2 * vs.sl)) if vs.sl else []
            vs.sl = 0
        kids = {}
        held = 2 * len(sigs) + self.B
        for c in v.children:
            kids[c] = cs = self._load(c)
            held += 2 * len(cs.ranks) + self.B
        st.repin(tok, held + 2 * len(kids) * (self.B + 1))
        km = self.kmask
        for s in sigs:
            k = -s if s < 0 else s & km
            c = self._child(v, k)
            cs = kids[c]
            old = cs.keys.get(k)
            if s < 0:
                if old is not None:
                    del cs.keys[k]
                    del cs.ranks[bisect.bisect_left(cs.ranks, old)]
                    cs.dirty = True
                if not c.leaf:
                    cs.out.append(s)
            elif old is not None:
                if s < old:
                    del cs.ranks[bisect.bisect_left(cs.ranks, old)]
                    bisect.insort(cs.ranks, s)
                    cs.keys[k] = s
                    cs.dirty = True
            elif c.leaf or s <= cs.bnd:
                bisect.insort(cs.ranks, s)
                cs.keys[k] = s
                cs.dirty = True
                if not c.leaf:
                    cs.out.append(-k)
            else:
                cs.out.append(s)
            if len(cs.out) >= self.B:
                self._flush_out(c, cs)
        for c, cs in kids.items():
            self._store(c, cs)
        if vs is not None:
            st.write_block(v.meta[0], self._meta_words(vs.ln, 0, vs.bnd))
        st.unpin(tok)
        st.end_scope()
        for c, cs in kids.items():
            if len(cs.ranks) > self.C:
                self._empty_list(c)
            elif not cs.ranks and not c.leaf:
                self._fill_up(c)
            if not c.leaf and cs.sl > self.C:
                self._push_signal(c)

    def _empty_list(self, v: _Node):
        if v.leaf:
            return
        self._push_signal(v)
        st = self.store
        st.begin_scope("empty_list")
        keep = self.C // 2
        km = self.kmask
        if v.parent is None:
            lst = self._root_list
            moved = lst[keep:]
            del lst[keep:]
            for r in moved:
                del self._root_keys[r & km]
            self._root_bnd = lst[-1] if lst else INF
            tok = st.pin(0)
        else:
            vs = self._load(v)
            tok = st.pin(2 * len(vs.ranks) + self.B)
            moved = vs.ranks[keep:]
            vs.ranks = vs.ranks[:keep]
            vs.bnd = vs.ranks[-1]
            vs.dirty = True
            self._store(v, vs)
        over = []
        for c in v.children:
            mine = [r for r in moved if c.lo <= (r & km) <= c.hi]
            if not mine:
                continue
            cs = self._load(c)
            st.repin(tok, 2 * (len(moved) + len(cs.ranks)) + 2 * self.B)
            cs.ranks = sorted(cs.ranks + mine)
            cs.dirty = True
            self._store(c, cs)
            if len(cs.ranks) > self.C:
                over.append(c)
        st.unpin(tok)
        st.end_scope()
        for c in over:
            self._empty_list(c)

    def _fill_up(self, v: _Node) -> bool:
        if v.leaf:
            return True
        if v.parent is not None or self._root_sig:
            self._push_signal(v)
        st = self.store
        st.begin_scope("fill_up")
        exhausted = set()
        while True:
            rec = self._fill_round(v, exhausted)
            if rec is None:
                break
            if not self._fill_up(rec):
                exhausted.add(rec)
        st.end_scope()
        return self._fill_len > 0

    def _fill_round(self, v: _Node, exhausted) -> _Node | None:
        st = self.store
        km = self.kmask
        root = v.parent is None
        if root:
            mine = self._root_list
            vs = None
            tok = st.pin(0)
        else:
            vs = self._load(v)
            mine = vs.ranks
            tok = st.pin(2 * self.C + self.B)
        need = self.C // 2 - len(mine)
        recurse = None
        picked = []
        if need > 0:
            kids = [(c, self._load(c)) for c in v.children]
            st.repin(tok, 2 * self.C + sum(2 * len(cs.ranks) + self.B for _, cs in kids))
            pos = {c: 0 for c, _ in kids}
            while need > 0:
                best = None
                for c, cs in kids:
                    i = pos[c]
                    if i < len(cs.ranks):
                        cand = cs.ranks[i]
                    elif not c.leaf and c not in exhausted and cs.bnd != INF:
                        cand = cs.bnd  # subtree below holds only ranks >= its boundary
                    else:
                        continue
                    if best is None or cand < best[0]:
                        best = (cand, c, cs, i < len(cs.ranks))
                if best is None:
                    break
                cand, c, cs, real = best
                if not real:
                    recurse = c
                    break
                pos[c] += 1
                picked.append(cand)
                need -= 1
            for c, cs in kids:
                if pos[c]:
                    for r in cs.ranks[: pos[c]]:
                        del cs.keys[r & km]
                    cs.ranks = cs.ranks[pos[c]:]
                    cs.dirty = True
                    if not cs.ranks:
                        cs.dirty = False  # nothing to write but the header
                    self._store(c, cs)
        new = mine + picked
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
            vs.ranks = new
            vs.dirty = bool(picked)
            if new:
                vs.bnd = new[-1]
            elif recurse is None:
                vs.bnd = INF
            self._store(v, vs)
        st.unpin(tok)
        return recurse

    # -- public API ----------------------------------------------------------
    def update(self, k: int, p: int) -> None:
        if not 1 <= k <= self.params.N:
            raise ValueError(f"key {k} outside 1..{self.params.N}")
        if not 0 <= p <= self.max_priority:
            raise ValueError(f"priority {p} outside 0..{self.max_priority}")
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
        else:
            bisect.insort(self._root_list, r)
            self._root_keys[k] = r
            self._root_sig.append(-k)
        if len(self._root_sig) > self.C:
            self._push_signal(self.root)
        if len(self._root_list) > self.C:
            self._empty_list(self.root)

    insert = update
    decrease_key = update

    def delete(self, k: int) -> None:
        if not 1 <= k <= self.params.N:
            raise ValueError(f"key {k} outside 1..{self.params.N}")
        old = self._root_keys.pop(k, None)
        if old is not None:
            lst = self._root_list
            del lst[bisect.bisect_left(lst, old)]
            if not lst:
                self._fill_up(self.root)
            return
        self._root_sig.append(-k)
        if len(self._root_sig) > self.C:
            self._push_signal(self.root)

    def extract_min(self):
        if not self._root_list:
            return None
        r = self._root_list[0]
        k = r & self.kmask
        self.delete(k)
        return k, r >> self.kbits

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

    def io_stats(self):
        return self.store.snapshot_stats()
