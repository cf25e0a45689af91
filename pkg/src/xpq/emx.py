"""Simulated external-memory model.

A :class:`BlockStore` is a disk of ``B``-word blocks plus an ``M``-word main
memory budget. Every block transfer is counted; allocation is bookkeeping and
is free. The memory budget is enforced through explicit :meth:`BlockStore.pin`
calls made by the algorithms running on top of the store.

Persistence layout (``dump``/``load``), all integers little-endian uint64::

    word 0      magic 0x3130584d45515058 ("XPQEMX01")
    words 1-4   N, B, M, w
    word 5      number of block slots S
    words 6-8   reads, writes, allocs
    word 9      number of free slots F
    next F      free slot ids, ascending
    next S*B    block payloads, slot 0 first
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

WORD = np.uint64
_MAGIC = 0x3130584D45515058


class EmxError(Exception):
    """Base class for I/O model faults."""


class BudgetError(EmxError):
    """Raised when the pinned working set would exceed ``M`` words."""


class BlockFault(EmxError):
    """Raised on access to an unallocated block or a malformed payload."""


class CapacityError(EmxError):
    """Raised when the configured disk-size cap is exceeded."""


@dataclass(frozen=True)
class ModelParams:
    N: int
    B: int
    M: int
    w: int = 64

    def __post_init__(self):
        if self.B < 2:
            raise ValueError(f"B must be >= 2, got {self.B}")
        if self.M < self.B:
            raise ValueError(f"M ({self.M}) must be >= B ({self.B})")
        if self.N < self.M:
            raise ValueError(f"N ({self.N}) must be >= M ({self.M})")
        need = math.ceil(math.log2(self.N)) + 1 if self.N > 1 else 1
        if not need <= self.w <= 64:
            raise ValueError(f"word size w={self.w} must lie in [{need}, 64]")


@dataclass(frozen=True)
class IoStats:
    reads: int = 0
    writes: int = 0
    allocs: int = 0

    @property
    def total(self) -> int:
        return self.reads + self.writes

    def __add__(self, other: "IoStats") -> "IoStats":
        return IoStats(self.reads + other.reads, self.writes + other.writes, self.allocs + other.allocs)

    def __sub__(self, other: "IoStats") -> "IoStats":
        return IoStats(self.reads - other.reads, self.writes - other.writes, self.allocs - other.allocs)


class BlockStore:
    """Disk of fixed-size word blocks with exact transfer counting.

    ``max_blocks`` caps the number of live blocks; ``reuse`` lets freed ids be
    handed out again (LIFO).
    """

    def __init__(self, params: ModelParams, max_blocks: int | None = None, reuse: bool = True):
        self.params = params
        self.B = params.B
        self.M = params.M
        self.max_blocks = max_blocks
        self.reuse = reuse
        self._data = np.zeros((16, self.B), dtype=WORD)
        self._live = bytearray(16)
        self._nslots = 0
        self._free: list[int] = []
        self._nlive = 0
        self.reads = 0
        self.writes = 0
        self.allocs = 0
        self.pinned = 0
        self.peak_pinned = 0
        self._pins: dict[int, int] = {}
        self._next_pin = 0
        self._wmask = None if params.w >= 64 else (1 << params.w) - 1
        # exclusive per-scope transfer counts: [label, transfers]
        self._scopes: list[list] = []
        self.scope_hook = None

    # -- allocation -------------------------------------------------------
    def alloc_block(self) -> int:
        if self.max_blocks is not None and self._nlive >= self.max_blocks:
            raise CapacityError(f"disk cap of {self.max_blocks} blocks reached")
        if self.reuse and self._free:
            bid = self._free.pop()
            self._data[bid] = 0
        else:
            bid = self._nslots
            if bid >= len(self._data):
                grow = len(self._data)
                self._data = np.concatenate([self._data, np.zeros((grow, self.B), dtype=WORD)])
                self._live.extend(bytes(grow))
            self._nslots += 1
        self._live[bid] = 1
        self._nlive += 1
        self.allocs += 1
        return bid

    def free_block(self, bid: int) -> None:
        self._check(bid)
        self._live[bid] = 0
        self._nlive -= 1
        self._free.append(bid)

    @property
    def live_blocks(self) -> int:
        return self._nlive

    def _check(self, bid: int) -> None:
        if not (0 <= bid < self._nslots) or not self._live[bid]:
            raise BlockFault(f"block {bid} is not allocated")

    # -- transfers --------------------------------------------------------
    def _count(self, reads: int, writes: int) -> None:
        self.reads += reads
        self.writes += writes
        if self._scopes:
            self._scopes[-1][1] += reads + writes

    def read_block(self, bid: int) -> np.ndarray:
        self._check(bid)
        if self.pinned + self.B > self.M:
            raise BudgetError(f"no room for a {self.B}-word transfer: {self.pinned} of {self.M} words pinned")
        self._count(1, 0)
        return self._data[bid].copy()

    def write_block(self, bid: int, data) -> None:
        self._check(bid)
        arr = np.asarray(data, dtype=WORD)
        if arr.shape != (self.B,):
            raise BlockFault(f"payload must hold exactly {self.B} words, got shape {arr.shape}")
        self._guard_width(arr)
        self._count(0, 1)
        self._data[bid] = arr

    def _check_many(self, bids) -> None:
        live, n = self._live, self._nslots
        for b in bids:
            if not (0 <= b < n and live[b]):
                raise BlockFault(f"block {b} is not allocated")

    def read_blocks(self, bids) -> np.ndarray:
        """Read several blocks; returns their payloads concatenated."""
        n = len(bids)
        if not n:
            return np.zeros(0, dtype=WORD)
        self._check_many(bids)
        if self.pinned + self.B > self.M:
            raise BudgetError(f"no room for a {self.B}-word transfer: {self.pinned} of {self.M} words pinned")
        self._count(n, 0)
        return self._data[bids].reshape(-1)

    def write_blocks(self, bids, words) -> None:
        """Write ``len(bids)`` blocks from a flat word array (zero padded)."""
        nb = len(bids)
        if not nb:
            return
        self._check_many(bids)
        flat = np.asarray(words, dtype=WORD).reshape(-1)
        n = nb * self.B
        if len(flat) > n:
            raise BlockFault(f"{len(flat)} words do not fit {nb} blocks")
        self._guard_width(flat)
        self._count(0, nb)
        if len(flat) < n:
            buf = np.zeros(n, dtype=WORD)
            buf[: len(flat)] = flat
            flat = buf
        self._data[bids] = flat.reshape(nb, self.B)

    def _guard_width(self, arr: np.ndarray) -> None:
        if self._wmask is not None and len(arr) and int(arr.max()) > self._wmask:
            raise BlockFault(f"word value exceeds w={self.params.w} bits")

    def peek_block(self, bid: int) -> np.ndarray:
        """Uncounted read for test oracles; never used by algorithms."""
        self._check(bid)
        return self._data[bid].copy()

    def peek_blocks(self, bids) -> np.ndarray:
        if not len(bids):
            return np.zeros(0, dtype=WORD)
        return self._data[list(bids)].reshape(-1).copy()

    # -- memory budget ----------------------------------------------------
    def pin(self, words: int) -> int:
        if words < 0:
            raise ValueError("cannot pin a negative word count")
        if self.pinned + words > self.M:
            raise BudgetError(f"pinning {words} words exceeds M={self.M} ({self.pinned} already pinned)")
        self.pinned += words
        if self.pinned > self.peak_pinned:
            self.peak_pinned = self.pinned
        tok = self._next_pin
        self._next_pin += 1
        self._pins[tok] = words
        return tok

    def unpin(self, token: int) -> None:
        self.pinned -= self._pins.pop(token)

    def repin(self, token: int, words: int) -> None:
        """Resize an existing pin in place."""
        old = self._pins[token]
        if self.pinned - old + words > self.M:
            raise BudgetError(f"resizing pin to {words} words exceeds M={self.M} ({self.pinned} pinned)")
        self.pinned += words - old
        self._pins[token] = words
        if self.pinned > self.peak_pinned:
            self.peak_pinned = self.pinned

    # -- statistics -------------------------------------------------------
    def snapshot_stats(self) -> IoStats:
        return IoStats(self.reads, self.writes, self.allocs)

    def reset_stats(self) -> IoStats:
        old = self.snapshot_stats()
        self.reads = self.writes = self.allocs = 0
        return old

    def begin_scope(self, label) -> None:
        self._scopes.append([label, 0])

    def end_scope(self) -> int:
        label, n = self._scopes.pop()
        if self.scope_hook is not None:
            self.scope_hook(label, n)
        return n

    # -- persistence ------------------------------------------------------
    def dump(self, path) -> None:
        p = self.params
        free = sorted(i for i in range(self._nslots) if not self._live[i])
        head = [_MAGIC, p.N, p.B, p.M, p.w, self._nslots, self.reads, self.writes, self.allocs, len(free)]
        body = np.concatenate([
            np.asarray(head + free, dtype="<u8"),
            self._data[: self._nslots].astype("<u8").reshape(-1),
        ])
        Path(path).write_bytes(body.tobytes())

    @classmethod
    def load(cls, path) -> "BlockStore":
        raw = np.frombuffer(Path(path).read_bytes(), dtype="<u8")
        if len(raw) < 10 or int(raw[0]) != _MAGIC:
            raise BlockFault(f"{path}: not a block store dump")
        N, B, M, w, nslots, reads, writes, allocs, nfree = (int(x) for x in raw[1:10])
        free = [int(x) for x in raw[10 : 10 + nfree]]
        payload = raw[10 + nfree :]
        if len(payload) != nslots * B:
            raise BlockFault(f"{path}: expected {nslots * B} payload words, found {len(payload)}")
        store = cls(ModelParams(N=N, B=B, M=M, w=w))
        cap = max(16, nslots)
        store._data = np.zeros((cap, B), dtype=WORD)
        store._data[:nslots] = payload.reshape(nslots, B)
        store._live = bytearray(cap)
        store._live[:nslots] = b"\x01" * nslots
        for i in free:
            store._live[i] = 0
        store._nslots = nslots
        store._free = sorted(free, reverse=True)
        store._nlive = nslots - len(free)
        store.reads, store.writes, store.allocs = reads, writes, allocs
        return store
