"""Deletable approximate membership: a bucketed cuckoo fingerprint table.

Each key maps to two candidate buckets of four slots. A slot holds a
fingerprint of ``ceil(log2(1/eps)) + 3`` bits and a 2-bit multiplicity
counter, so a lookup compares at most eight fingerprints and the false
positive rate stays below ``eps``. Keys that cannot be placed after a bounded
number of displacements go to a spill list, which keeps the no-false-negative
guarantee when the table is over-full.

Serialized layout (uint64 words)::

    [capacity, fp_bits, seed, count, n_spill, packed slots..., spill...]

Each packed slot is ``fp_bits + 2`` bits (fingerprint, then counter), slots
in bucket order. A spill word is ``bucket << 40 | fingerprint << 8 | count``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from . import _kernels as K

LOAD = 0.9
HEADER_WORDS = 5
# space bound: bits <= C1 * n * log2(1/eps) + C2 * (n + w)
C1 = 1.5
C2 = 8


class FilterOverflow(Exception):
    pass


class FilterContractError(Exception):
    """Deleting a key that is not present."""


@dataclass(frozen=True)
class FilterParams:
    capacity: int
    epsilon: float
    seed: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")

    @cached_property
    def fp_bits(self) -> int:
        return math.ceil(math.log2(1 / self.epsilon)) + 3

    @cached_property
    def slot_bits(self) -> int:
        return self.fp_bits + 2

    @cached_property
    def nbuckets(self) -> int:
        return max(1, math.ceil(self.capacity / (LOAD * K.SLOTS)))

    @cached_property
    def packed_words(self) -> int:
        return -(-self.nbuckets * K.SLOTS * self.slot_bits // 64)

    def with_seed(self, seed: int) -> "FilterParams":
        return FilterParams(self.capacity, self.epsilon, seed & 0xFFFFFFFF)


@lru_cache(maxsize=4096)
def _params_cache(capacity: int, epsilon: float, seed: int) -> FilterParams:
    return FilterParams(capacity, epsilon, seed)


def space_bound_bits(params: FilterParams, w: int = 64) -> float:
    return C1 * params.capacity * math.log2(1 / params.epsilon) + C2 * (params.capacity + w)


class Filter:
    """Multiset membership with one-sided error.

    >>> f = Filter(FilterParams(capacity=16, epsilon=1 / 64))
    >>> f.insert(7); f.insert(7); f.delete(7)
    >>> f.query(7)
    True
    """

    __slots__ = ("params", "fps", "cnt", "count", "spill", "_nb", "_fpb", "_seed", "_out", "hard_limit")

    def __init__(self, params: FilterParams, hard_limit: int | None = None):
        self.params = params
        self._nb = params.nbuckets
        self._fpb = params.fp_bits
        self._seed = params.seed & 0xFFFFFFFF
        n = self._nb * K.SLOTS
        self.fps = np.zeros(n, dtype=np.int64)
        self.cnt = np.zeros(n, dtype=np.int64)
        self.count = 0
        self.spill: dict[tuple[int, int], int] = {}
        self._out = np.zeros(3, dtype=np.int64)
        self.hard_limit = hard_limit

    def insert(self, key: int) -> None:
        if self.hard_limit is not None and self.count >= self.hard_limit:
            raise FilterOverflow(f"filter holds {self.count} keys, limit {self.hard_limit}")
        if not K.table_insert(self.fps, self.cnt, self._nb, self._fpb, self._seed, key, self._out):
            b, f, c = (int(x) for x in self._out)
            # canonical spill slot: the smaller of the two candidate buckets
            b = min(b, int(K.alt_bucket(b, f, self._seed, self._nb)))
            self.spill[(b, f)] = self.spill.get((b, f), 0) + c
        self.count += 1

    def delete(self, key: int) -> None:
        if K.table_delete(self.fps, self.cnt, self._nb, self._fpb, self._seed, key):
            self.count -= 1
            return
        if self.spill:
            b, alt, f = K.locate(key, self._seed, self._nb, self._fpb)
            sk = (min(int(b), int(alt)), int(f))
            if sk in self.spill:
                if self.spill[sk] == 1:
                    del self.spill[sk]
                else:
                    self.spill[sk] -= 1
                self.count -= 1
                return
        raise FilterContractError(f"key {key} is not in the filter")

    def query(self, key: int) -> bool:
        if K.table_query(self.fps, self.cnt, self._nb, self._fpb, self._seed, key):
            return True
        if self.spill:
            b, alt, f = K.locate(key, self._seed, self._nb, self._fpb)
            return (min(int(b), int(alt)), int(f)) in self.spill
        return False

    __contains__ = query

    def query_many(self, keys) -> np.ndarray:
        keys = np.ascontiguousarray(keys, dtype=np.int64)
        out = np.zeros(len(keys), dtype=np.bool_)
        K.table_query_many(self.fps, self.cnt, self._nb, self._fpb, self._seed, keys, out)
        if self.spill:
            for j in np.flatnonzero(~out):
                out[j] = self.query(int(keys[j]))
        return out

    @classmethod
    def rebuild(cls, params: FilterParams, keys, hard_limit: int | None = None) -> "Filter":
        keys = list(keys)
        if hard_limit is not None and len(keys) > hard_limit:
            raise FilterOverflow(f"{len(keys)} keys exceed limit {hard_limit}")
        f = cls(params, hard_limit)
        for k in keys:
            f.insert(k)
        return f

    # -- serialization ----------------------------------------------------
    def size_words(self) -> int:
        return HEADER_WORDS + self.params.packed_words + len(self.spill)

    def size_bits(self, w: int = 64) -> int:
        return self.size_words() * w

    def to_words(self) -> np.ndarray:
        p = self.params
        slots = (self.fps << 2) | self.cnt
        packed = K.pack_bits(slots, p.slot_bits, p.packed_words)
        spill = [(b << 40) | (f << 8) | c for (b, f), c in sorted(self.spill.items())]
        head = np.array([p.capacity, p.fp_bits, self._seed, self.count, len(spill)], dtype=np.uint64)
        return np.concatenate([head, packed, np.array(spill, dtype=np.uint64)])

    @classmethod
    def from_words(cls, words, epsilon: float, hard_limit: int | None = None) -> "Filter":
        words = np.asarray(words, dtype=np.uint64)
        capacity, fp_bits, seed, count, nspill = (int(x) for x in words[:HEADER_WORDS])
        params = _params_cache(capacity, epsilon, seed)
        if params.fp_bits != fp_bits:
            raise ValueError(f"stored fingerprint width {fp_bits} does not match epsilon {epsilon}")
        f = cls.__new__(cls)
        f.params = params
        f._nb = params.nbuckets
        f._fpb = fp_bits
        f._seed = seed
        f.spill = {}
        f._out = np.zeros(3, dtype=np.int64)
        f.hard_limit = hard_limit
        pw = params.packed_words
        slots = K.unpack_bits(words[HEADER_WORDS : HEADER_WORDS + pw], params.slot_bits, f._nb * K.SLOTS)
        f.cnt = slots & 3
        f.fps = slots >> 2
        f.count = count
        for sw in words[HEADER_WORDS + pw : HEADER_WORDS + pw + nspill]:
            sw = int(sw)
            f.spill[(sw >> 40, (sw >> 8) & 0xFFFFFFFF)] = sw & 0xFF
        return f

    def __len__(self):
        return self.count
