"""Hot loops for the fingerprint filter.

The table kernels are written once and compiled by numba when available;
with ``XPQ_DISABLE_NUMBA=1`` the same source runs as plain Python. All table
arithmetic stays inside int64 without wraparound (32-bit hash state, 27-bit
multiplier), so both paths produce identical bits.

Batch queries and bit packing have two implementations each: a scalar
loop for numba and a vectorised numpy path for the fallback.
"""

import numpy as np

from ._accel import HAS_NUMBA, njit

SLOTS = 4  # fingerprints per bucket
MAX_KICKS = 64


@njit
def hash32(x, seed):
    h = (x ^ seed) & 0xFFFFFFFF
    h = ((h ^ (h >> 16)) * 0x45D9F3B) & 0xFFFFFFFF
    h = ((h ^ (h >> 16)) * 0x45D9F3B) & 0xFFFFFFFF
    return h ^ (h >> 16)


@njit
def locate(key, seed, nb, fp_bits):
    """Primary bucket, alternate bucket and fingerprint of ``key``."""
    b = hash32(key, seed) % nb
    f = hash32(key, (seed * 40503 + 0x9E3779B) & 0xFFFFFFFF) & ((1 << fp_bits) - 1)
    alt = (hash32(f, seed ^ 0x5BD1E995) - b) % nb
    return b, alt, f


@njit
def alt_bucket(b, f, seed, nb):
    return (hash32(f, seed ^ 0x5BD1E995) - b) % nb


@njit
def _find(fps, cnt, b, f):
    base = b * 4
    for i in range(base, base + 4):
        if cnt[i] > 0 and fps[i] == f:
            return i
    return -1


@njit
def table_query(fps, cnt, nb, fp_bits, seed, key):
    b, alt, f = locate(key, seed, nb, fp_bits)
    return _find(fps, cnt, b, f) >= 0 or _find(fps, cnt, alt, f) >= 0


@njit
def table_query_many_loop(fps, cnt, nb, fp_bits, seed, keys, out):
    for j in range(len(keys)):
        out[j] = table_query(fps, cnt, nb, fp_bits, seed, keys[j])


@njit
def _place(fps, cnt, b, f, c):
    base = b * 4
    for i in range(base, base + 4):
        if cnt[i] == 0:
            fps[i] = f
            cnt[i] = c
            return True
    return False


@njit
def table_insert(fps, cnt, nb, fp_bits, seed, key, out):
    """Insert one multiplicity of ``key``.

    Returns 1 on success. Returns 0 when cuckoo displacement gave up; the
    homeless (bucket, fingerprint, count) triple is then left in ``out`` for
    the caller's spill list.
    """
    b, alt, f = locate(key, seed, nb, fp_bits)
    for bb in (b, alt):
        i = _find(fps, cnt, bb, f)
        if i >= 0 and cnt[i] < 3:
            cnt[i] += 1
            return 1
    if _place(fps, cnt, b, f, 1) or _place(fps, cnt, alt, f, 1):
        return 1
    cur_b = b
    cur_f = f
    cur_c = 1
    for kick in range(MAX_KICKS):
        victim = cur_b * 4 + (cur_f + kick) % 4
        vf = fps[victim]
        vc = cnt[victim]
        fps[victim] = cur_f
        cnt[victim] = cur_c
        cur_f = vf
        cur_c = vc
        cur_b = alt_bucket(cur_b, cur_f, seed, nb)
        if _place(fps, cnt, cur_b, cur_f, cur_c):
            return 1
    out[0] = cur_b
    out[1] = cur_f
    out[2] = cur_c
    return 0


@njit
def table_delete(fps, cnt, nb, fp_bits, seed, key):
    """Remove one multiplicity; returns False if no matching slot exists."""
    b, alt, f = locate(key, seed, nb, fp_bits)
    i = _find(fps, cnt, b, f)
    if i < 0:
        i = _find(fps, cnt, alt, f)
    if i < 0:
        return False
    cnt[i] -= 1
    return True


@njit
def pack_bits_loop(vals, width, nwords):
    out = np.zeros(nwords, dtype=np.uint64)
    pos = 0
    for v in vals:
        word = pos >> 6
        off = pos & 63
        u = np.uint64(v)
        out[word] |= u << np.uint64(off)
        if off + width > 64:
            out[word + 1] |= u >> np.uint64(64 - off)
        pos += width
    return out


@njit
def unpack_bits_loop(words, width, n):
    out = np.zeros(n, dtype=np.int64)
    mask = (np.uint64(1) << np.uint64(width)) - np.uint64(1)
    pos = 0
    for j in range(n):
        word = pos >> 6
        off = pos & 63
        v = words[word] >> np.uint64(off)
        if off + width > 64:
            v |= words[word + 1] << np.uint64(64 - off)
        out[j] = np.int64(v & mask)
        pos += width
    return out


def pack_bits_np(vals, width, nwords):
    vals = np.asarray(vals, dtype=np.uint64)
    bits = ((vals[:, None] >> np.arange(width, dtype=np.uint64)) & np.uint64(1)).astype(np.uint8)
    flat = np.zeros(nwords * 64, dtype=np.uint8)
    flat[: bits.size] = bits.reshape(-1)
    return np.packbits(flat, bitorder="little").view("<u8").astype(np.uint64)


def unpack_bits_np(words, width, n):
    words = np.ascontiguousarray(words, dtype="<u8")
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")[: n * width]
    bits = bits.reshape(n, width).astype(np.int64)
    return (bits << np.arange(width, dtype=np.int64)).sum(axis=1)


def table_query_many_np(fps, cnt, nb, fp_bits, seed, keys, out):
    # hash32 and locate are plain integer arithmetic, so they broadcast.
    keys = np.asarray(keys, dtype=np.int64)
    b, alt, f = locate(keys, seed, nb, fp_bits)
    tf, tc = fps.reshape(nb, SLOTS), cnt.reshape(nb, SLOTS)
    hit = ((tf[b] == f[:, None]) & (tc[b] > 0)).any(axis=1)
    hit |= ((tf[alt] == f[:, None]) & (tc[alt] > 0)).any(axis=1)
    out[:] = hit


if HAS_NUMBA:
    pack_bits, unpack_bits = pack_bits_loop, unpack_bits_loop
    table_query_many = table_query_many_loop
else:
    pack_bits, unpack_bits = pack_bits_np, unpack_bits_np
    table_query_many = table_query_many_np
