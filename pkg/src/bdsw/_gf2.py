"""Small GF(2) helpers shared by the decoders and the lineage check."""

from __future__ import annotations

import numpy as np


def masks_to_matrix(masks, n: int) -> np.ndarray:
    """Rows given as integer bitmasks (bit j = column j) to a uint8 matrix."""
    nbytes = (n + 7) // 8
    out = np.zeros((len(masks), n), dtype=np.uint8)
    for i, m in enumerate(masks):
        raw = np.frombuffer(int(m).to_bytes(nbytes, "little"), dtype=np.uint8)
        out[i] = np.unpackbits(raw, bitorder="little")[:n]
    return out


def pack_columns(m: np.ndarray) -> np.ndarray:
    """Pack each column of an (r, k) bit matrix into ceil(r/64) uint64 words.

    Returns shape (k, words).
    """
    r, k = m.shape
    words = max(1, (r + 63) // 64)
    packed = np.packbits(m, axis=0, bitorder="little")  # (ceil(r/8), k)
    buf = np.zeros((words * 8, k), dtype=np.uint8)
    buf[: packed.shape[0]] = packed
    return np.ascontiguousarray(buf.T).view(np.uint64).reshape(k, words)


def pack_vector(v: np.ndarray) -> np.ndarray:
    return pack_columns(np.asarray(v, dtype=np.uint8).reshape(-1, 1))[0]


def popcount(words: np.ndarray) -> np.ndarray:
    """Bit count summed over the last axis."""
    return np.bitwise_count(words).sum(axis=-1, dtype=np.int64)


def rank_of_rows(rows) -> int:
    """Rank over GF(2) of rows given as Python integers."""
    pivots: dict[int, int] = {}
    rank = 0
    for row in rows:
        v = int(row)
        while v:
            top = v.bit_length() - 1
            p = pivots.get(top)
            if p is None:
                pivots[top] = v
                rank += 1
                break
            v ^= p
    return rank


def rank(m: np.ndarray) -> int:
    m = np.asarray(m, dtype=np.uint8)
    rows = [int.from_bytes(np.packbits(row, bitorder="little").tobytes(), "little") for row in m]
    return rank_of_rows(rows)


def systematic_form(h: np.ndarray, s: np.ndarray, order: np.ndarray):
    """Gauss-Jordan elimination of [h | s] taking pivots in column ``order``.

    Returns ``(reduced_h, reduced_s, pivots, leftover_s)`` where ``pivots[i]``
    is the column whose unit vector sits in row ``i``.  Rows without a pivot
    are dropped from the first two; their syndrome bits are ``leftover_s``
    and must all be zero for the system to be consistent.
    """
    r, n = h.shape
    order = np.asarray(order, dtype=np.intp)
    # rows packed into uint64 words with the syndrome as an extra column n
    aug = np.concatenate([h, s.reshape(-1, 1)], axis=1).astype(np.uint8)
    a = pack_columns(np.ascontiguousarray(aug.T))  # (r, words)
    one = np.uint64(1)
    pivots = []
    row = 0
    for c in order:
        if row == r:
            break
        word, shift = int(c) >> 6, np.uint64(int(c) & 63)
        col = (a[:, word] >> shift) & one
        below = np.flatnonzero(col[row:])
        if below.size == 0:
            continue
        p = row + int(below[0])
        if p != row:
            a[[row, p]] = a[[p, row]]
            col[[row, p]] = col[[p, row]]
        hits = np.flatnonzero(col)
        hits = hits[hits != row]
        a[hits] ^= a[row]
        pivots.append(int(c))
        row += 1
    bits = np.unpackbits(a.view(np.uint8).reshape(r, -1), axis=1, bitorder="little")
    return bits[:row, :n], bits[:row, n], pivots, bits[row:, n]
