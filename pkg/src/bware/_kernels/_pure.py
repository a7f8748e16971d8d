"""Pure numpy/Python implementations of the hot encoding kernels.

Used when the compiled extension is unavailable (or BWARE_PURE=1).
Every function here must stay observably identical to the compiled
versions in `_core`: same ids, same first-occurrence ordering.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


def _first_occurrence_renumber(uniq, first, inv):
    """Relabel np.unique output so ids follow first appearance order."""
    order = np.argsort(first, kind="stable")
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[order] = np.arange(len(uniq), dtype=np.int64)
    return rank[inv].astype(np.int64, copy=False), uniq[order]


def encode_array(values: np.ndarray):
    """Dictionary-encode a 1-D array: ids in first-occurrence order plus uniques."""
    values = np.asarray(values)
    if values.dtype == object:
        table: dict = {}
        ids = np.empty(len(values), dtype=np.int64)
        uniques: list = []
        for i, v in enumerate(values):
            j = table.get(v)
            if j is None:
                j = len(uniques)
                table[v] = j
                uniques.append(v)
            ids[i] = j
        out = np.empty(len(uniques), dtype=object)
        out[:] = uniques
        return ids, out
    if values.dtype.kind == "f":
        values = values + 0.0  # fold -0.0 into +0.0 so both backends agree
    uniq, first, inv = np.unique(values, return_index=True, return_inverse=True)
    return _first_occurrence_renumber(uniq, first, np.asarray(inv).ravel())


def encode_rows(block: np.ndarray):
    """Dictionary-encode the rows of a 2-D float64 block."""
    block = np.ascontiguousarray(block, dtype=np.float64) + 0.0
    n, k = block.shape
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty((0, k), dtype=np.float64)
    view = block.view(f"V{8 * k}").ravel()
    _, first, inv = np.unique(view, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty(len(first), dtype=np.int64)
    rank[order] = np.arange(len(first), dtype=np.int64)
    ids = rank[np.asarray(inv).ravel()].astype(np.int64, copy=False)
    return ids, block[first[order]].copy()


def update_rows(block: np.ndarray, table: dict):
    """Put-if-absent encode rows of a block against a persistent table.

    `table` maps the canonical little-endian bytes of a row tuple to its id
    and is mutated in place; new tuples get the next dense ids in
    first-occurrence order. Returns (ids, new_keys).
    """
    block = np.ascontiguousarray(block, dtype=np.float64) + 0.0
    n, k = block.shape
    if n == 0:
        return np.empty(0, dtype=np.int64), []
    view = block.view(f"V{8 * k}").ravel()
    _, first, inv = np.unique(view, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    new_keys: list[bytes] = []
    uid = np.empty(len(first), dtype=np.int64)
    for rank, u in enumerate(order):
        key = block[first[u]].tobytes()
        got = table.get(key)
        if got is None:
            got = len(table)
            table[key] = got
            new_keys.append(key)
        uid[u] = got
    return uid[np.asarray(inv).ravel()].astype(np.int64, copy=False), new_keys


def fnv1a64_mod(data, k: int) -> np.ndarray:
    """64-bit FNV-1a over pre-encoded byte strings, reduced modulo k."""
    out = np.empty(len(data), dtype=np.int64)
    for i, raw in enumerate(data):
        h = _FNV_OFFSET
        for b in raw:
            h = ((h ^ b) * _FNV_PRIME) & _U64
        out[i] = h % k
    return out


def preaggregate(dense: np.ndarray, ids: np.ndarray, d: int) -> np.ndarray:
    """Sum dense columns into a (k, d) buffer keyed by map id."""
    dense = np.asarray(dense, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    out = np.empty((dense.shape[0], d), dtype=np.float64)
    for i in range(dense.shape[0]):
        out[i] = np.bincount(ids, weights=dense[i], minlength=d)
    return out
