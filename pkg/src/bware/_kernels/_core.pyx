# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: single-pass dictionary encoding, streaming
put-if-absent encoding, FNV hashing, and LMM pre-aggregation.

Must stay observably identical to `_pure`.
"""

import numpy as np

cimport numpy as cnp
from cpython.bytes cimport PyBytes_FromStringAndSize

cnp.import_array()

BACKEND = "compiled"


def encode_array(values):
    values = np.asarray(values)
    if values.dtype == object:
        return _encode_object(values)
    if values.dtype.kind == "f":
        v = np.ascontiguousarray(values, dtype=np.float64) + 0.0
        return _encode_f64(v)
    if values.dtype.kind in "iub":
        v = np.ascontiguousarray(values, dtype=np.int64)
        ids, uniq = _encode_i64(v)
        return ids, uniq.astype(values.dtype)
    raise TypeError(f"unsupported dtype {values.dtype}")


def _encode_object(cnp.ndarray values):
    cdef Py_ssize_t i, n = values.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ids = np.empty(n, dtype=np.int64)
    cdef dict table = {}
    cdef list uniques = []
    cdef object v, got
    for i in range(n):
        v = values[i]
        got = table.get(v)
        if got is None:
            got = len(uniques)
            table[v] = got
            uniques.append(v)
        ids[i] = <long long>got
    out = np.empty(len(uniques), dtype=object)
    out[:] = uniques
    return ids, out


def _encode_f64(double[::1] values):
    cdef Py_ssize_t i, n = values.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ids = np.empty(n, dtype=np.int64)
    cdef dict table = {}
    cdef list uniques = []
    cdef double v
    cdef object got
    for i in range(n):
        v = values[i]
        got = table.get(v)
        if got is None:
            got = len(uniques)
            table[v] = got
            uniques.append(v)
        ids[i] = <long long>got
    return ids, np.asarray(uniques, dtype=np.float64)


def _encode_i64(long long[::1] values):
    cdef Py_ssize_t i, n = values.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ids = np.empty(n, dtype=np.int64)
    cdef dict table = {}
    cdef list uniques = []
    cdef long long v
    cdef object got
    for i in range(n):
        v = values[i]
        got = table.get(v)
        if got is None:
            got = len(uniques)
            table[v] = got
            uniques.append(v)
        ids[i] = <long long>got
    return ids, np.asarray(uniques, dtype=np.int64)


def encode_rows(block):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] b = \
        np.ascontiguousarray(block, dtype=np.float64) + 0.0
    cdef Py_ssize_t i, n = b.shape[0], k = b.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ids = np.empty(n, dtype=np.int64)
    cdef dict table = {}
    cdef list uniques = []
    cdef bytes key
    cdef object got
    for i in range(n):
        key = PyBytes_FromStringAndSize(<char*>&b[i, 0], k * 8)
        got = table.get(key)
        if got is None:
            got = len(uniques)
            table[key] = got
            uniques.append(key)
        ids[i] = <long long>got
    if uniques:
        dictionary = np.frombuffer(b"".join(uniques), dtype=np.float64).reshape(len(uniques), k).copy()
    else:
        dictionary = np.empty((0, k), dtype=np.float64)
    return ids, dictionary


def update_rows(block, dict table):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] b = \
        np.ascontiguousarray(block, dtype=np.float64) + 0.0
    cdef Py_ssize_t i, n = b.shape[0], k = b.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ids = np.empty(n, dtype=np.int64)
    cdef list new_keys = []
    cdef bytes key
    cdef object got
    for i in range(n):
        key = PyBytes_FromStringAndSize(<char*>&b[i, 0], k * 8)
        got = table.get(key)
        if got is None:
            got = len(table)
            table[key] = got
            new_keys.append(key)
        ids[i] = <long long>got
    return ids, new_keys


def fnv1a64_mod(data, k):
    cdef Py_ssize_t i, j, n = len(data), m
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef unsigned long long h, prime = 0x100000001B3ULL, kk = <unsigned long long>k
    cdef const unsigned char[::1] raw
    cdef bytes item
    for i in range(n):
        item = data[i]
        raw = item
        m = raw.shape[0]
        h = 0xCBF29CE484222325ULL
        for j in range(m):
            h = (h ^ raw[j]) * prime
        out[i] = <long long>(h % kk)
    return out


def preaggregate(dense, ids, d):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] dn = \
        np.ascontiguousarray(dense, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idv = np.ascontiguousarray(ids, dtype=np.int64)
    cdef Py_ssize_t i, r, k = dn.shape[0], n = dn.shape[1]
    cdef Py_ssize_t dd = <Py_ssize_t>d
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] out = np.zeros((k, dd), dtype=np.float64)
    for i in range(k):
        for r in range(n):
            out[i, idv[r]] += dn[i, r]
    return out
