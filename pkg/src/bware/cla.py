"""Compressed linear algebra kernels: dictionary-only elementwise ops,
shared-map cbind, left/selection matrix multiply, row slicing, and
decompression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import _kernels as kernels
from .colgroup import (
    ColumnGroup,
    ColumnRange,
    CompressedMatrix,
    ConstGroup,
    DDCGroup,
    DenseDict,
    EmptyGroup,
    IdentityDict,
    SDCGroup,
    UncompressedGroup,
    col_indices,
    decompress_group,
    normalize_cols,
    shift_cols,
    slice_group_rows,
)
from .errors import ShapeError
from .mapvec import MapVector, map_width_for


@dataclass
class WorkloadVector:
    """Counts of downstream data-dependent operations over an intermediate."""

    decompress_heavy: int = 0
    lmm: int = 0
    rmm: int = 0
    scalar: int = 0
    scan: int = 0

    def total(self) -> int:
        return self.decompress_heavy + self.lmm + self.rmm + self.scalar + self.scan

    def scaled(self, factor: int) -> "WorkloadVector":
        return WorkloadVector(
            self.decompress_heavy * factor,
            self.lmm * factor,
            self.rmm * factor,
            self.scalar * factor,
            self.scan * factor,
        )

    def add(self, other: "WorkloadVector") -> None:
        self.decompress_heavy += other.decompress_heavy
        self.lmm += other.lmm
        self.rmm += other.rmm
        self.scalar += other.scalar
        self.scan += other.scan

    def to_dict(self) -> dict:
        return {
            "decompress_heavy": self.decompress_heavy,
            "lmm": self.lmm,
            "rmm": self.rmm,
            "scalar": self.scalar,
            "scan": self.scan,
        }


@dataclass
class KernelStats:
    """Allocation accounting for the pre-aggregation buffers of left_mm."""

    preagg_calls: int = 0
    preagg_cells: int = 0

    def reset(self) -> None:
        self.preagg_calls = 0
        self.preagg_cells = 0


stats = KernelStats()


@dataclass
class SelectionMatrix:
    """0/1 matrix with exactly one 1 per row, kept as the 1s' column positions."""

    rows: np.ndarray
    nrows_in: int

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        if len(self.rows) and (self.rows.min() < 0 or self.rows.max() >= self.nrows_in):
            raise IndexError("selection index out of range")

    @property
    def nrows_out(self) -> int:
        return len(self.rows)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.nrows_out, self.nrows_in))
        out[np.arange(self.nrows_out), self.rows] = 1.0
        return out


# ---------------------------------------------------------------------------
# Decompress / slice
# ---------------------------------------------------------------------------

def decompress(cm: CompressedMatrix) -> np.ndarray:
    out = np.zeros((cm.nrows, cm.ncols), dtype=np.float64)
    for g in cm.groups:
        block = decompress_group(g, cm.nrows)
        if isinstance(g.cols, ColumnRange):
            out[:, g.cols.start : g.cols.end] = block
        else:
            out[:, col_indices(g.cols)] = block
    return out


def to_dense(x) -> np.ndarray:
    if isinstance(x, CompressedMatrix):
        return decompress(x)
    if sparse.issparse(x):
        return np.asarray(x.todense(), dtype=np.float64)
    return np.asarray(x, dtype=np.float64)


def slice_rows(cm: CompressedMatrix, lo: int, hi: int) -> CompressedMatrix:
    groups = [slice_group_rows(g, lo, hi, cm.nrows) for g in cm.groups]
    return CompressedMatrix(hi - lo, cm.ncols, groups)


# ---------------------------------------------------------------------------
# Dictionary-only elementwise ops
# ---------------------------------------------------------------------------

def _identity_preserving(op) -> bool:
    return float(op(0.0)) == 0.0 and float(op(1.0)) == 1.0


def scalar_op(cm: CompressedMatrix, op) -> CompressedMatrix:
    """Apply a pure per-cell function by mapping dictionaries; maps are shared."""
    groups: list[ColumnGroup] = []
    for g in cm.groups:
        if isinstance(g, DDCGroup):
            if isinstance(g.dictionary, IdentityDict) and _identity_preserving(op):
                dictionary = IdentityDict(g.dictionary.dim)
            else:
                dictionary = DenseDict(np.asarray(op(g.dictionary.array()), dtype=np.float64))
            groups.append(DDCGroup(g.cols, g.map, dictionary, owns_map=False))
        elif isinstance(g, SDCGroup):
            dictionary = DenseDict(np.asarray(op(g.dictionary.array()), dtype=np.float64))
            groups.append(SDCGroup(g.cols, np.asarray(op(g.default), dtype=np.float64),
                                   g.exc_rows, g.exc_map, dictionary))
        elif isinstance(g, ConstGroup):
            groups.append(ConstGroup(g.cols, np.asarray(op(g.values), dtype=np.float64)))
        elif isinstance(g, EmptyGroup):
            if float(op(0.0)) == 0.0:
                groups.append(EmptyGroup(g.cols))
            else:
                groups.append(ConstGroup(g.cols, np.full(g.ncols, float(op(0.0)))))
        elif isinstance(g, UncompressedGroup):
            groups.append(UncompressedGroup(g.cols, np.asarray(op(g.block), dtype=np.float64)))
        else:
            raise TypeError(type(g))
    return CompressedMatrix(cm.nrows, cm.ncols, groups)


# ---------------------------------------------------------------------------
# cbind with shared-map co-coding
# ---------------------------------------------------------------------------

def cbind(*matrices: CompressedMatrix) -> CompressedMatrix:
    """Column-concatenate; groups whose maps are reference-identical merge
    into one co-coded group with a column-concatenated dictionary."""
    if not matrices:
        raise ValueError("cbind needs at least one input")
    nrows = matrices[0].nrows
    for m in matrices[1:]:
        if m.nrows != nrows:
            raise ShapeError(f"cbind row mismatch: {m.nrows} vs {nrows}")

    merged: dict[int, list] = {}  # id(map) -> [cols_list, dict_arrays, map, order]
    order: list = []  # heterogeneous list of ("merge", key) | ("plain", group)
    offset = 0
    for m in matrices:
        for g in m.groups:
            shifted = shift_cols(g.cols, offset)
            if isinstance(g, DDCGroup):
                key = id(g.map)
                if key in merged:
                    entry = merged[key]
                    if entry[3] == g.dictionary.nrows:
                        entry[0].append(shifted)
                        entry[1].append(g.dictionary.array())
                        continue
                else:
                    merged[key] = [[shifted], [g.dictionary.array()], g.map, g.dictionary.nrows]
                    order.append(("merge", key))
                    continue
            order.append(("plain", _shift_group(g, shifted)))
        offset += m.ncols

    groups: list[ColumnGroup] = []
    for kind, payload in order:
        if kind == "plain":
            groups.append(payload)
            continue
        cols_list, dicts, map_, _ = merged[payload]
        all_cols = normalize_cols(np.concatenate([col_indices(c) for c in cols_list]))
        if len(dicts) == 1:
            src = next(g for m in matrices for g in m.groups
                       if isinstance(g, DDCGroup) and id(g.map) == payload)
            groups.append(DDCGroup(all_cols, map_, src.dictionary, owns_map=False,
                                   owns_dict=False))
        else:
            dictionary = DenseDict(np.hstack(dicts))
            groups.append(DDCGroup(all_cols, map_, dictionary, owns_map=False))
    ncols = sum(m.ncols for m in matrices)
    return CompressedMatrix(nrows, ncols, groups)


def _shift_group(g: ColumnGroup, cols) -> ColumnGroup:
    if isinstance(g, DDCGroup):
        return DDCGroup(cols, g.map, g.dictionary, owns_map=False, owns_dict=False)
    if isinstance(g, SDCGroup):
        return SDCGroup(cols, g.default, g.exc_rows, g.exc_map, g.dictionary, owns_dict=False)
    if isinstance(g, ConstGroup):
        return ConstGroup(cols, g.values)
    if isinstance(g, EmptyGroup):
        return EmptyGroup(cols)
    if isinstance(g, UncompressedGroup):
        return UncompressedGroup(cols, g.block)
    raise TypeError(type(g))


# ---------------------------------------------------------------------------
# Matrix multiplies
# ---------------------------------------------------------------------------

def _scatter(out: np.ndarray, cols, block: np.ndarray) -> None:
    if isinstance(cols, ColumnRange):
        out[:, cols.start : cols.end] += block
    else:
        out[:, col_indices(cols)] += block


def left_mm(dense: np.ndarray, cm: CompressedMatrix) -> np.ndarray:
    """dense @ decompress(cm), computed by per-group id pre-aggregation."""
    dense = np.ascontiguousarray(dense, dtype=np.float64)
    if dense.ndim == 1:
        dense = dense.reshape(1, -1)
    if dense.shape[1] != cm.nrows:
        raise ShapeError(f"left_mm: {dense.shape[1]} columns vs {cm.nrows} compressed rows")
    k = dense.shape[0]
    out = np.zeros((k, cm.ncols), dtype=np.float64)
    colsum: np.ndarray | None = None
    for g in cm.groups:
        if isinstance(g, DDCGroup):
            d = g.dictionary.nrows
            pre = kernels.preaggregate(dense, g.map.ids(), d)
            stats.preagg_calls += 1
            stats.preagg_cells += k * d
            block = pre if isinstance(g.dictionary, IdentityDict) else pre @ g.dictionary.array()
            _scatter(out, g.cols, block)
        elif isinstance(g, SDCGroup):
            if colsum is None:
                colsum = dense.sum(axis=1)
            block = np.outer(colsum, g.default)
            if len(g.exc_rows):
                d = g.dictionary.nrows
                sub = np.ascontiguousarray(dense[:, g.exc_rows])
                pre = kernels.preaggregate(sub, g.exc_map.ids(), d)
                stats.preagg_calls += 1
                stats.preagg_cells += k * d
                block = block + pre @ (g.dictionary.array() - g.default)
            _scatter(out, g.cols, block)
        elif isinstance(g, ConstGroup):
            if colsum is None:
                colsum = dense.sum(axis=1)
            _scatter(out, g.cols, np.outer(colsum, g.values))
        elif isinstance(g, EmptyGroup):
            pass
        elif isinstance(g, UncompressedGroup):
            _scatter(out, g.cols, dense @ g.block)
        else:
            raise TypeError(type(g))
    return out


def right_mv(cm: CompressedMatrix, v: np.ndarray) -> np.ndarray:
    """decompress(cm) @ v without decompression (dictionary-projected gather)."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if len(v) != cm.ncols:
        raise ShapeError(f"right_mv: vector length {len(v)} vs {cm.ncols} columns")
    out = np.zeros(cm.nrows, dtype=np.float64)
    for g in cm.groups:
        sub = v[col_indices(g.cols)]
        if isinstance(g, DDCGroup):
            w = sub if isinstance(g.dictionary, IdentityDict) else g.dictionary.array() @ sub
            out += w[g.map.ids()]
        elif isinstance(g, SDCGroup):
            base = float(g.default @ sub)
            out += base
            if len(g.exc_rows):
                w = g.dictionary.array() @ sub
                out[g.exc_rows] += w[g.exc_map.ids()] - base
        elif isinstance(g, ConstGroup):
            out += float(g.values @ sub)
        elif isinstance(g, EmptyGroup):
            pass
        elif isinstance(g, UncompressedGroup):
            out += g.block @ sub
        else:
            raise TypeError(type(g))
    return out


def selection_mm(s: SelectionMatrix, cm: CompressedMatrix, dense_output: bool = False):
    """Row select/permute: result row r equals row s.rows[r] of the input.

    The compressed default gathers the per-group maps and shares dictionaries;
    `dense_output` materializes instead.
    """
    if s.nrows_in != cm.nrows:
        raise ShapeError(f"selection_mm: {s.nrows_in} selector columns vs {cm.nrows} rows")
    rows = s.rows
    n_out = len(rows)
    if dense_output:
        out = np.zeros((n_out, cm.ncols), dtype=np.float64)
        for g in cm.groups:
            block = decompress_group(g, cm.nrows)[rows]
            if isinstance(g.cols, ColumnRange):
                out[:, g.cols.start : g.cols.end] = block
            else:
                out[:, col_indices(g.cols)] = block
        return out
    groups: list[ColumnGroup] = []
    for g in cm.groups:
        if isinstance(g, DDCGroup):
            groups.append(DDCGroup(g.cols, g.map.gather(rows), g.dictionary, owns_dict=False))
        elif isinstance(g, SDCGroup):
            base = g.dictionary.array()
            full = np.vstack([base, g.default.reshape(1, -1)])
            default_id = base.shape[0]
            pos = np.searchsorted(g.exc_rows, rows)
            pos_clipped = np.minimum(pos, max(len(g.exc_rows) - 1, 0))
            if len(g.exc_rows):
                hit = g.exc_rows[pos_clipped] == rows
                exc_ids = g.exc_map.ids()
                ids = np.where(hit, exc_ids[pos_clipped], default_id)
            else:
                ids = np.full(n_out, default_id, dtype=np.int64)
            width = map_width_for(default_id + 1)
            groups.append(DDCGroup(g.cols, MapVector.from_ids(ids, width), DenseDict(full)))
        elif isinstance(g, ConstGroup):
            groups.append(ConstGroup(g.cols, g.values))
        elif isinstance(g, EmptyGroup):
            groups.append(EmptyGroup(g.cols))
        elif isinstance(g, UncompressedGroup):
            groups.append(UncompressedGroup(g.cols, g.block[rows]))
        else:
            raise TypeError(type(g))
    return CompressedMatrix(n_out, cm.ncols, groups)
