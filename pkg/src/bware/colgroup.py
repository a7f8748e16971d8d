"""Compressed-matrix building blocks: dictionaries, column groups, and the
group-local kernels (decompress, slice, size accounting) everything else
builds on. Matrix cells are always FP64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mapvec import MapVector, MapWidth, map_width_for

GROUP_OVERHEAD = 20
COLUMN_RANGE_BYTES = 8
REFERENCE_BYTES = 8
IDENTITY_BYTES = 4


# ---------------------------------------------------------------------------
# Dictionaries
# ---------------------------------------------------------------------------

class DenseDict:
    """Row-major d x ncols FP64 dictionary.

    Growth is append-only and preserves the prefix: groups built against an
    earlier state stay valid after later rows are added (streaming encode).
    """

    __slots__ = ("_values", "_nrows")

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        self._values = np.ascontiguousarray(values)
        self._nrows = values.shape[0]

    @property
    def nrows(self) -> int:
        return self._nrows

    @property
    def ncols(self) -> int:
        return self._values.shape[1]

    def array(self) -> np.ndarray:
        return self._values[: self._nrows]

    def row(self, i: int) -> np.ndarray:
        return self._values[i]

    def grow(self, rows: np.ndarray) -> None:
        rows = np.asarray(rows, dtype=np.float64).reshape(-1, self.ncols)
        if not len(rows):
            return
        need = self._nrows + len(rows)
        if need > self._values.shape[0]:
            capacity = max(need, 2 * self._values.shape[0], 4)
            buf = np.empty((capacity, self.ncols), dtype=np.float64)
            buf[: self._nrows] = self._values[: self._nrows]
            self._values = buf
        self._values[self._nrows : need] = rows
        self._nrows = need

    def memory_bytes(self) -> int:
        return 8 * self._nrows * self.ncols

    def __repr__(self) -> str:
        return f"DenseDict({self._nrows}x{self.ncols})"


class IdentityDict:
    """Virtual d x d identity matrix, stored as a single integer."""

    __slots__ = ("dim",)

    def __init__(self, dim: int):
        self.dim = dim

    @property
    def nrows(self) -> int:
        return self.dim

    @property
    def ncols(self) -> int:
        return self.dim

    def array(self) -> np.ndarray:
        return np.eye(self.dim, dtype=np.float64)

    def row(self, i: int) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float64)
        out[i] = 1.0
        return out

    def memory_bytes(self) -> int:
        return IDENTITY_BYTES

    def __repr__(self) -> str:
        return f"IdentityDict({self.dim})"


class SharedDict:
    """Alias of an externally owned matrix (e.g. an embedding table)."""

    __slots__ = ("_values",)

    def __init__(self, values: np.ndarray):
        self._values = np.asarray(values, dtype=np.float64)

    @property
    def nrows(self) -> int:
        return self._values.shape[0]

    @property
    def ncols(self) -> int:
        return self._values.shape[1]

    def array(self) -> np.ndarray:
        return self._values

    def row(self, i: int) -> np.ndarray:
        return self._values[i]

    def memory_bytes(self) -> int:
        return REFERENCE_BYTES

    def __repr__(self) -> str:
        return f"SharedDict({self.nrows}x{self.ncols})"


Dictionary = DenseDict | IdentityDict | SharedDict


# ---------------------------------------------------------------------------
# Column index sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnRange:
    start: int
    end: int  # half-open

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad column range [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


Cols = ColumnRange | np.ndarray


def col_indices(cols: Cols) -> np.ndarray:
    if isinstance(cols, ColumnRange):
        return np.arange(cols.start, cols.end, dtype=np.int64)
    return np.asarray(cols, dtype=np.int64)


def col_count(cols: Cols) -> int:
    return len(cols) if isinstance(cols, ColumnRange) else len(np.asarray(cols))


def shift_cols(cols: Cols, offset: int) -> Cols:
    if isinstance(cols, ColumnRange):
        return ColumnRange(cols.start + offset, cols.end + offset)
    return np.asarray(cols, dtype=np.int64) + offset


def concat_cols(a: Cols, b: Cols) -> Cols:
    return normalize_cols(np.concatenate([col_indices(a), col_indices(b)]))


def normalize_cols(indices: np.ndarray) -> Cols:
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) and np.array_equal(indices, np.arange(indices[0], indices[0] + len(indices))):
        return ColumnRange(int(indices[0]), int(indices[0]) + len(indices))
    return indices


def cols_bytes(cols: Cols) -> int:
    return COLUMN_RANGE_BYTES if isinstance(cols, ColumnRange) else 4 * len(cols)


# ---------------------------------------------------------------------------
# Column groups
# ---------------------------------------------------------------------------

class ColumnGroup:
    kind = "abstract"

    def __init__(self, cols: Cols):
        self.cols = cols

    @property
    def ncols(self) -> int:
        return col_count(self.cols)


class DDCGroup(ColumnGroup):
    kind = "DDC"

    def __init__(self, cols: Cols, map_: MapVector, dictionary: Dictionary,
                 owns_map: bool = True, owns_dict: bool = True):
        super().__init__(cols)
        self.map = map_
        self.dictionary = dictionary
        self.owns_map = owns_map
        self.owns_dict = owns_dict


class SDCGroup(ColumnGroup):
    """Default tuple plus sorted exception rows pointing into a dictionary."""

    kind = "SDC"

    def __init__(self, cols: Cols, default: np.ndarray, exc_rows: np.ndarray,
                 exc_map: MapVector, dictionary: Dictionary, owns_dict: bool = True):
        super().__init__(cols)
        self.default = np.asarray(default, dtype=np.float64).ravel()
        self.exc_rows = np.asarray(exc_rows, dtype=np.int64)
        if len(self.exc_rows) > 1 and not np.all(np.diff(self.exc_rows) > 0):
            raise ValueError("exception rows must be strictly increasing")
        self.exc_map = exc_map
        self.dictionary = dictionary
        self.owns_dict = owns_dict


class ConstGroup(ColumnGroup):
    kind = "CONST"

    def __init__(self, cols: Cols, values: np.ndarray):
        super().__init__(cols)
        self.values = np.asarray(values, dtype=np.float64).ravel()


class EmptyGroup(ColumnGroup):
    kind = "EMPTY"


class UncompressedGroup(ColumnGroup):
    kind = "UNCOMPRESSED"

    def __init__(self, cols: Cols, block: np.ndarray):
        super().__init__(cols)
        block = np.asarray(block, dtype=np.float64)
        if block.ndim == 1:
            block = block.reshape(-1, 1)
        self.block = np.ascontiguousarray(block)


# ---------------------------------------------------------------------------
# Group kernels
# ---------------------------------------------------------------------------

def decompress_group(g: ColumnGroup, nrows: int) -> np.ndarray:
    """Materialize the group's covered columns as an nrows x ncols block."""
    k = g.ncols
    if isinstance(g, DDCGroup):
        ids = g.map.ids()
        if isinstance(g.dictionary, IdentityDict):
            out = np.zeros((nrows, k), dtype=np.float64)
            out[np.arange(nrows), ids] = 1.0
            return out
        return g.dictionary.array()[ids]
    if isinstance(g, SDCGroup):
        out = np.tile(g.default, (nrows, 1))
        if len(g.exc_rows):
            out[g.exc_rows] = g.dictionary.array()[g.exc_map.ids()]
        return out
    if isinstance(g, ConstGroup):
        return np.tile(g.values, (nrows, 1))
    if isinstance(g, EmptyGroup):
        return np.zeros((nrows, k), dtype=np.float64)
    if isinstance(g, UncompressedGroup):
        return g.block.copy()
    raise TypeError(type(g))


def group_memory_size(g: ColumnGroup, nrows: int) -> int:
    """Bytes: map payload + dictionary payload + column set + fixed overhead.

    Borrowed (shared) maps and dictionaries count as reference overhead only,
    so a fully shared group has constant size regardless of nrows and d.
    """
    size = GROUP_OVERHEAD + cols_bytes(g.cols)
    if isinstance(g, DDCGroup):
        size += g.map.payload_bytes() if g.owns_map else REFERENCE_BYTES
        size += g.dictionary.memory_bytes() if g.owns_dict else REFERENCE_BYTES
    elif isinstance(g, SDCGroup):
        size += 8 * g.ncols  # default tuple
        size += 4 * len(g.exc_rows) + g.exc_map.payload_bytes()
        size += g.dictionary.memory_bytes() if g.owns_dict else REFERENCE_BYTES
    elif isinstance(g, ConstGroup):
        size += 8 * g.ncols
    elif isinstance(g, UncompressedGroup):
        size += g.block.nbytes
    return size


def slice_group_rows(g: ColumnGroup, lo: int, hi: int, nrows: int) -> ColumnGroup:
    """Group over rows [lo, hi); dictionaries are shared, never copied."""
    if not 0 <= lo < hi <= nrows:
        raise IndexError(f"bad row range [{lo}, {hi}) for {nrows} rows")
    if isinstance(g, DDCGroup):
        return DDCGroup(g.cols, g.map.slice(lo, hi), g.dictionary, owns_dict=False)
    if isinstance(g, SDCGroup):
        first = int(np.searchsorted(g.exc_rows, lo, side="left"))
        last = int(np.searchsorted(g.exc_rows, hi, side="left"))
        rows = g.exc_rows[first:last] - lo
        if last > first:
            exc_map = MapVector.from_ids(g.exc_map.ids()[first:last], g.exc_map.width)
        else:
            exc_map = MapVector.from_ids(np.empty(0, dtype=np.int64), g.exc_map.width)
        return SDCGroup(g.cols, g.default, rows, exc_map, g.dictionary, owns_dict=False)
    if isinstance(g, ConstGroup):
        return ConstGroup(g.cols, g.values)
    if isinstance(g, EmptyGroup):
        return EmptyGroup(g.cols)
    if isinstance(g, UncompressedGroup):
        return UncompressedGroup(g.cols, g.block[lo:hi].copy())
    raise TypeError(type(g))


# ---------------------------------------------------------------------------
# Compressed matrix
# ---------------------------------------------------------------------------

class CompressedMatrix:
    def __init__(self, nrows: int, ncols: int, groups: list[ColumnGroup], validate: bool = True):
        self.nrows = nrows
        self.ncols = ncols
        self.groups = groups
        if validate:
            covered = np.concatenate([col_indices(g.cols) for g in groups]) if groups else np.empty(0, np.int64)
            if not np.array_equal(np.sort(covered), np.arange(ncols)):
                raise ValueError("group column sets must partition the matrix columns")

    def __repr__(self) -> str:
        kinds = ",".join(g.kind for g in self.groups)
        return f"CompressedMatrix({self.nrows}x{self.ncols}: [{kinds}])"

    def memory_bytes(self) -> int:
        return sum(group_memory_size(g, self.nrows) for g in self.groups)


def matrix_from_groups(nrows: int, groups: list[ColumnGroup]) -> CompressedMatrix:
    ncols = sum(g.ncols for g in groups)
    return CompressedMatrix(nrows, ncols, groups)
