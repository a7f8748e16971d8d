"""Per-column dense-dictionary compression of frames.

Type detection, conversion, and DDC encoding run fused in one pass per
column; columns whose dictionaries would grow too large relative to the
row count stay uncompressed (but still type-converted).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .frame import Frame, Schema, TypedColumn, ValueType, _CastError, _detect_column, _column_strings, convert_column, sample_rows
from .mapvec import MapVector, map_width_for
from .parallel import pmap

# Fixed per-column estimator overhead (pointers and the range/width fields).
COLUMN_OVERHEAD = 20


class CompressedColumn:
    """Either a (map, dictionary) pair or an uncompressed typed fallback."""

    __slots__ = ("vtype", "map", "dictionary", "raw")

    def __init__(self, vtype: ValueType, map_: MapVector | None = None,
                 dictionary: TypedColumn | None = None, raw: TypedColumn | None = None):
        if (map_ is None) == (raw is None):
            raise ValueError("exactly one of map/raw must be set")
        self.vtype = vtype
        self.map = map_
        self.dictionary = dictionary
        self.raw = raw

    @property
    def is_compressed(self) -> bool:
        return self.map is not None

    @property
    def nrows(self) -> int:
        return self.map.nrows if self.map is not None else len(self.raw)

    @property
    def distinct(self) -> int:
        return len(self.dictionary) if self.is_compressed else len(self.raw)

    def decompress(self) -> TypedColumn:
        if not self.is_compressed:
            return self.raw
        values = self.dictionary.data[self.map.ids()]
        if self.dictionary.data.dtype == object:
            out = np.empty(self.nrows, dtype=object)
            out[:] = values
            values = out
        return TypedColumn(self.vtype, values)

    def memory_bytes(self) -> int:
        if not self.is_compressed:
            return self.raw.payload_bytes() + COLUMN_OVERHEAD
        return self.map.payload_bytes() + self.dictionary.payload_bytes() + COLUMN_OVERHEAD


@dataclass
class CompressedFrame:
    columns: list[CompressedColumn]
    names: list[str]
    nrows: int

    @property
    def ncols(self) -> int:
        return len(self.columns)

    def column(self, i: int) -> CompressedColumn:
        return self.columns[i]

    def schema(self) -> Schema:
        return Schema([c.vtype for c in self.columns], [False] * len(self.columns))


def _encode_typed(col: TypedColumn):
    """First-occurrence dictionary encoding of a typed column."""
    ids, uniques = kernels.encode_array(col.data)
    if col.data.dtype == object:
        if uniques.dtype != object:
            coerced = np.empty(len(uniques), dtype=object)
            coerced[:] = list(uniques)
            uniques = coerced
    else:
        uniques = uniques.astype(col.data.dtype, copy=False)
    return ids, TypedColumn(col.vtype, uniques)


def _compress_column(col: TypedColumn, vtype: ValueType, max_dict_ratio: float) -> CompressedColumn:
    try:
        typed = convert_column(col, vtype)
    except _CastError:
        source = col.data if col.vtype is ValueType.STRING else _column_strings(col)
        vtype, _ = _detect_column(source)
        typed = convert_column(col, vtype)
    nrows = len(typed)
    ids, dictionary = _encode_typed(typed)
    d = len(dictionary)
    # Booleans are always kept compressed even though that can grow the size.
    if vtype is not ValueType.BOOLEAN and nrows > 0 and d / nrows > max_dict_ratio:
        return CompressedColumn(vtype, raw=typed)
    width = map_width_for(max(d, 1))
    return CompressedColumn(vtype, map_=MapVector.from_ids(ids, width), dictionary=dictionary)


def compress_frame(frame: Frame, sample_fraction: float | None = None,
                   max_dict_ratio: float = 0.5, seed: int = 7,
                   threads: int | None = 1) -> CompressedFrame:
    """Fused detect + convert + DDC-compress, column by column."""
    if frame.ncols == 0:
        return CompressedFrame([], list(frame.names), frame.nrows)
    rows = sample_rows(frame.nrows, sample_fraction, seed)

    def work(col: TypedColumn) -> CompressedColumn:
        if col.vtype is ValueType.STRING:
            vtype, _ = _detect_column(col.data[rows])
        else:
            vtype = col.vtype
        return _compress_column(col, vtype, max_dict_ratio)

    columns = pmap(work, frame.columns, threads)
    return CompressedFrame(columns, list(frame.names), frame.nrows)


def decompress_frame(cf: CompressedFrame) -> Frame:
    """Exact reconstruction of the type-converted frame."""
    return Frame([c.decompress() for c in cf.columns], list(cf.names), cf.nrows)


def frame_memory_estimate(cf: CompressedFrame) -> int:
    """Estimated bytes: map payloads + dictionary payloads + per-column overhead."""
    return sum(c.memory_bytes() for c in cf.columns)
