"""Heterogeneous in-memory tables with typed columnar arrays.

Frames read from CSV start as all-string columns; schema detection on a
sample finds the narrowest value type per column and `apply_schema`
converts, falling back to a full-column re-detection whenever a sampled
type turns out to be wrong for some row.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CsvFormatError
from .parallel import pmap


class ValueType(Enum):
    BOOLEAN = "boolean"
    INT32 = "int32"
    INT64 = "int64"
    FP32 = "fp32"
    FP64 = "fp64"
    CHAR = "char"
    HEX = "hex"
    STRING = "string"

    @property
    def dtype(self):
        return _DTYPES[self]

    @property
    def byte_size(self) -> int:
        """Logical per-value payload size; variable-width types return 0."""
        return _BYTE_SIZE[self]


# Narrowest-first detection order.
TYPE_LATTICE = [
    ValueType.BOOLEAN,
    ValueType.INT32,
    ValueType.INT64,
    ValueType.FP32,
    ValueType.FP64,
    ValueType.CHAR,
    ValueType.HEX,
    ValueType.STRING,
]

_DTYPES = {
    ValueType.BOOLEAN: np.dtype(np.bool_),
    ValueType.INT32: np.dtype(np.int32),
    ValueType.INT64: np.dtype(np.int64),
    ValueType.FP32: np.dtype(np.float32),
    ValueType.FP64: np.dtype(np.float64),
    ValueType.CHAR: np.dtype(object),
    ValueType.HEX: np.dtype(object),
    ValueType.STRING: np.dtype(object),
}

_BYTE_SIZE = {
    ValueType.BOOLEAN: 1,
    ValueType.INT32: 4,
    ValueType.INT64: 8,
    ValueType.FP32: 4,
    ValueType.FP64: 8,
    ValueType.CHAR: 1,
    ValueType.HEX: 0,
    ValueType.STRING: 0,
}

_BOOL_TOKENS = {"0": False, "1": True, "true": True, "false": False}
_HEX_RE = re.compile(r"^[0-9a-fA-F]+$")
_INT32_MIN, _INT32_MAX = -(2**31), 2**31 - 1
_INT64_MIN, _INT64_MAX = -(2**63), 2**63 - 1


class _CastError(ValueError):
    """A value cannot be represented in the candidate type."""


def _parse(value: str, vtype: ValueType):
    """Parse one cell; raises _CastError when the value does not fit."""
    if vtype is ValueType.STRING:
        return value
    if value == "":
        return _NULL_VALUES[vtype]
    if vtype is ValueType.BOOLEAN:
        token = _BOOL_TOKENS.get(value.strip().lower())
        if token is None:
            raise _CastError(value)
        return token
    if vtype in (ValueType.INT32, ValueType.INT64):
        try:
            iv = int(value)
        except ValueError as exc:
            raise _CastError(value) from exc
        lo, hi = (_INT32_MIN, _INT32_MAX) if vtype is ValueType.INT32 else (_INT64_MIN, _INT64_MAX)
        if not lo <= iv <= hi:
            raise _CastError(value)
        return iv
    if vtype in (ValueType.FP32, ValueType.FP64):
        try:
            fv = float(value)
        except ValueError as exc:
            raise _CastError(value) from exc
        if vtype is ValueType.FP32:
            if fv != fv or float(np.float32(fv)) != fv:
                raise _CastError(value)
            return np.float32(fv)
        return fv
    if vtype is ValueType.CHAR:
        if len(value) != 1:
            raise _CastError(value)
        return value
    if vtype is ValueType.HEX:
        if len(value) < 2 or len(value) % 2 or not _HEX_RE.match(value):
            raise _CastError(value)
        return bytes.fromhex(value)
    raise _CastError(value)


_NULL_VALUES = {
    ValueType.BOOLEAN: False,
    ValueType.INT32: 0,
    ValueType.INT64: 0,
    ValueType.FP32: np.float32(0.0),
    ValueType.FP64: 0.0,
    ValueType.CHAR: "",
    ValueType.HEX: b"",
    ValueType.STRING: "",
}


@dataclass
class TypedColumn:
    vtype: ValueType
    data: np.ndarray

    def __len__(self) -> int:
        return len(self.data)

    def payload_bytes(self) -> int:
        """Logical payload size; strings count as length + 4 bytes each."""
        if self.vtype is ValueType.STRING:
            return sum(len(str(v).encode("utf-8")) + 4 for v in self.data)
        if self.vtype is ValueType.HEX:
            return sum(len(v) for v in self.data)
        return len(self.data) * self.vtype.byte_size

    def equals(self, other: "TypedColumn") -> bool:
        if self.vtype is not other.vtype or len(self) != len(other):
            return False
        if self.data.dtype == object:
            return all(a == b for a, b in zip(self.data, other.data))
        return bool(np.array_equal(self.data, other.data))


@dataclass
class Schema:
    types: list[ValueType]
    nullable: list[bool]

    def __len__(self) -> int:
        return len(self.types)


class Frame:
    """Immutable table of typed columns with unique labels."""

    def __init__(self, columns: list[TypedColumn], names: list[str] | None = None, nrows: int | None = None):
        if names is None:
            names = [f"c{i}" for i in range(len(columns))]
        if len(names) != len(columns):
            raise ValueError("one name per column required")
        if len(set(names)) != len(names):
            raise ValueError("column labels must be unique")
        if columns:
            lengths = {len(c) for c in columns}
            if len(lengths) != 1:
                raise ValueError(f"ragged columns: lengths {sorted(lengths)}")
            nrows = lengths.pop()
        self.columns = columns
        self.names = list(names)
        self.nrows = nrows or 0

    @property
    def ncols(self) -> int:
        return len(self.columns)

    def column(self, i: int) -> TypedColumn:
        return self.columns[i]

    def __repr__(self) -> str:
        kinds = ",".join(c.vtype.value for c in self.columns)
        return f"Frame({self.nrows}x{self.ncols}: {kinds})"

    @classmethod
    def from_strings(cls, cols: list[list[str]], names: list[str] | None = None) -> "Frame":
        columns = []
        for col in cols:
            arr = np.empty(len(col), dtype=object)
            arr[:] = [str(v) for v in col]
            columns.append(TypedColumn(ValueType.STRING, arr))
        return cls(columns, names)

    def equals(self, other: "Frame") -> bool:
        return (
            self.nrows == other.nrows
            and self.names == other.names
            and all(a.equals(b) for a, b in zip(self.columns, other.columns))
        )


def _column_strings(col: TypedColumn) -> np.ndarray:
    """Render a typed column back to strings (used by re-detection paths)."""
    out = np.empty(len(col), dtype=object)
    if col.vtype is ValueType.HEX:
        out[:] = [v.hex() for v in col.data]
    elif col.vtype is ValueType.BOOLEAN:
        out[:] = ["true" if v else "false" for v in col.data]
    else:
        out[:] = [str(v) for v in col.data]
    return out


def _detect_column(values, fallback: ValueType = ValueType.STRING) -> tuple[ValueType, bool]:
    """Narrowest lattice type parsing every non-empty value, plus nullability."""
    nullable = False
    non_empty = []
    for v in values:
        if v == "":
            nullable = True
        else:
            non_empty.append(v)
    for vtype in TYPE_LATTICE:
        ok = True
        for v in non_empty:
            try:
                _parse(v, vtype)
            except _CastError:
                ok = False
                break
        if ok:
            return vtype, nullable
    return fallback, nullable


def sample_rows(nrows: int, sample_fraction: float | None, seed: int = 7) -> np.ndarray:
    """Uniform row sample without replacement; default fraction max(0.01, 1024/nrows)."""
    if nrows <= 0:
        return np.empty(0, dtype=np.int64)
    if sample_fraction is None:
        sample_fraction = max(0.01, min(1.0, 1024 / nrows))
    if not 0 < sample_fraction <= 1:
        raise ValueError(f"sample fraction must be in (0, 1], got {sample_fraction}")
    k = max(1, int(round(sample_fraction * nrows)))
    if k >= nrows:
        return np.arange(nrows, dtype=np.int64)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(nrows, size=k, replace=False)).astype(np.int64)


def detect_schema(frame: Frame, sample_fraction: float | None = None, seed: int = 7) -> Schema:
    if frame.nrows == 0 or frame.ncols == 0:
        return Schema([c.vtype for c in frame.columns], [False] * frame.ncols)
    rows = sample_rows(frame.nrows, sample_fraction, seed)
    types: list[ValueType] = []
    nullable: list[bool] = []
    for col in frame.columns:
        if col.vtype is not ValueType.STRING:
            types.append(col.vtype)
            nullable.append(False)
            continue
        vtype, nul = _detect_column(col.data[rows])
        types.append(vtype)
        nullable.append(nul)
    return Schema(types, nullable)


def convert_column(col: TypedColumn, vtype: ValueType) -> TypedColumn:
    """Convert a column to vtype; raises _CastError when any value does not fit."""
    if col.vtype is vtype:
        return col
    if col.vtype is not ValueType.STRING:
        # Typed-to-typed goes through the string form; correctness over speed,
        # this path is rare (schema overrides on already-typed frames).
        col = TypedColumn(ValueType.STRING, _column_strings(col))
    parsed = [_parse(v, vtype) for v in col.data]
    if vtype.dtype == object:
        arr = np.empty(len(parsed), dtype=object)
        arr[:] = parsed
    else:
        arr = np.array(parsed, dtype=vtype.dtype)
    return TypedColumn(vtype, arr)


def apply_schema(frame: Frame, schema: Schema, threads: int | None = 1) -> Frame:
    """Convert each column; a cast error triggers full re-detection for that column."""
    if len(schema) != frame.ncols:
        raise ValueError(f"schema length {len(schema)} != {frame.ncols} columns")

    def convert(item):
        col, vtype = item
        try:
            return convert_column(col, vtype)
        except _CastError:
            guaranteed, _ = _detect_column(col.data if col.vtype is ValueType.STRING else _column_strings(col))
            return convert_column(col, guaranteed)

    columns = pmap(convert, list(zip(frame.columns, schema.types)), threads)
    return Frame(columns, frame.names, frame.nrows)


def read_csv(path, header: bool = True, delimiter: str = ",") -> Frame:
    """Read a CSV into an all-string frame (UTF-8, rectangular)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows = list(reader)
    if not rows:
        return Frame([], [])
    names = rows[0] if header else None
    data_rows = rows[1:] if header else rows
    width = len(rows[0])
    for i, row in enumerate(data_rows):
        if len(row) != width:
            rownum = i + (2 if header else 1)
            raise CsvFormatError(f"{path}: row {rownum} has {len(row)} fields, expected {width}")
    cols = [[row[j] for row in data_rows] for j in range(width)]
    return Frame.from_strings(cols, names)


def write_csv(frame: Frame, path, header: bool = True, delimiter: str = ",") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        if header:
            writer.writerow(frame.names)
        string_cols = [_column_strings(c) for c in frame.columns]
        for r in range(frame.nrows):
            writer.writerow([col[r] for col in string_cols])
