"""transformencode: fit-and-apply feature transformations from (compressed)
frames to (compressed) matrices, plus the quantizers and the per-path
output size model.

Paths:
  F_M   -- classic: frame to uncompressed matrix (one-hot becomes sparse CSR)
  F_CM  -- frame to compressed matrix, one column group per input column
  CF_CM -- compressed frame to compressed matrix; lossless directives reuse
           the input column's map by reference, lossy ones translate ids
           through a dictionary-sized table
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse

from . import _kernels as kernels
from .cframe import CompressedColumn, CompressedFrame
from .colgroup import (
    ColumnRange,
    CompressedMatrix,
    DDCGroup,
    DenseDict,
    IdentityDict,
    SharedDict,
    UncompressedGroup,
)
from .errors import SpecError, UnseenValueError, ValidationError
from .frame import Frame, TypedColumn, ValueType
from .mapvec import MapVector, MapWidth, map_width_for

MODEL_CONSTANT = 40.0  # bytes charged for "constant" (fully shared) outputs


class EncodePath(Enum):
    F_M = "F-M"
    F_CM = "F-CM"
    CF_CM = "CF-CM"


def _as_path(path) -> EncodePath:
    if isinstance(path, EncodePath):
        return path
    for p in EncodePath:
        if p.value == path or p.name == path:
            return p
    raise ValidationError(f"unknown path {path!r}")


# ---------------------------------------------------------------------------
# Directives and spec
# ---------------------------------------------------------------------------

@dataclass
class PassDir:
    dummy: bool = False
    name = "pass"


@dataclass
class RecodeDir:
    dummy: bool = False
    name = "recode"


@dataclass
class BinDir:
    bins: int
    mode: str = "width"  # "width" | "height"
    dummy: bool = False
    name = "bin"


@dataclass
class HashDir:
    buckets: int
    dummy: bool = False
    name = "hash"


@dataclass
class EmbedDir:
    matrix: np.ndarray
    path: str | None = None
    dummy: bool = False  # never allowed; kept for uniform validation
    name = "embed"


Directive = PassDir | RecodeDir | BinDir | HashDir | EmbedDir


@dataclass
class TransformSpec:
    directives: list[Directive]

    @property
    def ncols(self) -> int:
        return len(self.directives)

    def validate(self, ncols: int) -> None:
        errors = []
        if len(self.directives) != ncols:
            errors.append(f"spec covers {len(self.directives)} columns, frame has {ncols}")
        for i, d in enumerate(self.directives):
            if isinstance(d, BinDir):
                if d.bins < 1:
                    errors.append(f"column {i}: bin count must be >= 1, got {d.bins}")
                if d.mode not in ("width", "height"):
                    errors.append(f"column {i}: bad bin mode {d.mode!r}")
            if isinstance(d, HashDir) and d.buckets < 1:
                errors.append(f"column {i}: bucket count must be >= 1, got {d.buckets}")
            if isinstance(d, EmbedDir):
                if d.dummy:
                    errors.append(f"column {i}: dummy coding is not supported for word embedding")
                if d.matrix.ndim != 2:
                    errors.append(f"column {i}: embedding matrix must be 2-D")
        if errors:
            raise SpecError("; ".join(errors))

    @classmethod
    def from_json(cls, text: str, ncols: int | None = None, load_matrix=None) -> "TransformSpec":
        doc = json.loads(text)
        errors: list[str] = []
        per_col: dict[int, Directive] = {}

        def put(col, directive):
            if col in per_col:
                errors.append(f"column {col} has multiple directives")
            per_col[col] = directive

        for col in doc.get("recode", []):
            put(col, RecodeDir())
        for col in doc.get("pass", []):
            put(col, PassDir())
        for entry in doc.get("bin", []):
            put(entry["col"], BinDir(bins=int(entry["bins"]), mode=entry.get("mode", "width")))
        for entry in doc.get("hash", []):
            put(entry["col"], HashDir(buckets=int(entry["k"])))
        for entry in doc.get("embed", []):
            path = entry["matrix"]
            matrix = (load_matrix or _load_matrix)(path)
            put(entry["col"], EmbedDir(matrix=matrix, path=path))
        for col in doc.get("dummy", []):
            d = per_col.get(col)
            if d is None:
                errors.append(f"dummy flag on column {col} which has no directive")
            elif isinstance(d, EmbedDir):
                errors.append(f"column {col}: dummy coding is not supported for word embedding")
            else:
                d.dummy = True
        if ncols is None:
            ncols = (max(per_col) + 1) if per_col else 0
        missing = [i for i in range(ncols) if i not in per_col]
        if missing:
            errors.append(f"columns without a directive: {missing}")
        extra = [c for c in per_col if c >= ncols or c < 0]
        if extra:
            errors.append(f"directives for out-of-range columns: {sorted(extra)}")
        if errors:
            raise SpecError("; ".join(errors))
        spec = cls([per_col[i] for i in range(ncols)])
        spec.validate(ncols)
        return spec

    def to_json(self) -> str:
        doc: dict = {"recode": [], "pass": [], "bin": [], "hash": [], "dummy": [], "embed": []}
        for i, d in enumerate(self.directives):
            if isinstance(d, RecodeDir):
                doc["recode"].append(i)
            elif isinstance(d, PassDir):
                doc["pass"].append(i)
            elif isinstance(d, BinDir):
                doc["bin"].append({"col": i, "bins": d.bins, "mode": d.mode})
            elif isinstance(d, HashDir):
                doc["hash"].append({"col": i, "k": d.buckets})
            elif isinstance(d, EmbedDir):
                doc["embed"].append({"col": i, "matrix": d.path or ""})
            if getattr(d, "dummy", False):
                doc["dummy"].append(i)
        return json.dumps({k: v for k, v in doc.items() if v})


def _load_matrix(path) -> np.ndarray:
    path = str(path)
    if path.endswith(".npy"):
        return np.load(path)
    return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)


# ---------------------------------------------------------------------------
# Quantizers and error metric
# ---------------------------------------------------------------------------

def _check_finite(x: np.ndarray) -> None:
    bad = np.nonzero(np.isnan(x))[0]
    if len(bad):
        raise ValidationError(f"NaN input at row {int(bad[0])}")


def quantize_equiwidth(x: np.ndarray, bins: int) -> np.ndarray:
    """Equal-range bin ids in [0, bins); the maximum clamps into the last bin."""
    if bins < 1:
        raise ValidationError(f"bin count must be >= 1, got {bins}")
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    if len(x) == 0:
        return np.empty(0, dtype=np.int64)
    lo, hi = float(x.min()), float(x.max())
    return _equiwidth_ids(x, bins, lo, hi)


def _equiwidth_ids(x: np.ndarray, bins: int, lo: float, hi: float) -> np.ndarray:
    if bins == 1 or hi <= lo:
        return np.zeros(len(x), dtype=np.int64)
    ids = np.floor(bins * (x - lo) / (hi - lo)).astype(np.int64)
    return np.clip(ids, 0, bins - 1)


def equiheight_boundaries(x: np.ndarray, bins: int) -> np.ndarray:
    """Lower empirical quantile boundaries at j/bins for j = 1..bins-1."""
    xs = np.sort(np.asarray(x, dtype=np.float64))
    n = len(xs)
    if n == 0 or bins <= 1:
        return np.empty(0, dtype=np.float64)
    idx = np.ceil(np.arange(1, bins) * n / bins).astype(np.int64) - 1
    return xs[np.clip(idx, 0, n - 1)]


def quantize_equiheight(x: np.ndarray, bins: int) -> np.ndarray:
    """Bin ids by empirical quantile boundaries; duplicates collapse safely."""
    if bins < 1:
        raise ValidationError(f"bin count must be >= 1, got {bins}")
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    return _equiheight_ids(x, equiheight_boundaries(x, bins))


def _equiheight_ids(x: np.ndarray, boundaries: np.ndarray) -> np.ndarray:
    return np.searchsorted(boundaries, x, side="left").astype(np.int64)


def mae(x: np.ndarray, xhat: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ValidationError(f"length mismatch: {x.shape} vs {xhat.shape}")
    if x.size == 0:
        return 0.0
    return float(np.abs(x - xhat).sum() / x.size)


# ---------------------------------------------------------------------------
# Fitted metadata
# ---------------------------------------------------------------------------

@dataclass
class ColumnMeta:
    directive: Directive
    out_width: int
    # recode/pass+dummy/embed: distinct values in id order
    recode_values: TypedColumn | None = None
    # bin fits: equi-width keeps (lo, hi), equi-height keeps boundaries
    edges: np.ndarray | None = None

    def recode_table(self) -> dict:
        values = self.recode_values
        return {_canonical_value(v, values.vtype): i for i, v in enumerate(values.data)}


@dataclass
class MetaFrame:
    columns: list[ColumnMeta]
    zero_based: bool = True  # recode ids start at 0
    out_offsets: list[int] = field(default_factory=list)

    @property
    def out_cols(self) -> int:
        return sum(c.out_width for c in self.columns)

    def to_json(self) -> str:
        cols = []
        for c in self.columns:
            d = c.directive
            entry: dict = {"directive": d.name, "dummy": bool(getattr(d, "dummy", False)),
                           "out_width": c.out_width}
            if isinstance(d, BinDir):
                entry["bins"] = d.bins
                entry["mode"] = d.mode
                entry["edges"] = [float(v) for v in c.edges]
            if isinstance(d, HashDir):
                entry["k"] = d.buckets
            if isinstance(d, EmbedDir):
                entry["matrix"] = d.path or ""
            if c.recode_values is not None:
                entry["vtype"] = c.recode_values.vtype.value
                entry["values"] = [_json_value(v, c.recode_values.vtype) for v in c.recode_values.data]
            cols.append(entry)
        return json.dumps({"zero_based": self.zero_based, "columns": cols})

    @classmethod
    def from_json(cls, text: str, load_matrix=None) -> "MetaFrame":
        doc = json.loads(text)
        columns = []
        for entry in doc["columns"]:
            name = entry["directive"]
            dummy = entry.get("dummy", False)
            if name == "pass":
                d: Directive = PassDir(dummy=dummy)
            elif name == "recode":
                d = RecodeDir(dummy=dummy)
            elif name == "bin":
                d = BinDir(bins=entry["bins"], mode=entry["mode"], dummy=dummy)
            elif name == "hash":
                d = HashDir(buckets=entry["k"], dummy=dummy)
            elif name == "embed":
                d = EmbedDir(matrix=(load_matrix or _load_matrix)(entry["matrix"]), path=entry["matrix"])
            else:
                raise SpecError(f"unknown directive {name!r}")
            meta = ColumnMeta(d, entry["out_width"])
            if "edges" in entry:
                meta.edges = np.asarray(entry["edges"], dtype=np.float64)
            if "values" in entry:
                vtype = ValueType(entry["vtype"])
                meta.recode_values = _typed_from_json(entry["values"], vtype)
            columns.append(meta)
        return cls(columns, doc.get("zero_based", True))


def _json_value(v, vtype: ValueType):
    if vtype is ValueType.HEX:
        return v.hex()
    if vtype in (ValueType.STRING, ValueType.CHAR):
        return str(v)
    if vtype is ValueType.BOOLEAN:
        return bool(v)
    if vtype in (ValueType.INT32, ValueType.INT64):
        return int(v)
    return float(v)


def _typed_from_json(values, vtype: ValueType) -> TypedColumn:
    if vtype is ValueType.HEX:
        arr = np.empty(len(values), dtype=object)
        arr[:] = [bytes.fromhex(v) for v in values]
    elif vtype.dtype == object:
        arr = np.empty(len(values), dtype=object)
        arr[:] = [str(v) for v in values]
    else:
        arr = np.array(values, dtype=vtype.dtype)
    return TypedColumn(vtype, arr)


@dataclass
class EncodeResult:
    matrix: object  # np.ndarray | sparse.csr_matrix | CompressedMatrix
    meta: MetaFrame


# ---------------------------------------------------------------------------
# Value canonicalization (hash keys and recode tables)
# ---------------------------------------------------------------------------

def _canonical_value(v, vtype: ValueType):
    if vtype in (ValueType.STRING, ValueType.CHAR):
        return str(v)
    if vtype is ValueType.HEX:
        return bytes(v)
    return float(v) + 0.0


def _canonical_bytes(column: TypedColumn) -> list[bytes]:
    if column.vtype in (ValueType.STRING, ValueType.CHAR):
        return [str(v).encode("utf-8") for v in column.data]
    if column.vtype is ValueType.HEX:
        return [bytes(v) for v in column.data]
    return [struct.pack("<d", float(v) + 0.0) for v in column.data]


def _numeric_f64(column: TypedColumn, colidx: int) -> np.ndarray:
    if column.vtype in (ValueType.STRING, ValueType.CHAR, ValueType.HEX):
        raise ValidationError(f"column {colidx}: numeric directive on {column.vtype.value} column")
    return np.asarray(column.data, dtype=np.float64)


# ---------------------------------------------------------------------------
# Per-column fit/encode
# ---------------------------------------------------------------------------

class _ColState:
    """Per-column encode outcome, path-agnostic.

    kind is one of:
      values      -- plain pass-through numbers
      ids         -- materialized id vector (d entries in the dictionary)
      map         -- shared MapVector from a compressed frame column
      raw         -- incompressible pass-through fallback
    """

    __slots__ = ("kind", "payload", "d", "meta")

    def __init__(self, kind: str, payload, d: int, meta: ColumnMeta):
        self.kind = kind
        self.payload = payload
        self.d = d
        self.meta = meta


def _recode_fit(col, colidx: int) -> tuple:
    """(kind, payload, uniques) with shared maps preserved for compressed input."""
    if isinstance(col, CompressedColumn):
        if col.is_compressed:
            return "map", col.map, col.dictionary
        col = col.raw
    ids, uniques = kernels.encode_array(col.data)
    if col.data.dtype == object and uniques.dtype != object:
        coerced = np.empty(len(uniques), dtype=object)
        coerced[:] = list(uniques)
        uniques = coerced
    elif col.data.dtype != object:
        uniques = uniques.astype(col.data.dtype, copy=False)
    return "ids", ids, TypedColumn(col.vtype, uniques)


def _column_values(col) -> TypedColumn:
    return col.decompress() if isinstance(col, CompressedColumn) else col


def _fit_encode_column(col, directive: Directive, colidx: int, nrows: int,
                       seed: int, incompressible_ratio: float) -> _ColState:
    if isinstance(directive, RecodeDir):
        kind, payload, uniques = _recode_fit(col, colidx)
        d = len(uniques)
        meta = ColumnMeta(directive, d if directive.dummy else 1, recode_values=uniques)
        return _ColState(kind, payload, d, meta)

    if isinstance(directive, PassDir):
        if isinstance(col, CompressedColumn) and col.is_compressed:
            _numeric_f64(col.dictionary, colidx)  # type check on the dictionary
            d = col.distinct
            meta = ColumnMeta(directive, d if directive.dummy else 1,
                              recode_values=col.dictionary)
            return _ColState("map", col.map, d, meta)
        values = _column_values(col)
        _numeric_f64(values, colidx)
        kind, payload, uniques = _recode_fit(values, colidx)
        d = len(uniques)
        meta = ColumnMeta(directive, d if directive.dummy else 1, recode_values=uniques)
        if not directive.dummy:
            # Sample-checked compressibility; incompressible columns stay raw.
            from .frame import sample_rows

            rows = sample_rows(nrows, None, seed)
            sampled = np.asarray(values.data, dtype=np.float64)[rows]
            if len(rows) and len(np.unique(sampled)) / len(rows) > incompressible_ratio:
                return _ColState("raw", np.asarray(values.data, dtype=np.float64), d, meta)
        return _ColState(kind, payload, d, meta)

    if isinstance(directive, BinDir):
        bins = directive.bins
        meta = ColumnMeta(directive, bins if directive.dummy else 1)
        if isinstance(col, CompressedColumn) and col.is_compressed:
            dict_vals = _numeric_f64(col.dictionary, colidx)
            _check_finite(dict_vals)
            base_ids = col.map.ids()
            if directive.mode == "width":
                lo, hi = float(dict_vals.min()), float(dict_vals.max())
                meta.edges = np.array([lo, hi])
                translate = _equiwidth_ids(dict_vals, bins, lo, hi)
            else:
                counts = np.bincount(base_ids, minlength=len(dict_vals))
                boundaries = _weighted_boundaries(dict_vals, counts, bins)
                meta.edges = boundaries
                translate = _equiheight_ids(dict_vals, boundaries)
            return _ColState("ids", translate[base_ids], bins, meta)
        values = _numeric_f64(_column_values(col), colidx)
        _check_finite(values)
        if directive.mode == "width":
            lo = float(values.min()) if len(values) else 0.0
            hi = float(values.max()) if len(values) else 0.0
            meta.edges = np.array([lo, hi])
            ids = _equiwidth_ids(values, bins, lo, hi)
        else:
            boundaries = equiheight_boundaries(values, bins)
            meta.edges = boundaries
            ids = _equiheight_ids(values, boundaries)
        return _ColState("ids", ids, bins, meta)

    if isinstance(directive, HashDir):
        k = directive.buckets
        meta = ColumnMeta(directive, k if directive.dummy else 1)
        if isinstance(col, CompressedColumn) and col.is_compressed:
            translate = kernels.fnv1a64_mod(_canonical_bytes(col.dictionary), k)
            return _ColState("ids", translate[col.map.ids()], k, meta)
        values = _column_values(col)
        ids = kernels.fnv1a64_mod(_canonical_bytes(values), k)
        return _ColState("ids", ids, k, meta)

    if isinstance(directive, EmbedDir):
        kind, payload, uniques = _recode_fit(col, colidx)
        d = len(uniques)
        if d > directive.matrix.shape[0]:
            raise SpecError(
                f"column {colidx}: {d} distinct values exceed the {directive.matrix.shape[0]} embedding rows"
            )
        meta = ColumnMeta(directive, directive.matrix.shape[1], recode_values=uniques)
        return _ColState(kind, payload, d, meta)

    raise SpecError(f"column {colidx}: unknown directive {directive!r}")


def _weighted_boundaries(values: np.ndarray, counts: np.ndarray, bins: int) -> np.ndarray:
    """Type-1 quantile boundaries from distinct values and their frequencies."""
    if bins <= 1:
        return np.empty(0, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    cum = np.cumsum(counts[order])
    n = int(cum[-1]) if len(cum) else 0
    if n == 0:
        return np.empty(0, dtype=np.float64)
    targets = np.ceil(np.arange(1, bins) * n / bins)
    idx = np.searchsorted(cum, targets, side="left")
    return sorted_vals[np.clip(idx, 0, len(sorted_vals) - 1)]


# ---------------------------------------------------------------------------
# Output assembly
# ---------------------------------------------------------------------------

def _state_ids(state: _ColState) -> np.ndarray:
    if state.kind == "map":
        return state.payload.ids()
    return np.asarray(state.payload, dtype=np.int64)


def _emit_dense(state: _ColState, nrows: int):
    """F-M per-column output: (n,) / (n, w) array or ("onehot", ids, width)."""
    d = state.meta.directive
    if state.kind == "raw":
        return state.payload
    if isinstance(d, PassDir) and not d.dummy:
        if state.kind == "map":
            return np.asarray(state.meta.recode_values.data, dtype=np.float64)[state.payload.ids()]
        if state.kind == "values":
            return state.payload
        return np.asarray(state.meta.recode_values.data, dtype=np.float64)[_state_ids(state)]
    if isinstance(d, EmbedDir):
        return d.matrix[_state_ids(state)]
    ids = _state_ids(state)
    if getattr(d, "dummy", False):
        return ("onehot", ids, state.meta.out_width)
    return ids.astype(np.float64)


def _emit_group(state: _ColState, offset: int, nrows: int):
    """F-CM / CF-CM per-column output: a ColumnGroup at the given offset."""
    d = state.meta.directive
    width = state.meta.out_width
    cols = ColumnRange(offset, offset + width)
    if state.kind == "raw":
        return UncompressedGroup(cols, state.payload.reshape(-1, 1))

    if state.kind == "map":
        map_, owns = state.payload, False
    else:
        ids = _state_ids(state)
        map_, owns = MapVector.from_ids(ids, map_width_for(max(state.d, 1))), True

    if isinstance(d, EmbedDir):
        return DDCGroup(cols, map_, SharedDict(d.matrix), owns_map=owns)
    if getattr(d, "dummy", False):
        return DDCGroup(cols, map_, IdentityDict(state.d), owns_map=owns)
    if isinstance(d, PassDir):
        dictionary = DenseDict(np.asarray(state.meta.recode_values.data, dtype=np.float64))
    else:
        # recode / bin / hash: output values are the ids themselves
        dictionary = DenseDict(np.arange(state.d, dtype=np.float64))
    return DDCGroup(cols, map_, dictionary, owns_map=owns)


def _assemble_dense(pieces: list, nrows: int):
    if any(isinstance(p, tuple) and p[0] == "onehot" for p in pieces):
        blocks = []
        for p in pieces:
            if isinstance(p, tuple) and p[0] == "onehot":
                _, ids, width = p
                data = np.ones(nrows, dtype=np.float64)
                indptr = np.arange(nrows + 1)
                blocks.append(sparse.csr_matrix((data, ids, indptr), shape=(nrows, width)))
            else:
                arr = np.asarray(p, dtype=np.float64)
                blocks.append(sparse.csr_matrix(arr.reshape(nrows, -1)))
        return sparse.hstack(blocks, format="csr")
    arrays = [np.asarray(p, dtype=np.float64).reshape(nrows, -1) for p in pieces]
    return np.hstack(arrays) if arrays else np.empty((nrows, 0))


def _encode_with_states(states: list[_ColState], nrows: int, path: EncodePath) -> EncodeResult:
    metas = [s.meta for s in states]
    offsets = list(np.cumsum([0] + [m.out_width for m in metas]))[:-1]
    meta = MetaFrame(metas, out_offsets=[int(o) for o in offsets])
    if path is EncodePath.F_M:
        matrix = _assemble_dense([_emit_dense(s, nrows) for s in states], nrows)
        return EncodeResult(matrix, meta)
    groups = [_emit_group(s, off, nrows) for s, off in zip(states, offsets)]
    ncols = meta.out_cols
    return EncodeResult(CompressedMatrix(nrows, ncols, groups), meta)


def transform_encode(input_, spec: TransformSpec, path="F-CM", seed: int = 7,
                     incompressible_ratio: float = 0.5) -> EncodeResult:
    path = _as_path(path)
    is_cf = isinstance(input_, CompressedFrame)
    if path is EncodePath.CF_CM and not is_cf:
        raise ValidationError("CF-CM requires a compressed frame input")
    spec.validate(input_.ncols)
    nrows = input_.nrows
    states = []
    for i, directive in enumerate(spec.directives):
        col = input_.column(i)
        if is_cf and path is not EncodePath.CF_CM:
            col = col.decompress()
        states.append(_fit_encode_column(col, directive, i, nrows, seed, incompressible_ratio))
    return _encode_with_states(states, nrows, path)


# ---------------------------------------------------------------------------
# Apply (re-use fitted metadata on new frames)
# ---------------------------------------------------------------------------

def _lookup_ids(column: TypedColumn, meta: ColumnMeta, colidx: int) -> np.ndarray:
    table = meta.recode_table()
    ids = np.empty(len(column.data), dtype=np.int64)
    unseen = {}
    for i, v in enumerate(column.data):
        got = table.get(_canonical_value(v, column.vtype))
        if got is None:
            unseen[_canonical_value(v, column.vtype)] = True
            got = -1
        ids[i] = got
    if unseen:
        raise UnseenValueError(colidx, list(unseen))
    return ids


def _apply_column(col, meta: ColumnMeta, colidx: int, nrows: int) -> _ColState:
    d = meta.directive
    if isinstance(d, (RecodeDir, EmbedDir)) or (isinstance(d, PassDir) and d.dummy):
        dcount = len(meta.recode_values)
        if isinstance(col, CompressedColumn) and col.is_compressed:
            translate = _lookup_ids(col.dictionary, meta, colidx)
            if np.array_equal(translate, np.arange(len(translate))):
                return _ColState("map", col.map, dcount, meta)  # fit frame: share
            return _ColState("ids", translate[col.map.ids()], dcount, meta)
        values = _column_values(col)
        return _ColState("ids", _lookup_ids(values, meta, colidx), dcount, meta)

    if isinstance(d, PassDir):
        if isinstance(col, CompressedColumn) and col.is_compressed:
            _numeric_f64(col.dictionary, colidx)
            state = _ColState("map", col.map, col.distinct, meta)
            state.meta = ColumnMeta(d, 1, recode_values=col.dictionary)
            return state
        values = _column_values(col)
        arr = _numeric_f64(values, colidx)
        ids, uniques = kernels.encode_array(arr)
        fresh = ColumnMeta(d, 1, recode_values=TypedColumn(ValueType.FP64, np.asarray(uniques, dtype=np.float64)))
        return _ColState("ids", ids, len(uniques), fresh)

    if isinstance(d, BinDir):
        if d.mode == "width":
            lo, hi = float(meta.edges[0]), float(meta.edges[1])
            quant = lambda vals: _equiwidth_ids(vals, d.bins, lo, hi)
        else:
            quant = lambda vals: np.minimum(_equiheight_ids(vals, meta.edges), d.bins - 1)
        if isinstance(col, CompressedColumn) and col.is_compressed:
            dict_vals = _numeric_f64(col.dictionary, colidx)
            _check_finite(dict_vals)
            return _ColState("ids", quant(dict_vals)[col.map.ids()], d.bins, meta)
        values = _numeric_f64(_column_values(col), colidx)
        _check_finite(values)
        return _ColState("ids", quant(values), d.bins, meta)

    if isinstance(d, HashDir):
        if isinstance(col, CompressedColumn) and col.is_compressed:
            translate = kernels.fnv1a64_mod(_canonical_bytes(col.dictionary), d.buckets)
            return _ColState("ids", translate[col.map.ids()], d.buckets, meta)
        ids = kernels.fnv1a64_mod(_canonical_bytes(_column_values(col)), d.buckets)
        return _ColState("ids", ids, d.buckets, meta)

    raise SpecError(f"column {colidx}: unknown directive {d!r}")


def transform_apply(input_, meta: MetaFrame, path="F-CM") -> EncodeResult:
    path = _as_path(path)
    is_cf = isinstance(input_, CompressedFrame)
    if path is EncodePath.CF_CM and not is_cf:
        raise ValidationError("CF-CM requires a compressed frame input")
    if len(meta.columns) != input_.ncols:
        raise ValidationError(f"meta covers {len(meta.columns)} columns, frame has {input_.ncols}")
    nrows = input_.nrows
    states = []
    for i, colmeta in enumerate(meta.columns):
        col = input_.column(i)
        if is_cf and path is not EncodePath.CF_CM:
            col = col.decompress()
        states.append(_apply_column(col, colmeta, i, nrows))
    return _encode_with_states(states, nrows, path)


# ---------------------------------------------------------------------------
# Size model
# ---------------------------------------------------------------------------

def _bytes_per_row(d: int) -> float:
    width = map_width_for(max(d, 1))
    return {MapWidth.W0: 0.0, MapWidth.W1BIT: 0.125}.get(width, width.bits / 8)


def output_size_model(spec: TransformSpec, nrows: int, distinct: list[int]) -> dict[str, float]:
    """Per-path asymptotic output bytes for a fitted spec.

    `distinct` supplies the per-column d_i for recode/pass/embed columns
    (ignored for bin/hash, which are bounded by their bucket counts).
    """
    totals = {p.value: 0.0 for p in EncodePath}
    for i, d in enumerate(spec.directives):
        di = int(distinct[i]) if i < len(distinct) else 1
        if isinstance(d, (RecodeDir, PassDir)):
            bpr = _bytes_per_row(di)
            if d.dummy:
                totals["F-M"] += 12 * nrows
                totals["F-CM"] += bpr * nrows
            else:
                totals["F-M"] += 8 * nrows
                totals["F-CM"] += bpr * nrows + 8 * di
            totals["CF-CM"] += MODEL_CONSTANT
        elif isinstance(d, (BinDir, HashDir)):
            buckets = d.bins if isinstance(d, BinDir) else d.buckets
            bpr = _bytes_per_row(buckets)
            if d.dummy:
                totals["F-M"] += 12 * nrows
                compressed = bpr * nrows
            else:
                totals["F-M"] += 8 * nrows
                compressed = bpr * nrows + 8 * buckets
            totals["F-CM"] += compressed
            totals["CF-CM"] += compressed
        elif isinstance(d, EmbedDir):
            v = d.matrix.shape[1]
            totals["F-M"] += (8 * v + 12) * nrows
            totals["F-CM"] += _bytes_per_row(di) * nrows
            totals["CF-CM"] += MODEL_CONSTANT
    return totals
