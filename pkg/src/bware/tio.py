"""Tiled binary I/O with split index/dictionary partitions, consolidating
reads, and streaming update-and-encode.

Everything is little-endian. Layout:

  meta.bwt      magic "BWTF", u32 version, u8 kind, u64 nrows, u64 ncols,
                u32 tile_rows, u8 flags, u32 npartitions, then per partition
                u32 name length + name + u64 first tile + u32 tile count.
  part-%05d.bwt tiles: u64 tile id, u8 block kind (0 dense, 1 sparse CSR,
                2 compressed), u32 payload length, payload.
  dict.bwt      u32 slot + u32 byte length + dense dictionary payload.

Compressed matrix tile payload: u16 group count, per group u8 encoding tag,
column range (2 x u32), dictionary descriptor (u8 tag: 0 inline dense with
u32 d + FP64 values, 1 identity with u32 dim, 2 external ref with u32 slot),
map width tag u8, packed map bytes. SDC groups carry their exception rows
and default tuple between the width tag and the (exception) map bytes;
uncompressed groups carry a raw FP64 block instead of a map.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse as _sparse

from . import _kernels as kernels
from .cframe import CompressedColumn, CompressedFrame
from .cla import decompress as cla_decompress
from .cla import slice_rows
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
    SharedDict,
    UncompressedGroup,
    col_indices,
    normalize_cols,
)
from .errors import FormatError, ManifestError
from .frame import Frame, TypedColumn, ValueType
from .mapvec import MapVector, MapWidth, map_width_for
from .parallel import pmap

MAGIC = b"BWTF"
VERSION = 1

KIND_MATRIX = 0
KIND_CMATRIX = 1
KIND_CFRAME = 2

BLOCK_DENSE = 0
BLOCK_SPARSE = 1
BLOCK_COMPRESSED = 2

ENC_DDC = 0
ENC_SDC = 1
ENC_CONST = 2
ENC_EMPTY = 3
ENC_UNC = 4

DICT_INLINE = 0
DICT_IDENTITY = 1
DICT_EXTERNAL = 2

FLAG_SEPARATE_DICT = 1

DEFAULT_TILE_ROWS = 16384
MIN_PARTITION_LOCAL = 16 * 1024

_HEADER = struct.Struct("<4sIBQQIBI")
_TILE = struct.Struct("<QBI")

_VTYPE_TAGS = {v: i for i, v in enumerate(ValueType)}
_TAG_VTYPES = {i: v for v, i in _VTYPE_TAGS.items()}


@dataclass
class ReadStats:
    tiles: int = 0
    partitions: int = 0
    morph_combines: int = 0
    fallback_recompressions: int = 0


@dataclass
class Manifest:
    path: str
    kind: int
    nrows: int
    ncols: int
    tile_rows: int
    partitions: list[str]
    tile_kinds: list[int]
    bytes_written: int
    separate_dict: bool


# ---------------------------------------------------------------------------
# Streaming update-and-encode
# ---------------------------------------------------------------------------

@dataclass
class SchemeStats:
    blocks: int = 0
    two_pass: int = 0


class CompressionScheme:
    """Mutable DDC fit state for streaming encode of column blocks.

    The dictionary grows append-only, so groups encoded against an earlier
    state stay valid against the latest dictionary.
    """

    def __init__(self, cols):
        self.cols = cols
        self.ncols = len(col_indices(cols))
        self.table: dict[bytes, int] = {}
        self.dictionary = DenseDict(np.empty((0, self.ncols), dtype=np.float64))
        self.stats = SchemeStats()

    def width_guess(self) -> MapWidth:
        # Current size doubled with a one-byte floor; overflow restarts wider.
        return map_width_for(min(max(2 * len(self.table), 256), MapWidth.W4B.capacity))


def update_and_encode(scheme: CompressionScheme, block: np.ndarray) -> DDCGroup:
    """One-pass fused update+encode of a block against a shared scheme.

    If new tuples overflow the preallocated index width, the two-pass
    variant kicks in (recorded in scheme.stats.two_pass); either way the
    shared dictionary is extended so earlier groups stay valid.
    """
    block = np.ascontiguousarray(block, dtype=np.float64)
    if block.ndim == 1:
        block = block.reshape(-1, 1)
    if block.shape[1] != scheme.ncols:
        raise FormatError(f"block has {block.shape[1]} columns, scheme expects {scheme.ncols}")
    size_before = len(scheme.table)
    guess = scheme.width_guess()
    ids, new_keys = kernels.update_rows(block, scheme.table)
    scheme.stats.blocks += 1
    if len(scheme.table) > guess.capacity:
        # Preallocated index cannot hold the new ids: two-pass re-encode.
        scheme.stats.two_pass += 1
    width = map_width_for(max(len(scheme.table), 1))
    if len(scheme.table) > size_before:
        rows = np.vstack([np.frombuffer(k, dtype=np.float64) for k in new_keys])
        scheme.dictionary.grow(rows)
    return DDCGroup(scheme.cols, MapVector.from_ids(ids, width), scheme.dictionary, owns_dict=False)


# ---------------------------------------------------------------------------
# Serialization helpers
# ---------------------------------------------------------------------------

def _f64_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _read_f64(buf: memoryview, off: int, count: int):
    arr = np.frombuffer(buf[off : off + 8 * count], dtype="<f8").astype(np.float64)
    return arr, off + 8 * count


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def u8(self, v):
        self.parts.append(struct.pack("<B", v))

    def u16(self, v):
        self.parts.append(struct.pack("<H", v))

    def u32(self, v):
        self.parts.append(struct.pack("<I", v))

    def u64(self, v):
        self.parts.append(struct.pack("<Q", v))

    def raw(self, b: bytes):
        self.parts.append(b)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.off = 0

    def u8(self) -> int:
        v = self.buf[self.off]
        self.off += 1
        return v

    def u16(self) -> int:
        (v,) = struct.unpack_from("<H", self.buf, self.off)
        self.off += 2
        return v

    def u32(self) -> int:
        (v,) = struct.unpack_from("<I", self.buf, self.off)
        self.off += 4
        return v

    def u64(self) -> int:
        (v,) = struct.unpack_from("<Q", self.buf, self.off)
        self.off += 8
        return v

    def raw(self, n: int) -> bytes:
        v = bytes(self.buf[self.off : self.off + n])
        self.off += n
        return v

    def f64(self, count: int) -> np.ndarray:
        arr, self.off = _read_f64(self.buf, self.off, count)
        return arr


# ---------------------------------------------------------------------------
# Dictionary slot registry (write side)
# ---------------------------------------------------------------------------

class _DictRegistry:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.slots: dict[int, int] = {}
        self.payloads: list[bytes] = []

    def slot_for(self, obj, payload_fn) -> int | None:
        if not self.enabled:
            return None
        key = id(obj)
        if key not in self.slots:
            self.slots[key] = len(self.payloads)
            self.payloads.append(payload_fn())
        return self.slots[key]

    def file_bytes(self) -> bytes:
        w = _Writer()
        for slot, payload in enumerate(self.payloads):
            w.u32(slot)
            w.u32(len(payload))
            w.raw(payload)
        return w.getvalue()


def _dense_dict_payload(arr: np.ndarray) -> bytes:
    w = _Writer()
    w.u32(arr.shape[0])
    w.u32(arr.shape[1])
    w.raw(_f64_bytes(arr))
    return w.getvalue()


def _parse_dense_dict_payload(raw: bytes) -> np.ndarray:
    r = _Reader(raw)
    d = r.u32()
    k = r.u32()
    return r.f64(d * k).reshape(d, k)


def _typed_payload(col: TypedColumn) -> bytes:
    w = _Writer()
    w.u32(len(col.data))
    if col.vtype is ValueType.BOOLEAN:
        w.raw(np.asarray(col.data, dtype=np.uint8).tobytes())
    elif col.vtype in (ValueType.INT32, ValueType.INT64, ValueType.FP32, ValueType.FP64):
        dt = {"int32": "<i4", "int64": "<i8", "fp32": "<f4", "fp64": "<f8"}[col.vtype.value]
        w.raw(np.ascontiguousarray(col.data, dtype=dt).tobytes())
    elif col.vtype is ValueType.HEX:
        for v in col.data:
            w.u32(len(v))
            w.raw(bytes(v))
    else:  # STRING / CHAR
        for v in col.data:
            enc = str(v).encode("utf-8")
            w.u32(len(enc))
            w.raw(enc)
    return w.getvalue()


def _parse_typed_payload(r: _Reader, vtype: ValueType) -> TypedColumn:
    n = r.u32()
    if vtype is ValueType.BOOLEAN:
        data = np.frombuffer(r.raw(n), dtype=np.uint8).astype(np.bool_)
    elif vtype in (ValueType.INT32, ValueType.INT64, ValueType.FP32, ValueType.FP64):
        dt = {"int32": "<i4", "int64": "<i8", "fp32": "<f4", "fp64": "<f8"}[vtype.value]
        data = np.frombuffer(r.raw(n * np.dtype(dt).itemsize), dtype=dt).astype(vtype.dtype)
    elif vtype is ValueType.HEX:
        out = np.empty(n, dtype=object)
        for i in range(n):
            out[i] = r.raw(r.u32())
        data = out
    else:
        out = np.empty(n, dtype=object)
        for i in range(n):
            out[i] = r.raw(r.u32()).decode("utf-8")
        data = out
    return TypedColumn(vtype, data)


def _typed_dict_payload(col: TypedColumn) -> bytes:
    w = _Writer()
    w.u8(_VTYPE_TAGS[col.vtype])
    w.raw(_typed_payload(col))
    return w.getvalue()


def _parse_typed_dict_payload(raw: bytes) -> TypedColumn:
    r = _Reader(raw)
    vtype = _TAG_VTYPES[r.u8()]
    return _parse_typed_payload(r, vtype)


# ---------------------------------------------------------------------------
# Group (de)serialization
# ---------------------------------------------------------------------------

def _split_runs(g: ColumnGroup, nrows: int) -> list[tuple[ColumnRange, ColumnGroup]]:
    """Split a group into contiguous column runs (the on-disk unit)."""
    idx = col_indices(g.cols)
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    runs = []
    start = 0
    for i in range(1, len(sorted_idx) + 1):
        if i == len(sorted_idx) or sorted_idx[i] != sorted_idx[i - 1] + 1:
            runs.append((start, i))
            start = i
    if len(runs) == 1:
        rng = ColumnRange(int(sorted_idx[0]), int(sorted_idx[-1]) + 1)
        if np.array_equal(order, np.arange(len(idx))):
            return [(rng, g)]
    out = []
    for lo, hi in runs:
        positions = order[lo:hi]
        rng = ColumnRange(int(sorted_idx[lo]), int(sorted_idx[hi - 1]) + 1)
        out.append((rng, _project_group(g, positions, rng)))
    return out


def _project_group(g: ColumnGroup, positions: np.ndarray, cols: ColumnRange) -> ColumnGroup:
    if isinstance(g, DDCGroup):
        if isinstance(g.dictionary, IdentityDict) and len(positions) == g.dictionary.dim \
                and np.array_equal(positions, np.arange(g.dictionary.dim)):
            return DDCGroup(cols, g.map, g.dictionary, owns_map=False, owns_dict=False)
        arr = g.dictionary.array()[:, positions]
        return DDCGroup(cols, g.map, DenseDict(arr), owns_map=False)
    if isinstance(g, SDCGroup):
        return SDCGroup(cols, g.default[positions], g.exc_rows, g.exc_map,
                        DenseDict(g.dictionary.array()[:, positions]))
    if isinstance(g, ConstGroup):
        return ConstGroup(cols, g.values[positions])
    if isinstance(g, EmptyGroup):
        return EmptyGroup(cols)
    if isinstance(g, UncompressedGroup):
        return UncompressedGroup(cols, g.block[:, positions])
    raise TypeError(type(g))


def _write_dictionary(w: _Writer, dictionary, registry: _DictRegistry, ncols: int) -> None:
    if isinstance(dictionary, IdentityDict):
        w.u8(DICT_IDENTITY)
        w.u32(dictionary.dim)
        return
    slot = registry.slot_for(dictionary, lambda: _dense_dict_payload(dictionary.array()))
    if slot is not None:
        w.u8(DICT_EXTERNAL)
        w.u32(slot)
        return
    arr = dictionary.array()
    w.u8(DICT_INLINE)
    w.u32(arr.shape[0])
    w.raw(_f64_bytes(arr))


def _serialize_cmatrix_tile(tile: CompressedMatrix, registry: _DictRegistry) -> bytes:
    w = _Writer()
    runs: list[tuple[ColumnRange, ColumnGroup]] = []
    for g in tile.groups:
        runs.extend(_split_runs(g, tile.nrows))
    runs.sort(key=lambda item: item[0].start)
    w.u16(len(runs))
    for rng, g in runs:
        enc = {"DDC": ENC_DDC, "SDC": ENC_SDC, "CONST": ENC_CONST,
               "EMPTY": ENC_EMPTY, "UNCOMPRESSED": ENC_UNC}[g.kind]
        w.u8(enc)
        w.u32(rng.start)
        w.u32(rng.end)
        if isinstance(g, DDCGroup):
            _write_dictionary(w, g.dictionary, registry, len(rng))
            w.u8(g.map.width.value)
            w.raw(g.map.to_bytes())
        elif isinstance(g, SDCGroup):
            _write_dictionary(w, g.dictionary, registry, len(rng))
            w.u8(g.exc_map.width.value)
            w.u32(len(g.exc_rows))
            w.raw(np.ascontiguousarray(g.exc_rows, dtype="<u4").tobytes())
            w.raw(_f64_bytes(g.default))
            w.raw(g.exc_map.to_bytes())
        elif isinstance(g, ConstGroup):
            w.u8(DICT_INLINE)
            w.u32(1)
            w.raw(_f64_bytes(g.values))
            w.u8(MapWidth.W0.value)
        elif isinstance(g, EmptyGroup):
            w.u8(DICT_INLINE)
            w.u32(0)
            w.u8(MapWidth.W0.value)
        elif isinstance(g, UncompressedGroup):
            w.u8(DICT_INLINE)
            w.u32(0)
            w.u8(MapWidth.W0.value)
            w.raw(_f64_bytes(g.block))
        else:
            raise TypeError(type(g))
    return w.getvalue()


@dataclass
class _ParsedGroup:
    enc: int
    start: int
    end: int
    dict_tag: int = DICT_INLINE
    dict_slot: int = -1
    dict_rows: np.ndarray | None = None
    identity_dim: int = 0
    width: MapWidth = MapWidth.W0
    map_bytes: bytes = b""
    exc_rows: np.ndarray | None = None
    default: np.ndarray | None = None
    block: np.ndarray | None = None

    @property
    def ncols(self) -> int:
        return self.end - self.start


def _parse_cmatrix_tile(raw: bytes, tile_rows: int) -> list[_ParsedGroup]:
    r = _Reader(raw)
    count = r.u16()
    out = []
    for _ in range(count):
        enc = r.u8()
        start = r.u32()
        end = r.u32()
        g = _ParsedGroup(enc, start, end)
        k = end - start
        if enc in (ENC_DDC, ENC_SDC):
            g.dict_tag = r.u8()
            if g.dict_tag == DICT_IDENTITY:
                g.identity_dim = r.u32()
            elif g.dict_tag == DICT_EXTERNAL:
                g.dict_slot = r.u32()
            else:
                d = r.u32()
                g.dict_rows = r.f64(d * k).reshape(d, k)
            g.width = MapWidth(r.u8())
            if enc == ENC_DDC:
                g.map_bytes = r.raw(g.width.payload_bytes(tile_rows))
            else:
                n_exc = r.u32()
                g.exc_rows = np.frombuffer(r.raw(4 * n_exc), dtype="<u4").astype(np.int64)
                g.default = r.f64(k)
                g.map_bytes = r.raw(g.width.payload_bytes(n_exc))
        elif enc == ENC_CONST:
            r.u8()  # inline tag
            r.u32()  # d == 1
            g.dict_rows = r.f64(k).reshape(1, k)
            r.u8()  # W0
        elif enc == ENC_EMPTY:
            r.u8()
            r.u32()
            r.u8()
        elif enc == ENC_UNC:
            r.u8()
            r.u32()
            r.u8()
            g.block = r.f64(tile_rows * k).reshape(tile_rows, k)
        else:
            raise FormatError(f"unknown group encoding tag {enc}")
        out.append(g)
    return out


def _materialize_group(pg: _ParsedGroup, tile_rows: int, dict_store: dict[int, np.ndarray]) -> ColumnGroup:
    cols = ColumnRange(pg.start, pg.end)
    if pg.enc == ENC_CONST:
        return ConstGroup(cols, pg.dict_rows[0])
    if pg.enc == ENC_EMPTY:
        return EmptyGroup(cols)
    if pg.enc == ENC_UNC:
        return UncompressedGroup(cols, pg.block)
    if pg.dict_tag == DICT_IDENTITY:
        dictionary = IdentityDict(pg.identity_dim)
    elif pg.dict_tag == DICT_EXTERNAL:
        if pg.dict_slot not in dict_store:
            raise ManifestError(f"missing dictionary slot {pg.dict_slot}")
        dictionary = DenseDict(dict_store[pg.dict_slot])
    else:
        dictionary = DenseDict(pg.dict_rows)
    if pg.enc == ENC_DDC:
        m = MapVector.from_bytes(pg.width, tile_rows, pg.map_bytes)
        return DDCGroup(cols, m, dictionary)
    m = MapVector.from_bytes(pg.width, len(pg.exc_rows), pg.map_bytes)
    return SDCGroup(cols, pg.default, pg.exc_rows, m, dictionary)


# ---------------------------------------------------------------------------
# Frame tiles
# ---------------------------------------------------------------------------

def _slice_cframe(cf: CompressedFrame, lo: int, hi: int) -> list[CompressedColumn]:
    out = []
    for col in cf.columns:
        if col.is_compressed:
            out.append(CompressedColumn(col.vtype, map_=col.map.slice(lo, hi),
                                        dictionary=col.dictionary))
        else:
            out.append(CompressedColumn(col.vtype, raw=TypedColumn(col.vtype, col.raw.data[lo:hi])))
    return out


def _serialize_cframe_tile(columns: list[CompressedColumn], registry: _DictRegistry) -> bytes:
    w = _Writer()
    w.u16(len(columns))
    for col in columns:
        w.u8(1 if col.is_compressed else 0)
        w.u8(_VTYPE_TAGS[col.vtype])
        if col.is_compressed:
            slot = registry.slot_for(col.dictionary, lambda c=col: _typed_dict_payload(c.dictionary))
            if slot is not None:
                w.u8(DICT_EXTERNAL)
                w.u32(slot)
            else:
                w.u8(DICT_INLINE)
                payload = _typed_dict_payload(col.dictionary)
                w.u32(len(payload))
                w.raw(payload)
            w.u8(col.map.width.value)
            w.raw(col.map.to_bytes())
        else:
            w.raw(_typed_payload(col.raw))
    return w.getvalue()


@dataclass
class _ParsedFrameCol:
    vtype: ValueType
    compressed: bool
    dict_slot: int = -1
    dictionary: TypedColumn | None = None
    ids: np.ndarray | None = None
    raw: TypedColumn | None = None
    width: MapWidth = MapWidth.W0


def _parse_cframe_tile(raw: bytes, tile_rows: int) -> list[_ParsedFrameCol]:
    r = _Reader(raw)
    count = r.u16()
    out = []
    for _ in range(count):
        compressed = bool(r.u8())
        vtype = _TAG_VTYPES[r.u8()]
        col = _ParsedFrameCol(vtype, compressed)
        if compressed:
            tag = r.u8()
            if tag == DICT_EXTERNAL:
                col.dict_slot = r.u32()
            else:
                col.dictionary = _parse_typed_dict_payload(r.raw(r.u32()))
            col.width = MapWidth(r.u8())
            col.ids = MapVector.from_bytes(col.width, tile_rows, r.raw(col.width.payload_bytes(tile_rows))).ids()
        else:
            col.raw = _parse_typed_payload(r, vtype)
        out.append(col)
    return out


# ---------------------------------------------------------------------------
# Dense / sparse tiles
# ---------------------------------------------------------------------------

def _serialize_dense(block: np.ndarray) -> bytes:
    return _f64_bytes(block)


def _serialize_sparse(block: np.ndarray) -> bytes:
    csr = _sparse.csr_matrix(block)
    w = _Writer()
    w.u64(csr.nnz)
    w.raw(np.ascontiguousarray(csr.indptr, dtype="<u8").tobytes())
    w.raw(np.ascontiguousarray(csr.indices, dtype="<u4").tobytes())
    w.raw(np.ascontiguousarray(csr.data, dtype="<f8").tobytes())
    return w.getvalue()


def _parse_block(kind: int, raw: bytes, rows: int, ncols: int) -> np.ndarray:
    if kind == BLOCK_DENSE:
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(rows, ncols)
    r = _Reader(raw)
    nnz = r.u64()
    indptr = np.frombuffer(r.raw(8 * (rows + 1)), dtype="<u8").astype(np.int64)
    indices = np.frombuffer(r.raw(4 * nnz), dtype="<u4").astype(np.int32)
    data = r.f64(nnz)
    csr = _sparse.csr_matrix((data, indices, indptr), shape=(rows, ncols))
    return np.asarray(csr.todense(), dtype=np.float64)


# ---------------------------------------------------------------------------
# write_tiled
# ---------------------------------------------------------------------------

def write_tiled(obj, path, tile_rows: int = DEFAULT_TILE_ROWS, separate_dict: bool = True,
                min_partition: int = MIN_PARTITION_LOCAL, threads: int | None = 1) -> Manifest:
    """Write a matrix, compressed matrix, or compressed frame as tiles.

    Compressed tiles are compared against their dense and sparse
    serializations and the smallest wins.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if isinstance(obj, CompressedMatrix):
        kind, nrows, ncols = KIND_CMATRIX, obj.nrows, obj.ncols
    elif isinstance(obj, CompressedFrame):
        kind, nrows, ncols = KIND_CFRAME, obj.nrows, obj.ncols
    else:
        obj = np.asarray(obj, dtype=np.float64)
        if obj.ndim == 1:
            obj = obj.reshape(-1, 1)
        kind, nrows, ncols = KIND_MATRIX, obj.shape[0], obj.shape[1]

    tile_rows = max(1, int(tile_rows))
    ntiles = max(1, (nrows + tile_rows - 1) // tile_rows) if nrows else 1
    registry = _DictRegistry(separate_dict and kind != KIND_MATRIX)

    tile_payloads: list[tuple[int, bytes]] = []
    tile_kinds: list[int] = []
    for t in range(ntiles):
        lo = t * tile_rows
        hi = min(nrows, lo + tile_rows)
        rows = max(hi - lo, 0)
        if kind == KIND_MATRIX:
            block = obj[lo:hi] if rows else np.empty((0, ncols))
            dense = _serialize_dense(block)
            sp = _serialize_sparse(block)
            blk_kind, payload = (BLOCK_DENSE, dense) if len(dense) <= len(sp) else (BLOCK_SPARSE, sp)
        elif kind == KIND_CMATRIX:
            tile = slice_rows(obj, lo, hi) if rows else obj
            payload = _serialize_cmatrix_tile(tile, registry)
            block = cla_decompress(tile) if rows else np.empty((0, ncols))
            dense = _serialize_dense(block)
            sp = _serialize_sparse(block)
            blk_kind = BLOCK_COMPRESSED
            if len(dense) < len(payload) or len(sp) < len(payload):
                blk_kind, payload = (BLOCK_DENSE, dense) if len(dense) <= len(sp) else (BLOCK_SPARSE, sp)
        else:
            cols = _slice_cframe(obj, lo, hi) if rows else obj.columns
            payload = _serialize_cframe_tile(cols, registry)
            blk_kind = BLOCK_COMPRESSED
        tile_payloads.append((t, payload))
        tile_kinds.append(blk_kind)

    # Assign tiles to partitions by the minimum-size rule.
    partitions: list[list[int]] = [[]]
    part_bytes = [0]
    for t, payload in tile_payloads:
        if part_bytes[-1] >= min_partition and partitions[-1]:
            partitions.append([])
            part_bytes.append(0)
        partitions[-1].append(t)
        part_bytes[-1] += _TILE.size + len(payload)

    part_names = [f"part-{i:05d}.bwt" for i in range(len(partitions))]

    def write_part(item):
        name, tile_ids = item
        with open(path / name, "wb") as fh:
            for t in tile_ids:
                payload = tile_payloads[t][1]
                fh.write(_TILE.pack(t, tile_kinds[t], len(payload)))
                fh.write(payload)
        return os.path.getsize(path / name)

    sizes = pmap(write_part, list(zip(part_names, partitions)), threads)
    total = sum(sizes)

    flags = FLAG_SEPARATE_DICT if registry.enabled else 0
    if registry.enabled:
        dict_bytes = registry.file_bytes()
        with open(path / "dict.bwt", "wb") as fh:
            fh.write(dict_bytes)
        total += len(dict_bytes)

    header = _Writer()
    header.raw(_HEADER.pack(MAGIC, VERSION, kind, nrows, ncols, tile_rows, flags, len(partitions)))
    for name, tile_ids in zip(part_names, partitions):
        enc = name.encode("utf-8")
        header.u32(len(enc))
        header.raw(enc)
        header.u64(tile_ids[0] if tile_ids else 0)
        header.u32(len(tile_ids))
    header_bytes = header.getvalue()
    with open(path / "meta.bwt", "wb") as fh:
        fh.write(header_bytes)
    total += len(header_bytes)

    return Manifest(str(path), kind, nrows, ncols, tile_rows, part_names, tile_kinds, total,
                    registry.enabled)


# ---------------------------------------------------------------------------
# read_tiled
# ---------------------------------------------------------------------------

def _read_header(path: Path):
    raw = (path / "meta.bwt").read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, kind, nrows, ncols, tile_rows, flags, nparts = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    r = _Reader(raw)
    r.off = _HEADER.size
    parts = []
    for _ in range(nparts):
        name = r.raw(r.u32()).decode("utf-8")
        first = r.u64()
        count = r.u32()
        parts.append((name, first, count))
    return kind, nrows, ncols, tile_rows, flags, parts


def _read_partition(path: Path, name: str):
    fp = path / name
    if not fp.exists():
        raise ManifestError(f"missing partition {name}")
    raw = fp.read_bytes()
    tiles = []
    off = 0
    while off < len(raw):
        tid, blk_kind, length = _TILE.unpack_from(raw, off)
        off += _TILE.size
        tiles.append((tid, blk_kind, raw[off : off + length]))
        off += length
    return tiles


def read_tiled(path, mode: str = "local", workers: int | None = None,
               stats: ReadStats | None = None):
    """Read a tiled object back, consolidating tiles into one scheme.

    mode "local" reads partitions sequentially; "pooled" reads them on a
    worker pool and joins index tiles with the shared dictionary partition.
    """
    path = Path(path)
    stats = stats if stats is not None else ReadStats()
    kind, nrows, ncols, tile_rows, flags, parts = _read_header(path)

    dict_store: dict[int, np.ndarray] = {}
    frame_dict_store: dict[int, TypedColumn] = {}
    if flags & FLAG_SEPARATE_DICT:
        raw = (path / "dict.bwt").read_bytes()
        r = _Reader(raw)
        while r.off < len(raw):
            slot = r.u32()
            payload = r.raw(r.u32())
            if kind == KIND_CFRAME:
                frame_dict_store[slot] = _parse_typed_dict_payload(payload)
            else:
                dict_store[slot] = _parse_dense_dict_payload(payload)

    if mode not in ("local", "pooled"):
        raise ValueError(f"unknown read mode {mode!r}")
    names = [p[0] for p in parts]
    if mode == "pooled":
        tile_lists = pmap(lambda n: _read_partition(path, n), names, workers)
    else:
        tile_lists = [_read_partition(path, n) for n in names]
    stats.partitions = len(names)

    tiles: dict[int, tuple[int, bytes]] = {}
    for lst in tile_lists:
        for tid, blk_kind, payload in lst:
            tiles[tid] = (blk_kind, payload)
    ntiles = max(1, (nrows + tile_rows - 1) // tile_rows) if nrows else 1
    if set(tiles) != set(range(ntiles)):
        raise ManifestError(f"expected tiles 0..{ntiles - 1}, found {sorted(tiles)}")
    stats.tiles = ntiles

    def tile_nrows(t: int) -> int:
        return min(nrows, (t + 1) * tile_rows) - t * tile_rows if nrows else 0

    if kind == KIND_MATRIX:
        blocks = [_parse_block(*tiles[t], tile_nrows(t), ncols) for t in range(ntiles)]
        return np.vstack(blocks) if nrows else np.empty((0, ncols))
    if kind == KIND_CMATRIX:
        return _consolidate_cmatrix(tiles, ntiles, tile_nrows, nrows, ncols, dict_store, stats)
    return _consolidate_cframe(tiles, ntiles, tile_nrows, nrows, ncols, frame_dict_store, stats)


# ---------------------------------------------------------------------------
# Consolidation
# ---------------------------------------------------------------------------

def _group_signature(pg: _ParsedGroup):
    dict_sig: object
    if pg.dict_tag == DICT_EXTERNAL:
        dict_sig = ("slot", pg.dict_slot)
    elif pg.dict_tag == DICT_IDENTITY:
        dict_sig = ("ident", pg.identity_dim)
    elif pg.dict_rows is not None:
        dict_sig = ("inline", pg.dict_rows.tobytes())
    else:
        dict_sig = ("none",)
    return (pg.enc, pg.start, pg.end, dict_sig)


def _consolidate_cmatrix(tiles, ntiles, tile_nrows, nrows, ncols, dict_store, stats: ReadStats):
    parsed: list[list[_ParsedGroup] | np.ndarray] = []
    for t in range(ntiles):
        blk_kind, payload = tiles[t]
        if blk_kind == BLOCK_COMPRESSED:
            parsed.append(_parse_cmatrix_tile(payload, tile_nrows(t)))
        else:
            parsed.append(_parse_block(blk_kind, payload, tile_nrows(t), ncols))

    compressed_tiles = [p for p in parsed if isinstance(p, list)]
    if not compressed_tiles:
        block = np.vstack([p for p in parsed]) if nrows else np.empty((0, ncols))
        stats.fallback_recompressions += ntiles
        return CompressedMatrix(nrows, ncols, [UncompressedGroup(ColumnRange(0, ncols), block)])

    # Fast path: identical group structure in every tile.
    signatures = [tuple(_group_signature(pg) for pg in p) if isinstance(p, list) else None
                  for p in parsed]
    base = signatures[0]
    if base is not None and all(s == base for s in signatures):
        groups = []
        for gi, pg0 in enumerate(parsed[0]):
            members = [p[gi] for p in parsed]
            groups.append(_concat_same_scheme(members, tile_nrows, nrows, dict_store, stats))
        return CompressedMatrix(nrows, ncols, groups)

    # General path: per-column-set streaming schemes.
    first = compressed_tiles[0]
    sets = [(pg.start, pg.end) for pg in first]
    covered = sorted(r for s in sets for r in range(s[0], s[1]))
    if covered != list(range(ncols)):
        sets = [(0, ncols)]
    groups = []
    for start, end in sets:
        scheme = CompressionScheme(ColumnRange(start, end))
        id_chunks = []
        for t in range(ntiles):
            p = parsed[t]
            rows = tile_nrows(t)
            if isinstance(p, np.ndarray):
                g = update_and_encode(scheme, p[:, start:end])
                stats.fallback_recompressions += 1
                id_chunks.append(g.map.ids())
                continue
            match = [pg for pg in p if pg.start >= start and pg.end <= end]
            if len(match) == 1 and match[0].start == start and match[0].end == end:
                pg = match[0]
                if pg.enc == ENC_UNC:
                    g = update_and_encode(scheme, pg.block)
                    stats.fallback_recompressions += 1
                    id_chunks.append(g.map.ids())
                else:
                    ids = _scheme_translate(scheme, pg, rows, dict_store, stats)
                    id_chunks.append(ids)
            else:
                # Tile groups do not line up with the consolidated column set.
                block = _materialize_range(p, rows, start, end, dict_store)
                g = update_and_encode(scheme, block)
                stats.fallback_recompressions += 1
                id_chunks.append(g.map.ids())
        ids = np.concatenate(id_chunks) if id_chunks else np.empty(0, np.int64)
        d = max(len(scheme.table), 1)
        groups.append(DDCGroup(ColumnRange(start, end),
                               MapVector.from_ids(ids, map_width_for(d)), scheme.dictionary))
    return CompressedMatrix(nrows, ncols, groups)


def _materialize_block(pg: _ParsedGroup, rows: int, dict_store) -> np.ndarray:
    from .colgroup import decompress_group

    return decompress_group(_materialize_group(pg, rows, dict_store), rows)


def _materialize_range(groups: list[_ParsedGroup], rows: int, start: int, end: int,
                       dict_store) -> np.ndarray:
    block = np.zeros((rows, end - start))
    for pg in groups:
        s, e = max(pg.start, start), min(pg.end, end)
        if s < e:
            full = _materialize_block(pg, rows, dict_store)
            block[:, s - start : e - start] = full[:, s - pg.start : e - pg.start]
    return block


def _scheme_translate(scheme: CompressionScheme, pg: _ParsedGroup, rows: int, dict_store,
                      stats: ReadStats) -> np.ndarray:
    """Feed one compressed tile group through a consolidation scheme by
    translating its dictionary ids (never its rows). Every non-seeding tile
    joined this way counts as one morph-combine."""
    seed = len(scheme.table) == 0
    if pg.enc == ENC_CONST or pg.enc == ENC_EMPTY:
        tup = pg.dict_rows[0] if pg.enc == ENC_CONST else np.zeros(pg.ncols)
        key = (np.ascontiguousarray(tup, dtype=np.float64) + 0.0).tobytes()
        if key not in scheme.table:
            scheme.table[key] = len(scheme.table)
            scheme.dictionary.grow(tup.reshape(1, -1))
        if not seed:
            stats.morph_combines += 1
        return np.full(rows, scheme.table[key], dtype=np.int64)
    if pg.enc == ENC_SDC:
        g = _materialize_group(pg, rows, dict_store)
        dict_rows, tile_ids = _sdc_ids(g, rows)
    else:
        if pg.dict_tag == DICT_EXTERNAL:
            dict_rows = dict_store[pg.dict_slot]
        elif pg.dict_tag == DICT_IDENTITY:
            dict_rows = np.eye(pg.identity_dim)
        else:
            dict_rows = pg.dict_rows
        tile_ids = MapVector.from_bytes(pg.width, rows, pg.map_bytes).ids()
    translate = np.empty(len(dict_rows), dtype=np.int64)
    for i in range(len(dict_rows)):
        key = (np.ascontiguousarray(dict_rows[i], dtype=np.float64) + 0.0).tobytes()
        got = scheme.table.get(key)
        if got is None:
            got = len(scheme.table)
            scheme.table[key] = got
            scheme.dictionary.grow(dict_rows[i].reshape(1, -1))
        translate[i] = got
    if not seed:
        stats.morph_combines += 1
    return translate[tile_ids]


def _sdc_ids(g: SDCGroup, rows: int):
    base = g.dictionary.array()
    dict_rows = np.vstack([base, g.default.reshape(1, -1)])
    ids = np.full(rows, base.shape[0], dtype=np.int64)
    if len(g.exc_rows):
        ids[g.exc_rows] = g.exc_map.ids()
    return dict_rows, ids


def _concat_same_scheme(members: list[_ParsedGroup], tile_nrows, nrows, dict_store,
                        stats: ReadStats) -> ColumnGroup:
    pg0 = members[0]
    cols = ColumnRange(pg0.start, pg0.end)
    if pg0.enc == ENC_CONST:
        return ConstGroup(cols, pg0.dict_rows[0])
    if pg0.enc == ENC_EMPTY:
        return EmptyGroup(cols)
    if pg0.enc == ENC_UNC:
        return UncompressedGroup(cols, np.vstack([m.block for m in members]))
    if pg0.enc == ENC_DDC:
        widths = {m.width for m in members}
        target = MapWidth(max(w.value for w in widths))
        if len(widths) > 1:
            stats.morph_combines += len(members) - 1
        ids = np.concatenate([
            MapVector.from_bytes(m.width, tile_nrows(t), m.map_bytes).ids()
            for t, m in enumerate(members)
        ])
        if pg0.dict_tag == DICT_EXTERNAL:
            dictionary = DenseDict(dict_store[pg0.dict_slot])
        elif pg0.dict_tag == DICT_IDENTITY:
            dictionary = IdentityDict(pg0.identity_dim)
        else:
            dictionary = DenseDict(pg0.dict_rows)
        return DDCGroup(cols, MapVector.from_ids(ids, target), dictionary)
    # SDC: same default and dictionary; exceptions re-based per tile.
    exc_rows = []
    exc_ids = []
    offset = 0
    for t, m in enumerate(members):
        exc_rows.append(m.exc_rows + offset)
        exc_ids.append(MapVector.from_bytes(m.width, len(m.exc_rows), m.map_bytes).ids())
        offset += tile_nrows(t)
    if pg0.dict_tag == DICT_EXTERNAL:
        dictionary = DenseDict(dict_store[pg0.dict_slot])
    else:
        dictionary = DenseDict(pg0.dict_rows)
    all_ids = np.concatenate(exc_ids) if exc_ids else np.empty(0, np.int64)
    width = map_width_for(max(dictionary.nrows, 1))
    return SDCGroup(cols, pg0.default, np.concatenate(exc_rows) if exc_rows else np.empty(0, np.int64),
                    MapVector.from_ids(all_ids, width), dictionary)


def _consolidate_cframe(tiles, ntiles, tile_nrows, nrows, ncols, dict_store, stats: ReadStats):
    parsed = []
    for t in range(ntiles):
        blk_kind, payload = tiles[t]
        if blk_kind != BLOCK_COMPRESSED:
            raise FormatError("frame tiles must use the compressed block kind")
        parsed.append(_parse_cframe_tile(payload, tile_nrows(t)))

    columns: list[CompressedColumn] = []
    names = [f"c{i}" for i in range(ncols)]
    for c in range(ncols):
        per_tile = [p[c] for p in parsed]
        vtypes = {pc.vtype for pc in per_tile}
        if len(vtypes) != 1:
            raise FormatError(f"column {c}: inconsistent value types across tiles")
        vtype = vtypes.pop()
        columns.append(_consolidate_frame_column(per_tile, vtype, tile_nrows, nrows, dict_store, stats))
    return CompressedFrame(columns, names, nrows)


def _frame_key(value, vtype: ValueType):
    if vtype in (ValueType.STRING, ValueType.CHAR):
        return str(value)
    if vtype is ValueType.HEX:
        return bytes(value)
    if vtype is ValueType.BOOLEAN:
        return bool(value)
    return float(value) + 0.0


def _consolidate_frame_column(per_tile: list[_ParsedFrameCol], vtype: ValueType, tile_nrows,
                              nrows, dict_store, stats: ReadStats) -> CompressedColumn:
    def tile_dict(pc: _ParsedFrameCol) -> TypedColumn:
        if pc.dict_slot >= 0:
            if pc.dict_slot not in dict_store:
                raise ManifestError(f"missing dictionary slot {pc.dict_slot}")
            return dict_store[pc.dict_slot]
        return pc.dictionary

    # Fast path: uniformly uncompressed column.
    if all(not pc.compressed for pc in per_tile):
        data = np.concatenate([pc.raw.data for pc in per_tile]) if per_tile else np.empty(0, object)
        if vtype.dtype == object:
            arr = np.empty(len(data), dtype=object)
            arr[:] = list(data)
            data = arr
        return CompressedColumn(vtype, raw=TypedColumn(vtype, data))

    # Fast path: every tile compressed against the same dictionary slot/content.
    if all(pc.compressed for pc in per_tile):
        first = tile_dict(per_tile[0])
        same = all(
            (pc.dict_slot >= 0 and pc.dict_slot == per_tile[0].dict_slot)
            or (pc.dict_slot < 0 and per_tile[0].dict_slot < 0 and tile_dict(pc).equals(first))
            for pc in per_tile
        )
        if same:
            ids = np.concatenate([pc.ids for pc in per_tile]) if per_tile else np.empty(0, np.int64)
            width = map_width_for(max(len(first), 1))
            if any(pc.width != per_tile[0].width for pc in per_tile):
                stats.morph_combines += len(per_tile) - 1
            return CompressedColumn(vtype, map_=MapVector.from_ids(ids, width), dictionary=first)

    # General path: translate dictionaries (or raw values) into one table.
    table: dict = {}
    values: list = []
    id_chunks = []
    for t, pc in enumerate(per_tile):
        if pc.compressed:
            d = tile_dict(pc)
            translate = np.empty(len(d.data), dtype=np.int64)
            for i, v in enumerate(d.data):
                key = _frame_key(v, vtype)
                got = table.get(key)
                if got is None:
                    got = len(values)
                    table[key] = got
                    values.append(v)
                translate[i] = got
            id_chunks.append(translate[pc.ids])
            stats.morph_combines += 1
        else:
            ids = np.empty(len(pc.raw.data), dtype=np.int64)
            for i, v in enumerate(pc.raw.data):
                key = _frame_key(v, vtype)
                got = table.get(key)
                if got is None:
                    got = len(values)
                    table[key] = got
                    values.append(v)
                ids[i] = got
            id_chunks.append(ids)
            stats.fallback_recompressions += 1
    ids = np.concatenate(id_chunks) if id_chunks else np.empty(0, np.int64)
    if vtype.dtype == object:
        arr = np.empty(len(values), dtype=object)
        arr[:] = values
    else:
        arr = np.array(values, dtype=vtype.dtype)
    dictionary = TypedColumn(vtype, arr)
    d = len(values)
    if vtype is not ValueType.BOOLEAN and nrows and d / nrows > 0.5:
        return CompressedColumn(vtype, raw=TypedColumn(vtype, dictionary.data[ids]))
    return CompressedColumn(vtype, map_=MapVector.from_ids(ids, map_width_for(max(d, 1))),
                            dictionary=dictionary)
