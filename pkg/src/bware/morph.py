"""Workload-aware retuning of (un)compressed matrices.

The sequence is classify -> group -> combine/convert: statistics are
extracted (or reused from existing column groups), a greedy co-coding
planner picks column sets and target encodings, and specialized combine
kernels execute the plan without decompression wherever possible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .cla import WorkloadVector, decompress
from .colgroup import (
    ColumnGroup,
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
)
from .errors import PlanError
from .mapvec import MapVector, MapWidth, map_width_for


@dataclass
class MorphOptions:
    seed: int = 7
    sample_fraction: float = 0.05
    min_sample: int = 256
    sdc_threshold: float = 0.6  # dominant-tuple share needed to pick SDC
    max_dict_ratio: float = 0.5  # d/nrows above this stays uncompressed
    pair_cap_columns: int = 64  # above this, only top 8m candidate pairs
    pair_cap_off: bool = False


@dataclass
class ColumnStats:
    cols: tuple
    d: int
    dominant: float
    all_zero: bool
    nrows: int
    sample_keys: np.ndarray  # dense-coded sampled tuples, one key per sampled row
    exact: bool
    group: ColumnGroup | None = None

    @property
    def ncols(self) -> int:
        return len(self.cols)


@dataclass
class CoCodeEstimate:
    i: int
    j: int
    d_ij: int
    ratio: float


@dataclass
class PlanGroup:
    columns: tuple
    encoding: str
    members: tuple  # indices into the classify() output


@dataclass
class MorphPlan:
    groups: list[PlanGroup]

    def to_json(self) -> str:
        return json.dumps(
            {"groups": [{"columns": list(g.columns), "encoding": g.encoding} for g in self.groups]}
        )


# ---------------------------------------------------------------------------
# Classify
# ---------------------------------------------------------------------------

def _sample_rows(nrows: int, opts: MorphOptions) -> np.ndarray:
    k = max(min(opts.min_sample, nrows), int(round(opts.sample_fraction * nrows)))
    k = min(k, nrows)
    if k >= nrows:
        return np.arange(nrows, dtype=np.int64)
    rng = np.random.default_rng(opts.seed)
    return np.sort(rng.choice(nrows, size=k, replace=False)).astype(np.int64)


def _dense_keys(values) -> np.ndarray:
    ids, _ = kernels.encode_array(np.asarray(values, dtype=np.int64))
    return ids


def classify(input_, opts: MorphOptions | None = None) -> list[ColumnStats]:
    """Column statistics: sampled for dense inputs, exact (from dictionaries)
    for compressed inputs."""
    opts = opts or MorphOptions()
    if isinstance(input_, CompressedMatrix):
        return _classify_compressed(input_, opts)
    return _classify_dense(np.asarray(input_, dtype=np.float64), opts)


def _classify_dense(matrix: np.ndarray, opts: MorphOptions) -> list[ColumnStats]:
    nrows, ncols = matrix.shape
    rows = _sample_rows(nrows, opts)
    out = []
    for j in range(ncols):
        col = matrix[rows, j]
        ids, uniques = kernels.encode_array(col)
        counts = np.bincount(ids, minlength=len(uniques))
        dominant = counts.max() / len(rows) if len(rows) else 1.0
        out.append(
            ColumnStats(
                cols=(j,),
                d=max(1, len(uniques)),
                dominant=float(dominant),
                all_zero=not np.any(matrix[:, j]),
                nrows=nrows,
                sample_keys=ids,
                exact=len(rows) == nrows,
            )
        )
    return out


def _classify_compressed(cm: CompressedMatrix, opts: MorphOptions) -> list[ColumnStats]:
    rows = _sample_rows(cm.nrows, opts)
    out = []
    for g in cm.groups:
        cols = tuple(int(c) for c in col_indices(g.cols))
        if isinstance(g, DDCGroup):
            ids = g.map.ids()
            d = g.dictionary.nrows
            counts = np.bincount(ids, minlength=d)
            dominant = counts.max() / cm.nrows if cm.nrows else 1.0
            if isinstance(g.dictionary, IdentityDict):
                all_zero = d == 0
            else:
                all_zero = not np.any(g.dictionary.array()[np.nonzero(counts)[0]])
            keys = ids[rows]
        elif isinstance(g, SDCGroup):
            d = g.dictionary.nrows + 1
            dominant = 1.0 - len(g.exc_rows) / cm.nrows if cm.nrows else 1.0
            all_zero = not np.any(g.default) and not np.any(g.dictionary.array())
            full = np.full(cm.nrows, g.dictionary.nrows, dtype=np.int64)
            if len(g.exc_rows):
                full[g.exc_rows] = g.exc_map.ids()
            keys = full[rows]
        elif isinstance(g, ConstGroup):
            d, dominant, all_zero = 1, 1.0, not np.any(g.values)
            keys = np.zeros(len(rows), dtype=np.int64)
        elif isinstance(g, EmptyGroup):
            d, dominant, all_zero = 1, 1.0, True
            keys = np.zeros(len(rows), dtype=np.int64)
        elif isinstance(g, UncompressedGroup):
            ids, uniq = kernels.encode_rows(g.block[rows])
            d = max(1, len(uniq))
            counts = np.bincount(ids, minlength=d)
            dominant = counts.max() / len(rows) if len(rows) else 1.0
            all_zero = not np.any(g.block)
            keys = ids
        else:
            raise TypeError(type(g))
        out.append(
            ColumnStats(
                cols=cols,
                d=max(1, d),
                dominant=float(dominant),
                all_zero=bool(all_zero),
                nrows=cm.nrows,
                sample_keys=_dense_keys(keys),
                exact=not isinstance(g, UncompressedGroup),
                group=g,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Grouping (greedy co-coding)
# ---------------------------------------------------------------------------

@dataclass
class _Cluster:
    members: list
    cols: list
    d: int
    dominant: float
    all_zero: bool
    keys: np.ndarray
    nkeys: int


def choose_encoding(d: int, dominant: float, all_zero: bool, nrows: int, ncols: int,
                    opts: MorphOptions) -> str:
    if all_zero:
        return "EMPTY"
    if d == 1:
        return "CONST"
    if dominant > opts.sdc_threshold:
        return "SDC"
    if d <= MapWidth.W4B.capacity and (nrows == 0 or d / nrows <= opts.max_dict_ratio):
        return "DDC"
    return "UNCOMPRESSED"


def _encoding_bytes(enc: str, d: int, dominant: float, nrows: int, ncols: int) -> float:
    overhead = 28.0
    if enc == "EMPTY":
        return overhead
    if enc == "CONST":
        return overhead + 8 * ncols
    if enc == "SDC":
        exc = (1.0 - dominant) * nrows
        return overhead + 8 * ncols + exc * (4 + _bpr(d)) + 8.0 * d * ncols
    if enc == "DDC":
        return overhead + _bpr(d) * nrows + 8.0 * d * ncols
    return overhead + 8.0 * nrows * ncols


def _bpr(d: int) -> float:
    width = map_width_for(min(max(d, 1), MapWidth.W4B.capacity))
    return {MapWidth.W0: 0.0, MapWidth.W1BIT: 0.125}.get(width, width.bits / 8)


def _cluster_cost(c: _Cluster, nrows: int, workload: WorkloadVector, opts: MorphOptions) -> float:
    enc = choose_encoding(c.d, c.dominant, c.all_zero, nrows, len(c.cols), opts)
    size = _encoding_bytes(enc, c.d, c.dominant, nrows, len(c.cols))
    # Per-operation bytes touched: map once plus the dictionary.
    map_bytes = _bpr(c.d) * nrows if enc in ("DDC", "SDC") else 0.0
    dict_bytes = 8.0 * c.d * len(c.cols)
    if enc == "UNCOMPRESSED":
        map_bytes = 8.0 * nrows * len(c.cols)
        dict_bytes = 0.0
    heavy = workload.lmm + workload.rmm + workload.scan + workload.decompress_heavy
    return size + heavy * (map_bytes + dict_bytes) + workload.scalar * dict_bytes


def _merge_clusters(a: _Cluster, b: _Cluster, d_ij: int, keys: np.ndarray, nkeys: int) -> _Cluster:
    return _Cluster(
        members=a.members + b.members,
        cols=a.cols + b.cols,
        d=d_ij,
        dominant=min(a.dominant, b.dominant),
        all_zero=a.all_zero and b.all_zero,
        keys=keys,
        nkeys=nkeys,
    )


def pair_estimate(a: _Cluster, b: _Cluster) -> tuple[CoCodeEstimate, np.ndarray, int]:
    """Distinct-pair estimate from the shared row sample."""
    combined = a.keys + b.keys * (int(a.keys.max()) + 1 if len(a.keys) else 1)
    keys = _dense_keys(combined)
    nkeys = int(keys.max()) + 1 if len(keys) else 1
    denom = max(a.nkeys + b.nkeys, 1)
    ratio = 2.0 * nkeys / denom
    d_ij = int(round(ratio * (a.d + b.d) / 2.0))
    d_ij = max(max(a.d, b.d), min(d_ij, a.d * b.d))
    return CoCodeEstimate(0, 0, d_ij, ratio), keys, nkeys


def group(stats: list[ColumnStats], workload: WorkloadVector | None = None,
          opts: MorphOptions | None = None) -> MorphPlan:
    """Greedy pairwise co-coding: repeatedly merge the smallest-ratio pair
    while the workload-scaled size estimate keeps decreasing."""
    opts = opts or MorphOptions()
    workload = workload or WorkloadVector()
    if not stats:
        return MorphPlan([])
    nrows = stats[0].nrows
    clusters = [
        _Cluster([i], list(s.cols), s.d, s.dominant, s.all_zero, s.sample_keys,
                 int(s.sample_keys.max()) + 1 if len(s.sample_keys) else 1)
        for i, s in enumerate(stats)
    ]

    allowed: set | None = None
    m = len(clusters)
    if m > opts.pair_cap_columns and not opts.pair_cap_off:
        scored = []
        probe = min(len(stats[0].sample_keys), 256)
        for i in range(m):
            for j in range(i + 1, m):
                a, b = clusters[i], clusters[j]
                ka, kb = a.keys[:probe], b.keys[:probe]
                u = len(np.unique(ka + kb * (int(ka.max()) + 1 if len(ka) else 1)))
                c = 2.0 * u / max(a.nkeys + b.nkeys, 1)
                scored.append((c, i, j))
        scored.sort()
        allowed = {(i, j) for _, i, j in scored[: 8 * m]}

    member_sets = [set(c.members) for c in clusters]

    def pair_allowed(ci: int, cj: int) -> bool:
        if allowed is None:
            return True
        for i in member_sets[ci]:
            for j in member_sets[cj]:
                if (min(i, j), max(i, j)) in allowed:
                    return True
        return False

    while len(clusters) > 1:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if not pair_allowed(i, j):
                    continue
                a, b = clusters[i], clusters[j]
                est, keys, nkeys = pair_estimate(a, b)
                merged = _merge_clusters(a, b, est.d_ij, keys, nkeys)
                delta = _cluster_cost(merged, nrows, workload, opts) - (
                    _cluster_cost(a, nrows, workload, opts) + _cluster_cost(b, nrows, workload, opts)
                )
                if delta < 0:
                    key = (est.ratio, min(a.cols), min(b.cols))
                    if best is None or key < best[0]:
                        best = (key, i, j, merged)
        if best is None:
            break
        _, i, j, merged = best
        member_sets[i] |= member_sets[j]
        member_sets.pop(j)
        clusters[i] = merged
        clusters.pop(j)

    # Fold runs of uncompressed clusters into a single block group.
    plan_groups: list[PlanGroup] = []
    pending_unc: _Cluster | None = None
    ordered = sorted(clusters, key=lambda c: min(c.cols))
    for c in ordered:
        enc = choose_encoding(c.d, c.dominant, c.all_zero, nrows, len(c.cols), opts)
        if enc == "UNCOMPRESSED":
            if pending_unc is None:
                pending_unc = c
            else:
                pending_unc = _Cluster(pending_unc.members + c.members,
                                       pending_unc.cols + c.cols,
                                       pending_unc.d * c.d, 0.0, False,
                                       pending_unc.keys, pending_unc.nkeys)
            continue
        plan_groups.append(PlanGroup(tuple(sorted(c.cols)), enc, tuple(sorted(c.members))))
    if pending_unc is not None:
        plan_groups.append(PlanGroup(tuple(sorted(pending_unc.cols)), "UNCOMPRESSED",
                                     tuple(sorted(pending_unc.members))))
    plan_groups.sort(key=lambda g: g.columns[0])
    return MorphPlan(plan_groups)


# ---------------------------------------------------------------------------
# Combine kernels
# ---------------------------------------------------------------------------

def combine_ddc(a: DDCGroup, b: DDCGroup) -> DDCGroup:
    """Single-pass DDC combine: zip maps, assign dense output ids in
    first-co-occurrence order, materialize only co-appearing tuples."""
    if a.map.nrows != b.map.nrows:
        raise PlanError(f"combine row mismatch: {a.map.nrows} vs {b.map.nrows}")
    d1 = a.dictionary.nrows
    keys = a.map.ids() + b.map.ids() * d1
    ids, uniq_keys = kernels.encode_array(keys)
    uniq_keys = np.asarray(uniq_keys, dtype=np.int64)
    rows1 = uniq_keys % d1
    rows2 = uniq_keys // d1
    dictionary = DenseDict(np.hstack([a.dictionary.array()[rows1], b.dictionary.array()[rows2]]))
    d_r = len(uniq_keys)
    cols = normalize_cols(np.concatenate([col_indices(a.cols), col_indices(b.cols)]))
    return DDCGroup(cols, MapVector.from_ids(ids, map_width_for(max(d_r, 1))), dictionary)


def _widen_with_constant(g: ColumnGroup, values: np.ndarray, cols_after, nrows: int,
                         prepend: bool) -> ColumnGroup:
    """Attach constant columns (zeros or a tuple) to an existing group."""
    values = np.asarray(values, dtype=np.float64).ravel()

    def widen(arr: np.ndarray) -> np.ndarray:
        tiled = np.tile(values, (arr.shape[0], 1))
        return np.hstack([tiled, arr]) if prepend else np.hstack([arr, tiled])

    if isinstance(g, DDCGroup):
        return DDCGroup(cols_after, g.map, DenseDict(widen(g.dictionary.array())), owns_map=False)
    if isinstance(g, SDCGroup):
        default = np.concatenate([values, g.default]) if prepend else np.concatenate([g.default, values])
        return SDCGroup(cols_after, default, g.exc_rows, g.exc_map,
                        DenseDict(widen(g.dictionary.array())))
    if isinstance(g, ConstGroup):
        tup = np.concatenate([values, g.values]) if prepend else np.concatenate([g.values, values])
        return ConstGroup(cols_after, tup)
    if isinstance(g, EmptyGroup):
        if not np.any(values):
            return EmptyGroup(cols_after)
        tup = np.concatenate([values, np.zeros(g.ncols)]) if prepend else np.concatenate([np.zeros(g.ncols), values])
        return ConstGroup(cols_after, tup)
    if isinstance(g, UncompressedGroup):
        tiled = np.tile(values, (g.block.shape[0], 1))
        block = np.hstack([tiled, g.block]) if prepend else np.hstack([g.block, tiled])
        return UncompressedGroup(cols_after, block)
    raise TypeError(type(g))


def sdc_to_ddc(g: SDCGroup, nrows: int) -> DDCGroup:
    base = g.dictionary.array()
    dictionary = DenseDict(np.vstack([base, g.default.reshape(1, -1)]))
    default_id = base.shape[0]
    ids = np.full(nrows, default_id, dtype=np.int64)
    if len(g.exc_rows):
        ids[g.exc_rows] = g.exc_map.ids()
    width = map_width_for(default_id + 1)
    return DDCGroup(g.cols, MapVector.from_ids(ids, width), dictionary)


def _encode_block_group(cols, block: np.ndarray, nrows: int, opts: MorphOptions) -> ColumnGroup:
    """Compress a dense block into the encoding its exact statistics call for."""
    if not np.any(block):
        return EmptyGroup(cols)
    ids, dict_rows = kernels.encode_rows(block)
    d = len(dict_rows)
    if d == 1:
        return ConstGroup(cols, dict_rows[0])
    if d > MapWidth.W4B.capacity or (nrows and d / nrows > opts.max_dict_ratio):
        return UncompressedGroup(cols, block)
    counts = np.bincount(ids, minlength=d)
    dominant = int(np.argmax(counts))
    if counts[dominant] / nrows > opts.sdc_threshold:
        return _ids_to_sdc(cols, ids, dict_rows, dominant)
    return DDCGroup(cols, MapVector.from_ids(ids, map_width_for(d)), DenseDict(dict_rows))


def _ids_to_sdc(cols, ids: np.ndarray, dict_rows: np.ndarray, dominant: int) -> SDCGroup:
    default = dict_rows[dominant]
    exc_rows = np.nonzero(ids != dominant)[0].astype(np.int64)
    remap = np.arange(len(dict_rows), dtype=np.int64)
    remap[dominant + 1 :] -= 1
    remap[dominant] = -1
    new_ids = remap[ids[exc_rows]]
    rest = np.delete(dict_rows, dominant, axis=0)
    width = map_width_for(max(len(rest), 1))
    return SDCGroup(cols, default, exc_rows, MapVector.from_ids(new_ids, width), DenseDict(rest))


def _fallback_combine(a: ColumnGroup, b: ColumnGroup, nrows: int, opts: MorphOptions) -> ColumnGroup:
    block = np.hstack([decompress_group(a, nrows), decompress_group(b, nrows)])
    cols = normalize_cols(np.concatenate([col_indices(a.cols), col_indices(b.cols)]))
    return _encode_block_group(cols, block, nrows, opts)


def combine_any(a: ColumnGroup, b: ColumnGroup, nrows: int,
                opts: MorphOptions | None = None) -> ColumnGroup:
    """Specialized combine dispatch; the dense fallback makes it total."""
    opts = opts or MorphOptions()
    cols = normalize_cols(np.concatenate([col_indices(a.cols), col_indices(b.cols)]))
    if isinstance(b, EmptyGroup):
        return _widen_with_constant(a, np.zeros(b.ncols), cols, nrows, prepend=False)
    if isinstance(a, EmptyGroup):
        return _widen_with_constant(b, np.zeros(a.ncols), cols, nrows, prepend=True)
    if isinstance(b, ConstGroup):
        return _widen_with_constant(a, b.values, cols, nrows, prepend=False)
    if isinstance(a, ConstGroup):
        return _widen_with_constant(b, a.values, cols, nrows, prepend=True)
    if isinstance(a, DDCGroup) and isinstance(b, DDCGroup):
        return combine_ddc(a, b)
    dense_enough = lambda g: len(g.exc_rows) / nrows >= 0.1 if nrows else False
    if isinstance(a, SDCGroup) and isinstance(b, DDCGroup) and dense_enough(a):
        return combine_ddc(sdc_to_ddc(a, nrows), b)
    if isinstance(a, DDCGroup) and isinstance(b, SDCGroup) and dense_enough(b):
        return combine_ddc(a, sdc_to_ddc(b, nrows))
    if isinstance(a, SDCGroup) and isinstance(b, SDCGroup) and dense_enough(a) and dense_enough(b):
        return combine_ddc(sdc_to_ddc(a, nrows), sdc_to_ddc(b, nrows))
    return _fallback_combine(a, b, nrows, opts)


# ---------------------------------------------------------------------------
# Encoding conversion
# ---------------------------------------------------------------------------

def _exact_group_stats(g: ColumnGroup, nrows: int):
    if isinstance(g, DDCGroup):
        ids = g.map.ids()
        d = g.dictionary.nrows
        counts = np.bincount(ids, minlength=d)
        dominant = counts.max() / nrows if nrows else 1.0
        if isinstance(g.dictionary, IdentityDict):
            zero = d == 0
        else:
            zero = not np.any(g.dictionary.array()[np.nonzero(counts)[0]])
        return d, float(dominant), zero
    if isinstance(g, SDCGroup):
        dominant = 1.0 - len(g.exc_rows) / nrows if nrows else 1.0
        zero = not np.any(g.default) and (not len(g.exc_rows) or not np.any(g.dictionary.array()))
        return g.dictionary.nrows + 1, float(dominant), zero
    if isinstance(g, ConstGroup):
        return 1, 1.0, not np.any(g.values)
    if isinstance(g, EmptyGroup):
        return 1, 1.0, True
    if isinstance(g, UncompressedGroup):
        ids, uniq = kernels.encode_rows(g.block)
        counts = np.bincount(ids, minlength=len(uniq))
        return max(1, len(uniq)), float(counts.max() / nrows if nrows else 1.0), not np.any(g.block)
    raise TypeError(type(g))


def morph_encoding(g: ColumnGroup, target: str, nrows: int,
                   opts: MorphOptions | None = None) -> ColumnGroup:
    """Re-encode a group, sharing dictionaries where possible."""
    opts = opts or MorphOptions()
    target = target.upper()
    if target not in ("DDC", "SDC", "CONST", "EMPTY", "UNCOMPRESSED"):
        raise PlanError(f"unknown target encoding {target!r}")
    if g.kind == target:
        if isinstance(g, DDCGroup):
            best = map_width_for(max(g.dictionary.nrows, 1))
            if best.value < g.map.width.value:
                return DDCGroup(g.cols, MapVector.from_ids(g.map.ids(), best), g.dictionary,
                                owns_dict=False)
        return g
    if target == "UNCOMPRESSED":
        return UncompressedGroup(g.cols, decompress_group(g, nrows))
    if isinstance(g, UncompressedGroup):
        built = _encode_block_group(g.cols, g.block, nrows, opts)
        if built.kind != target:
            ids, dict_rows = kernels.encode_rows(g.block)
            return _dict_coded_to(target, g.cols, ids, dict_rows, nrows, opts)
        return built
    if isinstance(g, EmptyGroup):
        if target == "CONST":
            return ConstGroup(g.cols, np.zeros(g.ncols))
        if target == "DDC":
            return DDCGroup(g.cols, MapVector.from_ids(np.zeros(nrows, np.int64), MapWidth.W0),
                            DenseDict(np.zeros((1, g.ncols))))
        raise PlanError(f"cannot morph EMPTY to {target}")
    if isinstance(g, ConstGroup):
        if target == "EMPTY":
            if np.any(g.values):
                raise PlanError("CONST group with nonzero tuple cannot become EMPTY")
            return EmptyGroup(g.cols)
        if target == "DDC":
            return DDCGroup(g.cols, MapVector.from_ids(np.zeros(nrows, np.int64), MapWidth.W0),
                            DenseDict(g.values.reshape(1, -1)))
        raise PlanError(f"cannot morph CONST to {target}")
    if isinstance(g, DDCGroup):
        ids = g.map.ids()
        dict_rows = g.dictionary.array()
        return _dict_coded_to(target, g.cols, ids, dict_rows, nrows, opts)
    if isinstance(g, SDCGroup):
        if target == "DDC":
            return sdc_to_ddc(g, nrows)
        if target == "CONST":
            if len(g.exc_rows):
                raise PlanError("SDC with exceptions cannot become CONST")
            return ConstGroup(g.cols, g.default)
        if target == "EMPTY":
            d, dom, zero = _exact_group_stats(g, nrows)
            if not zero:
                raise PlanError("nonzero SDC cannot become EMPTY")
            return EmptyGroup(g.cols)
        ddc = sdc_to_ddc(g, nrows)
        return _dict_coded_to(target, g.cols, ddc.map.ids(), ddc.dictionary.array(), nrows, opts)
    raise TypeError(type(g))


def _dict_coded_to(target: str, cols, ids: np.ndarray, dict_rows: np.ndarray, nrows: int,
                   opts: MorphOptions) -> ColumnGroup:
    d = len(dict_rows)
    counts = np.bincount(ids, minlength=d)
    if target == "CONST":
        used = np.nonzero(counts)[0]
        if len(used) > 1:
            raise PlanError(f"{len(used)} used tuples cannot become CONST")
        value = dict_rows[used[0]] if len(used) else np.zeros(dict_rows.shape[1])
        return ConstGroup(cols, value)
    if target == "EMPTY":
        if np.any(dict_rows[np.nonzero(counts)[0]]):
            raise PlanError("nonzero group cannot become EMPTY")
        return EmptyGroup(cols)
    if target == "SDC":
        dominant = int(np.argmax(counts))
        return _ids_to_sdc(cols, ids, dict_rows, dominant)
    if target == "DDC":
        return DDCGroup(cols, MapVector.from_ids(ids, map_width_for(max(d, 1))),
                        DenseDict(dict_rows))
    raise PlanError(f"unknown target {target!r}")


# ---------------------------------------------------------------------------
# Top-level morph
# ---------------------------------------------------------------------------

def morph(input_, workload: WorkloadVector | None = None,
          opts: MorphOptions | None = None) -> CompressedMatrix:
    """classify -> group -> combine/convert; dense inputs take the
    compression path, compressed inputs are retuned without decompression."""
    opts = opts or MorphOptions()
    workload = workload or WorkloadVector()
    stats = classify(input_, opts)
    plan = group(stats, workload, opts)
    if isinstance(input_, CompressedMatrix):
        return _execute_compressed(input_, stats, plan, opts)
    return _execute_dense(np.asarray(input_, dtype=np.float64), plan, opts)


def _execute_dense(matrix: np.ndarray, plan: MorphPlan, opts: MorphOptions) -> CompressedMatrix:
    nrows, ncols = matrix.shape
    groups = []
    for pg in plan.groups:
        cols = normalize_cols(np.asarray(pg.columns, dtype=np.int64))
        block = np.ascontiguousarray(matrix[:, np.asarray(pg.columns)])
        built = _encode_block_group(cols, block, nrows, opts)
        if built.kind != pg.encoding:
            try:
                built = morph_encoding(built, pg.encoding, nrows, opts)
            except PlanError:
                pass  # sampled stats were off; the exact encoding stands
        groups.append(built)
    return CompressedMatrix(nrows, ncols, groups)


def _execute_compressed(cm: CompressedMatrix, stats: list[ColumnStats], plan: MorphPlan,
                        opts: MorphOptions) -> CompressedMatrix:
    groups = []
    for pg in plan.groups:
        members = [stats[i].group for i in pg.members]
        members.sort(key=lambda g: int(col_indices(g.cols)[0]))
        merged = members[0]
        for nxt in members[1:]:
            merged = combine_any(merged, nxt, cm.nrows, opts)
        if merged.kind != pg.encoding:
            try:
                merged = morph_encoding(merged, pg.encoding, cm.nrows, opts)
            except PlanError:
                pass
        groups.append(merged)
    return CompressedMatrix(cm.nrows, cm.ncols, groups)
