"""Command-line front-end: compress, inspect, transform, morph, run, bench.

Exit codes: 0 ok, 1 validation, 2 I/O or format, 3 internal.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__, _kernels, cla, tio
from .cframe import CompressedFrame, compress_frame, decompress_frame, frame_memory_estimate
from .colgroup import CompressedMatrix, group_memory_size
from .errors import BwareError, FormatError, ManifestError, ValidationError
from .frame import Frame, read_csv
from .mapvec import MapWidth
from .morph import MorphOptions, morph
from .parallel import resolve_threads
from .planner import ExecOptions, execute, extract_workload, inject_morphs, parse_pipeline
from .transform import EncodePath, TransformSpec, output_size_model, transform_encode
from .cla import WorkloadVector


def _read_frame_input(path: str, threads, seed: int = 7):
    if path.endswith(".csv"):
        frame = read_csv(path)
        from .frame import apply_schema, detect_schema

        return apply_schema(frame, detect_schema(frame, seed=seed), threads=threads)
    obj = tio.read_tiled(path)
    if not isinstance(obj, CompressedFrame):
        raise ValidationError(f"{path} does not contain a frame")
    return obj


def _emit(report, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report, indent=2))
        return
    if isinstance(report, dict):
        for key, value in report.items():
            if isinstance(value, list):
                print(f"{key}:")
                for item in value:
                    print(f"  {item}")
            else:
                print(f"{key}: {value}")


def cmd_compress(args) -> int:
    threads = resolve_threads(args.threads)
    if args.input.endswith(".csv"):
        frame = read_csv(args.input)
        cf = compress_frame(frame, sample_fraction=args.sample_fraction,
                            max_dict_ratio=args.max_dict_ratio, seed=args.seed,
                            threads=threads)
    else:
        obj = tio.read_tiled(args.input)
        if not isinstance(obj, CompressedFrame):
            raise ValidationError(f"{args.input}: compress expects a CSV or frame input")
        cf = obj
    manifest = tio.write_tiled(cf, args.output, tile_rows=args.tile_rows,
                               separate_dict=not args.no_separate_dict, threads=threads)
    columns = []
    fallbacks = 0
    for name, col in zip(cf.names, cf.columns):
        if col.is_compressed:
            columns.append({
                "name": name, "vtype": col.vtype.value, "distinct": col.distinct,
                "width": col.map.width.name, "bytes": col.memory_bytes(),
            })
        else:
            fallbacks += 1
            columns.append({
                "name": name, "vtype": col.vtype.value, "distinct": col.distinct,
                "width": "raw", "bytes": col.memory_bytes(),
            })
    report = {
        "rows": cf.nrows,
        "columns": columns,
        "fallbacks": fallbacks,
        "memory_bytes": frame_memory_estimate(cf),
        "written_bytes": manifest.bytes_written,
        "partitions": len(manifest.partitions),
    }
    _emit(report, args.report == "json")
    return 0


def cmd_transform(args) -> int:
    frame = _read_frame_input(args.input, args.threads, args.seed)
    with open(args.spec, "r", encoding="utf-8") as fh:
        spec = TransformSpec.from_json(fh.read(), ncols=frame.ncols)
    path = args.path
    if path == "CF-CM" and isinstance(frame, Frame):
        frame = compress_frame(frame, seed=args.seed)
    result = transform_encode(frame, spec, path=path, seed=args.seed)
    matrix = result.matrix
    if isinstance(matrix, CompressedMatrix):
        actual = matrix.memory_bytes()
    elif hasattr(matrix, "nnz"):
        actual = matrix.data.nbytes + matrix.indices.nbytes + matrix.indptr.nbytes
    else:
        actual = matrix.nbytes
    distinct = [len(m.recode_values) if m.recode_values is not None else 1
                for m in result.meta.columns]
    predicted = output_size_model(spec, frame.nrows, distinct)
    if isinstance(matrix, CompressedMatrix):
        tio.write_tiled(matrix, args.output, threads=resolve_threads(args.threads))
    else:
        dense = cla.to_dense(matrix)
        tio.write_tiled(dense, args.output, threads=resolve_threads(args.threads))
    if args.meta:
        with open(args.meta, "w", encoding="utf-8") as fh:
            fh.write(result.meta.to_json())
    report = {
        "path": path,
        "out_cols": result.meta.out_cols,
        "predicted_bytes": {k: round(v, 1) for k, v in predicted.items()},
        "actual_bytes": actual,
    }
    _emit(report, args.report == "json")
    return 0


def cmd_morph(args) -> int:
    obj = tio.read_tiled(args.input)
    if isinstance(obj, CompressedFrame):
        raise ValidationError("morph expects a matrix input")
    workload = WorkloadVector()
    for part in (args.workload or "").split(","):
        part = part.strip()
        if not part:
            continue
        key, _, value = part.partition("=")
        if not hasattr(workload, key):
            raise ValidationError(f"unknown workload field {key!r}")
        setattr(workload, key, int(value))
    before = obj.memory_bytes() if isinstance(obj, CompressedMatrix) else obj.nbytes
    out = morph(obj, workload, MorphOptions(seed=args.seed))
    tio.write_tiled(out, args.output, threads=resolve_threads(args.threads))
    report = {
        "groups": len(out.groups),
        "encodings": [g.kind for g in out.groups],
        "bytes_before": before,
        "bytes_after": out.memory_bytes(),
    }
    _emit(report, args.report == "json")
    return 0


def cmd_inspect(args) -> int:
    stats = tio.ReadStats()
    obj = tio.read_tiled(args.input, stats=stats)
    report: dict = {"tiles": stats.tiles, "partitions": stats.partitions}
    if isinstance(obj, CompressedMatrix):
        report["kind"] = "cmatrix"
        report["shape"] = [obj.nrows, obj.ncols]
        report["groups"] = [
            {"kind": g.kind, "ncols": g.ncols, "bytes": group_memory_size(g, obj.nrows)}
            for g in obj.groups
        ]
    elif isinstance(obj, CompressedFrame):
        report["kind"] = "cframe"
        report["shape"] = [obj.nrows, obj.ncols]
        report["columns"] = [
            {"vtype": c.vtype.value, "distinct": c.distinct,
             "width": c.map.width.name if c.is_compressed else "raw"}
            for c in obj.columns
        ]
    else:
        report["kind"] = "matrix"
        report["shape"] = list(obj.shape)
    _emit(report, args.report == "json")
    return 0


def cmd_run(args) -> int:
    with open(args.pipeline, "r", encoding="utf-8") as fh:
        graph = parse_pipeline(fh.read())
    opts = ExecOptions(threads=resolve_threads(args.threads), seed=args.seed)
    if args.compare:
        base = execute(graph, opts, inject=False)
        injected = execute(graph, opts, inject=True)
        ok = len(base.trained) == len(injected.trained)
        if ok:
            for a, b in zip(base.trained, injected.trained):
                scale = max(float(np.max(np.abs(a))), 1e-12)
                if np.max(np.abs(a - b)) / scale > 1e-8:
                    ok = False
                    break
        report = {
            "models": len(base.trained),
            "match": ok,
            "bytes_touched_plain": base.bytes_touched,
            "bytes_touched_injected": injected.bytes_touched,
        }
        _emit(report, args.report == "json")
        metrics = injected.metrics
        if not ok:
            return 1
    else:
        result = execute(graph, opts, inject=not args.no_inject)
        metrics = result.metrics
        report = {
            "models": len(result.trained),
            "bytes_touched": result.bytes_touched,
            "nodes_run": len(result.metrics),
        }
        _emit(report, args.report == "json")
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            for m in metrics:
                fh.write(json.dumps(m) + "\n")
    else:
        for m in metrics:
            print(json.dumps(m))
    return 0


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------

def _bench_table(rows: list[dict]) -> None:
    if not rows:
        return
    keys = list(rows[0])
    widths = {k: max(len(str(k)), max(len(str(r.get(k, ""))) for r in rows)) for k in keys}
    print("  ".join(str(k).ljust(widths[k]) for k in keys))
    for r in rows:
        print("  ".join(str(r.get(k, "")).ljust(widths[k]) for k in keys))


def _time(fn, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(rows: int, seed: int) -> list[dict]:
    """Compare the compiled kernel backend against the pure fallback."""
    backends = _kernels.available_backends()
    rng = np.random.default_rng(seed)
    values = rng.integers(0, 500, size=rows).astype(np.float64)
    strings = np.empty(rows, dtype=object)
    strings[:] = [f"v{int(v) % 1000}" for v in values]
    dense = rng.normal(size=(8, rows))
    ids = rng.integers(0, 256, size=rows).astype(np.int64)
    block = rng.integers(0, 64, size=(rows, 2)).astype(np.float64)
    out = []
    for case, make in [
        ("encode_f64", lambda mod: lambda: mod.encode_array(values)),
        ("encode_str", lambda mod: lambda: mod.encode_array(strings)),
        ("encode_rows", lambda mod: lambda: mod.encode_rows(block)),
        ("update_rows", lambda mod: lambda: mod.update_rows(block, {})),
        ("preaggregate", lambda mod: lambda: mod.preaggregate(dense, ids, 256)),
        ("fnv_mod", lambda mod: lambda: mod.fnv1a64_mod([s.encode() for s in strings[:20000]], 64)),
    ]:
        row = {"kernel": case, "rows": rows}
        for name, mod in backends.items():
            row[f"{name}_ms"] = round(_time(make(mod)) * 1000, 2)
        if "compiled" in backends and row.get("pure_ms"):
            row["speedup"] = round(row["pure_ms"] / max(row["compiled_ms"], 1e-6), 2)
        out.append(row)
    return out


def bench_sizes(rows: int, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    out = []
    for d in (2, 256, 10_000):
        ids = rng.integers(0, d, size=rows)
        strings = np.empty(rows, dtype=object)
        strings[:] = [f"cat{v}" for v in ids]
        frame = Frame.from_strings([[str(v) for v in strings]])
        cf = compress_frame(frame)
        raw = sum(c.payload_bytes() for c in decompress_frame(cf).columns)
        out.append({
            "distinct": d,
            "rows": rows,
            "raw_bytes": raw,
            "compressed_bytes": frame_memory_estimate(cf),
            "ratio": round(raw / max(frame_memory_estimate(cf), 1), 2),
        })
    return out


def bench_paths(rows: int, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    d = 200
    ids = rng.integers(0, d, size=rows)
    frame = Frame.from_strings([[f"v{v}" for v in ids]])
    spec = TransformSpec.from_json(json.dumps({"recode": [0], "dummy": [0]}), ncols=1)
    cf = compress_frame(frame)
    out = []
    for path, inp in [("F-M", frame), ("F-CM", frame), ("CF-CM", cf)]:
        elapsed = _time(lambda: transform_encode(inp, spec, path=path))
        result = transform_encode(inp, spec, path=path).matrix
        if isinstance(result, CompressedMatrix):
            size = result.memory_bytes()
        elif hasattr(result, "nnz"):
            size = result.data.nbytes + result.indices.nbytes + result.indptr.nbytes
        else:
            size = result.nbytes
        out.append({"path": path, "rows": rows, "ms": round(elapsed * 1000, 2), "bytes": size})
    return out


def bench_combine(rows: int, seed: int) -> list[dict]:
    from .colgroup import ColumnRange, DDCGroup, DenseDict
    from .mapvec import MapVector, map_width_for
    from .morph import combine_ddc

    rng = np.random.default_rng(seed)
    out = []
    for d in (16, 256):
        ids1 = rng.integers(0, d, size=rows)
        ids2 = ids1.copy()  # perfectly correlated
        ids3 = rng.integers(0, d, size=rows)
        w = map_width_for(d)
        g1 = DDCGroup(ColumnRange(0, 1), MapVector.from_ids(ids1, w), DenseDict(rng.normal(size=(d, 1))))
        g2 = DDCGroup(ColumnRange(1, 2), MapVector.from_ids(ids2, w), DenseDict(rng.normal(size=(d, 1))))
        g3 = DDCGroup(ColumnRange(1, 2), MapVector.from_ids(ids3, w), DenseDict(rng.normal(size=(d, 1))))
        correlated = combine_ddc(g1, g2)
        uncorrelated = combine_ddc(g1, g3)
        out.append({
            "distinct": d,
            "rows": rows,
            "ms": round(_time(lambda: combine_ddc(g1, g3)) * 1000, 2),
            "d_correlated": correlated.dictionary.nrows,
            "d_uncorrelated": uncorrelated.dictionary.nrows,
        })
    return out


def bench_update(rows: int, seed: int) -> list[dict]:
    from .colgroup import ColumnRange

    rng = np.random.default_rng(seed)
    out = []
    for blocks in (4, 16):
        scheme = tio.CompressionScheme(ColumnRange(0, 1))
        block_rows = rows // blocks
        elapsed = 0.0
        for b in range(blocks):
            data = rng.integers(b * 8, b * 8 + 64, size=(block_rows, 1)).astype(np.float64)
            t0 = time.perf_counter()
            tio.update_and_encode(scheme, data)
            elapsed += time.perf_counter() - t0
        out.append({
            "blocks": blocks,
            "rows": rows,
            "ms": round(elapsed * 1000, 2),
            "distinct": len(scheme.table),
            "two_pass": scheme.stats.two_pass,
        })
    return out


def bench_embed(rows: int, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    d, v = 1000, 32
    emb = rng.normal(size=(d, v))
    out = []
    for n in (rows // 100, rows // 10, rows):
        tokens = rng.integers(0, d, size=n)
        frame = Frame.from_strings([[str(t) for t in tokens]])
        cf = compress_frame(frame)
        spec = TransformSpec([_embed_dir(emb)])
        elapsed = _time(lambda: transform_encode(cf, spec, path="CF-CM"))
        out.append({"rows": n, "vocab": d, "dim": v, "ms": round(elapsed * 1000, 3)})
    return out


def _embed_dir(matrix):
    from .transform import EmbedDir

    return EmbedDir(matrix=matrix)


_SUITES = {
    "kernels": bench_kernels,
    "sizes": bench_sizes,
    "paths": bench_paths,
    "combine": bench_combine,
    "update": bench_update,
    "embed": bench_embed,
}


def cmd_bench(args) -> int:
    if args.suite not in _SUITES:
        raise ValidationError(f"unknown suite {args.suite!r}; choose from {sorted(_SUITES)}")
    rows = _SUITES[args.suite](args.rows, args.seed)
    if args.report == "json":
        print(json.dumps(rows, indent=2))
    else:
        print(f"suite={args.suite} backend={_kernels.BACKEND}")
        _bench_table(rows)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bware",
                                     description="Workload-aware compression for ML pre-processing")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--report", choices=("text", "json"), default="text")

    p = sub.add_parser("compress", help="compress a CSV or re-tile a frame")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--tile-rows", type=int, default=tio.DEFAULT_TILE_ROWS)
    p.add_argument("--sample-fraction", type=float, default=None)
    p.add_argument("--max-dict-ratio", type=float, default=0.5)
    p.add_argument("--no-separate-dict", action="store_true")
    common(p)
    p.set_defaults(fn=cmd_compress)

    p = sub.add_parser("transform", help="transform-encode a frame into a matrix")
    p.add_argument("input")
    p.add_argument("spec")
    p.add_argument("output")
    p.add_argument("--path", choices=[e.value for e in EncodePath], default="F-CM")
    p.add_argument("--meta", default=None, help="write the fitted metadata JSON here")
    common(p)
    p.set_defaults(fn=cmd_transform)

    p = sub.add_parser("morph", help="re-tune a stored matrix for a workload")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--workload", default="", help='e.g. "lmm=8,scan=2"')
    common(p)
    p.set_defaults(fn=cmd_morph)

    p = sub.add_parser("inspect", help="describe a tiled file")
    p.add_argument("input")
    common(p)
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("run", help="run a pipeline script")
    p.add_argument("pipeline")
    p.add_argument("--no-inject", action="store_true")
    p.add_argument("--compare", action="store_true",
                   help="run with and without injection and diff the results")
    p.add_argument("--metrics", default=None, help="write JSONL metrics here")
    common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("bench", help="run a synthetic benchmark suite")
    p.add_argument("suite")
    p.add_argument("--rows", type=int, default=100_000)
    common(p)
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, FormatError, ManifestError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except BwareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
