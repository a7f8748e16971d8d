"""Small pipeline DSL plus the optimizer that extracts per-intermediate
workload vectors and injects morph/compress steps, and the interpreter
that runs the graph over frames, matrices, and their compressed forms.

Script syntax (one call per statement, loops over literal int lists):

    F = read("train.csv")
    Y = read("y.csv")
    for t in [5, 10]:
        M = transform_encode(F, "spec.json", bins=t)
        B = train_lm_cg(M, Y, 20, 0.001)
    write(B, "out.bwt")
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from . import cla, tio
from .cframe import CompressedFrame, compress_frame, decompress_frame, frame_memory_estimate
from .cla import CompressedMatrix, SelectionMatrix, WorkloadVector
from .errors import PipelineError, ValidationError
from .frame import Frame, apply_schema, detect_schema, read_csv
from .morph import MorphOptions, morph
from .transform import BinDir, HashDir, TransformSpec, transform_encode

# Injection threshold: estimated saved bytes-touched must beat twice the
# estimated morph cost (about two full passes over the data).
BENEFIT_FRACTION = 0.875
MORPH_COST_PASSES = 2
HYSTERESIS = 2
DEFAULT_TRIP = 10

OPS = {
    "read", "transform_encode", "scalar", "cbind", "lmm", "selection_mm",
    "slice", "train_lm_cg", "write", "morph", "alias",
}

_INT_PRODUCING = {"floor", "ceil", "round", "sign", "eq", "ne", "lt", "le", "gt", "ge"}

_SCALAR_OPS = {
    "square": lambda x: np.square(x),
    "sqrt": np.sqrt,
    "log": np.log,
    "log1p": np.log1p,
    "abs": np.abs,
    "floor": np.floor,
    "ceil": np.ceil,
    "round": np.round,
    "sign": np.sign,
}

_SCALAR_BINARY = {
    "pow": lambda x, c: np.power(x, c),
    "add": lambda x, c: x + c,
    "mul": lambda x, c: x * c,
    "eq": lambda x, c: (x == c).astype(np.float64),
    "ne": lambda x, c: (x != c).astype(np.float64),
    "lt": lambda x, c: (x < c).astype(np.float64),
    "le": lambda x, c: (x <= c).astype(np.float64),
    "gt": lambda x, c: (x > c).astype(np.float64),
    "ge": lambda x, c: (x >= c).astype(np.float64),
}


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass
class Call:
    op: str
    args: list  # ("str", s) | ("num", x) | ("var", name)
    kwargs: dict
    line: int


@dataclass
class Assign:
    target: str | None
    call: Call
    node_id: int
    line: int
    workload: WorkloadVector | None = None  # set on injected morph nodes


@dataclass
class Loop:
    var: str
    values: list[int]
    body: list
    parallel: bool
    line: int


@dataclass
class PipelineGraph:
    body: list
    nodes: dict = field(default_factory=dict)

    def all_assigns(self):
        out = []

        def walk(body, path):
            for st in body:
                if isinstance(st, Assign):
                    out.append((st, path))
                else:
                    walk(st.body, path + (st,))

        walk(self.body, ())
        return out


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_CALL_RE = re.compile(r"^(?:(?P<target>[A-Za-z_]\w*)\s*=\s*)?(?P<op>[A-Za-z_]\w*)\((?P<args>.*)\)$")
_FOR_RE = re.compile(r"^(?P<par>parfor|for)\s+(?P<var>[A-Za-z_]\w*)\s+in\s+\[(?P<vals>[^\]]*)\]\s*:$")
_NUM_RE = re.compile(r"^-?\d+(\.\d+)?([eE][+-]?\d+)?$")


def _split_args(raw: str, line: int) -> list[str]:
    parts = []
    depth = 0
    in_str = False
    cur = ""
    for ch in raw:
        if in_str:
            cur += ch
            if ch == '"':
                in_str = False
        elif ch == '"':
            cur += ch
            in_str = True
        elif ch == "," and depth == 0:
            parts.append(cur.strip())
            cur = ""
        else:
            if ch in "([":
                depth += 1
            elif ch in ")]":
                depth -= 1
            cur += ch
    if in_str:
        raise PipelineError(f"line {line}: unterminated string")
    if cur.strip():
        parts.append(cur.strip())
    return parts


def _parse_value(tok: str, line: int):
    if tok.startswith('"') and tok.endswith('"') and len(tok) >= 2:
        return ("str", tok[1:-1])
    if _NUM_RE.match(tok):
        return ("num", float(tok) if ("." in tok or "e" in tok or "E" in tok) else int(tok))
    if re.match(r"^[A-Za-z_]\w*$", tok):
        return ("var", tok)
    raise PipelineError(f"line {line}: cannot parse argument {tok!r}")


def parse_pipeline(text: str) -> PipelineGraph:
    raw_lines = text.splitlines()
    lines = []
    for i, raw in enumerate(raw_lines, start=1):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        if "\t" in raw[: len(raw) - len(raw.lstrip())]:
            raise PipelineError(f"line {i}: tabs are not allowed in indentation")
        indent = len(stripped) - len(stripped.lstrip())
        lines.append((i, indent, stripped.strip()))

    graph = PipelineGraph([])
    counter = [0]
    defined: set[str] = set()

    def parse_block(pos: int, indent: int, loop_vars: set) -> tuple[list, int]:
        stmts = []
        while pos < len(lines):
            lineno, ind, content = lines[pos]
            if ind < indent:
                break
            if ind > indent:
                raise PipelineError(f"line {lineno}: unexpected indentation")
            m = _FOR_RE.match(content)
            if m:
                vals = []
                for tok in m.group("vals").split(","):
                    tok = tok.strip()
                    if not tok:
                        continue
                    if not re.match(r"^-?\d+$", tok):
                        raise PipelineError(f"line {lineno}: loop values must be integer literals, got {tok!r}")
                    vals.append(int(tok))
                if not vals:
                    raise PipelineError(f"line {lineno}: empty loop range")
                var = m.group("var")
                body_indent = None
                if pos + 1 < len(lines) and lines[pos + 1][1] > ind:
                    body_indent = lines[pos + 1][1]
                if body_indent is None:
                    raise PipelineError(f"line {lineno}: loop has no body")
                body, nxt = parse_block(pos + 1, body_indent, loop_vars | {var})
                stmts.append(Loop(var, vals, body, m.group("par") == "parfor", lineno))
                pos = nxt
                continue
            alias = re.match(r"^([A-Za-z_]\w*)\s*=\s*([A-Za-z_]\w*)$", content)
            if alias:
                src = alias.group(2)
                if src not in defined and src not in loop_vars:
                    raise PipelineError(f"line {lineno}: use of undefined variable {src!r}")
                call = Call("alias", [("var", src)], {}, lineno)
                node = Assign(alias.group(1), call, counter[0], lineno)
                counter[0] += 1
                graph.nodes[node.node_id] = node
                defined.add(node.target)
                stmts.append(node)
                pos += 1
                continue
            m = _CALL_RE.match(content)
            if not m:
                raise PipelineError(f"line {lineno}: cannot parse statement {content!r}")
            op = m.group("op")
            if op not in OPS:
                raise PipelineError(f"line {lineno}: unknown operation {op!r}")
            args = []
            kwargs = {}
            for tok in _split_args(m.group("args"), lineno):
                kv = re.match(r"^([A-Za-z_]\w*)\s*=\s*(.+)$", tok)
                if kv and not (tok.startswith('"')):
                    kwargs[kv.group(1)] = _parse_value(kv.group(2).strip(), lineno)
                else:
                    args.append(_parse_value(tok, lineno))
            for kind, val in list(args) + list(kwargs.values()):
                if kind == "var" and val not in defined and val not in loop_vars:
                    raise PipelineError(f"line {lineno}: use of undefined variable {val!r}")
            _check_arity(op, args, kwargs, lineno)
            call = Call(op, args, kwargs, lineno)
            node = Assign(m.group("target"), call, counter[0], lineno)
            counter[0] += 1
            graph.nodes[node.node_id] = node
            if node.target:
                defined.add(node.target)
            stmts.append(node)
            pos += 1
        return stmts, pos

    graph.body, end = parse_block(0, lines[0][1] if lines else 0, set())
    if end != len(lines):
        raise PipelineError(f"line {lines[end][0]}: unexpected dedent")
    return graph


_ARITY = {
    "alias": (1, 1),
    "read": (1, 1),
    "transform_encode": (2, 2),
    "scalar": (2, 3),
    "cbind": (2, 8),
    "lmm": (2, 2),
    "selection_mm": (2, 3),
    "slice": (3, 3),
    "train_lm_cg": (2, 4),
    "write": (2, 2),
    "morph": (1, 1),
}


def _check_arity(op: str, args, kwargs, line: int) -> None:
    lo, hi = _ARITY[op]
    if not lo <= len(args) <= hi:
        raise PipelineError(f"line {line}: {op} takes {lo}..{hi} arguments, got {len(args)}")


# ---------------------------------------------------------------------------
# Workload extraction
# ---------------------------------------------------------------------------

def _node_vector(node: Assign) -> WorkloadVector:
    op = node.call.op
    v = WorkloadVector()
    if op == "lmm":
        v.lmm = 1
    elif op == "train_lm_cg":
        iters = DEFAULT_TRIP
        if len(node.call.args) >= 3 and node.call.args[2][0] == "num":
            iters = int(node.call.args[2][1])
        v.lmm = iters
    elif op == "scalar":
        v.scalar = 1
    elif op in ("cbind", "slice", "selection_mm", "write", "transform_encode"):
        v.scan = 1
    return v


def _is_candidate(node: Assign) -> bool:
    op = node.call.op
    if op in ("read", "transform_encode"):
        return True
    if op == "scalar" and len(node.call.args) >= 2 and node.call.args[1][0] == "str":
        return node.call.args[1][1] in _INT_PRODUCING
    return False


def extract_workload(graph: PipelineGraph) -> dict[int, WorkloadVector]:
    """Per-candidate counts of downstream data-dependent ops, weighted by
    loop trip counts. Purely syntactic."""
    entries = graph.all_assigns()
    order = {st.node_id: i for i, (st, _) in enumerate(entries)}
    paths = {st.node_id: path for st, path in entries}

    # def-use edges; a def reaches textually later uses, plus loop-carried ones.
    users: dict[int, list[int]] = {st.node_id: [] for st, _ in entries}
    defs: dict[str, list[int]] = {}
    for st, _ in entries:
        if st.target:
            defs.setdefault(st.target, []).append(st.node_id)
    for st, path in entries:
        used = [v for kind, v in st.call.args if kind == "var"]
        used += [v for kind, v in st.call.kwargs.values() if kind == "var"]
        for var in used:
            for d in defs.get(var, []):
                if d == st.node_id and not path:
                    continue
                shared_loop = {id(l) for l in paths[d]} & {id(l) for l in path}
                if order[d] < order[st.node_id] or shared_loop:
                    users[d].append(st.node_id)

    vectors: dict[int, WorkloadVector] = {}
    for st, path in entries:
        if not _is_candidate(st) or not st.target:
            continue
        seen = set()
        frontier = [st.node_id]
        reachable = []
        while frontier:
            cur = frontier.pop()
            for u in users.get(cur, []):
                if u not in seen:
                    seen.add(u)
                    reachable.append(u)
                    frontier.append(u)
        total = WorkloadVector()
        for u in reachable:
            upath = paths[u]
            shared = 0
            for a, b in zip(path, upath):
                if a is b:
                    shared += 1
                else:
                    break
            weight = 1
            for loop in upath[shared:]:
                weight *= len(loop.values)
            total.add(_node_vector(graph.nodes[u]).scaled(weight))
        vectors[st.node_id] = total
    return vectors


def inject_morphs(graph: PipelineGraph, vectors: dict[int, WorkloadVector]) -> PipelineGraph:
    """Insert a MORPH node after each candidate whose workload clears the
    benefit threshold; never changes program semantics."""
    counter = [max(graph.nodes) + 1 if graph.nodes else 0]
    new_graph = PipelineGraph([])

    def should_inject(node: Assign) -> bool:
        if node.node_id not in vectors or not node.target:
            return False
        if node.call.op == "read" and node.call.args and node.call.args[0][0] == "str" \
                and node.call.args[0][1].endswith(".bwt"):
            return False  # compressed read: already a CRead, nothing to add
        score = vectors[node.node_id].total()
        return score * BENEFIT_FRACTION > HYSTERESIS * MORPH_COST_PASSES

    def rewrite(body: list) -> list:
        out = []
        for st in body:
            if isinstance(st, Loop):
                out.append(Loop(st.var, st.values, rewrite(st.body), st.parallel, st.line))
                continue
            out.append(st)
            new_graph.nodes[st.node_id] = st
            if should_inject(st):
                call = Call("morph", [("var", st.target)], {}, st.line)
                node = Assign(st.target, call, counter[0], st.line,
                              workload=vectors[st.node_id])
                counter[0] += 1
                new_graph.nodes[node.node_id] = node
                out.append(node)
        return out

    new_graph.body = rewrite(graph.body)
    return new_graph


# ---------------------------------------------------------------------------
# Conjugate-gradient ridge regression
# ---------------------------------------------------------------------------

def train_lm_cg(X, y, maxiter: int | None = None, reg: float = 0.0) -> np.ndarray:
    """CG on the normal equations (X'X + reg I) b = X'y using only
    decompress-free kernels on compressed inputs."""
    y = np.asarray(y, dtype=np.float64).ravel()
    compressed = isinstance(X, CompressedMatrix)
    is_sparse = sparse.issparse(X)
    if not compressed and not is_sparse:
        X = np.asarray(X, dtype=np.float64)
        if not np.all(np.isfinite(X)):
            raise ValidationError("train_lm_cg: non-finite values in X")
    if not np.all(np.isfinite(y)):
        raise ValidationError("train_lm_cg: non-finite values in y")
    nrows = X.nrows if compressed else X.shape[0]
    ncols = X.ncols if compressed else X.shape[1]
    if nrows != len(y):
        raise ValidationError(f"train_lm_cg: {nrows} rows vs {len(y)} labels")
    if maxiter is None:
        maxiter = min(ncols, 1000)

    def xt_times(v: np.ndarray) -> np.ndarray:
        if compressed:
            return cla.left_mm(v.reshape(1, -1), X).ravel()
        return np.asarray(X.T @ v).ravel()

    def x_times(v: np.ndarray) -> np.ndarray:
        if compressed:
            return cla.right_mv(X, v)
        return np.asarray(X @ v).ravel()

    b = xt_times(y)
    beta = np.zeros(ncols)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    for _ in range(int(maxiter)):
        if rr == 0.0:
            break
        ap = xt_times(x_times(p)) + reg * p
        denom = float(p @ ap)
        if denom == 0.0:
            break
        alpha = rr / denom
        beta += alpha * p
        r -= alpha * ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return beta


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

@dataclass
class ExecOptions:
    threads: int | None = 1
    seed: int = 7
    no_inject: bool = False


@dataclass
class ExecResult:
    env: dict
    trained: list
    metrics: list
    bytes_touched: float


def _estimate_bytes(x) -> float:
    if isinstance(x, CompressedMatrix):
        return float(x.memory_bytes())
    if isinstance(x, CompressedFrame):
        return float(frame_memory_estimate(x))
    if isinstance(x, Frame):
        return float(sum(c.payload_bytes() for c in x.columns))
    if sparse.issparse(x):
        return float(x.data.nbytes + x.indices.nbytes + x.indptr.nbytes)
    if isinstance(x, np.ndarray):
        return float(x.nbytes)
    return 8.0


def _coerce_label_vector(y) -> np.ndarray:
    if isinstance(y, CompressedFrame):
        y = decompress_frame(y)
    if isinstance(y, Frame):
        cols = [np.asarray(c.data, dtype=np.float64) for c in y.columns]
        return np.column_stack(cols).ravel() if cols else np.empty(0)
    if isinstance(y, CompressedMatrix):
        return cla.decompress(y).ravel()
    if sparse.issparse(y):
        return np.asarray(y.todense()).ravel()
    return np.asarray(y, dtype=np.float64).ravel()


class _Interpreter:
    def __init__(self, graph: PipelineGraph, opts: ExecOptions):
        self.graph = graph
        self.opts = opts
        self.metrics: list[dict] = []
        self.trained: list = []
        self.spec_cache: dict = {}
        self.bytes_touched = 0.0

    def run(self) -> ExecResult:
        env: dict = {}
        self._run_body(self.graph.body, env)
        return ExecResult(env, self.trained, self.metrics, self.bytes_touched)

    def _run_body(self, body: list, env: dict) -> None:
        for st in body:
            if isinstance(st, Loop):
                for value in st.values:
                    env[st.var] = value
                    self._run_body(st.body, env)
            else:
                self._run_node(st, env)

    def _resolve(self, env: dict, arg):
        kind, val = arg
        if kind == "var":
            if val not in env:
                raise PipelineError(f"node {val!r}: undefined at runtime")
            return env[val]
        return val

    def _run_node(self, node: Assign, env: dict) -> None:
        args = [self._resolve(env, a) for a in node.call.args]
        kwargs = {k: self._resolve(env, v) for k, v in node.call.kwargs.items()}
        bytes_in = sum(_estimate_bytes(a) for a in args if not isinstance(a, (int, float, str)))
        start = time.monotonic()
        try:
            result = self._eval(node, args, kwargs)
        except (PipelineError, ValidationError):
            raise
        except Exception as exc:
            raise PipelineError(f"node {node.node_id} ({node.call.op}, line {node.line}): {exc}") from exc
        ms = (time.monotonic() - start) * 1000
        bytes_out = _estimate_bytes(result) if result is not None else 0.0
        groups = len(result.groups) if isinstance(result, CompressedMatrix) else 0
        self.metrics.append({
            "node": node.node_id,
            "op": node.call.op,
            "ms": round(ms, 3),
            "bytes_in": bytes_in,
            "bytes_out": bytes_out,
            "groups": groups,
        })
        self.bytes_touched += bytes_in
        if node.target:
            env[node.target] = result

    def _load_spec(self, path: str, bins) -> TransformSpec:
        key = (path, bins)
        if key in self.spec_cache:
            return self.spec_cache[key]
        with open(path, "r", encoding="utf-8") as fh:
            spec = TransformSpec.from_json(fh.read())
        if bins is not None:
            directives = [
                replace(d, bins=int(bins)) if isinstance(d, BinDir)
                else replace(d, buckets=int(bins)) if isinstance(d, HashDir)
                else d
                for d in spec.directives
            ]
            spec = TransformSpec(directives)
        self.spec_cache[key] = spec
        return spec

    def _eval(self, node: Assign, args, kwargs):
        op = node.call.op
        if op == "alias":
            return args[0]
        if op == "read":
            path = str(args[0])
            if path.endswith(".csv"):
                frame = read_csv(path)
                return apply_schema(frame, detect_schema(frame, seed=self.opts.seed),
                                    threads=self.opts.threads)
            return tio.read_tiled(path)
        if op == "morph":
            x = args[0]
            workload = node.workload or WorkloadVector()
            if isinstance(x, Frame):
                return compress_frame(x, seed=self.opts.seed, threads=self.opts.threads)
            if isinstance(x, CompressedFrame):
                return x
            if sparse.issparse(x):
                x = np.asarray(x.todense())
            return morph(x, workload, MorphOptions(seed=self.opts.seed))
        if op == "transform_encode":
            frame = args[0]
            spec = self._load_spec(str(args[1]), kwargs.get("bins"))
            path = "CF-CM" if isinstance(frame, CompressedFrame) else "F-M"
            return transform_encode(frame, spec, path=path, seed=self.opts.seed).matrix
        if op == "scalar":
            x, name = args[0], str(args[1])
            if len(args) >= 3:
                operand = float(args[2])
                fn = _SCALAR_BINARY.get(name)
                if fn is None:
                    raise PipelineError(f"unknown binary scalar op {name!r}")
                op_fn = lambda v: fn(v, operand)
            else:
                op_fn = _SCALAR_OPS.get(name)
                if op_fn is None:
                    raise PipelineError(f"unknown scalar op {name!r}")
            if isinstance(x, CompressedMatrix):
                return cla.scalar_op(x, op_fn)
            if sparse.issparse(x):
                x = np.asarray(x.todense())
            return op_fn(np.asarray(x, dtype=np.float64))
        if op == "cbind":
            if all(isinstance(a, CompressedMatrix) for a in args):
                return cla.cbind(*args)
            dense = [cla.to_dense(a) for a in args]
            return np.hstack([d.reshape(len(d), -1) for d in dense])
        if op == "lmm":
            a, b = args
            if isinstance(b, CompressedMatrix):
                return cla.left_mm(cla.to_dense(a), b)
            return cla.to_dense(a) @ cla.to_dense(b)
        if op == "selection_mm":
            x = args[0]
            k = int(args[1])
            seed = int(args[2]) if len(args) >= 3 else self.opts.seed
            nrows = x.nrows if isinstance(x, (CompressedMatrix, CompressedFrame)) else x.shape[0]
            rng = np.random.default_rng(seed)
            rows = rng.integers(0, nrows, size=k)
            sel = SelectionMatrix(rows, nrows)
            if isinstance(x, CompressedMatrix):
                return cla.selection_mm(sel, x)
            return cla.to_dense(x)[rows]
        if op == "slice":
            x, lo, hi = args[0], int(args[1]), int(args[2])
            if isinstance(x, CompressedMatrix):
                return cla.slice_rows(x, lo, hi)
            return cla.to_dense(x)[lo:hi]
        if op == "train_lm_cg":
            X = args[0]
            y = _coerce_label_vector(args[1])
            maxiter = int(args[2]) if len(args) >= 3 else None
            reg = float(args[3]) if len(args) >= 4 else 0.0
            beta = train_lm_cg(X, y, maxiter, reg)
            self.trained.append(beta)
            return beta
        if op == "write":
            x, path = args[0], str(args[1])
            if isinstance(x, Frame):
                x = compress_frame(x, seed=self.opts.seed)
            if sparse.issparse(x):
                x = np.asarray(x.todense())
            tio.write_tiled(x, path, threads=self.opts.threads)
            return None
        raise PipelineError(f"unknown op {op!r}")


def execute(graph: PipelineGraph, opts: ExecOptions | None = None,
            inject: bool = True) -> ExecResult:
    """Interpret the DAG; morph injection is applied here unless disabled."""
    opts = opts or ExecOptions()
    if inject and not opts.no_inject:
        graph = inject_morphs(graph, extract_workload(graph))
    return _Interpreter(graph, opts).run()


def metrics_jsonl(metrics: list[dict]) -> str:
    return "\n".join(json.dumps(m) for m in metrics)
