import numpy as np
import pytest

from bware.frame import Frame


def make_random_frame(rng: np.random.Generator, nrows: int | None = None,
                      ncols: int | None = None) -> Frame:
    """Mixed-type string frame with per-column distinct counts in {1..nrows}."""
    if nrows is None:
        nrows = int(rng.integers(1, 400))
    if ncols is None:
        ncols = int(rng.integers(1, 6))
    cols = []
    for _ in range(ncols):
        kind = rng.choice(["int", "float", "str", "bool", "hex", "char"])
        d = int(rng.integers(1, nrows + 1))
        ids = rng.integers(0, d, size=nrows)
        if kind == "int":
            pool = rng.integers(-10_000, 10_000, size=d)
            col = [str(int(pool[i])) for i in ids]
        elif kind == "float":
            pool = rng.normal(size=d)
            col = [repr(float(pool[i])) for i in ids]
        elif kind == "bool":
            col = [("true" if i % 2 else "false") for i in ids]
        elif kind == "hex":
            pool = [bytes(rng.integers(0, 256, size=4, dtype=np.uint8)).hex() for _ in range(d)]
            col = [pool[i] for i in ids]
        elif kind == "char":
            alphabet = "abcdefghijklmnopqrstuvwxyz"
            col = [alphabet[i % 26] for i in ids]
        else:
            col = [f"s{int(i)}" for i in ids]
        cols.append(col)
    names = [f"c{j}" for j in range(ncols)]
    return Frame.from_strings(cols, names)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
