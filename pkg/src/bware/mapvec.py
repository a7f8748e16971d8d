"""Variable-width row -> dictionary-id index vectors.

A MapVector stores one small integer per row at 0 or 1 bit, or 1, 2, 3, or
4 bytes per entry, covering up to 1, 2, 256, 64K, 16M, and 2G distinct ids.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import CardinalityError


class MapWidth(Enum):
    W0 = 0
    W1BIT = 1
    W1B = 2
    W2B = 3
    W3B = 4
    W4B = 5

    @property
    def capacity(self) -> int:
        return _CAPACITY[self]

    @property
    def bits(self) -> int:
        return _BITS[self]

    def payload_bytes(self, nrows: int) -> int:
        if self is MapWidth.W0:
            return 0
        if self is MapWidth.W1BIT:
            return (nrows + 7) // 8
        return nrows * (self.bits // 8)


_CAPACITY = {
    MapWidth.W0: 1,
    MapWidth.W1BIT: 2,
    MapWidth.W1B: 256,
    MapWidth.W2B: 2**16,
    MapWidth.W3B: 2**24,
    MapWidth.W4B: 2**31,
}

_BITS = {
    MapWidth.W0: 0,
    MapWidth.W1BIT: 1,
    MapWidth.W1B: 8,
    MapWidth.W2B: 16,
    MapWidth.W3B: 24,
    MapWidth.W4B: 32,
}

_BYTE_DTYPE = {
    MapWidth.W1B: np.uint8,
    MapWidth.W2B: np.uint16,
    MapWidth.W4B: np.uint32,
}


def map_width_for(d: int) -> MapWidth:
    """Smallest width whose capacity covers d distinct ids."""
    if d < 1:
        raise ValueError(f"distinct count must be >= 1, got {d}")
    for width in MapWidth:
        if d <= width.capacity:
            return width
    raise CardinalityError(f"{d} distinct values exceed the 2^31 map limit")


class MapVector:
    """Immutable-by-convention packed id vector.

    The payload layout per width:
      W0    -- no payload, every id is 0
      W1BIT -- little-endian packed bits, one per row
      W1B/W2B/W4B -- native unsigned array
      W3B   -- (nrows, 3) uint8, little-endian per entry
    """

    __slots__ = ("width", "nrows", "data")

    def __init__(self, width: MapWidth, nrows: int, data: np.ndarray | None):
        self.width = width
        self.nrows = nrows
        self.data = data

    def __len__(self) -> int:
        return self.nrows

    def __repr__(self) -> str:
        return f"MapVector({self.width.name}, nrows={self.nrows})"

    @classmethod
    def from_ids(cls, ids: np.ndarray, width: MapWidth | None = None) -> "MapVector":
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ValueError("ids must be one-dimensional")
        n = len(ids)
        if width is None:
            d = int(ids.max()) + 1 if n else 1
            width = map_width_for(max(d, 1))
        if n and (ids.min() < 0 or ids.max() >= width.capacity):
            raise ValueError(f"id out of range for {width.name}")
        if width is MapWidth.W0:
            return cls(width, n, None)
        if width is MapWidth.W1BIT:
            return cls(width, n, np.packbits(ids.astype(np.uint8), bitorder="little"))
        if width is MapWidth.W3B:
            buf = np.empty((n, 3), dtype=np.uint8)
            buf[:, 0] = ids & 0xFF
            buf[:, 1] = (ids >> 8) & 0xFF
            buf[:, 2] = (ids >> 16) & 0xFF
            return cls(width, n, buf)
        return cls(width, n, ids.astype(_BYTE_DTYPE[width]))

    def ids(self) -> np.ndarray:
        """Decode to a contiguous int64 id array."""
        if self.width is MapWidth.W0:
            return np.zeros(self.nrows, dtype=np.int64)
        if self.width is MapWidth.W1BIT:
            bits = np.unpackbits(self.data, bitorder="little", count=self.nrows)
            return bits.astype(np.int64)
        if self.width is MapWidth.W3B:
            d = self.data.astype(np.int64)
            return d[:, 0] | (d[:, 1] << 8) | (d[:, 2] << 16)
        return self.data.astype(np.int64)

    def get(self, i: int) -> int:
        if not 0 <= i < self.nrows:
            raise IndexError(i)
        if self.width is MapWidth.W0:
            return 0
        if self.width is MapWidth.W1BIT:
            return (int(self.data[i >> 3]) >> (i & 7)) & 1
        if self.width is MapWidth.W3B:
            b = self.data[i]
            return int(b[0]) | (int(b[1]) << 8) | (int(b[2]) << 16)
        return int(self.data[i])

    def set(self, i: int, v: int) -> None:
        if not 0 <= i < self.nrows:
            raise IndexError(i)
        if not 0 <= v < self.width.capacity:
            raise ValueError(f"id {v} out of range for {self.width.name}")
        if self.width is MapWidth.W0:
            return
        if self.width is MapWidth.W1BIT:
            mask = np.uint8(1 << (i & 7))
            if v:
                self.data[i >> 3] |= mask
            else:
                self.data[i >> 3] &= np.uint8(~mask & 0xFF)
        elif self.width is MapWidth.W3B:
            self.data[i, 0] = v & 0xFF
            self.data[i, 1] = (v >> 8) & 0xFF
            self.data[i, 2] = (v >> 16) & 0xFF
        else:
            self.data[i] = v

    def slice(self, lo: int, hi: int) -> "MapVector":
        if not 0 <= lo < hi <= self.nrows:
            raise IndexError(f"bad row range [{lo}, {hi}) for {self.nrows} rows")
        return MapVector.from_ids(self.ids()[lo:hi], self.width)

    def gather(self, rows: np.ndarray) -> "MapVector":
        rows = np.asarray(rows, dtype=np.int64)
        return MapVector.from_ids(self.ids()[rows], self.width)

    def payload_bytes(self) -> int:
        return self.width.payload_bytes(self.nrows)

    def to_bytes(self) -> bytes:
        """Little-endian wire form of the packed payload."""
        if self.width is MapWidth.W0:
            return b""
        if self.width in (MapWidth.W1BIT, MapWidth.W3B):
            return self.data.tobytes()
        return self.data.astype(self.data.dtype.newbyteorder("<"), copy=False).tobytes()

    @classmethod
    def from_bytes(cls, width: MapWidth, nrows: int, raw: bytes) -> "MapVector":
        expect = width.payload_bytes(nrows)
        if len(raw) != expect:
            raise ValueError(f"map payload length {len(raw)} != expected {expect}")
        if width is MapWidth.W0:
            return cls(width, nrows, None)
        if width is MapWidth.W1BIT:
            return cls(width, nrows, np.frombuffer(raw, dtype=np.uint8).copy())
        if width is MapWidth.W3B:
            return cls(width, nrows, np.frombuffer(raw, dtype=np.uint8).reshape(nrows, 3).copy())
        dt = np.dtype(_BYTE_DTYPE[width]).newbyteorder("<")
        return cls(width, nrows, np.frombuffer(raw, dtype=dt).astype(_BYTE_DTYPE[width]))
