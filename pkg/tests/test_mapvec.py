import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bware.errors import CardinalityError
from bware.mapvec import MapVector, MapWidth, map_width_for


def test_width_capacities():
    assert [w.capacity for w in MapWidth] == [1, 2, 256, 2**16, 2**24, 2**31]


@pytest.mark.parametrize(
    "d,expected",
    [
        (1, MapWidth.W0),
        (2, MapWidth.W1BIT),
        (3, MapWidth.W1B),
        (200, MapWidth.W1B),
        (256, MapWidth.W1B),
        (257, MapWidth.W2B),
        (2**16, MapWidth.W2B),
        (2**16 + 1, MapWidth.W3B),
        (2**24, MapWidth.W3B),
        (2**24 + 1, MapWidth.W4B),
        (2**31, MapWidth.W4B),
    ],
)
def test_map_width_for(d, expected):
    assert map_width_for(d) is expected


def test_map_width_monotone():
    values = [1, 2, 3, 255, 256, 257, 2**16, 2**16 + 1, 2**24, 2**24 + 1, 2**31]
    widths = [map_width_for(d).value for d in values]
    assert widths == sorted(widths)


def test_map_width_rejects_bad_inputs():
    with pytest.raises(ValueError):
        map_width_for(0)
    with pytest.raises(CardinalityError):
        map_width_for(2**31 + 1)


@pytest.mark.parametrize("width,d", [
    (MapWidth.W0, 1),
    (MapWidth.W1BIT, 2),
    (MapWidth.W1B, 200),
    (MapWidth.W2B, 60_000),
    (MapWidth.W3B, 70_000),
    (MapWidth.W4B, 17_000_000),
])
def test_roundtrip_ids(width, d, rng):
    ids = rng.integers(0, d, size=257).astype(np.int64)
    m = MapVector.from_ids(ids, width)
    assert m.width is width
    assert np.array_equal(m.ids(), ids)
    for i in (0, 17, 256):
        assert m.get(i) == ids[i]


def test_get_set_roundtrip(rng):
    for width, d in [(MapWidth.W1BIT, 2), (MapWidth.W1B, 256), (MapWidth.W2B, 9999),
                     (MapWidth.W3B, 2**17), (MapWidth.W4B, 2**25)]:
        m = MapVector.from_ids(np.zeros(40, dtype=np.int64), width)
        vals = rng.integers(0, d, size=40)
        for i, v in enumerate(vals):
            m.set(i, int(v))
        for i, v in enumerate(vals):
            assert m.get(i) == v


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=2**24 - 1), min_size=1, max_size=300))
def test_roundtrip_any_ids(ids):
    ids = np.asarray(ids, dtype=np.int64)
    width = map_width_for(int(ids.max()) + 1)
    m = MapVector.from_ids(ids, width)
    assert np.array_equal(m.ids(), ids)


def test_slice_and_gather(rng):
    ids = rng.integers(0, 200, size=500).astype(np.int64)
    m = MapVector.from_ids(ids)
    s = m.slice(100, 300)
    assert s.width is m.width
    assert np.array_equal(s.ids(), ids[100:300])
    rows = rng.integers(0, 500, size=77)
    g = m.gather(rows)
    assert np.array_equal(g.ids(), ids[rows])
    with pytest.raises(IndexError):
        m.slice(300, 300)
    with pytest.raises(IndexError):
        m.slice(0, 501)


def test_payload_bytes():
    assert MapVector.from_ids(np.zeros(1000, np.int64), MapWidth.W0).payload_bytes() == 0
    assert MapVector.from_ids(np.zeros(1000, np.int64), MapWidth.W1BIT).payload_bytes() == 125
    assert MapVector.from_ids(np.zeros(1000, np.int64), MapWidth.W1B).payload_bytes() == 1000
    assert MapVector.from_ids(np.zeros(1000, np.int64), MapWidth.W3B).payload_bytes() == 3000


def test_wire_roundtrip(rng):
    for width, d in [(MapWidth.W0, 1), (MapWidth.W1BIT, 2), (MapWidth.W1B, 256),
                     (MapWidth.W2B, 999), (MapWidth.W3B, 2**20), (MapWidth.W4B, 2**25)]:
        ids = rng.integers(0, d, size=123).astype(np.int64)
        m = MapVector.from_ids(ids, width)
        back = MapVector.from_bytes(width, 123, m.to_bytes())
        assert np.array_equal(back.ids(), ids)


def test_out_of_range_rejected():
    with pytest.raises(ValueError):
        MapVector.from_ids(np.array([0, 2]), MapWidth.W1BIT)
    with pytest.raises(ValueError):
        MapVector.from_ids(np.array([-1]), MapWidth.W1B)
