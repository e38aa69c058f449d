import struct

import numpy as np
import pytest

from biphase.events import EventStream, event_io_read, event_io_write
from biphase.field import ComplexField, Grid2D
from biphase.fileformats import (
    EVENT_DTYPE,
    MagicMismatchError,
    MalformedHeaderError,
    SortOrderError,
    TruncatedPayloadError,
    VersionMismatchError,
    decode_events,
    decode_field,
    encode_events,
    encode_field,
    field_io_read,
    field_io_write,
)


def some_field():
    rng = np.random.default_rng(0)
    g = Grid2D(7, 5, 55e-6)
    return ComplexField(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))


def some_events(n=50, nx=7, ny=5):
    rng = np.random.default_rng(1)
    ev = np.zeros(n, dtype=EVENT_DTYPE)
    ev["x"] = rng.integers(0, nx, n)
    ev["y"] = rng.integers(0, ny, n)
    ev["t"] = np.sort(rng.integers(0, 2**40, n))
    return ev


def test_field_round_trip_bit_exact(tmp_path):
    f = some_field()
    field_io_write(f, tmp_path / "f.bpfd")
    g = field_io_read(tmp_path / "f.bpfd")
    assert g.grid == f.grid
    assert g.values.tobytes() == f.values.tobytes()
    assert encode_field(g) == (tmp_path / "f.bpfd").read_bytes()


def test_special_values_survive():
    f = some_field()
    f.values[0, 0] = complex(np.nan, -0.0)
    f.values[1, 1] = complex(np.inf, 5e-324)
    assert decode_field(encode_field(f)).values.tobytes() == f.values.tobytes()


def test_event_round_trip_bit_exact(tmp_path):
    s = EventStream(Grid2D(7, 5), 123456789, 2**63 + 5, "biphoton", some_events())
    event_io_write(s, tmp_path / "e.bpev")
    r = event_io_read(tmp_path / "e.bpev")
    assert r == s
    assert r.to_bytes() == (tmp_path / "e.bpev").read_bytes()


def test_empty_event_stream(tmp_path):
    s = EventStream(Grid2D(4, 4), 10, 0, "classical-singles")
    event_io_write(s, tmp_path / "e.bpev")
    assert event_io_read(tmp_path / "e.bpev") == s


def header(grid=Grid2D(7, 5)):
    return dict(grid=grid, exposure_ns=1, seed=1, mode=0)


def test_wrong_magic():
    data = encode_field(some_field())
    with pytest.raises(MagicMismatchError):
        decode_field(b"XXXX" + data[4:])
    with pytest.raises(MagicMismatchError):
        decode_events(data)


def test_wrong_version():
    data = bytearray(encode_events(header(), some_events()))
    struct.pack_into("<H", data, 4, 2)
    with pytest.raises(VersionMismatchError):
        decode_events(bytes(data))


def test_truncated_payloads():
    data = encode_field(some_field())
    with pytest.raises(TruncatedPayloadError):
        decode_field(data[:-1])
    ev = encode_events(header(), some_events())
    with pytest.raises(TruncatedPayloadError):
        decode_events(ev[:-3])
    with pytest.raises(MalformedHeaderError):
        decode_events(ev[:10])


def test_unsorted_payload_rejected():
    ev = some_events()
    ev["t"] = ev["t"][::-1]
    with pytest.raises(SortOrderError):
        decode_events(encode_events(header(), ev))


def test_coordinates_outside_header_grid():
    ev = some_events()
    ev["x"][0] = 7
    with pytest.raises(MalformedHeaderError):
        decode_events(encode_events(header(), ev))


def test_atomic_write_leaves_no_temp_files(tmp_path):
    field_io_write(some_field(), tmp_path / "sub" / "f.bpfd")
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.bpfd"]
