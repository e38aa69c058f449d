"""Binary containers for sampled fields (``BPFD``) and photon event streams (``BPEV``).

Both are little-endian. Field payloads are row-major ``(ny, nx)`` complex128
pairs; event payloads are packed ``(x u16, y u16, t_ns u64)`` records.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .field import ComplexField, Grid2D

FIELD_MAGIC = b"BPFD"
EVENT_MAGIC = b"BPEV"
FORMAT_VERSION = 1

_FIELD_HEADER = struct.Struct("<4sHHHI")
_EVENT_HEADER = struct.Struct("<4sHHHIQQBQ")

EVENT_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<u8")])
_FIELD_DTYPE = np.dtype("<c16")


class FormatError(Exception):
    """Base class for file-format problems."""


class MagicMismatchError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class MalformedHeaderError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class SortOrderError(FormatError):
    """Event payload timestamps are not non-decreasing."""


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temp file in the same directory and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pitch_to_nm(pitch: float) -> int:
    nm = int(round(pitch * 1e9))
    if not 0 < nm < 2**32:
        raise ValueError(f"pitch {pitch} m not representable as u32 nanometers")
    return nm


def _check_dims(nx: int, ny: int) -> None:
    if not (0 < nx < 2**16 and 0 < ny < 2**16):
        raise ValueError(f"grid {nx}x{ny} not representable as u16 dimensions")


def _parse_header(data: bytes, header: struct.Struct, magic: bytes) -> tuple:
    if len(data) < 4:
        raise MalformedHeaderError(f"file too short for a header ({len(data)} bytes)")
    if data[:4] != magic:
        raise MagicMismatchError(f"expected magic {magic!r}, found {data[:4]!r}")
    if len(data) < 6:
        raise MalformedHeaderError("file too short for a version field")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported version {version} (expected {FORMAT_VERSION})")
    if len(data) < header.size:
        raise MalformedHeaderError(f"header needs {header.size} bytes, file has {len(data)}")
    fields = header.unpack_from(data, 0)
    _, _, nx, ny, pitch_nm = fields[:5]
    if nx < 2 or ny < 2 or pitch_nm == 0:
        raise MalformedHeaderError(f"invalid grid in header: nx={nx} ny={ny} pitch_nm={pitch_nm}")
    return fields


def encode_field(f: ComplexField) -> bytes:
    g = f.grid
    _check_dims(g.nx, g.ny)
    head = _FIELD_HEADER.pack(FIELD_MAGIC, FORMAT_VERSION, g.nx, g.ny, _pitch_to_nm(g.pitch))
    return head + np.ascontiguousarray(f.values, dtype=_FIELD_DTYPE).tobytes()


def decode_field(data: bytes) -> ComplexField:
    _, _, nx, ny, pitch_nm = _parse_header(data, _FIELD_HEADER, FIELD_MAGIC)
    expected = nx * ny * _FIELD_DTYPE.itemsize
    payload = data[_FIELD_HEADER.size:]
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"payload has {len(payload)} bytes, header implies {expected} ({nx}x{ny} records)"
        )
    values = np.frombuffer(payload, dtype=_FIELD_DTYPE).reshape(ny, nx).astype(np.complex128)
    return ComplexField(Grid2D(nx, ny, pitch_nm * 1e-9), values)


def field_io_write(f: ComplexField, path) -> None:
    atomic_write_bytes(path, encode_field(f))


def field_io_read(path) -> ComplexField:
    return decode_field(Path(path).read_bytes())


def encode_events(header: dict, events: np.ndarray) -> bytes:
    """Serialize an event array; ``header`` carries grid, exposure_ns, seed and mode."""
    g = header["grid"]
    _check_dims(g.nx, g.ny)
    events = np.ascontiguousarray(events, dtype=EVENT_DTYPE)
    head = _EVENT_HEADER.pack(
        EVENT_MAGIC,
        FORMAT_VERSION,
        g.nx,
        g.ny,
        _pitch_to_nm(g.pitch),
        int(header["exposure_ns"]),
        int(header["seed"]),
        int(header["mode"]),
        len(events),
    )
    return head + events.tobytes()


def decode_events(data: bytes) -> tuple[dict, np.ndarray]:
    fields = _parse_header(data, _EVENT_HEADER, EVENT_MAGIC)
    _, _, nx, ny, pitch_nm, exposure_ns, seed, mode, count = fields
    payload = data[_EVENT_HEADER.size:]
    expected = count * EVENT_DTYPE.itemsize
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"count field says {count} events ({expected} bytes), payload has {len(payload)} bytes"
        )
    events = np.frombuffer(payload, dtype=EVENT_DTYPE).copy()
    if count > 1 and np.any(np.diff(events["t"].astype(np.int64)) < 0):
        raise SortOrderError("event payload is not sorted by timestamp")
    if count and (events["x"].max() >= nx or events["y"].max() >= ny):
        raise MalformedHeaderError("event coordinates exceed header grid")
    header = dict(
        grid=Grid2D(nx, ny, pitch_nm * 1e-9),
        exposure_ns=exposure_ns,
        seed=seed,
        mode=mode,
    )
    return header, events
