"""Binary map and frame-series formats, with JSON sidecars.

Map file::

    bytes 0-11   magic  b"NVRAMSEY-MAP"
    bytes 12-15  format version, little-endian u32
    bytes 16-23  width, height (u32 LE)
    then         width*height float32 LE, row-major

Frame-series file::

    bytes 0-11   magic  b"NVRAMSEY-SER"
    bytes 12-15  format version (u32 LE)
    bytes 16-27  width, height, frame count (u32 LE)
    bytes 28-35  frame rate F_s in Hz (float64 LE)
    then         frames*height*width int16 LE, frame-major then row-major

Each data file may have a ``<name>.json`` sidecar with metadata.
"""
import json
import os
import struct
import warnings

import numpy as np

from .exceptions import FileFormatError, InvalidArgumentError

MAP_MAGIC = b"NVRAMSEY-MAP"
SERIES_MAGIC = b"NVRAMSEY-SER"
VERSION = 1
_MAP_HEADER = struct.Struct("<12sIII")
_SERIES_HEADER = struct.Struct("<12sIIIId")


def sidecar_path(path):
    return os.fspath(path) + ".json"


def write_sidecar(path, meta):
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_sidecar(path):
    p = sidecar_path(path)
    if not os.path.exists(p):
        return {}
    with open(p) as fh:
        return json.load(fh)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def _check_header(data, magic, size):
    if len(data) < len(magic):
        raise FileFormatError("file too short for magic", len(data))
    if data[:len(magic)] != magic:
        raise FileFormatError(f"bad magic {data[:len(magic)]!r}, expected {magic!r}", 0)
    if len(data) < size:
        raise FileFormatError(f"truncated header ({len(data)} of {size} bytes)", len(data))
    (version,) = struct.unpack_from("<I", data, len(magic))
    if version != VERSION:
        raise FileFormatError(f"unsupported format version {version}", len(magic))


def write_map(path, array, quantity="", units=""):
    """Write a 2-D float map and its JSON sidecar."""
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim != 2:
        raise InvalidArgumentError(f"a map must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(_MAP_HEADER.pack(MAP_MAGIC, VERSION, w, h))
        fh.write(np.ascontiguousarray(arr).tobytes())
    write_sidecar(path, {"quantity": quantity, "units": units, "width": w, "height": h})


def read_map(path):
    """Return ``(array, metadata)`` for a map file; data come back as float64."""
    with open(path, "rb") as fh:
        data = fh.read()
    _check_header(data, MAP_MAGIC, _MAP_HEADER.size)
    _, _, w, h = _MAP_HEADER.unpack_from(data)
    need = _MAP_HEADER.size + 4 * w * h
    if len(data) != need:
        raise FileFormatError(
            f"map payload holds {len(data) - _MAP_HEADER.size} bytes, expected {4 * w * h}",
            _MAP_HEADER.size)
    arr = np.frombuffer(data, dtype="<f4", offset=_MAP_HEADER.size).reshape(h, w)
    return arr.astype(float), read_sidecar(path)


def is_series_file(path):
    try:
        with open(path, "rb") as fh:
            return fh.read(len(SERIES_MAGIC)) == SERIES_MAGIC
    except OSError:
        return False


def write_series(path, frames, frame_rate, meta=None):
    """Write a stack of combined images ``(frames, height, width)``."""
    arr = np.asarray(frames)
    if arr.ndim != 3:
        raise InvalidArgumentError(f"a frame series must be 3-D, got shape {arr.shape}")
    if np.any(arr < -32768) or np.any(arr > 32767):
        raise FileFormatError("frame values exceed the int16 range", 0)
    n, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(_SERIES_HEADER.pack(SERIES_MAGIC, VERSION, w, h, n, float(frame_rate)))
        fh.write(np.ascontiguousarray(arr, dtype="<i2").tobytes())
    full = {"width": w, "height": h, "frames": n, "frame_rate": float(frame_rate)}
    full.update(meta or {})
    write_sidecar(path, full)


def read_series(path):
    """Return ``(frames, frame_rate, metadata)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    _check_header(data, SERIES_MAGIC, _SERIES_HEADER.size)
    _, _, w, h, n, rate = _SERIES_HEADER.unpack_from(data)
    need = _SERIES_HEADER.size + 2 * w * h * n
    if len(data) != need:
        raise FileFormatError(
            f"series payload holds {len(data) - _SERIES_HEADER.size} bytes, expected {2 * w * h * n}",
            _SERIES_HEADER.size)
    arr = np.frombuffer(data, dtype="<i2", offset=_SERIES_HEADER.size).reshape(n, h, w)
    return arr.astype(np.int16), float(rate), read_sidecar(path)


def write_tau_axis(path, taus):
    np.savetxt(path, np.asarray(taus, dtype=float), header="tau_s", comments="", fmt="%.12e")


def read_tau_axis(path):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            taus = np.loadtxt(path, skiprows=1, ndmin=1)
    except ValueError as exc:
        raise FileFormatError(f"unreadable tau axis: {exc}", 0) from None
    if taus.size == 0:
        raise FileFormatError("tau axis is empty", 0)
    return taus
