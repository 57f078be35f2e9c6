import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nvramsey.exceptions import FileFormatError, InvalidArgumentError
from nvramsey.fileio import (is_series_file, read_map, read_series, read_sidecar, read_tau_axis,
                             write_map, write_series, write_tau_axis)


@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_map_round_trip(tmp_path_factory, arr):
    p = tmp_path_factory.mktemp("m") / "a.nvmap"
    write_map(p, arr, "m_z", "Hz")
    back, meta = read_map(p)
    assert np.array_equal(back, arr.astype(float))
    assert meta["quantity"] == "m_z" and meta["units"] == "Hz"


@given(arrays(np.int16, st.tuples(st.integers(1, 4), st.integers(1, 5), st.integers(1, 5))),
       st.floats(1.0, 4e3))
def test_series_round_trip(tmp_path_factory, arr, rate):
    p = tmp_path_factory.mktemp("s") / "a.nvser"
    write_series(p, arr, rate, {"seed": 3})
    back, r, meta = read_series(p)
    assert np.array_equal(back, arr) and r == rate
    assert meta["seed"] == 3 and meta["frames"] == arr.shape[0]
    assert is_series_file(p)


def test_map_header_layout(tmp_path):
    p = tmp_path / "a.nvmap"
    write_map(p, np.arange(6, dtype=float).reshape(2, 3))
    raw = p.read_bytes()
    assert raw[:12] == b"NVRAMSEY-MAP"
    assert int.from_bytes(raw[16:20], "little") == 3
    assert int.from_bytes(raw[20:24], "little") == 2
    assert np.array_equal(np.frombuffer(raw[24:], "<f4"), np.arange(6))


def test_bad_magic_offset(tmp_path):
    p = tmp_path / "bad.nvmap"
    p.write_bytes(b"NOT-A-MAP-XX" + bytes(20))
    with pytest.raises(FileFormatError, match="byte offset 0") as e:
        read_map(p)
    assert e.value.offset == 0


def test_bad_version_and_truncation(tmp_path):
    p = tmp_path / "a.nvmap"
    write_map(p, np.zeros((2, 2)))
    raw = bytearray(p.read_bytes())
    raw[12] = 9
    p.write_bytes(bytes(raw))
    with pytest.raises(FileFormatError) as e:
        read_map(p)
    assert e.value.offset == 12
    write_map(p, np.zeros((2, 2)))
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(FileFormatError) as e:
        read_map(p)
    assert e.value.offset == 24


def test_series_rejects_bad_input(tmp_path):
    with pytest.raises(InvalidArgumentError):
        write_series(tmp_path / "x.nvser", np.zeros((2, 2)), 10.0)
    with pytest.raises(FileFormatError):
        write_series(tmp_path / "x.nvser", np.full((1, 1, 1), 40000), 10.0)
    (tmp_path / "e.nvser").write_bytes(b"")
    with pytest.raises(FileFormatError):
        read_series(tmp_path / "e.nvser")


def test_tau_axis(tmp_path):
    p = tmp_path / "tau.csv"
    write_tau_axis(p, [1e-8, 2e-8])
    assert p.read_text().splitlines()[0] == "tau_s"
    assert np.allclose(read_tau_axis(p), [1e-8, 2e-8])
    p.write_text("tau_s\n")
    with pytest.raises(FileFormatError):
        read_tau_axis(p)


def test_missing_sidecar(tmp_path):
    assert read_sidecar(tmp_path / "nothing") == {}
