import csv
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from zklab.errors import FormatError, InvalidInputError
from zklab.fields import gaussian, random_field
from zklab.norms import Polynomial, Trajectory
from zklab.propagator import evolve_series
from zklab.snapshot import (
    FORMAT_VERSION,
    HEADER_SIZE,
    MAGIC,
    emit_trace,
    load_snapshot,
    save_snapshot,
    trace_columns,
    trace_rows,
)
from zklab.spectral import Field2D, Grid2D

G = Grid2D(16, 8, 4.0, 3.0)


def _field(seed=0):
    return Field2D(G, np.random.default_rng(seed).standard_normal(G.shape))


# --- binary format ------------------------------------------------------------------


def test_header_layout(tmp_path):
    p = tmp_path / "f.bin"
    save_snapshot(_field(), p, t=1.25)
    buf = p.read_bytes()
    assert HEADER_SIZE == 40
    assert len(buf) == 40 + 8 * 16 * 8
    assert buf[:4] == MAGIC == b"ZKF1"
    assert struct.unpack_from("<IIIddd", buf, 4) == (FORMAT_VERSION, 16, 8, 4.0, 3.0, 1.25)


@given(st.integers(0, 2**32 - 1))
def test_field_roundtrip_is_bitwise(seed):
    import tempfile
    from pathlib import Path

    f = _field(seed)
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "f.bin"
        save_snapshot(f, p)
        back = load_snapshot(p)
    assert back.grid == f.grid
    assert back.samples.tobytes() == f.samples.tobytes()


def test_trajectory_roundtrip_is_bitwise(tmp_path):
    times = [0.0, 0.1, 0.35]
    tr = Trajectory(G, times, np.stack([_field(i).samples for i in range(3)]))
    p = tmp_path / "t.bin"
    save_snapshot(tr, p)
    assert len(p.read_bytes()) == 8 + 3 * (40 + 8 * 16 * 8)
    back = load_snapshot(p)
    assert isinstance(back, Trajectory)
    assert back.times.tolist() == times
    assert back.samples.tobytes() == tr.samples.tobytes()


def test_unsaveable_object(tmp_path):
    with pytest.raises(InvalidInputError):
        save_snapshot(np.zeros((4, 4)), tmp_path / "x.bin")


def _corrupt(tmp_path, edit):
    p = tmp_path / "f.bin"
    save_snapshot(_field(), p)
    buf = bytearray(p.read_bytes())
    buf = edit(buf)
    p.write_bytes(bytes(buf))
    with pytest.raises(FormatError) as info:
        load_snapshot(p)
    return info.value


def test_wrong_version_names_its_offset(tmp_path):
    err = _corrupt(tmp_path, lambda b: b[:4] + struct.pack("<I", 2) + b[8:])
    assert err.offset == 4


def test_truncated_payload(tmp_path):
    err = _corrupt(tmp_path, lambda b: b[:-8])
    assert "truncated" in str(err)


def test_trailing_bytes(tmp_path):
    err = _corrupt(tmp_path, lambda b: b + b"\0" * 8)
    assert err.offset == 40 + 8 * 16 * 8


def test_zero_dimension(tmp_path):
    err = _corrupt(tmp_path, lambda b: b[:8] + struct.pack("<I", 0) + b[12:])
    assert err.offset == 8


def test_nonfinite_sample(tmp_path):
    err = _corrupt(tmp_path, lambda b: b[:40] + struct.pack("<d", np.nan) + b[48:])
    assert err.offset == 40


def test_bad_magic_inside_trajectory(tmp_path):
    tr = Trajectory(G, [0.0, 0.5], np.stack([_field(0).samples, _field(1).samples]))
    p = tmp_path / "t.bin"
    save_snapshot(tr, p)
    buf = bytearray(p.read_bytes())
    second = 8 + 40 + 8 * 16 * 8
    buf[second : second + 4] = b"XXXX"
    p.write_bytes(bytes(buf))
    with pytest.raises(FormatError) as info:
        load_snapshot(p)
    assert info.value.offset == second


def test_short_and_empty_files(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"abc")
    with pytest.raises(FormatError):
        load_snapshot(p)
    p.write_bytes(struct.pack("<Q", 0))
    with pytest.raises(FormatError):
        load_snapshot(p)


def test_nonincreasing_times_rejected(tmp_path):
    tr = Trajectory(G, [0.0, 0.5], np.stack([_field(0).samples, _field(1).samples]))
    p = tmp_path / "t.bin"
    save_snapshot(tr, p)
    buf = bytearray(p.read_bytes())
    struct.pack_into("<d", buf, 8 + 40 + 8 * 16 * 8 + 32, 0.0)
    p.write_bytes(bytes(buf))
    with pytest.raises(FormatError):
        load_snapshot(p)


# --- CSV traces -----------------------------------------------------------------------


def test_trace_columns_order():
    assert trace_columns([1.0, 0.5], [Polynomial(1.0)]) == ["t", "l2", "mass", "hs(1)", "hs(0.5)", "weighted(polynomial:r=1)"]


def test_trace_of_zero_trajectory():
    tr = Trajectory(G, [0.0, 1.0], np.zeros((2,) + G.shape))
    rows = trace_rows(tr, [1.0], [Polynomial(1.0)])
    assert rows == [[0.0, 0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0, 0.0]]


def test_free_evolution_trace_keeps_l2_and_mass(tmp_path):
    g = Grid2D.square(128, 16.0)
    f = random_field(g, np.random.default_rng(2), n_packets=2, width_range=(0.7, 0.9))
    times = np.linspace(0, 2, 6)
    tr = Trajectory(g, times, evolve_series(f, times))
    p = tmp_path / "trace.csv"
    emit_trace(tr, p, [1.0], [Polynomial(1.0)])
    raw = p.read_bytes()
    assert raw.count(b"\r\n") == 7 and b"\n" not in raw.replace(b"\r\n", b"")
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == trace_columns([1.0], [Polynomial(1.0)])
    vals = np.array(rows[1:], dtype=float)
    assert np.max(np.abs(vals[:, 1] - vals[0, 1])) < 1e-12 * vals[0, 1]
    assert np.max(np.abs(vals[:, 2] - vals[0, 2])) < 1e-12 * max(1.0, abs(vals[0, 2]))
    assert np.max(np.abs(vals[:, 3] - vals[0, 3])) < 1e-12 * vals[0, 3]
    assert np.all(np.isfinite(vals[:, 4])) and np.all(np.diff(vals[1:, 4]) > 0)


def test_trace_uses_seventeen_digits(tmp_path):
    g = Grid2D.square(64, 12.0)
    tr = Trajectory(g, [0.0, 0.1], np.stack([gaussian(g).samples] * 2))
    p = tmp_path / "trace.csv"
    emit_trace(tr, p)
    row = p.read_text().splitlines()[1].split(",")
    assert row[1] == f"{gaussian(g).l2_norm():.17g}"
    assert float(row[1]) == gaussian(g).l2_norm()
