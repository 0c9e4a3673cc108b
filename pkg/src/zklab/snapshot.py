"""Binary snapshot files and CSV norm traces.

A single-field file is a 40-byte little-endian header followed by the
samples::

    offset  size  content
    0       4     magic b"ZKF1"
    4       4     u32 format version (1)
    8       4     u32 nx
    12      4     u32 ny
    16      8     f64 half-length L_x
    24      8     f64 half-length L_y
    32      8     f64 time t
    40      8*nx*ny  f64 samples, row-major with y-major rows

A trajectory file is a u64 snapshot count followed by that many
single-field records.
"""
from __future__ import annotations

import csv
import os
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, InvalidInputError
from .norms import Trajectory, WeightSpec, sobolev_norm, weighted_l2_norm
from .spectral import Field2D, Grid2D

MAGIC = b"ZKF1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIddd")
HEADER_SIZE = _HEADER.size  # 40
_COUNT = struct.Struct("<Q")


def _record(f: Field2D, t: float) -> bytes:
    g = f.grid
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, g.nx, g.ny, g.half_length_x, g.half_length_y, float(t))
    return head + np.ascontiguousarray(f.samples, dtype="<f8").tobytes()


def _parse_record(buf: bytes, offset: int) -> tuple[Field2D, float, int]:
    if len(buf) - offset < HEADER_SIZE:
        raise FormatError("truncated header", len(buf))
    magic, version, nx, ny, lx, ly, t = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", offset + 4)
    if nx == 0 or ny == 0:
        raise FormatError(f"zero dimension {nx}x{ny}", offset + 8)
    start = offset + HEADER_SIZE
    end = start + 8 * nx * ny
    if len(buf) < end:
        raise FormatError(f"payload of {nx}x{ny} samples is truncated", len(buf))
    try:
        grid = Grid2D(nx=nx, ny=ny, half_length_x=lx, half_length_y=ly)
    except InvalidInputError as exc:
        raise FormatError(f"invalid grid in header: {exc}", offset + 8) from None
    data = np.frombuffer(buf, dtype="<f8", count=nx * ny, offset=start).reshape(ny, nx)
    try:
        f = Field2D(grid, data.astype(float))
    except InvalidInputError as exc:
        raise FormatError(f"invalid samples: {exc}", start) from None
    return f, float(t), end


def save_snapshot(obj: Field2D | Trajectory, path: str | os.PathLike, t: float = 0.0) -> None:
    """Write a field (at time ``t``) or a whole trajectory to ``path``."""
    if isinstance(obj, Trajectory):
        parts = [_COUNT.pack(len(obj))]
        parts += [_record(f, tt) for f, tt in zip(obj.fields, obj.times)]
        data = b"".join(parts)
    elif isinstance(obj, Field2D):
        data = _record(obj, t)
    else:
        raise InvalidInputError(f"cannot save {type(obj).__name__}")
    Path(path).write_bytes(data)


def load_snapshot(path: str | os.PathLike) -> Field2D | Trajectory:
    """Read a file written by :func:`save_snapshot`.

    The leading bytes decide the kind: ``ZKF1`` is a single field,
    anything else is read as a trajectory count.

    Raises
    ------
    FormatError
        On bad magic, unsupported version, truncation, trailing bytes or
        snapshots with mismatched grids; the message names the byte offset.
    """
    buf = Path(path).read_bytes()
    if buf[:4] == MAGIC:
        f, _, end = _parse_record(buf, 0)
        if end != len(buf):
            raise FormatError(f"file size {len(buf)} != {end} expected for one {f.grid.nx}x{f.grid.ny} field", end)
        return f
    if len(buf) < _COUNT.size:
        raise FormatError("file too short for a snapshot or trajectory", 0)
    (count,) = _COUNT.unpack_from(buf, 0)
    if count == 0:
        raise FormatError("trajectory with zero snapshots", 0)
    offset = _COUNT.size
    fields, times = [], []
    for _ in range(count):
        f, t, end = _parse_record(buf, offset)
        if fields and f.grid != fields[0].grid:
            raise FormatError("snapshot grid differs from the first snapshot", offset + 8)
        fields.append(f)
        times.append(t)
        offset = end
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes after {count} snapshots", offset)
    try:
        return Trajectory.from_fields(times, fields)
    except InvalidInputError as exc:
        raise FormatError(f"invalid trajectory times: {exc}", _COUNT.size + 32) from None


def _weight_label(w: WeightSpec) -> str:
    params = ",".join(f"{k}={v:g}" for k, v in vars(w).items())
    return f"weighted({type(w).__name__.lower()}:{params})"


def trace_columns(sobolev_orders: Sequence[float] = (), weights: Sequence[WeightSpec] = ()) -> list[str]:
    """Column names of :func:`emit_trace` in output order."""
    return ["t", "l2", "mass"] + [f"hs({s:g})" for s in sobolev_orders] + [_weight_label(w) for w in weights]


def trace_rows(traj: Trajectory, sobolev_orders: Sequence[float] = (), weights: Sequence[WeightSpec] = ()) -> list[list[float]]:
    rows = []
    for t, f in zip(traj.times, traj.fields):
        row = [float(t), f.l2_norm(), f.mass()]
        row += [sobolev_norm(f, s) for s in sobolev_orders]
        # evolved fields spread out, so the boundary check is not applied here
        row += [weighted_l2_norm(f, w, check_decay=False) for w in weights]
        rows.append(row)
    return rows


def emit_trace(
    traj: Trajectory,
    path: str | os.PathLike,
    sobolev_orders: Iterable[float] = (),
    weights: Iterable[WeightSpec] = (),
) -> None:
    """Write one CSV row of norms per snapshot time.

    Columns are ``t, l2, mass``, then ``hs(s)`` for each Sobolev order and
    one ``weighted(...)`` column per weight, in the order given. Numbers
    use 17 significant digits.
    """
    sobolev_orders, weights = list(sobolev_orders), list(weights)
    header = trace_columns(sobolev_orders, weights)
    rows = trace_rows(traj, sobolev_orders, weights)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])
