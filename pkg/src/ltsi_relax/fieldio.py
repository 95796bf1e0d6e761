"""Reading and writing sampled fields and JSON artifacts.

Fields have two on-disk forms:

* CSV with header ``t,x,channel,re,im``, one row per sample in row-major
  ``(t, x, channel)`` order;
* a compact binary layout: the 8-byte magic ``LTSIFLD1``, three
  little-endian ``uint64`` sizes ``(nt, nx, nc)``, four ``float64`` values
  ``(dt, dx, t0, x0)``, then ``nt * nx * nc`` little-endian ``complex128``
  samples (interleaved re/im) in row-major ``(t, x, channel)`` order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct

import numpy as np

from .core import SpatioTemporalField, ValidationError

__all__ = ["MAGIC", "write_field_csv", "read_field_csv", "write_field_binary",
           "read_field_binary", "dumps_json", "write_json", "sanitize"]

MAGIC = b"LTSIFLD1"
_HEADER = struct.Struct("<8s3Q4d")


def _fmt(x):
    return format(float(x), ".17g")


def write_field_csv(field: SpatioTemporalField, path=None):
    """Write ``t,x,channel,re,im`` rows; returns the text when ``path`` is None."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "x", "channel", "re", "im"])
    times, xs = field.times, field.positions
    nt, nx, nc = field.shape
    for i in range(nt):
        for j in range(nx):
            for c in range(nc):
                v = field.values[i, j, c]
                writer.writerow([_fmt(times[i]), _fmt(xs[j]), c,
                                 _fmt(v.real), _fmt(v.imag)])
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return None


def read_field_csv(source) -> SpatioTemporalField:
    """Parse a field CSV (path or text). The grid must be complete and uniform."""
    if isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source, newline="") as fh:
            text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != ["t", "x", "channel", "re", "im"]:
        raise ValidationError("field CSV header must be t,x,channel,re,im")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"non-numeric field CSV entry: {exc}") from exc
    if data.size == 0:
        raise ValidationError("field CSV has no samples")
    ts, xs = np.unique(data[:, 0]), np.unique(data[:, 1])
    nc = int(data[:, 2].max()) + 1
    if data.shape[0] != ts.size * xs.size * nc:
        raise ValidationError("field CSV does not cover a full (t, x, channel) grid")
    values = (data[:, 3] + 1j * data[:, 4]).reshape(ts.size, xs.size, nc)
    dt = float(ts[1] - ts[0]) if ts.size > 1 else 1.0
    dx = float(xs[1] - xs[0]) if xs.size > 1 else 1.0
    return SpatioTemporalField(values, dt, dx, float(ts[0]), float(xs[0]))


def write_field_binary(field: SpatioTemporalField, path):
    nt, nx, nc = field.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, nt, nx, nc, field.dt, field.dx,
                              field.t0, field.x0))
        fh.write(np.ascontiguousarray(field.values, dtype="<c16").tobytes())


def read_field_binary(path) -> SpatioTemporalField:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size or blob[:8] != MAGIC:
        raise ValidationError("not an LTSIFLD1 field file")
    _, nt, nx, nc, dt, dx, t0, x0 = _HEADER.unpack_from(blob)
    body = blob[_HEADER.size:]
    if len(body) != nt * nx * nc * 16:
        raise ValidationError(
            f"field payload has {len(body)} bytes, expected {nt * nx * nc * 16}")
    values = np.frombuffer(body, dtype="<c16").reshape(nt, nx, nc)
    return SpatioTemporalField(values.astype(complex), dt, dx, t0, x0)


def sanitize(obj):
    """Make ``obj`` strict-JSON safe: numpy scalars to Python, non-finite floats
    to the strings ``"inf"``, ``"-inf"`` and ``"nan"``, tuples to lists."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, (complex, np.complexfloating)):
        return [sanitize(obj.real), sanitize(obj.imag)]
    return obj


def dumps_json(obj) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, no NaN literals."""
    return json.dumps(sanitize(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj, path):
    with open(path, "w", newline="") as fh:
        fh.write(dumps_json(obj))
