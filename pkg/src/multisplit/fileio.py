"""Trace CSV, plot data, PGM images and plain-text grids.

All writers go through a temporary file in the target directory followed by
``os.replace`` so readers never see a partial file.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile

import numpy as np

__all__ = [
    "TRACE_COLUMNS",
    "atomic_write",
    "emit_plot_data",
    "format_trace_csv",
    "load_grid",
    "read_pgm",
    "read_trace_csv",
    "save_grid",
    "write_pgm",
    "write_trace_csv",
]

TRACE_COLUMNS = ("iter", "obj_min", "obj_sum", "relerr", "elapsed_ms")


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to ``path`` atomically."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def format_trace_csv(record) -> str:
    """CSV text for a run record: the standard columns, then any extras."""
    extras = [c for c in record.columns if c not in TRACE_COLUMNS]
    header = list(TRACE_COLUMNS) + extras
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in record.rows:
        writer.writerow([_fmt(row[c]) for c in header])
    return buf.getvalue()


def write_trace_csv(record, path) -> None:
    atomic_write(path, format_trace_csv(record))


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "iter" else float(v)) for k, v in row.items()} for row in rows]


def emit_plot_data(record, prefix) -> list[str]:
    """Write ``<prefix>_obj.dat`` (iter, obj_min) and, when the trace has an
    ISNR column, ``<prefix>_isnr.dat``.  Returns the paths written."""
    if not record.rows:
        raise ValueError("empty trace")
    prefix = os.fspath(prefix)
    paths = []
    for col in ("obj_min", "isnr"):
        if col not in record.rows[0]:
            continue
        name = "obj" if col == "obj_min" else col
        path = f"{prefix}_{name}.dat"
        lines = [f"{row['iter']} {_fmt(row[col])}" for row in record.rows]
        atomic_write(path, "\n".join(lines) + "\n")
        paths.append(path)
    return paths


def write_pgm(path, image) -> None:
    """Binary PGM (P5, maxval 255); values are clipped and rounded."""
    img = np.clip(np.rint(np.asarray(image, dtype=float)), 0, 255).astype(np.uint8)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2D")
    H, W = img.shape
    atomic_write(path, f"P5\n{W} {H}\n255\n".encode("ascii") + img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    magic, W, H, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != b"P5":
        raise ValueError(f"{path}: only binary P5 PGM is supported")
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=W * H, offset=pos)
    return pixels.reshape(H, W).astype(float)


def save_grid(path, grid) -> None:
    """Lossless plain-text grid, one row per line."""
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(grid), fmt="%.17g")
    atomic_write(path, buf.getvalue())


def load_grid(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)
