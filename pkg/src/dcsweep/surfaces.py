"""Synthetic test surfaces and height-map file I/O (CSV, binary PGM).

Synthetic formulas (frozen; ``S = min(H, W)``, cell-centre coordinates
``x = (col + 0.5) / W``, ``y = (row + 0.5) / H``, ``g(a, b) =
exp(-((x - a)**2 + (y - b)**2) / (2 * 0.12**2))``):

``sphere``
    ``sqrt(max(0, r**2 - d**2))`` with ``r = 0.4 * S`` and ``d`` the distance in
    pixels from the cell ``(H // 2, W // 2)``.
``ramp_peak``
    ``S * (0.25 * x + 0.3 * g(0.6, 0.4))``.
``peak_valley``
    ``S * 0.3 * (g(0.3, 0.3) - g(0.7, 0.7))``; point-symmetric, so it sums to 0.
"""

import csv
import io
import math
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .grid import GridDims, SurfaceGrid

SURFACE_KINDS = ("ramp_peak", "sphere", "peak_valley")
SURFACE_FORMULA_VERSION = 1

_LABELS = {"ramp_peak": "Ramp-peak", "sphere": "Sphere", "peak_valley": "Peak-valley"}
_BUMP_WIDTH = 0.12


def _bump(x, y, a, b):
    return np.exp(-((x - a) ** 2 + (y - b) ** 2) / (2 * _BUMP_WIDTH ** 2))


def gen_surface(kind, dims):
    if kind not in SURFACE_KINDS:
        raise ConfigurationError(f"unknown surface kind {kind!r}; expected one of {SURFACE_KINDS}")
    if not isinstance(dims, GridDims):
        dims = GridDims(*dims)
    H, W = dims.shape
    S = min(H, W)
    rows, cols = np.mgrid[0:H, 0:W].astype(float)
    if kind == "sphere":
        r = 0.4 * S
        d2 = (rows - H // 2) ** 2 + (cols - W // 2) ** 2
        z = np.sqrt(np.maximum(0.0, r * r - d2))
    else:
        x = (cols + 0.5) / W
        y = (rows + 0.5) / H
        if kind == "ramp_peak":
            z = S * (0.25 * x + 0.3 * _bump(x, y, 0.6, 0.4))
        else:
            z = S * 0.3 * (_bump(x, y, 0.3, 0.3) - _bump(x, y, 0.7, 0.7))
    return SurfaceGrid(dims, z.ravel(), _LABELS[kind])


def _read_pgm(data, label):
    if not data.startswith(b"P5"):
        raise ConfigurationError(f"{label}: not a binary PGM (missing P5 magic at byte 0)")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ConfigurationError(f"{label}: malformed PGM header at byte {pos}")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if not 0 < maxval < 65536:
        raise ConfigurationError(f"{label}: PGM maxval {maxval} out of range")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    if len(data) - pos < need:
        raise ConfigurationError(
            f"{label}: PGM pixel data truncated at byte {len(data)} (need {need} bytes from {pos})")
    px = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return px.reshape(height, width).astype(float) / maxval


def _read_csv(text, label):
    rows = []
    for i, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        cells = [c.strip() for c in row]
        if not cells or all(c == "" for c in cells):
            continue
        try:
            vals = [float(c) for c in cells]
        except ValueError as exc:
            raise ConfigurationError(f"{label}: row {i}: {exc}") from None
        if rows and len(vals) != len(rows[0]):
            raise ConfigurationError(
                f"{label}: row {i} has {len(vals)} columns, expected {len(rows[0])}")
        rows.append(vals)
    if not rows:
        raise ConfigurationError(f"{label}: empty CSV")
    return np.array(rows)


def load_surface(path, label=None):
    """Read a height map from CSV (rows of numbers) or binary PGM (rescaled to [0, 1])."""
    path = Path(path)
    label = label or path.stem
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read surface {path}: {exc}") from None
    if data.startswith(b"P5"):
        arr = _read_pgm(data, str(path))
    else:
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigurationError(f"{path}: not UTF-8 text at byte {exc.start}") from None
        arr = _read_csv(text, str(path))
    if not np.all(np.isfinite(arr)):
        r, c = np.argwhere(~np.isfinite(arr))[0]
        raise ConfigurationError(f"{path}: non-finite height at row {r + 1}, column {c + 1}")
    try:
        dims = GridDims(*arr.shape)
    except ConfigurationError as exc:
        raise ConfigurationError(
            f"{path}: {arr.shape[0]}x{arr.shape[1]} grid rejected; {exc}") from None
    return SurfaceGrid(dims, arr.ravel(), label)


def format_float(x):
    """Shortest round-trip decimal."""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def surface_to_csv(arr):
    arr = np.asarray(arr, dtype=float)
    return "".join(",".join(format_float(v) for v in row) + "\n" for row in arr)


def write_pgm(arr, maxval=65535):
    """Encode ``arr`` (scaled to its own min..max) as binary PGM bytes."""
    arr = np.asarray(arr, dtype=float)
    lo, hi = float(arr.min()), float(arr.max())
    scaled = np.zeros_like(arr) if hi == lo else (arr - lo) / (hi - lo)
    dtype = ">u2" if maxval > 255 else "u1"
    px = np.rint(scaled * maxval).astype(dtype)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    return header + px.tobytes()


def resolve_source(src, default_size=32):
    """Turn a config surface entry into a :class:`SurfaceGrid`.

    Entries are ``{"kind": ..., "size": N | [H, W], "label": ...}`` for the
    synthetic surfaces or ``{"path": ..., "label": ...}`` for files.
    """
    if isinstance(src, str):
        src = {"kind": src} if src in SURFACE_KINDS else {"path": src}
    if not isinstance(src, dict):
        raise ConfigurationError(f"surface entry must be an object, got {src!r}")
    if "path" in src:
        return load_surface(src["path"], src.get("label"))
    if "kind" not in src:
        raise ConfigurationError(f"surface entry needs 'kind' or 'path': {src!r}")
    size = src.get("size", default_size)
    shape = (size, size) if isinstance(size, int) else tuple(size)
    if len(shape) != 2:
        raise ConfigurationError(f"surface size must be N or [H, W], got {size!r}")
    s = gen_surface(src["kind"], GridDims(*shape))
    if src.get("label"):
        s = SurfaceGrid(s.dims, s.z, src["label"])
    return s
