"""Gridded heightmaps, slope obstacle masks and their file formats.

Grid convention: ``heights[i, j]`` is the height of the square cell spanning
``x in [ox + j*c, ox + (j+1)*c)`` and ``y in [oy + i*c, oy + (i+1)*c)`` where
``c`` is ``cell_size`` and ``(ox, oy)`` is ``origin``.  Row 0 is the lowest y.

File formats
------------
CSV
    Optional ``# cell_size=<m>`` and ``# origin=<x>,<y>`` header lines, then
    one comma-separated row of heights (metres) per grid row, row 0 first.
    Floats are written in shortest round-trip form, so export then import
    is exact.
PGM
    Binary 16-bit greyscale (``P5``, maxval 65535, big-endian) with header
    comments ``# cell_size=``, ``# origin=`` and ``# vertical_scale=``.
    Height = pixel / maxval * vertical_scale.  Image row 0 is the top of the
    picture, i.e. the highest-y grid row.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_grid, check_positive

__all__ = [
    "Heightmap",
    "ObstacleMask",
    "HeightmapParseError",
    "load_heightmap",
    "export_heightmap",
    "gradient_obstacles",
    "GradientObstacleMasker",
    "two_ridge_heightmap",
]


class HeightmapParseError(ValueError):
    """Malformed heightmap file; the message carries row/column context."""


@dataclass(frozen=True)
class Heightmap:
    heights: np.ndarray
    cell_size: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "heights", check_grid(self.heights, "heights"))
        check_positive(self.cell_size, "cell_size")
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))

    @property
    def shape(self):
        return self.heights.shape

    @property
    def extent(self):
        ny, nx = self.heights.shape
        ox, oy = self.origin
        return (ox, ox + nx * self.cell_size, oy, oy + ny * self.cell_size)


@dataclass(frozen=True)
class ObstacleMask:
    blocked: np.ndarray
    grad_threshold: float
    cell_size: float = 1.0
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "blocked", np.asarray(self.blocked, dtype=bool))
        if self.blocked.ndim != 2:
            raise ValueError("blocked must be a 2D grid")
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))

    @property
    def shape(self):
        return self.blocked.shape

    def cell_of(self, xy):
        """(row, col) integer indices of the cells containing the points."""
        xy = np.asarray(xy, dtype=float)
        col = np.floor((xy[..., 0] - self.origin[0]) / self.cell_size).astype(int)
        row = np.floor((xy[..., 1] - self.origin[1]) / self.cell_size).astype(int)
        return row, col

    def cell_center(self, row, col):
        return (self.origin[0] + (np.asarray(col) + 0.5) * self.cell_size,
                self.origin[1] + (np.asarray(row) + 0.5) * self.cell_size)

    def clearance(self):
        """Distance (m) from every cell centre to the nearest blocked cell centre."""
        if not self.blocked.any():
            return np.full(self.blocked.shape, np.inf)
        return ndimage.distance_transform_edt(~self.blocked) * self.cell_size

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(f"# cell_size={self.cell_size!r}\n# origin={self.origin[0]!r},{self.origin[1]!r}\n")
        buf.write(f"# grad_threshold={self.grad_threshold!r}\n")
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.blocked:
            writer.writerow([int(b) for b in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def gradient_obstacles(hm, grad_threshold):
    """Block cells whose central-difference slope magnitude exceeds the threshold."""
    if not grad_threshold > 0:
        raise ValueError(f"grad_threshold must be > 0, got {grad_threshold}")
    gy, gx = np.gradient(hm.heights, hm.cell_size)
    slope = np.hypot(gx, gy)
    return ObstacleMask(slope > grad_threshold, float(grad_threshold), hm.cell_size, hm.origin)


class GradientObstacleMasker(TransformerMixin, BaseEstimator):
    """Heights grid -> boolean obstacle grid, blocking steep cells."""

    def __init__(self, grad_threshold=1.0, cell_size=1.0):
        self.grad_threshold = grad_threshold
        self.cell_size = cell_size

    def fit(self, X, y=None):
        X = check_grid(X, "X")
        check_positive(self.cell_size, "cell_size")
        if not self.grad_threshold > 0:
            raise ValueError("grad_threshold must be > 0")
        self.shape_ = X.shape
        return self

    def transform(self, X):
        return gradient_obstacles(Heightmap(X, self.cell_size), self.grad_threshold).blocked


_META = re.compile(r"#\s*(\w+)\s*=\s*(.*)")


def _parse_meta(lines):
    meta = {}
    for line in lines:
        m = _META.match(line.strip())
        if m:
            meta[m.group(1)] = m.group(2).strip()
    return meta


def _meta_float(meta, key, default, path):
    if key not in meta:
        return default
    try:
        return float(meta[key])
    except ValueError:
        raise HeightmapParseError(f"{path}: bad header value {key}={meta[key]!r}") from None


def _meta_origin(meta, path):
    if "origin" not in meta:
        return (0.0, 0.0)
    parts = meta["origin"].split(",")
    try:
        return tuple(float(p) for p in parts[:2]) if len(parts) == 2 else None
    except ValueError:
        raise HeightmapParseError(f"{path}: bad origin {meta['origin']!r}") from None


def _load_csv(path, cell_size):
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    meta = _parse_meta(l for l in lines if l.lstrip().startswith("#"))
    rows = []
    width = None
    data_row = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = line.split(",")
        values = []
        for col, cell in enumerate(cells):
            try:
                values.append(float(cell))
            except ValueError:
                raise HeightmapParseError(
                    f"{path}: row {data_row}, column {col} (line {lineno}): cannot parse {cell.strip()!r}"
                ) from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise HeightmapParseError(
                f"{path}: row {data_row} (line {lineno}) has {len(values)} columns, expected {width}")
        rows.append(values)
        data_row += 1
    if len(rows) < 2 or (width or 0) < 2:
        raise HeightmapParseError(f"{path}: need at least a 2x2 grid")
    origin = _meta_origin(meta, path)
    if origin is None:
        raise HeightmapParseError(f"{path}: origin needs two components")
    cs = cell_size if cell_size is not None else _meta_float(meta, "cell_size", 1.0, path)
    return Heightmap(np.array(rows), cs, origin)


def _read_pgm_token(buf, pos, comments):
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            end = buf.find(b"\n", pos)
            end = n if end < 0 else end
            comments.append(buf[pos:end].decode("ascii", "replace"))
            pos = end + 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    return buf[start:pos], pos


def _load_pgm(path, cell_size, vertical_scale):
    with open(path, "rb") as fh:
        buf = fh.read()
    comments = []
    fields, pos = [], 0
    for _ in range(4):
        tok, pos = _read_pgm_token(buf, pos, comments)
        fields.append(tok)
    if fields[0] != b"P5":
        raise HeightmapParseError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise HeightmapParseError(f"{path}: bad PGM header {fields[1:]}") from None
    if not 0 < maxval < 65536:
        raise HeightmapParseError(f"{path}: maxval {maxval} out of range")
    pos += 1
    dtype = ">u2" if maxval > 255 else "u1"
    itemsize = 2 if maxval > 255 else 1
    need = width * height * itemsize
    raw = buf[pos:pos + need]
    if len(raw) != need:
        have = len(raw) // itemsize
        raise HeightmapParseError(
            f"{path}: pixel data truncated at row {have // max(width, 1)}, column {have % max(width, 1)}")
    pixels = np.frombuffer(raw, dtype=dtype).reshape(height, width).astype(float)
    meta = _parse_meta(comments)
    scale = vertical_scale if vertical_scale is not None else _meta_float(meta, "vertical_scale", None, path)
    if scale is None:
        raise HeightmapParseError(f"{path}: vertical_scale not declared")
    cs = cell_size if cell_size is not None else _meta_float(meta, "cell_size", 1.0, path)
    origin = _meta_origin(meta, path)
    heights = pixels[::-1] / maxval * scale
    return Heightmap(heights, cs, origin), scale


def load_heightmap(path, cell_size=None, vertical_scale=None):
    """Read a CSV or 16-bit PGM heightmap (chosen by file extension)."""
    path = str(path)
    if path.lower().endswith(".pgm"):
        return _load_pgm(path, cell_size, vertical_scale)[0]
    return _load_csv(path, cell_size)


def export_heightmap(hm, path, vertical_scale=None):
    """Write a heightmap as CSV (exact) or 16-bit PGM (quantized to 1/65535 of the scale)."""
    path = str(path)
    if path.lower().endswith(".pgm"):
        h = hm.heights
        scale = float(h.max()) if vertical_scale is None else float(vertical_scale)
        if scale <= 0:
            raise ValueError("PGM export needs a positive vertical_scale")
        if h.min() < 0 or h.max() > scale * (1 + 1e-12):
            raise ValueError("PGM heights must lie in [0, vertical_scale]")
        pixels = np.rint(np.clip(h / scale, 0.0, 1.0) * 65535).astype(">u2")[::-1]
        header = (f"P5\n# cell_size={hm.cell_size!r}\n# origin={hm.origin[0]!r},{hm.origin[1]!r}\n"
                  f"# vertical_scale={scale!r}\n{h.shape[1]} {h.shape[0]}\n65535\n")
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(pixels.tobytes())
        return
    buf = io.StringIO()
    buf.write(f"# cell_size={hm.cell_size!r}\n# origin={hm.origin[0]!r},{hm.origin[1]!r}\n")
    writer = csv.writer(buf, lineterminator="\n")
    for row in hm.heights:
        writer.writerow([repr(float(x)) for x in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def two_ridge_heightmap(size=16.0, cell_size=0.25, ridge_height=3.0, ridge_width=1.0,
                        ridge_x=(4.0, 12.0), base_slope=0.1):
    """Square test terrain: a gentle upslope with two steep ridges running along y.

    The ground rises by ``base_slope`` per metre in y; Gaussian ridges sit at
    the given x positions, leaving a gently sloped corridor between them.
    """
    n = int(round(size / cell_size))
    c = (np.arange(n) + 0.5) * cell_size
    X, Y = np.meshgrid(c, c)
    h = base_slope * Y
    for x0 in ridge_x:
        h = h + ridge_height * np.exp(-0.5 * ((X - x0) / ridge_width) ** 2)
    return Heightmap(h, cell_size, (0.0, 0.0))

