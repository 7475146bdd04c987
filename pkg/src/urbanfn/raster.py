"""Georeferenced raster primitives: affine grids, resampling, BSQF I/O.

Conventions
-----------
* The affine transform maps the CENTER of pixel (col=0, row=0) to
  (origin_x, origin_y).  `px > 0`; `py` may be negative (north-up).
* Raster payloads are float32, stored band-sequential as an ndarray of
  shape [bands, height, width] (C order, i.e. row-major within band).
* The on-disk container ("BSQF") is a `<name>.json` sidecar plus a
  `<name>.bin` of raw little-endian float32, band-sequential.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fileio import atomic_write_bytes, atomic_write_text


@dataclass(frozen=True)
class AffineTransform:
    """Axis-aligned affine grid geometry (no rotation terms).

    origin_x, origin_y: world coordinates (meters) of the center of pixel
    (0, 0).  px is meters per pixel along +col, py meters per pixel along
    +row (negative for north-up grids).
    """

    origin_x: float
    origin_y: float
    px: float
    py: float

    def __post_init__(self):
        if not self.px > 0:
            raise ValueError(f"pixel_size_x must be > 0, got {self.px}")
        if self.py == 0:
            raise ValueError("pixel_size_y must be nonzero")

    def pixel_to_world(self, col, row):
        """Fractional pixel coordinates -> world meters (pixel centers at integers)."""
        col = np.asarray(col, dtype=np.float64)
        row = np.asarray(row, dtype=np.float64)
        x = self.origin_x + col * self.px
        y = self.origin_y + row * self.py
        if x.ndim == 0:
            return float(x), float(y)
        return x, y

    def world_to_pixel(self, x, y):
        """World meters -> fractional (col, row); exact inverse of pixel_to_world."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        col = (x - self.origin_x) / self.px
        row = (y - self.origin_y) / self.py
        if col.ndim == 0:
            return float(col), float(row)
        return col, row


@dataclass(frozen=True)
class GridSpec:
    """Target geometry for rasterization / resampling: size plus transform."""

    width: int
    height: int
    transform: AffineTransform

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must have at least one pixel")

    def pixel_centers(self):
        """1-D world coordinates of all pixel centers: (xs[width], ys[height])."""
        t = self.transform
        xs = t.origin_x + np.arange(self.width, dtype=np.float64) * t.px
        ys = t.origin_y + np.arange(self.height, dtype=np.float64) * t.py
        return xs, ys

    def extent(self):
        """(xmin, xmax, ymin, ymax) of the area covered by pixels."""
        t = self.transform
        x0 = t.origin_x - t.px / 2.0
        x1 = t.origin_x + (self.width - 1) * t.px + t.px / 2.0
        ya = t.origin_y - t.py / 2.0
        yb = t.origin_y + (self.height - 1) * t.py + t.py / 2.0
        return (min(x0, x1), max(x0, x1), min(ya, yb), max(ya, yb))


@dataclass
class RasterGrid:
    """Georeferenced band-sequential float32 raster."""

    data: np.ndarray  # [bands, height, width] float32
    transform: AffineTransform
    nodata: float | None = None
    band_names: list[str] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim == 2:
            self.data = self.data[None, :, :]
        if self.data.ndim != 3:
            raise ValueError(f"raster data must be [bands, h, w], got shape {self.data.shape}")
        if self.data.dtype != np.float32:
            self.data = self.data.astype(np.float32)
        if self.data.shape[1] < 1 or self.data.shape[2] < 1:
            raise ValueError("raster must have at least one pixel")
        if self.band_names is not None and len(self.band_names) != self.data.shape[0]:
            raise ValueError("band_names length must match band count")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.width, self.height, self.transform)

    @property
    def pixel_area(self) -> float:
        """Area of one pixel in square meters."""
        return abs(self.transform.px * self.transform.py)

    def copy(self) -> "RasterGrid":
        names = list(self.band_names) if self.band_names is not None else None
        return RasterGrid(self.data.copy(), self.transform, self.nodata, names)

    @staticmethod
    def filled(spec: GridSpec, bands: int = 1, value: float = 0.0,
               nodata: float | None = None, band_names: list[str] | None = None) -> "RasterGrid":
        data = np.full((bands, spec.height, spec.width), value, dtype=np.float32)
        return RasterGrid(data, spec.transform, nodata, band_names)


def _extents_overlap(a: GridSpec, b: GridSpec) -> bool:
    ax0, ax1, ay0, ay1 = a.extent()
    bx0, bx1, by0, by1 = b.extent()
    return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1


def resample_to_grid(src: RasterGrid, spec: GridSpec, method: str = "nearest") -> RasterGrid:
    """Resample `src` onto the grid geometry `spec`.

    Each destination pixel is sampled at its center's world coordinate.
    "nearest" picks the closest source pixel center (ties round toward the
    higher index); "bilinear" blends the 4 surrounding centers with clamped
    weights, so outputs stay within [min(src), max(src)].  Destination
    pixels whose centers fall outside the source extent become nodata.
    """
    if method not in ("nearest", "bilinear"):
        raise ValueError(f"unknown resampling method: {method!r}")
    if not _extents_overlap(src.spec, spec):
        raise ValueError("empty intersection: source and destination grids do not overlap")

    xs, ys = spec.pixel_centers()
    st = src.transform
    fc = (xs - st.origin_x) / st.px           # fractional src col per dst col
    fr = (ys - st.origin_y) / st.py           # fractional src row per dst row
    sw, sh = src.width, src.height

    valid_c = (fc >= -0.5) & (fc <= sw - 0.5)
    valid_r = (fr >= -0.5) & (fr <= sh - 0.5)
    valid = valid_r[:, None] & valid_c[None, :]
    all_valid = bool(valid.all())

    if method == "nearest":
        ci = np.clip(np.floor(fc + 0.5).astype(np.int64), 0, sw - 1)
        ri = np.clip(np.floor(fr + 0.5).astype(np.int64), 0, sh - 1)
        out = src.data[:, ri[:, None], ci[None, :]]
        out = np.ascontiguousarray(out)
    else:
        fcc = np.clip(fc, 0.0, sw - 1.0)
        frc = np.clip(fr, 0.0, sh - 1.0)
        c0 = np.clip(np.floor(fcc).astype(np.int64), 0, max(sw - 2, 0))
        r0 = np.clip(np.floor(frc).astype(np.int64), 0, max(sh - 2, 0))
        c1 = np.minimum(c0 + 1, sw - 1)
        r1 = np.minimum(r0 + 1, sh - 1)
        wc = (fcc - c0).astype(np.float32)
        wr = (frc - r0).astype(np.float32)
        d = src.data
        top = d[:, r0[:, None], c0[None, :]] * (1 - wc)[None, None, :] + \
            d[:, r0[:, None], c1[None, :]] * wc[None, None, :]
        bot = d[:, r1[:, None], c0[None, :]] * (1 - wc)[None, None, :] + \
            d[:, r1[:, None], c1[None, :]] * wc[None, None, :]
        out = top * (1 - wr)[None, :, None] + bot * wr[None, :, None]
        out = out.astype(np.float32)
        if src.nodata is not None:
            n = src.nodata
            bad = (d[:, r0[:, None], c0[None, :]] == n) | (d[:, r0[:, None], c1[None, :]] == n) | \
                  (d[:, r1[:, None], c0[None, :]] == n) | (d[:, r1[:, None], c1[None, :]] == n)
            out = np.where(bad, np.float32(n), out)

    nodata = src.nodata
    if not all_valid:
        if nodata is None:
            nodata = float("nan")
        out = np.where(valid[None, :, :], out, np.float32(nodata))
    names = list(src.band_names) if src.band_names is not None else None
    return RasterGrid(out, spec.transform, nodata, names)


# ---------------------------------------------------------------------------
# BSQF container
# ---------------------------------------------------------------------------

def _strip_bsqf_suffix(path: str | Path) -> Path:
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p


def save_bsqf(grid: RasterGrid, path: str | Path) -> None:
    """Write `<path>.json` + `<path>.bin` (accepts a bare or suffixed path)."""
    base = _strip_bsqf_suffix(path)
    names = grid.band_names or [f"band_{i + 1}" for i in range(grid.bands)]
    t = grid.transform
    header = {
        "width": grid.width,
        "height": grid.height,
        "bands": grid.bands,
        "transform": {"origin_x": t.origin_x, "origin_y": t.origin_y, "px": t.px, "py": t.py},
        "nodata": grid.nodata,
        "band_names": list(names),
    }
    atomic_write_text(base.with_suffix(".json"),
                      json.dumps(header, indent=2, sort_keys=True) + "\n")
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    atomic_write_bytes(base.with_suffix(".bin"), payload)


def load_bsqf(path: str | Path) -> RasterGrid:
    base = _strip_bsqf_suffix(path)
    with open(base.with_suffix(".json"), "r", encoding="utf-8") as fh:
        header = json.load(fh)
    w, h, b = header["width"], header["height"], header["bands"]
    raw = np.fromfile(base.with_suffix(".bin"), dtype="<f4")
    if raw.size != w * h * b:
        raise ValueError(
            f"BSQF payload length {raw.size} does not match header {b}x{h}x{w}")
    t = header["transform"]
    nodata = header.get("nodata")
    if isinstance(nodata, float) and math.isnan(nodata):
        nodata = float("nan")
    return RasterGrid(
        raw.reshape(b, h, w).astype(np.float32),
        AffineTransform(t["origin_x"], t["origin_y"], t["px"], t["py"]),
        nodata,
        list(header["band_names"]),
    )
