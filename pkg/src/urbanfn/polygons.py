"""Planar polygons, pixel-center rasterization, GeoJSON-subset I/O.

Pixel membership uses the even-odd rule on pixel centers with a half-open
tie rule: a center exactly on a polygon edge counts as inside when the edge
is a "bottom" or "left" boundary (lower y / lower x side), so two polygons
sharing an edge never both claim the same pixel.  The crossing test is the
cross-product form, which is exact in float64 for lattice-aligned inputs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .fileio import atomic_write_text
from .raster import GridSpec, RasterGrid

logger = logging.getLogger(__name__)

Ring = list  # list of (x, y) tuples, closed after normalization


def _close_ring(ring) -> list[tuple[float, float]]:
    pts = [(float(x), float(y)) for x, y in ring]
    if len(pts) >= 1 and pts[0] != pts[-1]:
        pts.append(pts[0])
    return pts


@dataclass
class Polygon:
    """Simple planar polygon: one exterior ring, optional holes, string tags."""

    exterior: Ring
    holes: list[Ring] = field(default_factory=list)
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.exterior = _close_ring(self.exterior)
        self.holes = [_close_ring(h) for h in self.holes]

    def rings(self):
        yield self.exterior
        yield from self.holes

    def is_degenerate(self) -> bool:
        """True when any ring has fewer than 3 distinct vertices."""
        for ring in self.rings():
            if len(set(ring[:-1])) < 3:
                return True
        return False

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p[0] for r in self.rings() for p in r]
        ys = [p[1] for r in self.rings() for p in r]
        return min(xs), min(ys), max(xs), max(ys)

    def area(self) -> float:
        """Unsigned area: |shoelace(exterior)| minus hole areas."""
        def ring_area(ring):
            a = 0.0
            for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
                a += x0 * y1 - x1 * y0
            return abs(a) / 2.0

        return ring_area(self.exterior) - sum(ring_area(h) for h in self.holes)

    @staticmethod
    def rectangle(x0: float, y0: float, x1: float, y1: float,
                  attributes: dict | None = None) -> "Polygon":
        xa, xb = min(x0, x1), max(x0, x1)
        ya, yb = min(y0, y1), max(y0, y1)
        return Polygon([(xa, ya), (xb, ya), (xb, yb), (xa, yb)],
                       attributes=dict(attributes or {}))


def points_in_polygon(poly: Polygon, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Even-odd membership of the grid {ys} x {xs} of points; returns [len(ys), len(xs)].

    On-edge points follow the half-open rule described in the module docstring.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = np.zeros((ys.size, xs.size), dtype=bool)
    for ring in poly.rings():
        for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
            if y0 == y1:
                continue
            spans = (y0 > ys) != (y1 > ys)  # half-open in y: lower endpoint included
            if not spans.any():
                continue
            cross = (x1 - x0) * (ys[:, None] - y0) - (xs[None, :] - x0) * (y1 - y0)
            hit = cross > 0 if y1 > y0 else cross < 0
            inside ^= spans[:, None] & hit
    return inside


def rasterize_polygons(polys, spec: GridSpec, fill: float = 0.0) -> RasterGrid:
    """Paint (Polygon, value) pairs onto a 1-band raster; later entries win.

    A pixel takes a polygon's value iff its center is inside under the
    even-odd rule.  Degenerate polygons (< 3 distinct vertices in a ring)
    are skipped with a diagnostic.
    """
    out = RasterGrid.filled(spec, bands=1, value=float(fill))
    xs, ys = spec.pixel_centers()
    t = spec.transform
    for poly, value in polys:
        if poly.is_degenerate():
            logger.warning("skipping degenerate polygon (value=%s)", value)
            continue
        minx, miny, maxx, maxy = poly.bounds()
        c_lo = max(int(np.ceil((minx - t.origin_x) / t.px)), 0)
        c_hi = min(int(np.floor((maxx - t.origin_x) / t.px)), spec.width - 1)
        fr0 = (miny - t.origin_y) / t.py
        fr1 = (maxy - t.origin_y) / t.py
        r_lo = max(int(np.ceil(min(fr0, fr1))), 0)
        r_hi = min(int(np.floor(max(fr0, fr1))), spec.height - 1)
        if c_lo > c_hi or r_lo > r_hi:
            continue
        mask = points_in_polygon(poly, xs[c_lo:c_hi + 1], ys[r_lo:r_hi + 1])
        window = out.data[0, r_lo:r_hi + 1, c_lo:c_hi + 1]
        window[mask] = np.float32(value)
    return out


# ---------------------------------------------------------------------------
# GeoJSON subset (Polygon-only FeatureCollection, planar meter coordinates)
# ---------------------------------------------------------------------------

def save_geojson(polys: list[Polygon], path) -> None:
    features = []
    for p in polys:
        coords = [[list(pt) for pt in p.exterior]]
        coords += [[list(pt) for pt in h] for h in p.holes]
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": coords},
            "properties": dict(p.attributes),
        })
    doc = {"type": "FeatureCollection", "features": features}
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_geojson(path) -> list[Polygon]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise ValueError("expected a FeatureCollection")
    polys = []
    for feat in doc.get("features", []):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise ValueError(f"unsupported geometry type: {geom.get('type')!r}")
        rings = geom["coordinates"]
        polys.append(Polygon(
            exterior=[tuple(pt) for pt in rings[0]],
            holes=[[tuple(pt) for pt in r] for r in rings[1:]],
            attributes=dict(feat.get("properties") or {}),
        ))
    return polys
