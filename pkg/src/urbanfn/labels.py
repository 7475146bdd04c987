"""Weak-label generation: function classes, tag remapping, label rasters.

Buildings are assigned the function of the AOI polygon they overlap most
(by area).  Buildings touching no AOI keep the UNLABELED sentinel (255)
and are masked out of the loss via the supervision raster.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import shapely.geometry

from .fileio import atomic_write_text
from .polygons import Polygon, rasterize_polygons
from .raster import GridSpec, RasterGrid, load_bsqf, save_bsqf

logger = logging.getLogger(__name__)

UNLABELED = 255
FUNCTION_CODES = (1, 2, 3, 4, 5, 6, 7)


class FunctionClass(IntEnum):
    BACKGROUND = 0
    RESIDENTIAL = 1
    COMMERCIAL = 2
    PUBLIC_SERVICE = 3
    PUBLIC_HEALTH = 4
    SPORT_ART = 5
    EDUCATIONAL = 6
    INDUSTRIAL = 7
    UNLABELED_BUILDING = 255


# Illustrative tag dictionary: common place-function tags -> the 7 classes.
DEFAULT_CLASS_MAP = {
    "residential": FunctionClass.RESIDENTIAL,
    "apartments": FunctionClass.RESIDENTIAL,
    "house": FunctionClass.RESIDENTIAL,
    "dormitory": FunctionClass.RESIDENTIAL,
    "terrace": FunctionClass.RESIDENTIAL,
    "market": FunctionClass.COMMERCIAL,
    "department": FunctionClass.COMMERCIAL,
    "mall": FunctionClass.COMMERCIAL,
    "supermarket": FunctionClass.COMMERCIAL,
    "shop": FunctionClass.COMMERCIAL,
    "restaurant": FunctionClass.COMMERCIAL,
    "hotel": FunctionClass.COMMERCIAL,
    "office": FunctionClass.COMMERCIAL,
    "townhall": FunctionClass.PUBLIC_SERVICE,
    "government": FunctionClass.PUBLIC_SERVICE,
    "police": FunctionClass.PUBLIC_SERVICE,
    "fire_station": FunctionClass.PUBLIC_SERVICE,
    "courthouse": FunctionClass.PUBLIC_SERVICE,
    "post_office": FunctionClass.PUBLIC_SERVICE,
    "community_centre": FunctionClass.PUBLIC_SERVICE,
    "hospital": FunctionClass.PUBLIC_HEALTH,
    "clinic": FunctionClass.PUBLIC_HEALTH,
    "pharmacy": FunctionClass.PUBLIC_HEALTH,
    "doctors": FunctionClass.PUBLIC_HEALTH,
    "cinema": FunctionClass.SPORT_ART,
    "theatre": FunctionClass.SPORT_ART,
    "stadium": FunctionClass.SPORT_ART,
    "sports_centre": FunctionClass.SPORT_ART,
    "gym": FunctionClass.SPORT_ART,
    "museum": FunctionClass.SPORT_ART,
    "gallery": FunctionClass.SPORT_ART,
    "school": FunctionClass.EDUCATIONAL,
    "university": FunctionClass.EDUCATIONAL,
    "college": FunctionClass.EDUCATIONAL,
    "kindergarten": FunctionClass.EDUCATIONAL,
    "library": FunctionClass.EDUCATIONAL,
    "factory": FunctionClass.INDUSTRIAL,
    "warehouse": FunctionClass.INDUSTRIAL,
    "industrial": FunctionClass.INDUSTRIAL,
    "works": FunctionClass.INDUSTRIAL,
    "workshop": FunctionClass.INDUSTRIAL,
}


class ClassMap:
    """tag string -> function code (1..7)."""

    def __init__(self, entries: dict):
        self.entries: dict[str, int] = {}
        for tag, code in entries.items():
            code = int(code)
            if code not in FUNCTION_CODES:
                raise ValueError(f"tag {tag!r} maps to {code}, outside 1..7")
            self.entries[str(tag)] = code

    def __contains__(self, tag: str) -> bool:
        return tag in self.entries

    def __getitem__(self, tag: str) -> int:
        return self.entries[tag]

    @staticmethod
    def default() -> "ClassMap":
        return ClassMap(DEFAULT_CLASS_MAP)

    @staticmethod
    def load(path) -> "ClassMap":
        with open(path, "r", encoding="utf-8") as fh:
            return ClassMap(json.load(fh))

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.entries, indent=2, sort_keys=True) + "\n")


def remap_aoi(attributes: dict, class_map: ClassMap, tag_key: str = "function") -> int | None:
    """Map an AOI's tag attribute to a function code; None when unusable.

    Missing tag key and unmapped tags are reported and skipped.
    """
    if tag_key not in attributes:
        logger.warning("AOI without %r attribute skipped: %s", tag_key, attributes)
        return None
    tag = str(attributes[tag_key])
    if tag not in class_map:
        logger.warning("AOI tag %r not covered by the class map; skipped", tag)
        return None
    return class_map[tag]


def _shapely_of(poly: Polygon):
    return shapely.geometry.Polygon(poly.exterior, poly.holes)


def assign_building_functions(buildings: list[Polygon],
                              aois: list[tuple[Polygon, int]]) -> list[tuple[Polygon, int]]:
    """Assign each building the class of its maximum-overlap AOI.

    Returns (building, code) pairs aligned with the input order; buildings
    with zero AOI overlap get the UNLABELED sentinel.  Overlap-area ties
    break toward the lower class code, so the result is independent of the
    ordering of either input list.  Invalid polygons are skipped with a
    diagnostic (buildings: dropped from the output; AOIs: ignored).
    """
    prepared = []
    for aoi, code in aois:
        if aoi.is_degenerate():
            logger.warning("degenerate AOI skipped (class %s)", code)
            continue
        shp = _shapely_of(aoi)
        if not shp.is_valid:
            logger.warning("invalid AOI geometry skipped (class %s)", code)
            continue
        prepared.append((shp, int(code)))

    out = []
    for b in buildings:
        if b.is_degenerate():
            logger.warning("degenerate building skipped")
            continue
        bshp = _shapely_of(b)
        if not bshp.is_valid:
            logger.warning("invalid building geometry skipped")
            continue
        best_code = UNLABELED
        best_area = 0.0
        for shp, code in prepared:
            area = bshp.intersection(shp).area
            if area > best_area or (area == best_area and area > 0.0 and code < best_code):
                best_area = area
                best_code = code
        out.append((b, best_code))
    return out


@dataclass
class LabelRaster:
    """Per-pixel labels plus the supervision gate.

    labels: 1-band raster with values in {0..7, 255}; supervision: 1-band
    {0,1} raster, zero exactly where labels hold the UNLABELED sentinel.
    """

    labels: RasterGrid
    supervision: RasterGrid

    def __post_init__(self):
        lab = self.labels.data[0]
        sup = self.supervision.data[0]
        if lab.shape != sup.shape:
            raise ValueError("labels and supervision must share a grid")
        expected = (lab != UNLABELED).astype(np.float32)
        if not np.array_equal(sup, expected):
            raise ValueError("supervision must be 0 exactly where labels == 255")

    @staticmethod
    def from_labels(labels: RasterGrid) -> "LabelRaster":
        sup = RasterGrid((labels.data[0] != UNLABELED).astype(np.float32),
                         labels.transform)
        return LabelRaster(labels, sup)

    def save(self, directory, prefix: str) -> None:
        save_bsqf(self.labels, f"{directory}/{prefix}_labels")
        save_bsqf(self.supervision, f"{directory}/{prefix}_supervision")

    @staticmethod
    def load(directory, prefix: str) -> "LabelRaster":
        return LabelRaster(load_bsqf(f"{directory}/{prefix}_labels"),
                           load_bsqf(f"{directory}/{prefix}_supervision"))


def build_label_raster(assigned: list[tuple[Polygon, int]], spec: GridSpec) -> LabelRaster:
    """Rasterize assigned buildings over a zero background.

    Painting order: unlabeled buildings first, then labeled, each group by
    ascending area (ties by class code and bounds), so a labeled building
    is never occluded by an unlabeled one.
    """
    for _, code in assigned:
        if code != UNLABELED and code not in FUNCTION_CODES:
            raise ValueError(f"building class {code} outside {{1..7, 255}}")

    def paint_key(item):
        poly, code = item
        return (code != UNLABELED, poly.area(), code, poly.bounds())

    ordered = sorted(assigned, key=paint_key)
    labels = rasterize_polygons([(p, float(c)) for p, c in ordered], spec, fill=0.0)
    return LabelRaster.from_labels(labels)
