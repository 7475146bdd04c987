"""Synthetic city generator with exactly known ground truth.

The generator lays out rectangular buildings on a district grid: every
tile is split into square blocks, each block is assigned one function
class for the whole city (largest-remainder allocation against a target
mix, then a seeded shuffle), and each block hosts up to four buildings
in its quadrants with guaranteed gaps between footprints.

Per class the city emits a characteristic height regime and night-light
regime (e.g. tall-but-dim residential towers versus low-but-bright
commercial blocks), which is what makes the seven classes separable
from the non-optical bands. Heights live on a coarse 10 m grid produced
by the real rasterizer; lights are a blurred radiance field on the same
grid; the optical image is a 1 m color map with additive noise.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .fileio import atomic_write_json
from .labels import (DEFAULT_CLASS_MAP, FUNCTION_CODES, ClassMap, LabelRaster,
                     assign_building_functions, build_label_raster, remap_aoi)
from .polygons import Polygon, rasterize_polygons, save_geojson
from .raster import AffineTransform, GridSpec, RasterGrid, save_bsqf


@dataclass(frozen=True)
class ClassProfile:
    """Height and light regime plus roof color for one function class."""

    bh_mean: float
    bh_std: float
    ntl_mean: float
    ntl_std: float
    color: tuple[float, float, float]


CLASS_PROFILES = {
    1: ClassProfile(50.0, 3.0, 8.0, 2.0, (180.0, 100.0, 90.0)),
    2: ClassProfile(10.0, 2.0, 80.0, 4.0, (160.0, 160.0, 170.0)),
    3: ClassProfile(8.0, 1.5, 35.0, 3.0, (120.0, 140.0, 200.0)),
    4: ClassProfile(28.0, 2.0, 55.0, 3.0, (230.0, 230.0, 230.0)),
    5: ClassProfile(16.0, 2.0, 20.0, 2.0, (90.0, 170.0, 90.0)),
    6: ClassProfile(20.0, 2.0, 42.0, 3.0, (200.0, 170.0, 110.0)),
    7: ClassProfile(6.0, 1.5, 16.0, 2.5, (110.0, 110.0, 120.0)),
}

# synonym tags (keys of the default class map) grouped per class code,
# used to stamp realistic-looking function strings onto the labeled areas
_TAGS_BY_CODE: dict[int, list[str]] = {}
for _tag, _cls in DEFAULT_CLASS_MAP.items():
    _TAGS_BY_CODE.setdefault(int(_cls), []).append(_tag)
for _code in _TAGS_BY_CODE:
    _TAGS_BY_CODE[_code].sort()


@dataclass
class CitySpec:
    """Layout and radiometry knobs for one generated city."""

    n_tiles: int = 8
    tile_px: int = 512           # 1 m pixels per tile side
    block_px: int = 64           # one function district
    coarse_m: float = 10.0       # height / light grid spacing
    class_mix: tuple = (0.40, 0.12, 0.08, 0.06, 0.08, 0.10, 0.16)
    occupancy: float = 0.7       # chance a block quadrant hosts a building
    label_coverage: float = 0.30  # fraction of buildings covered by a labeled area
    min_side: float = 14.0
    max_side: float = 28.0
    min_height: float = 3.0
    background_light: float = 2.0
    background_light_std: float = 0.5
    light_blur_sigma: float = 1.2
    light_gains: tuple = (1.0, 0.75, 0.55)
    background_color: tuple = (70.0, 85.0, 60.0)
    color_noise: float = 6.0

    def __post_init__(self):
        if self.n_tiles < 1:
            raise ValueError("need at least one tile")
        if self.tile_px % self.block_px:
            raise ValueError("tile_px must be a multiple of block_px")
        sub = self.block_px / 2.0
        if not (4.0 <= self.min_side <= self.max_side <= sub - 4.0):
            raise ValueError("building sides must fit a block quadrant with margins")
        if len(self.class_mix) != len(FUNCTION_CODES):
            raise ValueError("class_mix needs one share per function class")
        if any(s < 0 for s in self.class_mix) or sum(self.class_mix) <= 0:
            raise ValueError("class_mix shares must be non-negative and not all zero")
        if not 0.0 <= self.occupancy <= 1.0:
            raise ValueError("occupancy must lie in [0, 1]")
        if not 0.0 <= self.label_coverage <= 1.0:
            raise ValueError("label_coverage must lie in [0, 1]")

    @property
    def blocks_per_side(self) -> int:
        return self.tile_px // self.block_px

    @property
    def coarse_px(self) -> int:
        return math.ceil(self.tile_px / self.coarse_m)


def allocate_blocks(spec: CitySpec, seed: int) -> np.ndarray:
    """Class code for every block in the city, [n_tiles, b, b].

    Largest-remainder apportionment of the target mix over all blocks
    (remainder ties broken toward the lower class code), then one seeded
    shuffle across the whole city so districts land everywhere.
    """
    b = spec.blocks_per_side
    total = spec.n_tiles * b * b
    mix = np.asarray(spec.class_mix, dtype=np.float64)
    mix = mix / mix.sum()
    quota = mix * total
    base = np.floor(quota).astype(np.int64)
    short = total - int(base.sum())
    order = sorted(range(len(mix)), key=lambda i: (-(quota[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    codes = np.repeat(np.arange(1, len(mix) + 1, dtype=np.int32), base)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB10C]))
    rng.shuffle(codes)
    return codes.reshape(spec.n_tiles, b, b)


def _snap(v: float) -> float:
    """Snap to the 0.25 m lattice so tie rules behave identically everywhere."""
    return round(v * 4.0) / 4.0


@dataclass
class TileData:
    """Everything generated for one tile, in memory."""

    index: int
    oi: RasterGrid
    bh: RasterGrid
    ntl: RasterGrid
    truth: LabelRaster
    weak: LabelRaster
    buildings: list[Polygon]
    aois: list[Polygon]
    fine_spec: GridSpec = field(init=False)

    def __post_init__(self):
        self.fine_spec = self.oi.spec


def _tile_specs(spec: CitySpec, index: int) -> tuple[GridSpec, GridSpec]:
    x0 = float(index * spec.tile_px)
    fine = GridSpec(spec.tile_px, spec.tile_px,
                    AffineTransform(x0 + 0.5, -0.5, 1.0, -1.0))
    half = spec.coarse_m / 2.0
    coarse = GridSpec(spec.coarse_px, spec.coarse_px,
                      AffineTransform(x0 + half, -half, spec.coarse_m, -spec.coarse_m))
    return fine, coarse


def _tile_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index), stream]))


def synthesize_tile(spec: CitySpec, seed: int, index: int,
                    block_codes: np.ndarray) -> TileData:
    """Generate one tile. `block_codes` is the [b, b] district plan."""
    fine, coarse = _tile_specs(spec, index)
    geo_rng = _tile_rng(seed, index, 1)
    hgt_rng = _tile_rng(seed, index, 2)
    lgt_rng = _tile_rng(seed, index, 3)
    opt_rng = _tile_rng(seed, index, 4)
    cov_rng = _tile_rng(seed, index, 5)
    tag_rng = _tile_rng(seed, index, 6)

    x0 = float(index * spec.tile_px)
    sub = spec.block_px / 2.0
    buildings: list[Polygon] = []
    district_mean: list[tuple[Polygon, float]] = []
    district_std: list[tuple[Polygon, float]] = []
    for br in range(spec.blocks_per_side):
        for bc in range(spec.blocks_per_side):
            code = int(block_codes[br, bc])
            prof = CLASS_PROFILES[code]
            bx = x0 + bc * spec.block_px
            by_top = -float(br * spec.block_px)
            block_rect = Polygon.rectangle(bx, by_top - spec.block_px,
                                           bx + spec.block_px, by_top)
            district_mean.append((block_rect, prof.ntl_mean))
            district_std.append((block_rect, prof.ntl_std))
            for sr in range(2):
                for sc in range(2):
                    if geo_rng.random() >= spec.occupancy:
                        continue
                    w = _snap(geo_rng.uniform(spec.min_side, spec.max_side))
                    h = _snap(geo_rng.uniform(spec.min_side, spec.max_side))
                    gx = _snap(geo_rng.uniform(1.0, sub - w - 1.0))
                    gy = _snap(geo_rng.uniform(1.0, sub - h - 1.0))
                    left = bx + sc * sub + gx
                    top = by_top - sr * sub - gy
                    height = float(max(hgt_rng.normal(prof.bh_mean, prof.bh_std),
                                       spec.min_height))
                    buildings.append(Polygon.rectangle(
                        left, top - h, left + w, top,
                        attributes={"id": f"t{index:03d}_b{len(buildings):04d}",
                                    "class": code,
                                    "height": round(height, 3)}))

    truth = build_label_raster(
        [(p, int(p.attributes["class"])) for p in buildings], fine)

    # labeled-area vectors over a seeded subset of buildings, then the real
    # assignment pipeline produces the weak raster (uncovered -> sentinel)
    n_labeled = int(round(spec.label_coverage * len(buildings)))
    picked = set(cov_rng.permutation(len(buildings))[:n_labeled].tolist())
    aois = []
    for i in sorted(picked):
        poly = buildings[i]
        code = int(poly.attributes["class"])
        tag = _TAGS_BY_CODE[code][int(tag_rng.integers(len(_TAGS_BY_CODE[code])))]
        xa, ya, xb, yb = poly.bounds()
        aois.append(Polygon.rectangle(
            xa, ya, xb, yb,
            attributes={"id": f"t{index:03d}_a{len(aois):04d}", "function": tag}))
    class_map = ClassMap.default()
    aoi_pairs = []
    for aoi in aois:
        mapped = remap_aoi(aoi.attributes, class_map)
        if mapped is not None:
            aoi_pairs.append((aoi, mapped))
    assigned = assign_building_functions(buildings, aoi_pairs)
    weak = build_label_raster(assigned, fine)

    # height grid: coarse pixels whose center falls inside a footprint
    bh = rasterize_polygons(
        [(p, float(p.attributes["height"])) for p in buildings], coarse, fill=0.0)
    bh.band_names = ["bh"]

    # light grid: district-level radiance (night light is diffuse, so the
    # whole block glows at its class level), per-cell noise, gaussian spread
    mean_map = rasterize_polygons(district_mean, coarse,
                                  fill=spec.background_light).data[0]
    std_map = rasterize_polygons(district_std, coarse,
                                 fill=spec.background_light_std).data[0]
    radiance = mean_map + lgt_rng.standard_normal(mean_map.shape).astype(np.float32) * std_map
    radiance = gaussian_filter(radiance, sigma=spec.light_blur_sigma)
    ntl_bands = np.stack([np.maximum(g * radiance, 0.0) for g in spec.light_gains])
    ntl = RasterGrid(ntl_bands, coarse.transform, None,
                     [f"ntl_{i + 1}" for i in range(len(spec.light_gains))])

    # optical image: roof color per class over background, additive noise
    lut = np.zeros((max(FUNCTION_CODES) + 1, 3), dtype=np.float32)
    lut[0] = spec.background_color
    for code, prof in CLASS_PROFILES.items():
        lut[code] = prof.color
    codes_fine = truth.labels.data[0].astype(np.int64)
    oi_data = lut[codes_fine].transpose(2, 0, 1).copy()
    oi_data += opt_rng.standard_normal(oi_data.shape).astype(np.float32) * spec.color_noise
    oi_data = np.clip(oi_data, 0.0, 255.0)
    oi = RasterGrid(oi_data, fine.transform, None, ["oi_r", "oi_g", "oi_b"])

    return TileData(index, oi, bh, ntl, truth, weak, buildings, aois)


def generate_city(spec: CitySpec, seed: int, out_dir) -> dict:
    """Generate and write every tile; returns the manifest dict.

    Writes per tile: optical/height/light rasters, truth and weak label
    rasters, building and labeled-area vectors; plus city.json.
    """
    os.makedirs(out_dir, exist_ok=True)
    block_codes = allocate_blocks(spec, seed)
    tiles_meta = []
    truth_pixels = np.zeros(max(FUNCTION_CODES) + 1, dtype=np.int64)
    for i in range(spec.n_tiles):
        tile = synthesize_tile(spec, seed, i, block_codes[i])
        prefix = f"tile_{i:03d}"
        save_bsqf(tile.oi, os.path.join(out_dir, f"{prefix}_oi"))
        save_bsqf(tile.bh, os.path.join(out_dir, f"{prefix}_bh"))
        save_bsqf(tile.ntl, os.path.join(out_dir, f"{prefix}_ntl"))
        tile.truth.save(out_dir, f"{prefix}_truth")
        tile.weak.save(out_dir, f"{prefix}_weak")
        save_geojson(tile.buildings, os.path.join(out_dir, f"{prefix}_buildings.geojson"))
        save_geojson(tile.aois, os.path.join(out_dir, f"{prefix}_aois.geojson"))
        codes = tile.truth.labels.data[0].astype(np.int64)
        counts = np.bincount(codes.ravel(), minlength=truth_pixels.size)
        truth_pixels += counts[:truth_pixels.size]
        tiles_meta.append({
            "index": i,
            "prefix": prefix,
            "n_buildings": len(tile.buildings),
            "n_labeled_areas": len(tile.aois),
            "unlabeled_buildings": len(tile.buildings) - len(tile.aois),
        })
    manifest = {
        "seed": int(seed),
        "spec": asdict(spec),
        "tiles": tiles_meta,
        "truth_pixels": {str(c): int(truth_pixels[c]) for c in range(truth_pixels.size)},
    }
    atomic_write_json(f"{out_dir}/city.json", manifest)
    return manifest


def truth_report(manifest: dict) -> dict:
    """Human-facing composition summary derived from a city manifest."""
    pixels = {int(k): v for k, v in manifest["truth_pixels"].items()}
    building = sum(v for c, v in pixels.items() if c in FUNCTION_CODES)
    shares = {c: (pixels.get(c, 0) / building if building else 0.0)
              for c in FUNCTION_CODES}
    return {
        "n_tiles": len(manifest["tiles"]),
        "n_buildings": sum(t["n_buildings"] for t in manifest["tiles"]),
        "n_labeled_areas": sum(t["n_labeled_areas"] for t in manifest["tiles"]),
        "building_pixel_share": building / max(sum(pixels.values()), 1),
        "class_pixel_shares": shares,
    }
