"""Multi-modal input cubes: band stacking, normalization, crop sampling.

A cube is a 7-band raster in the fixed order
[oi_r, oi_g, oi_b, bh, ntl_1, ntl_2, ntl_3]: optical RGB at the target
resolution plus building-height and nighttime-light bands resampled onto
the same grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import LabelRaster
from .raster import GridSpec, RasterGrid, resample_to_grid

CUBE_BAND_NAMES = ["oi_r", "oi_g", "oi_b", "bh", "ntl_1", "ntl_2", "ntl_3"]
STD_FLOOR = 1e-6


@dataclass
class Cube:
    """7-band input stack with optional per-band normalization stats.

    norm_stats is None for raw cubes; after `normalize` it records the
    (mean, std) pairs that were applied, shape [7, 2].
    """

    raster: RasterGrid
    norm_stats: np.ndarray | None = None

    def __post_init__(self):
        if self.raster.bands != len(CUBE_BAND_NAMES):
            raise ValueError(f"cube must have {len(CUBE_BAND_NAMES)} bands, got {self.raster.bands}")
        if self.norm_stats is not None:
            self.norm_stats = np.asarray(self.norm_stats, dtype=np.float64)
            if self.norm_stats.shape != (len(CUBE_BAND_NAMES), 2):
                raise ValueError("norm_stats must be [7, 2] (mean, std) per band")
            if not (self.norm_stats[:, 1] > 0).all():
                raise ValueError("per-band std must be positive")

    @property
    def data(self) -> np.ndarray:
        return self.raster.data

    @property
    def spec(self) -> GridSpec:
        return self.raster.spec


def assemble_cube(oi: RasterGrid, bh: RasterGrid, ntl: RasterGrid,
                  spec: GridSpec, resample_method: str = "nearest") -> Cube:
    """Stack optical (3 bands), height (1) and nighttime light (3) on `spec`."""
    if oi.bands != 3:
        raise ValueError(f"optical input must have 3 bands, got {oi.bands}")
    if bh.bands != 1:
        raise ValueError(f"building-height input must have 1 band, got {bh.bands}")
    if ntl.bands != 3:
        raise ValueError(f"nighttime-light input must have 3 bands, got {ntl.bands}")
    parts = [resample_to_grid(src, spec, resample_method) for src in (oi, bh, ntl)]
    data = np.concatenate([p.data for p in parts], axis=0)
    nodatas = {p.nodata for p in parts if p.nodata is not None}
    nodata = nodatas.pop() if len(nodatas) == 1 else (None if not nodatas else float("nan"))
    return Cube(RasterGrid(data, spec.transform, nodata, list(CUBE_BAND_NAMES)))


def fit_normalizer(cubes: list[Cube]) -> np.ndarray:
    """Per-band (mean, std) over all pixels of the training cubes.

    Population statistics; nodata pixels are excluded per band; a std below
    1e-6 is clamped to 1.0 so constant bands pass through unscaled.
    """
    if not cubes:
        raise ValueError("need at least one cube to fit a normalizer")
    n_bands = len(CUBE_BAND_NAMES)
    stats = np.zeros((n_bands, 2), dtype=np.float64)
    for b in range(n_bands):
        acc = []
        for cube in cubes:
            band = cube.data[b].astype(np.float64).ravel()
            if cube.raster.nodata is not None:
                nod = cube.raster.nodata
                band = band[band != nod] if not np.isnan(nod) else band[~np.isnan(band)]
            acc.append(band)
        values = np.concatenate(acc)
        if values.size == 0:
            raise ValueError(f"band {CUBE_BAND_NAMES[b]} is entirely nodata")
        mean = values.mean()
        std = values.std()
        if std < STD_FLOOR:
            std = 1.0
        stats[b] = (mean, std)
    return stats


def normalize(cube: Cube, stats: np.ndarray) -> Cube:
    stats = np.asarray(stats, dtype=np.float64)
    mean = stats[:, 0].astype(np.float32)[:, None, None]
    std = stats[:, 1].astype(np.float32)[:, None, None]
    data = (cube.data - mean) / std
    grid = RasterGrid(data, cube.raster.transform, cube.raster.nodata,
                      list(cube.raster.band_names or CUBE_BAND_NAMES))
    return Cube(grid, norm_stats=stats)


def denormalize(cube: Cube) -> Cube:
    if cube.norm_stats is None:
        raise ValueError("cube carries no normalization stats")
    stats = cube.norm_stats
    mean = stats[:, 0].astype(np.float32)[:, None, None]
    std = stats[:, 1].astype(np.float32)[:, None, None]
    data = cube.data * std + mean
    grid = RasterGrid(data, cube.raster.transform, cube.raster.nodata,
                      list(cube.raster.band_names or CUBE_BAND_NAMES))
    return Cube(grid)


@dataclass
class CropBatch:
    """Aligned training crops: inputs, label codes, supervision gates.

    patches [N, 7, S, S] float32; labels [N, S, S] int32 in {0..7, 255};
    supervision [N, S, S] uint8 {0,1}; offsets [N, 2] as (row, col);
    tile_ids parallel to the batch axis.
    """

    patches: np.ndarray
    labels: np.ndarray
    supervision: np.ndarray
    tile_ids: list
    offsets: np.ndarray

    def __len__(self) -> int:
        return self.patches.shape[0]

    @staticmethod
    def concatenate(batches: list["CropBatch"]) -> "CropBatch":
        return CropBatch(
            np.concatenate([b.patches for b in batches]),
            np.concatenate([b.labels for b in batches]),
            np.concatenate([b.supervision for b in batches]),
            [t for b in batches for t in b.tile_ids],
            np.concatenate([b.offsets for b in batches]),
        )

    def take(self, idx) -> "CropBatch":
        idx = np.asarray(idx)
        return CropBatch(self.patches[idx], self.labels[idx], self.supervision[idx],
                         [self.tile_ids[i] for i in idx], self.offsets[idx])


def sample_crops(cube: Cube, label_raster: LabelRaster, n: int, size: int,
                 seed, tile_id=0) -> CropBatch:
    """Draw `n` uniformly random size x size crops (with replacement).

    Offsets come from a PCG64 stream seeded with `seed`, so a fixed seed
    reproduces the exact crop sequence.
    """
    h, w = cube.raster.height, cube.raster.width
    if size > h or size > w:
        raise ValueError(f"crop size {size} exceeds tile {w}x{h}")
    lab = label_raster.labels.data[0]
    sup = label_raster.supervision.data[0]
    if lab.shape != (h, w):
        raise ValueError("label raster does not match the cube grid")

    rng = np.random.default_rng(seed)
    rows = rng.integers(0, h - size + 1, size=n)
    cols = rng.integers(0, w - size + 1, size=n)
    patches = np.empty((n, cube.data.shape[0], size, size), dtype=np.float32)
    labels = np.empty((n, size, size), dtype=np.int32)
    supervision = np.empty((n, size, size), dtype=np.uint8)
    for k in range(n):
        r, c = int(rows[k]), int(cols[k])
        patches[k] = cube.data[:, r:r + size, c:c + size]
        labels[k] = lab[r:r + size, c:c + size].astype(np.int32)
        supervision[k] = sup[r:r + size, c:c + size].astype(np.uint8)
    offsets = np.stack([rows, cols], axis=1).astype(np.int64)
    return CropBatch(patches, labels, supervision, [tile_id] * n, offsets)
