"""End-to-end orchestration: data loading, training loop, tiled inference."""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .cube import (Cube, CropBatch, assemble_cube, fit_normalizer, normalize,
                   sample_crops)
from .evaluation import (EvalReport, classification_metrics, confusion,
                         count_buildings, footprint_metrics,
                         statistical_comparison)
from .fileio import atomic_write_text, read_json
from .labels import FUNCTION_CODES, UNLABELED, LabelRaster
from .raster import RasterGrid, load_bsqf

logger = logging.getLogger(__name__)

SUPERVISION_MODES = ("weak", "full", "background")


@dataclass
class TrainConfig:
    epochs: int = 10
    crops_per_tile: int = 40
    crop_size: int = 64
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    val_tiles: int = 1
    resample_method: str = "nearest"
    supervision: str = "weak"
    max_redraws: int = 10

    def __post_init__(self):
        if self.supervision not in SUPERVISION_MODES:
            raise ValueError(f"supervision must be one of {SUPERVISION_MODES}")
        if self.crop_size < 4 or self.crop_size % 2:
            raise ValueError("crop_size must be even and >= 4")
        if self.val_tiles < 0:
            raise ValueError("val_tiles must be >= 0")


@dataclass
class TileBundle:
    """One tile's cube plus its truth and weak label rasters."""

    index: int
    prefix: str
    cube: Cube
    truth: LabelRaster
    weak: LabelRaster


def load_tiles(data_dir, resample_method="nearest") -> list[TileBundle]:
    """Read a generated city directory into memory."""
    manifest = read_json(os.path.join(data_dir, "city.json"))
    bundles = []
    for entry in manifest["tiles"]:
        prefix = entry["prefix"]
        oi = load_bsqf(os.path.join(data_dir, f"{prefix}_oi"))
        bh = load_bsqf(os.path.join(data_dir, f"{prefix}_bh"))
        ntl = load_bsqf(os.path.join(data_dir, f"{prefix}_ntl"))
        cube = assemble_cube(oi, bh, ntl, oi.spec, resample_method)
        truth = LabelRaster.load(data_dir, f"{prefix}_truth")
        weak = LabelRaster.load(data_dir, f"{prefix}_weak")
        bundles.append(TileBundle(int(entry["index"]), prefix, cube, truth, weak))
    return bundles


def training_labels(bundle: TileBundle, mode: str) -> LabelRaster:
    """Pick the supervision source for one tile.

    weak: labeled areas only, uncovered buildings stay unsupervised.
    full: the complete truth raster.
    background: the weak raster with unsupervised buildings forced to
    class 0 and supervision everywhere (a deliberately wrong reference
    point for how much the gating matters).
    """
    if mode == "full":
        return bundle.truth
    if mode == "weak":
        return bundle.weak
    if mode == "background":
        grid = bundle.weak.labels.copy()
        data = grid.data[0]
        data[data == UNLABELED] = 0
        return LabelRaster.from_labels(grid)
    raise ValueError(f"unknown supervision mode {mode!r}")


def _epoch_crops(bundles, labels_by_tile, config, epoch) -> CropBatch:
    """Sample this epoch's crops, redrawing any with zero supervised pixels."""
    parts = []
    for b in bundles:
        batch = sample_crops(b.cube, labels_by_tile[b.index], config.crops_per_tile,
                             config.crop_size,
                             seed=np.random.SeedSequence(
                                 [config.seed, 0xC307, epoch, b.index]),
                             tile_id=b.index)
        for attempt in range(config.max_redraws):
            dead = np.nonzero(batch.supervision.reshape(len(batch), -1).sum(axis=1) == 0)[0]
            if dead.size == 0:
                break
            redraw = sample_crops(b.cube, labels_by_tile[b.index], int(dead.size),
                                  config.crop_size,
                                  seed=np.random.SeedSequence(
                                      [config.seed, 0xC307, epoch, b.index,
                                       1 + attempt]),
                                  tile_id=b.index)
            batch.patches[dead] = redraw.patches
            batch.labels[dead] = redraw.labels
            batch.supervision[dead] = redraw.supervision
            batch.offsets[dead] = redraw.offsets
        else:
            raise ValueError(f"tile {b.index}: crops without supervised pixels "
                             f"persist after {config.max_redraws} redraws")
        parts.append(batch)
    return CropBatch.concatenate(parts)


@dataclass
class TrainResult:
    params: dict
    norm_stats: np.ndarray
    history: list = field(default_factory=list)  # (epoch, step, loss)
    epoch_losses: list = field(default_factory=list)
    train_indices: list = field(default_factory=list)
    val_indices: list = field(default_factory=list)

    def history_csv(self) -> str:
        lines = ["epoch,step,loss"]
        lines += [f"{e},{s},{loss!r}" for e, s, loss in self.history]
        return "\n".join(lines) + "\n"


def train(bundles: list[TileBundle], config: TrainConfig) -> TrainResult:
    """Run the full optimization and return parameters + normalization."""
    if config.val_tiles >= len(bundles):
        raise ValueError("holding out every tile leaves nothing to train on")
    train_bundles = bundles[:len(bundles) - config.val_tiles]
    val_bundles = bundles[len(bundles) - config.val_tiles:]

    norm_stats = fit_normalizer([b.cube for b in train_bundles])
    normed = [TileBundle(b.index, b.prefix, normalize(b.cube, norm_stats),
                         b.truth, b.weak) for b in train_bundles]
    labels_by_tile = {b.index: training_labels(b, config.supervision) for b in normed}

    params = nn.init_params(config.seed)
    opt = nn.Adam(lr=config.lr)
    result = TrainResult(params=params, norm_stats=norm_stats,
                         train_indices=[b.index for b in train_bundles],
                         val_indices=[b.index for b in val_bundles])

    for epoch in range(config.epochs):
        crops = _epoch_crops(normed, labels_by_tile, config, epoch)
        order_rng = np.random.default_rng(
            np.random.SeedSequence([config.seed, 0x0DE5, epoch]))
        order = order_rng.permutation(len(crops))
        losses = []
        for step, lo in enumerate(range(0, len(order), config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            x = crops.patches[idx]
            lab = crops.labels[idx]
            sup = crops.supervision[idx]
            logits, cache = nn.net_forward(x, params)
            loss, grad = nn.masked_cross_entropy(logits, lab, sup)
            grads = nn.net_backward(grad, params, cache)
            opt.step(params, grads)
            losses.append(loss)
            result.history.append((epoch, step, loss))
        mean_loss = float(np.mean(losses))
        result.epoch_losses.append(mean_loss)
        logger.info("epoch %d: mean loss %.4f over %d steps",
                    epoch, mean_loss, len(losses))
    return result


def save_training(result: TrainResult, config: TrainConfig, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    meta = {
        "config": asdict(config),
        "epoch_losses": [repr(v) for v in result.epoch_losses],
        "train_tiles": result.train_indices,
        "val_tiles": result.val_indices,
    }
    nn.save_checkpoint(os.path.join(out_dir, "checkpoint"), result.params,
                       result.norm_stats, meta)
    atomic_write_text(os.path.join(out_dir, "train_log.csv"),
                      result.history_csv())


def infer_tile(cube: Cube, params: dict, norm_stats=None, window=256,
               stride=None):
    """Window-averaged prediction over one tile.

    Slides an even-sized window (default stride window/2), averages the
    logits wherever windows overlap, and returns (pred [h, w] uint8,
    mean_logits [k, h, w] float32). `norm_stats` is applied first when
    given; pass None for an already-normalized cube.
    """
    if norm_stats is not None:
        cube = normalize(cube, norm_stats)
    data = cube.data
    _, h, w = data.shape
    window = int(min(window, h, w))
    if window % 2 or window < 4:
        raise ValueError("window must be even and >= 4")
    stride = window // 2 if stride is None else int(stride)
    if stride < 1:
        raise ValueError("stride must be positive")

    def positions(extent):
        pos = list(range(0, extent - window + 1, stride))
        if pos[-1] != extent - window:
            pos.append(extent - window)
        return pos

    logit_sum = np.zeros((nn.N_CLASSES, h, w), dtype=np.float64)
    hits = np.zeros((h, w), dtype=np.int64)
    for r in positions(h):
        for c in positions(w):
            patch = data[None, :, r:r + window, c:c + window]
            logits, _ = nn.net_forward(patch, params)
            logit_sum[:, r:r + window, c:c + window] += logits[0]
            hits[r:r + window, c:c + window] += 1
    mean_logits = (logit_sum / hits).astype(np.float32)
    pred = mean_logits.argmax(axis=0).astype(np.uint8)
    return pred, mean_logits


def extract_footprint(pred_labels) -> np.ndarray:
    """Boolean building mask: any of the seven function codes."""
    return np.isin(np.asarray(pred_labels), FUNCTION_CODES)


def evaluate_tiles(bundles: list[TileBundle], params: dict, norm_stats,
                   window=256, stride=None, points_per_class=0,
                   seed=0) -> EvalReport:
    """Predict every tile and score against its truth raster, pooled."""
    from .evaluation import sample_validation_points

    preds, refs = [], []
    pts = []
    counts_pred = {"count": 0, "pixels": 0, "area": 0.0}
    counts_ref = {"count": 0, "pixels": 0, "area": 0.0}
    row_offset = 0
    for b in bundles:
        pred, _ = infer_tile(b.cube, params, norm_stats, window, stride)
        ref = b.truth.labels.data[0].astype(np.int64)
        preds.append(pred.astype(np.int64))
        refs.append(ref)
        area = b.cube.raster.pixel_area
        for acc, mask in ((counts_pred, extract_footprint(pred)),
                          (counts_ref, extract_footprint(ref))):
            tile_counts = count_buildings(mask, area)
            for key in acc:
                acc[key] += tile_counts[key]
        if points_per_class:
            tile_pts = sample_validation_points(
                ref, points_per_class,
                seed=np.random.SeedSequence([int(seed), 0x9017, b.index]))
            tile_pts[:, 0] += row_offset
            pts.append(tile_pts)
        row_offset += ref.shape[0]
    pred_all = np.concatenate(preds, axis=0)
    ref_all = np.concatenate(refs, axis=0)

    cm = confusion(ref_all, pred_all)
    report = EvalReport(confusion_all=cm, metrics_all=classification_metrics(cm))
    if pts:
        all_pts = np.concatenate(pts, axis=0)
        cmp_ = confusion(ref_all, pred_all, points=all_pts)
        report.confusion_points = cmp_
        report.metrics_points = classification_metrics(cmp_)
    report.footprint = footprint_metrics(extract_footprint(pred_all),
                                         extract_footprint(ref_all))
    report.counts_predicted = counts_pred
    report.counts_reference = counts_ref
    try:
        report.composition = statistical_comparison(pred_all, ref_all)
    except ValueError:
        report.composition = None
    report.extra["tiles"] = [b.index for b in bundles]
    return report
