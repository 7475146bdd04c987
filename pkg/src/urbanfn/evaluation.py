"""Map-quality metrics: confusion statistics, footprints, counts, composition.

Conventions: confusion matrices are indexed [reference, predicted];
pixels whose reference code is in the ignore set (by default the
unlabeled sentinel 255) never enter any tally.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fileio import atomic_write_json, atomic_write_text
from .labels import FUNCTION_CODES, UNLABELED

N_EVAL_CLASSES = 8  # background + seven function classes

FOUR_CLASS_GROUPS = {
    "Residential": (1,),
    "Commercial": (2,),
    "Public": (3, 4, 5, 6),
    "Industrial": (7,),
}


@dataclass
class ConfusionMatrix:
    matrix: np.ndarray
    ignored: int = 0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.int64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("confusion matrix must be square")

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        k = self.n_classes
        buf.write("ref\\pred," + ",".join(str(j) for j in range(k)) + "\n")
        for i in range(k):
            buf.write(str(i) + "," + ",".join(str(int(v)) for v in self.matrix[i]) + "\n")
        return buf.getvalue()


def confusion(reference, predicted, n_classes=N_EVAL_CLASSES, points=None,
              ignore=(UNLABELED,)) -> ConfusionMatrix:
    """Tally predictions against reference codes.

    `points` optionally restricts the tally to an [m, 2] array of
    (row, col) pixel indices; otherwise every pixel participates.
    """
    ref = np.asarray(reference)
    pred = np.asarray(predicted)
    if ref.shape != pred.shape:
        raise ValueError("reference and prediction shapes differ")
    if points is not None:
        pts = np.asarray(points)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be [m, 2] (row, col)")
        ref = ref[pts[:, 0], pts[:, 1]]
        pred = pred[pts[:, 0], pts[:, 1]]
    ref = ref.ravel().astype(np.int64)
    pred = pred.ravel().astype(np.int64)
    keep = np.ones(ref.shape, dtype=bool)
    for code in ignore:
        keep &= ref != code
    ignored = int(keep.size - keep.sum())
    ref = ref[keep]
    pred = pred[keep]
    if ref.size and (ref.min() < 0 or ref.max() >= n_classes):
        raise ValueError(f"reference codes outside [0, {n_classes})")
    if pred.size and (pred.min() < 0 or pred.max() >= n_classes):
        raise ValueError(f"predicted codes outside [0, {n_classes})")
    flat = ref * n_classes + pred
    counts = np.bincount(flat, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes), ignored=ignored)


def classification_metrics(cm: ConfusionMatrix) -> dict:
    """Overall accuracy, chance-corrected agreement, frequency-weighted IoU.

    Per-class IoU uses union = row + col - diagonal; classes absent from
    both reference and prediction get IoU NaN and weight zero. Agreement
    is flagged undefined when expected agreement is exactly 1.
    """
    m = cm.matrix.astype(np.float64)
    total = m.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    row = m.sum(axis=1)
    col = m.sum(axis=0)
    diag = np.diag(m)
    oa = diag.sum() / total
    p_e = float((row * col).sum() / (total * total))
    kappa_undefined = abs(1.0 - p_e) < 1e-15
    kappa = float("nan") if kappa_undefined else (oa - p_e) / (1.0 - p_e)
    union = row + col - diag
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, diag / np.where(union > 0, union, 1.0), np.nan)
    weights = row / total
    fwiou = float(np.nansum(np.where(union > 0, weights * iou, 0.0)))
    return {
        "overall_accuracy": float(oa),
        "kappa": float(kappa),
        "kappa_undefined": bool(kappa_undefined),
        "fwiou": fwiou,
        "iou": [None if not np.isfinite(v) else float(v) for v in iou],
        "support": [int(v) for v in row],
        "ignored_pixels": cm.ignored,
    }


def footprint_metrics(predicted_fg, reference_fg) -> dict:
    """Pixelwise F1 and IoU of the building/non-building split."""
    pred = np.asarray(predicted_fg).astype(bool)
    ref = np.asarray(reference_fg).astype(bool)
    if pred.shape != ref.shape:
        raise ValueError("footprint masks must share a shape")
    tp = int((pred & ref).sum())
    fp = int((pred & ~ref).sum())
    fn = int((~pred & ref).sum())
    empty = (tp + fp + fn) == 0
    if empty:
        f1 = iou = 1.0
    else:
        f1 = 2.0 * tp / (2.0 * tp + fp + fn)
        iou = tp / (tp + fp + fn)
    return {"tp": tp, "fp": fp, "fn": fn, "f1": float(f1), "iou": float(iou),
            "empty_union": bool(empty)}


def connected_components(foreground):
    """8-connected labeling (diagonal touches join). Returns (labels, count)."""
    fg = np.asarray(foreground).astype(bool)
    labels, count = ndimage.label(fg, structure=np.ones((3, 3), dtype=bool))
    return labels, int(count)


def count_buildings(foreground, pixel_area=1.0) -> dict:
    """Building count (8-connected regions) and summed footprint area."""
    _, count = connected_components(foreground)
    pixels = int(np.count_nonzero(np.asarray(foreground)))
    return {"count": count, "pixels": pixels, "area": float(pixels * pixel_area)}


def class_composition(labels, groups=None) -> dict:
    """Share of building pixels falling in each function group.

    Only pixels carrying a function code (1..7) count; background,
    nodata and the unlabeled sentinel are excluded from the denominator.
    """
    groups = groups or FOUR_CLASS_GROUPS
    lab = np.asarray(labels).ravel()
    building = np.isin(lab, FUNCTION_CODES)
    denom = int(building.sum())
    if denom == 0:
        raise ValueError("no building pixels to summarize")
    shares = {}
    for name, codes in groups.items():
        shares[name] = float(np.isin(lab, codes).sum() / denom)
    return shares


def statistical_comparison(predicted, reference, groups=None) -> dict:
    """Compare function-group composition between two label rasters.

    Returns both composition vectors plus their L1 distance. The default
    grouping folds the seven codes into residential / commercial /
    public (service, health, sport-art, education) / industrial.
    """
    groups = groups or FOUR_CLASS_GROUPS
    pred_shares = class_composition(predicted, groups)
    ref_shares = class_composition(reference, groups)
    l1 = float(sum(abs(pred_shares[g] - ref_shares[g]) for g in groups))
    return {"groups": list(groups), "predicted": pred_shares,
            "reference": ref_shares, "l1_distance": l1}


def sample_validation_points(labels, n_per_class, seed, exclude=(UNLABELED,)):
    """Stratified point draw: up to n_per_class pixels of every present code.

    Returns an [m, 2] int array of (row, col), ordered by class code then
    by the seeded shuffle, suitable for the `points` argument of
    `confusion`.
    """
    lab = np.asarray(labels)
    if lab.ndim != 2:
        raise ValueError("labels must be a 2-D code grid")
    if isinstance(seed, np.random.SeedSequence):
        rng = np.random.default_rng(seed)
    else:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x9017]))
    rows_all, cols_all = [], []
    for code in sorted(int(c) for c in np.unique(lab)):
        if code in exclude:
            continue
        rr, cc = np.nonzero(lab == code)
        take = min(int(n_per_class), rr.size)
        idx = rng.permutation(rr.size)[:take]
        rows_all.append(rr[idx])
        cols_all.append(cc[idx])
    if not rows_all:
        return np.zeros((0, 2), dtype=np.int64)
    return np.stack([np.concatenate(rows_all), np.concatenate(cols_all)],
                    axis=1).astype(np.int64)


@dataclass
class EvalReport:
    """Bundle of everything the `eval` command produces for one map."""

    confusion_all: ConfusionMatrix
    metrics_all: dict
    confusion_points: ConfusionMatrix | None = None
    metrics_points: dict | None = None
    footprint: dict | None = None
    counts_predicted: dict | None = None
    counts_reference: dict | None = None
    composition: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "confusion": self.confusion_all.matrix.tolist(),
            "metrics": self.metrics_all,
            "extra": self.extra,
        }
        if self.confusion_points is not None:
            out["confusion_points"] = self.confusion_points.matrix.tolist()
            out["metrics_points"] = self.metrics_points
        if self.footprint is not None:
            out["footprint"] = self.footprint
        if self.counts_predicted is not None:
            out["counts"] = {"predicted": self.counts_predicted,
                             "reference": self.counts_reference}
        if self.composition is not None:
            out["composition"] = self.composition
        return out

    def save(self, json_path, csv_path=None):
        atomic_write_json(json_path, self.to_dict())
        if csv_path is not None:
            atomic_write_text(csv_path, self.confusion_all.to_csv())


def evaluate_maps(predicted, reference, pixel_area=1.0, points=None) -> EvalReport:
    """Full report for a predicted class grid against a reference grid."""
    cm = confusion(reference, predicted)
    report = EvalReport(confusion_all=cm, metrics_all=classification_metrics(cm))
    if points is not None and len(points):
        cmp_ = confusion(reference, predicted, points=points)
        report.confusion_points = cmp_
        report.metrics_points = classification_metrics(cmp_)
    pred_fg = np.isin(np.asarray(predicted), FUNCTION_CODES)
    ref_fg = np.isin(np.asarray(reference), FUNCTION_CODES)
    report.footprint = footprint_metrics(pred_fg, ref_fg)
    report.counts_predicted = count_buildings(pred_fg, pixel_area)
    report.counts_reference = count_buildings(ref_fg, pixel_area)
    try:
        report.composition = statistical_comparison(predicted, reference)
    except ValueError:
        report.composition = None
    return report
