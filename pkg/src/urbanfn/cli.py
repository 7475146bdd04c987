"""urbanfn command line: synth, labelgen, cubes, train, infer, eval, render, report.

Exit codes: 0 success, 1 usage error, 2 data/runtime error. Heavy
imports happen inside the command handlers so --threads (or the
URBANFN_THREADS variable) can pin BLAS pools before numpy loads.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

logger = logging.getLogger("urbanfn")

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS")


class _Parser(argparse.ArgumentParser):
    """argparse flavor that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _apply_threads(value):
    if value is None:
        value = os.environ.get("URBANFN_THREADS")
    if value is None:
        return
    n = int(value)
    if n < 1:
        raise ValueError("--threads must be >= 1")
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _load_config(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


def _dataclass_from(cls, config: dict, overrides: dict):
    """Defaults <- config file <- explicitly given CLI flags."""
    merged = dict(config)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(merged) - valid
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**merged)


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synth import CitySpec, generate_city, truth_report

    spec = _dataclass_from(CitySpec, _load_config(args.config), {
        "n_tiles": args.tiles,
        "tile_px": args.tile_px,
        "occupancy": args.occupancy,
        "label_coverage": args.coverage,
    })
    manifest = generate_city(spec, args.seed, args.out)
    summary = truth_report(manifest)
    print(f"wrote {summary['n_tiles']} tiles to {args.out}")
    print(f"buildings: {summary['n_buildings']} "
          f"(labeled areas: {summary['n_labeled_areas']})")
    print(f"building pixel share: {summary['building_pixel_share']:.3f}")
    return 0


def cmd_labelgen(args) -> int:
    from .labels import (ClassMap, assign_building_functions,
                         build_label_raster, remap_aoi)
    from .polygons import load_geojson
    from .raster import load_bsqf

    buildings = load_geojson(args.buildings)
    aois = load_geojson(args.aois)
    like = load_bsqf(args.like)
    class_map = ClassMap.load(args.class_map) if args.class_map else ClassMap.default()
    aoi_pairs = []
    for aoi in aois:
        code = remap_aoi(aoi.attributes, class_map, tag_key=args.tag_key)
        if code is not None:
            aoi_pairs.append((aoi, code))
    assigned = assign_building_functions(buildings, aoi_pairs)
    raster = build_label_raster(assigned, like.spec)
    out_dir, prefix = os.path.split(args.out.rstrip("/"))
    raster.save(out_dir or ".", prefix)
    n_unlabeled = sum(1 for _, c in assigned if c == 255)
    print(f"labeled {len(assigned) - n_unlabeled}/{len(assigned)} buildings "
          f"-> {args.out}_labels / {args.out}_supervision")
    return 0


def cmd_cubes(args) -> int:
    from .cube import assemble_cube
    from .fileio import read_json
    from .raster import load_bsqf, save_bsqf

    manifest = read_json(os.path.join(args.data, "city.json"))
    os.makedirs(args.out, exist_ok=True)
    for entry in manifest["tiles"]:
        prefix = entry["prefix"]
        oi = load_bsqf(os.path.join(args.data, f"{prefix}_oi"))
        bh = load_bsqf(os.path.join(args.data, f"{prefix}_bh"))
        ntl = load_bsqf(os.path.join(args.data, f"{prefix}_ntl"))
        cube = assemble_cube(oi, bh, ntl, oi.spec, args.method)
        save_bsqf(cube.raster, os.path.join(args.out, f"{prefix}_cube"))
        print(f"{prefix}: cube {cube.data.shape[1]}x{cube.data.shape[2]} written")
    return 0


def cmd_train(args) -> int:
    from .pipeline import TrainConfig, load_tiles, save_training, train

    config = _dataclass_from(TrainConfig, _load_config(args.config), {
        "epochs": args.epochs,
        "crops_per_tile": args.crops_per_tile,
        "crop_size": args.crop_size,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "seed": args.seed,
        "val_tiles": args.val_tiles,
        "supervision": args.supervision,
    })
    bundles = load_tiles(args.data, config.resample_method)
    result = train(bundles, config)
    save_training(result, config, args.out)
    for epoch, loss in enumerate(result.epoch_losses):
        print(f"epoch {epoch}: loss {loss:.4f}")
    print(f"checkpoint -> {os.path.join(args.out, 'checkpoint')}")
    return 0


def cmd_infer(args) -> int:
    from . import nn
    from .pipeline import infer_tile, load_tiles
    from .raster import RasterGrid, save_bsqf
    from .render import render_map

    params, norm_stats, _ = nn.load_checkpoint(args.checkpoint)
    bundles = load_tiles(args.data)
    os.makedirs(args.out, exist_ok=True)
    for b in bundles:
        pred, _ = infer_tile(b.cube, params, norm_stats, args.window, args.stride)
        grid = RasterGrid(pred[None].astype("float32"), b.cube.raster.transform,
                          None, ["pred"])
        save_bsqf(grid, os.path.join(args.out, f"{b.prefix}_pred"))
        if args.png:
            render_map(pred, os.path.join(args.out, f"{b.prefix}_pred.png"))
        print(f"{b.prefix}: prediction written")
    return 0


def _select_bundles(bundles, spec: str, val_tiles: int):
    if spec == "all":
        return bundles
    if spec == "val":
        if val_tiles <= 0:
            raise ValueError("--tiles val needs --val-tiles > 0")
        return bundles[len(bundles) - val_tiles:]
    wanted = {int(s) for s in spec.split(",") if s.strip()}
    chosen = [b for b in bundles if b.index in wanted]
    missing = wanted - {b.index for b in chosen}
    if missing:
        raise ValueError(f"tiles not in dataset: {sorted(missing)}")
    return chosen


def cmd_eval(args) -> int:
    from . import nn
    from .pipeline import evaluate_tiles, load_tiles

    params, norm_stats, _ = nn.load_checkpoint(args.checkpoint)
    bundles = load_tiles(args.data)
    chosen = _select_bundles(bundles, args.tiles, args.val_tiles)
    if not chosen:
        raise ValueError("no tiles selected for evaluation")
    report = evaluate_tiles(chosen, params, norm_stats, args.window, args.stride,
                            points_per_class=args.points, seed=args.seed)
    csv_path = None
    if args.out:
        base, _ = os.path.splitext(args.out)
        csv_path = base + "_confusion.csv"
        report.save(args.out, csv_path)
    m = report.metrics_all
    print(f"overall accuracy: {m['overall_accuracy']:.4f}")
    print(f"kappa: {m['kappa']:.4f}" + (" (undefined)" if m["kappa_undefined"] else ""))
    print(f"fwiou: {m['fwiou']:.4f}")
    print(f"footprint f1: {report.footprint['f1']:.4f} "
          f"iou: {report.footprint['iou']:.4f}")
    if report.composition is not None:
        print(f"composition L1: {report.composition['l1_distance']:.4f}")
    if args.out:
        print(f"report -> {args.out}")
    return 0


def cmd_render(args) -> int:
    from .raster import load_bsqf
    from .render import render_map

    grid = load_bsqf(args.labels)
    render_map(grid.data[0], args.out, legend=args.legend, scale=args.scale)
    print(f"render -> {args.out}")
    return 0


def cmd_report(args) -> int:
    from .fileio import read_json

    data = read_json(args.eval)
    lines = ["map evaluation summary", "======================"]
    m = data["metrics"]
    lines.append(f"overall accuracy : {m['overall_accuracy']:.4f}")
    kappa = m["kappa"]
    lines.append("kappa            : " +
                 ("undefined" if m.get("kappa_undefined") else f"{kappa:.4f}"))
    lines.append(f"fwiou            : {m['fwiou']:.4f}")
    if "footprint" in data:
        fp = data["footprint"]
        lines.append(f"footprint f1/iou : {fp['f1']:.4f} / {fp['iou']:.4f}")
    if "counts" in data and data["counts"].get("predicted"):
        cp, cr = data["counts"]["predicted"], data["counts"]["reference"]
        lines.append(f"buildings pred   : {cp['count']} ({cp['area']:.0f} m^2)")
        lines.append(f"buildings ref    : {cr['count']} ({cr['area']:.0f} m^2)")
    if data.get("composition"):
        comp = data["composition"]
        lines.append(f"composition L1   : {comp['l1_distance']:.4f}")
        for g in comp["groups"]:
            lines.append(f"  {g:<14} pred {comp['predicted'][g]:.4f} "
                         f"ref {comp['reference'][g]:.4f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        from .fileio import atomic_write_text
        atomic_write_text(args.out, text)
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="urbanfn",
                description="building-function mapping from stacked imagery, "
                            "heights and night lights")
    p.add_argument("--threads", type=int, default=None,
                   help="BLAS thread cap (default: URBANFN_THREADS or library default)")
    p.add_argument("--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[], help="generate a synthetic city")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", default=None, help="JSON with city-spec fields")
    s.add_argument("--tiles", type=int, default=None)
    s.add_argument("--tile-px", dest="tile_px", type=int, default=None)
    s.add_argument("--occupancy", type=float, default=None)
    s.add_argument("--coverage", type=float, default=None,
                   help="fraction of buildings covered by labeled areas")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("labelgen", help="weak labels from building/area vectors")
    s.add_argument("--buildings", required=True)
    s.add_argument("--aois", required=True)
    s.add_argument("--like", required=True, help="raster that defines the output grid")
    s.add_argument("--out", required=True, help="output path prefix")
    s.add_argument("--class-map", dest="class_map", default=None,
                   help="JSON tag->code table (default: built-in)")
    s.add_argument("--tag-key", dest="tag_key", default="function")
    s.set_defaults(func=cmd_labelgen)

    s = sub.add_parser("cubes", help="materialize 7-band cubes for a city")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--method", choices=("nearest", "bilinear"), default="nearest")
    s.set_defaults(func=cmd_cubes)

    s = sub.add_parser("train", help="fit the segmentation net")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", default=None, help="JSON with train-config fields")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--crops-per-tile", dest="crops_per_tile", type=int, default=None)
    s.add_argument("--crop-size", dest="crop_size", type=int, default=None)
    s.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    s.add_argument("--lr", type=float, default=None)
    s.add_argument("--val-tiles", dest="val_tiles", type=int, default=None)
    s.add_argument("--supervision", choices=("weak", "full", "background"),
                   default=None)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="predict function maps for every tile")
    s.add_argument("--data", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--window", type=int, default=256)
    s.add_argument("--stride", type=int, default=None)
    s.add_argument("--png", action="store_true", help="also write rendered PNGs")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="score predictions against truth")
    s.add_argument("--data", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", default=None, help="JSON report path")
    s.add_argument("--tiles", default="all", help='"all", "val" or comma list')
    s.add_argument("--val-tiles", dest="val_tiles", type=int, default=1)
    s.add_argument("--window", type=int, default=256)
    s.add_argument("--stride", type=int, default=None)
    s.add_argument("--points", type=int, default=0,
                   help="stratified validation points per class (0 = dense only)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("render", help="PNG from a label raster")
    s.add_argument("--labels", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--legend", action="store_true")
    s.add_argument("--scale", type=int, default=1)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("report", help="text summary from an eval JSON")
    s.add_argument("--eval", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_threads(args.threads)
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"urbanfn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
