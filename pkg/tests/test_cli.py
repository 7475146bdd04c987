import json
import os

import numpy as np
import pytest

from urbanfn.cli import main
from urbanfn.raster import load_bsqf

TRAIN_CFG = {"epochs": 2, "crops_per_tile": 12, "crop_size": 32,
             "batch_size": 8, "seed": 1, "val_tiles": 1}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One tiny city taken through synth -> train -> infer -> eval."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    run = root / "run"
    cfg = root / "train.json"
    cfg.write_text(json.dumps(TRAIN_CFG))
    assert main(["synth", "--out", str(data), "--seed", "5",
                 "--tiles", "2", "--tile-px", "128"]) == 0
    assert main(["train", "--data", str(data), "--out", str(run),
                 "--config", str(cfg)]) == 0
    assert main(["infer", "--data", str(data),
                 "--checkpoint", str(run / "checkpoint"),
                 "--out", str(run / "maps"), "--window", "128", "--png"]) == 0
    assert main(["eval", "--data", str(data),
                 "--checkpoint", str(run / "checkpoint"),
                 "--out", str(run / "eval.json"), "--window", "128",
                 "--tiles", "val", "--val-tiles", "1", "--points", "5"]) == 0
    return root


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as err:
        main(["synth"])                      # missing --out
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        main(["no-such-command"])
    assert err.value.code == 1
    capsys.readouterr()


def test_data_errors_exit_two(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "missing"),
                 "--out", str(tmp_path / "run")]) == 2
    assert "error" in capsys.readouterr().err

    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text('{"no_such_field": 3}')
    assert main(["synth", "--out", str(tmp_path / "d"),
                 "--config", str(bad_cfg)]) == 2
    assert "no_such_field" in capsys.readouterr().err

    assert main(["synth", "--out", str(tmp_path / "d"),
                 "--occupancy", "2.0"]) == 2
    capsys.readouterr()


def test_synth_prints_summary(workspace, capsys):
    data = workspace / "data"
    assert (data / "city.json").exists()
    # re-run into a fresh dir to capture stdout
    out = workspace / "data2"
    assert main(["synth", "--out", str(out), "--seed", "5",
                 "--tiles", "1", "--tile-px", "128"]) == 0
    text = capsys.readouterr().out
    assert "wrote 1 tiles" in text
    assert "buildings:" in text


def test_config_flag_overrides_file(tmp_path, capsys):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"n_tiles": 2, "tile_px": 128}))
    assert main(["synth", "--out", str(tmp_path / "d"), "--seed", "1",
                 "--config", str(cfg), "--tiles", "1"]) == 0
    manifest = json.loads((tmp_path / "d" / "city.json").read_text())
    assert manifest["spec"]["n_tiles"] == 1          # flag beats file
    assert manifest["spec"]["tile_px"] == 128        # file beats default
    capsys.readouterr()


def test_train_outputs(workspace, capsys):
    run = workspace / "run"
    assert (run / "checkpoint" / "manifest.json").exists()
    log = (run / "train_log.csv").read_text()
    assert log.startswith("epoch,step,loss\n")
    assert len(log.strip().split("\n")) > TRAIN_CFG["epochs"]


def test_infer_outputs(workspace):
    maps = workspace / "run" / "maps"
    for prefix in ("tile_000", "tile_001"):
        grid = load_bsqf(maps / f"{prefix}_pred")
        assert grid.data.shape == (1, 128, 128)
        codes = np.unique(grid.data[0])
        assert ((codes >= 0) & (codes <= 7)).all()
        assert (maps / f"{prefix}_pred.png").exists()


def test_eval_outputs_and_report(workspace, capsys):
    eval_json = workspace / "run" / "eval.json"
    data = json.loads(eval_json.read_text())
    assert data["extra"]["tiles"] == [1]             # val split only
    assert "metrics_points" in data
    assert (workspace / "run" / "eval_confusion.csv").read_text().startswith("ref\\pred,")

    assert main(["report", "--eval", str(eval_json),
                 "--out", str(workspace / "run" / "summary.txt")]) == 0
    text = capsys.readouterr().out
    assert "overall accuracy" in text
    assert (workspace / "run" / "summary.txt").read_text() == text


def test_eval_tile_selection_errors(workspace, capsys):
    run = workspace / "run"
    assert main(["eval", "--data", str(workspace / "data"),
                 "--checkpoint", str(run / "checkpoint"),
                 "--tiles", "7", "--window", "128"]) == 2
    assert "not in dataset" in capsys.readouterr().err


def test_cubes_command(workspace, capsys):
    out = workspace / "cubes"
    assert main(["cubes", "--data", str(workspace / "data"),
                 "--out", str(out)]) == 0
    grid = load_bsqf(out / "tile_000_cube")
    assert grid.data.shape == (7, 128, 128)
    assert grid.band_names == ["oi_r", "oi_g", "oi_b", "bh",
                               "ntl_1", "ntl_2", "ntl_3"]
    capsys.readouterr()


def test_labelgen_command(workspace, capsys):
    data = workspace / "data"
    out = workspace / "labelgen" / "tile0"
    os.makedirs(workspace / "labelgen", exist_ok=True)
    assert main(["labelgen", "--buildings", str(data / "tile_000_buildings.geojson"),
                 "--aois", str(data / "tile_000_aois.geojson"),
                 "--like", str(data / "tile_000_oi"),
                 "--out", str(out)]) == 0
    capsys.readouterr()
    regenerated = load_bsqf(str(out) + "_labels")
    original = load_bsqf(data / "tile_000_weak_labels")
    assert np.array_equal(regenerated.data, original.data)


def test_render_command(workspace, capsys):
    out = workspace / "render.png"
    assert main(["render", "--labels",
                 str(workspace / "data" / "tile_000_truth_labels"),
                 "--out", str(out), "--legend", "--scale", "2"]) == 0
    assert out.exists()
    capsys.readouterr()


def test_threads_flag_sets_env(tmp_path, capsys, monkeypatch):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS"):
        monkeypatch.delenv(var, raising=False)
    assert main(["--threads", "2", "synth", "--out", str(tmp_path / "d"),
                 "--tiles", "1", "--tile-px", "128"]) == 0
    assert os.environ["OMP_NUM_THREADS"] == "2"
    assert os.environ["OPENBLAS_NUM_THREADS"] == "2"

    monkeypatch.setenv("URBANFN_THREADS", "3")
    assert main(["synth", "--out", str(tmp_path / "d2"),
                 "--tiles", "1", "--tile-px", "128"]) == 0
    assert os.environ["OMP_NUM_THREADS"] == "3"

    assert main(["--threads", "0", "synth", "--out", str(tmp_path / "d3"),
                 "--tiles", "1"]) == 2
    capsys.readouterr()
