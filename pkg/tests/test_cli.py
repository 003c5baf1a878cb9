import csv
import json
import os

import cv2
import pytest

from main import main
from src.errors import EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION
from src.evaluation import load_index

WORLD = [
    "--n-locations", "12", "--n-test", "4", "--landmarks-per-location", "4",
    "--ground-height", "16", "--ground-width", "32",
    "--satellite-height", "32", "--satellite-width", "32",
    "--meters-per-pixel", "0.4", "--min-landmark-range", "3", "--max-landmark-range", "6",
    "--seed", "3",
]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, out = str(root / "data"), str(root / "run")
    run = WORLD + [
        "--manifest", os.path.join(data, "manifest.csv"),
        "--output-dir", out,
        "--checkpoint", os.path.join(out, "model.ckpt"),
        "--channel-schedule", "4,4,8,8,8,8,8",
        "--batch-size", "4", "--steps", "3", "--checkpoint-every", "2",
        "--lr", "1e-3", "--workers", "2",
        "--lang", "en",
    ]
    assert main(["synth", "--out", data, *WORLD, "--lang", "en"]) == EXIT_OK
    assert main(["train", *run]) == EXIT_OK
    assert main(["embed", "--side", "ground", *run]) == EXIT_OK
    assert main(["embed", "--side", "satellite", *run]) == EXIT_OK
    ground_idx = os.path.join(out, "ground_test.idx")
    satellite_idx = os.path.join(out, "satellite_test.idx")
    return root, data, out, run, ground_idx, satellite_idx


def test_synth_is_reproducible(pipeline, tmp_path):
    _, data, _, _, _, _ = pipeline
    again = str(tmp_path / "again")
    assert main(["synth", "--out", again, *WORLD]) == EXIT_OK
    for name in ("manifest.csv", "ground/loc00003.png", "satellite/loc00011.png"):
        with open(os.path.join(data, name), "rb") as a, open(os.path.join(again, name), "rb") as b:
            assert a.read() == b.read()
    assert os.path.exists(os.path.join(again, "config.resolved.yaml"))


def test_train_outputs(pipeline):
    _, _, out, _, _, _ = pipeline
    with open(os.path.join(out, "loss_log.csv"), newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["step", "epoch", "loss"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    with open(os.path.join(out, "train_summary.json"), encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["steps"] == 3
    for name in ("model.ckpt", "model.ckpt.manifest.yaml", "config.resolved.yaml", "loss_timing.csv"):
        assert os.path.exists(os.path.join(out, name))


def test_embed_indexes(pipeline):
    _, _, _, _, ground_idx, satellite_idx = pipeline
    ground, satellite = load_index(ground_idx), load_index(satellite_idx)
    assert ground.ids == satellite.ids
    assert ground.size == 4 and ground.dim == 24
    assert satellite.positions is not None


def test_embed_rerun_is_byte_identical(pipeline, tmp_path):
    _, _, _, run, ground_idx, satellite_idx = pipeline
    for side, first in (("ground", ground_idx), ("satellite", satellite_idx)):
        again = str(tmp_path / f"{side}.idx")
        assert main(["embed", "--side", side, *run, "--out", again]) == EXIT_OK
        with open(first, "rb") as a, open(again, "rb") as b:
            assert a.read() == b.read()


def test_eval_exports(pipeline):
    _, _, out, run, ground_idx, satellite_idx = pipeline
    code = main(["eval", "--ground-index", ground_idx, "--satellite-index", satellite_idx, *run])
    assert code == EXIT_OK
    with open(os.path.join(out, "recall.json"), encoding="utf-8") as f:
        data = json.load(f)
    recall = data["recall"]
    assert recall["n_database"] == recall["n_queries"] == 4
    assert set(recall["recall_at"]) == {"1", "5", "10"}
    assert recall["recall_at"]["5"] == 1.0
    assert data["localization"]["radius_m"] == 5.0
    assert os.path.exists(os.path.join(out, "recall_curve.csv"))
    assert os.path.exists(os.path.join(out, "localization_curve.csv"))


def test_sweep_exports(pipeline):
    _, _, out, run, _, satellite_idx = pipeline
    code = main(["sweep", "--satellite-index", satellite_idx, *run, "--sweep-levels", "0,10"])
    assert code == EXIT_OK
    with open(os.path.join(out, "sweep.json"), encoding="utf-8") as f:
        sweep = json.load(f)
    assert [lvl["level_deg"] for lvl in sweep["levels"]] == [0.0, 10.0]
    with open(os.path.join(out, "sweep.csv"), newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["level_deg", "r@1", "r@5", "r@10", "r@top1%"]
    assert len(rows) == 3


def test_query(pipeline):
    _, data, _, run, _, satellite_idx = pipeline
    panorama = os.path.join(data, "ground", "loc00000.png")
    assert main(["query", panorama, "--satellite-index", satellite_idx, *run, "--top-k", "2"]) == EXIT_OK


def test_ablation_exports(pipeline, tmp_path):
    _, _, _, run, _, _ = pipeline
    out = str(tmp_path / "ablation")
    code = main([
        "ablation", *run, "--output-dir", out, "--steps", "2", "--sweep-levels", "0,10",
        "--schemes", "rgb-baseline,I", "--seeds", "1,2",
    ])
    assert code == EXIT_OK
    with open(os.path.join(out, "ablation_runs.csv"), newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert [(r[0], r[1]) for r in rows[1:]] == [("rgb-baseline", "1"), ("rgb-baseline", "2"), ("I", "1"), ("I", "2")]
    with open(os.path.join(out, "ablation.json"), encoding="utf-8") as f:
        data = json.load(f)
    assert set(data["median"]) == {"rgb-baseline", "I"}
    checks = {c["name"]: c for c in data["checks"]}
    assert checks["scheme_gap"]["passed"] is None
    assert isinstance(checks["uv_gain"]["passed"], bool)
    assert os.path.exists(os.path.join(out, "I-seed2", "model.ckpt"))
    assert main(["ablation", *run, "--seeds", "1,x"]) == EXIT_USAGE


@pytest.mark.parametrize("style", ["raw", "color"])
def test_orient(tmp_path, style):
    path = str(tmp_path / "maps" / f"{style}.png")
    assert main(["orient", "--view", "satellite", "--width", "20", "--height", "10", "--style", style, "--out", path]) == EXIT_OK
    assert cv2.imread(path).shape == (10, 20, 3)


def test_usage_errors():
    assert main(["synth"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["train", "--no-such-flag", "1"]) == EXIT_USAGE
    assert main(["--help"]) == EXIT_OK


def test_validation_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("bogus: 1\n", encoding="utf-8")
    assert main(["train", "--config", str(bad)]) == EXIT_VALIDATION
    assert main(["train", "--scheme", "III"]) == EXIT_VALIDATION
    assert main(["orient", "--view", "ground", "--width", "0", "--height", "4", "--out", str(tmp_path / "x.png")]) == EXIT_VALIDATION


def test_io_errors(tmp_path):
    missing = str(tmp_path / "nowhere" / "manifest.csv")
    assert main(["train", "--manifest", missing, "--output-dir", str(tmp_path / "run")]) == EXIT_IO
    assert main(["eval", "--ground-index", str(tmp_path / "g.idx"), "--satellite-index", str(tmp_path / "s.idx")]) == EXIT_IO
