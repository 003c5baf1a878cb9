import os

import pytest
import yaml

from src.config import (
    RESOLVED_CONFIG_NAME,
    RunConfig,
    apply_overrides,
    load_run_config,
    write_resolved_config,
)
from src.errors import ValidationError

CONFIGS = os.path.join(os.path.dirname(os.path.dirname(__file__)), "configs")


def test_defaults_are_valid():
    cfg = RunConfig().validate()
    assert cfg.scheme == "I"
    assert cfg.channel_schedule == [64, 128, 256, 512, 512, 512, 512]
    assert (cfg.batch_size, cfg.lr, cfg.alpha, cfg.gem_p) == (12, 1e-5, 10.0, 3.0)
    assert load_run_config(None) == cfg


@pytest.mark.parametrize("name", ["synthetic.yaml", "tiny.yaml"])
def test_shipped_configs_load(name):
    cfg = load_run_config(os.path.join(CONFIGS, name)).validate()
    cfg.world()


def test_yaml_values_and_overrides(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("scheme: II\nlr: 1e-4\nbatch_size: 6\nrecall_ks: [1, 2]\naugment: false\n", encoding="utf-8")
    cfg = load_run_config(str(path))
    assert (cfg.scheme, cfg.lr, cfg.batch_size, cfg.recall_ks, cfg.augment) == ("II", 1e-4, 6, [1, 2], False)
    cfg = apply_overrides(cfg, {"batch_size": "8", "sweep_levels": "0,2.5,5", "augment": "yes"})
    assert cfg.batch_size == 8
    assert cfg.sweep_levels == [0.0, 2.5, 5.0]
    assert cfg.augment is True


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("", encoding="utf-8")
    assert load_run_config(str(path)) == RunConfig()


@pytest.mark.parametrize("text", [
    "bogus_key: 1\n",
    "training:\n  lr: 0.1\n",
    "- a\n- b\n",
    "batch_size: [1, 2\n",
    "batch_size: 2.5\n",
    "augment: maybe\n",
])
def test_bad_config_files(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ValidationError):
        load_run_config(str(path))


def test_missing_config_file(tmp_path):
    with pytest.raises(OSError):
        load_run_config(str(tmp_path / "absent.yaml"))


@pytest.mark.parametrize("overrides", [
    {"scheme": "III"},
    {"channel_schedule": [64, 128]},
    {"batch_size": 0},
    {"steps": 0, "epochs": 0},
    {"lr": 0},
    {"gem_p": 0.5},
    {"recall_ks": [0, 5]},
    {"sweep_levels": [10, 5]},
])
def test_validate_rejects(overrides):
    with pytest.raises(ValidationError):
        apply_overrides(RunConfig(), overrides).validate()


def test_world_config_mirrors_run_config():
    world = apply_overrides(RunConfig(), {"n_locations": 40, "n_test": 10, "seed": 9}).world()
    assert (world.n_locations, world.n_test, world.seed) == (40, 10, 9)
    assert (world.panorama_width, world.overhead_height) == (128, 112)


def test_resolved_config_reloads(tmp_path):
    cfg = apply_overrides(RunConfig(), {"scheme": "rgb-baseline", "steps": 7})
    path = write_resolved_config(cfg, str(tmp_path / "out"))
    assert os.path.basename(path) == RESOLVED_CONFIG_NAME
    with open(path, encoding="utf-8") as f:
        assert list(yaml.safe_load(f))[0] == "manifest"
    assert load_run_config(path) == cfg
