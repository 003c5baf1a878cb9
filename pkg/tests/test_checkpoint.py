import pytest
import torch
import yaml

from src import checkpoint
from src.autonn import adam_step, adam_step_count, make_optimizer
from src.checkpoint import load_checkpoint, save_checkpoint
from src.errors import FormatError
from src.model import BranchConfig, SiameseModel, embed
from src.objective import TripletBatch, batch_loss
from src.trainer import orientation_tensor

from .conftest import TINY_SCHEDULE


def _train_step(model, optimizer, seed=0):
    g = torch.Generator().manual_seed(seed)
    ground = torch.rand(3, 3, 16, 32, generator=g) * 2 - 1
    sat = torch.rand(3, 3, 16, 16, generator=g) * 2 - 1
    model.train()
    loss = batch_loss(TripletBatch(
        embed(model, ground, orientation_tensor("ground", 16, 32, 3), "ground"),
        embed(model, sat, orientation_tensor("satellite", 16, 16, 3), "satellite"),
    ))
    params = list(model.parameters())
    adam_step(params, torch.autograd.grad(loss, params, allow_unused=True), optimizer)


@pytest.fixture
def trained(tmp_path):
    model = SiameseModel(BranchConfig(TINY_SCHEDULE, "II"), seed=4)
    optimizer = make_optimizer(model.parameters(), lr=1e-3)
    _train_step(model, optimizer, 0)
    _train_step(model, optimizer, 1)
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(path, model, optimizer)
    return model, optimizer, path


def test_round_trip_restores_everything(trained):
    model, optimizer, path = trained
    loaded, loaded_opt, manifest = load_checkpoint(path)
    assert manifest["scheme"] == "II"
    assert list(manifest["channel_schedule"]) == list(TINY_SCHEDULE)
    a, b = model.state_dict(), loaded.state_dict()
    assert set(a) == set(b)
    for k in a:
        assert torch.equal(a[k], b[k]), k
    assert adam_step_count(loaded_opt) == 2
    assert loaded_opt.param_groups[0]["lr"] == pytest.approx(1e-3)
    for p, q in zip(model.parameters(), loaded.parameters()):
        assert torch.equal(optimizer.state[p]["exp_avg"], loaded_opt.state[q]["exp_avg"])
        assert torch.equal(optimizer.state[p]["exp_avg_sq"], loaded_opt.state[q]["exp_avg_sq"])


def test_resumed_step_matches_uninterrupted(trained):
    model, optimizer, path = trained
    loaded, loaded_opt, _ = load_checkpoint(path)
    _train_step(model, optimizer, 2)
    _train_step(loaded, loaded_opt, 2)
    for p, q in zip(model.parameters(), loaded.parameters()):
        assert torch.equal(p, q)


def test_checkpoint_without_optimizer(tmp_path, tiny_model):
    path = str(tmp_path / "fresh.ckpt")
    save_checkpoint(path, tiny_model)
    _, optimizer, _ = load_checkpoint(path)
    assert adam_step_count(optimizer) == 0
    assert not optimizer.state


def test_manifest_sidecar(trained):
    model, _, path = trained
    with open(path + ".manifest.yaml", encoding="utf-8") as f:
        sidecar = yaml.safe_load(f)
    assert sidecar == load_checkpoint(path)[2]
    assert sidecar["descriptor_dim"] == model.cfg.descriptor_dim


@pytest.mark.parametrize("damage", ["magic", "truncate", "trailing", "version"])
def test_corrupt_checkpoint(trained, damage):
    _, _, path = trained
    with open(path, "rb") as f:
        data = f.read()
    if damage == "magic":
        data = b"XVIEWIDX" + data[8:]
    elif damage == "truncate":
        data = data[: len(data) // 2]
    elif damage == "trailing":
        data = data + b"\x00\x01"
    else:
        data = data[:8] + (99).to_bytes(4, "little") + data[12:]
    with open(path, "wb") as f:
        f.write(data)
    with pytest.raises(FormatError):
        load_checkpoint(path)


@pytest.mark.parametrize("moment", ["_EXP_AVG", "_EXP_AVG_SQ"])
def test_half_saved_adam_state(tmp_path, monkeypatch, moment):
    model = SiameseModel(BranchConfig(TINY_SCHEDULE, "I"), seed=2)
    optimizer = make_optimizer(model.parameters(), lr=1e-3)
    _train_step(model, optimizer)
    path = str(tmp_path / "half.ckpt")
    with monkeypatch.context() as m:
        m.setattr(checkpoint, moment, "adam.stray/")
        save_checkpoint(path, model, optimizer)
    with pytest.raises(FormatError, match="exp_avg"):
        load_checkpoint(path)
