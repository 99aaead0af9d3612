import numpy as np
import pytest
import torch

from a3gan.checkpoint import (
    CHECKPOINT_VERSION,
    load_checkpoint,
    load_model_arrays,
    load_optimizer_arrays,
    model_arrays,
    optimizer_arrays,
    save_checkpoint,
)


def test_roundtrip_arrays_and_manifest(tmp_path):
    arrays = {
        "generator/enc1.0/weight": np.random.default_rng(0).normal(size=(4, 3, 3, 3)).astype(np.float32),
        "optim/g/0/step": np.float32(5.0),
    }
    manifest = {"step": 5, "seed": 7, "profile": "desk-64"}
    path = save_checkpoint(tmp_path / "x.ckpt", arrays, manifest)
    back_arrays, back_manifest = load_checkpoint(path)
    assert back_manifest["version"] == CHECKPOINT_VERSION
    assert back_manifest["step"] == 5
    assert "subband_order" in back_manifest
    assert set(back_arrays) == set(arrays)
    for k in arrays:
        assert np.array_equal(back_arrays[k], arrays[k])


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_model_and_optimizer_arrays_roundtrip(tmp_path):
    torch.manual_seed(0)
    model = torch.nn.Sequential(torch.nn.Conv2d(1, 2, 3), torch.nn.Conv2d(2, 1, 3))
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    x = torch.randn(1, 1, 8, 8)
    model(x).sum().backward()
    opt.step()

    arrays = {**model_arrays(model, "m"), **optimizer_arrays(opt, "opt")}
    assert any(k.endswith("/exp_avg") for k in arrays)
    save_checkpoint(tmp_path / "m.ckpt", arrays, {"step": 1})
    loaded, _ = load_checkpoint(tmp_path / "m.ckpt")

    torch.manual_seed(123)
    other = torch.nn.Sequential(torch.nn.Conv2d(1, 2, 3), torch.nn.Conv2d(2, 1, 3))
    other_opt = torch.optim.Adam(other.parameters(), lr=1e-3)
    load_model_arrays(other, "m", loaded)
    load_optimizer_arrays(other_opt, "opt", loaded)

    for (_, a), (_, b) in zip(model.named_parameters(), other.named_parameters()):
        assert torch.equal(a, b)
    sd_a, sd_b = opt.state_dict()["state"], other_opt.state_dict()["state"]
    assert sd_a.keys() == sd_b.keys()
    for i in sd_a:
        for key in sd_a[i]:
            assert torch.equal(torch.as_tensor(sd_a[i][key]), torch.as_tensor(sd_b[i][key]))


def test_missing_model_key_rejected(tmp_path):
    model = torch.nn.Linear(2, 2)
    with pytest.raises(KeyError):
        load_model_arrays(model, "m", {})
