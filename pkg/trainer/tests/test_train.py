import json

import numpy as np
import pytest
import torch

from chmtrainer import (ModelConfig, TrainConfig, build_model,
                        load_checkpoint, load_patch_data, masked_mse,
                        predict, save_checkpoint, train)
from chmtrainer.train import centered_val_mae, seed_everything
from chmtrainer.cli import main as cli_main


def test_masked_mse_ignores_masked_pixels():
    pred = torch.zeros(1, 1, 4, 4)
    target = torch.ones(1, 1, 4, 4) * 3.0
    mask = torch.zeros(1, 1, 4, 4, dtype=torch.bool)
    mask[0, 0, 0, 0] = True
    assert float(masked_mse(pred, target, mask)) == pytest.approx(9.0)
    target[0, 0, 1, 1] = 1e6  # masked-out: must not matter
    assert float(masked_mse(pred, target, mask)) == pytest.approx(9.0)
    with pytest.raises(ValueError):
        masked_mse(pred, target, torch.zeros_like(mask))


def test_single_step_reduces_batch_loss(small_dataset):
    data = load_patch_data(small_dataset)
    split = data.split("train")
    feats = torch.from_numpy(split.features[:4])
    tgts = torch.from_numpy(split.targets[:4])
    mask = torch.from_numpy(split.mask[:4])
    seed_everything(0)
    model = build_model(ModelConfig(arch="shallow",
                                    in_channels=data.n_channels))
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-5)
    model.train()
    before = masked_mse(model(feats), tgts, mask)
    before.backward()
    optimizer.step()
    with torch.no_grad():
        after = masked_mse(model(feats), tgts, mask)
    assert float(after) < float(before.detach())


def test_masked_gradient_invariant(small_dataset):
    # perturbing masked-out targets leaves a training step bit-identical
    data = load_patch_data(small_dataset)
    split = data.split("train")
    feats = torch.from_numpy(split.features[:8])
    tgts = torch.from_numpy(split.targets[:8])
    mask = torch.from_numpy(split.mask[:8].copy())
    mask[:, :, ::3, ::3] = False  # ensure some masked-out pixels exist

    results = []
    for poison in (False, True):
        seed_everything(123)
        model = build_model(ModelConfig(arch="shallow",
                                        in_channels=data.n_channels))
        optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)
        t = tgts.clone()
        if poison:
            t[~mask] = 1e6
        loss = masked_mse(model(feats), t, mask)
        loss.backward()
        optimizer.step()
        results.append({k: v.detach().clone()
                        for k, v in model.state_dict().items()})
    for key in results[0]:
        assert torch.equal(results[0][key], results[1][key]), key


def test_train_stops_with_zero_patience(small_dataset):
    data = load_patch_data(small_dataset)
    seed_everything(0)
    model = build_model(ModelConfig(arch="shallow",
                                    in_channels=data.n_channels))
    cfg = TrainConfig(lr=1e-3, batch_size=16, max_epochs=50,
                      early_stop_patience=0, seed=0)
    _, history = train(model, small_dataset, cfg, log=lambda m: None)
    # stops right after the first epoch whose val MAE fails to improve
    worse = [k for k in range(1, len(history))
             if history[k]["val_mae"] >= history[k - 1]["val_mae"]]
    assert len(history) < 50
    assert worse and worse[-1] == len(history) - 1


def test_train_history_deterministic(small_dataset):
    runs = []
    for _ in range(2):
        seed_everything(7)
        data = load_patch_data(small_dataset)
        model = build_model(ModelConfig(arch="shallow",
                                        in_channels=data.n_channels))
        cfg = TrainConfig(lr=1e-3, batch_size=8, max_epochs=3,
                          early_stop_patience=15, seed=7)
        _, history = train(model, small_dataset, cfg, log=lambda m: None)
        runs.append(history)
    assert runs[0] == runs[1]


def test_predict_deterministic_and_shaped(small_dataset):
    data = load_patch_data(small_dataset)
    seed_everything(0)
    model = build_model(ModelConfig(arch="shallow",
                                    in_channels=data.n_channels))
    feats = data.split("test").features
    a = predict(model, feats)
    b = predict(model, feats)
    assert a.shape == (feats.shape[0], 1, data.patch_size, data.patch_size)
    assert a.dtype == np.float32
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        predict(model, feats[:, :4])  # channel mismatch


def test_checkpoint_roundtrip(tmp_path, small_dataset):
    data = load_patch_data(small_dataset)
    seed_everything(0)
    model = build_model(ModelConfig(arch="shallow",
                                    in_channels=data.n_channels))
    cfg = TrainConfig(lr=1e-3, batch_size=16, max_epochs=1)
    save_checkpoint(model, cfg, tmp_path / "ckpt.pt")
    loaded, payload = load_checkpoint(tmp_path / "ckpt.pt")
    assert payload["model_cfg"]["arch"] == "shallow"
    feats = data.split("val").features
    assert np.array_equal(predict(model, feats), predict(loaded, feats))


def test_cli_train_predict_roundtrip(tmp_path, small_dataset):
    run = tmp_path / "run"
    assert cli_main(["train", "--dataset", str(small_dataset),
                     "--out", str(run), "--arch", "shallow",
                     "--max-epochs", "2", "--batch-size", "8",
                     "--seed", "0"]) == 0
    assert (run / "checkpoint.pt").exists()
    history = json.loads((run / "history.json").read_text())
    assert len(history) == 2
    assert {"epoch", "train_loss", "val_mae"} <= set(history[0])
    preds = np.load(run / "preds_test.npy")
    data = load_patch_data(small_dataset)
    assert preds.shape == (data.split("test").features.shape[0], 1, 32, 32)
    out = tmp_path / "p.npy"
    assert cli_main(["predict", "--checkpoint", str(run / "checkpoint.pt"),
                     "--dataset", str(small_dataset), "--split", "test",
                     "--out", str(out)]) == 0
    assert np.array_equal(np.load(out), preds)


def test_val_metric_matches_mosaic_definition(small_dataset):
    # centered_val_mae equals the masked MAE over assembled central crops
    data = load_patch_data(small_dataset)
    seed_everything(0)
    model = build_model(ModelConfig(arch="shallow",
                                    in_channels=data.n_channels))
    split = data.split("val")
    got = centered_val_mae(model, split, data.patch_size)
    preds = predict(model, split.features)
    off = data.patch_size // 4
    s = data.patch_size // 2
    crop = np.s_[:, :, off:off + s, off:off + s]
    err = np.abs(preds[crop] - split.targets[crop])
    m = split.mask[crop]
    assert got == pytest.approx(float(err[m].mean()), rel=1e-6)
