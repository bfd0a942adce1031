import dataclasses
import math

import numpy as np
import pytest
import torch
from torch import nn

import cxrclassify as cx
from cxrclassify.errors import CheckpointError, TrainingError
from oracles import reference_bce


def _quick_config(**overrides):
    base = dict(batch_size=32, max_epochs=3, seed=1)
    base.update(overrides)
    return cx.TrainConfig(**base)


# ---------------------------------------------------------------- loss


def test_loss_at_half_is_log_two():
    probs = torch.full((4, 14), 0.5, dtype=torch.float64)
    targets = torch.randint(0, 2, (4, 14), dtype=torch.float64)
    loss = cx.bce_multilabel_loss(probs, targets)
    assert float(loss) == pytest.approx(math.log(2.0), abs=1e-12)


def test_loss_hand_worked_example():
    probs = torch.tensor([[0.9, 0.2]], dtype=torch.float64)
    targets = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    loss = cx.bce_multilabel_loss(probs, targets)
    expected = -(math.log(0.9) + math.log(0.8)) / 2.0
    assert float(loss) == pytest.approx(expected, abs=1e-12)
    assert float(loss) == pytest.approx(0.164252, abs=1e-6)


def test_loss_matches_reference_randomized():
    rng = np.random.default_rng(3)
    for _ in range(100):
        shape = (int(rng.integers(1, 20)), 14)
        probs = rng.uniform(size=shape)
        targets = rng.integers(0, 2, size=shape).astype(np.float64)
        ours = cx.bce_multilabel_loss(
            torch.from_numpy(probs), torch.from_numpy(targets)
        )
        assert float(ours) == pytest.approx(reference_bce(probs, targets), abs=1e-12)


def test_loss_clamp_keeps_saturated_outputs_finite():
    probs = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
    targets = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    loss = cx.bce_multilabel_loss(probs, targets)
    assert torch.isfinite(loss)
    assert float(loss) == pytest.approx(-math.log(1e-7), rel=1e-6)


def test_loss_mask_means_over_selected_entries():
    probs = torch.tensor([[0.9, 0.2, 0.7]], dtype=torch.float64)
    targets = torch.tensor([[1.0, 0.0, 1.0]], dtype=torch.float64)
    mask = torch.tensor([[1.0, 0.0, 1.0]])
    loss = cx.bce_multilabel_loss(probs, targets, mask)
    expected = -(math.log(0.9) + math.log(0.7)) / 2.0
    assert float(loss) == pytest.approx(expected, abs=1e-12)
    all_false = torch.zeros_like(mask)
    assert float(cx.bce_multilabel_loss(probs, targets, all_false)) == 0.0


def test_loss_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        cx.bce_multilabel_loss(torch.rand(2, 14), torch.rand(3, 14))
    with pytest.raises(ValueError):
        cx.bce_multilabel_loss(torch.rand(2, 14), torch.rand(2, 14), torch.rand(2, 13))


# ------------------------------------------------------------ gradients


def test_loss_gradient_is_p_minus_t_over_n():
    torch.manual_seed(0)
    logits = torch.randn(6, 14, dtype=torch.float64, requires_grad=True)
    targets = torch.randint(0, 2, (6, 14), dtype=torch.float64)
    probs = torch.sigmoid(logits)
    loss = cx.bce_multilabel_loss(probs, targets)
    loss.backward()
    expected = (torch.sigmoid(logits.detach()) - targets) / logits.numel()
    assert torch.allclose(logits.grad, expected, atol=1e-6)


def test_gradient_check_against_central_differences():
    """Analytic head gradients agree with finite differences to 1e-3."""
    torch.manual_seed(1)
    x = torch.randn(4, 512, dtype=torch.float64)
    targets = torch.randint(0, 2, (4, 14), dtype=torch.float64)
    weight = torch.randn(512, 14, dtype=torch.float64, requires_grad=True) * 0.05
    weight = weight.detach().requires_grad_(True)
    bias = torch.zeros(14, dtype=torch.float64, requires_grad=True)

    def loss_value(w, b):
        return cx.bce_multilabel_loss(torch.sigmoid(x @ w + b), targets)

    loss = loss_value(weight, bias)
    loss.backward()

    step = 1e-4
    rng = np.random.default_rng(0)
    rows = rng.integers(0, 512, size=150)
    cols = rng.integers(0, 14, size=150)
    analytic, numeric = [], []
    with torch.no_grad():
        for r, c in zip(rows, cols):
            for sign in (1.0, -1.0):
                weight[r, c] += sign * step
                value = float(loss_value(weight, bias))
                weight[r, c] -= sign * step
                if sign > 0:
                    plus = value
                else:
                    minus = value
            numeric.append((plus - minus) / (2 * step))
            analytic.append(float(weight.grad[r, c]))
        for c in range(14):
            for sign in (1.0, -1.0):
                bias[c] += sign * step
                value = float(loss_value(weight, bias))
                bias[c] -= sign * step
                if sign > 0:
                    plus = value
                else:
                    minus = value
            numeric.append((plus - minus) / (2 * step))
            analytic.append(float(bias.grad[c]))

    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    rel = np.linalg.norm(analytic - numeric) / max(
        np.linalg.norm(analytic), np.linalg.norm(numeric)
    )
    assert rel <= 1e-3


# ------------------------------------------------------------- dataset


def test_dataset_targets_and_order(small_fixture, eval_aug):
    root, manifest = small_fixture
    ds = cx.ManifestDataset(manifest, cx.PolicyConfig(), eval_aug, data_root=root)
    assert len(ds) == len(manifest)
    image, target = ds[0]
    assert image.shape == (3, 64, 64)
    assert target.shape == (14,)
    expected = cx.resolve_targets(manifest.records[0].labels, cx.PolicyConfig())
    assert np.array_equal(target.numpy(), expected)


def test_dataset_epoch_changes_augmentation(small_fixture):
    root, manifest = small_fixture
    aug = cx.AugmentationConfig(
        resize_hw=(64, 64), horizontal_flip_prob=0.5, rotation_degrees_max=10.0
    )
    ds = cx.ManifestDataset(
        manifest, cx.PolicyConfig(), aug, data_root=root, train_mode=True, seed=4
    )
    ds.set_epoch(1)
    first = {i: ds[i][0].numpy().tobytes() for i in range(6)}
    ds.set_epoch(1)
    again = {i: ds[i][0].numpy().tobytes() for i in range(6)}
    assert first == again
    ds.set_epoch(2)
    other = {i: ds[i][0].numpy().tobytes() for i in range(6)}
    assert any(first[i] != other[i] for i in first)


# ------------------------------------------------------------- training


def test_early_stop_patience_zero_runs_one_epoch(small_fixture, eval_aug):
    root, manifest = small_fixture
    train_m, val_m = cx.split_train_val(manifest, 0.25, 1)
    model = cx.build_custom_net(seed=1)
    result = cx.train(
        model, train_m, val_m,
        _quick_config(max_epochs=5, early_stop_patience=0),
        augmentation=eval_aug, data_root=root,
    )
    assert result.epochs_run == 1
    assert result.stop_reason == "early_stop"
    assert result.best_epoch == 1


def test_two_seeded_runs_identical_logs(small_fixture, eval_aug, tmp_path):
    root, manifest = small_fixture
    train_m, val_m = cx.split_train_val(manifest, 0.25, 2)
    aug = cx.AugmentationConfig(
        resize_hw=(64, 64), horizontal_flip_prob=0.5, rotation_degrees_max=10.0
    )
    logs = []
    for run in range(2):
        model = cx.build_custom_net(seed=9)
        path = tmp_path / f"run{run}.jsonl"
        cx.train(
            model, train_m, val_m, _quick_config(seed=9),
            augmentation=aug, data_root=root, log_path=path,
        )
        logs.append(path.read_bytes())
    assert logs[0] == logs[1]


def test_different_seeds_diverge(small_fixture, eval_aug):
    root, manifest = small_fixture
    train_m, val_m = cx.split_train_val(manifest, 0.25, 2)
    results = []
    for seed in (1, 2):
        model = cx.build_custom_net(seed=seed)
        results.append(
            cx.train(model, train_m, val_m, _quick_config(max_epochs=2, seed=seed),
                     augmentation=eval_aug, data_root=root)
        )
    assert results[0].epoch_logs != results[1].epoch_logs


def test_logged_dynamics_follow_stated_rules(small_fixture, eval_aug):
    """lr decay, improvement flags, best epoch, and stop point all recompute
    from the logged sequences themselves."""
    root, manifest = small_fixture
    train_m, val_m = cx.split_train_val(manifest, 0.25, 3)
    config = _quick_config(max_epochs=8, seed=3)
    model = cx.build_custom_net(seed=3)
    result = cx.train(model, train_m, val_m, config,
                      augmentation=eval_aug, data_root=root)

    lr = config.learning_rate
    best_loss = math.inf
    bad_loss = 0
    best_auc = -math.inf
    best_epoch = 0
    bad_auc = 0
    for entry in result.epoch_logs:
        assert entry.learning_rate == pytest.approx(lr, rel=1e-12)
        improved = entry.val_auroc > best_auc
        assert entry.improved == improved
        if improved:
            best_auc = entry.val_auroc
            best_epoch = entry.epoch
            bad_auc = 0
        else:
            bad_auc += 1
        if entry.val_loss < best_loss:
            best_loss = entry.val_loss
            bad_loss = 0
        else:
            bad_loss += 1
            if bad_loss > config.plateau_patience:
                lr *= config.plateau_factor
                bad_loss = 0
        if bad_auc >= config.early_stop_patience:
            break
    assert result.best_epoch == best_epoch
    assert result.best_val_auroc == pytest.approx(best_auc)
    stopped_early = bad_auc >= config.early_stop_patience
    assert result.stop_reason == ("early_stop" if stopped_early else "max_epochs")
    assert result.epochs_run == result.epoch_logs[-1].epoch


def test_model_restored_to_best_epoch_weights(small_fixture, eval_aug):
    root, manifest = small_fixture
    train_m, val_m = cx.split_train_val(manifest, 0.25, 4)
    model = cx.build_custom_net(seed=4)
    result = cx.train(model, train_m, val_m, _quick_config(seed=4),
                      augmentation=eval_aug, data_root=root)
    current = model.state_dict()
    for name, tensor in result.best_state_dict.items():
        assert torch.equal(current[name], tensor)


def test_undefined_validation_auroc_aborts(small_fixture, eval_aug):
    root, manifest = small_fixture
    train_m, _ = cx.split_train_val(manifest, 0.25, 5)
    all_zero = tuple(
        dataclasses.replace(r, labels=tuple([0.0] * 14)) for r in manifest.records[:8]
    )
    degenerate = cx.DatasetManifest(records=all_zero, source_path="degenerate")
    model = cx.build_custom_net(seed=5)
    with pytest.raises(TrainingError):
        cx.train(model, train_m, degenerate, _quick_config(max_epochs=1),
                 augmentation=eval_aug, data_root=root)


def test_non_finite_loss_aborts(small_fixture, eval_aug):
    root, manifest = small_fixture
    train_m, val_m = cx.split_train_val(manifest, 0.25, 6)

    class _NaNModel(nn.Module):
        def __init__(self):
            super().__init__()
            self.w = nn.Parameter(torch.ones(1))

        def forward(self, x):
            return torch.full((x.shape[0], 14), float("nan")) * self.w

    with pytest.raises(TrainingError):
        cx.train(_NaNModel(), train_m, val_m, _quick_config(max_epochs=1),
                 augmentation=eval_aug, data_root=root)


def test_no_trainable_parameters_aborts(small_fixture, eval_aug):
    root, manifest = small_fixture
    train_m, val_m = cx.split_train_val(manifest, 0.25, 6)
    model = cx.build_custom_net(seed=0)
    for p in model.parameters():
        p.requires_grad = False
    with pytest.raises(TrainingError):
        cx.train(model, train_m, val_m, _quick_config(),
                 augmentation=eval_aug, data_root=root)


# ------------------------------------------------------------- predict


class _ConstModel(nn.Module):
    """Emits a fixed probability row regardless of input."""

    def __init__(self, values):
        super().__init__()
        self.register_buffer("values", torch.as_tensor(values, dtype=torch.float32))

    def forward(self, x):
        return self.values.repeat(x.shape[0], 1)


def test_predict_threshold_is_strictly_greater(small_fixture, eval_aug):
    root, manifest = small_fixture
    values = [0.5] * 14
    values[3] = 0.51
    values[7] = 0.49
    result = cx.predict(
        _ConstModel(values), manifest,
        augmentation=eval_aug, threshold=0.5, data_root=root,
    )
    assert result.probabilities.shape == (len(manifest), 14)
    expected_row = [0] * 14
    expected_row[3] = 1
    assert result.predictions.tolist() == [expected_row] * len(manifest)


def test_predict_respects_custom_threshold(small_fixture, eval_aug):
    root, manifest = small_fixture
    result = cx.predict(
        _ConstModel([0.6] * 14), manifest,
        augmentation=eval_aug, threshold=0.9, data_root=root,
    )
    assert not result.predictions.any()


def test_predict_row_order_and_targets(small_fixture, eval_aug):
    root, manifest = small_fixture
    result = cx.predict(
        _ConstModel([0.2] * 14), manifest,
        augmentation=eval_aug, data_root=root,
    )
    policy = cx.PolicyConfig()
    for i, record in enumerate(manifest):
        assert np.array_equal(
            result.targets[i], cx.resolve_targets(record.labels, policy)
        )


# ----------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_bit_stable_predict(small_fixture, eval_aug, tmp_path):
    root, manifest = small_fixture
    train_m, val_m = cx.split_train_val(manifest, 0.25, 7)
    model = cx.build_custom_net(seed=7)
    cx.train(model, train_m, val_m, _quick_config(max_epochs=2, seed=7),
             augmentation=eval_aug, data_root=root)
    before = cx.predict(model, manifest, augmentation=eval_aug, data_root=root)

    path = tmp_path / "model.pt"
    cx.save_checkpoint(path, model, threshold=0.5, best_epoch=2,
                       train_config=_quick_config(max_epochs=2, seed=7),
                       policy=cx.PolicyConfig())
    restored = cx.model_from_checkpoint(path)
    after = cx.predict(restored, manifest, augmentation=eval_aug, data_root=root)
    assert before.probabilities.tobytes() == after.probabilities.tobytes()
    assert np.array_equal(before.predictions, after.predictions)


def test_checkpoint_payload_fields(small_fixture, tmp_path):
    model = cx.build_custom_net(seed=0)
    path = tmp_path / "m.pt"
    cx.save_checkpoint(path, model, threshold=0.7, best_epoch=3,
                       train_config=cx.TrainConfig(seed=5),
                       policy=cx.PolicyConfig(mask_blanks=True))
    ckpt = cx.load_checkpoint(path)
    assert ckpt.arch_id == "customnet"
    assert ckpt.pretrained is False
    assert ckpt.label_names == cx.LABEL_NAMES
    assert ckpt.threshold == 0.7
    assert ckpt.best_epoch == 3
    assert ckpt.train_config["seed"] == 5
    assert ckpt.policy["mask_blanks"] is True
    assert sorted(ckpt.policy["u_one_labels"]) == ["Atelectasis", "Edema"]


def test_checkpoint_rejects_wrong_label_order(tmp_path):
    model = cx.build_custom_net(seed=0)
    path = tmp_path / "m.pt"
    cx.save_checkpoint(path, model)
    payload = torch.load(path, weights_only=False)
    payload["label_names"] = list(reversed(payload["label_names"]))
    torch.save(payload, path)
    with pytest.raises(CheckpointError):
        cx.load_checkpoint(path)


def test_checkpoint_rejects_unknown_version(tmp_path):
    model = cx.build_custom_net(seed=0)
    path = tmp_path / "m.pt"
    cx.save_checkpoint(path, model)
    payload = torch.load(path, weights_only=False)
    payload["format_version"] = 99
    torch.save(payload, path)
    with pytest.raises(CheckpointError):
        cx.load_checkpoint(path)


def test_checkpoint_rejects_mismatched_state(tmp_path):
    model = cx.build_custom_net(seed=0)
    path = tmp_path / "m.pt"
    cx.save_checkpoint(path, model)
    payload = torch.load(path, weights_only=False)
    payload["arch_id"] = "densenet121"
    torch.save(payload, path)
    with pytest.raises(CheckpointError):
        cx.model_from_checkpoint(path)


def test_checkpoint_missing_or_garbage_file(tmp_path):
    with pytest.raises(CheckpointError):
        cx.load_checkpoint(tmp_path / "nope.pt")
    garbage = tmp_path / "garbage.pt"
    garbage.write_bytes(b"\x00\x01\x02")
    with pytest.raises(CheckpointError):
        cx.load_checkpoint(garbage)
    listfile = tmp_path / "list.pt"
    torch.save([1, 2, 3], listfile)
    with pytest.raises(CheckpointError):
        cx.load_checkpoint(listfile)


def test_train_config_validation():
    with pytest.raises(ValueError):
        cx.TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        cx.TrainConfig(plateau_factor=1.5)
    with pytest.raises(ValueError):
        cx.TrainConfig(threshold=0.0)
    with pytest.raises(ValueError):
        cx.TrainConfig(early_stop_patience=-1)
