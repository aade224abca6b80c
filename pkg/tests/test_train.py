import math

import numpy as np
import pytest
import torch

from q8ssp.archzoo import build_model, load_checkpoint, small_config
from q8ssp.errors import ConfigError, EmptyMaskError, LeakageError, TrainingDiverged
from q8ssp.featurize import prepare
from q8ssp.train import (
    PUBLISHED_PRESETS,
    EpochRecord,
    TrainHistory,
    decayed_lr,
    fit,
    masked_xent,
    masked_xent_from_log,
    predict_probs,
    preset,
)


def test_presets_match_published_rows():
    assert PUBLISHED_PRESETS == {
        "A": ("rmsprop", 0.003, 0.5, 20, 64),
        "B": ("rmsprop", 0.002, 0.5, 80, 128),
        "C": ("nadam", 0.002, 0.004, 75, 128),
        "D": ("adam", 0.001, 0.0001, 5, 16),
        "E": ("nadam", 0.002, 0.004, 10, 64),
        "F": ("rmsprop", 0.001, 0.0, 30, 128),
    }
    c = preset("C")
    assert (c.optimizer_name, c.learning_rate, c.decay, c.epochs, c.batch_size) == ("nadam", 0.002, 0.004, 75, 128)


def test_preset_overrides_and_errors():
    assert preset("B", epochs=3, batch_size=None).epochs == 3
    with pytest.raises(ConfigError):
        preset("B", name="fast")
    with pytest.raises(ConfigError):
        preset("B", optimizer_name="sgd")
    with pytest.raises(ConfigError):
        preset("B", batch_size=0)


def test_decayed_lr_examples():
    assert decayed_lr(2, preset("B")) == 0.001
    assert decayed_lr(0, preset("D")) == 0.001
    f = preset("F")
    assert all(decayed_lr(s, f) == 0.001 for s in range(30))
    with pytest.raises(ConfigError):
        decayed_lr(-1, f)


def test_xent_perfect_and_uniform():
    labels = np.array([[0, 3, 7, 8]])
    mask = np.array([[1, 1, 1, 0]])
    perfect = np.eye(9)[labels]
    assert float(masked_xent(perfect, labels, mask)) == 0.0
    uniform = np.full((1, 4, 9), 1 / 9)
    assert float(masked_xent(uniform, labels, mask)) == pytest.approx(math.log(9), abs=1e-12)


def test_xent_brute_force(rng):
    probs = rng.dirichlet(np.ones(9), size=(1, 3))
    labels = rng.integers(0, 8, size=(1, 3))
    mask = np.array([[1, 0, 1]])
    expected = -(math.log(probs[0, 0, labels[0, 0]]) + math.log(probs[0, 2, labels[0, 2]])) / 2
    assert float(masked_xent(probs, labels, mask)) == pytest.approx(expected, abs=1e-6)


def test_xent_ignores_padding_exactly(rng):
    probs = rng.dirichlet(np.ones(9), size=(2, 6))
    labels = rng.integers(0, 8, size=(2, 6))
    mask = np.array([[1, 1, 1, 0, 0, 0], [1, 1, 1, 1, 1, 0]])
    base = masked_xent(probs, labels, mask)
    noisy = probs.copy()
    noisy[mask == 0] = 0.0
    labels2 = labels.copy()
    labels2[mask == 0] = 8
    assert torch.equal(masked_xent(noisy, labels2, mask), base)


def test_xent_empty_mask():
    with pytest.raises(EmptyMaskError):
        masked_xent(np.full((1, 2, 9), 1 / 9), np.zeros((1, 2), int), np.zeros((1, 2), int))
    with pytest.raises(ValueError):
        masked_xent_from_log(torch.zeros(1, 2, 9), np.zeros((1, 2), int), np.zeros((1, 2), int))


def test_loss_gradient_consistency(small_ds):
    """Finite differences of the loss wrt 16 entries of the log-probability input."""
    rng = np.random.default_rng(1)
    logits = torch.tensor(rng.normal(size=(2, 700, 9)), requires_grad=True)
    labels, mask = small_ds.labels[:2], small_ds.mask[:2]

    def loss(z):
        return masked_xent_from_log(torch.log_softmax(z, -1), labels, mask)

    loss(logits).backward()
    real = np.argwhere(mask)
    with torch.no_grad():
        for n, i in real[rng.choice(len(real), 16, replace=False)]:
            j = int(rng.integers(0, 9))
            z = logits.detach().clone()
            z[n, i, j] += 1e-6
            up = float(loss(z))
            z[n, i, j] -= 2e-6
            down = float(loss(z))
            numeric = (up - down) / 2e-6
            analytic = float(logits.grad[n, i, j])
            assert abs(numeric - analytic) <= 1e-3 * abs(analytic) + 1e-12


def test_history_numbering():
    h = TrainHistory()
    h.append(EpochRecord(0, 1.0, 1.0, 0.5, 0.1, 0.0))
    with pytest.raises(ValueError):
        h.append(EpochRecord(2, 1.0, 1.0, 0.5, 0.1, 0.0))
    assert h.to_tsv().count("\n") == 2


def test_zero_epochs_returns_initial_weights(small_ds, tmp_path):
    model = build_model(small_config("F"))
    before = {k: v.clone() for k, v in model.state_dict().items()}
    state, history = fit(model, small_ds, None, preset("F", epochs=0), out_dir=tmp_path)
    assert len(history) == 0 and history.best_epoch is None
    assert all(torch.equal(before[k], state[k]) for k in before)
    _, manifest = load_checkpoint(tmp_path)
    assert manifest["epochs_completed"] == 0


def test_fit_writes_history_and_manifest(small_ds, tmp_path):
    train, val = small_ds.subset([0, 1, 2, 3]), small_ds.subset([4, 5])
    state, history = fit(build_model(small_config("C")), train, val, preset("C", name="smoke", epochs=3),
                         out_dir=tmp_path)
    assert [r.epoch for r in history.epochs] == [0, 1, 2]
    rows = (tmp_path / "history.tsv").read_text().splitlines()
    assert len(rows) == 4 and rows[0].startswith("epoch\t")
    model, manifest = load_checkpoint(tmp_path)
    assert manifest["train_config"]["optimizer_name"] == "adam"
    assert manifest["train_dataset"]["hash"] == train.content_hash()
    assert manifest["validation_dataset"]["hash"] == val.content_hash()
    assert manifest["best_epoch"] == history.best_epoch
    best = max(r.val_accuracy for r in history.epochs)
    assert manifest["best_validation_accuracy"] == best
    assert all(torch.equal(state[k], v) for k, v in model.state_dict().items())


def test_fit_is_reproducible(small_ds):
    runs = []
    for _ in range(2):
        _, h = fit(build_model(small_config("F", seed=2)), small_ds, None,
                   preset("F", name="smoke", epochs=2, seed=4))
        runs.append([(r.train_loss, r.val_loss, r.val_accuracy) for r in h.epochs])
    assert runs[0] == runs[1]


def test_divergence_keeps_history(small_ds):
    model = build_model(small_config("F"))

    calls = {"n": 0}
    original = model.regularization

    def blow_up():
        calls["n"] += 1
        return original() + (float("nan") if calls["n"] > 3 else 0.0)

    model.regularization = blow_up
    with pytest.raises(TrainingDiverged) as info:
        fit(model, small_ds, None, preset("F", name="smoke", epochs=5, batch_size=2))
    assert len(info.value.history) == 1


def test_leaking_validation_refused(small_records):
    train = prepare(small_records[:4], "train")
    val = prepare(small_records[3:5], "val")
    with pytest.raises(LeakageError):
        fit(build_model(small_config("F")), train, val, preset("F", epochs=1))
    _, h = fit(build_model(small_config("F")), train, val, preset("F", epochs=1), allow_leakage=True)
    assert len(h) == 1


def test_predict_probs_shape(small_ds):
    probs = predict_probs(build_model(small_config("E")), small_ds.subset([0]))
    assert probs.shape == (1, 700, 9) and probs.dtype == np.float32
