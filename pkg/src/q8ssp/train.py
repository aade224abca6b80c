"""Masked cross-entropy training with per-epoch inverse-time learning-rate decay."""

from __future__ import annotations

import copy
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .archzoo import make_batch, save_checkpoint
from .data import LABEL_NOSEQ, cross_split_pairs
from .ensemble_eval import ensemble_argmax, q8_accuracy
from .errors import ConfigError, EmptyMaskError, LeakageError, Q8Error, TrainingDiverged

log = logging.getLogger(__name__)

OPTIMIZERS = ("rmsprop", "nadam", "adam")


@dataclass
class TrainConfig:
    optimizer_name: str
    learning_rate: float
    decay: float
    epochs: int
    batch_size: int
    seed: int = 0
    checkpoint_policy: str = "best-validation-accuracy"
    deterministic: bool = False

    def __post_init__(self):
        self.optimizer_name = self.optimizer_name.lower()
        if self.optimizer_name not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer_name!r}")
        if self.learning_rate <= 0 or self.decay < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError(f"invalid training settings: {self}")
        if self.checkpoint_policy != "best-validation-accuracy":
            raise ConfigError(f"unsupported checkpoint policy {self.checkpoint_policy!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# Per-model optimizer settings: optimizer, learning rate, decay, epochs, batch.
PUBLISHED_PRESETS = {
    "B": ("rmsprop", 0.002, 0.5, 80, 128),
    "C": ("nadam", 0.002, 0.004, 75, 128),
    "D": ("adam", 0.001, 0.0001, 5, 16),
    "E": ("nadam", 0.002, 0.004, 10, 64),
    "A": ("rmsprop", 0.003, 0.5, 20, 64),
    "F": ("rmsprop", 0.001, 0.0, 30, 128),
}

# Overfit smoke: small batches and a hot constant rate so 40 epochs suffice.
SMOKE = ("adam", 0.01, 0.0, 40, 2)


def preset(model_id: str, name: str = "published", seed: int = 0, **overrides) -> TrainConfig:
    if name == "published":
        opt, lr, decay, epochs, batch = PUBLISHED_PRESETS[model_id.upper()]
    elif name == "smoke":
        opt, lr, decay, epochs, batch = SMOKE
    else:
        raise ConfigError(f"unknown preset {name!r}; choose 'published' or 'smoke'")
    kw = dict(optimizer_name=opt, learning_rate=lr, decay=decay, epochs=epochs, batch_size=batch, seed=seed)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**kw)


def decayed_lr(step: int, cfg: TrainConfig) -> float:
    """Learning rate for epoch ``step``: ``lr / (1 + decay * step)``."""
    if step < 0:
        raise ConfigError("step must be >= 0")
    return cfg.learning_rate / (1.0 + cfg.decay * step)


def make_optimizer(params, cfg: TrainConfig):
    if cfg.optimizer_name == "rmsprop":
        return torch.optim.RMSprop(params, lr=cfg.learning_rate, alpha=0.9, eps=1e-7)
    if cfg.optimizer_name == "nadam":
        return torch.optim.NAdam(params, lr=cfg.learning_rate, eps=1e-7)
    return torch.optim.Adam(params, lr=cfg.learning_rate, eps=1e-7)


def _as_tensor(x, dtype=None, device=None):
    if isinstance(x, torch.Tensor):
        return x if device is None else x.to(device)
    return torch.as_tensor(np.asarray(x), dtype=dtype, device=device)


def masked_xent_from_log(log_probs, labels, mask):
    """Mean of ``-log_probs[true]`` over masked positions. Padding never touches the sum."""
    labels = _as_tensor(labels, torch.long, log_probs.device)
    mask = _as_tensor(mask, device=log_probs.device).bool()
    if log_probs.shape[:-1] != labels.shape or labels.shape != mask.shape:
        raise ConfigError(f"shape mismatch: {tuple(log_probs.shape)} vs {tuple(labels.shape)} vs {tuple(mask.shape)}")
    n = mask.sum()
    if n == 0:
        raise EmptyMaskError("masked cross-entropy over an all-zero mask is undefined")
    safe = torch.where(mask, labels, torch.zeros_like(labels))
    picked = log_probs.gather(-1, safe.unsqueeze(-1)).squeeze(-1)
    picked = torch.where(mask, picked, torch.zeros_like(picked))
    return -picked.sum() / n


def masked_xent(probs, labels, mask):
    """Masked mean cross-entropy of probability rows against integer labels."""
    probs = _as_tensor(probs, torch.float64)
    mask_t = _as_tensor(mask).bool()
    # log(0) at padding would poison the sum through 0 * -inf; substitute ones there
    safe = torch.where(mask_t.unsqueeze(-1), probs, torch.ones_like(probs))
    return masked_xent_from_log(torch.log(safe), labels, mask_t)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    learning_rate: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None

    def __len__(self):
        return len(self.epochs)

    def append(self, rec: EpochRecord):
        if self.epochs and rec.epoch != self.epochs[-1].epoch + 1:
            raise ValueError("epoch numbering must be consecutive")
        self.epochs.append(rec)

    HEADER = "epoch\ttrain_loss\tval_loss\tval_accuracy\tlearning_rate\tseconds"

    @staticmethod
    def format_row(r: EpochRecord) -> str:
        return (f"{r.epoch}\t{r.train_loss:.6f}\t{r.val_loss:.6f}\t{r.val_accuracy:.6f}"
                f"\t{r.learning_rate:.6g}\t{r.seconds:.3f}")

    def to_tsv(self) -> str:
        return "\n".join([self.HEADER] + [self.format_row(r) for r in self.epochs]) + "\n"


def model_device(model) -> torch.device:
    return next(model.parameters()).device


def pick_device(device=None) -> torch.device:
    if device is not None:
        return torch.device(device)
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


def predict_probs(model, ds, batch_size: int = 32, dtype=torch.float32) -> np.ndarray:
    """Inference-mode probabilities for a whole EncodedDataset, (N, 700, 9) float32."""
    model.eval()
    device = model_device(model)
    out = []
    with torch.no_grad():
        for start in range(0, len(ds), batch_size):
            batch = make_batch(ds, np.arange(start, min(start + batch_size, len(ds))), dtype=dtype, device=device)
            out.append(model(batch).float().cpu().numpy())
    if not out:
        return np.zeros((0,) + ds.mask.shape[1:] + (LABEL_NOSEQ + 1,), dtype=np.float32)
    return np.concatenate(out)


def evaluate_dataset(model, ds, batch_size: int = 32) -> tuple[float, float]:
    """(masked cross-entropy, Q8 accuracy) in inference mode."""
    model.eval()
    device = model_device(model)
    total, count, preds = 0.0, 0, []
    with torch.no_grad():
        for start in range(0, len(ds), batch_size):
            idx = np.arange(start, min(start + batch_size, len(ds)))
            batch = make_batch(ds, idx, device=device)
            logp = model.log_probs(batch)
            m = batch["mask"]
            total += float(masked_xent_from_log(logp, ds.labels[idx], m)) * int(m.sum())
            count += int(m.sum())
            preds.append(ensemble_argmax([logp.exp().cpu().numpy()], ds.mask[idx]))
    pred = np.concatenate(preds)
    return total / count, q8_accuracy(pred, ds.labels, ds.mask)


def hygiene_check(train_ds, val_ds):
    if val_ds is None:
        return None
    return cross_split_pairs([
        ("train", list(range(len(train_ds))), train_ds.sequences),
        ("validation", list(range(len(val_ds))), val_ds.sequences),
    ])


def set_deterministic(flag: bool):
    if not flag:
        return
    # cuBLAS refuses deterministic mode without a fixed workspace
    os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
    try:
        torch.use_deterministic_algorithms(True)
    except Exception as exc:  # pragma: no cover - backend specific
        raise Q8Error(f"backend cannot honour --deterministic: {exc}") from exc


def fit(model, train_ds, val_ds, cfg: TrainConfig, out_dir=None, allow_leakage: bool = False,
        manifest_extra: dict | None = None, device=None):
    """Train ``model`` and return ``(best_state_dict, history)``.

    The returned weights (also loaded back into ``model``) are those of the
    epoch with the best validation Q8 accuracy. Without a validation set the
    training set is scored instead. With ``out_dir`` the history is appended
    to ``history.tsv`` every epoch and the best checkpoint is written there.
    ``device`` defaults to CUDA when available; the returned state is on it.
    """
    report = hygiene_check(train_ds, val_ds)
    if report:
        if not allow_leakage:
            raise LeakageError(f"train/validation share {len(report)} sequence pair(s)", report)
        log.warning("training despite %d leaking train/validation pair(s)", len(report))
    set_deterministic(cfg.deterministic)
    score_ds = val_ds if val_ds is not None else train_ds

    torch.manual_seed(cfg.seed)
    device = pick_device(device)
    model.to(device)
    optimizer = make_optimizer(model.parameters(), cfg)
    history = TrainHistory()
    best_state = copy.deepcopy(model.state_dict())
    best_acc = -1.0

    hist_file = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        hist_file = open(out_dir / "history.tsv", "w", encoding="utf-8")
        hist_file.write(TrainHistory.HEADER + "\n")
        hist_file.flush()
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            lr = decayed_lr(epoch, cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_ds))
            model.train()
            loss_sum, weight = 0.0, 0
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                batch = make_batch(train_ds, idx, device=device)
                loss = masked_xent_from_log(model.log_probs(batch), train_ds.labels[idx], batch["mask"])
                loss = loss + model.regularization()
                if not torch.isfinite(loss):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting {start}", history)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                loss_sum += float(loss.detach()) * len(idx)
                weight += len(idx)
            val_loss, val_acc = evaluate_dataset(model, score_ds)
            if not math.isfinite(val_loss):
                raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}", history)
            rec = EpochRecord(epoch, loss_sum / max(weight, 1), val_loss, val_acc, lr, time.perf_counter() - t0)
            history.append(rec)
            if hist_file:
                hist_file.write(TrainHistory.format_row(rec) + "\n")
                hist_file.flush()
            log.info("epoch %d loss %.4f val_loss %.4f val_acc %.4f", epoch, rec.train_loss, val_loss, val_acc)
            if val_acc > best_acc:
                best_acc, history.best_epoch = val_acc, epoch
                best_state = copy.deepcopy(model.state_dict())
    finally:
        if hist_file:
            hist_file.close()

    model.load_state_dict(best_state)
    if out_dir is not None:
        extra = {
            "train_config": cfg.to_dict(),
            "train_dataset": {"name": train_ds.name, "records": len(train_ds), "hash": train_ds.content_hash()},
            "validation_dataset": None if val_ds is None else
            {"name": val_ds.name, "records": len(val_ds), "hash": val_ds.content_hash()},
            "best_epoch": history.best_epoch,
            "best_validation_accuracy": None if best_acc < 0 else best_acc,
            "epochs_completed": len(history),
        }
        extra.update(manifest_extra or {})
        save_checkpoint(model, out_dir, extra)
    return best_state, history
