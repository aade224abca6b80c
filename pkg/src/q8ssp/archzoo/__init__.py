"""The six Q8 architectures, a builder registry, batching and weight archives."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError, FormatError
from ..io import atomic_write_bytes, read_json, write_json
from .attention_lstm import AttentionLSTM, build_attention_lstm
from .bigru_windowmix import BiGRUWindowMix, build_bigru_windowmix
from .config import MODEL_NAMES, DEFAULT_STRUCTURE, ArchConfig, small_config
from .conv_bilstm import ConvBiLSTM, build_conv_bilstm
from .gru_conv import GRUConv, build_gru_conv
from .layers import SSPModel, dot_attention
from .tcn import TCNModel, TCNStack, build_tcn
from .unet import UNet1D, build_unet

BUILDERS = {
    "A": build_attention_lstm,
    "B": build_unet,
    "C": build_gru_conv,
    "D": build_tcn,
    "E": build_bigru_windowmix,
    "F": build_conv_bilstm,
}


def build_model(cfg: ArchConfig) -> SSPModel:
    return BUILDERS[cfg.model_id](cfg)


def make_batch(ds, idx=None, dtype=torch.float32, device="cpu") -> dict:
    """Tensor batch (every key any model needs) from an EncodedDataset."""
    if idx is None:
        idx = np.arange(len(ds))
    idx = np.asarray(idx, dtype=np.int64)
    feats = torch.as_tensor(ds.features[idx], dtype=dtype, device=device)
    mask = torch.as_tensor(ds.mask[idx] != 0, device=device)
    return {
        "features": feats,
        "residues": feats[..., :22].argmax(dim=-1),
        "bigrams": torch.as_tensor(ds.bigrams[idx], dtype=torch.long, device=device),
        "window": torch.as_tensor(ds.window[idx], dtype=dtype, device=device),
        "mask": mask,
        "lengths": mask.sum(dim=1).to(torch.long),
    }


def layer_list(model: SSPModel) -> list[dict]:
    """Backend-neutral structural fingerprint: every named tensor with shape."""
    out = [{"name": k, "shape": list(v.shape)} for k, v in model.state_dict().items()]
    return out


def save_checkpoint(model: SSPModel, directory, extra: dict | None = None) -> Path:
    """Write ``weights.npz`` (named tensors) and ``manifest.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write_bytes(directory / "weights.npz", buf.getvalue())
    manifest = {
        "model_id": model.model_id,
        "model_name": MODEL_NAMES[model.model_id],
        "arch_config": model.cfg.to_dict(),
        "departures": model.cfg.departures(),
        "seed": model.cfg.seed,
        "layers": layer_list(model),
    }
    manifest.update(extra or {})
    write_json(directory / "manifest.json", manifest)
    return directory


def load_checkpoint(directory) -> tuple[SSPModel, dict]:
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    cfg = ArchConfig.from_dict(manifest["arch_config"])
    if cfg.model_id != manifest["model_id"]:
        raise FormatError(f"{directory}: manifest model_id does not match its arch_config")
    model = build_model(cfg)
    if layer_list(model) != manifest["layers"]:
        raise FormatError(f"{directory}: layer list differs from the architecture built from its config")
    with np.load(directory / "weights.npz", allow_pickle=False) as z:
        state = {k: torch.from_numpy(z[k].copy()) for k in z.files}
    model.load_state_dict(state)
    model.eval()
    return model, manifest


def parse_override(text: str):
    """``key=value`` with the value parsed as YAML (ints, floats, lists)."""
    import yaml

    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


__all__ = [
    "ArchConfig", "MODEL_NAMES", "DEFAULT_STRUCTURE", "small_config", "SSPModel", "BUILDERS",
    "build_model", "build_attention_lstm", "build_unet", "build_gru_conv", "build_tcn",
    "build_bigru_windowmix", "build_conv_bilstm", "make_batch", "save_checkpoint",
    "load_checkpoint", "layer_list", "dot_attention", "TCNStack", "AttentionLSTM", "UNet1D",
    "GRUConv", "TCNModel", "BiGRUWindowMix", "ConvBiLSTM", "parse_override",
]
