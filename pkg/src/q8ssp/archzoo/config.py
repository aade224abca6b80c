from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError

MODEL_NAMES = {
    "A": "attention-lstm",
    "B": "unet",
    "C": "gru-conv",
    "D": "tcn",
    "E": "bigru-windowmix",
    "F": "conv-bilstm",
}

# Structural constants. Values stated in the published descriptions are
# marked; everything else is our default and shows up in departures() only
# when overridden.
DEFAULT_STRUCTURE: dict[str, dict] = {
    "A": {
        "bilstm_units": 75,   # stated
        "lstm_units": 150,    # stated
        "num_lstm": 4,        # stated
        "fc_units": 128,
        "dropout": 0.4,
    },
    "B": {
        "depth": 4,
        "base_width": 64,
        "kernel": 3,
        "pool": 2,
        "dropout": 0.4,
    },
    "C": {
        "branch_kernels": (3, 5, 7),  # stated
        "branch_filters": 64,
        "cascade_depth": 3,           # stated
        "cascade_filters": 64,
        "cascade_kernel": 3,
        "gru_units": 256,             # stated
        "recurrent_l2": 1e-4,
        "fc_units": (128, 64),        # stated
        "dropout": 0.5,               # stated
    },
    "D": {
        "branch_units": 128,
        "gru_units": 64,
        "gru_layers": 2,              # stated
        "tcn_blocks": 6,
        "tcn_kernel": 3,
        "tcn_filters": 128,
        "share_embeddings": False,
        "dropout": 0.4,
    },
    "E": {
        "dense_units": 128,           # stated
        "conv_kernels": (3, 7, 11),   # stated
        "conv_filters": 64,           # stated
        "gru_units": 32,              # stated
        "gru_layers": 3,              # stated
        "fc_units": 128,
        "dropout": 0.4,
    },
    "F": {
        "first_kernels": (11, 7),     # stated
        "second_kernels": (5, 3),     # stated
        "conv_filters": 64,           # stated
        "lstm_units": 64,             # 128-wide bidirectional output, stated
        "dropout": 0.4,
    },
}

DEFAULT_EMBEDDING_DIM = 128


def _normalize(value):
    return tuple(value) if isinstance(value, list) else value


@dataclass
class ArchConfig:
    model_id: str
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    seed: int = 0
    structure: dict = field(default_factory=dict)

    def __post_init__(self):
        self.model_id = str(self.model_id).upper()
        if self.model_id not in DEFAULT_STRUCTURE:
            raise ConfigError(f"unknown model id {self.model_id!r}; choose from {sorted(DEFAULT_STRUCTURE)}")
        defaults = DEFAULT_STRUCTURE[self.model_id]
        unknown = set(self.structure) - set(defaults)
        if unknown:
            raise ConfigError(f"model {self.model_id}: unknown structural keys {sorted(unknown)}")
        self.structure = {k: _normalize(self.structure.get(k, v)) for k, v in defaults.items()}

    def __getitem__(self, key):
        return self.structure[key]

    def departures(self) -> dict:
        """Every setting that differs from the default, as ``{key: [default, actual]}``."""
        out = {
            k: [list(d) if isinstance(d, tuple) else d, list(v) if isinstance(v, tuple) else v]
            for k, d in DEFAULT_STRUCTURE[self.model_id].items()
            if (v := self.structure[k]) != d
        }
        if self.embedding_dim != DEFAULT_EMBEDDING_DIM:
            out["embedding_dim"] = [DEFAULT_EMBEDDING_DIM, self.embedding_dim]
        return out

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "embedding_dim": self.embedding_dim,
            "seed": self.seed,
            "structure": {k: list(v) if isinstance(v, tuple) else v for k, v in self.structure.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(d["model_id"], d.get("embedding_dim", DEFAULT_EMBEDDING_DIM), d.get("seed", 0),
                   dict(d.get("structure", {})))


def small_config(model_id: str, seed: int = 0) -> ArchConfig:
    """Reduced widths for CPU tests and smoke runs; same topology as the defaults.

    The U-Net keeps its full width: narrower first stages cannot memorize a
    ten-protein set in the smoke budget.
    """
    small = {
        "A": {"bilstm_units": 16, "lstm_units": 32, "fc_units": 32},
        "B": {"depth": 4, "base_width": 64},
        "C": {"branch_filters": 16, "cascade_filters": 16, "gru_units": 32, "fc_units": (32, 16)},
        "D": {"branch_units": 32, "gru_units": 16, "tcn_filters": 32},
        "E": {"dense_units": 32, "conv_filters": 16, "gru_units": 16, "fc_units": 32},
        "F": {"conv_filters": 16, "lstm_units": 32},
    }[model_id.upper()]
    return ArchConfig(model_id, embedding_dim=16, seed=seed, structure=small)
