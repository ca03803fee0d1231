"""The DeepHeteroIoT classifier and its ablation variants.

Architecture (full variant): four decoupled causal-convolution blocks with
kernel sizes 3/5/7/11 extract local features from the raw sequence; a stack
of three bidirectional GRU layers with batch normalization extracts a global
feature vector; both are concatenated (locals first, in kernel order, then
the recurrent features) and classified by a bottleneck MLP head with layer
normalization.

Ablation variants feed only one branch (or the raw flattened sequence, for
``mlp-only``) into the same head design.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import layers as L
from .snapshot import load_weights, save_weights
from .tensor import Tensor, concat

VARIANTS = ("full", "global-only", "local-only", "mlp-only")

CONV_LAYERS_PER_BLOCK = 9
POOL_AFTER = (3, 6)  # 1-based conv layer indices followed by maxpool(2)


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    seq_len: int
    num_classes: int
    kernel_sizes: tuple[int, ...] = (3, 5, 7, 11)
    conv_filters: tuple[int, int] = (128, 64)  # before / after first pool
    gru_dims: tuple[int, int, int] = (128, 64, 64)
    mlp_widths: tuple[int, ...] = (1024, 512, 256, 64)
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.seq_len < 4:
            raise ValueError(f"seq_len must be >= 4, got {self.seq_len}")
        if any(w < 2 for w in self.mlp_widths) or len(self.mlp_widths) < 1:
            raise ValueError(f"invalid mlp widths {self.mlp_widths}")
        if any(d < 1 for d in self.gru_dims) or any(f < 1 for f in self.conv_filters):
            raise ValueError("gru dims and conv filters must be positive")
        if any(k < 1 for k in self.kernel_sizes):
            raise ValueError(f"invalid kernel sizes {self.kernel_sizes}")

    def scaled(self, divisor: int) -> "ModelConfig":
        """Same architecture with every learned width divided by ``divisor``."""
        return replace(
            self,
            conv_filters=tuple(max(1, w // divisor) for w in self.conv_filters),
            gru_dims=tuple(max(1, w // divisor) for w in self.gru_dims),
            mlp_widths=tuple(max(2, w // divisor) for w in self.mlp_widths),
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        raw = json.loads(text)
        for key in ("kernel_sizes", "conv_filters", "gru_dims", "mlp_widths"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


class ConvBlock:
    """Nine causal conv layers of one kernel size, ReLU after each, maxpool(2)
    after layers 3 and 6, global average pool at the end.

    Filter counts: ``filters[0]`` for layers 1-3, ``filters[1]`` for 4-9.
    Output is a ``filters[1]``-wide vector per sample.
    """

    def __init__(self, kernel_size: int, filters: tuple[int, int], rng: np.random.Generator):
        self.kernel_size = kernel_size
        self.filters = filters
        c1, c2 = filters
        plan = [(1, c1), (c1, c1), (c1, c1), (c1, c2)] + [(c2, c2)] * 5
        self.convs = [L.Conv1D(kernel_size, cin, cout, rng) for cin, cout in plan]

    @property
    def output_dim(self) -> int:
        return self.filters[1]

    def forward(self, x: Tensor) -> Tensor:
        for i, conv in enumerate(self.convs, start=1):
            x = conv(x).relu()
            if i in POOL_AFTER:
                x = L.maxpool1d(x, 2)
        return L.global_avg_pool(x)

    __call__ = forward

    def params(self):
        out = []
        for i, conv in enumerate(self.convs, start=1):
            out.extend((f"conv{i}.{k}", v) for k, v in conv.params())
        return out


class MlpHead:
    """Bottleneck dense stack: dense -> ReLU -> layer norm per width, then a
    linear classifier layer."""

    def __init__(self, in_dim: int, widths: tuple[int, ...], num_classes: int,
                 rng: np.random.Generator):
        self.denses = []
        self.norms = []
        prev = in_dim
        for w in widths:
            self.denses.append(L.Dense(prev, w, rng, activation="relu"))
            self.norms.append(L.LayerNorm(w))
            prev = w
        self.out = L.Dense(prev, num_classes, rng, activation=None)

    def forward(self, x: Tensor) -> Tensor:
        for dense, norm in zip(self.denses, self.norms):
            x = norm(dense(x))
        return self.out(x)

    __call__ = forward

    def params(self):
        out = []
        for i, (dense, norm) in enumerate(zip(self.denses, self.norms), start=1):
            out.extend((f"dense{i}.{k}", v) for k, v in dense.params())
            out.extend((f"ln{i}.{k}", v) for k, v in norm.params())
        out.extend((f"out.{k}", v) for k, v in self.out.params())
        return out


class DeepHeteroIoT:
    """Combined local/global sequence classifier (or an ablation of it).

    Inputs are (batch, seq_len) raw sequences; ``forward`` returns logits
    (batch, num_classes). Pass ``train=True`` during optimization so batch
    normalization uses and updates batch statistics.
    """

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        # independent init streams per component so shared parts match across
        # variants built from the same seed
        rng_conv = np.random.default_rng([config.seed, 1])
        rng_gru = np.random.default_rng([config.seed, 2])
        rng_head = np.random.default_rng([config.seed, 3])

        self.conv_blocks = []
        self.gru_layers = []
        self.batch_norms = []
        if config.variant in ("full", "local-only"):
            self.conv_blocks = [
                ConvBlock(k, config.conv_filters, rng_conv) for k in config.kernel_sizes
            ]
        if config.variant in ("full", "global-only"):
            d1, d2, d3 = config.gru_dims
            self.gru_layers = [
                L.BiGRU(1, d1, rng_gru, return_sequences=True),
                L.BiGRU(2 * d1, d2, rng_gru, return_sequences=True),
                L.BiGRU(2 * d2, d3, rng_gru, return_sequences=False),
            ]
            self.batch_norms = [L.BatchNorm(2 * d1), L.BatchNorm(2 * d2), L.BatchNorm(2 * d3)]
        self.head = MlpHead(self.feature_dim(), config.mlp_widths, config.num_classes, rng_head)

    # ---- feature geometry ----

    def local_dim(self) -> int:
        return len(self.config.kernel_sizes) * self.config.conv_filters[1]

    def global_dim(self) -> int:
        return 2 * self.config.gru_dims[2]

    def feature_dim(self) -> int:
        v = self.config.variant
        if v == "full":
            return self.local_dim() + self.global_dim()
        if v == "local-only":
            return self.local_dim()
        if v == "global-only":
            return self.global_dim()
        return self.config.seq_len

    def feature_layout(self) -> dict[str, tuple[int, int]]:
        """Slot ranges of each branch inside the concatenated feature vector."""
        layout = {}
        off = 0
        if self.config.variant in ("full", "local-only"):
            width = self.config.conv_filters[1]
            for k in self.config.kernel_sizes:
                layout[f"conv{k}"] = (off, off + width)
                off += width
        if self.config.variant in ("full", "global-only"):
            layout["gru"] = (off, off + self.global_dim())
            off += self.global_dim()
        if self.config.variant == "mlp-only":
            layout["raw"] = (0, self.config.seq_len)
        return layout

    # ---- forward ----

    def _as_input(self, x) -> Tensor:
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        if t.ndim != 2:
            raise ValueError(f"model input must be (batch, seq_len), got shape {t.shape}")
        if t.shape[1] != self.config.seq_len:
            raise ValueError(
                f"sequence length {t.shape[1]} does not match model seq_len "
                f"{self.config.seq_len}"
            )
        return t

    def features(self, x, train: bool = False) -> Tensor:
        """Concatenated feature vector entering the MLP head."""
        x = self._as_input(x)
        n, t = x.shape
        parts = []
        if self.conv_blocks:
            xc = x.reshape(n, 1, t)
            parts.extend(block(xc) for block in self.conv_blocks)
        if self.gru_layers:
            g = x.reshape(n, t, 1)
            for layer, norm in zip(self.gru_layers, self.batch_norms):
                g = norm(layer(g), train=train)
            parts.append(g)
        if not parts:  # mlp-only
            return x
        return parts[0] if len(parts) == 1 else concat(parts, axis=1)

    def forward(self, x, train: bool = False) -> Tensor:
        return self.head(self.features(x, train=train))

    __call__ = forward

    # ---- parameters and state ----

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        for k, block in zip(self.config.kernel_sizes, self.conv_blocks):
            out.extend((f"conv{k}.{name}", p) for name, p in block.params())
        for i, (layer, norm) in enumerate(zip(self.gru_layers, self.batch_norms), start=1):
            out.extend((f"gru{i}.{name}", p) for name, p in layer.params())
            out.extend((f"bn{i}.{name}", p) for name, p in norm.params())
        out.extend((f"head.{name}", p) for name, p in self.head.params())
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_params()]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def named_state(self) -> dict[str, np.ndarray]:
        """All persistent arrays: trainable parameters plus running statistics."""
        state = {name: p.data for name, p in self.named_params()}
        for i, norm in enumerate(self.batch_norms, start=1):
            state[f"bn{i}.running_mean"] = norm.running_mean
            state[f"bn{i}.running_var"] = norm.running_var
        return state

    def state_snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.named_state().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        current = self.named_state()
        missing = sorted(set(current) - set(state))
        if missing:
            raise ValueError(f"weight state missing entries: {missing[:5]}")
        for name, p in self.named_params():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"weight '{name}': shape {arr.shape} != expected {p.data.shape}"
                )
            p.data = arr.copy()
        for i, norm in enumerate(self.batch_norms, start=1):
            norm.running_mean = np.asarray(state[f"bn{i}.running_mean"], dtype=np.float64).copy()
            norm.running_var = np.asarray(state[f"bn{i}.running_var"], dtype=np.float64).copy()

    def save(self, path) -> None:
        save_weights(path, self.named_state())

    def load(self, path) -> None:
        self.load_state(load_weights(path))


def build_model(config: ModelConfig) -> DeepHeteroIoT:
    return DeepHeteroIoT(config)


def save_model_config(config: ModelConfig, path) -> None:
    Path(path).write_text(config.to_json())


def load_model_config(path) -> ModelConfig:
    return ModelConfig.from_json(Path(path).read_text())
