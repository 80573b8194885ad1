"""Full velocity-regression network and its configuration record."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .backbone import BackboneConfig, ResChebyKAN
from .eksa import EksaConfig, EksaLayer
from .errors import ContractError, ShapeError
from .nn import Linear, Module
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    taylor_order: int = 2
    sigma: float = 1.0
    normalize_output: bool = True
    eksa_enabled: bool = True
    head_widths: tuple[int, ...] = (512, 128, 2)
    window_size: int = 200
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    epochs: int = 50
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "head_widths", tuple(int(w) for w in self.head_widths))
        if len(self.head_widths) != 3 or self.head_widths[-1] != 2 or min(self.head_widths) < 1:
            raise ContractError(f"head_widths must be 3 positive ints ending at 2: {self.head_widths}")
        if self.window_size < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ContractError("window_size and batch_size must be positive, epochs >= 0")
        self.backbone.output_shape(self.window_size)

    @property
    def eksa(self) -> EksaConfig:
        n, length = self.backbone.output_shape(self.window_size)
        return EksaConfig(n, length, self.taylor_order, self.sigma, self.normalize_output,
                          self.backbone.kernel_size)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        d = dict(d)
        d["backbone"] = BackboneConfig(**d.get("backbone", {}))
        return cls(**d)


class Head(Module):
    """Three fully connected layers, rectifier between them, linear output."""

    def __init__(self, in_features: int, widths: tuple[int, ...], rng: np.random.Generator):
        dims = (in_features,) + tuple(widths)
        self.layers = [Linear(a, b, rng) for a, b in zip(dims, dims[1:])]

    def forward(self, x: Tensor) -> Tensor:
        return head_forward(self.layers, x)


def head_forward(layers, x: Tensor) -> Tensor:
    """Apply the head to a flat vector (F,) or a batch (B, F)."""
    if x.shape[-1] != layers[0].weight.shape[0]:
        raise ShapeError(f"head expects width {layers[0].weight.shape[0]}, got {x.shape[-1]}")
    vector = x.ndim == 1
    if vector:
        x = T.reshape(x, (1,) + x.shape)
    for i, layer in enumerate(layers):
        x = layer(x)
        if i < len(layers) - 1:
            x = T.relu(x)
    return T.reshape(x, x.shape[1:]) if vector else x


class ResKACNNet(Module):
    """Backbone -> optional kernel attention -> average over length -> FC head."""

    def __init__(self, config: ModelConfig = ModelConfig()):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.backbone = ResChebyKAN(config.backbone, rng)
        self.eksa = EksaLayer(config.eksa, rng) if config.eksa_enabled else None
        self.head = Head(config.backbone.stage_channels[-1], config.head_widths, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim == 2:
            x = T.reshape(x, (1,) + x.shape)
        feats = self.backbone(x)
        if self.eksa is not None:
            feats = self.eksa(feats)
        pooled = T.reshape(T.reduce("mean", feats, -1), feats.shape[:2])
        return self.head(pooled)

    def predict(self, inputs: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Velocity predictions (B, 2) for an array of windows (B, 6, W)."""
        out = []
        with T.no_grad():
            for i in range(0, len(inputs), batch_size):
                out.append(self.forward(Tensor(inputs[i : i + batch_size])).data)
        return np.concatenate(out, axis=0) if out else np.zeros((0, 2))


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over batch and components of the squared error."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: shapes {pred.shape} and {target.shape} differ")
    return T.reduce("mean", T.square(pred - target))
