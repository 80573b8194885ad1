"""Grouped ChebyKAN convolution unit.

Each input value is squashed with ``tanh`` and mapped to an angle with
``arccos``; the degree-``n`` feature is ``cos(n * angle)``, which equals the
Chebyshev polynomial ``T_n(tanh(x))``. The expanded channels are laid out
source-channel-major, degree-minor::

    [T_0(x_0), T_1(x_0), ..., T_d(x_0), T_0(x_1), ..., T_d(x_{c-1})]

so the expansion of group ``g`` is one contiguous channel block, and a grouped
convolution over the expanded tensor applies independent weights per group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .nn import Module, channel_affine, param, standardize
from .tensor import Tensor


@dataclass(frozen=True)
class ChebyKANConfig:
    in_channels: int
    out_channels: int
    groups: int = 1
    degree: int = 3
    kernel_size: int = 3
    stride: int = 1
    padding: int = 1
    normalize: bool = True

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.groups, self.kernel_size, self.stride) < 1:
            raise ContractError(f"non-positive size in {self}")
        if self.degree < 0 or self.padding < 0:
            raise ContractError(f"degree and padding must be >= 0: {self}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ContractError(
                f"channels {self.in_channels}->{self.out_channels} not divisible by groups={self.groups}"
            )

    @property
    def weight_shape(self) -> tuple[int, int, int]:
        per_group = self.in_channels * (self.degree + 1) // self.groups
        return (self.out_channels, per_group, self.kernel_size)

    def output_length(self, length: int) -> int:
        return (length + 2 * self.padding - self.kernel_size) // self.stride + 1


def cheb_angle(x: Tensor) -> Tensor:
    """``arccos(clamp(tanh(x)))``; values land in (0, pi)."""
    t = T.clamp(T.tanh(x), -1.0 + T.ARCCOS_EPS, 1.0 - T.ARCCOS_EPS)
    return T.arccos(t)


def cheb_features(x: Tensor, degree: int) -> Tensor:
    """Expand (..., c, L) into (..., c * (degree + 1), L) Chebyshev features."""
    if degree < 0:
        raise ContractError("degree must be >= 0")
    stacked = T.cos_multiples(cheb_angle(x), degree, axis=-2)
    return T.reshape(stacked, x.shape[:-2] + (x.shape[-2] * (degree + 1), x.shape[-1]))


class ChebyKANLayer(Module):
    """Chebyshev expansion, grouped convolution, then per-channel normalization."""

    def __init__(self, config: ChebyKANConfig, rng: np.random.Generator | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.config = config
        out_c, per_group, k = config.weight_shape
        std = 1.0 / np.sqrt(per_group * k)
        self.conv_weight = param(rng.normal(0.0, std, size=(out_c, per_group, k)))
        self.norm_scale = param(np.ones(out_c))
        self.norm_bias = param(np.zeros(out_c))

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.config
        if x.ndim not in (2, 3) or x.shape[-2] != cfg.in_channels:
            raise ShapeError(f"ChebyKAN expects {cfg.in_channels} input channels, got shape {x.shape}")
        feats = cheb_features(x, cfg.degree)
        y = T.conv1d(feats, self.conv_weight, stride=cfg.stride, padding=cfg.padding, groups=cfg.groups)
        if cfg.normalize:
            y = channel_affine(standardize(y), self.norm_scale, self.norm_bias)
        return y


def chebykan_forward(layer: ChebyKANLayer, x: Tensor) -> Tensor:
    return layer.forward(x)
