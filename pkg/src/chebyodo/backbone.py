"""Residual ChebyKAN backbone: four stages of two residual blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .chebykan import ChebyKANConfig, ChebyKANLayer
from .errors import ContractError, ShapeError
from .nn import ChannelNorm, Module, param
from .tensor import Tensor

IMU_CHANNELS = 6


@dataclass(frozen=True)
class BackboneConfig:
    stage_channels: tuple[int, ...] = (64, 128, 256, 512)
    stage_strides: tuple[int, ...] = (1, 2, 2, 2)
    degree: int = 3
    groups: int = 1
    kernel_size: int = 3

    def __post_init__(self):
        object.__setattr__(self, "stage_channels", tuple(int(c) for c in self.stage_channels))
        object.__setattr__(self, "stage_strides", tuple(int(s) for s in self.stage_strides))
        if len(self.stage_channels) != 4 or len(self.stage_strides) != 4:
            raise ContractError("backbone needs exactly 4 stage channels and 4 strides")
        if min(self.stage_channels) < 1 or min(self.stage_strides) < 1:
            raise ContractError("stage channels and strides must be positive")
        if any(b < a for a, b in zip(self.stage_channels, self.stage_channels[1:])):
            raise ContractError(f"stage channels must be nondecreasing: {self.stage_channels}")
        if self.kernel_size % 2 == 0:
            raise ContractError("kernel_size must be odd so padding keeps lengths aligned")

    @property
    def padding(self) -> int:
        return self.kernel_size // 2

    def output_shape(self, window: int) -> tuple[int, int]:
        """(N, L) the backbone produces for a window of ``window`` samples."""
        length = window
        for s in self.stage_strides:
            length = (length + 2 * self.padding - self.kernel_size) // s + 1
            if length < 1:
                raise ShapeError(f"window {window} too short for strides {self.stage_strides}")
        return self.stage_channels[-1], length


class Shortcut(Module):
    """Strided 1x1 convolution + normalization for blocks that change shape."""

    def __init__(self, in_channels: int, out_channels: int, stride: int, rng: np.random.Generator):
        self.stride = stride
        self.weight = param(rng.normal(0.0, 1.0 / np.sqrt(in_channels), size=(out_channels, in_channels, 1)))
        self.norm = ChannelNorm(out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(T.conv1d(x, self.weight, stride=self.stride))


class ResBlock(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        stride: int,
        degree: int,
        groups: int,
        kernel_size: int,
        rng: np.random.Generator,
    ):
        pad = kernel_size // 2
        self.unit1 = ChebyKANLayer(
            ChebyKANConfig(in_channels, out_channels, groups, degree, kernel_size, stride, pad), rng
        )
        self.unit2 = ChebyKANLayer(
            ChebyKANConfig(out_channels, out_channels, groups, degree, kernel_size, 1, pad), rng
        )
        if in_channels != out_channels or stride != 1:
            self.shortcut = Shortcut(in_channels, out_channels, stride, rng)
        else:
            self.shortcut = None

    def forward(self, x: Tensor) -> Tensor:
        y = self.unit2(self.unit1(x))
        skip = x if self.shortcut is None else self.shortcut(x)
        if skip.shape != y.shape:
            raise ShapeError(f"residual shapes differ: {y.shape} vs {skip.shape}")
        return y + skip


def resblock_forward(block: ResBlock, x: Tensor) -> Tensor:
    return block.forward(x)


class ResChebyKAN(Module):
    """Maps a (B, 6, W) IMU window to (B, N, L) features."""

    def __init__(self, config: BackboneConfig = BackboneConfig(), rng: np.random.Generator | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.config = config
        if IMU_CHANNELS % config.groups:
            raise ContractError(f"groups={config.groups} must divide the {IMU_CHANNELS} IMU channels")
        blocks = []
        c_in = IMU_CHANNELS
        for c_out, stride in zip(config.stage_channels, config.stage_strides):
            blocks.append(ResBlock(c_in, c_out, stride, config.degree, config.groups, config.kernel_size, rng))
            blocks.append(ResBlock(c_out, c_out, 1, config.degree, config.groups, config.kernel_size, rng))
            c_in = c_out
        self.blocks = blocks

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim not in (2, 3) or x.shape[-2] != IMU_CHANNELS:
            raise ContractError(f"backbone expects {IMU_CHANNELS} input channels, got shape {x.shape}")
        for block in self.blocks:
            x = block(x)
        return x


def backbone_forward(backbone: ResChebyKAN, x: Tensor) -> Tensor:
    return backbone.forward(x)
