"""Minimal module system and shared layer pieces."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor

NORM_EPS = 1e-5


class Module:
    """Parameter container; parameters are discovered from attributes in definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = prefix + key
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def standardize(x: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Zero-mean, unit-variance along the last (length) axis.

    Constant rows come out as zeros: the centred values vanish and ``eps``
    keeps the denominator away from zero.
    """
    mu = T.expand(T.reduce("mean", x, -1), x.shape)
    centered = x - mu
    var = T.reduce("mean", T.square(centered), -1)
    std = T.sqrt(var + eps)
    return centered / T.expand(std, x.shape)


def channel_affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Per-channel ``weight * x + bias`` for ``x`` shaped (..., C, L)."""
    c = x.shape[-2]
    lead = (1,) * (x.ndim - 2)
    w = T.expand(T.reshape(weight, lead + (c, 1)), x.shape)
    b = T.expand(T.reshape(bias, lead + (c, 1)), x.shape)
    return x * w + b


class ChannelNorm(Module):
    """Per-channel standardization over the length axis with a learned affine."""

    def __init__(self, channels: int):
        self.scale = param(np.ones(channels))
        self.bias = param(np.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        return channel_affine(standardize(x), self.scale, self.bias)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(in_features)
        self.weight = param(rng.uniform(-bound, bound, size=(in_features, out_features)))
        self.bias = param(np.zeros(out_features))

    def forward(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        lead = (1,) * (y.ndim - 1)
        return y + T.expand(T.reshape(self.bias, lead + (self.bias.size,)), y.shape)
