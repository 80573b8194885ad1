"""Flat ``key = value`` run configuration shared by all commands.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Booleans accept true/false/yes/no/1/0. Every key must name a field of
:class:`RunConfig`; anything else is rejected with its line number.

The ``suite`` key lists synthetic trajectories as ``shape:speed:radius``
items, for example ``suite = line:1.0:5, circle:1.2:6``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .backbone import BackboneConfig
from .data import SHAPES, SynthSpec
from .errors import ContractError, ParseError
from .model import ModelConfig

DEFAULT_SUITE = (
    "line:0.9:5, line:1.0:5, line:1.1:5, circle:1.0:4, circle:1.2:6, circle:0.8:5, "
    "lissajous:1.0:5, lissajous:1.2:6"
)


@dataclass(frozen=True)
class RunConfig:
    # model
    stage_channels: tuple[int, ...] = (64, 128, 256, 512)
    stage_strides: tuple[int, ...] = (1, 2, 2, 2)
    degree: int = 3
    groups: int = 1
    kernel_size: int = 3
    taylor_order: int = 2
    sigma: float = 1.0
    normalize_output: bool = True
    eksa_enabled: bool = True
    head_widths: tuple[int, ...] = (512, 128, 2)
    window_size: int = 200
    # optimizer and loop
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    epochs: int = 50
    patience: int = 10
    seed: int = 0
    # synthetic data
    suite: str = DEFAULT_SUITE
    duration: float = 120.0
    sample_rate_hz: float = 200.0
    gyro_noise: float = 1e-4
    accel_noise: float = 1e-3
    gyro_bias: tuple[float, ...] = (0.0, 0.0, 0.0)
    accel_bias: tuple[float, ...] = (0.0, 0.0, 0.0)
    include_gravity: bool = True
    # pipeline and evaluation
    split: tuple[float, ...] = (0.7, 0.1, 0.2)
    train_stride: int = 10
    val_stride: int = 50
    eval_stride: int = 10
    eval_split: str = "test"
    allow_gravity: bool = False
    remove_gravity: bool = False
    rte_interval_s: float = 60.0
    # benchmark
    bench_n_grid: tuple[int, ...] = (256, 512, 1024, 2048)
    bench_seq_len: int = 32
    bench_repetitions: int = 21
    bench_tokens_per_call: int = 8192
    # gradient check
    gradcheck_coords: int = 32
    gradcheck_h: float = 1e-5
    gradcheck_tol: float = 1e-4

    def __post_init__(self):
        if self.eval_split not in ("train", "val", "test", "all"):
            raise ContractError(f"eval_split must be train, val, test or all, got {self.eval_split!r}")
        if len(self.split) != 3:
            raise ContractError("split needs three fractions (train, val, test)")
        if len(self.gyro_bias) != 3 or len(self.accel_bias) != 3:
            raise ContractError("biases need three components")
        self.synth_specs()
        self.model_config()

    def model_config(self) -> ModelConfig:
        backbone = BackboneConfig(self.stage_channels, self.stage_strides, self.degree, self.groups,
                                  self.kernel_size)
        return ModelConfig(
            backbone=backbone,
            taylor_order=self.taylor_order,
            sigma=self.sigma,
            normalize_output=self.normalize_output,
            eksa_enabled=self.eksa_enabled,
            head_widths=self.head_widths,
            window_size=self.window_size,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            batch_size=self.batch_size,
            epochs=self.epochs,
            patience=self.patience,
            seed=self.seed,
        )

    def synth_specs(self) -> list[SynthSpec]:
        specs = []
        for i, item in enumerate(x.strip() for x in self.suite.split(",") if x.strip()):
            parts = item.split(":")
            if len(parts) != 3 or parts[0] not in SHAPES:
                raise ContractError(f"suite item {item!r} is not shape:speed:radius with shape in {SHAPES}")
            try:
                speed, radius = float(parts[1]), float(parts[2])
            except ValueError:
                raise ContractError(f"suite item {item!r}: speed and radius must be numbers") from None
            specs.append(SynthSpec(
                shape=parts[0], speed=speed, radius=radius, duration=self.duration,
                sample_rate_hz=self.sample_rate_hz, gyro_noise=self.gyro_noise,
                accel_noise=self.accel_noise, gyro_bias=tuple(self.gyro_bias),
                accel_bias=tuple(self.accel_bias), include_gravity=self.include_gravity,
                seed=self.seed * 100 + i,
            ))
        if not specs:
            raise ContractError("suite is empty")
        return specs

    def items(self) -> list[tuple[str, str]]:
        return [(f.name, format_value(getattr(self, f.name))) for f in fields(self)]

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(format_value(v) for v in value)
    return str(value)


_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def _coerce(text: str, default):
    if isinstance(default, bool):
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        return tuple(kind(v.strip()) for v in text.split(",") if v.strip())
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_config(text: str, path=None) -> dict:
    """Parse config text into ``{field: value}`` using the field defaults for typing."""
    defaults = {f.name: f.default for f in fields(RunConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ParseError(f"unknown key {key!r}", path, lineno)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", path, lineno)
        try:
            out[key] = _coerce(value, defaults[key])
        except ValueError as e:
            raise ParseError(f"bad value for {key}: {e}", path, lineno) from None
    return out


def load_config(path=None, **overrides) -> RunConfig:
    """Defaults, then the file (if any), then non-None ``overrides``."""
    values = {}
    if path is not None:
        values = parse_config(Path(path).read_text(encoding="utf-8"), path)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.items())
