"""Optimizer, training loop and checkpoint files.

Checkpoint layout (all integers little-endian)::

    b"CKAN"                      magic
    u32  format_version          currently 1
    u32  n, then n bytes         config as UTF-8 JSON (sorted keys)
    u32  count                   number of parameter tensors
    count x:
        u32 n, n bytes           parameter name, UTF-8
        u32 ndim, ndim x u64     shape
    u64  total                   number of float64 values that follow
    total x f64 (little-endian)  parameters concatenated in manifest order
"""

from __future__ import annotations

import csv
import json
import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import WindowBatch
from .errors import ContractError, FormatError, NumericalError
from .model import ModelConfig, ResKACNNet, mse_loss
from .tensor import Tensor

log = logging.getLogger(__name__)

MAGIC = b"CKAN"
FORMAT_VERSION = 1


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            tmp = np.empty_like(g)
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=tmp)
            m += tmp
            v *= self.beta2
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - self.beta2
            v += tmp
            if self.lr == 0.0:
                continue
            np.sqrt(v, out=tmp)
            tmp *= 1.0 / np.sqrt(c2)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= self.lr / c1
            p.data -= tmp

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    manifest: list[tuple[str, tuple[int, ...]]]
    payload: np.ndarray
    config: dict
    format_version: int = FORMAT_VERSION

    def tensors(self) -> dict[str, np.ndarray]:
        out, offset = {}, 0
        for name, shape in self.manifest:
            n = int(np.prod(shape, dtype=np.int64))
            out[name] = self.payload[offset : offset + n].reshape(shape)
            offset += n
        return out

    def to_bytes(self) -> bytes:
        cfg = json.dumps(self.config, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts = [MAGIC, struct.pack("<I", self.format_version), struct.pack("<I", len(cfg)), cfg,
                 struct.pack("<I", len(self.manifest))]
        for name, shape in self.manifest:
            raw = name.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)) + raw)
            parts.append(struct.pack("<I", len(shape)) + struct.pack(f"<{len(shape)}Q", *shape))
        payload = np.ascontiguousarray(self.payload, dtype="<f8")
        parts.append(struct.pack("<Q", payload.size))
        parts.append(payload.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes) -> Checkpoint:
        pos = 0

        def take(n):
            nonlocal pos
            if pos + n > len(buf):
                raise FormatError("checkpoint truncated")
            chunk = buf[pos : pos + n]
            pos += n
            return chunk

        if take(4) != MAGIC:
            raise FormatError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", take(4))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint format_version {version}")
        (n,) = struct.unpack("<I", take(4))
        try:
            config = json.loads(take(n).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"corrupt config block: {e}") from None
        (count,) = struct.unpack("<I", take(4))
        manifest = []
        for _ in range(count):
            (n,) = struct.unpack("<I", take(4))
            name = take(n).decode("utf-8")
            (ndim,) = struct.unpack("<I", take(4))
            shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
            manifest.append((name, tuple(int(s) for s in shape)))
        (total,) = struct.unpack("<Q", take(8))
        expected = sum(int(np.prod(s, dtype=np.int64)) for _, s in manifest)
        if total != expected:
            raise FormatError(f"payload declares {total} values, manifest needs {expected}")
        if len(buf) - pos != 8 * total:
            raise FormatError(f"payload holds {(len(buf) - pos) / 8:g} values, expected {total}")
        payload = np.frombuffer(buf, dtype="<f8", count=total, offset=pos).astype(np.float64)
        return cls(manifest, payload, config, version)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(ckpt.to_bytes())


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint.from_bytes(Path(path).read_bytes())


def checkpoint_from_model(model: ResKACNNet) -> Checkpoint:
    named = list(model.named_parameters())
    manifest = [(name, tuple(p.shape)) for name, p in named]
    payload = np.concatenate([p.data.reshape(-1) for _, p in named]) if named else np.zeros(0)
    return Checkpoint(manifest, payload, model.config.to_dict())


def model_from_checkpoint(ckpt: Checkpoint) -> ResKACNNet:
    model = ResKACNNet(ModelConfig.from_dict(ckpt.config))
    load_parameters(model, ckpt)
    return model


def load_parameters(model: ResKACNNet, ckpt: Checkpoint) -> None:
    stored = ckpt.tensors()
    named = dict(model.named_parameters())
    if list(named) != [name for name, _ in ckpt.manifest]:
        raise FormatError("checkpoint parameters do not match the model layout")
    for name, p in named.items():
        if stored[name].shape != p.shape:
            raise FormatError(f"shape mismatch for {name}: {stored[name].shape} vs {p.shape}")
        p.data[...] = stored[name]


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    wall_s: float


@dataclass
class TrainResult:
    model: ResKACNNet
    checkpoint: Checkpoint
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0


def evaluate_mse(model: ResKACNNet, data: WindowBatch, batch_size: int = 64) -> float:
    pred = model.predict(data.inputs, batch_size)
    return float(np.mean((pred - data.targets) ** 2))


def _first_bad_parameter(model: ResKACNNet) -> str:
    for name, p in model.named_parameters():
        if not np.all(np.isfinite(p.data)):
            return f"{name} (value)"
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            return f"{name} (gradient)"
    return "<none: loss itself is non-finite>"


def train_step(model: ResKACNNet, opt: Adam, inputs: np.ndarray, targets: np.ndarray) -> float:
    opt.zero_grad()
    loss = mse_loss(model(Tensor(inputs)), Tensor(targets))
    value = loss.item()
    if not np.isfinite(value):
        raise NumericalError(f"non-finite loss; first bad parameter: {_first_bad_parameter(model)}")
    loss.backward()
    for name, p in model.named_parameters():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NumericalError(f"non-finite gradient in parameter {name}")
    opt.step()
    return value


def train(
    config: ModelConfig,
    train_data: WindowBatch,
    val_data: WindowBatch,
    log_path=None,
    model: ResKACNNet | None = None,
) -> TrainResult:
    """Minimise MSE with Adam; keep the parameters of the best validation epoch.

    Stops early after ``config.patience`` epochs without validation
    improvement. Deterministic for a fixed ``config.seed``.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise ContractError("training and validation data must be non-empty")
    model = ResKACNNet(config) if model is None else model
    opt = Adam(model.parameters(), config.learning_rate, config.beta1, config.beta2, config.epsilon)
    rng = np.random.default_rng(config.seed + 1)
    history: list[EpochRecord] = []
    best_val, best_epoch, best_params = np.inf, 0, [p.data.copy() for p in model.parameters()]
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "val_mse", "wall_s"])
    t0 = time.perf_counter()
    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(train_data))
            losses, weights = [], []
            for i in range(0, len(order), config.batch_size):
                idx = np.sort(order[i : i + config.batch_size])
                losses.append(train_step(model, opt, train_data.inputs[idx], train_data.targets[idx]))
                weights.append(len(idx))
            train_mse = float(np.average(losses, weights=weights))
            val_mse = evaluate_mse(model, val_data)
            rec = EpochRecord(epoch, train_mse, val_mse, time.perf_counter() - t0)
            history.append(rec)
            log.info("epoch %d train_mse=%.6f val_mse=%.6f wall=%.1fs", epoch, train_mse, val_mse, rec.wall_s)
            if writer is not None:
                writer.writerow([epoch, f"{train_mse:.10g}", f"{val_mse:.10g}", f"{rec.wall_s:.3f}"])
                fh.flush()
            if val_mse < best_val:
                best_val, best_epoch = val_mse, epoch
                best_params = [p.data.copy() for p in model.parameters()]
            elif epoch - best_epoch >= config.patience:
                log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                break
    finally:
        if fh is not None:
            fh.close()
    for p, best in zip(model.parameters(), best_params):
        p.data[...] = best
    model.zero_grad()
    return TrainResult(model, checkpoint_from_model(model), history, best_epoch)
