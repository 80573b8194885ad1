"""IMU sequences: file I/O, frame rotation, gravity removal, windowing, synthesis.

Sequence file layout (UTF-8 text)::

    #imuseq v1 rate=200 gravity_removed=false
    t,gx,gy,gz,ax,ay,az,qw,qx,qy,qz,px,py,pz
    0.0,....

Quaternions are (w, x, y, z), rotating body-frame vectors into the world
frame. Once a sequence has been rotated into the world frame its
orientation column is the identity, so rotating it again is a no-op.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError

GRAVITY = 9.80665
COLUMNS = ("t", "gx", "gy", "gz", "ax", "ay", "az", "qw", "qx", "qy", "qz", "px", "py", "pz")
_HEADER_RE = re.compile(r"^#imuseq v1 rate=(\S+) gravity_removed=(true|false)\s*$")


@dataclass
class ImuSequence:
    sample_rate_hz: float
    t: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray
    orientation: np.ndarray
    gt_pos: np.ndarray
    gravity_removed: bool = False

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        for name in ("gyro", "accel", "gt_pos", "orientation"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    def __len__(self) -> int:
        return len(self.t)

    def validate(self, min_length: int = 2) -> None:
        n = len(self.t)
        if n < min_length:
            raise ContractError(f"sequence has {n} samples, need at least {min_length}")
        for name, width in (("gyro", 3), ("accel", 3), ("orientation", 4), ("gt_pos", 3)):
            arr = getattr(self, name)
            if arr.shape != (n, width):
                raise ContractError(f"{name} has shape {arr.shape}, expected ({n}, {width})")
        check_time(self.t, self.sample_rate_hz)
        check_quaternions(self.orientation)

    def slice(self, start: int, stop: int) -> ImuSequence:
        return dataclasses.replace(
            self,
            t=self.t[start:stop],
            gyro=self.gyro[start:stop],
            accel=self.accel[start:stop],
            orientation=self.orientation[start:stop],
            gt_pos=self.gt_pos[start:stop],
        )


def check_time(t: np.ndarray, rate: float, line_offset: int | None = None, path=None) -> None:
    dt = np.diff(t)
    bad = np.flatnonzero(dt <= 0)
    if bad.size:
        line = None if line_offset is None else line_offset + int(bad[0]) + 1
        raise ParseError(f"timestamps not strictly increasing at sample {bad[0] + 1}", path, line)
    off = np.flatnonzero(np.abs(dt * rate - 1.0) > 0.01)
    if off.size:
        line = None if line_offset is None else line_offset + int(off[0]) + 1
        raise ParseError(f"time step at sample {off[0] + 1} deviates >1% from 1/rate", path, line)


def check_quaternions(q: np.ndarray, line_offset: int | None = None, path=None) -> None:
    bad = np.flatnonzero(np.abs(np.linalg.norm(q, axis=1) - 1.0) > 1e-6)
    if bad.size:
        line = None if line_offset is None else line_offset + int(bad[0])
        raise ParseError(f"quaternion norm off unity at sample {bad[0]}", path, line)


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------


def write_sequence(seq: ImuSequence, path) -> None:
    rows = np.column_stack([seq.t, seq.gyro, seq.accel, seq.orientation, seq.gt_pos])
    header = f"#imuseq v1 rate={seq.sample_rate_hz!r} gravity_removed={str(seq.gravity_removed).lower()}"
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        fh.write(",".join(COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def read_sequence(path) -> ImuSequence:
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", path, 1)
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise ParseError("missing or malformed '#imuseq v1' header", path, 1)
    rate = float(m.group(1))
    gravity_removed = m.group(2) == "true"
    if len(lines) < 2:
        raise ParseError("missing column header", path, 2)
    cols = [c.strip() for c in lines[1].split(",")]
    missing = [c for c in COLUMNS if c not in cols]
    if missing:
        raise ParseError(f"missing column(s): {', '.join(missing)}", path, 2)
    order = [cols.index(c) for c in COLUMNS]
    data = np.empty((len(lines) - 2, len(COLUMNS)))
    for i, line in enumerate(lines[2:]):
        parts = line.split(",")
        if len(parts) != len(cols):
            raise ParseError(f"expected {len(cols)} fields, found {len(parts)}", path, i + 3)
        try:
            data[i] = [float(parts[j]) for j in order]
        except ValueError:
            raise ParseError("non-numeric field", path, i + 3) from None
    if not np.all(np.isfinite(data)):
        row = int(np.flatnonzero(~np.all(np.isfinite(data), axis=1))[0])
        raise ParseError("non-finite value", path, row + 3)
    check_time(data[:, 0], rate, line_offset=2, path=path)
    check_quaternions(data[:, 7:11], line_offset=3, path=path)
    return ImuSequence(rate, data[:, 0], data[:, 1:4], data[:, 4:7], data[:, 7:11], data[:, 11:14],
                       gravity_removed)


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """(..., 4) unit quaternions (w, x, y, z) -> (..., 3, 3) rotation matrices."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = np.moveaxis(q, -1, 0)
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - w * z)
    r[..., 0, 2] = 2 * (x * z + w * y)
    r[..., 1, 0] = 2 * (x * y + w * z)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - w * x)
    r[..., 2, 0] = 2 * (x * z - w * y)
    r[..., 2, 1] = 2 * (y * z + w * x)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def yaw_quaternion(yaw: np.ndarray) -> np.ndarray:
    yaw = np.asarray(yaw, dtype=np.float64)
    q = np.zeros(yaw.shape + (4,))
    q[..., 0] = np.cos(yaw / 2)
    q[..., 3] = np.sin(yaw / 2)
    return q


def rotate_to_world(seq: ImuSequence) -> tuple[np.ndarray, np.ndarray]:
    """World-frame (gyro, accel), each (T, 3)."""
    r = quat_to_matrix(seq.orientation)
    gyro = np.einsum("tij,tj->ti", r, seq.gyro)
    accel = np.einsum("tij,tj->ti", r, seq.accel)
    return gyro, accel


def to_world_frame(seq: ImuSequence) -> ImuSequence:
    """Same sequence with gyro/accel expressed in the world frame (identity orientation)."""
    gyro, accel = rotate_to_world(seq)
    ident = np.zeros_like(seq.orientation)
    ident[:, 0] = 1.0
    return dataclasses.replace(seq, gyro=gyro, accel=accel, orientation=ident)


def remove_gravity(seq: ImuSequence, g: float = GRAVITY) -> ImuSequence:
    """Rotate to the world frame and subtract (0, 0, g) from the acceleration."""
    if seq.gravity_removed:
        raise ContractError("gravity has already been removed from this sequence")
    world = to_world_frame(seq)
    accel = world.accel.copy()
    accel[:, 2] -= g
    return dataclasses.replace(world, accel=accel, gravity_removed=True)


def add_gravity(seq: ImuSequence, g: float = GRAVITY) -> ImuSequence:
    """Inverse of :func:`remove_gravity` (result stays in the world frame)."""
    if not seq.gravity_removed:
        raise ContractError("sequence still contains gravity")
    world = to_world_frame(seq)
    accel = world.accel.copy()
    accel[:, 2] += g
    return dataclasses.replace(world, accel=accel, gravity_removed=False)


# ---------------------------------------------------------------------------
# windowing
# ---------------------------------------------------------------------------


@dataclass
class WindowBatch:
    inputs: np.ndarray  # (B, 6, W): world-frame gyro then accel
    targets: np.ndarray  # (B, 2): mean planar velocity over the window, m/s
    window_start_indices: np.ndarray

    def __len__(self) -> int:
        return len(self.targets)

    def subset(self, idx) -> WindowBatch:
        return WindowBatch(self.inputs[idx], self.targets[idx], self.window_start_indices[idx])

    @staticmethod
    def concatenate(batches) -> WindowBatch:
        batches = list(batches)
        return WindowBatch(
            np.concatenate([b.inputs for b in batches]),
            np.concatenate([b.targets for b in batches]),
            np.concatenate([b.window_start_indices for b in batches]),
        )


def window_starts(n_samples: int, window: int, stride: int) -> np.ndarray:
    if window > n_samples:
        raise ContractError(f"window of {window} samples exceeds sequence length {n_samples}")
    if stride < 1:
        raise ContractError("stride must be >= 1")
    return np.arange(0, n_samples - window + 1, stride)


def make_windows(seq: ImuSequence, window: int, stride: int = 10, allow_gravity: bool = False) -> WindowBatch:
    """Slice a sequence into (6, W) world-frame windows with mean-velocity targets.

    The target of the window spanning samples ``[s, s + W - 1]`` is the
    planar displacement between those two samples divided by the elapsed
    time. Sequences that still contain gravity are refused unless
    ``allow_gravity`` is set.
    """
    if not seq.gravity_removed and not allow_gravity:
        raise ContractError("sequence still contains gravity; remove it or pass allow_gravity=True")
    starts = window_starts(len(seq), window, stride)
    gyro, accel = rotate_to_world(seq)
    signal = np.concatenate([gyro, accel], axis=1).T  # (6, T)
    idx = starts[:, None] + np.arange(window)[None, :]
    inputs = np.ascontiguousarray(signal[:, idx].transpose(1, 0, 2))
    end = starts + window - 1
    disp = seq.gt_pos[end, :2] - seq.gt_pos[starts, :2]
    targets = disp / ((window - 1) / seq.sample_rate_hz)
    return WindowBatch(inputs, targets, starts)


# ---------------------------------------------------------------------------
# synthetic trajectories
# ---------------------------------------------------------------------------

SHAPES = ("line", "circle", "lissajous")


@dataclass(frozen=True)
class SynthSpec:
    """Closed-form planar trajectory plus IMU error model.

    ``radius`` sets the circle radius and the lissajous amplitude. Noise
    values are white-noise densities (per sqrt(Hz)); biases are constant
    body-frame offsets. The path geometry depends only on shape, speed and
    radius; ``seed`` drives the sensor noise.
    """

    shape: str = "circle"
    speed: float = 1.0
    duration: float = 120.0
    sample_rate_hz: float = 200.0
    gyro_noise: float = 1e-4
    accel_noise: float = 1e-3
    gyro_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    accel_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    include_gravity: bool = True
    seed: int = 0
    radius: float = 5.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ContractError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.speed <= 0 or self.duration <= 0 or self.sample_rate_hz <= 0 or self.radius <= 0:
            raise ContractError("speed, duration, sample rate and radius must be positive")


def path_kinematics(spec: SynthSpec, t: np.ndarray):
    """World position, velocity and acceleration (each (T, 3)) of the closed-form path."""
    v, r = spec.speed, spec.radius
    z = np.zeros_like(t)
    if spec.shape == "line":
        pos = np.column_stack([v * t, z, z])
        vel = np.column_stack([np.full_like(t, v), z, z])
        acc = np.zeros((len(t), 3))
    elif spec.shape == "circle":
        w = v / r
        s, c = np.sin(w * t), np.cos(w * t)
        pos = np.column_stack([r * s, r * (1 - c), z])
        vel = np.column_stack([v * c, v * s, z])
        acc = np.column_stack([-v * w * s, v * w * c, z])
    else:  # figure-eight lissajous
        w = v / r
        pos = np.column_stack([r * np.sin(w * t), 0.5 * r * np.sin(2 * w * t), z])
        vel = np.column_stack([r * w * np.cos(w * t), r * w * np.cos(2 * w * t), z])
        acc = np.column_stack([-r * w * w * np.sin(w * t), -2 * r * w * w * np.sin(2 * w * t), z])
    return pos, vel, acc


def synthesize(spec: SynthSpec) -> ImuSequence:
    """Noise-free ground truth with a yaw-only attitude following the path heading."""
    n = int(round(spec.duration * spec.sample_rate_hz))
    t = np.arange(n) / spec.sample_rate_hz
    pos, vel, acc = path_kinematics(spec, t)
    yaw = np.arctan2(vel[:, 1], vel[:, 0])
    yaw_rate = (vel[:, 0] * acc[:, 1] - vel[:, 1] * acc[:, 0]) / (vel[:, 0] ** 2 + vel[:, 1] ** 2)
    q = yaw_quaternion(yaw)
    rot = quat_to_matrix(q)
    specific = acc.copy()
    if spec.include_gravity:
        specific[:, 2] += GRAVITY
    accel_body = np.einsum("tji,tj->ti", rot, specific)  # R^T a
    gyro_body = np.column_stack([np.zeros(n), np.zeros(n), yaw_rate])
    rng = np.random.default_rng(spec.seed)
    sq = math.sqrt(spec.sample_rate_hz)
    gyro_body = gyro_body + np.asarray(spec.gyro_bias) + rng.normal(0.0, spec.gyro_noise * sq, (n, 3))
    accel_body = accel_body + np.asarray(spec.accel_bias) + rng.normal(0.0, spec.accel_noise * sq, (n, 3))
    return ImuSequence(spec.sample_rate_hz, t, gyro_body, accel_body, q, pos, gravity_removed=False)


def stationary_sequence(duration: float = 10.0, rate: float = 200.0, accel_noise: float = 1e-3,
                        gyro_noise: float = 1e-4, seed: int = 0, yaw: float = 0.0) -> ImuSequence:
    """A device at rest, gravity included, constant heading."""
    n = int(round(duration * rate))
    rng = np.random.default_rng(seed)
    sq = math.sqrt(rate)
    accel = np.tile([0.0, 0.0, GRAVITY], (n, 1)) + rng.normal(0.0, accel_noise * sq, (n, 3))
    gyro = rng.normal(0.0, gyro_noise * sq, (n, 3))
    q = yaw_quaternion(np.full(n, yaw))
    return ImuSequence(rate, np.arange(n) / rate, gyro, accel, q, np.zeros((n, 3)))


def time_split(seq: ImuSequence, fractions=(0.7, 0.1, 0.2)) -> list[ImuSequence]:
    """Consecutive train/val/test pieces of one sequence."""
    if abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ContractError(f"split fractions must be non-negative and sum to 1: {fractions}")
    n = len(seq)
    edges = np.concatenate([[0], np.round(np.cumsum(fractions) * n).astype(int)])
    edges[-1] = n
    return [seq.slice(a, b) for a, b in zip(edges, edges[1:])]


def default_suite(duration: float = 120.0, rate: float = 200.0, seed: int = 0,
                  include_gravity: bool = True) -> list[SynthSpec]:
    """Three lines, three circles, two figure-eights."""
    base = dict(duration=duration, sample_rate_hz=rate, include_gravity=include_gravity)
    specs = [
        SynthSpec("line", speed=0.9, **base),
        SynthSpec("line", speed=1.0, **base),
        SynthSpec("line", speed=1.1, **base),
        SynthSpec("circle", speed=1.0, radius=4.0, **base),
        SynthSpec("circle", speed=1.2, radius=6.0, **base),
        SynthSpec("circle", speed=0.8, radius=5.0, **base),
        SynthSpec("lissajous", speed=1.0, radius=5.0, **base),
        SynthSpec("lissajous", speed=1.2, radius=6.0, **base),
    ]
    return [dataclasses.replace(s, seed=seed * 100 + i) for i, s in enumerate(specs)]
