"""Trajectory reconstruction from predicted velocities, and trajectory metrics.

Windows start every ``stride`` samples. The velocity predicted for window k
is held over the ``stride`` samples centred on that window's midpoint, so K
windows give K + 1 position nodes spaced ``stride / rate`` seconds apart.
Integration starts at the ground-truth position of the first node; no
alignment transform is applied before computing errors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ImuSequence, make_windows
from .errors import ContractError

RTE_INTERVAL_S = 60.0


def integrate_velocity(v_pred, dt: float, origin=(0.0, 0.0)) -> np.ndarray:
    """Positions p_0 = origin, p_{k+1} = p_k + v_k dt; returns (K + 1, 2)."""
    if dt <= 0:
        raise ContractError("dt must be > 0")
    v = np.asarray(v_pred, dtype=np.float64).reshape(-1, 2)
    out = np.empty((len(v) + 1, 2))
    out[0] = origin
    np.cumsum(v * dt, axis=0, out=out[1:])
    out[1:] += out[0]
    return out


def _pair(pred_xy, gt_xy):
    pred = np.asarray(pred_xy, dtype=np.float64)
    gt = np.asarray(gt_xy, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ContractError(f"trajectory shapes differ: {pred.shape} vs {gt.shape}")
    if pred.ndim != 2 or len(pred) == 0:
        raise ContractError("trajectories must be non-empty (K, D) arrays")
    return pred, gt


def ate(pred_xy, gt_xy) -> float:
    """Root mean square of per-point Euclidean distances."""
    pred, gt = _pair(pred_xy, gt_xy)
    return float(np.sqrt(np.mean(np.sum((pred - gt) ** 2, axis=1))))


def rte_interval(n_points: int, dt: float, interval_s: float = RTE_INTERVAL_S) -> tuple[int, float]:
    """Step count used by :func:`rte` and the factor applied to its result.

    When the trajectory spans less than ``interval_s`` the largest available
    step count is used and the error is scaled up by ``interval_s / span``.
    """
    if dt <= 0 or interval_s <= 0:
        raise ContractError("dt and interval_s must be > 0")
    if n_points < 2:
        raise ContractError("rte needs at least two points")
    n = int(round(interval_s / dt))
    if n <= n_points - 1:
        return n, 1.0
    n = n_points - 1
    return n, interval_s / (n * dt)


def rte(pred_xy, gt_xy, interval_s: float = RTE_INTERVAL_S, dt: float = 1.0) -> float:
    """RMS mismatch of displacements over ``interval_s`` seconds, all start points."""
    pred, gt = _pair(pred_xy, gt_xy)
    n, scale = rte_interval(len(pred), dt, interval_s)
    d = (pred[n:] - pred[:-n]) - (gt[n:] - gt[:-n])
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1)))) * scale


def path_length(xy) -> float:
    xy = np.asarray(xy, dtype=np.float64)
    return float(np.sum(np.linalg.norm(np.diff(xy, axis=0), axis=1)))


def pde(pred_xy, gt_xy) -> float:
    """Final-position error divided by the ground-truth path length."""
    pred, gt = _pair(pred_xy, gt_xy)
    length = path_length(gt)
    if length <= 0:
        raise ContractError("ground-truth path has zero length")
    return float(np.linalg.norm(pred[-1] - gt[-1]) / length)


@dataclass
class TrajectoryReport:
    t: np.ndarray
    pred_xy: np.ndarray
    gt_xy: np.ndarray
    ate: float
    rte: float
    pde: float
    cdf_samples: np.ndarray
    traj_length: float
    metadata: dict = field(default_factory=dict)


def window_nodes(starts: np.ndarray, window: int, stride: int) -> np.ndarray:
    """Fractional sample indices of the K + 1 integration nodes."""
    first = starts[0] + (window - 1) / 2 - stride / 2
    return first + stride * np.arange(len(starts) + 1)


def report_from_velocities(
    v_pred: np.ndarray,
    seq: ImuSequence,
    starts: np.ndarray,
    window: int,
    stride: int,
    interval_s: float = RTE_INTERVAL_S,
) -> TrajectoryReport:
    if len(starts) > 1 and np.any(np.diff(starts) != stride):
        raise ContractError("window starts must be evenly spaced by stride")
    nodes = window_nodes(starts, window, stride)
    idx = np.arange(len(seq), dtype=np.float64)
    gt = np.column_stack([np.interp(nodes, idx, seq.gt_pos[:, j]) for j in range(2)])
    t = np.interp(nodes, idx, seq.t)
    dt = stride / seq.sample_rate_hz
    pred = integrate_velocity(v_pred, dt, gt[0])
    errors = np.sort(np.linalg.norm(pred - gt, axis=1))
    n, scale = rte_interval(len(pred), dt, interval_s)
    meta = {"dt_s": dt, "rte_interval_steps": n, "rte_scale": scale, "rte_scaled": scale != 1.0}
    length = path_length(gt)
    return TrajectoryReport(
        t, pred, gt,
        ate(pred, gt),
        rte(pred, gt, interval_s, dt),
        pde(pred, gt) if length > 0 else float("nan"),
        errors, length, meta,
    )


def evaluate_sequence(
    predictor,
    seq: ImuSequence,
    window: int,
    stride: int = 10,
    allow_gravity: bool = False,
    interval_s: float = RTE_INTERVAL_S,
    batch_size: int = 64,
) -> TrajectoryReport:
    """Slide windows over ``seq``, predict velocities, integrate, score.

    ``predictor`` is a trained model (anything with ``predict(inputs,
    batch_size)``) or a plain callable mapping (B, 6, W) windows to (B, 2)
    velocities.
    """
    windows = make_windows(seq, window, stride, allow_gravity=allow_gravity)
    if hasattr(predictor, "predict"):
        v = predictor.predict(windows.inputs, batch_size)
    else:
        v = np.asarray(predictor(windows.inputs), dtype=np.float64)
    if v.shape != (len(windows), 2):
        raise ContractError(f"predictor returned shape {v.shape}, expected ({len(windows)}, 2)")
    return report_from_velocities(v, seq, windows.window_start_indices, window, stride, interval_s)


def zero_predictor(inputs: np.ndarray) -> np.ndarray:
    return np.zeros((len(inputs), 2))


def write_report(report: TrajectoryReport, out_dir) -> None:
    """metrics.csv, traj.csv and cdf.csv in ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ate", "rte", "pde", "traj_len_m"])
        w.writerow([f"{report.ate:.10g}", f"{report.rte:.10g}", f"{report.pde:.10g}", f"{report.traj_length:.10g}"])
    with open(out / "traj.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "pred_x", "pred_y", "gt_x", "gt_y"])
        for row in np.column_stack([report.t, report.pred_xy, report.gt_xy]):
            w.writerow([f"{v:.10g}" for v in row])
    with open(out / "cdf.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["error_m", "fraction"])
        n = len(report.cdf_samples)
        for i, e in enumerate(report.cdf_samples):
            w.writerow([f"{e:.10g}", f"{(i + 1) / n:.10g}"])
