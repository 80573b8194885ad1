"""Dataset directories and the split / window / train / evaluate chain."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import ImuSequence, SynthSpec, WindowBatch, make_windows, read_sequence, time_split, write_sequence
from .errors import ContractError
from .evaluation import TrajectoryReport, evaluate_sequence
from .training import TrainResult, train

log = logging.getLogger(__name__)

MANIFEST = "manifest.csv"
MANIFEST_COLUMNS = ("file", "shape", "speed", "radius", "duration", "sample_rate_hz", "seed",
                    "include_gravity")


def write_dataset(specs: list[SynthSpec], sequences: list[ImuSequence], out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    with open(out / MANIFEST, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_COLUMNS)
        for i, (spec, seq) in enumerate(zip(specs, sequences)):
            name = f"seq_{i:02d}_{spec.shape}.csv"
            write_sequence(seq, out / name)
            w.writerow([name, spec.shape, spec.speed, spec.radius, spec.duration, spec.sample_rate_hz,
                        spec.seed, str(spec.include_gravity).lower()])
            paths.append(out / name)
    return paths


def sequence_files(data_dir) -> list[Path]:
    """Files listed in the manifest, or every ``*.csv`` except the manifest."""
    d = Path(data_dir)
    if not d.is_dir():
        raise ContractError(f"not a directory: {d}")
    manifest = d / MANIFEST
    if manifest.exists():
        with open(manifest, newline="") as fh:
            return [d / row["file"] for row in csv.DictReader(fh)]
    files = sorted(p for p in d.glob("*.csv") if p.name != MANIFEST)
    if not files:
        raise ContractError(f"no sequence files in {d}")
    return files


def load_dataset(data_dir) -> list[tuple[str, ImuSequence]]:
    return [(p.stem, read_sequence(p)) for p in sequence_files(data_dir)]


def split_all(seqs: list[ImuSequence], fractions) -> tuple[list, list, list]:
    parts = [time_split(s, fractions) for s in seqs]
    return [p[0] for p in parts], [p[1] for p in parts], [p[2] for p in parts]


def windows_for(seqs: list[ImuSequence], window: int, stride: int, allow_gravity: bool) -> WindowBatch:
    return WindowBatch.concatenate(make_windows(s, window, stride, allow_gravity) for s in seqs)


def train_on_sequences(cfg: RunConfig, seqs: list[ImuSequence], log_path=None) -> TrainResult:
    """Time-split every sequence, window the train/val parts, train."""
    model_cfg = cfg.model_config()
    tr, va, _ = split_all(seqs, cfg.split)
    train_data = windows_for(tr, cfg.window_size, cfg.train_stride, cfg.allow_gravity)
    val_data = windows_for(va, cfg.window_size, cfg.val_stride, cfg.allow_gravity)
    log.info("training on %d windows, validating on %d", len(train_data), len(val_data))
    return train(model_cfg, train_data, val_data, log_path)


def pick_split(cfg: RunConfig, seqs: list[ImuSequence]) -> list[ImuSequence]:
    if cfg.eval_split == "all":
        return list(seqs)
    index = {"train": 0, "val": 1, "test": 2}[cfg.eval_split]
    return list(split_all(seqs, cfg.split)[index])


def evaluate_sequences(predictor, seqs: list[ImuSequence], cfg: RunConfig) -> list[TrajectoryReport]:
    return [
        evaluate_sequence(predictor, s, cfg.window_size, cfg.eval_stride, cfg.allow_gravity, cfg.rte_interval_s)
        for s in pick_split(cfg, seqs)
    ]


def mean_metric(reports: list[TrajectoryReport], name: str) -> float:
    return float(np.mean([getattr(r, name) for r in reports]))
