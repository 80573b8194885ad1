"""
Training a reduced model on the synthetic suite
===============================================

Trains a narrow version of the network (and its no-attention ablation)
on the time-split synthetic suite, then compares held-out ATE with the
zero-velocity predictor. The full-width configuration is exercised by
the acceptance tests; this script stays small enough to run in a few
minutes on one core.
"""

import argparse
import logging

import numpy as np

from chebyodo.config import RunConfig
from chebyodo.data import remove_gravity, synthesize
from chebyodo.evaluation import zero_predictor
from chebyodo.workflow import evaluate_sequences, mean_metric, train_on_sequences

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--epochs", type=int, default=6)
parser.add_argument("--duration", type=float, default=120.0)
parser.add_argument("--suite", default="line:1.0:5, circle:1.0:4, lissajous:1.0:5")
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

cfg = RunConfig(
    stage_channels=(16, 32, 64, 128), head_widths=(64, 32, 2), suite=args.suite, duration=args.duration,
    epochs=args.epochs, batch_size=4, train_stride=50, eval_stride=50,
)
seqs = [remove_gravity(synthesize(s)) for s in cfg.synth_specs()]

baseline = mean_metric(evaluate_sequences(zero_predictor, seqs, cfg), "ate")
print(f"zero-velocity predictor: mean test ATE {baseline:.3f} m")

for eksa in (True, False):
    run = cfg.replace(eksa_enabled=eksa)
    result = train_on_sequences(run, seqs)
    reports = evaluate_sequences(result.model, seqs, run)
    ates = [r.ate for r in reports]
    label = "with attention" if eksa else "ablation"
    print(f"{label:<15} params {result.model.num_parameters():7d}  best epoch {result.best_epoch}  "
          f"test ATE {np.round(ates, 2)}  mean {np.mean(ates):.3f} m ({np.mean(ates) / baseline:.0%} of zero)")
