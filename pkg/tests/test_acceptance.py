"""Acceptance criteria 1-11.

Each test records one verdict line (see the "acceptance criteria" section
of the pytest terminal summary) at the stated tolerance. Criteria that come
out red are reported as FAIL and marked xfail with the reason; thresholds
are never relaxed.

    pytest tests/test_acceptance.py -v
"""

import csv
import math
import time

import numpy as np
import pytest

from chebyodo import cli
from chebyodo.chebykan import cheb_features
from chebyodo.config import RunConfig
from chebyodo.data import remove_gravity, rotate_to_world, stationary_sequence, synthesize, to_world_frame
from chebyodo.eksa import complexity_bench, corr_sq, feature_map, kernel_gap, linear_attention
from chebyodo.evaluation import ate, pde, rte, zero_predictor
from chebyodo.gradcheck import run_suite
from chebyodo.model import ModelConfig, ResKACNNet
from chebyodo.tensor import Tensor
from chebyodo.training import checkpoint_from_model, load_checkpoint, model_from_checkpoint, save_checkpoint
from chebyodo.workflow import evaluate_sequences, load_dataset, mean_metric, train_on_sequences

from oracles import ate_loop, chebyshev_recurrence, pde_loop, rte_loop

# End-to-end recipe (criterion 8): default model and optimizer, data-side choices only.
E2E_TRAIN_STRIDE = 100
E2E_EPOCHS = 7
E2E_BATCH = 16
E2E_EVAL_STRIDE = 50

# Gravity study (criterion 9): a narrow desk model, five seeds, two conditions.
GRAVITY_SEEDS = (0, 1, 2, 3, 4)
GRAVITY_MODEL = dict(stage_channels=(16, 32, 64, 128), head_widths=(64, 32, 2))
GRAVITY_TRAIN = dict(epochs=4, batch_size=4, train_stride=200, eval_stride=50)


def test_c01_declared_not_reproducible(acceptance_report):
    acceptance_report(1, None, "not desk-reproducible (declared): published dataset tables need the full "
                               "datasets; substituted by criteria 2-11")


def test_c02_gradient_integrity(acceptance_report):
    t0 = time.perf_counter()
    rows = run_suite(n_coords=32, h=1e-5, tol=1e-4, ops=False)
    elapsed = time.perf_counter() - t0
    families = {r.family for r in rows}
    worst = max(r.result.rel_error for r in rows)
    required = {"chebykan", "resblock", "resblock[identity]", "eksa[normalize_output=True]",
                "eksa[normalize_output=False]", "head"}
    ok = required <= families and all(r.passed for r in rows) and elapsed < 300
    acceptance_report(2, ok, f"{len(rows)} parameter checks over {len(families)} layer families, "
                             f"max rel error {worst:.2e} < 1e-4, {elapsed:.1f} s < 300 s")
    assert ok


def test_c02_cli_gradcheck_exit_code():
    assert cli.run(["gradcheck"]) == 0


def test_c03_chebyshev_identity(acceptance_report):
    # standard-normal scalars; beyond |x| ~ 8.3 the arccos clamp (1e-7) moves t, see test_chebykan
    x = np.random.default_rng(3).normal(size=10_000)
    feats = cheb_features(Tensor(x.reshape(1, -1)), 8).data
    ref = np.stack(chebyshev_recurrence(np.tanh(x), 8))
    err = float(np.abs(feats - ref).max())
    acceptance_report(3, err < 1e-10, f"10^4 scalars x ~ N(0, 1), n <= 8: max |cos(n acos(tanh x)) - T_n(tanh x)| "
                                      f"= {err:.2e} < 1e-10")
    assert err < 1e-10


def scalar_kernel(m):
    return float(feature_map(Tensor([[0.7]]), m, 1.0).data[0] @ feature_map(Tensor([[-1.3]]), m, 1.0).data[0])


def gap_summary():
    rng = np.random.default_rng(4)
    out = []
    for length in (4, 16):
        gaps = [kernel_gap(rng.normal(size=length), rng.normal(size=length), 8) for _ in range(200)]
        out.append(f"L={length} median rel gap {np.median(gaps):.3f} (max {np.max(gaps):.3f})")
    return "; ".join(out)


def test_c04_scalar_kernel_monotone_and_gap_reported():
    values = [scalar_kernel(m) for m in range(0, 13)]
    assert all(b > a for a, b in zip(values, values[1:]))
    assert all(v < math.e for v in values)
    assert abs(values[12] - math.e) / math.e < 1e-9
    assert "median rel gap" in gap_summary()


@pytest.mark.xfail(strict=True, reason="sum_{n<=8} 1/n! misses e by 1.13e-6 relative; unattainable at m=8")
def test_c04_scalar_kernel_threshold(acceptance_report):
    rel = abs(scalar_kernel(8) - math.e) / math.e
    monotone = all(scalar_kernel(m + 1) > scalar_kernel(m) for m in range(8))
    acceptance_report(4, monotone and rel < 1e-6,
                      f"L=1: monotone={monotone}, m=8 rel error {rel:.3e} vs 1e-6 (truncation remainder of the "
                      f"series for e; m=9 gives {abs(scalar_kernel(9) - math.e) / math.e:.1e}); {gap_summary()}")
    assert rel < 1e-6


def test_c05_linearization(acceptance_report):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(10):
        q, k, v = (Tensor(rng.normal(size=(64, 16))) for _ in range(3))
        pq, pk = feature_map(q, 2, 1.0), feature_map(k, 2, 1.0)
        lin = linear_attention(pq, pk, v, normalize=False).data
        quad = (pq.data @ pk.data.T) @ v.data
        worst = max(worst, float(np.abs(lin - quad).max()))
    acceptance_report(5, worst < 1e-10, f"N=64, L=16, m=2, 10 draws: max |phi_q(phi_k^T v) - (phi_q phi_k^T)v| "
                                        f"= {worst:.2e} < 1e-10")
    assert worst < 1e-10


def test_c06_complexity_scaling(acceptance_report):
    cfg = RunConfig()
    t0 = time.perf_counter()
    rows = complexity_bench(cfg.bench_n_grid, cfg.bench_seq_len, cfg.bench_repetitions, 2, 1.0,
                            cfg.bench_tokens_per_call)
    elapsed = time.perf_counter() - t0
    eksa = [b[2] / a[2] for a, b in zip(rows, rows[1:])]
    soft = [b[1] / a[1] for a, b in zip(rows, rows[1:])]
    ok = (all(1.6 <= r <= 2.6 for r in eksa) and all(3.2 <= r <= 5.2 for r in soft)
          and rows[-1][2] < rows[-1][1] and elapsed < 600)
    acceptance_report(6, ok, "N " + "->".join(str(r[0]) for r in rows) +
                      f": eksa ratios {np.round(eksa, 2).tolist()} in [1.6, 2.6], softmax ratios "
                      f"{np.round(soft, 2).tolist()} in [3.2, 5.2], N=2048 eksa {rows[-1][2]:.0f} us vs softmax "
                      f"{rows[-1][1]:.0f} us, {elapsed:.0f} s < 600 s")
    assert ok


def test_c07_correlation_invariance(acceptance_report):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        length = int(rng.integers(2, 64))
        q, k = rng.normal(size=length), rng.normal(size=length)
        a = rng.choice([-1.0, 1.0]) * 10 ** rng.uniform(-2, 2)
        b = rng.normal(scale=100.0)
        worst = max(worst, abs(corr_sq(a * q + b, k) - corr_sq(q, k)))
    acceptance_report(7, worst < 1e-10, f"10^3 draws (a in +-[1e-2, 1e2], b ~ N(0, 100^2)): "
                                        f"max |corr_sq(aq+b, k) - corr_sq(q, k)| = {worst:.2e} < 1e-10")
    assert worst < 1e-10


def e2e_config(tmp_path, eksa):
    path = tmp_path / f"e2e_{'full' if eksa else 'ablation'}.cfg"
    path.write_text(
        f"train_stride = {E2E_TRAIN_STRIDE}\nepochs = {E2E_EPOCHS}\nbatch_size = {E2E_BATCH}\n"
        f"eval_stride = {E2E_EVAL_STRIDE}\neksa_enabled = {'true' if eksa else 'false'}\n"
    )
    return path


@pytest.mark.slow
def test_c08_end_to_end(acceptance_report, tmp_path):
    t0 = time.perf_counter()
    cfg_full, cfg_abl = e2e_config(tmp_path, True), e2e_config(tmp_path, False)
    assert cli.run(["synth", "--config", str(cfg_full), "--out", str(tmp_path / "raw")]) == 0
    assert cli.run(["preprocess", str(tmp_path / "raw"), "--remove-gravity", "--out", str(tmp_path / "data")]) == 0
    means = {}
    for name, cfg in (("full", cfg_full), ("ablation", cfg_abl)):
        ckpt = tmp_path / f"{name}.ckpt"
        assert cli.run(["train", str(tmp_path / "data"), "--config", str(cfg), "--out", str(ckpt)]) == 0
        assert cli.run(["eval", str(ckpt), str(tmp_path / "data"), "--config", str(cfg),
                        "--out", str(tmp_path / f"eval_{name}")]) == 0
        with open(tmp_path / f"eval_{name}" / "summary.csv") as fh:
            means[name] = float(np.mean([float(r["ate"]) for r in csv.DictReader(fh)]))
    run_cfg = RunConfig(eval_stride=E2E_EVAL_STRIDE)
    seqs = [s for _, s in load_dataset(tmp_path / "data")]
    zero = mean_metric(evaluate_sequences(zero_predictor, seqs, run_cfg), "ate")
    elapsed = time.perf_counter() - t0
    ratio = means["full"] / zero
    ok = ratio < 0.5 and means["full"] <= means["ablation"] and elapsed < 3600
    line = acceptance_report(
        8, ok, f"held-out mean ATE full {means['full']:.3f} m, ablation {means['ablation']:.3f} m, zero-velocity "
               f"{zero:.3f} m; full/zero = {ratio:.3f} (< 0.5), full <= ablation: {means['full'] <= means['ablation']}; "
               f"{E2E_EPOCHS} epochs, {elapsed / 60:.1f} min (< 60)")
    if not ok:
        pytest.xfail(line)


def gravity_condition(seed, removed):
    cfg = RunConfig(seed=seed, allow_gravity=not removed, **GRAVITY_MODEL, **GRAVITY_TRAIN)
    seqs = [synthesize(s) for s in cfg.synth_specs()]
    seqs = [remove_gravity(s) if removed else to_world_frame(s) for s in seqs]
    result = train_on_sequences(cfg, seqs)
    return mean_metric(evaluate_sequences(result.model, seqs, cfg), "ate")


@pytest.mark.slow
def test_c09_gravity_removal(acceptance_report):
    _, accel = rotate_to_world(stationary_sequence(duration=60.0, yaw=0.4, seed=9))
    mean_abs = np.abs(accel).mean(axis=0)
    imbalance = float(min(mean_abs[2] / mean_abs[0], mean_abs[2] / mean_abs[1]))
    t0 = time.perf_counter()
    pairs = [(gravity_condition(s, False), gravity_condition(s, True)) for s in GRAVITY_SEEDS]
    wins = sum(removed < kept for kept, removed in pairs)
    ok = wins >= 4 and imbalance >= 10
    line = acceptance_report(
        9, ok, f"gravity removed better on {wins}/5 seeds (need >= 4); mean ATE kept/removed per seed "
               + ", ".join(f"{k:.2f}/{r:.2f}" for k, r in pairs)
               + f"; stationary z/xy magnitude ratio {imbalance:.0f}x (>= 10); {(time.perf_counter() - t0) / 60:.1f} min")
    assert imbalance >= 10
    if not ok:
        pytest.xfail(line)


def test_c10_metric_oracles(acceptance_report):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(100):
        dt = float(rng.choice([0.05, 0.5, 1.0]))
        n = int(rng.integers(int(60 / dt) + 2, int(120 / dt)))
        gt = np.cumsum(rng.normal(size=(n, 2)), axis=0)
        pred = gt + np.cumsum(rng.normal(scale=0.2, size=(n, 2)), axis=0)
        worst = max(worst, abs(ate(pred, gt) - ate_loop(pred, gt)),
                    abs(rte(pred, gt, 60.0, dt) - rte_loop(pred, gt, int(round(60 / dt)))),
                    abs(pde(pred, gt) - pde_loop(pred, gt)))
    acceptance_report(10, worst < 1e-12, f"100 random pairs, RTE interval 60 s: max |metric - loop oracle| "
                                         f"= {worst:.2e} < 1e-12")
    assert worst < 1e-12


def test_c11_checkpoint_round_trip(acceptance_report, tmp_path):
    model = ResKACNNet(ModelConfig(seed=11))
    save_checkpoint(checkpoint_from_model(model), tmp_path / "m.ckpt")
    restored = model_from_checkpoint(load_checkpoint(tmp_path / "m.ckpt"))
    rng = np.random.default_rng(11)
    identical = 0
    for _ in range(10):
        x = rng.normal(size=(1, 6, 200))
        identical += bool(np.array_equal(model.predict(x), restored.predict(x)))
    acceptance_report(11, identical == 10, f"default model saved and reloaded: {identical}/10 random inputs give "
                                           f"bit-identical outputs")
    assert identical == 10
