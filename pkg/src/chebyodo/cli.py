"""Command line entry point: ``chebyodo <command> [options]``.

Commands: synth, preprocess, train, eval, bench, gradcheck. Every command
logs its fully resolved configuration before doing any work.

Exit codes: 0 success, 1 contract or parse error, 2 numerical failure
(non-finite training loss or a failed gradient check).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import os
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .data import remove_gravity, synthesize, to_world_frame, write_sequence
from .eksa import complexity_bench, write_bench_csv
from .errors import NumericalError
from .evaluation import write_report
from .gradcheck import inject_fault, run_suite
from .training import load_checkpoint, model_from_checkpoint, save_checkpoint
from .workflow import MANIFEST, evaluate_sequences, load_dataset, sequence_files, train_on_sequences, write_dataset

log = logging.getLogger("chebyodo")

EXIT_OK, EXIT_CONTRACT, EXIT_NUMERICAL = 0, 1, 2


def _echo_config(cfg: RunConfig) -> None:
    for key, value in cfg.items():
        log.info("config %s = %s", key, value)


def cmd_synth(cfg: RunConfig, out_dir) -> int:
    specs = cfg.synth_specs()
    paths = write_dataset(specs, [synthesize(s) for s in specs], out_dir)
    log.info("wrote %d sequences and %s to %s", len(paths), MANIFEST, out_dir)
    return EXIT_OK


def cmd_preprocess(cfg: RunConfig, in_dir, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = sequence_files(in_dir)
    processed = []
    for path, (name, seq) in zip(files, load_dataset(in_dir)):
        seq = remove_gravity(seq) if cfg.remove_gravity else to_world_frame(seq)
        write_sequence(seq, out / path.name)
        processed.append(path.name)
        log.info("%s -> %s (gravity_removed=%s)", path, out / path.name, seq.gravity_removed)
    manifest = Path(in_dir) / MANIFEST
    if manifest.exists():
        (out / MANIFEST).write_bytes(manifest.read_bytes())
    return EXIT_OK


def cmd_train(cfg: RunConfig, data_dir, out_ckpt) -> int:
    out_ckpt = Path(out_ckpt)
    out_ckpt.parent.mkdir(parents=True, exist_ok=True)
    seqs = [s for _, s in load_dataset(data_dir)]
    log_path = out_ckpt.with_name(out_ckpt.stem + "_log.csv")
    result = train_on_sequences(cfg, seqs, log_path)
    log.info("model parameters: %d (eksa_enabled=%s)", result.model.num_parameters(), cfg.eksa_enabled)
    save_checkpoint(result.checkpoint, out_ckpt)
    log.info("best epoch %d; checkpoint %s; log %s", result.best_epoch, out_ckpt, log_path)
    return EXIT_OK


def cmd_eval(cfg: RunConfig, ckpt_path, data_dir, out_dir) -> int:
    model = model_from_checkpoint(load_checkpoint(ckpt_path))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    named = load_dataset(data_dir)
    reports = evaluate_sequences(model, [s for _, s in named], cfg)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence", "ate", "rte", "pde", "traj_len_m"])
        for (name, _), rep in zip(named, reports):
            write_report(rep, out / name)
            w.writerow([name, f"{rep.ate:.10g}", f"{rep.rte:.10g}", f"{rep.pde:.10g}", f"{rep.traj_length:.10g}"])
            log.info("%s: ate=%.3f m rte=%.3f m pde=%.4f", name, rep.ate, rep.rte, rep.pde)
    return EXIT_OK


def cmd_bench(cfg: RunConfig, out_csv) -> int:
    rows = complexity_bench(cfg.bench_n_grid, cfg.bench_seq_len, cfg.bench_repetitions, cfg.taylor_order,
                            cfg.sigma, cfg.bench_tokens_per_call, cfg.seed)
    Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
    write_bench_csv(rows, out_csv)
    for (n0, s0, e0), (n1, s1, e1) in zip(rows, rows[1:]):
        log.info("N %d -> %d: softmax x%.2f, eksa x%.2f", n0, n1, s1 / s0, e1 / e0)
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, fault: str | None = None) -> int:
    ctx = inject_fault(fault) if fault else contextlib.nullcontext()
    with ctx:
        rows = run_suite(cfg.gradcheck_coords, cfg.gradcheck_h, cfg.gradcheck_tol, cfg.seed)
    print(f"{'family':<32} {'parameter':<28} {'coords':>6} {'rel_error':>11}  status")
    for r in rows:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.family:<32} {r.result.name:<28} {r.result.coords_checked:>6} {r.result.rel_error:>11.3e}  {status}")
    failed = sorted({r.family for r in rows if not r.passed})
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}")
        return EXIT_NUMERICAL
    print(f"all {len(rows)} gradient checks below {cfg.gradcheck_tol:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output path (directory or file, per command)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    ap = argparse.ArgumentParser(prog="chebyodo", description="ResChebyKAN + kernel attention inertial odometry.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate the synthetic trajectory suite")
    p = sub.add_parser("preprocess", parents=[common], help="rotate to world frame, optionally remove gravity")
    p.add_argument("in_dir")
    p.add_argument("--remove-gravity", action="store_true", default=None)
    p = sub.add_parser("train", parents=[common], help="train a model on a sequence directory")
    p.add_argument("data_dir")
    p = sub.add_parser("eval", parents=[common], help="write metric reports for a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("data_dir")
    sub.add_parser("bench", parents=[common], help="softmax vs. kernel attention timing table")
    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every layer family")
    p.add_argument("--inject-fault", metavar="OP", help="scale the backward rule of OP (self-test)")
    return ap


_DEFAULT_OUT = {"synth": "data/synth", "preprocess": "data/processed", "train": "runs/model.ckpt",
                "eval": "runs/eval", "bench": "runs/bench.csv"}


def _thread_limit():
    n = os.environ.get("CHEBYODO_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out = args.out or _DEFAULT_OUT.get(args.command)
    try:
        cfg = load_config(args.config, seed=args.seed, remove_gravity=getattr(args, "remove_gravity", None))
        log.info("command %s, out=%s", args.command, out)
        _echo_config(cfg)
        with _thread_limit():
            if args.command == "synth":
                return cmd_synth(cfg, out)
            if args.command == "preprocess":
                return cmd_preprocess(cfg, args.in_dir, out)
            if args.command == "train":
                return cmd_train(cfg, args.data_dir, out)
            if args.command == "eval":
                return cmd_eval(cfg, args.checkpoint, args.data_dir, out)
            if args.command == "bench":
                return cmd_bench(cfg, out)
            return cmd_gradcheck(cfg, args.inject_fault)
    except NumericalError as e:
        log.error("numerical failure: %s", e)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_CONTRACT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
