"""Command-line entry point ``jcas-unfold``.

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 bad config,
4 missing trained model, 5 unreadable or corrupt model file, 6 training failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import harness
from .errors import ConfigurationError, JcasError, MissingModelError, ModelFileError, TrainingError
from .kernels import BACKEND
from .modelfile import load_model, save_model

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CONFIG, EXIT_MODEL_MISSING, EXIT_MODEL_FILE, EXIT_TRAIN = 0, 1, 2, 3, 4, 5, 6

log = logging.getLogger("jcas_unfold")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (defaults used when omitted)")
    common.add_argument("--seed", type=int, help="override the experiment and training seed")
    common.add_argument("--out-dir", "--out", dest="out_dir", help="directory for CSV output")
    common.add_argument("--model-dir", help="directory holding trained models")
    common.add_argument("--model", help="explicit model file (requires a single --rho)")
    common.add_argument("--rho", type=float, action="append", help="restrict to this rho (repeatable)")
    common.add_argument("--snr-db", type=float, action="append", help="restrict to this SNR in dB (repeatable)")
    common.add_argument(
        "--solver", action="append", choices=harness.SOLVER_CHOICES, help="restrict to this solver (repeatable)"
    )
    common.add_argument("--batch-count", type=int, help="number of channel realisations to average")
    common.add_argument("--no-train", action="store_true", help="fail instead of training missing models")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="jcas-unfold", description="Constant-modulus JCAS waveform design.")
    ap.add_argument("--version", action="version", version=f"%(prog)s ({BACKEND} kernels)")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("train", parents=[common], help="train and store models for each rho")
    sub.add_parser("eval", parents=[common], help="evaluate one or more (rho, SNR) cells -> eval.csv")
    sub.add_parser("sweep-rate", parents=[common], help="sum rate vs SNR for each rho -> rates.csv")
    sub.add_parser("beam", parents=[common], help="average beam pattern for one rho -> beam.csv")
    sub.add_parser("tradeoff", parents=[common], help="sum rate vs beam MSE across rho -> tradeoff.csv")
    sub.add_parser("timing", parents=[common], help="per-channel run time, rho = 1 -> timing.csv")
    gen = sub.add_parser("gen-config", help="print the default config as JSON")
    gen.add_argument("--out", help="write to this file instead of stdout")
    return ap


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.default_config()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
        changes["train.seed"] = args.seed
        changes["pgd.seed"] = args.seed
    if args.out_dir:
        changes["out_dir"] = args.out_dir
    if args.model_dir:
        changes["model_dir"] = args.model_dir
    if args.rho:
        changes["rho_grid"] = args.rho
    if args.snr_db:
        changes["snr_grid_db"] = args.snr_db
    if args.solver:
        changes["solvers"] = list(dict.fromkeys(args.solver))
    if args.batch_count is not None:
        changes["batch_count"] = args.batch_count
    if args.no_train:
        changes["auto_train"] = False
    return cfg.replace(**changes) if changes else cfg


def _explicit_models(args, cfg) -> dict | None:
    if not args.model:
        return None
    if len(cfg.rho_grid) != 1:
        raise ConfigurationError("--model needs exactly one --rho")
    if not os.path.exists(args.model):
        raise MissingModelError(cfg.rho_grid[0], args.model)
    model = load_model(args.model, cfg.n)
    if abs(model.rho - cfg.rho_grid[0]) > 1e-12:
        raise ConfigurationError(f"model {args.model} was trained for rho={model.rho:g}, not {cfg.rho_grid[0]:g}")
    return {cfg.rho_grid[0]: model}


def _out(cfg, name):
    return os.path.join(cfg.out_dir, name)


def cmd_train(args, cfg):
    if args.model and len(cfg.rho_grid) != 1:
        raise ConfigurationError("--model needs exactly one --rho")
    for rho in cfg.rho_grid:
        path = args.model or harness.model_path(cfg, rho)
        model = harness.train_model(cfg, rho)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        save_model(model, path)
        print(f"rho={rho:g}: final batch loss {model.metadata['final_batch_loss']:.6g} -> {path}")


def cmd_eval(args, cfg):
    sweep = harness.run_rate_sweep(cfg, _explicit_models(args, cfg))
    path = _out(cfg, "eval.csv")
    harness.write_rates(path, sweep, cfg)
    for r in sweep.rows:
        print(f"rho={r.rho:g} snr={r.snr_db:g}dB {r.solver}: rate {r.avg_sum_rate:.4f} bps/Hz, beam MSE {r.avg_beam_mse:.4g}")
    print(path)


def cmd_sweep(args, cfg):
    path = _out(cfg, "rates.csv")
    harness.write_rates(path, harness.run_rate_sweep(cfg, _explicit_models(args, cfg)), cfg)
    print(path)


def cmd_beam(args, cfg):
    if len(cfg.rho_grid) != 1:
        raise ConfigurationError("beam needs exactly one --rho")
    rho = cfg.rho_grid[0]
    path = _out(cfg, "beam.csv")
    harness.write_beam(path, harness.run_beam_pattern(cfg, rho, _explicit_models(args, cfg)), cfg, rho)
    print(path)


def cmd_tradeoff(args, cfg):
    path = _out(cfg, "tradeoff.csv")
    harness.write_tradeoff(path, harness.run_tradeoff(cfg, _explicit_models(args, cfg)), cfg)
    print(path)


def cmd_timing(args, cfg):
    models = None
    if args.model:
        models = {cfg.n: load_model(args.model, cfg.n)}
    rows = harness.run_timing(cfg, models)
    path = _out(cfg, "timing.csv")
    harness.write_timing(path, rows, cfg)
    for solver, n, sec, flops, _ in rows:
        print(f"{solver:9s} N={n:<3d} {sec * 1e3:9.3f} ms/channel  {flops} FLOPs")
    print(path)


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-rate": cmd_sweep,
    "beam": cmd_beam,
    "tradeoff": cmd_tradeoff,
    "timing": cmd_timing,
}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    if args.command == "gen-config":
        text = harness.dump_config(harness.default_config())
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL_MISSING
    except ModelFileError as exc:
        print(f"model file error: {exc}", file=sys.stderr)
        return EXIT_MODEL_FILE
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except (JcasError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
