"""Command-line harness.

Exit codes: 0 success, 1 verification/training failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import gen_data
from .distill import memory_estimate
from .evaluate import evaluate_model
from .gradcheck import run_gradcheck
from .klcompare import format_report, run_klcompare
from .serialization import load_checkpoint, write_jsonl
from .train import ConfigError, TrainingDivergedError, load_run_config, run_train

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _add_common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", required=True, help="path to a run-config JSON file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rnnt-distill",
        description="Transducer lattice losses, coarse distillation, block-sparse pruning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset of a config")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory for the JSONL splits")

    p = sub.add_parser("train", help="train per config, optionally with a teacher")
    _add_common(p)
    p.add_argument("--data", required=True, help="directory holding train/dev/test.jsonl")
    p.add_argument("--out", required=True, help="output directory for checkpoint and metrics")
    p.add_argument("--teacher", default=None, help="teacher checkpoint for distillation")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.add_argument("--out", default=None, help="optional JSONL per-utterance report path")
    p.add_argument("--max-symbols-per-frame", type=int, default=4)

    p = sub.add_parser("gradcheck", help="finite-difference verification of all gradients")
    _add_common(p, config=False)
    p.add_argument(
        "--perturb-gradients",
        action="store_true",
        help="negative control: corrupt analytic gradients so every suite must fail",
    )

    p = sub.add_parser("kl-compare", help="full vs coarse KL: values, inequality, memory")
    _add_common(p, config=False)
    p.add_argument("--sizes", default="4,64,512", help="comma-separated vocabulary sizes")

    p = sub.add_parser("mem-estimate", help="lattice memory arithmetic for the KL losses")
    p.add_argument("--frames", type=int, default=500)
    p.add_argument("--rows", type=int, default=100)
    p.add_argument("--vocab", type=int, default=4000)
    p.add_argument("--bytes-per-value", type=int, default=4)
    p.add_argument("--batch", type=int, default=1)
    return parser


def _cmd_gen_data(args) -> int:
    cfg = load_run_config(args.config)
    task = cfg.task
    if args.seed is not None:
        from dataclasses import replace

        task = replace(task, seed=args.seed)
    paths = gen_data(task, args.out)
    for split, path in paths.items():
        print(f"{split}: {path}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    try:
        result = run_train(cfg, args.data, args.out, teacher_path=args.teacher)
    except TrainingDivergedError as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return EXIT_FAILURE
    print(
        f"best dev TER {result.best_dev_ter:.4f} at step {result.best_step}; "
        f"wall time {result.wall_seconds:.1f}s"
    )
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"metrics: {result.metrics_path}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .data import load_split

    ckpt = load_checkpoint(args.ckpt)
    examples = load_split(args.data, args.split)
    report = evaluate_model(ckpt.params, examples, args.max_symbols_per_frame)
    print(f"{args.split} TER {report.ter:.4f} ({report.total_edits}/{report.total_tokens})")
    if args.out:
        write_jsonl(
            args.out,
            [
                {"reference": list(u.reference), "hypothesis": list(u.hypothesis), "edits": u.edits}
                for u in report.utterances
            ],
        )
        print(f"report: {args.out}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    report = run_gradcheck(seed=args.seed or 0, perturb=args.perturb_gradients)
    for suite in report.suites:
        status = "pass" if suite.passed else "FAIL"
        print(
            f"{status}  {suite.name:<16} max rel err {suite.max_rel_err:.3e} "
            f"over {suite.coords} coords (tol {suite.tol:.0e})"
        )
    return EXIT_OK if report.passed else EXIT_FAILURE


def _cmd_klcompare(args) -> int:
    try:
        sizes = tuple(int(s) for s in args.sizes.split(","))
    except ValueError:
        raise ConfigError(f"--sizes must be comma-separated integers, got {args.sizes!r}")
    report = run_klcompare(seed=args.seed or 0, sizes=sizes)
    print(format_report(report))
    return EXIT_OK if report.passed else EXIT_FAILURE


def _cmd_mem_estimate(args) -> int:
    full = memory_estimate(args.frames, args.rows, args.vocab, args.bytes_per_value, args.batch)
    coarse = memory_estimate(
        args.frames, args.rows, args.vocab, args.bytes_per_value, args.batch, mode="coarse"
    )
    print(f"full lattice pair: {full} bytes ({full / 1e9:.4g} GB)")
    print(f"coarse lattice pair: {coarse} bytes ({coarse / 1e9:.4g} GB)")
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "kl-compare": _cmd_klcompare,
    "mem-estimate": _cmd_mem_estimate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
