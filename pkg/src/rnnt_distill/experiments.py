"""Desk-scale experiment drivers: prune-while-distill and teacher-student.

Both experiments compare matched pairs of runs (same seeds, same data, same
schedules) that differ only in whether the coarse distillation term is
active.  Reported medians are over per-seed test TERs.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, replace
from pathlib import Path

from .data import gen_data, load_split
from .distill import DistillConfig
from .evaluate import evaluate_model
from .presets import load_preset
from .train import RunConfig, TrainResult, run_train

DEFAULT_SEEDS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class ArmResult:
    seed: int
    dev_ter: float
    test_ter: float
    best_step: int


@dataclass(frozen=True)
class PairedComparison:
    """Per-seed results for the distilled and plain arms of one experiment."""

    distilled: tuple[ArmResult, ...]
    plain: tuple[ArmResult, ...]

    @property
    def median_distilled(self) -> float:
        return statistics.median(r.test_ter for r in self.distilled)

    @property
    def median_plain(self) -> float:
        return statistics.median(r.test_ter for r in self.plain)


def _test_ter(result: TrainResult, data_dir: Path, max_symbols: int) -> float:
    test_set = load_split(data_dir, "test")
    return evaluate_model(result.checkpoint.params, test_set, max_symbols).ter


def _run_arm(cfg: RunConfig, data_dir: Path, teacher_path: Path | None) -> ArmResult:
    result = run_train(cfg, data_dir, out_dir=None, teacher_path=teacher_path)
    return ArmResult(
        seed=cfg.seed,
        dev_ter=result.best_dev_ter,
        test_ter=_test_ter(result, data_dir, cfg.max_symbols_per_frame),
        best_step=result.best_step,
    )


def prepare_data(cfg: RunConfig, work_dir: str | Path) -> Path:
    data_dir = Path(work_dir) / "data"
    if not (data_dir / "train.jsonl").exists():
        gen_data(cfg.task, data_dir)
    return data_dir


def train_teacher(work_dir: str | Path, steps: int | None = None) -> tuple[Path, float]:
    """Train the uncompressed teacher preset; returns (checkpoint path, dev TER)."""
    cfg = load_preset("teacher")
    if steps is not None:
        cfg = replace(cfg, optimizer=replace(cfg.optimizer, steps=steps))
    data_dir = prepare_data(cfg, work_dir)
    out = Path(work_dir) / "teacher"
    result = run_train(cfg, data_dir, out_dir=out)
    assert result.checkpoint_path is not None
    return result.checkpoint_path, result.best_dev_ter


def _with_beta(cfg: RunConfig, beta: float) -> RunConfig:
    return replace(cfg, distill=DistillConfig(beta=beta, mode=cfg.distill.mode))


def prune_distill_comparison(
    work_dir: str | Path,
    teacher_path: str | Path,
    seeds: tuple[int, ...] = DEFAULT_SEEDS,
    preset: str = "prune90",
) -> PairedComparison:
    """Sparse students from the same teacher, with and without distillation.

    Both arms initialize from the teacher and prune on the identical cubic
    schedule; the distilled arm adds the coarse KL term at the preset beta.
    """
    base = load_preset(preset)
    data_dir = prepare_data(base, work_dir)
    distilled, plain = [], []
    for seed in seeds:
        cfg = base.with_seed(seed)
        distilled.append(_run_arm(cfg, data_dir, Path(teacher_path)))
        plain.append(_run_arm(_with_beta(cfg, 0.0), data_dir, Path(teacher_path)))
    return PairedComparison(tuple(distilled), tuple(plain))


def teacher_student_comparison(
    work_dir: str | Path,
    teacher_path: str | Path,
    seeds: tuple[int, ...] = DEFAULT_SEEDS,
) -> PairedComparison:
    """Small student from scratch, with and without guidance from a big teacher."""
    base = load_preset("student-distill")
    data_dir = prepare_data(base, work_dir)
    distilled, plain = [], []
    for seed in seeds:
        cfg = base.with_seed(seed)
        distilled.append(_run_arm(cfg, data_dir, Path(teacher_path)))
        plain.append(_run_arm(_with_beta(cfg, 0.0), data_dir, None))
    return PairedComparison(tuple(distilled), tuple(plain))


def format_comparison(title: str, cmp: PairedComparison) -> str:
    lines = [title, f"{'seed':>6} {'distilled':>12} {'plain':>12}"]
    for d, p in zip(cmp.distilled, cmp.plain):
        lines.append(f"{d.seed:>6} {d.test_ter:>12.4f} {p.test_ter:>12.4f}")
    lines.append(
        f"median test TER: distilled {cmp.median_distilled:.4f} "
        f"vs plain {cmp.median_plain:.4f}"
    )
    return "\n".join(lines)
