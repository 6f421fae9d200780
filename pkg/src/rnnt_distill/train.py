"""Seeded minibatch training with optional distillation and gradual pruning.

One process, one run: the loop owns params, momentum and mask state; every
lattice/loss call is pure.  Identical config + seed reproduces metrics and
checkpoints byte for byte.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import Example, SynthTaskSpec, load_split
from .distill import (
    DistillConfig,
    coarse_kl_grad_student_logits,
    coarse_kl_loss,
    combined_loss,
    full_kl_grad_student_logits,
    full_kl_loss,
)
from .evaluate import evaluate_model
from .lattice import CoarseLattice, ProbLattice, TargetSequence, Vocab, coarse_grain, softmax_lattice
from .model import (
    ModelConfig,
    ModelParams,
    PRUNABLE,
    backward_params,
    forward_lattice,
    init_params,
    init_student_from_teacher,
    sgd_step,
    zero_momentum,
)
from .rnnt_loss import forward_backward, rnnt_grad_logits, rnnt_nll
from .serialization import Checkpoint, load_checkpoint, save_checkpoint, write_jsonl
from .sparsity import (
    BlockMask,
    SparsitySchedule,
    all_ones_mask,
    apply_mask,
    block_saliency,
    is_update_step,
    target_sparsity,
    update_mask,
)


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite; the last good checkpoint was written out."""


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float
    steps: int
    batch_size: int
    momentum: float = 0.9
    warmup: int = 0

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.warmup < 0:
            raise ConfigError(f"warmup must be >= 0, got {self.warmup}")


@dataclass(frozen=True)
class PruneGroup:
    """One sparsity schedule applied to a named set of weight matrices."""

    params: tuple[str, ...]
    schedule: SparsitySchedule

    def __post_init__(self) -> None:
        unknown = [n for n in self.params if n not in PRUNABLE]
        if unknown:
            raise ConfigError(f"not prunable: {unknown}; prunable matrices are {list(PRUNABLE)}")


@dataclass(frozen=True)
class RunConfig:
    task: SynthTaskSpec
    model: ModelConfig
    optimizer: OptimizerConfig
    distill: DistillConfig = DistillConfig()
    prune_groups: tuple[PruneGroup, ...] = ()
    eval_every: int = 200
    seed: int = 0
    init_from_teacher: bool = False
    max_symbols_per_frame: int = 4
    # Documented sweep of distillation weights; not iterated automatically.
    beta_sweep: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        seen: set[str] = set()
        for group in self.prune_groups:
            dup = seen.intersection(group.params)
            if dup:
                raise ConfigError(f"parameter in multiple prune groups: {sorted(dup)}")
            seen.update(group.params)

    def with_seed(self, seed: int) -> "RunConfig":
        """Rebind both the run seed and the model init seed."""
        model = ModelConfig(**{**_dataclass_dict(self.model), "seed": seed})
        return RunConfig(
            task=self.task,
            model=model,
            optimizer=self.optimizer,
            distill=self.distill,
            prune_groups=self.prune_groups,
            eval_every=self.eval_every,
            seed=seed,
            init_from_teacher=self.init_from_teacher,
            max_symbols_per_frame=self.max_symbols_per_frame,
            beta_sweep=self.beta_sweep,
        )


def _dataclass_dict(obj) -> dict:
    return asdict(obj)


def _build(cls, obj: dict, context: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{context}: expected an object, got {type(obj).__name__}")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    try:
        return cls(**obj)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{context}: {e}") from e


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    known = {
        "task", "model", "optimizer", "distill", "prune_groups",
        "eval_every", "seed", "init_from_teacher", "max_symbols_per_frame", "beta_sweep",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    for required in ("task", "model", "optimizer"):
        if required not in doc:
            raise ConfigError(f"config is missing the {required!r} section")
    groups = []
    for i, g in enumerate(doc.get("prune_groups", [])):
        if not isinstance(g, dict) or set(g) != {"params", "schedule"}:
            raise ConfigError(f"prune_groups[{i}] must have exactly 'params' and 'schedule'")
        sched = _build(SparsitySchedule, g["schedule"], f"prune_groups[{i}].schedule")
        try:
            groups.append(PruneGroup(tuple(g["params"]), sched))
        except ValueError as e:
            raise ConfigError(f"prune_groups[{i}]: {e}") from e
    return RunConfig(
        task=_build(SynthTaskSpec, doc["task"], "task"),
        model=_build(ModelConfig, doc["model"], "model"),
        optimizer=_build(OptimizerConfig, doc["optimizer"], "optimizer"),
        distill=_build(DistillConfig, doc.get("distill", {}), "distill"),
        prune_groups=tuple(groups),
        eval_every=int(doc.get("eval_every", 200)),
        seed=int(doc.get("seed", 0)),
        init_from_teacher=bool(doc.get("init_from_teacher", False)),
        max_symbols_per_frame=int(doc.get("max_symbols_per_frame", 4)),
        beta_sweep=tuple(doc.get("beta_sweep", [])),
    )


def load_run_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    return run_config_from_dict(doc)


@dataclass
class UtteranceLoss:
    nll: float
    distill: float
    grads: ModelParams


def _utterance_pass(
    params: ModelParams,
    ex: Example,
    vocab: Vocab,
    cfg: DistillConfig,
    teacher: "TeacherLattices | None",
    index: int,
) -> UtteranceLoss:
    target = TargetSequence(ex.labels, vocab)
    logits, cache = forward_lattice(params, ex.features, target)
    probs = softmax_lattice(logits)
    coarse = coarse_grain(probs, target)
    ab = forward_backward(coarse)
    nll = rnnt_nll(coarse, ab)
    lat_grad = rnnt_grad_logits(probs, coarse, ab, target)

    dloss = 0.0
    if teacher is not None and cfg.beta > 0:
        if cfg.mode == "coarse":
            t_coarse = teacher.coarse(index, ex, target)
            dloss = coarse_kl_loss(t_coarse, coarse)
            lat_grad = lat_grad + cfg.beta * coarse_kl_grad_student_logits(t_coarse, probs, target)
        else:
            t_probs = teacher.probs(index, ex, target)
            dloss = full_kl_loss(t_probs, probs)
            lat_grad = lat_grad + cfg.beta * full_kl_grad_student_logits(t_probs, probs)
    grads = backward_params(params, cache, lat_grad)
    return UtteranceLoss(nll, dloss, grads)


class TeacherLattices:
    """Frozen teacher outputs, computed once per training example.

    The teacher sees the identical input as the student, runs forward only,
    and in coarse mode is kept solely as a 3-channel lattice.
    """

    def __init__(self, params: ModelParams, mode: str):
        self.params = params
        self.mode = mode
        self._coarse: dict[int, CoarseLattice] = {}
        self._probs: dict[int, ProbLattice] = {}

    def _forward(self, ex: Example, target: TargetSequence) -> ProbLattice:
        logits, _ = forward_lattice(self.params, ex.features, target)
        return softmax_lattice(logits)

    def probs(self, index: int, ex: Example, target: TargetSequence) -> ProbLattice:
        if index not in self._probs:
            self._probs[index] = self._forward(ex, target)
        return self._probs[index]

    def coarse(self, index: int, ex: Example, target: TargetSequence) -> CoarseLattice:
        if index not in self._coarse:
            self._coarse[index] = coarse_grain(self._forward(ex, target), target)
        return self._coarse[index]


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: list[dict]
    best_step: int
    best_dev_ter: float
    wall_seconds: float
    checkpoint_path: Path | None = None
    metrics_path: Path | None = None


@dataclass
class _EvalSnapshot:
    step: int
    dev_ter: float
    params: ModelParams
    masks: dict[str, BlockMask]


def _metrics_record(
    step: int, rnnt: float, distill: float, total: float,
    masks: dict[str, BlockMask], dev_ter: float,
) -> dict:
    return {
        "step": step,
        "rnnt_loss": rnnt,
        "distill_loss": distill,
        "total_loss": total,
        "sparsity": {name: m.sparsity for name, m in sorted(masks.items())},
        "dev_ter": dev_ter,
        "backbone": "toy-tanh-rnn",
    }


def run_train(
    cfg: RunConfig,
    data_dir: str | Path,
    out_dir: str | Path | None = None,
    teacher_path: str | Path | None = None,
) -> TrainResult:
    """Train per the config; write metrics.jsonl and the best-dev checkpoint.

    The best checkpoint is the eval point with the lowest dev TER (earliest
    step on ties).  A non-finite loss aborts the run, keeps the last good
    checkpoint on disk, and raises ``TrainingDivergedError``.
    """
    t_start = time.perf_counter()
    train_set = load_split(data_dir, "train")
    dev_set = load_split(data_dir, "dev")
    vocab = Vocab(cfg.model.vocab_size)
    if cfg.task.vocab_size != cfg.model.vocab_size:
        raise ConfigError(
            f"task vocab {cfg.task.vocab_size} != model vocab {cfg.model.vocab_size}"
        )

    teacher: TeacherLattices | None = None
    if teacher_path is not None:
        t_ckpt = load_checkpoint(teacher_path)
        if t_ckpt.config.vocab_size != cfg.model.vocab_size:
            raise ConfigError(
                f"teacher vocab {t_ckpt.config.vocab_size} != student vocab {cfg.model.vocab_size}"
            )
        teacher = TeacherLattices(t_ckpt.params, cfg.distill.mode)

    if cfg.init_from_teacher:
        if teacher is None:
            raise ConfigError("init_from_teacher requires a teacher checkpoint")
        params, _report = init_student_from_teacher(teacher.params, cfg.model, seed=cfg.model.seed)
    else:
        params = init_params(cfg.model)
    momentum_state = zero_momentum(params)

    masks: dict[str, BlockMask] = {}
    for group in cfg.prune_groups:
        for name in group.params:
            masks[name] = all_ones_mask(params[name].shape)

    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(cfg.seed)
    n_train = len(train_set)
    records: list[dict] = []
    best: _EvalSnapshot | None = None
    last_good: _EvalSnapshot = _EvalSnapshot(0, math.inf, dict(params), dict(masks))

    def _write_outputs(snapshot: _EvalSnapshot) -> tuple[Path | None, Path | None]:
        if out is None:
            return None, None
        ckpt_path = out / "checkpoint.json"
        metrics_path = out / "metrics.jsonl"
        save_checkpoint(
            ckpt_path,
            Checkpoint(cfg.model, snapshot.params, snapshot.masks, snapshot.step),
        )
        write_jsonl(metrics_path, records)
        return ckpt_path, metrics_path

    for step in range(1, cfg.optimizer.steps + 1):
        batch_idx = rng.integers(0, n_train, size=cfg.optimizer.batch_size)
        nlls, dlosses = [], []
        batch_grads: ModelParams | None = None
        for i in batch_idx:
            utt = _utterance_pass(params, train_set[i], vocab, cfg.distill, teacher, int(i))
            nlls.append(utt.nll)
            dlosses.append(utt.distill)
            if batch_grads is None:
                batch_grads = utt.grads
            else:
                for name in batch_grads:
                    batch_grads[name] += utt.grads[name]
        assert batch_grads is not None
        scale = 1.0 / cfg.optimizer.batch_size
        for name in batch_grads:
            batch_grads[name] *= scale
        rnnt_loss_val = float(np.mean(nlls))
        distill_loss_val = float(np.mean(dlosses))
        total = combined_loss(rnnt_loss_val, distill_loss_val, cfg.distill) \
            if math.isfinite(rnnt_loss_val) and math.isfinite(distill_loss_val) else math.nan

        if not math.isfinite(total):
            _write_outputs(last_good)
            raise TrainingDivergedError(
                f"non-finite loss at step {step}: rnnt={rnnt_loss_val}, distill={distill_loss_val}"
            )

        for group in cfg.prune_groups:
            if is_update_step(group.schedule, step):
                tgt = target_sparsity(group.schedule, step)
                for name in group.params:
                    sal = block_saliency(params[name], batch_grads[name])
                    masks[name] = update_mask(sal, tgt)

        lr = cfg.optimizer.lr
        if cfg.optimizer.warmup > 0:
            lr *= min(1.0, step / cfg.optimizer.warmup)
        params, momentum_state = sgd_step(
            params, batch_grads, lr, momentum_state, cfg.optimizer.momentum
        )
        for name, mask in masks.items():
            params[name] = apply_mask(params[name], mask)

        if step % cfg.eval_every == 0 or step == cfg.optimizer.steps:
            report = evaluate_model(params, dev_set, cfg.max_symbols_per_frame)
            records.append(
                _metrics_record(step, rnnt_loss_val, distill_loss_val, total, masks, report.ter)
            )
            snap = _EvalSnapshot(step, report.ter, dict(params), dict(masks))
            last_good = snap
            if best is None or snap.dev_ter < best.dev_ter:
                best = snap

    assert best is not None
    ckpt_path, metrics_path = _write_outputs(best)
    return TrainResult(
        checkpoint=Checkpoint(cfg.model, best.params, best.masks, best.step),
        metrics=records,
        best_step=best.step,
        best_dev_ter=best.dev_ter,
        wall_seconds=time.perf_counter() - t_start,
        checkpoint_path=ckpt_path,
        metrics_path=metrics_path,
    )
