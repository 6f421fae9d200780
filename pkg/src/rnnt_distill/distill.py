"""Lattice distillation losses: full K-way KL and the coarse 3-way variant.

The full loss sums KL(teacher || student) over every lattice node's token
distribution and therefore touches O(T * U * K) values.  The coarse loss
first lumps each node into (next-label, blank, rest) and costs O(T * U),
independent of the vocabulary; the teacher side only ever enters as a
3-channel lattice.  Teacher quantities are constants: no gradient flows to
them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import LOG_ZERO, CoarseLattice, ProbLattice, TargetSequence, coarse_grain


@dataclass(frozen=True)
class DistillConfig:
    """Weight and flavor of the distillation term added to the base loss."""

    beta: float = 1e-3
    mode: str = "coarse"

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.mode not in ("full", "coarse"):
            raise ValueError(f"mode must be 'full' or 'coarse', got {self.mode!r}")


class InfiniteKLError(ValueError):
    """Teacher puts mass where the student has exactly none.

    Carries the first offending node and category; the loss value there is
    +inf, which signals degenerate student support rather than a number the
    training loop could use.
    """

    def __init__(self, t: int, u: int, category: str):
        self.t = t
        self.u = u
        self.category = category
        super().__init__(
            f"infinite KL at node (t={t}, u={u}): teacher mass on {category!r} "
            "but student probability is zero"
        )


def full_kl_loss(teacher: ProbLattice, student: ProbLattice) -> float:
    """Sum over all nodes and tokens of P~ * (log P~ - log P)."""
    if teacher.log_probs.shape != student.log_probs.shape:
        raise ValueError(
            f"shape mismatch: teacher {teacher.log_probs.shape}, student {student.log_probs.shape}"
        )
    tl, sl = teacher.log_probs, student.log_probs
    tp = np.exp(tl)
    with np.errstate(invalid="ignore"):
        diff = np.where(tp > 0.0, tl - sl, 0.0)  # 0 * log 0 := 0
    return float(np.sum(tp * diff))


def full_kl_grad_student_logits(teacher: ProbLattice, student: ProbLattice) -> np.ndarray:
    """Gradient w.r.t. student logits: -(P~ - P), elementwise."""
    if teacher.log_probs.shape != student.log_probs.shape:
        raise ValueError(
            f"shape mismatch: teacher {teacher.log_probs.shape}, student {student.log_probs.shape}"
        )
    return np.exp(student.log_probs) - np.exp(teacher.log_probs)


def _coarse_channels(lat: CoarseLattice) -> np.ndarray:
    return np.stack([lat.log_y, lat.log_blank, lat.log_rest])


_CATEGORY_NAMES = ("y", "blank", "rest")


def coarse_kl_loss(teacher: CoarseLattice, student: CoarseLattice) -> float:
    """Sum over nodes of the 3-way (2-way on the top row) KL to the teacher.

    Categories with zero teacher mass contribute nothing.  Zero student mass
    under positive teacher mass makes the loss infinite and raises
    ``InfiniteKLError`` naming the node.
    """
    if teacher.log_y.shape != student.log_y.shape:
        raise ValueError(
            f"shape mismatch: teacher {teacher.log_y.shape}, student {student.log_y.shape}"
        )
    tl = _coarse_channels(teacher)
    sl = _coarse_channels(student)
    support = tl > LOG_ZERO
    degenerate = support & (sl == LOG_ZERO)
    if degenerate.any():
        c, t, u = (int(i[0]) for i in np.nonzero(degenerate))
        raise InfiniteKLError(t, u, _CATEGORY_NAMES[c])
    tp = np.exp(tl)
    with np.errstate(invalid="ignore"):
        diff = np.where(support, tl - sl, 0.0)
    return float(np.sum(tp * diff))


def coarse_kl_grad_student_logits(
    teacher: CoarseLattice,
    student_probs: ProbLattice,
    target: TargetSequence,
) -> np.ndarray:
    """Exact gradient of the coarse KL w.r.t. the student's K-way logits.

    Chain rule through coarse-graining and the softmax gives, per node,
    dL/dh_k = P(k) * (1 - T_c / S_c) where c is the coarse category owning
    token k.  Tokens in the same category share the factor (1 - T_c / S_c),
    so each node's gradient sums to zero.
    """
    student = coarse_grain(student_probs, target)
    if teacher.log_y.shape != student.log_y.shape:
        raise ValueError(
            f"shape mismatch: teacher {teacher.log_y.shape}, student rows {student.log_y.shape}"
        )
    tl = _coarse_channels(teacher)
    sl = _coarse_channels(student)
    support = tl > LOG_ZERO
    degenerate = support & (sl == LOG_ZERO)
    if degenerate.any():
        c, t, u = (int(i[0]) for i in np.nonzero(degenerate))
        raise InfiniteKLError(t, u, _CATEGORY_NAMES[c])
    # ratio T_c / S_c per channel; zero-teacher channels contribute nothing.
    with np.errstate(invalid="ignore"):
        ratio = np.where(support, np.exp(tl - sl), 0.0)

    T, U = teacher.frames, teacher.rows
    L = U - 1
    blank = target.vocab.blank_id
    probs = np.exp(student_probs.log_probs)

    factor = np.empty((T, U, probs.shape[2]))
    factor[:] = (1.0 - ratio[2])[:, :, None]  # rest is the default category
    factor[:, :, blank] = 1.0 - ratio[1]
    if L > 0:
        cols = np.asarray(target.labels, dtype=np.intp)
        rows = np.arange(L)
        factor[:, rows, cols] = (1.0 - ratio[0])[:, :L]
    return probs * factor


def combined_loss(nll: float, distill: float, cfg: DistillConfig) -> float:
    """Total training objective: base loss plus beta times the distill term."""
    if not (math.isfinite(nll) and math.isfinite(distill)):
        raise ValueError(f"loss terms must be finite, got nll={nll}, distill={distill}")
    return nll + cfg.beta * distill


def memory_estimate(
    frames: int,
    rows: int,
    vocab_size: int,
    bytes_per_value: int,
    batch: int = 1,
    mode: str = "full",
) -> int:
    """Bytes needed to hold teacher and student lattices for the KL loss.

    Full mode: batch * 2 * rows * frames * K * bytes.  Coarse mode replaces
    K by the 3 lumped channels.  Python integers are unbounded; results past
    2**63 are refused so downstream fixed-width consumers cannot overflow.
    """
    if min(frames, rows, vocab_size, bytes_per_value, batch) <= 0:
        raise ValueError("all memory-estimate arguments must be positive")
    if mode == "full":
        width = vocab_size
    elif mode == "coarse":
        width = 3
    else:
        raise ValueError(f"mode must be 'full' or 'coarse', got {mode!r}")
    total = batch * 2 * rows * frames * width * bytes_per_value
    if total >= 2**63:
        raise OverflowError(f"memory estimate {total} exceeds 2**63 - 1 bytes")
    return total
