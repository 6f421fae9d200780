"""Gradual block-structured pruning: schedule, saliency, masks.

Pruning operates on 16x1 blocks (16 consecutive rows of one column) by
default.  Rows that do not fill a final block form a partial block that is
never pruned, so no real weight dies to a shape technicality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BLOCK_SHAPE = (16, 1)


@dataclass(frozen=True)
class SparsitySchedule:
    """Cubic ramp from ``s_initial`` at ``start_step`` to ``s_final`` at ``end_step``."""

    s_initial: float
    s_final: float
    start_step: int
    end_step: int
    update_interval: int = 100

    def __post_init__(self) -> None:
        if not 0.0 <= self.s_initial <= self.s_final <= 1.0:
            raise ValueError(
                f"need 0 <= s_initial <= s_final <= 1, got {self.s_initial}, {self.s_final}"
            )
        if self.s_initial >= 1.0:
            raise ValueError("s_initial must be < 1")
        if not 0 <= self.start_step < self.end_step:
            raise ValueError(f"need 0 <= start_step < end_step, got {self.start_step}, {self.end_step}")
        if self.update_interval < 1:
            raise ValueError("update_interval must be >= 1")


def target_sparsity(sched: SparsitySchedule, step: int) -> float:
    """Scheduled pruned fraction at ``step``; non-decreasing, cubic in between."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if step <= sched.start_step:
        return sched.s_initial
    if step >= sched.end_step:
        return sched.s_final
    frac = (step - sched.start_step) / (sched.end_step - sched.start_step)
    return sched.s_final + (sched.s_initial - sched.s_final) * (1.0 - frac) ** 3


def is_update_step(sched: SparsitySchedule, step: int) -> bool:
    """Masks are refreshed on interval boundaries within the ramp, and at its end."""
    if step < sched.start_step or step > sched.end_step:
        return False
    if step == sched.end_step:
        return True
    return (step - sched.start_step) % sched.update_interval == 0


@dataclass(frozen=True)
class BlockSaliency:
    """Per-block importance scores for one weight matrix.

    ``scores`` has one entry per (row-block, column-block) cell, flattened
    C-order for tie-breaking purposes.  ``prunable`` is False for partial
    edge blocks.
    """

    scores: np.ndarray
    prunable: np.ndarray
    matrix_shape: tuple[int, int]
    block_shape: tuple[int, int]

    @property
    def block_count(self) -> int:
        return self.scores.size


def _block_grid(shape: tuple[int, int], block_shape: tuple[int, int]) -> tuple[int, int]:
    bh, bw = block_shape
    return -(-shape[0] // bh), -(-shape[1] // bw)


def block_saliency(
    weights: np.ndarray,
    grads: np.ndarray,
    block_shape: tuple[int, int] = DEFAULT_BLOCK_SHAPE,
) -> BlockSaliency:
    """Score each block by the summed |weight * gradient| of its elements."""
    w = np.asarray(weights, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    if w.shape != g.shape:
        raise ValueError(f"weights {w.shape} and grads {g.shape} differ in shape")
    if w.ndim != 2:
        raise ValueError(f"saliency needs a matrix, got shape {w.shape}")
    bh, bw = block_shape
    rows, cols = w.shape
    nbr, nbc = _block_grid(w.shape, block_shape)
    elem = np.abs(w * g)
    padded = np.zeros((nbr * bh, nbc * bw))
    padded[:rows, :cols] = elem
    scores = padded.reshape(nbr, bh, nbc, bw).sum(axis=(1, 3))

    prunable = np.ones((nbr, nbc), dtype=bool)
    if rows % bh:
        prunable[-1, :] = False
    if cols % bw:
        prunable[:, -1] = False
    return BlockSaliency(scores, prunable, (rows, cols), (bh, bw))


@dataclass(frozen=True)
class BlockMask:
    """Binary keep/prune matrix, constant within each block (0 = pruned)."""

    bits: np.ndarray
    block_shape: tuple[int, int]

    def __post_init__(self) -> None:
        b = np.asarray(self.bits, dtype=np.uint8).copy()
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def sparsity(self) -> float:
        return 1.0 - float(self.bits.mean())


def all_ones_mask(shape: tuple[int, int], block_shape: tuple[int, int] = DEFAULT_BLOCK_SHAPE) -> BlockMask:
    return BlockMask(np.ones(shape, dtype=np.uint8), block_shape)


def update_mask(saliency: BlockSaliency, target: float) -> BlockMask:
    """Prune the floor(target * block_count) lowest-scoring blocks.

    Ties break toward the lower flat block index, so identical inputs always
    produce the identical mask.  Partial edge blocks are exempt.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"target sparsity must lie in [0, 1], got {target}")
    nbr, nbc = saliency.scores.shape
    n_prune = int(target * saliency.block_count)
    flat_scores = saliency.scores.reshape(-1)
    flat_prunable = saliency.prunable.reshape(-1)

    order = np.argsort(flat_scores, kind="stable")
    order = order[flat_prunable[order]]
    pruned = order[:n_prune]

    keep = np.ones(saliency.block_count, dtype=np.uint8)
    keep[pruned] = 0
    keep = keep.reshape(nbr, nbc)

    bh, bw = saliency.block_shape
    rows, cols = saliency.matrix_shape
    bits = np.repeat(np.repeat(keep, bh, axis=0), bw, axis=1)[:rows, :cols]
    return BlockMask(bits, saliency.block_shape)


def apply_mask(weights: np.ndarray, mask: BlockMask) -> np.ndarray:
    """Zero the pruned entries; idempotent."""
    w = np.asarray(weights)
    if w.shape != mask.bits.shape:
        raise ValueError(f"weights {w.shape} and mask {mask.bits.shape} differ in shape")
    return w * mask.bits
