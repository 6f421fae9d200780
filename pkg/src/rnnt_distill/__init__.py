"""Transducer lattice losses, coarse-grained distillation, block-sparse pruning."""

from .distill import (
    DistillConfig,
    InfiniteKLError,
    coarse_kl_grad_student_logits,
    coarse_kl_loss,
    combined_loss,
    full_kl_grad_student_logits,
    full_kl_loss,
    memory_estimate,
)
from .lattice import (
    LOG_ZERO,
    CoarseLattice,
    LogitLattice,
    ProbLattice,
    TargetSequence,
    Vocab,
    coarse_grain,
    softmax_lattice,
)
from .model import (
    ModelConfig,
    backward_params,
    decode_greedy,
    forward_lattice,
    init_params,
    init_student_from_teacher,
    sgd_step,
)
from .rnnt_loss import (
    AlphaBeta,
    enumerate_paths_nll,
    forward_backward,
    iter_alignment_paths,
    rnnt_grad_logits,
    rnnt_nll,
)
from .sparsity import (
    BlockMask,
    SparsitySchedule,
    apply_mask,
    block_saliency,
    target_sparsity,
    update_mask,
)

__all__ = [
    "AlphaBeta",
    "BlockMask",
    "CoarseLattice",
    "DistillConfig",
    "InfiniteKLError",
    "LOG_ZERO",
    "LogitLattice",
    "ModelConfig",
    "ProbLattice",
    "SparsitySchedule",
    "TargetSequence",
    "Vocab",
    "apply_mask",
    "backward_params",
    "block_saliency",
    "coarse_grain",
    "coarse_kl_grad_student_logits",
    "coarse_kl_loss",
    "combined_loss",
    "decode_greedy",
    "enumerate_paths_nll",
    "forward_backward",
    "forward_lattice",
    "full_kl_grad_student_logits",
    "full_kl_loss",
    "init_params",
    "init_student_from_teacher",
    "iter_alignment_paths",
    "memory_estimate",
    "rnnt_grad_logits",
    "rnnt_nll",
    "sgd_step",
    "softmax_lattice",
    "target_sparsity",
    "update_mask",
]
