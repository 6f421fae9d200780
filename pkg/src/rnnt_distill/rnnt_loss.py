"""Transducer negative log-likelihood via forward-backward, plus oracles.

All path arithmetic runs on the coarse (next-label, blank) transition
probabilities.  A complete alignment walks from node (0, 0) to (T-1, L)
with T-1 horizontal (blank) moves and L vertical (label) moves, then emits
one final blank at (T-1, L).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator

import numpy as np

from .lattice import LOG_ZERO, CoarseLattice, ProbLattice, TargetSequence

MAX_ORACLE_PATHS = 10**6

HORIZONTAL = "blank"
VERTICAL = "label"


@dataclass(frozen=True)
class AlphaBeta:
    """Forward/backward log partial-path sums over the (T, L+1) grid.

    ``log_alpha[t, u]`` sums paths from the origin into (t, u);
    ``log_beta[t, u]`` sums paths from (t, u) to termination, including the
    emission taken at (t, u) itself.
    """

    log_alpha: np.ndarray
    log_beta: np.ndarray


def _lse2(a: float, b: float) -> float:
    if a == LOG_ZERO:
        return b
    if b == LOG_ZERO:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def forward_backward(coarse: CoarseLattice) -> AlphaBeta:
    """Log-space forward-backward recursion over the coarse lattice.

    alpha(0, 0) = 1.  alpha(t, u) collects the horizontal arrival from
    (t-1, u) weighted by that node's blank probability, and the vertical
    arrival from (t, u-1) weighted by its next-label probability.  beta runs
    the mirror-image recursion from beta(T-1, L) = blank(T-1, L).
    Out-of-range terms contribute zero probability.
    """
    T, U = coarse.frames, coarse.rows
    lb = coarse.log_blank.tolist()
    ly = coarse.log_y.tolist()

    alpha = [[LOG_ZERO] * U for _ in range(T)]
    alpha[0][0] = 0.0
    for t in range(T):
        at = alpha[t]
        for u in range(U):
            if t == 0 and u == 0:
                continue
            h = alpha[t - 1][u] + lb[t - 1][u] if t > 0 else LOG_ZERO
            v = at[u - 1] + ly[t][u - 1] if u > 0 else LOG_ZERO
            at[u] = _lse2(h, v)

    beta = [[LOG_ZERO] * U for _ in range(T)]
    beta[T - 1][U - 1] = lb[T - 1][U - 1]
    for t in range(T - 1, -1, -1):
        bt = beta[t]
        for u in range(U - 1, -1, -1):
            if t == T - 1 and u == U - 1:
                continue
            h = lb[t][u] + beta[t + 1][u] if t < T - 1 else LOG_ZERO
            v = ly[t][u] + bt[u + 1] if u < U - 1 else LOG_ZERO
            bt[u] = _lse2(h, v)

    return AlphaBeta(np.array(alpha), np.array(beta))


def rnnt_nll(coarse: CoarseLattice, ab: AlphaBeta | None = None) -> float:
    """Negative log posterior of the target: -(alpha(T-1, L) + blank(T-1, L))."""
    if ab is None:
        ab = forward_backward(coarse)
    return -(float(ab.log_alpha[-1, -1]) + float(coarse.log_blank[-1, -1]))


def iter_alignment_paths(frames: int, num_labels: int) -> Iterator[tuple[str, ...]]:
    """Yield every monotone move sequence: T-1 horizontal, L vertical moves."""
    n = frames - 1 + num_labels
    for vertical_at in combinations(range(n), num_labels):
        path = [HORIZONTAL] * n
        for i in vertical_at:
            path[i] = VERTICAL
        yield tuple(path)


def enumerate_paths_nll(coarse: CoarseLattice) -> float:
    """Exponential-time oracle: sum path products in linear space.

    Walks every alignment explicitly and adds exact products of transition
    probabilities (times the final blank) with ``math.fsum``.  Refuses
    lattices with more than ``MAX_ORACLE_PATHS`` paths.
    """
    T, U = coarse.frames, coarse.rows
    L = U - 1
    n_paths = math.comb(T - 1 + L, L)
    if n_paths > MAX_ORACLE_PATHS:
        raise ValueError(f"{n_paths} alignment paths exceed the oracle bound {MAX_ORACLE_PATHS}")
    py = np.exp(coarse.log_y).tolist()
    pb = np.exp(coarse.log_blank).tolist()

    totals = []
    for path in iter_alignment_paths(T, L):
        t = u = 0
        p = 1.0
        for move in path:
            if move == VERTICAL:
                p *= py[t][u]
                u += 1
            else:
                p *= pb[t][u]
                t += 1
        totals.append(p * pb[T - 1][L])
    total = math.fsum(totals)
    return -math.log(total) if total > 0.0 else math.inf


def rnnt_grad_logits(
    probs: ProbLattice,
    coarse: CoarseLattice,
    ab: AlphaBeta,
    target: TargetSequence,
) -> np.ndarray:
    """Gradient of the negative log-likelihood w.r.t. the raw logits.

    Per node, d(-log P)/dh_k = P(k|t,u) * gamma(t,u) - g_k(t,u), where
    gamma = alpha*beta/P is the node occupancy and g_k is the posterior mass
    of the transition token k drives (blank moves right, the next label moves
    up; all other tokens drive no transition).  Entries at unreachable nodes
    are zero, and each node's gradient sums to zero.
    """
    T, U = coarse.frames, coarse.rows
    L = U - 1
    la, lbeta = ab.log_alpha, ab.log_beta
    log_p = float(la[-1, -1] + coarse.log_blank[-1, -1])
    if log_p == LOG_ZERO:
        raise ValueError("target sequence has zero probability; gradient undefined")

    gamma = np.exp(la + lbeta - log_p)
    grad = np.exp(probs.log_probs) * gamma[:, :, None]

    g_blank = np.zeros((T, U))
    if T > 1:
        g_blank[:-1, :] = np.exp(la[:-1, :] + coarse.log_blank[:-1, :] + lbeta[1:, :] - log_p)
    g_blank[-1, -1] = np.exp(la[-1, -1] + coarse.log_blank[-1, -1] - log_p)

    blank = target.vocab.blank_id
    grad[:, :, blank] -= g_blank
    if L > 0:
        g_y = np.exp(la[:, :-1] + coarse.log_y[:, :-1] + lbeta[:, 1:] - log_p)
        cols = np.asarray(target.labels, dtype=np.intp)
        rows = np.arange(L)
        grad[:, rows, cols] -= g_y
    return grad
