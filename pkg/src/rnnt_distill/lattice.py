"""Output probability lattice: data model, stable softmax, coarse-graining.

The lattice is a T x (L+1) grid of token distributions. Frames are indexed
t = 0..T-1, label rows u = 0..L.  A horizontal move from (t, u) emits blank
and consumes a frame; a vertical move emits label ``labels[u]`` (the next
label above row u).  Row u = L is the top row: no next label exists there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_ZERO = float("-inf")

# Remainder probabilities at or below this are treated as exactly zero and
# stored as the -inf sentinel (naive 1 - P_y - P_blank underflows there).
REST_CLAMP = 1e-12

_NORM_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Vocab:
    """Token inventory of size ``size`` with a distinguished blank token."""

    size: int
    blank_id: int = 0

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ValueError(f"vocab size must be >= 2, got {self.size}")
        if not 0 <= self.blank_id < self.size:
            raise ValueError(f"blank_id {self.blank_id} out of range for size {self.size}")


@dataclass(frozen=True)
class TargetSequence:
    """Label sequence defining the lattice's vertical transitions.

    Labels are stored bottom-to-top: the vertical move out of row u emits
    ``labels[u]``.  Blank never appears among the labels.
    """

    labels: tuple[int, ...]
    vocab: Vocab

    def __init__(self, labels, vocab: Vocab):
        object.__setattr__(self, "labels", tuple(int(x) for x in labels))
        object.__setattr__(self, "vocab", vocab)
        for i, lab in enumerate(self.labels):
            if lab == vocab.blank_id:
                raise ValueError(f"label at position {i} is the blank token")
            if not 0 <= lab < vocab.size:
                raise ValueError(f"label {lab} at position {i} out of range for K={vocab.size}")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class LogitLattice:
    """Raw joint-network outputs, shape (T, L+1, K).  All entries finite."""

    logits: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.logits, dtype=np.float64)
        if a.ndim != 3:
            raise ValueError(f"logit lattice must be 3-d (T, L+1, K), got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[2] < 2:
            raise ValueError(f"need T >= 1 and K >= 2, got shape {a.shape}")
        bad = ~np.isfinite(a)
        if bad.any():
            t, u, k = (int(i[0]) for i in np.nonzero(bad))
            raise ValueError(f"non-finite logit at node (t={t}, u={u}), token {k}")
        object.__setattr__(self, "logits", _readonly(a))

    @property
    def frames(self) -> int:
        return self.logits.shape[0]

    @property
    def rows(self) -> int:
        return self.logits.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.logits.shape[2]


@dataclass(frozen=True)
class ProbLattice:
    """Per-node log-probabilities log P(k | t, u), normalized within 1e-9."""

    log_probs: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.log_probs, dtype=np.float64)
        if a.ndim != 3:
            raise ValueError(f"prob lattice must be 3-d (T, L+1, K), got shape {a.shape}")
        with np.errstate(divide="ignore"):
            m = np.max(a, axis=2)
            norm = m + np.log(np.sum(np.exp(a - m[:, :, None]), axis=2))
        if not np.all(np.abs(norm) <= _NORM_TOL):
            t, u = (int(i[0]) for i in np.nonzero(np.abs(norm) > _NORM_TOL))
            raise ValueError(f"node (t={t}, u={u}) not normalized: logsumexp = {norm[t, u]:.3e}")
        object.__setattr__(self, "log_probs", _readonly(a))

    @property
    def frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def rows(self) -> int:
        return self.log_probs.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.log_probs.shape[2]


@dataclass(frozen=True)
class CoarseLattice:
    """Per-node (next-label, blank, rest) log-probabilities, shape (T, L+1).

    On the top row (u = L) no next label exists: ``log_y`` is -inf there and
    (blank, rest) forms a two-category distribution.
    """

    log_y: np.ndarray
    log_blank: np.ndarray
    log_rest: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.log_y, dtype=np.float64)
        b = np.asarray(self.log_blank, dtype=np.float64)
        r = np.asarray(self.log_rest, dtype=np.float64)
        if not (y.ndim == 2 and y.shape == b.shape == r.shape):
            raise ValueError(
                f"coarse lattice components must share a 2-d shape, got {y.shape}, {b.shape}, {r.shape}"
            )
        total = np.exp(y) + np.exp(b) + np.exp(r)
        if not np.all(np.abs(total - 1.0) <= _NORM_TOL):
            t, u = (int(i[0]) for i in np.nonzero(np.abs(total - 1.0) > _NORM_TOL))
            raise ValueError(f"coarse node (t={t}, u={u}) sums to {total[t, u]!r}, expected 1")
        if not np.all(y[:, -1] == LOG_ZERO):
            raise ValueError("top row must carry the -inf next-label sentinel")
        object.__setattr__(self, "log_y", _readonly(y))
        object.__setattr__(self, "log_blank", _readonly(b))
        object.__setattr__(self, "log_rest", _readonly(r))

    @property
    def frames(self) -> int:
        return self.log_y.shape[0]

    @property
    def rows(self) -> int:
        return self.log_y.shape[1]


def log1mexp(x: np.ndarray) -> np.ndarray:
    """log(1 - exp(x)) for x <= 0, stable at both ends of the range."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = x < -np.log(2.0)  # exp(x) < 1/2: log1p is exact enough
    with np.errstate(divide="ignore", invalid="ignore"):
        out[small] = np.log1p(-np.exp(x[small]))
        out[~small] = np.log(-np.expm1(x[~small]))
    out[x == LOG_ZERO] = 0.0
    return out


def softmax_lattice(logits: LogitLattice) -> ProbLattice:
    """Per-node log-softmax over tokens, stabilized by max subtraction."""
    h = logits.logits
    m = np.max(h, axis=2, keepdims=True)
    shifted = h - m
    lse = np.log(np.sum(np.exp(shifted), axis=2, keepdims=True))
    return ProbLattice(shifted - lse)


def coarse_grain(probs: ProbLattice, target: TargetSequence) -> CoarseLattice:
    """Lump each node's K-way distribution into (next-label, blank, rest).

    For u < L: P_y = P(labels[u] | t, u), P_blank = P(blank | t, u) and
    P_rest is their complement, computed in log space.  The top row keeps
    only (blank, rest).  Rest probabilities below ``REST_CLAMP`` collapse to
    the -inf sentinel.
    """
    L = len(target)
    if probs.rows != L + 1:
        raise ValueError(f"prob lattice has {probs.rows} rows, target needs {L + 1}")
    lp = probs.log_probs
    T = probs.frames
    blank = target.vocab.blank_id

    log_y = np.full((T, L + 1), LOG_ZERO)
    if L > 0:
        cols = np.asarray(target.labels, dtype=np.intp)
        log_y[:, :L] = lp[:, np.arange(L), cols]
    log_blank = lp[:, :, blank].copy()

    # log(1 - P_y - P_blank) via the stable complement of logaddexp(y, blank);
    # the top row has no y mass, so its complement is of blank alone.
    with np.errstate(invalid="ignore"):
        log_known = np.logaddexp(log_y, log_blank)
    log_known = np.minimum(log_known, 0.0)
    log_rest = log1mexp(log_known)
    rest_prob = np.exp(log_rest)
    log_rest[rest_prob <= REST_CLAMP] = LOG_ZERO
    return CoarseLattice(log_y, log_blank, log_rest)
