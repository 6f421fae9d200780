"""Finite-difference verification of every analytic gradient path.

Each suite compares an analytic gradient against central differences on a
sample of coordinates.  Relative error uses a small denominator floor so
coordinates with near-zero true gradient measure FD noise, not a ratio of
noise to noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distill import (
    coarse_kl_grad_student_logits,
    coarse_kl_loss,
    full_kl_grad_student_logits,
    full_kl_loss,
)
from .lattice import LogitLattice, TargetSequence, Vocab, coarse_grain, softmax_lattice
from .model import ModelConfig, backward_params, forward_lattice, init_params
from .rnnt_loss import forward_backward, rnnt_grad_logits, rnnt_nll

FD_STEP = 1e-5
REL_TOL = 1e-4
_DENOM_FLOOR = 1e-4


@dataclass(frozen=True)
class SuiteResult:
    name: str
    max_rel_err: float
    coords: int
    tol: float = REL_TOL

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


@dataclass(frozen=True)
class GradCheckReport:
    suites: tuple[SuiteResult, ...]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)


def _rel_err(analytic: float, fd: float) -> float:
    return abs(analytic - fd) / max(abs(analytic) + abs(fd), _DENOM_FLOOR)


def _check_coords(loss_fn, analytic: np.ndarray, x: np.ndarray, coords, h: float = FD_STEP) -> float:
    worst = 0.0
    for idx in coords:
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        fd = (loss_fn(xp) - loss_fn(xm)) / (2.0 * h)
        worst = max(worst, _rel_err(float(analytic[idx]), fd))
    return worst


def _random_case(rng: np.random.Generator, T: int, L: int, K: int):
    vocab = Vocab(K)
    target = TargetSequence(rng.integers(1, K, size=L), vocab)
    logits = rng.normal(scale=1.5, size=(T, L + 1, K))
    return target, logits


def _sample_coords(rng: np.random.Generator, shape: tuple[int, ...], n: int):
    flat = rng.choice(int(np.prod(shape)), size=min(n, int(np.prod(shape))), replace=False)
    return [np.unravel_index(int(i), shape) for i in flat]


def check_rnnt_grad(
    seed: int, T: int = 4, L: int = 3, K: int = 5, n_coords: int = 50, perturb: bool = False
) -> SuiteResult:
    rng = np.random.default_rng(seed)
    target, logits = _random_case(rng, T, L, K)

    def loss(h: np.ndarray) -> float:
        coarse = coarse_grain(softmax_lattice(LogitLattice(h)), target)
        return rnnt_nll(coarse)

    probs = softmax_lattice(LogitLattice(logits))
    coarse = coarse_grain(probs, target)
    ab = forward_backward(coarse)
    analytic = _maybe_perturb(rnnt_grad_logits(probs, coarse, ab, target), perturb)
    coords = _sample_coords(rng, logits.shape, n_coords)
    return SuiteResult("rnnt", _check_coords(loss, analytic, logits, coords), len(coords))


def check_full_kl_grad(
    seed: int, T: int = 3, L: int = 2, K: int = 5, n_coords: int = 50, perturb: bool = False
) -> SuiteResult:
    rng = np.random.default_rng(seed)
    target, student_logits = _random_case(rng, T, L, K)
    teacher = softmax_lattice(LogitLattice(rng.normal(scale=1.5, size=student_logits.shape)))

    def loss(h: np.ndarray) -> float:
        return full_kl_loss(teacher, softmax_lattice(LogitLattice(h)))

    analytic = _maybe_perturb(
        full_kl_grad_student_logits(teacher, softmax_lattice(LogitLattice(student_logits))), perturb
    )
    coords = _sample_coords(rng, student_logits.shape, n_coords)
    return SuiteResult("full-kl", _check_coords(loss, analytic, student_logits, coords), len(coords))


def check_coarse_kl_grad(
    seed: int, T: int = 3, L: int = 2, K: int = 5, n_coords: int = 50, perturb: bool = False
) -> SuiteResult:
    rng = np.random.default_rng(seed)
    target, student_logits = _random_case(rng, T, L, K)
    t_probs = softmax_lattice(LogitLattice(rng.normal(scale=1.5, size=student_logits.shape)))
    t_coarse = coarse_grain(t_probs, target)

    def loss(h: np.ndarray) -> float:
        student = coarse_grain(softmax_lattice(LogitLattice(h)), target)
        return coarse_kl_loss(t_coarse, student)

    analytic = _maybe_perturb(
        coarse_kl_grad_student_logits(t_coarse, softmax_lattice(LogitLattice(student_logits)), target),
        perturb,
    )
    coords = _sample_coords(rng, student_logits.shape, n_coords)
    return SuiteResult("coarse-kl", _check_coords(loss, analytic, student_logits, coords), len(coords))


def _flatten_params(params: dict[str, np.ndarray]) -> tuple[np.ndarray, dict[str, slice]]:
    slices: dict[str, slice] = {}
    chunks = []
    offset = 0
    for name, p in params.items():
        slices[name] = slice(offset, offset + p.size)
        chunks.append(p.reshape(-1))
        offset += p.size
    return np.concatenate(chunks), slices


def _unflatten(vec: np.ndarray, template: dict[str, np.ndarray], slices: dict[str, slice]):
    return {name: vec[slices[name]].reshape(p.shape) for name, p in template.items()}


def check_end_to_end_grad(
    seed: int,
    mode: str = "coarse",
    beta: float = 0.5,
    T: int = 4,
    L: int = 3,
    K: int = 4,
    hidden: int = 5,
    n_coords: int = 30,
    perturb: bool = False,
) -> SuiteResult:
    """Parameter gradients of the combined objective on the toy network."""
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(K, K, hidden, hidden, hidden, hidden, seed=seed)
    params = init_params(cfg)
    vocab = Vocab(K)
    target = TargetSequence(rng.integers(1, K, size=L), vocab)
    features = rng.normal(size=(T, K))

    teacher = None
    if beta > 0:
        t_params = init_params(cfg, seed=seed + 101)
        t_logits, _ = forward_lattice(t_params, features, target)
        teacher = softmax_lattice(t_logits)
    t_coarse = coarse_grain(teacher, target) if teacher is not None else None

    def loss_from_params(p) -> float:
        logits, _ = forward_lattice(p, features, target)
        probs = softmax_lattice(logits)
        coarse = coarse_grain(probs, target)
        total = rnnt_nll(coarse)
        if teacher is not None:
            if mode == "coarse":
                total += beta * coarse_kl_loss(t_coarse, coarse)
            else:
                total += beta * full_kl_loss(teacher, probs)
        return total

    logits, cache = forward_lattice(params, features, target)
    probs = softmax_lattice(logits)
    coarse = coarse_grain(probs, target)
    ab = forward_backward(coarse)
    lat_grad = rnnt_grad_logits(probs, coarse, ab, target)
    if teacher is not None:
        if mode == "coarse":
            lat_grad = lat_grad + beta * coarse_kl_grad_student_logits(t_coarse, probs, target)
        else:
            lat_grad = lat_grad + beta * full_kl_grad_student_logits(teacher, probs)
    grads = backward_params(params, cache, lat_grad)

    vec, slices = _flatten_params(params)
    analytic_vec, _ = _flatten_params(grads)
    analytic_vec = _maybe_perturb(analytic_vec, perturb)

    def loss(v: np.ndarray) -> float:
        return loss_from_params(_unflatten(v, params, slices))

    coords = [(int(i),) for i in rng.choice(vec.size, size=n_coords, replace=False)]
    name = "end-to-end" if beta == 0 else f"end-to-end-{mode}"
    return SuiteResult(name, _check_coords(loss, analytic_vec, vec, coords), len(coords))


def _maybe_perturb(analytic: np.ndarray, perturb: bool) -> np.ndarray:
    # Negative control: a deliberately wrong gradient must make the suite fail.
    return analytic + 0.05 if perturb else analytic


def run_gradcheck(seed: int = 0, perturb: bool = False) -> GradCheckReport:
    """All suites; ``perturb`` breaks the analytic gradients as a negative control."""
    suites = [
        check_rnnt_grad(seed, perturb=perturb),
        check_full_kl_grad(seed + 1, perturb=perturb),
        check_coarse_kl_grad(seed + 2, perturb=perturb),
        check_end_to_end_grad(seed + 3, beta=0.0, perturb=perturb),
        check_end_to_end_grad(seed + 4, mode="coarse", perturb=perturb),
        check_end_to_end_grad(seed + 5, mode="full", perturb=perturb),
    ]
    return GradCheckReport(tuple(suites))
