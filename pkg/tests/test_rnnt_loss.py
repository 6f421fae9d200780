import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnnt_distill.lattice import (
    LOG_ZERO,
    CoarseLattice,
    LogitLattice,
    ProbLattice,
    TargetSequence,
    Vocab,
    coarse_grain,
    softmax_lattice,
)
from rnnt_distill.rnnt_loss import (
    enumerate_paths_nll,
    forward_backward,
    iter_alignment_paths,
    rnnt_grad_logits,
    rnnt_nll,
)


def random_case(rng, T, L, K, scale=1.5):
    vocab = Vocab(K)
    target = TargetSequence(rng.integers(1, K, size=L), vocab)
    logits = rng.normal(scale=scale, size=(T, L + 1, K))
    probs = softmax_lattice(LogitLattice(logits))
    return target, probs, coarse_grain(probs, target)


def uniform_half_coarse(T, L) -> CoarseLattice:
    """Every node: P_y = P_blank = 0.5, except the top row where blank is 1."""
    log_y = np.full((T, L + 1), math.log(0.5))
    log_y[:, L] = LOG_ZERO
    log_blank = np.full((T, L + 1), math.log(0.5))
    log_blank[:, L] = 0.0
    log_rest = np.full((T, L + 1), LOG_ZERO)
    return CoarseLattice(log_y, log_blank, log_rest)


class TestForwardBackward:
    def test_single_node(self):
        rng = np.random.default_rng(0)
        _, _, coarse = random_case(rng, 1, 0, 3)
        ab = forward_backward(coarse)
        assert ab.log_alpha[0, 0] == 0.0
        assert math.isclose(rnnt_nll(coarse, ab), -float(coarse.log_blank[0, 0]), abs_tol=1e-12)

    def test_two_by_two_uniform_by_hand(self):
        # two paths, each 0.5 * 0.5 * 0.5, summing to 0.25
        coarse = uniform_half_coarse(2, 1)
        # make the final node carry blank 0.5 as in the hand computation
        log_blank = np.array([[math.log(0.5), math.log(0.5)], [math.log(0.5), math.log(0.5)]])
        log_y = np.array([[math.log(0.5), LOG_ZERO], [math.log(0.5), LOG_ZERO]])
        log_rest = np.array([[LOG_ZERO, math.log(0.5)], [LOG_ZERO, math.log(0.5)]])
        coarse = CoarseLattice(log_y, log_blank, log_rest)
        ab = forward_backward(coarse)
        assert math.isclose(rnnt_nll(coarse, ab), math.log(4.0), abs_tol=1e-12)
        assert math.isclose(enumerate_paths_nll(coarse), math.log(4.0), abs_tol=1e-12)

    def test_certain_emission_gives_zero_nll(self):
        coarse = CoarseLattice(
            np.full((1, 1), LOG_ZERO), np.zeros((1, 1)), np.full((1, 1), LOG_ZERO)
        )
        assert rnnt_nll(coarse) == 0.0

    def test_forward_equals_backward_at_origin(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            _, _, coarse = random_case(rng, 4, 3, 5)
            ab = forward_backward(coarse)
            assert math.isclose(rnnt_nll(coarse, ab), -float(ab.log_beta[0, 0]), abs_tol=1e-9)

    def test_anti_diagonal_identity(self):
        rng = np.random.default_rng(11)
        T, L = 4, 3
        _, _, coarse = random_case(rng, T, L, 5)
        ab = forward_backward(coarse)
        log_p = float(ab.log_alpha[-1, -1] + coarse.log_blank[-1, -1])
        for c in range(T + L):
            vals = [
                ab.log_alpha[t, u] + ab.log_beta[t, u]
                for t in range(T)
                for u in range(L + 1)
                if t + u == c
            ]
            m = max(vals)
            lse = m + math.log(sum(math.exp(v - m) for v in vals))
            assert math.isclose(lse, log_p, abs_tol=1e-9)
            assert all(v <= log_p + 1e-9 for v in vals)


class TestEnumerationOracle:
    def test_path_count(self):
        assert len(list(iter_alignment_paths(3, 2))) == math.comb(4, 2)

    def test_single_empty_path(self):
        paths = list(iter_alignment_paths(1, 0))
        assert paths == [()]
        rng = np.random.default_rng(2)
        _, _, coarse = random_case(rng, 1, 0, 4)
        assert math.isclose(
            enumerate_paths_nll(coarse), -float(coarse.log_blank[0, 0]), abs_tol=1e-12
        )

    def test_size_bound(self):
        coarse = uniform_half_coarse(40, 20)
        with pytest.raises(ValueError, match="exceed"):
            enumerate_paths_nll(coarse)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(0, 4), st.integers(2, 5))
    @settings(max_examples=150, deadline=None)
    def test_oracle_equivalence(self, seed, T, L, K):
        rng = np.random.default_rng(seed)
        _, _, coarse = random_case(rng, T, L, K)
        dp = rnnt_nll(coarse)
        brute = enumerate_paths_nll(coarse)
        assert math.isclose(dp, brute, rel_tol=1e-10)


class TestGradLogits:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        T, L, K = 4, 3, 5
        vocab = Vocab(K)
        target = TargetSequence(rng.integers(1, K, size=L), vocab)
        logits = rng.normal(scale=1.5, size=(T, L + 1, K))

        def loss(h):
            return rnnt_nll(coarse_grain(softmax_lattice(LogitLattice(h)), target))

        probs = softmax_lattice(LogitLattice(logits))
        coarse = coarse_grain(probs, target)
        ab = forward_backward(coarse)
        grad = rnnt_grad_logits(probs, coarse, ab, target)

        h = 1e-5
        flat = rng.choice(logits.size, size=50, replace=False)
        for f in flat:
            idx = np.unravel_index(int(f), logits.shape)
            hp = logits.copy()
            hp[idx] += h
            hm = logits.copy()
            hm[idx] -= h
            fd = (loss(hp) - loss(hm)) / (2 * h)
            denom = max(abs(fd) + abs(grad[idx]), 1e-4)
            assert abs(fd - grad[idx]) / denom < 1e-4

    def test_zero_gradient_at_unreachable_nodes(self):
        # blocking every blank on row 0 makes (t >= 1, u = 0) unreachable
        rng = np.random.default_rng(23)
        T, L, K = 3, 2, 4
        vocab = Vocab(K)
        target = TargetSequence([1, 2], vocab)
        lp = softmax_lattice(LogitLattice(rng.normal(size=(T, L + 1, K)))).log_probs.copy()
        lp[:, 0, vocab.blank_id] = LOG_ZERO
        # renormalize each row-0 node over the remaining tokens
        m = lp[:, 0, 1:].max(axis=1, keepdims=True)
        lp[:, 0, 1:] -= m + np.log(np.exp(lp[:, 0, 1:] - m).sum(axis=1, keepdims=True))
        probs = ProbLattice(lp)
        coarse = coarse_grain(probs, target)
        ab = forward_backward(coarse)
        grad = rnnt_grad_logits(probs, coarse, ab, target)
        np.testing.assert_array_equal(grad[1:, 0, :], 0.0)
        assert np.any(grad[0, 0, :] != 0.0)

    def test_uniform_k2_antisymmetric(self):
        vocab = Vocab(2)
        target = TargetSequence([1], vocab)
        probs = softmax_lattice(LogitLattice(np.zeros((2, 2, 2))))
        coarse = coarse_grain(probs, target)
        ab = forward_backward(coarse)
        grad = rnnt_grad_logits(probs, coarse, ab, target)
        np.testing.assert_allclose(grad[:, :, 0], -grad[:, :, 1], atol=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_per_node_sum_is_zero(self, seed):
        rng = np.random.default_rng(seed)
        target, probs, coarse = random_case(rng, 4, 2, 5)
        ab = forward_backward(coarse)
        grad = rnnt_grad_logits(probs, coarse, ab, target)
        np.testing.assert_allclose(grad.sum(axis=2), 0.0, atol=1e-8)

    def test_nll_invariant_under_per_node_shift(self):
        rng = np.random.default_rng(31)
        target, _, coarse = random_case(rng, 3, 2, 4)
        logits = rng.normal(size=(3, 3, 4))
        base = rnnt_nll(coarse_grain(softmax_lattice(LogitLattice(logits)), target))
        shifted = logits + rng.normal(size=(3, 3, 1))  # per-node constants
        after = rnnt_nll(coarse_grain(softmax_lattice(LogitLattice(shifted)), target))
        assert math.isclose(base, after, abs_tol=1e-9)
