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
    log1mexp,
    softmax_lattice,
)


def node_lattice(values) -> LogitLattice:
    """Single-node lattice (T=1, L=0) from a plain logit vector."""
    return LogitLattice(np.asarray(values, dtype=float)[None, None, :])


def random_prob_lattice(rng, T, L, K, scale=2.0) -> ProbLattice:
    return softmax_lattice(LogitLattice(rng.normal(scale=scale, size=(T, L + 1, K))))


class TestVocab:
    def test_rejects_tiny_vocab(self):
        with pytest.raises(ValueError):
            Vocab(1)

    def test_rejects_out_of_range_blank(self):
        with pytest.raises(ValueError):
            Vocab(4, blank_id=4)

    def test_default_blank_is_zero(self):
        assert Vocab(5).blank_id == 0


class TestTargetSequence:
    def test_rejects_blank_label(self):
        with pytest.raises(ValueError, match="blank"):
            TargetSequence([1, 0, 2], Vocab(4))

    def test_rejects_out_of_range_label(self):
        with pytest.raises(ValueError):
            TargetSequence([1, 9], Vocab(4))

    def test_empty_target_is_legal(self):
        assert len(TargetSequence([], Vocab(4))) == 0


class TestSoftmaxLattice:
    def test_two_equal_logits_give_half(self):
        probs = softmax_lattice(node_lattice([0.0, 0.0]))
        np.testing.assert_allclose(probs.log_probs[0, 0], [math.log(0.5)] * 2, atol=1e-12)

    @pytest.mark.parametrize("a", [0.0, 5.0, -100.0, 333.0])
    def test_constant_logits_give_uniform(self, a):
        probs = softmax_lattice(node_lattice([a, a, a]))
        np.testing.assert_allclose(probs.log_probs[0, 0], [-math.log(3.0)] * 3, atol=1e-12)

    def test_against_direct_formula(self):
        # direct unstabilized evaluation of exp(h_k)/sum exp(h), frozen
        probs = softmax_lattice(node_lattice([1.0, 0.0]))
        np.testing.assert_allclose(
            probs.log_probs[0, 0],
            [-0.3132616875182228, -1.3132616875182228],
            atol=1e-12,
        )
        assert math.isclose(np.exp(probs.log_probs[0, 0]).sum(), 1.0, abs_tol=1e-12)

    def test_nonfinite_input_names_node(self):
        bad = np.zeros((2, 3, 4))
        bad[1, 2, 0] = np.inf
        with pytest.raises(ValueError, match=r"\(t=1, u=2\)"):
            LogitLattice(bad)

    @given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
    @settings(max_examples=50, deadline=None)
    def test_normalized_and_shift_invariant(self, seed, shift):
        rng = np.random.default_rng(seed)
        h = rng.normal(scale=3.0, size=(2, 3, 5))
        base = softmax_lattice(LogitLattice(h))
        sums = np.exp(base.log_probs).sum(axis=2)
        np.testing.assert_allclose(sums, 1.0, atol=1e-9)

        shifted = h.copy()
        shifted[1, 1, :] += shift  # shifting one node's logits changes nothing
        again = softmax_lattice(LogitLattice(shifted))
        np.testing.assert_allclose(again.log_probs, base.log_probs, atol=1e-9)


class TestCoarseGrain:
    def test_uniform_node(self):
        probs = softmax_lattice(LogitLattice(np.zeros((1, 2, 4))))
        coarse = coarse_grain(probs, TargetSequence([2], Vocab(4)))
        assert math.isclose(math.exp(coarse.log_y[0, 0]), 0.25, abs_tol=1e-12)
        assert math.isclose(math.exp(coarse.log_blank[0, 0]), 0.25, abs_tol=1e-12)
        assert math.isclose(math.exp(coarse.log_rest[0, 0]), 0.50, abs_tol=1e-12)

    def test_no_remainder_tokens_when_k_is_two(self):
        rng = np.random.default_rng(3)
        probs = random_prob_lattice(rng, 2, 1, 2)
        coarse = coarse_grain(probs, TargetSequence([1], Vocab(2)))
        assert np.all(coarse.log_rest[:, 0] == LOG_ZERO)
        total = np.exp(coarse.log_y[:, 0]) + np.exp(coarse.log_blank[:, 0])
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_remainder_matches_explicit_sum(self):
        # node probs: blank .1, next label .3, remainder .6 split over two tokens
        p = np.array([0.1, 0.3, 0.45, 0.15])
        probs = ProbLattice(np.log(p)[None, None, :])
        coarse = coarse_grain(probs, TargetSequence([1], Vocab(4)))
        assert math.isclose(math.exp(coarse.log_y[0, 0]), 0.3, abs_tol=1e-12)
        assert math.isclose(math.exp(coarse.log_blank[0, 0]), 0.1, abs_tol=1e-12)
        assert math.isclose(math.exp(coarse.log_rest[0, 0]), p[2] + p[3], abs_tol=1e-12)

    def test_row_count_mismatch(self):
        probs = softmax_lattice(LogitLattice(np.zeros((2, 2, 4))))
        with pytest.raises(ValueError, match="rows"):
            coarse_grain(probs, TargetSequence([1, 2], Vocab(4)))

    def test_top_row_two_category(self):
        rng = np.random.default_rng(7)
        probs = random_prob_lattice(rng, 3, 2, 5)
        coarse = coarse_grain(probs, TargetSequence([3, 1], Vocab(5)))
        assert np.all(coarse.log_y[:, 2] == LOG_ZERO)
        top = np.exp(coarse.log_blank[:, 2]) + np.exp(coarse.log_rest[:, 2])
        np.testing.assert_allclose(top, 1.0, atol=1e-9)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4), st.integers(3, 7))
    @settings(max_examples=60, deadline=None)
    def test_conservation_and_explicit_remainder(self, seed, T, L, K):
        rng = np.random.default_rng(seed)
        vocab = Vocab(K)
        target = TargetSequence(rng.integers(1, K, size=L), vocab)
        probs = random_prob_lattice(rng, T, L, K)
        coarse = coarse_grain(probs, target)

        total = np.exp(coarse.log_y) + np.exp(coarse.log_blank) + np.exp(coarse.log_rest)
        np.testing.assert_allclose(total, 1.0, atol=1e-9)

        p = np.exp(probs.log_probs)
        for t in range(T):
            for u in range(L):
                explicit = sum(
                    p[t, u, k] for k in range(K) if k not in (vocab.blank_id, target.labels[u])
                )
                assert math.isclose(
                    math.exp(coarse.log_rest[t, u]), explicit, abs_tol=1e-9
                )


class TestCoarseLatticeInvariants:
    def test_rejects_unnormalized(self):
        y = np.full((1, 1), LOG_ZERO)
        b = np.log(np.full((1, 1), 0.5))
        r = np.log(np.full((1, 1), 0.4))
        with pytest.raises(ValueError, match="sums to"):
            CoarseLattice(y, b, r)

    def test_rejects_missing_top_sentinel(self):
        y = np.log(np.full((1, 1), 0.2))
        b = np.log(np.full((1, 1), 0.5))
        r = np.log(np.full((1, 1), 0.3))
        with pytest.raises(ValueError, match="sentinel"):
            CoarseLattice(y, b, r)


class TestLog1mexp:
    @given(st.floats(-700.0, -1e-12))
    @settings(max_examples=200, deadline=None)
    def test_matches_reference(self, x):
        expected = math.log1p(-math.exp(x))
        assert math.isclose(float(log1mexp(np.array(x))), expected, rel_tol=1e-12, abs_tol=1e-300)

    def test_endpoints(self):
        assert float(log1mexp(np.array(LOG_ZERO))) == 0.0
        assert float(log1mexp(np.array(0.0))) == LOG_ZERO
