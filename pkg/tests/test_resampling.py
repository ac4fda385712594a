"""Tests for effective sample size, the Bernoulli gate, categorical and
gapped-straight-through resampling, and particle-state cloning."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsmcs import tape as T
from dsmcs.resampling import (ResamplingOutcome, SCHEMES, _gapped_logits,
                              _indices_from_uniforms, apply_resampling,
                              bernoulli_gate_prob, categorical_resample, ess,
                              ess_from_log_weights, gated_indices, gst_binary,
                              gst_resample)
from dsmcs.sampler import ParticleSystem


def normalized_log_weights(w):
    w = np.asarray(w, dtype=np.float64)
    return np.log(w / w.sum())


weight_rows = (st.lists(st.floats(0.01, 10.0), min_size=2, max_size=8)
               .map(lambda w: np.array(w) / np.sum(w)))


class TestESS:
    def test_hand_value(self):
        # 1 / (0.25 + 0.0625 + 0.0625) = 8/3
        val = ess(np.array([0.5, 0.25, 0.25])).value
        np.testing.assert_allclose(val, 8.0 / 3.0, rtol=1e-14)

    def test_uniform_gives_n(self):
        for n in (1, 2, 5, 64):
            np.testing.assert_allclose(ess(np.full(n, 1.0 / n)).value, n,
                                       rtol=1e-12)

    def test_one_hot_gives_one(self):
        w = np.zeros(7); w[3] = 1.0
        np.testing.assert_allclose(ess(w).value, 1.0, rtol=1e-14)

    def test_log_space_matches_direct(self):
        rng = np.random.default_rng(0)
        w = rng.random((4, 6)); w /= w.sum(-1, keepdims=True)
        np.testing.assert_allclose(ess_from_log_weights(np.log(w)).value,
                                   ess(w).value, rtol=1e-12)

    def test_log_space_is_overflow_safe(self):
        logw = np.array([0.0, -2000.0, -2000.0])
        logw -= np.log(np.sum(np.exp(logw - logw.max()))) + logw.max()
        val = ess_from_log_weights(logw).value
        np.testing.assert_allclose(val, 1.0, rtol=1e-12)

    @given(weight_rows)
    @settings(max_examples=50, deadline=None)
    def test_bounds(self, w):
        val = ess(w).value
        assert 1.0 - 1e-9 <= val <= len(w) + 1e-9


class TestBernoulliGate:
    def test_uniform_weights_never_resample(self):
        logw = np.full((2, 5), -np.log(5))
        p = bernoulli_gate_prob(T.asvar(logw), 5).value
        np.testing.assert_allclose(p, 0.0, atol=1e-12)

    def test_degenerate_weights_always_resample(self):
        logw = normalized_log_weights([1.0, 1e-300, 1e-300])
        p = bernoulli_gate_prob(T.asvar(logw[None]), 3).value
        np.testing.assert_allclose(p, 1.0, atol=1e-12)

    def test_midpoint_ess(self):
        # ESS = (N + 1)/2 sits exactly halfway: P = 0.5
        n = 9
        w = np.full(n, (1.0 - 0.0) / n)
        # construct weights with ESS = (n+1)/2 = 5 by a two-level profile
        # solved numerically: a one-hot/uniform mixture w = (a, b, ..., b)
        from scipy.optimize import brentq
        f = lambda a: 1.0 / (a ** 2 + (n - 1) * ((1 - a) / (n - 1)) ** 2) - (n + 1) / 2
        a = brentq(f, 1.0 / n, 1.0 - 1e-9)
        w = np.full(n, (1 - a) / (n - 1)); w[0] = a
        p = bernoulli_gate_prob(T.asvar(np.log(w)[None]), n).value
        np.testing.assert_allclose(p, 0.5, atol=1e-9)

    def test_single_particle_never_resamples(self):
        p = bernoulli_gate_prob(T.asvar(np.zeros((3, 1))), 1).value
        np.testing.assert_array_equal(p, np.zeros(3))

    @given(weight_rows)
    @settings(max_examples=50, deadline=None)
    def test_probability_in_unit_interval(self, w):
        p = bernoulli_gate_prob(T.asvar(np.log(w)[None]), len(w)).value
        assert -1e-9 <= p[0] <= 1.0 + 1e-9


class TestCategorical:
    def test_inverse_cdf_hand_values(self):
        probs = np.array([0.2, 0.3, 0.5])
        u = np.array([0.1, 0.25, 0.6, 0.9999])
        np.testing.assert_array_equal(
            _indices_from_uniforms(probs, u), [0, 1, 2, 2])

    def test_u_at_one_is_clipped(self):
        idx = _indices_from_uniforms(np.array([0.5, 0.5]), np.array([1.0]))
        assert idx[0] == 1

    def test_marginals_match_weights(self):
        rng = np.random.default_rng(1)
        w = np.array([0.1, 0.2, 0.3, 0.4])
        reps = 20000
        idx = categorical_resample(np.broadcast_to(w, (reps, 4)), rng=rng)
        counts = np.bincount(idx.ravel(), minlength=4) / (reps * 4)
        np.testing.assert_allclose(counts, w, atol=0.01)

    def test_output_carries_no_gradient(self):
        # indices are a plain integer array, not a Var
        tape = T.Tape()
        logw = tape.leaf(normalized_log_weights([1.0, 2.0, 3.0]))
        idx = categorical_resample(T.exp(logw), u=np.array([0.1, 0.5, 0.9]))
        assert isinstance(idx, np.ndarray)
        assert idx.dtype.kind == "i"


class TestGappedLogits:
    def test_sampled_entry_raised_to_row_max(self):
        logits = np.array([1.0, 3.0, 2.0])
        out = _gapped_logits(logits, np.array([0, 1, 2]), gap=1.0)
        np.testing.assert_array_equal(out[np.arange(3), [0, 1, 2]], 3.0)

    def test_other_entries_keep_margin(self):
        logits = np.array([1.0, 3.0, 2.9])
        out = _gapped_logits(logits, np.array([2]), gap=1.0)
        row = out[0]
        assert row[2] == 3.0
        assert np.all(row[[0, 1]] <= 3.0 - 1.0)

    def test_zero_perturbation_when_argmax_with_margin(self):
        # the sampled entry is already the max and everything else is at
        # least ``gap`` below it: nothing moves
        logits = np.array([0.0, 5.0, 3.0])
        out = _gapped_logits(logits, np.array([1]), gap=1.0)
        np.testing.assert_array_equal(out[0], logits)

    def test_minimality_entries_below_margin_unchanged(self):
        logits = np.array([-4.0, 2.0, 0.5, 1.9])
        out = _gapped_logits(logits, np.array([1]), gap=1.0)
        assert out[0, 0] == -4.0        # already below max - gap
        assert out[0, 2] == 0.5
        assert out[0, 3] == 1.0         # clipped down to max - gap


class TestGSTResample:
    def test_forward_matches_categorical(self):
        logw = normalized_log_weights([1.0, 2.0, 3.0, 4.0])
        u = np.random.default_rng(2).random(4)
        idx, matrix = gst_resample(T.asvar(logw), tau=0.5, gap=1.0, u=u)
        np.testing.assert_array_equal(idx,
                                      categorical_resample(np.exp(logw), u=u))

    def test_forward_matrix_is_exact_one_hot(self):
        logw = normalized_log_weights([1.0, 5.0, 2.0])
        u = np.array([0.2, 0.8, 0.5])
        idx, matrix = gst_resample(T.asvar(logw), tau=0.1, gap=1.0, u=u)
        expect = np.zeros((3, 3))
        expect[np.arange(3), idx] = 1.0
        np.testing.assert_array_equal(matrix.value, expect)

    def test_rejects_nonpositive_temperature(self):
        with pytest.raises(ValueError):
            gst_resample(T.asvar(np.zeros(3)), tau=0.0, gap=1.0,
                         u=np.full(3, 0.5))

    def test_backward_matches_soft_surrogate(self):
        # d/d(logw) of <matrix, C> equals the gradient of the softened
        # (perturbed, tempered) softmax with the perturbation held fixed
        logw0 = normalized_log_weights([1.0, 2.0, 3.0])
        u = np.array([0.3, 0.6, 0.9])
        weight = np.random.default_rng(3).standard_normal((3, 3))
        tau, gap = 0.7, 1.0

        tape = T.Tape()
        logw = tape.leaf(logw0)
        idx, matrix = gst_resample(logw, tau=tau, gap=gap, u=u)
        grad = T.backward(T.vsum(matrix * weight))[logw]

        pert = _gapped_logits(logw0, idx, gap) - logw0[None, :]

        def soft_obj(lw):
            s = T.softmax((T.asvar(lw)[None, :] + pert) * (1.0 / tau), axis=-1)
            return T.vsum(s * weight).value

        eps = 1e-6
        for i in range(3):
            e = np.zeros(3); e[i] = eps
            fd = (soft_obj(logw0 + e) - soft_obj(logw0 - e)) / (2 * eps)
            np.testing.assert_allclose(grad[i], fd, rtol=1e-5, atol=1e-8)

    def test_frozen_indices_replayed(self):
        logw = normalized_log_weights([1.0, 1.0, 1.0])
        forced = np.array([2, 2, 0])
        idx, matrix = gst_resample(T.asvar(logw), tau=0.5, gap=1.0,
                                   indices=forced)
        np.testing.assert_array_equal(idx, forced)
        np.testing.assert_array_equal(matrix.value.argmax(-1), forced)


class TestGSTBinary:
    def test_forward_thresholds_uniform(self):
        p = T.asvar(np.array([0.2, 0.8]))
        b, b_st = gst_binary(p, tau=0.5, gap=1.0, u=np.array([0.5, 0.5]))
        np.testing.assert_array_equal(b, [0, 1])
        np.testing.assert_array_equal(b_st.value, [0.0, 1.0])

    def test_gradient_flows_into_probability(self):
        tape = T.Tape()
        raw = tape.leaf(np.array([0.0]))
        p = T.sigmoid(raw)
        b, b_st = gst_binary(p, tau=0.5, gap=1.0, b=np.array([1]))
        grad = T.backward(T.vsum(b_st))[raw]
        assert grad[0] != 0.0
        assert np.isfinite(grad[0])

    def test_frozen_bits_replayed(self):
        p = T.asvar(np.array([0.99, 0.99]))
        b, b_st = gst_binary(p, tau=0.5, gap=1.0, b=np.array([0, 1]))
        np.testing.assert_array_equal(b, [0, 1])
        np.testing.assert_array_equal(b_st.value, [0.0, 1.0])


class TestGatedIndices:
    def test_identity_where_gate_off(self):
        idx = np.array([[2, 2, 2], [0, 0, 0]])
        gate = np.array([0, 1])
        out = gated_indices(idx, gate, 3)
        np.testing.assert_array_equal(out[0], [0, 1, 2])
        np.testing.assert_array_equal(out[1], [0, 0, 0])


class TestApplyResampling:
    def make_system(self, batch=2, n=4, dim=3, seed=5, tape=None):
        rng = np.random.default_rng(seed)
        pos = rng.standard_normal((batch, n, dim))
        w = rng.random((batch, n)); w /= w.sum(-1, keepdims=True)
        as_leaf = tape.leaf if tape is not None else T.asvar
        return ParticleSystem(positions=as_leaf(pos),
                              log_weights=as_leaf(np.log(w)))

    def test_index_path_gathers_and_resets_weights(self):
        sys0 = self.make_system()
        idx = np.array([[1, 1, 0, 3], [2, 0, 3, 3]])
        out = apply_resampling(sys0, ResamplingOutcome(indices=idx))
        np.testing.assert_array_equal(
            out.positions.value,
            np.take_along_axis(sys0.positions.value, idx[..., None], axis=-2))
        np.testing.assert_allclose(out.log_weights.value, -np.log(4))

    def test_gated_rows_keep_weights(self):
        sys0 = self.make_system()
        idx = np.array([[0, 1, 2, 3], [1, 1, 1, 1]])
        gate = np.array([0, 1])
        out = apply_resampling(sys0, ResamplingOutcome(indices=idx, gate=gate))
        np.testing.assert_array_equal(out.log_weights.value[0],
                                      sys0.log_weights.value[0])
        np.testing.assert_allclose(out.log_weights.value[1], -np.log(4))

    def test_matrix_path_matches_index_path_forward(self):
        tape = T.Tape()
        sys0 = self.make_system(tape=tape)
        logw = sys0.log_weights
        u = np.random.default_rng(6).random((2, 4))
        idx, matrix = gst_resample(logw, tau=0.5, gap=1.0, u=u)
        via_matrix = apply_resampling(
            sys0, ResamplingOutcome(indices=idx, matrix=matrix))
        via_index = apply_resampling(sys0, ResamplingOutcome(indices=idx))
        np.testing.assert_allclose(via_matrix.positions.value,
                                   via_index.positions.value, rtol=1e-14)
        np.testing.assert_allclose(via_matrix.log_weights.value,
                                   via_index.log_weights.value)

    def test_matrix_path_routes_gradient_to_logits(self):
        tape = T.Tape()
        sys0 = self.make_system(tape=tape)
        u = np.random.default_rng(7).random((2, 4))
        idx, matrix = gst_resample(sys0.log_weights, tau=0.5, gap=1.0, u=u)
        out = apply_resampling(sys0, ResamplingOutcome(indices=idx, matrix=matrix))
        grad = T.backward(T.vsum(T.square(out.positions)))[sys0.log_weights]
        assert np.any(grad != 0.0)
        assert np.all(np.isfinite(grad))

    def test_detached_scheme_blocks_gradient_to_logits(self):
        tape = T.Tape()
        sys0 = self.make_system(tape=tape)
        idx = categorical_resample(np.exp(sys0.log_weights.value),
                                   u=np.random.default_rng(8).random((2, 4)))
        out = apply_resampling(sys0, ResamplingOutcome(indices=idx))
        grad = T.backward(T.vsum(T.square(out.positions)))[sys0.log_weights]
        np.testing.assert_array_equal(grad, np.zeros((2, 4)))

    def test_gate_st_off_is_identity(self):
        tape = T.Tape()
        sys0 = self.make_system(tape=tape)
        u = np.random.default_rng(9).random((2, 4))
        idx, matrix = gst_resample(sys0.log_weights, tau=0.5, gap=1.0, u=u)
        gate, gate_st = gst_binary(T.asvar(np.array([0.4, 0.6])), tau=0.5,
                                   gap=1.0, b=np.array([0, 0]))
        out = apply_resampling(sys0, ResamplingOutcome(
            indices=idx, gate=gate, matrix=matrix, gate_st=gate_st))
        np.testing.assert_allclose(out.positions.value,
                                   sys0.positions.value, rtol=1e-14)
        np.testing.assert_allclose(out.log_weights.value,
                                   sys0.log_weights.value, rtol=1e-14)


def test_scheme_registry():
    assert SCHEMES == ("none", "cat", "bern-cat", "gst", "bern-gst")
