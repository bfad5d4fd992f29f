"""Tests for perfect sampling and the CMI estimator."""

import math

import numpy as np
import pytest
from scipy.stats import chisquare

from mlen import (Tripartition, build_glauber_mpo, conditional_ac_marginal,
                  conditional_cat_matrix, depolarized_cat_mps,
                  estimate_cmi, exact_cmi_depolarized_cat, mi_2x2,
                  polarized_mps, sample_b_configuration, symmetrize,
                  tebd_evolve, thermal_mps)
from mlen.sampler import _boundary_vectors, _draw_batch, _site_tensors


def _spins_to_index(config):
    bits = (1 - np.asarray(config)) // 2
    return tuple(bits.astype(int))


class TestSampling:
    def test_uniform_state_chi_square(self):
        state = thermal_mps(0.0)
        counts = np.zeros(8)
        uniforms = np.empty((100_000, 3))
        for i in range(uniforms.shape[0]):
            gen = np.random.default_rng(np.random.SeedSequence((42, i)))
            uniforms[i] = gen.random(3)
        sel, _, _, _, _ = _draw_batch(state, 3, uniforms, False)
        idx = sel[:, 0] * 4 + sel[:, 1] * 2 + sel[:, 2]
        counts = np.bincount(idx, minlength=8)
        result = chisquare(counts)
        assert result.pvalue > 1e-4

    def test_thermal_frequencies_match_marginal(self):
        state = thermal_mps(1.0)
        num = 40_000
        uniforms = np.empty((num, 3))
        for i in range(num):
            gen = np.random.default_rng(np.random.SeedSequence((7, i)))
            uniforms[i] = gen.random(3)
        sel, _, _, _, _ = _draw_batch(state, 3, uniforms, False)
        idx = sel[:, 0] * 4 + sel[:, 1] * 2 + sel[:, 2]
        counts = np.bincount(idx, minlength=8)
        expected = state.marginal(3).ravel() * num
        sigma = np.sqrt(expected * (1 - expected / num))
        assert np.all(np.abs(counts - expected) < 4.0 * sigma + 1.0)

    def test_cat_magnetization_distribution(self):
        """Block imbalance follows the symmetrized Bernoulli weights with
        the binomial multiplicity."""
        p, b, num = 0.25, 6, 30_000
        state = depolarized_cat_mps(p)
        uniforms = np.empty((num, b))
        for i in range(num):
            gen = np.random.default_rng(np.random.SeedSequence((3, i)))
            uniforms[i] = gen.random(b)
        sel, _, _, _, _ = _draw_batch(state, b, uniforms, False)
        ups = (sel == 0).sum(axis=1)
        counts = np.bincount(ups, minlength=b + 1)
        q = 1 - p
        weights = np.array([
            math.comb(b, k) * 0.5 * (q ** k * p ** (b - k)
                                     + p ** k * q ** (b - k))
            for k in range(b + 1)])
        expected = weights * num
        sigma = np.sqrt(expected * (1 - weights))
        assert np.all(np.abs(counts - expected) < 4.0 * sigma + 1.0)

    @pytest.mark.parametrize("b", (2, 5, 10))
    def test_log_prob_matches_marginal(self, b):
        state = thermal_mps(1.3)
        rng = np.random.default_rng(11)
        record = sample_b_configuration(state, b, rng)
        marg = state.marginal(b)
        assert abs(math.exp(record.log_prob)
                   - marg[_spins_to_index(record.config)]) < 1e-10

    def test_conditional_matches_closed_form(self):
        state = depolarized_cat_mps(0.3)
        rng = np.random.default_rng(2)
        for _ in range(5):
            record = sample_b_configuration(state, 10, rng)
            imbalance = int(record.config.sum()) // 2
            got = conditional_ac_marginal(record, state)
            want = conditional_cat_matrix(0.3, imbalance)
            assert np.abs(got - want).max() < 1e-12

    def test_per_sample_mi_bounds(self):
        state = depolarized_cat_mps(0.2)
        rng = np.random.default_rng(4)
        for _ in range(20):
            record = sample_b_configuration(state, 6, rng)
            assert record.mi >= 0.0
            assert record.mi <= math.log(2.0) + 1e-9

    def test_blocked_states_require_even_blocks(self):
        state = thermal_mps(1.0).block_pair()
        with pytest.raises(ValueError):
            sample_b_configuration(state, 5, np.random.default_rng(0))


class TestMi2x2:
    def test_product_distribution(self):
        outer = np.outer([0.3, 0.7], [0.6, 0.4])
        assert mi_2x2(outer) == pytest.approx(0.0, abs=1e-15)

    def test_perfect_correlation(self):
        assert mi_2x2(np.diag([0.5, 0.5])) == pytest.approx(math.log(2.0))

    def test_frozen_value(self):
        dist = np.array([[0.3125, 0.1875], [0.1875, 0.3125]])
        assert mi_2x2(dist) == pytest.approx(0.03158394240196326, rel=1e-12)


class TestEstimator:
    def test_exact_cat_is_zero(self):
        est = estimate_cmi(depolarized_cat_mps(0.0), 6, 200, seed=0)
        assert est.mean == 0.0
        assert est.stderr == 0.0

    @pytest.mark.parametrize("seed", (1, 2, 3))
    def test_matches_oracle_within_errors(self, seed):
        oracle = exact_cmi_depolarized_cat(0.25, 8)
        est = estimate_cmi(depolarized_cat_mps(0.25), 8, 4000, seed=seed)
        assert abs(est.mean - oracle) < 4.0 * est.stderr

    def test_thermal_equilibrium_is_zero(self):
        est = estimate_cmi(thermal_mps(1.2), 6, 500, seed=9)
        assert est.mean < 1e-12

    def test_deterministic_and_batch_independent(self):
        state = depolarized_cat_mps(0.3)
        a = estimate_cmi(state, 6, 500, seed=5)
        b = estimate_cmi(state, 6, 500, seed=5)
        c = estimate_cmi(state, 6, 500, seed=5, batch_size=37)
        assert a.mean == b.mean and a.stderr == b.stderr
        assert a.mean == c.mean

    def test_seed_matters(self):
        state = depolarized_cat_mps(0.3)
        a = estimate_cmi(state, 6, 500, seed=5)
        b = estimate_cmi(state, 6, 500, seed=6)
        assert a.mean != b.mean

    def test_rejects_tiny_sample_counts(self):
        with pytest.raises(ValueError):
            estimate_cmi(thermal_mps(1.0), 4, 1, seed=0)
        with pytest.raises(ValueError):
            estimate_cmi(thermal_mps(1.0), 4, 10, seed=-3)

    def test_symmetrized_matches_brute_force(self):
        """Sampling the polarized trajectory with flip-averaged marginals
        reproduces the CMI of the explicitly symmetrized state."""
        channel = build_glauber_mpo(1.5, 0.5)
        state = polarized_mps()
        for _, state, _ in tebd_evolve(state, channel, 10, 16, 1e-9):
            pass
        sym = symmetrize(state)
        from mlen import brute_force_cmi
        target = brute_force_cmi(sym, 6)
        est = estimate_cmi(state, 6, 4000, symmetrized=True, seed=13)
        assert abs(est.mean - target) < 4.0 * est.stderr
        plain = estimate_cmi(state, 6, 1000, symmetrized=False, seed=13)
        assert plain.mean < 0.2 * est.mean

    def test_multispin_regions_against_enumeration(self):
        state = thermal_mps(0.9)
        part = Tripartition(b_size=4, a_size=2, c_size=2)
        est = estimate_cmi(state, 4, 3000, seed=21, tripartition=part)
        # independent enumeration over 8 spins
        joint = state.marginal(8)

        def entropy(dist):
            flat = dist[dist > 0]
            return float(-(flat * np.log(flat)).sum())

        s_ab = entropy(joint.sum(axis=(6, 7)))
        s_bc = entropy(joint.sum(axis=(0, 1)))
        s_b = entropy(joint.sum(axis=(0, 1, 6, 7)))
        s_abc = entropy(joint)
        target = s_ab + s_bc - s_b - s_abc
        assert abs(est.mean - target) < 4.0 * est.stderr + 1e-12

    def test_mi_cap_scales_with_regions(self):
        state = depolarized_cat_mps(0.05)
        part = Tripartition(b_size=4, a_size=2, c_size=2)
        est = estimate_cmi(state, 4, 200, seed=2, tripartition=part)
        assert est.mean <= 2.0 * math.log(2.0) + 1e-9

    def test_time_step_metadata(self):
        est = estimate_cmi(thermal_mps(1.0), 4, 50, seed=0, time_step=7)
        assert est.time_step == 7
        assert est.samples == 50
        assert est.b_size == 4


class TestBoundaryVectors:
    def test_cell2_alignment(self):
        """A ends at a cell boundary, C starts at one."""
        state = thermal_mps(1.1)
        pair = state.block_pair()
        a1, c1 = _boundary_vectors(state, 1, 1)
        a2, c2 = _boundary_vectors(pair, 1, 1)
        # single-spin contractions agree between representations
        x, n = _site_tensors(pair, 2)
        assert n == 1
        probs1 = np.einsum("kd,sde,e->ks", a1, state.tensor, state.v_right)
        probs2 = np.einsum("kd,sde,e->ks", a2,
                           pair.tensor.reshape(4, *x.shape[1:]).reshape(
                               2, 2, x.shape[1], x.shape[2]).sum(axis=1),
                           pair.v_right)
        assert np.abs(probs1 - probs2).max() < 1e-12
