import math

import numpy as np
import pytest

from lsirm.model import (
    Hyperparameters,
    InputError,
    LatentConfiguration,
    MainEffects,
    ParameterState,
    log_likelihood,
)
from lsirm.postproc import (
    align_chains,
    apply_rotation,
    cosine_similarity,
    gelman_rubin,
    group_center_similarity,
    procrustes_align,
    summarize,
)
from lsirm.sampler import ChainSchedule, ModelConfig, run_chains
from lsirm.simulate import generate_lsirm

import oracles


def rotation(theta):
    return np.array([[math.cos(theta), -math.sin(theta)],
                     [math.sin(theta), math.cos(theta)]])


def random_config(rng, n=7, i=5, p=2):
    return LatentConfiguration(rng.normal(size=(n, p)), rng.normal(size=(i, p)))


def pair_distances(cfg):
    diff = cfg.respondent_positions[:, None, :] - cfg.item_positions[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


class TestProcrustes:
    def test_reference_draw_maps_to_itself(self):
        rng = np.random.default_rng(0)
        ref = random_config(rng)
        out = procrustes_align([ref.copy()], ref)
        translation, rot = out.transform_log[0]
        assert np.allclose(out.aligned[0].respondent_positions,
                           ref.respondent_positions, atol=1e-12)
        assert np.allclose(rot, np.eye(2), atol=1e-12)
        assert np.allclose(translation, 0.0, atol=1e-12)

    def test_rotated_and_shifted_draw_recovered_exactly(self):
        rng = np.random.default_rng(1)
        ref = random_config(rng)
        q = rotation(math.pi / 2.0)
        shift = np.array([5.0, -3.0])
        moved = LatentConfiguration(ref.respondent_positions @ q + shift,
                                    ref.item_positions @ q + shift)
        out = procrustes_align([moved], ref)
        assert np.abs(out.aligned[0].respondent_positions
                      - ref.respondent_positions).max() < 1e-9
        assert np.abs(out.aligned[0].item_positions
                      - ref.item_positions).max() < 1e-9

    def test_reflection_recovered(self):
        rng = np.random.default_rng(2)
        ref = random_config(rng)
        reflect = np.diag([1.0, -1.0])
        moved = LatentConfiguration(ref.respondent_positions @ reflect,
                                    ref.item_positions @ reflect)
        out = procrustes_align([moved], ref)
        assert np.abs(out.aligned[0].respondent_positions
                      - ref.respondent_positions).max() < 1e-9

    def test_transforms_are_orthogonal_and_distance_preserving(self):
        rng = np.random.default_rng(3)
        ref = random_config(rng)
        draws = [random_config(rng) for _ in range(20)]
        out = procrustes_align(draws, ref)
        for draw, aligned, (_, rot) in zip(draws, out.aligned, out.transform_log):
            assert np.abs(rot.T @ rot - np.eye(2)).max() < 1e-10
            assert np.abs(pair_distances(draw) - pair_distances(aligned)).max() < 1e-9

    def test_rank_deficient_falls_back_to_identity_with_warning(self):
        line = np.linspace(0.0, 1.0, 5)[:, None] * np.array([[1.0, 1.0]])
        ref = LatentConfiguration(line[:3], line[3:])
        draw = LatentConfiguration(line[:3] + 0.5, line[3:] + 0.5)
        with pytest.warns(UserWarning, match="rank-deficient"):
            out = procrustes_align([draw], ref)
        assert np.array_equal(out.aligned[0].respondent_positions,
                              draw.respondent_positions)
        assert np.allclose(out.transform_log[0][1], np.eye(2))

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(4)
        ref = random_config(rng, p=2)
        with pytest.raises(InputError):
            procrustes_align([random_config(rng, p=3)], ref)

    def test_alignment_leaves_likelihood_unchanged(self):
        # The likelihood sees positions only through distances.
        rng = np.random.default_rng(5)
        data, _ = generate_lsirm(12, 8, rng)
        config = ModelConfig(tune=False)
        schedule = ChainSchedule(60, 30, 1, 1, seed=6)
        chain = run_chains(data, config, schedule)[0]
        aligned = align_chains([chain])
        hyper = Hyperparameters()
        for t in range(chain.n_draws):
            state = chain.state_at(t)
            before = log_likelihood(data, state)
            moved = ParameterState(
                MainEffects(state.main_effects.alpha, state.main_effects.beta),
                aligned.aligned[t], state.kernel, state.sigma2)
            assert abs(log_likelihood(data, moved) - before) < 1e-9

    def test_reference_is_highest_posterior_draw(self):
        rng = np.random.default_rng(7)
        data, _ = generate_lsirm(10, 6, rng)
        config = ModelConfig(tune=False)
        schedule = ChainSchedule(40, 20, 1, 2, seed=8)
        chains = run_chains(data, config, schedule)
        aligned = align_chains(chains)
        logpost = np.concatenate([c.log_posterior for c in chains])
        best = int(np.argmax(logpost))
        a = np.concatenate([c.a_positions for c in chains])
        assert np.array_equal(aligned.reference.respondent_positions, a[best])


class TestGelmanRubin:
    def test_identical_chains_formula_value(self):
        trace = np.array([1.0, 2.0, 3.0, 4.0])
        assert gelman_rubin([trace, trace]) == pytest.approx(math.sqrt(0.75))

    def test_constant_distinct_chains_diverged(self):
        assert gelman_rubin([np.zeros(4), np.full(4, 10.0)]) == float("inf")

    def test_constant_equal_chains_psrf_one(self):
        assert gelman_rubin([np.ones(4), np.ones(4)]) == 1.0

    def test_same_sampler_long_chains_near_one(self):
        rng = np.random.default_rng(9)
        chains = [rng.normal(size=20000) for _ in range(3)]
        assert 0.99 <= gelman_rubin(chains) <= 1.05

    def test_split_merged_chain_near_one(self):
        rng = np.random.default_rng(10)
        merged = rng.normal(size=30000)
        psrf = gelman_rubin([merged[:15000], merged[15000:]])
        assert math.isfinite(psrf) and 0.99 <= psrf <= 1.02

    def test_requires_two_equal_length_chains(self):
        with pytest.raises(InputError):
            gelman_rubin([np.ones(4)])
        with pytest.raises(InputError):
            gelman_rubin([np.ones(4), np.ones(5)])
        with pytest.raises(InputError):
            gelman_rubin([np.ones(1), np.ones(1)])


class TestSummarize:
    def run_small(self, n_chains=2, seed=11):
        rng = np.random.default_rng(12)
        data, _ = generate_lsirm(10, 6, rng)
        config = ModelConfig(tune=False)
        schedule = ChainSchedule(80, 30, 1, n_chains, seed=seed)
        return run_chains(data, config, schedule)

    def test_quantiles_match_interpolation_oracle(self):
        chains = self.run_small()
        summary = summarize(chains)
        pooled = np.sort(np.concatenate([c.gamma for c in chains]))
        assert summary.gamma.lower == pytest.approx(
            oracles.quantile_linear(pooled, 0.025), abs=1e-12)
        assert summary.gamma.median == pytest.approx(
            oracles.quantile_linear(pooled, 0.5), abs=1e-12)
        assert summary.gamma.upper == pytest.approx(
            oracles.quantile_linear(pooled, 0.975), abs=1e-12)
        pooled_alpha = np.sort(np.concatenate([c.alpha for c in chains]), axis=0)
        for j in (0, 3):
            assert summary.alpha.median[j] == pytest.approx(
                oracles.quantile_linear(pooled_alpha[:, j], 0.5), abs=1e-12)

    def test_interval_ordering(self):
        chains = self.run_small()
        summary = summarize(chains)
        assert np.all(summary.alpha.lower <= summary.alpha.median)
        assert np.all(summary.alpha.median <= summary.alpha.upper)
        assert summary.sigma2.lower <= summary.sigma2.median <= summary.sigma2.upper

    def test_constant_trace_collapses(self):
        trace = np.full(10, 3.25)
        assert oracles.quantile_linear(np.sort(trace), 0.5) == 3.25
        from lsirm.postproc import _scalar_summary

        summary = _scalar_summary(trace)
        assert summary.mean == summary.median == summary.lower == summary.upper == 3.25

    def test_linear_interpolation_convention(self):
        from lsirm.postproc import _scalar_summary

        trace = np.arange(1.0, 101.0)
        assert _scalar_summary(trace).median == pytest.approx(50.5)

    def test_acceptance_rates_present(self):
        chains = self.run_small()
        summary = summarize(chains)
        assert set(summary.acceptance) == set(chains[0].acceptance)
        assert all(0.0 <= rate <= 1.0 for rate in summary.acceptance.values())

    def test_single_chain_has_no_psrf(self):
        chains = self.run_small(n_chains=1)
        summary = summarize(chains)
        assert summary.gamma.psrf is None
        assert summary.alpha.psrf is None


class TestCosineSimilarity:
    def test_same_direction(self):
        assert cosine_similarity([2.0, 1.0], [4.0, 2.0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 5.0]) == pytest.approx(0.0)

    def test_arithmetic(self):
        assert cosine_similarity([3.0, 4.0], [4.0, 3.0]) == pytest.approx(24.0 / 25.0)

    def test_zero_vector_rejected(self):
        with pytest.raises(InputError):
            cosine_similarity([0.0, 0.0], [1.0, 2.0])


class TestGroupCenterSimilarity:
    def test_opposite_singletons(self):
        positions = np.array([[1.0, 0.0], [-1.0, 0.0]])
        out = group_center_similarity(positions, [[0], [1]])
        assert out[0, 1] == pytest.approx(-1.0)
        assert out[0, 0] == out[1, 1] == 1.0

    def test_planted_four_clusters(self):
        rng = np.random.default_rng(13)
        centers = np.array([[4.0, 0.0], [0.0, 4.0], [-4.0, 0.0], [0.0, -4.0]])
        positions = np.vstack([c + 0.05 * rng.normal(size=(6, 2)) for c in centers])
        groups = [list(range(6 * g, 6 * g + 6)) for g in range(4)]
        out = group_center_similarity(positions, groups)
        assert np.allclose(out, out.T)
        assert out[0, 2] < -0.9 and out[1, 3] < -0.9
        assert abs(out[0, 1]) < 0.2

    def test_matches_table_structure(self):
        # Most-dissimilar pairs sit near -1, adjacent groups in between.
        positions = np.array([[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]])
        out = group_center_similarity(positions, [[0], [1], [2], [3]])
        assert out[0, 3] == pytest.approx(-1.0)
        assert out[1, 2] == pytest.approx(-1.0)


class TestApplyRotation:
    def test_identity_unchanged(self):
        rng = np.random.default_rng(14)
        cfg = random_config(rng)
        out = apply_rotation(cfg, np.eye(2))
        assert np.array_equal(out.respondent_positions, cfg.respondent_positions)

    def test_right_angle_preserves_distances(self):
        rng = np.random.default_rng(15)
        cfg = random_config(rng)
        out = apply_rotation(cfg, rotation(math.pi / 2.0))
        assert np.abs(pair_distances(cfg) - pair_distances(out)).max() < 1e-9

    def test_both_sets_rotated_together(self):
        rng = np.random.default_rng(16)
        cfg = random_config(rng)
        q = rotation(0.7)
        out = apply_rotation(cfg, q)
        assert np.allclose(out.respondent_positions, cfg.respondent_positions @ q)
        assert np.allclose(out.item_positions, cfg.item_positions @ q)

    def test_non_orthogonal_accepted_with_flag(self):
        rng = np.random.default_rng(17)
        cfg = random_config(rng)
        shear = np.array([[1.0, 0.4], [0.0, 1.0]])
        with pytest.warns(UserWarning, match="distances not preserved"):
            out = apply_rotation(cfg, shear)
        assert np.allclose(out.respondent_positions, cfg.respondent_positions @ shear)

    def test_singular_matrix_rejected(self):
        rng = np.random.default_rng(18)
        cfg = random_config(rng)
        with pytest.raises(InputError):
            apply_rotation(cfg, np.array([[1.0, 1.0], [1.0, 1.0]]))
