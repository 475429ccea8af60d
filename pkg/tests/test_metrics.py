"""Metrics: planted-model and exhaustive-enumeration oracles for
faithfulness, brute-force reference for sensitivity, counting cases for
complexity, and the summary formatting."""

import numpy as np
import pytest

from vitexplain.metrics import (
    ComplexityConfig,
    FaithfulnessConfig,
    SensitivityConfig,
    SummaryStats,
    avg_sensitivity,
    effective_complexity,
    exact_faithfulness_correlation,
    faithfulness_correlation,
    summarize,
)


class PlantedAdditiveModel:
    """Logit 0 is a weighted count of intact patches (patch = all-original).

    Built on an all-ones image with baseline 0: a patch is intact exactly
    when its pixels are all ones.
    """

    def __init__(self, weights, grid, image_size):
        self.weights = np.asarray(weights, dtype=float)
        self.grid = grid
        self.image_size = image_size

    def __call__(self, batch):
        batch = batch if batch.ndim == 3 else batch[None]
        gh, gw = self.grid
        ph = batch.shape[1] // gh
        pw = batch.shape[2] // gw
        logits = np.zeros((batch.shape[0], 3))
        pid = 0
        for r in range(gh):
            for c in range(gw):
                block = batch[:, r * ph:(r + 1) * ph, c * pw:(c + 1) * pw]
                intact = np.all(block == 1.0, axis=(1, 2))
                logits[:, 0] += self.weights[pid] * intact
                pid += 1
        return logits


class TestFaithfulness:
    def test_planted_model_scores_one(self, rng):
        weights = rng.uniform(0.5, 3.0, size=16)
        model = PlantedAdditiveModel(weights, (4, 4), 32)
        image = np.ones((32, 32))
        attribution = np.kron(weights.reshape(4, 4) / weights.max(),
                              np.ones((8, 8)))
        cfg = FaithfulnessConfig(patch_grid=4, subset_size=3, n_runs=100,
                                 seed=0)
        score = faithfulness_correlation(model, image, attribution, 0, cfg)
        assert abs(score - 1.0) <= 0.01

    def test_constant_attribution_scores_zero(self, rng):
        weights = rng.uniform(0.5, 3.0, size=16)
        model = PlantedAdditiveModel(weights, (4, 4), 32)
        cfg = FaithfulnessConfig(patch_grid=4, subset_size=3, n_runs=50,
                                 seed=1)
        score = faithfulness_correlation(model, np.ones((32, 32)),
                                         np.full((32, 32), 0.4), 0, cfg)
        assert score == 0.0

    def test_sampled_converges_to_exhaustive_six_patches(self, rng):
        """All C(6,2)=15 subsets enumerated vs 5000 sampled runs."""
        weights = rng.uniform(0.2, 2.0, size=6)
        model = SixPatchInteractionModel(weights)
        image = np.ones((4, 6))
        attribution = np.kron(
            (weights.reshape(2, 3) - weights.min())
            / (weights.max() - weights.min()),
            np.ones((2, 2)))
        base_cfg = dict(patch_grid=(2, 3), subset_size=2)
        exact = exact_faithfulness_correlation(
            model, image, attribution, 0,
            FaithfulnessConfig(**base_cfg, seed=0))
        assert abs(exact) < 1.0  # interaction term keeps it off the rails
        sampled = faithfulness_correlation(
            model, image, attribution, 0,
            FaithfulnessConfig(**base_cfg, n_runs=5000, seed=2))
        assert abs(sampled - exact) < 0.05

    def test_scale_invariance(self, rng):
        weights = rng.uniform(0.5, 3.0, size=16)
        model = PlantedAdditiveModel(weights, (4, 4), 32)
        image = np.ones((32, 32))
        attribution = rng.uniform(size=(32, 32))
        cfg = FaithfulnessConfig(patch_grid=4, subset_size=3, n_runs=60,
                                 seed=3)
        a = faithfulness_correlation(model, image, attribution, 0, cfg)
        b = faithfulness_correlation(model, image, 7.3 * attribution, 0, cfg)
        assert abs(a - b) < 1e-9

    def test_absolute_variant(self, rng):
        weights = rng.uniform(0.5, 3.0, size=16)
        model = PlantedAdditiveModel(weights, (4, 4), 32)
        image = np.ones((32, 32))
        # anti-correlated attribution: negate the weights pattern
        attribution = np.kron(1.0 - weights.reshape(4, 4) / weights.max(),
                              np.ones((8, 8)))
        kw = dict(patch_grid=4, subset_size=3, n_runs=100, seed=4)
        signed = faithfulness_correlation(
            model, image, attribution, 0, FaithfulnessConfig(**kw))
        absolute = faithfulness_correlation(
            model, image, attribution, 0,
            FaithfulnessConfig(use_absolute=True, **kw))
        assert signed < 0
        assert absolute == abs(signed)

    def test_range_and_determinism(self, rng):
        weights = rng.uniform(0.5, 3.0, size=16)
        model = PlantedAdditiveModel(weights, (4, 4), 32)
        image = np.ones((32, 32))
        attribution = rng.uniform(size=(32, 32))
        cfg = FaithfulnessConfig(patch_grid=4, n_runs=40, seed=5)
        a = faithfulness_correlation(model, image, attribution, 0, cfg)
        b = faithfulness_correlation(model, image, attribution, 0, cfg)
        assert a == b
        assert -1.0 <= a <= 1.0

    def test_subset_size_validated(self):
        with pytest.raises(ValueError, match="subset_size"):
            FaithfulnessConfig(patch_grid=4, subset_size=16,
                               n_runs=10).resolved_subset_size()


class SixPatchInteractionModel:
    """Six patches on a (2, 3) grid with a pairwise interaction term, so the
    exact mass-to-drop correlation is strictly inside (0, 1)."""

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=float)

    def __call__(self, batch):
        batch = batch if batch.ndim == 3 else batch[None]
        logits = np.zeros((batch.shape[0], 3))
        intact = []
        pid = 0
        for r in range(2):
            for c in range(3):
                block = batch[:, r * 2:(r + 1) * 2, c * 2:(c + 1) * 2]
                intact.append(np.all(block == 1.0, axis=(1, 2)))
                logits[:, 0] += self.weights[pid] * intact[-1]
                pid += 1
        logits[:, 0] += 1.5 * intact[0] * intact[3]
        logits[:, 0] -= 0.8 * intact[1] * intact[4]
        return logits


class TestSensitivity:
    def test_constant_explainer_scores_exact_zero(self, rng):
        fixed = rng.uniform(size=(16, 16))
        cfg = SensitivityConfig(radius=0.1, n_samples=10, seed=0)
        value = avg_sensitivity(lambda img: fixed, np.full((16, 16), 0.5),
                                cfg)
        assert value == 0.0

    def test_identity_explainer_matches_brute_force_reference(self):
        """explainer(x) = x, mid-gray image, radius small enough that the
        [0,1] clip never triggers: an independent Monte Carlo estimate of
        E||u|| / ||x|| must agree within 2%."""
        image = np.full((16, 16), 0.5)
        radius = 0.1
        n = 2000
        value = avg_sensitivity(lambda img: img, image,
                                SensitivityConfig(radius=radius, n_samples=n,
                                                  seed=10))
        ref_rng = np.random.default_rng(999)  # independent stream
        draws = [np.linalg.norm(ref_rng.uniform(-radius, radius, image.shape))
                 for _ in range(n)]
        reference = np.mean(draws) / np.linalg.norm(image)
        assert abs(value - reference) / reference < 0.02

    def test_non_negative(self, rng):
        fn = lambda img: rng.uniform(size=img.shape)
        cfg = SensitivityConfig(radius=0.2, n_samples=5, seed=1)
        assert avg_sensitivity(fn, np.full((8, 8), 0.5), cfg) >= 0.0

    def test_unnormalized_variant(self):
        image = np.full((8, 8), 0.5)
        cfg_n = SensitivityConfig(radius=0.1, n_samples=50, seed=2)
        cfg_u = SensitivityConfig(radius=0.1, n_samples=50, seed=2,
                                  normalize=False)
        a = avg_sensitivity(lambda img: img, image, cfg_n)
        b = avg_sensitivity(lambda img: img, image, cfg_u)
        assert b == pytest.approx(a * np.linalg.norm(image))

    def test_deterministic(self):
        image = np.full((8, 8), 0.5)
        cfg = SensitivityConfig(radius=0.1, n_samples=7, seed=3)
        assert avg_sensitivity(lambda im: im, image, cfg) == \
            avg_sensitivity(lambda im: im, image, cfg)


class TestComplexity:
    def test_all_zero(self):
        assert effective_complexity(np.zeros((8, 8)),
                                    ComplexityConfig(0.1)) == 0.0

    def test_all_ones(self):
        assert effective_complexity(np.ones((8, 8)),
                                    ComplexityConfig(0.5)) == 1.0

    def test_counting_sixteen_pixels(self):
        values = np.zeros(16)
        values[[1, 5, 9]] = 0.9
        assert effective_complexity(values.reshape(4, 4),
                                    ComplexityConfig(0.5)) == 0.1875

    def test_monotone_in_threshold(self, rng):
        values = rng.uniform(size=(10, 10))
        results = [effective_complexity(values, ComplexityConfig(t))
                   for t in (0.05, 0.2, 0.5, 0.8, 0.95)]
        for a, b in zip(results, results[1:]):
            assert b <= a

    def test_threshold_validated(self):
        with pytest.raises(ValueError):
            ComplexityConfig(0.0)
        with pytest.raises(ValueError):
            ComplexityConfig(1.0)


class TestSummarize:
    def test_render_matches_table_style(self):
        stats = SummaryStats(mean=0.16, std=0.18, count=300)
        assert stats.format() == "0.16 ± 0.18"

    def test_single_value(self):
        stats = summarize([0.42])
        assert stats.mean == 0.42
        assert stats.std == 0.0
        assert stats.count == 1

    def test_hand_computed_stds(self):
        assert summarize([0.0, 0.0, 0.0, 0.0]).std == 0.0
        stats = summarize([-1.0, 1.0, -1.0, 1.0])
        assert stats.mean == 0.0
        assert stats.std == 1.0

    def test_per_class_breakdown(self):
        stats = summarize([1.0, 2.0, 3.0, 4.0], labels=[0, 0, 1, 1])
        assert stats.per_class[0].mean == 1.5
        assert stats.per_class[1].mean == 3.5
        assert stats.per_class[0].count == 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize([])
