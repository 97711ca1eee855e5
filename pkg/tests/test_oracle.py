"""Closed-form posterior computations checked against independent numerics.

Two oracles back these tests: posterior values recomputed with mpmath at 50
decimal digits straight from the cell densities (no log-sum-exp, no shared
code), and Gauss-Hermite quadrature tying the posteriors back to the
generative density they came from.
"""

import math

import mpmath
import numpy as np
import pytest

from sepbias.biasinject import NoiseSpec
from sepbias.datagen import PopulationSpec, population_for_targets, separation_for_auc
from sepbias.errors import DomainError
from sepbias.oracle import (
    MIN_MC_SAMPLES,
    PosteriorBundle,
    biased_posteriors,
    posteriors,
    theoretical_tpr,
)


def mp_posteriors(spec, x, rho=0.0, target_group=1):
    """Arbitrary-precision Bayes rule from unnormalized cell densities."""
    with mpmath.workdps(50):
        var = mpmath.mpf(spec.noise_scale) ** 2
        dens = {}
        for a in (0, 1):
            for y in (0, 1):
                mu = spec.mean(a, y)
                sq = sum((mpmath.mpf(float(xi)) - mpmath.mpf(float(mi))) ** 2 for xi, mi in zip(x, mu))
                dens[(a, y)] = mpmath.mpf(spec.cell_prior(a, y)) * mpmath.exp(-sq / (2 * var))
        total = sum(dens.values())
        p_group = (dens[(1, 0)] + dens[(1, 1)]) / total
        p_cgg = []
        for a in (0, 1):
            p1 = dens[(a, 1)] / (dens[(a, 0)] + dens[(a, 1)])
            if a == target_group:
                p1 *= 1 - mpmath.mpf(rho)
            p_cgg.append(p1)
        pa = (1 - p_group, p_group)
        p_class = p_cgg[0] * pa[0] + p_cgg[1] * pa[1]
        return float(p_group), (float(p_cgg[0]), float(p_cgg[1])), float(p_class)


class TestPosteriors:
    def test_matches_mpmath_on_random_points(self, skewed_spec):
        rng = np.random.default_rng(0)
        for x in rng.normal(scale=2.0, size=(40, 2)):
            got = posteriors(skewed_spec, x)
            pg, pcgg, pc = mp_posteriors(skewed_spec, x)
            assert got.p_group == pytest.approx(pg, abs=1e-12)
            assert got.p_class_given_group[0] == pytest.approx(pcgg[0], abs=1e-12)
            assert got.p_class_given_group[1] == pytest.approx(pcgg[1], abs=1e-12)
            assert got.p_class == pytest.approx(pc, abs=1e-12)

    def test_stable_at_extreme_points(self):
        # Large separations push likelihood ratios past float range; the
        # mpmath oracle has no such limit, so agreement here is the real test.
        spec = PopulationSpec(
            group_separation=separation_for_auc(0.999, 1.0),
            disease_separation=6.0,
            class_prior=(0.3, 0.7),
            group_prior=0.2,
        )
        for x in [(60.0, -55.0), (-70.0, 70.0), (100.0, 0.0), (0.0, -90.0)]:
            got = posteriors(spec, x)
            pg, pcgg, pc = mp_posteriors(spec, x)
            assert got.p_group == pytest.approx(pg, abs=1e-6)
            assert got.p_class == pytest.approx(pc, abs=1e-6)
            assert got.p_class_given_group[0] == pytest.approx(pcgg[0], abs=1e-6)
            assert got.p_class_given_group[1] == pytest.approx(pcgg[1], abs=1e-6)

    def test_mixture_identity(self, skewed_spec):
        rng = np.random.default_rng(1)
        for x in rng.normal(scale=3.0, size=(200, 2)):
            b = posteriors(skewed_spec, x)
            mixed = b.p_class_given_group[0] * (1.0 - b.p_group) + b.p_class_given_group[1] * b.p_group
            assert abs(b.p_class - mixed) < 1e-10
            assert 0.0 <= b.p_group <= 1.0
            assert 0.0 <= b.p_class <= 1.0

    def test_midpoint_symmetry(self, symmetric_spec):
        # Equidistant from both group means with a balanced prior.
        assert posteriors(symmetric_spec, (0.0, 0.0)).p_group == pytest.approx(0.5, abs=1e-12)
        assert posteriors(symmetric_spec, (0.0, 1.7)).p_group == pytest.approx(0.5, abs=1e-12)

    def test_no_disease_signal_returns_class_prior(self):
        spec = PopulationSpec(group_separation=2.0, disease_separation=0.0, class_prior=(0.35, 0.8))
        rng = np.random.default_rng(2)
        for x in rng.normal(size=(20, 2)):
            b = posteriors(spec, x)
            assert b.p_class_given_group[0] == pytest.approx(0.35, abs=1e-12)
            assert b.p_class_given_group[1] == pytest.approx(0.8, abs=1e-12)

    def test_quadrature_consistency(self, skewed_spec):
        # Integrating each posterior against the generative density must give
        # back the prior it encodes.
        nodes, weights = np.polynomial.hermite.hermgauss(80)
        grid = np.stack(np.meshgrid(nodes, nodes, indexing="ij"), axis=-1).reshape(-1, 2)
        w2 = np.outer(weights, weights).reshape(-1) / math.pi
        e_group = 0.0
        e_class = 0.0
        for a in (0, 1):
            for y in (0, 1):
                pts = skewed_spec.mean(a, y) + skewed_spec.noise_scale * math.sqrt(2.0) * grid
                bundles = [posteriors(skewed_spec, p) for p in pts]
                pg = np.array([b.p_group for b in bundles])
                pc = np.array([b.p_class for b in bundles])
                prior = skewed_spec.cell_prior(a, y)
                e_group += prior * float(w2 @ pg)
                e_class += prior * float(w2 @ pc)
        assert e_group == pytest.approx(skewed_spec.group_prior, abs=1e-6)
        marginal_pos = sum(skewed_spec.cell_prior(a, 1) for a in (0, 1))
        assert e_class == pytest.approx(marginal_pos, abs=1e-6)

    def test_dimension_mismatch(self, symmetric_spec):
        with pytest.raises(DomainError):
            posteriors(symmetric_spec, (1.0, 2.0, 3.0))

    def test_batch_input_rejected(self, symmetric_spec):
        with pytest.raises(DomainError):
            posteriors(symmetric_spec, [[0.0, 0.0], [1.0, 1.0]])

    def test_non_finite_rejected(self, symmetric_spec):
        with pytest.raises(DomainError):
            posteriors(symmetric_spec, (float("nan"), 0.0))


class TestBiasedPosteriors:
    def test_zero_rate_identity(self, skewed_spec):
        noise = NoiseSpec(target_group=1, rate=0.0, seed=0)
        rng = np.random.default_rng(3)
        for x in rng.normal(size=(20, 2)):
            assert biased_posteriors(skewed_spec, noise, x) == posteriors(skewed_spec, x)

    def test_full_rate_zeroes_target_posterior(self, skewed_spec):
        noise = NoiseSpec(target_group=1, rate=1.0, seed=0)
        rng = np.random.default_rng(4)
        for x in rng.normal(size=(20, 2)):
            b = biased_posteriors(skewed_spec, noise, x)
            assert b.p_class_given_group[1] == 0.0

    def test_matches_mpmath(self, skewed_spec):
        noise = NoiseSpec(target_group=1, rate=0.25, seed=0)
        rng = np.random.default_rng(5)
        for x in rng.normal(scale=2.0, size=(30, 2)):
            got = biased_posteriors(skewed_spec, noise, x)
            pg, pcgg, pc = mp_posteriors(skewed_spec, x, rho=0.25, target_group=1)
            assert got.p_group == pytest.approx(pg, abs=1e-12)
            assert got.p_class_given_group == pytest.approx(pcgg, abs=1e-12)
            assert got.p_class == pytest.approx(pc, abs=1e-12)

    def test_scaling_clause(self, skewed_spec):
        noise = NoiseSpec(target_group=0, rate=0.4, seed=0)
        rng = np.random.default_rng(6)
        for x in rng.normal(size=(20, 2)):
            clean = posteriors(skewed_spec, x)
            corrupted = biased_posteriors(skewed_spec, noise, x)
            assert corrupted.p_class_given_group[0] == pytest.approx(0.6 * clean.p_class_given_group[0], rel=1e-12)
            assert corrupted.p_class_given_group[1] == clean.p_class_given_group[1]
            assert corrupted.p_group == clean.p_group

    def test_pointwise_dominance_on_thousand_points(self, skewed_spec):
        rng = np.random.default_rng(7)
        points = rng.normal(scale=2.5, size=(1000, 2))
        for rho in (0.1, 0.25, 0.9):
            noise = NoiseSpec(target_group=1, rate=rho, seed=0)
            for x in points:
                clean = posteriors(skewed_spec, x)
                corrupted = biased_posteriors(skewed_spec, noise, x)
                assert corrupted.p_class <= clean.p_class + 1e-15

    def test_mixture_identity_holds_after_corruption(self, skewed_spec):
        noise = NoiseSpec(target_group=1, rate=0.3, seed=0)
        rng = np.random.default_rng(8)
        for x in rng.normal(size=(100, 2)):
            b = biased_posteriors(skewed_spec, noise, x)
            mixed = b.p_class_given_group[0] * (1.0 - b.p_group) + b.p_class_given_group[1] * b.p_group
            assert abs(b.p_class - mixed) < 1e-10


class TestTheoreticalTpr:
    def test_returns_estimate_with_binomial_se(self, symmetric_spec):
        est = theoretical_tpr(symmetric_spec, None, "separable", 1, n_mc=10_000, seed=0)
        assert 0.0 <= est.value <= 1.0
        assert est.n_samples == 10_000
        assert est.std_error == pytest.approx(math.sqrt(est.value * (1.0 - est.value) / 10_000))

    def test_regimes_coincide_without_separability(self):
        spec = PopulationSpec(group_separation=0.0, disease_separation=1.5, class_prior=(0.6, 0.6))
        for g in (0, 1):
            sep = theoretical_tpr(spec, None, "separable", g, n_mc=20_000, seed=1)
            pooled = theoretical_tpr(spec, None, "pooled", g, n_mc=20_000, seed=1)
            assert abs(sep.value - pooled.value) <= 2.0 * (sep.std_error + pooled.std_error)

    def test_high_separability_drop_is_group_targeted(self):
        spec = population_for_targets(group_auc=0.98, disease_auc=0.75, class_prior=(0.6, 0.6))
        noise = NoiseSpec(target_group=1, rate=0.25, seed=0)
        clean1 = theoretical_tpr(spec, None, "separable", 1, n_mc=50_000, seed=2)
        biased1 = theoretical_tpr(spec, noise, "separable", 1, n_mc=50_000, seed=2)
        assert biased1.value < clean1.value - 2.0 * (clean1.std_error + biased1.std_error)
        clean0 = theoretical_tpr(spec, None, "separable", 0, n_mc=50_000, seed=2)
        biased0 = theoretical_tpr(spec, noise, "separable", 0, n_mc=50_000, seed=2)
        assert abs(biased0.value - clean0.value) <= 2.0 * (clean0.std_error + biased0.std_error)

    def test_zero_separability_drop_is_uniform(self):
        spec = PopulationSpec(group_separation=0.0, disease_separation=1.5, class_prior=(0.6, 0.6))
        noise = NoiseSpec(target_group=1, rate=0.25, seed=0)
        drops = []
        for g in (0, 1):
            clean = theoretical_tpr(spec, None, "pooled", g, n_mc=50_000, seed=3)
            biased = theoretical_tpr(spec, noise, "pooled", g, n_mc=50_000, seed=3)
            assert biased.value < clean.value
            drops.append((clean.value - biased.value, clean.std_error + biased.std_error))
        (d0, se0), (d1, se1) = drops
        assert abs(d0 - d1) <= 2.0 * (se0 + se1)

    def test_monotone_in_rate(self):
        spec = population_for_targets(group_auc=0.98, disease_auc=0.75, class_prior=(0.6, 0.6))
        values = []
        for rho in (0.0, 0.1, 0.25, 0.4, 0.6, 0.8):
            noise = NoiseSpec(target_group=1, rate=rho, seed=0)
            values.append(theoretical_tpr(spec, noise, "separable", 1, n_mc=20_000, seed=4).value)
        # Same seed means the same sample, so the decline is exact, not noisy.
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert values[0] > values[-1]

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"regime": "mixed"},
            {"group": 2},
            {"n_mc": MIN_MC_SAMPLES - 1},
            {"n_mc": 5000.0},
            {"threshold": 0.0},
            {"threshold": 1.0},
        ],
    )
    def test_argument_validation(self, symmetric_spec, kwargs):
        base = dict(regime="separable", group=1, n_mc=2000, seed=0, threshold=0.5)
        base.update(kwargs)
        with pytest.raises(DomainError):
            theoretical_tpr(symmetric_spec, None, base["regime"], base["group"],
                            threshold=base["threshold"], n_mc=base["n_mc"], seed=base["seed"])

    def test_threshold_sweep_monotone(self, symmetric_spec):
        # Raising the bar can only lower the pass rate; same seed, same draws.
        values = [
            theoretical_tpr(symmetric_spec, None, "separable", 1, threshold=t, n_mc=5000, seed=5).value
            for t in (0.2, 0.4, 0.6, 0.8)
        ]
        assert all(a >= b for a, b in zip(values, values[1:]))


def test_bundle_fields_are_plain_floats(symmetric_spec):
    b = posteriors(symmetric_spec, (0.3, -0.2))
    assert isinstance(b, PosteriorBundle)
    assert isinstance(b.p_group, float)
    assert isinstance(b.p_class, float)
    assert isinstance(b.p_class_given_group, tuple)
