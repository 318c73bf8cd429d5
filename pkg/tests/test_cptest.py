import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from covoptest.cptest import (
    DegenerateNullError,
    TestConfig,
    parametric_bootstrap_test,
    permutation_test,
    run_test,
    statistic_k,
    statistic_two,
)
from covoptest.fcore import FunctionalSample, Grid, GridMismatchError
from covoptest.power import FCPCModel, generate_sample, mc_size_power, sine_basis
from covoptest.quadform import make_rng

from conftest import random_sample


def pair(model, n1, n2, seed):
    return [
        generate_sample(model, n1, seed=make_rng(seed, 1)),
        generate_sample(model, n2, seed=make_rng(seed, 2)),
    ]


class TestStatistics:
    def test_identical(self, grid, rng):
        s = random_sample(rng, grid, 20)
        assert statistic_two(s, s) == 0.0
        assert statistic_k([s, s, s]) == 0.0

    def test_three_point_grid(self):
        g = Grid([0.0, 0.5, 1.0])
        x1 = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0], [2.0, 0.0, 1.0]])
        x2 = np.array([[1.0, 1.0, 1.0], [0.0, 2.0, 0.0], [3.0, 1.0, 2.0]])

        def cov(x):
            c = x - x.mean(axis=0)
            return sum(np.outer(r, r) for r in c) / len(x)

        d = cov(x1) - cov(x2)
        w = [0.25, 0.5, 0.25]
        brute = sum(w[m] * w[l] * d[m, l] ** 2 for m in range(3) for l in range(3))
        got = statistic_two(FunctionalSample(g, x1), FunctionalSample(g, x2))
        assert got == pytest.approx(6 * brute, rel=1e-13)

    def test_homogeneity(self, grid, rng):
        s1, s2 = random_sample(rng, grid, 20), random_sample(rng, grid, 25)
        t = statistic_two(s1, s2)
        scaled = statistic_two(s1.with_values(2 * s1.values), s2.with_values(2 * s2.values))
        assert scaled == pytest.approx(16 * t, rel=1e-12)

    def test_k2_equals_two(self, grid, rng):
        s1, s2 = random_sample(rng, grid, 20), random_sample(rng, grid, 25)
        assert statistic_k([s1, s2]) == statistic_two(s1, s2)

    def test_k3_reduction(self, grid, rng):
        s1, s3 = random_sample(rng, grid, 20), random_sample(rng, grid, 25)
        s2 = s1.with_values(s1.values[::-1])
        n = 20 + 20 + 25
        expected = n / (20 + 25) * statistic_two(s1, s3)
        assert statistic_k([s1, s2, s3]) == pytest.approx(expected, rel=1e-12)

    def test_label_swap(self, grid, rng):
        s1, s2 = random_sample(rng, grid, 20), random_sample(rng, grid, 25)
        assert statistic_two(s1, s2) == pytest.approx(statistic_two(s2, s1), rel=1e-14)

    def test_errors(self, grid, rng):
        s = random_sample(rng, grid, 10)
        with pytest.raises(GridMismatchError):
            statistic_two(s, random_sample(rng, Grid.uniform(0, 1, 21), 10))
        with pytest.raises(ValueError, match="fewer than 2"):
            statistic_two(s, FunctionalSample(grid, s.values[:1]))
        with pytest.raises(ValueError):
            statistic_k([s])


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(alpha=0.0),
            dict(alpha=1.0),
            dict(n_boot=99),
            dict(q=0),
            dict(upsilon_mode="robust"),
            dict(estimator="median"),
            dict(calibration="jackknife"),
            dict(estimator="smoothed"),
            dict(estimator="spatial"),
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            TestConfig(**kw)

    def test_spatial_permutation_allowed(self):
        assert TestConfig(estimator="spatial", calibration="permutation").estimator == "spatial"


class TestRunTest:
    def test_identical_samples(self, grid, rng):
        s = random_sample(rng, grid, 30)
        r = run_test([s, s], TestConfig(n_boot=500))
        assert r.statistic == 0.0
        assert r.p_value == 1.0
        assert not r.reject

    def test_report_invariants(self, gauss_model):
        r = run_test(pair(gauss_model, 60, 90, 0), TestConfig(n_boot=500))
        assert 0 <= r.p_value <= 1
        assert np.all(np.diff(r.theta_hat) <= 0) and min(r.theta_hat) > 0
        assert sum(r.taus) == pytest.approx(1.0)
        assert r.sample_sizes == [60, 90]
        assert r.q_used == 3 and r.n_terms == len(r.theta_hat)
        assert 0 < r.retained_trace_fraction <= 1

    def test_paths_agree(self, gauss_model):
        samples = pair(gauss_model, 50, 70, 1)
        cfg = TestConfig(n_boot=1000, seed=3)
        a, b = run_test(samples, cfg, path="two"), run_test(samples, cfg, path="k")
        assert a.statistic == b.statistic
        assert_allclose(a.theta_hat, b.theta_hat, rtol=1e-12)
        assert a.p_value == b.p_value

    def test_deterministic(self, gauss_model):
        samples = pair(gauss_model, 50, 70, 1)
        assert run_test(samples, TestConfig(seed=9)) == run_test(samples, TestConfig(seed=9))

    def test_scale_invariance(self, gauss_model):
        samples = pair(gauss_model, 50, 70, 2)
        scaled = [s.with_values(3.0 * s.values) for s in samples]
        a, b = run_test(samples), run_test(scaled)
        assert a.p_value == b.p_value
        assert b.statistic == pytest.approx(81 * a.statistic, rel=1e-10)
        assert_allclose(b.theta_hat, 81 * np.asarray(a.theta_hat), rtol=1e-8)

    def test_permutation_invariance(self, gauss_model):
        samples = pair(gauss_model, 50, 70, 2)
        rng = np.random.default_rng(0)
        shuffled = [s.with_values(s.values[rng.permutation(s.n)]) for s in samples]
        a, b = run_test(samples), run_test(shuffled)
        assert a.p_value == b.p_value
        assert b.statistic == pytest.approx(a.statistic, rel=1e-12)
        assert_allclose(b.theta_hat, a.theta_hat, rtol=1e-9)

    def test_label_swap(self, gauss_model):
        s1, s2 = pair(gauss_model, 50, 70, 4)
        a, b = run_test([s1, s2]), run_test([s2, s1])
        assert b.statistic == pytest.approx(a.statistic, rel=1e-12)
        assert_allclose(b.theta_hat, a.theta_hat, rtol=1e-9)
        assert a.p_value == b.p_value

    def test_duality(self, gauss_model):
        for seed in range(5):
            r = run_test(pair(gauss_model, 40, 40, seed), TestConfig(n_boot=500, seed=seed))
            assert r.statistic != r.critical_value
            assert (r.p_value <= r.alpha) == (r.statistic >= r.critical_value) == r.reject

    def test_k_sample(self, gauss_model):
        samples = pair(gauss_model, 40, 50, 5) + [generate_sample(gauss_model, 60, seed=make_rng(5, 3))]
        r = run_test(samples, TestConfig(n_boot=500))
        assert r.n_terms <= 2 * r.q_used**2
        assert len(r.taus) == 3

    def test_gaussian_mode(self, gauss_model):
        r = run_test(pair(gauss_model, 80, 80, 6), TestConfig(upsilon_mode="gaussian"))
        assert r.upsilon_mode == "gaussian"
        assert r.clipped_psd_mass == 0.0

    def test_smoothed(self, gauss_model):
        r = run_test(pair(gauss_model, 60, 60, 7), TestConfig(estimator="smoothed", bandwidth=0.05))
        assert r.estimator == "smoothed" and r.notes

    def test_degenerate(self, grid):
        const = FunctionalSample(grid, np.ones((4, grid.size)))
        with pytest.raises(ValueError, match="zero"):
            run_test([const, const])

    def test_degenerate_null_error(self, grid):
        # two curves per sample give rank-one scores whose fourth moments are exactly zero
        u = sine_basis(grid, 1)[0]
        s = FunctionalSample(grid, [u, -u])
        with pytest.raises(DegenerateNullError, match="increase q"):
            run_test([s, s], TestConfig(upsilon_mode="empirical"))

    def test_json(self, gauss_model):
        r = run_test(pair(gauss_model, 30, 30, 8), TestConfig(n_boot=200))
        d = json.loads(r.to_json())
        assert d["schema"] == "covop-test/1"
        assert d["p_value"] == r.p_value and d["theta_hat"] == r.theta_hat

    def test_size(self, gauss_model):
        res = mc_size_power(gauss_model, [200, 200], TestConfig(), reps=1000, seed=31)
        assert 0.03 <= res.rejection_rate <= 0.07

    def test_monotone_power(self, grid):
        rates = []
        for rho in (1.0, 1.5, 2.0):
            m = FCPCModel(grid, [2.0, 1.0, 0.5], sine_basis(grid, 3), scale2=rho)
            rates.append(mc_size_power(m, [200, 200], TestConfig(n_boot=1000), reps=500, seed=5).rejection_rate)
        assert rates[0] <= rates[1] <= rates[2]


class TestParametric:
    def test_identical(self, grid, rng):
        s = random_sample(rng, grid, 30)
        r = parametric_bootstrap_test([s, s], TestConfig(n_boot=200, calibration="parametric"))
        assert r.p_value == 1.0
        assert any("pooled" in n for n in r.notes)

    def test_deterministic(self, gauss_model):
        samples = pair(gauss_model, 40, 40, 0)
        cfg = TestConfig(n_boot=200, calibration="parametric", seed=4)
        assert run_test(samples, cfg) == run_test(samples, cfg)

    def test_size(self, gauss_model):
        cfg = TestConfig(calibration="parametric", n_boot=200)
        res = mc_size_power(gauss_model, [200, 200], cfg, reps=500, seed=21)
        assert 0.02 <= res.rejection_rate <= 0.08

    def test_agrees_with_mixture(self, gauss_model):
        for seed in range(3):
            samples = pair(gauss_model, 500, 500, seed)
            p1 = run_test(samples, TestConfig(seed=seed)).p_value
            p2 = run_test(samples, TestConfig(seed=seed, calibration="parametric")).p_value
            assert abs(p1 - p2) <= 0.05


class TestPermutation:
    def test_spatial_experimental(self, gauss_model):
        cfg = TestConfig(estimator="spatial", calibration="permutation", n_boot=100)
        r = run_test(pair(gauss_model, 20, 20, 0), cfg)
        assert r.experimental and r.estimator == "spatial"
        assert 0 < r.p_value <= 1

    def test_detects_scale_change(self, grid):
        m = FCPCModel(grid, [2.0, 1.0], sine_basis(grid, 2), scale2=4.0)
        samples = [generate_sample(m, 40, 1, seed=make_rng(0, 1)), generate_sample(m, 40, 2, seed=make_rng(0, 2))]
        r = permutation_test(samples, TestConfig(n_boot=200, calibration="permutation"))
        assert r.p_value < 0.05
