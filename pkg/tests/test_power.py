import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from covoptest.cptest import TestConfig
from covoptest.estim import sample_cov
from covoptest.fcore import eigen_decompose, hs_norm, inner_product
from covoptest.fourth import gaussian_upsilon_matrix, pooled_psi, psi_eigensystem
from covoptest.power import (
    FCPCModel,
    drift_operator,
    fourier_basis,
    generate_sample,
    mc_size_power,
    noncentral_mixture,
    population_psi,
    population_upsilon,
    sine_basis,
    theoretical_power,
)
from covoptest.quadform import ChiSquareMixture, sample_mixture


class TestModel:
    def test_bases_orthonormal(self, grid):
        for phi in (sine_basis(grid, 4), fourier_basis(grid, 5)):
            assert_allclose((phi * grid.weights) @ phi.T, np.eye(len(phi)), atol=1e-10)

    @pytest.mark.parametrize(
        "kw",
        [
            dict(eigenvalues=[1.0, 2.0]),
            dict(eigenvalues=[1.0, -0.5]),
            dict(score_law="t", df=3),
            dict(score_law="t", df=4),
            dict(score_law="cauchy"),
            dict(deltas=[1.0]),
            dict(scale2=0.0),
        ],
    )
    def test_rejects(self, grid, kw):
        args = dict(eigenvalues=[2.0, 1.0], eigenfunctions=sine_basis(grid, 2))
        args.update(kw)
        with pytest.raises(ValueError):
            FCPCModel(grid, **args)

    def test_not_orthonormal(self, grid):
        with pytest.raises(ValueError, match="orthonormal"):
            FCPCModel(grid, [1.0, 1.0], 2 * sine_basis(grid, 2))

    @pytest.mark.parametrize("law,df", [("gaussian", None), ("uniform", None), ("t", 8.0)])
    def test_score_standardization(self, grid, law, df):
        m = FCPCModel(grid, [1.0], sine_basis(grid, 1), score_law=law, df=df)
        f = m.draw_scores(np.random.default_rng(0), 400000)
        assert abs(f.mean()) < 0.01
        assert f.var() == pytest.approx(1.0, abs=0.01)
        assert np.mean(f**4) == pytest.approx(m.kurtosis, rel=0.1)

    def test_negative_perturbation(self, grid):
        m = FCPCModel(grid, [1.0], sine_basis(grid, 1), deltas=[-20.0])
        with pytest.raises(ValueError, match="negative"):
            generate_sample(m, 5, which=2, total_n=100)


class TestGenerate:
    def test_zero_eigenvalues(self, grid):
        mu = np.sin(grid.points)
        m = FCPCModel(grid, [0.0, 0.0], sine_basis(grid, 2), means=(mu, mu))
        s = generate_sample(m, 7, seed=1)
        assert_allclose(s.values, np.tile(mu, (7, 1)), atol=0)

    def test_matched_seeds(self, gauss_model):
        a = generate_sample(gauss_model, 20, 1, total_n=40, seed=5)
        b = generate_sample(gauss_model, 20, 2, total_n=40, seed=5)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(gauss_model.covariance(1).kernel, gauss_model.covariance(2, 40).kernel)

    def test_deterministic(self, gauss_model):
        assert np.array_equal(generate_sample(gauss_model, 10, seed=3).values, generate_sample(gauss_model, 10, seed=3).values)

    def test_large_sample_recovers_model(self, gauss_model):
        s = generate_sample(gauss_model, 50000, seed=7)
        es = eigen_decompose(sample_cov(s))
        assert_allclose(es.eigenvalues[:3], [2.0, 1.0, 0.5], rtol=0.02)
        for k in range(3):
            assert abs(inner_product(es.eigenfunctions[k], gauss_model.eigenfunctions[k], s.grid)) > 0.99

    def test_trace_convergence(self, gauss_model):
        n = 10**4
        s = generate_sample(gauss_model, n, seed=8)
        tr = sample_cov(s).trace()
        # var(sum lambda f^2) = 2 sum lambda^2 for gaussian scores
        se = np.sqrt(2 * np.sum(np.square([2.0, 1.0, 0.5])) / n)
        assert abs(tr - 3.5) <= 3 * se

    def test_local_eigenvalues(self, grid):
        m = FCPCModel(grid, [2.0, 1.0], sine_basis(grid, 2), deltas=[5.0, 10.0])
        assert_allclose(m.population_eigenvalues(2, 100), [2.0 * 1.5, 1.0 * 2.0])
        with pytest.raises(ValueError, match="total_n"):
            m.population_eigenvalues(2)


class TestPopulationOperators:
    def test_gaussian_upsilon(self, gauss_model):
        up = population_upsilon(gauss_model)
        assert_allclose(up.matrix, gaussian_upsilon_matrix(np.diag([2.0, 1.0, 0.5])), atol=1e-14)

    def test_psi_theta(self, grid):
        m = FCPCModel(grid, [2.0, 1.0], sine_basis(grid, 2))
        theta, _ = psi_eigensystem(population_psi(m, [500, 500]))
        assert_allclose(theta, [32.0, 16.0, 8.0], rtol=1e-12)

    def test_uniform_upsilon_mc(self, grid):
        m = FCPCModel(grid, [2.0, 1.0], sine_basis(grid, 2), score_law="uniform")
        f = m.draw_scores(np.random.default_rng(2), 400000) * np.sqrt([2.0, 1.0])
        y = (f[:, :, None] * f[:, None, :]).reshape(-1, 4)
        assert_allclose(np.cov(y.T, bias=True), population_upsilon(m).matrix, atol=0.05)


class TestDrift:
    def test_zero(self, gauss_model):
        psi = population_psi(gauss_model, [100, 100])
        _, vec = psi_eigensystem(psi)
        d = drift_operator(gauss_model, psi.basis, vec)
        assert hs_norm(d.gamma) == 0.0
        assert np.all(d.eta == 0)

    def test_rank_one(self, grid):
        m = FCPCModel(grid, [3.0], sine_basis(grid, 1), deltas=[2.0])
        psi = population_psi(m, [100, 100])
        _, vec = psi_eigensystem(psi)
        d = drift_operator(m, psi.basis, vec)
        assert hs_norm(d.gamma) == pytest.approx(6.0, rel=1e-12)
        assert abs(d.eta[0]) == pytest.approx(6.0, rel=1e-12)
        assert d.residual == pytest.approx(0.0, abs=1e-10)

    def test_parseval(self, grid):
        m = FCPCModel(grid, [2.0, 1.0], sine_basis(grid, 2), deltas=[3.0, -1.0])
        psi = population_psi(m, [100, 100])
        _, vec = psi_eigensystem(psi)
        d = drift_operator(m, psi.basis, vec)
        full = hs_norm(d.gamma) ** 2
        assert np.sum(d.eta**2) == pytest.approx(full, rel=1e-10)
        # brute-force projection onto the first two eigenvectors only
        coords = psi.basis.tensor_coords(d.gamma.kernel)
        part = drift_operator(m, psi.basis, vec[:, :2])
        assert_allclose(part.eta, vec[:, :2].T @ coords, rtol=1e-12)
        assert np.sum(part.eta**2) <= full + 1e-12
        assert part.residual == pytest.approx(full - np.sum(part.eta**2))

    def test_basis_mismatch(self, grid, gauss_model):
        from covoptest.fcore import Grid

        other = FCPCModel(Grid.uniform(0, 1, 31), [1.0], sine_basis(Grid.uniform(0, 1, 31), 1))
        psi = population_psi(other, [10, 10])
        with pytest.raises(ValueError):
            drift_operator(gauss_model, psi.basis, np.eye(1))


class TestNoncentral:
    def test_central(self):
        mix = noncentral_mixture([2.0, 1.0], [0.0, 0.0])
        assert mix.is_central
        central = ChiSquareMixture([2.0, 1.0])
        assert np.array_equal(mix.weights, central.weights)
        assert np.array_equal(sample_mixture(mix, 100, 1), sample_mixture(central, 100, 1))

    def test_single(self):
        assert noncentral_mixture([1.0], [2.0]).mean() == pytest.approx(5.0)

    def test_two_mc_mean(self):
        x = sample_mixture(noncentral_mixture([2.0, 1.0], [1.0, 1.0]), 10**6, 0)
        assert abs(x.mean() - 5.0) <= 0.01

    def test_zero_theta_dropped(self):
        with pytest.warns(RuntimeWarning, match="undetectable"):
            mix = noncentral_mixture([2.0, 0.0], [1.0, 3.0])
        assert len(mix) == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            noncentral_mixture([1.0], [1.0, 2.0])


class TestMonteCarlo:
    def test_deterministic_and_parallel(self, gauss_model):
        cfg = TestConfig(n_boot=200)
        a = mc_size_power(gauss_model, [30, 30], cfg, reps=6, seed=2)
        b = mc_size_power(gauss_model, [30, 30], cfg, reps=6, seed=2, n_jobs=2)
        assert np.array_equal(a.p_values, b.p_values)
        assert a.mc_stderr == pytest.approx(np.sqrt(a.rejection_rate * (1 - a.rejection_rate) / 6))

    def test_reps_validation(self, gauss_model):
        with pytest.raises(ValueError):
            mc_size_power(gauss_model, [30, 30], reps=0)

    def test_proportional(self, grid):
        m = FCPCModel(grid, [2.0, 1.0, 0.5], sine_basis(grid, 3), scale2=2.0)
        assert mc_size_power(m, [200, 200], TestConfig(n_boot=1000), reps=300, seed=1).rejection_rate >= 0.9

    def test_theoretical_power_null(self, gauss_model):
        pred = theoretical_power(gauss_model, [200, 200], n_draws=200000)
        assert pred.power == pytest.approx(0.05, abs=0.003)

    def test_finite_n_prediction(self, grid):
        m = FCPCModel(grid, [2.0, 1.0], sine_basis(grid, 2), deltas=[10.0, 10.0])
        pred = theoretical_power(m, [500, 500], total_n=1000, n_draws=200000)
        res = mc_size_power(m, [500, 500], TestConfig(n_boot=2000), reps=400, seed=11)
        se = np.sqrt(pred.power * (1 - pred.power) / 400)
        assert abs(res.rejection_rate - pred.power) <= 4 * se

    def test_pooled_psi_equals_population(self, grid):
        m = FCPCModel(grid, [2.0, 1.0], sine_basis(grid, 2))
        up = population_upsilon(m)
        assert_allclose(pooled_psi([up, up], [0.3, 0.7]).matrix, population_psi(m, [30, 70]).matrix)
