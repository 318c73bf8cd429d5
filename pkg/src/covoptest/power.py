"""Karhunen-Loeve simulation, local alternatives and size/power studies.

Populations follow a functional common principal component model: they
share the eigenfunctions ``phi_l`` and population 2 has eigenvalues
``lambda_l * (1 + Delta_l / sqrt(n))`` with ``n`` the combined sample size.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .cptest import TestConfig, run_test
from .fcore import (
    CovarianceOperator,
    EigenSystem,
    FunctionalSample,
    Grid,
    _frozen,
    hs_inner,
    orthonormalize,
)
from .fourth import FourthMomentOperator, HSBasis, block_psi_w, pooled_psi, psi_eigensystem
from .quadform import ChiSquareMixture, as_seed_sequence, make_rng, quantile_from_draws, sample_mixture

SCORE_LAWS = ("gaussian", "uniform", "t")


def sine_basis(grid, n_functions):
    """``sqrt(2/|I|) sin(l pi (t - a) / |I|)``, orthonormalized on the grid."""
    a, b = grid.points[0], grid.points[-1]
    ell = np.arange(1, n_functions + 1)[:, None]
    raw = np.sqrt(2.0 / (b - a)) * np.sin(ell * np.pi * (grid.points - a) / (b - a))
    return orthonormalize(raw, grid)


def fourier_basis(grid, n_functions):
    """Constant followed by cos/sin pairs, orthonormalized on the grid."""
    a, b = grid.points[0], grid.points[-1]
    x = (grid.points - a) / (b - a)
    rows = [np.ones_like(x)]
    k = 1
    while len(rows) < n_functions:
        rows.append(np.cos(2 * np.pi * k * x))
        if len(rows) < n_functions:
            rows.append(np.sin(2 * np.pi * k * x))
        k += 1
    return orthonormalize(np.array(rows), grid)


@dataclass(frozen=True, eq=False)
class FCPCModel:
    """Finite Karhunen-Loeve model for two (or more) populations.

    Parameters
    ----------
    grid : Grid
    eigenvalues : array-like of shape (L,)
        Nonincreasing, nonnegative ``lambda_l`` of population 1.
    eigenfunctions : array-like of shape (L, p)
        w-orthonormal ``phi_l``.
    deltas : array-like of shape (L,), optional
        Local perturbations ``Delta_l`` of populations 2..k.
    score_law : {"gaussian", "uniform", "t"}
        Law of the standardized scores (mean 0, variance 1).
    df : float, optional
        Degrees of freedom for ``score_law="t"``; must exceed 4.
    scale2 : float, default=1.0
        Fixed multiplier of the eigenvalues of populations 2..k, for
        non-local (proportional) alternatives.
    means : tuple of curves, optional
        Mean curves of population 1 and of populations 2..k.
    """

    grid: Grid
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    deltas: np.ndarray = None
    score_law: str = "gaussian"
    df: float | None = None
    scale2: float = 1.0
    means: tuple = None

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.eigenvalues, dtype=float))
        phi = np.atleast_2d(np.asarray(self.eigenfunctions, dtype=float))
        if phi.shape != (lam.size, self.grid.size):
            raise ValueError(f"eigenfunctions must have shape ({lam.size}, {self.grid.size})")
        if np.any(lam < 0) or np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be nonnegative and nonincreasing")
        gram = (phi * self.grid.weights) @ phi.T
        if np.max(np.abs(gram - np.eye(lam.size))) > 1e-8:
            raise ValueError("eigenfunctions are not orthonormal on the grid")
        deltas = np.zeros_like(lam) if self.deltas is None else np.atleast_1d(np.asarray(self.deltas, dtype=float))
        if deltas.shape != lam.shape:
            raise ValueError("deltas must have one entry per eigenvalue")
        if self.score_law not in SCORE_LAWS:
            raise ValueError(f"score_law must be one of {SCORE_LAWS}")
        if self.score_law == "t" and not (self.df is not None and self.df > 4):
            raise ValueError("t scores need df > 4 for a finite fourth moment")
        if not self.scale2 > 0:
            raise ValueError("scale2 must be positive")
        p = self.grid.size
        means = (np.zeros(p), np.zeros(p)) if self.means is None else self.means
        means = tuple(_frozen(self.grid.check_curve(m, "mean")) for m in means)
        if len(means) != 2:
            raise ValueError("means holds the curves of population 1 and of the others")
        object.__setattr__(self, "eigenvalues", _frozen(lam))
        object.__setattr__(self, "eigenfunctions", _frozen(phi))
        object.__setattr__(self, "deltas", _frozen(deltas))
        object.__setattr__(self, "means", means)

    @property
    def n_components(self):
        return self.eigenvalues.size

    @property
    def kurtosis(self):
        """``E f^4`` of the standardized score law."""
        if self.score_law == "gaussian":
            return 3.0
        if self.score_law == "uniform":
            return 9.0 / 5.0
        return 3.0 + 6.0 / (self.df - 4.0)

    def population_eigenvalues(self, which=1, total_n=None):
        if which == 1:
            return self.eigenvalues.copy()
        lam = self.eigenvalues * self.scale2
        if np.any(self.deltas):
            if total_n is None:
                raise ValueError("total_n is needed to scale the local perturbations")
            factor = 1.0 + self.deltas / np.sqrt(total_n)
            if np.any(factor < 0):
                raise ValueError("perturbed eigenvalue is negative; increase total_n or reduce Delta")
            lam = lam * factor
        return lam

    def draw_scores(self, rng, n):
        shape = (n, self.n_components)
        if self.score_law == "gaussian":
            return rng.standard_normal(shape)
        if self.score_law == "uniform":
            return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape)
        return rng.standard_t(self.df, shape) * np.sqrt((self.df - 2.0) / self.df)

    def covariance(self, which=1, total_n=None):
        lam = self.population_eigenvalues(which, total_n)
        phi = self.eigenfunctions
        return CovarianceOperator(self.grid, (phi.T * lam) @ phi)

    def basis(self):
        es = EigenSystem(self.eigenvalues, self.eigenfunctions, self.grid, float(self.eigenvalues.sum()))
        return HSBasis(es, 1.0)


def generate_sample(model, n, which=1, total_n=None, seed=None, label=None):
    """Draw ``n`` curves ``mu + sum_l sqrt(lambda_l) f_l phi_l``.

    Scores depend only on ``seed``, so populations that share eigenvalues
    produce identical curves for matched seeds.
    """
    if int(n) < 1:
        raise ValueError("n must be at least 1")
    lam = model.population_eigenvalues(which, total_n)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    f = model.draw_scores(rng, int(n))
    mu = model.means[0 if which == 1 else 1]
    values = mu + (f * np.sqrt(lam)) @ model.eigenfunctions
    return FunctionalSample(model.grid, values, label if label is not None else f"pop{which}")


def population_upsilon(model, lambdas=None):
    """Exact ``Upsilon`` of the model in its own eigenbasis.

    ``M[(a,b),(c,d)] = s_a s_b s_c s_d E[f_a f_b f_c f_d] - lambda_a lambda_c [a=b][c=d]``
    with independent standardized scores.
    """
    lam = model.eigenvalues if lambdas is None else np.asarray(lambdas, dtype=float)
    q = lam.size
    s = np.sqrt(lam)
    eye = np.eye(q)
    pair = (
        np.einsum("ab,cd->abcd", eye, eye)
        + np.einsum("ac,bd->abcd", eye, eye)
        + np.einsum("ad,bc->abcd", eye, eye)
    )
    diag4 = np.einsum("ab,ac,ad->abcd", eye, eye, eye)
    moment = pair + (model.kurtosis - 3.0) * diag4
    scale = np.einsum("a,b,c,d->abcd", s, s, s, s)
    m = scale * moment - np.einsum("a,c,ab,cd->abcd", lam, lam, eye, eye)
    return FourthMomentOperator(model.basis(), m.reshape(q * q, q * q), meta={"mode": "population"})


def population_psi(model, sizes, total_n=None):
    """Population ``Psi`` (or ``Psi_W``) for the given group sizes.

    By default every population uses the null eigenvalues, as in the limit
    law. With ``total_n`` the eigenvalues of populations 2..k are those at
    that sample size.
    """
    sizes = np.asarray(sizes, dtype=float)
    taus = sizes / sizes.sum()
    ups = [population_upsilon(model)]
    other = population_upsilon(
        model, None if total_n is None else model.population_eigenvalues(2, total_n)
    )
    ups += [other] * (len(sizes) - 1)
    return pooled_psi(ups, taus) if len(sizes) == 2 else block_psi_w(ups, taus)


@dataclass(frozen=True, eq=False)
class Drift:
    gamma: CovarianceOperator
    eta: np.ndarray
    residual: float


def drift_operator(model, basis, vectors):
    """Expand ``Gamma = sum Delta_l lambda_l phi_l (x) phi_l`` on eigenvectors of ``Psi``.

    ``vectors`` holds eigenvectors of ``Psi`` (columns) in the tensor
    coordinates of ``basis``. The residual ``||Gamma||^2 - sum eta^2`` is the
    drift mass outside their span.
    """
    if basis.grid != model.grid:
        raise ValueError("basis and model live on different grids")
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] != basis.q**2:
        raise ValueError(f"vectors must have {basis.q ** 2} rows")
    coef = model.deltas * model.eigenvalues
    phi = model.eigenfunctions
    gamma = CovarianceOperator(model.grid, (phi.T * coef) @ phi)
    eta = vectors.T @ basis.tensor_coords(gamma.kernel)
    residual = hs_inner(gamma, gamma) - float(eta @ eta)
    return Drift(gamma, eta, residual)


def noncentral_mixture(theta, eta, tol=1e-12):
    """Limit law ``sum theta_l (Z_l + eta_l / sqrt(theta_l))^2``.

    Components with ``theta_l == 0`` cannot carry a drift; a nonzero
    ``eta_l`` there is dropped with a warning.
    """
    theta = np.asarray(theta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if theta.shape != eta.shape:
        raise ValueError("theta and eta must have the same length")
    top = theta.max() if theta.size else 0.0
    zero = theta <= tol * max(top, 0.0)
    lost = zero & (eta != 0)
    if lost.any():
        warnings.warn(
            f"{int(lost.sum())} drift component(s) sit on zero eigenvalues and are undetectable",
            RuntimeWarning,
            stacklevel=2,
        )
    keep = ~zero
    return ChiSquareMixture(theta[keep], eta[keep] / np.sqrt(theta[keep]))


@dataclass(frozen=True)
class PowerPrediction:
    power: float
    critical_value: float
    theta: list
    eta: list
    residual: float


def theoretical_power(model, sizes, alpha=0.05, n_draws=10**6, seed=0, total_n=None):
    """Limiting rejection probability under the model's local alternative.

    Uses the population ``Psi`` (null eigenvalues unless ``total_n`` is
    given), its eigenexpansion of the drift, and Monte Carlo draws of the
    central and noncentral mixtures.
    """
    if len(sizes) != 2:
        raise ValueError("the local-alternative limit law is available for two samples")
    psi = population_psi(model, sizes, total_n)
    theta, vectors = psi_eigensystem(psi)
    drift = drift_operator(model, psi.basis, vectors)
    central = sample_mixture(ChiSquareMixture(theta), n_draws, as_seed_sequence(seed, 0))
    crit = quantile_from_draws(central, 1.0 - alpha)
    shifted = sample_mixture(noncentral_mixture(theta, drift.eta), n_draws, as_seed_sequence(seed, 1))
    return PowerPrediction(
        power=float(np.mean(shifted > crit)),
        critical_value=crit,
        theta=[float(t) for t in theta],
        eta=[float(e) for e in drift.eta],
        residual=float(drift.residual),
    )


@dataclass(frozen=True)
class SimulationResult:
    rejection_rate: float
    mc_stderr: float
    reps: int
    statistics: np.ndarray = field(repr=False)
    p_values: np.ndarray = field(repr=False)

    @property
    def rejections(self):
        return int(round(self.rejection_rate * self.reps))


def _derived_seed(seed, *keys):
    return int(as_seed_sequence(seed, *keys).generate_state(1, np.uint32)[0])


def simulate_rep(model, sizes, config, seed, rep, path="auto"):
    """One replication: fresh data for every group, then the test."""
    total = int(sum(sizes))
    samples = [
        generate_sample(model, n_i, 1 if i == 0 else 2, total, make_rng(seed, rep, i), label=str(i + 1))
        for i, n_i in enumerate(sizes)
    ]
    cfg = TestConfig(**{**config.__dict__, "seed": _derived_seed(seed, rep, 1 << 20)})
    report = run_test(samples, cfg, path=path)
    return report.statistic, report.p_value


def mc_size_power(model, sizes, config=None, reps=1000, seed=0, n_jobs=1):
    """Rejection rate of :func:`run_test` over ``reps`` simulated data sets.

    Replication ``r`` depends only on ``(seed, r)``, so results do not depend
    on ``n_jobs``.
    """
    config = TestConfig() if config is None else config
    if int(reps) < 1:
        raise ValueError("reps must be at least 1")
    sizes = [int(s) for s in sizes]
    if n_jobs == 1:
        out = [simulate_rep(model, sizes, config, seed, r) for r in range(reps)]
    else:
        from joblib import Parallel, delayed

        out = Parallel(n_jobs=n_jobs)(
            delayed(simulate_rep)(model, sizes, config, seed, r) for r in range(reps)
        )
    stats = np.array([o[0] for o in out])
    pvals = np.array([o[1] for o in out])
    rate = float(np.mean(pvals <= config.alpha))
    return SimulationResult(rate, float(np.sqrt(rate * (1 - rate) / reps)), reps, stats, pvals)
