"""Tests of equality of covariance operators across k samples.

The statistic is ``T = n * sum_{j>=2} ||Gamma_j - Gamma_1||_F^2`` with
``n = n_1 + ... + n_k``. Its null law is approximated by the weighted
chi-square mixture whose weights are the eigenvalues of the estimated
``Psi`` (two samples) or ``Psi_W`` (k samples).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .estim import estimate_cov, smooth_curves
from .fcore import FunctionalSample, eigen_decompose, hs_inner, same_grid
from .fourth import (
    block_psi_w,
    estimate_upsilon,
    pooled_basis,
    pooled_cov,
    pooled_psi,
    psi_eigenvalues,
    sample_taus,
)
from .quadform import (
    DEFAULT_N_BOOT,
    ChiSquareMixture,
    make_rng,
    pvalue_from_draws,
    quantile_from_draws,
    sample_mixture,
)

SCHEMA = "covop-test/1"
ESTIMATORS = ("empirical", "smoothed", "spatial")
CALIBRATIONS = ("mixture", "parametric", "permutation")
UPSILON_MODES = ("empirical", "gaussian")


class DegenerateNullError(ArithmeticError):
    """The estimated null operator has no positive eigenvalue."""


@dataclass(frozen=True)
class TestConfig:
    """Settings of a covariance-equality test.

    ``q`` fixes the tensor-basis size; when None the smallest size capturing
    ``var_frac`` of the pooled trace is used, capped at ``floor(n^(1/3))``.
    """

    __test__ = False

    alpha: float = 0.05
    n_boot: int = DEFAULT_N_BOOT
    q: int | None = None
    var_frac: float = 0.99
    upsilon_mode: str = "empirical"
    estimator: str = "empirical"
    bandwidth: float | None = None
    kernel: str = "epanechnikov"
    calibration: str = "mixture"
    seed: int | None = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.n_boot) < 100:
            raise ValueError(f"n_boot must be at least 100, got {self.n_boot}")
        if self.q is not None and int(self.q) < 1:
            raise ValueError("q must be a positive integer")
        if not 0 < self.var_frac <= 1:
            raise ValueError("var_frac must lie in (0, 1]")
        if self.upsilon_mode not in UPSILON_MODES:
            raise ValueError(f"upsilon_mode must be one of {UPSILON_MODES}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.calibration not in CALIBRATIONS:
            raise ValueError(f"calibration must be one of {CALIBRATIONS}")
        if self.estimator == "smoothed" and not (self.bandwidth is not None and self.bandwidth > 0):
            raise ValueError("the smoothed estimator needs a positive bandwidth")
        if self.estimator == "spatial" and self.calibration != "permutation":
            raise ValueError(
                "the spatial estimator has no known limit law; "
                "only calibration='permutation' is available for it"
            )


@dataclass(frozen=True)
class TestReport:
    """Outcome of a test together with the diagnostics that produced it."""

    __test__ = False

    statistic: float
    p_value: float
    critical_value: float
    alpha: float
    reject: bool
    theta_hat: list
    q_used: int | None
    n_terms: int
    sample_sizes: list
    taus: list
    labels: list
    estimator: str
    calibration: str
    upsilon_mode: str
    n_boot: int
    seed: int | None
    clipped_psd_mass: float
    retained_trace_fraction: float | None
    experimental: bool
    notes: list = field(default_factory=list)

    def to_dict(self):
        d = {"schema": SCHEMA, "version": __version__}
        d.update(asdict(self))
        return d

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, allow_nan=False)


def _check_samples(samples, min_k=2):
    samples = list(samples)
    if len(samples) < min_k:
        raise ValueError(f"need at least {min_k} samples, got {len(samples)}")
    for s in samples:
        if not isinstance(s, FunctionalSample):
            raise TypeError("samples must be FunctionalSample instances")
        if s.n < 2:
            raise ValueError(f"sample {s.label!r} has fewer than 2 curves")
    same_grid(*(s.grid for s in samples))
    return samples


def statistic_two(s1, s2, estimator="empirical", bandwidth=None, kernel="epanechnikov"):
    """``T_n = (n_1 + n_2) * ||Gamma_1 - Gamma_2||_F^2``."""
    s1, s2 = _check_samples([s1, s2])
    c1 = estimate_cov(s1, estimator, bandwidth, kernel)
    c2 = estimate_cov(s2, estimator, bandwidth, kernel)
    d = c1 - c2
    return (s1.n + s2.n) * hs_inner(d, d)


def statistic_k(samples, estimator="empirical", bandwidth=None, kernel="epanechnikov"):
    """``T_{k,n} = n * sum_{j>=2} ||Gamma_j - Gamma_1||_F^2``."""
    samples = _check_samples(samples)
    covs = [estimate_cov(s, estimator, bandwidth, kernel) for s in samples]
    return _statistic_from_covs(covs, sum(s.n for s in samples))


def _statistic_from_covs(covs, n):
    return n * sum(hs_inner(c - covs[0], c - covs[0]) for c in covs[1:])


def _prepared(samples, config):
    if config.estimator == "smoothed":
        return [smooth_curves(s, config.bandwidth, config.kernel) for s in samples]
    return samples


def _report(samples, config, statistic, draws, **extra):
    p = pvalue_from_draws(draws, statistic)
    crit = quantile_from_draws(draws, 1.0 - config.alpha)
    fields = dict(
        theta_hat=[],
        q_used=None,
        n_terms=0,
        clipped_psd_mass=0.0,
        retained_trace_fraction=None,
        experimental=False,
        notes=[],
    )
    fields.update(extra)
    return TestReport(
        statistic=float(statistic),
        p_value=float(p),
        critical_value=float(crit),
        alpha=float(config.alpha),
        reject=bool(p <= config.alpha),
        sample_sizes=[int(s.n) for s in samples],
        taus=[float(t) for t in sample_taus(samples)],
        labels=[None if s.label is None else str(s.label) for s in samples],
        estimator=config.estimator,
        calibration=config.calibration,
        upsilon_mode=config.upsilon_mode,
        n_boot=int(config.n_boot),
        seed=config.seed,
        **fields,
    )


def null_mixture(samples, config, path="auto"):
    """Estimated null mixture and the basis diagnostics behind it.

    ``path`` selects the two-sample operator (``"two"``), the block operator
    (``"k"``) or picks by the number of samples (``"auto"``).
    """
    basis = pooled_basis(samples, q=config.q, var_frac=config.var_frac)
    ups = [estimate_upsilon(s, basis, config.upsilon_mode) for s in samples]
    taus = sample_taus(samples)
    if path == "auto":
        path = "two" if len(samples) == 2 else "k"
    if path == "two":
        if len(samples) != 2:
            raise ValueError("the two-sample path needs exactly 2 samples")
        op = pooled_psi(ups, taus)
    elif path == "k":
        op = block_psi_w(ups, taus)
    else:
        raise ValueError(f"unknown path {path!r}")
    theta = psi_eigenvalues(op)
    if theta.size == 0:
        raise DegenerateNullError(
            "all estimated null eigenvalues are zero; increase q or collect more data"
        )
    return ChiSquareMixture(theta), basis, op


def run_test(samples, config=None, path="auto"):
    """Test equality of the covariance operators of ``samples``.

    Parameters
    ----------
    samples : list of FunctionalSample
        ``k >= 2`` samples on a common grid.
    config : TestConfig, optional
    path : {"auto", "two", "k"}
        Forces the two-sample or k-sample null operator for ``k == 2``.

    Returns
    -------
    TestReport
    """
    config = TestConfig() if config is None else config
    samples = _check_samples(samples)
    if config.calibration == "parametric":
        return parametric_bootstrap_test(samples, config)
    if config.calibration == "permutation":
        return permutation_test(samples, config)

    prepared = _prepared(samples, config)
    statistic = statistic_k(prepared)
    mix, basis, op = null_mixture(prepared, config, path)
    draws = sample_mixture(mix, config.n_boot, config.seed)
    notes = []
    if config.estimator == "smoothed":
        notes.append("null operator estimated from the smoothed curves with the empirical-estimator formula")
    return _report(
        samples,
        config,
        statistic,
        draws,
        theta_hat=[float(t) for t in mix.weights],
        q_used=basis.q,
        n_terms=len(mix),
        clipped_psd_mass=float(op.clipped_mass),
        retained_trace_fraction=float(basis.retained_fraction),
        notes=notes,
    )


def parametric_bootstrap_test(samples, config=None):
    """Gaussian parametric bootstrap of the statistic under the null.

    Every replicate draws all groups from a centred Gaussian process whose
    covariance is the pooled estimate, generated through its Karhunen-Loeve
    expansion, and recomputes the statistic. Working in the coordinates of
    the pooled eigenbasis gives the same HS norms as the grid computation.
    """
    config = TestConfig(calibration="parametric") if config is None else config
    samples = _check_samples(samples)
    prepared = _prepared(samples, config)
    statistic = statistic_k(prepared)
    eig = eigen_decompose(pooled_cov(prepared))
    sizes = [s.n for s in prepared]
    n = sum(sizes)
    sd = np.sqrt(eig.eigenvalues)
    draws = np.empty(config.n_boot)
    for r in range(config.n_boot):
        rng = make_rng(config.seed, r)
        covs = []
        for n_i in sizes:
            f = rng.standard_normal((n_i, sd.size)) * sd
            f -= f.mean(axis=0)
            covs.append(f.T @ f / n_i)
        draws[r] = n * sum(np.sum((c - covs[0]) ** 2) for c in covs[1:])
    return _report(
        samples,
        config,
        statistic,
        draws,
        q_used=int(sd.size),
        notes=["bootstrap samples for every group drawn from the pooled covariance (null imposed)"],
    )


def permutation_test(samples, config=None):
    """Permutation calibration: group labels are reshuffled over the pooled curves.

    This is the only calibration offered for the spatial estimator, whose
    limit law is unknown; reports from it are flagged experimental.
    """
    config = TestConfig(calibration="permutation") if config is None else config
    samples = _check_samples(samples)
    grid = samples[0].grid
    sizes = [s.n for s in samples]
    n = sum(sizes)
    pooled = np.vstack([s.values for s in samples])
    cuts = np.cumsum(sizes)[:-1]

    def stat(values):
        parts = [FunctionalSample(grid, v) for v in np.split(values, cuts)]
        return statistic_k(parts, config.estimator, config.bandwidth, config.kernel)

    statistic = stat(pooled)
    draws = np.empty(config.n_boot)
    for r in range(config.n_boot):
        perm = make_rng(config.seed, r).permutation(n)
        draws[r] = stat(pooled[perm])
    return _report(
        samples,
        config,
        statistic,
        draws,
        experimental=True,
        notes=["permutation calibration; exchangeability of the pooled curves is assumed"],
    )


__all__ = [
    "DegenerateNullError",
    "TestConfig",
    "TestReport",
    "null_mixture",
    "parametric_bootstrap_test",
    "permutation_test",
    "run_test",
    "statistic_k",
    "statistic_two",
]
