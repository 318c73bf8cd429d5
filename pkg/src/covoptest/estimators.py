"""scikit-learn style wrappers around the test and the covariance estimators."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_curves, resolve_grid, split_groups
from .cptest import TestConfig, run_test
from .estim import estimate_cov, sample_mean
from .fcore import FunctionalSample, eigen_decompose
from .quadform import DEFAULT_N_BOOT


class CovarianceOperatorTest(BaseEstimator):
    """Test whether groups of curves share one covariance operator.

    Parameters
    ----------
    alpha : float, default=0.05
        Level of the test.
    n_boot : int, default=5000
        Draws (or resamples) of the null distribution.
    q : int, optional
        Size of the tensor basis. By default the smallest size capturing
        ``var_frac`` of the pooled trace, capped at ``floor(n^(1/3))``.
    var_frac : float, default=0.99
    upsilon_mode : {"empirical", "gaussian"}, default="empirical"
        Fourth moments from the data or from the Gaussian reduction.
    estimator : {"empirical", "smoothed", "spatial"}, default="empirical"
    bandwidth : float, optional
        Needed by the smoothed estimator.
    kernel : {"epanechnikov", "gaussian"}, default="epanechnikov"
    calibration : {"mixture", "parametric", "permutation"}, default="mixture"
    seed : int, default=0
    grid : array-like of shape (n_points,), optional
        Evaluation points of the curves; uniform on [0, 1] when omitted.

    Attributes
    ----------
    report_ : TestReport
    statistic_ : float
    p_value_ : float
    critical_value_ : float
    reject_ : bool
    theta_ : ndarray
        Weights of the estimated null mixture.
    groups_ : ndarray
        Group labels in order of first appearance.
    n_features_in_ : int

    Examples
    --------
    >>> import numpy as np
    >>> rng = np.random.default_rng(0)
    >>> X = rng.standard_normal((60, 20)).cumsum(axis=1)
    >>> y = np.repeat([0, 1], 30)
    >>> CovarianceOperatorTest(n_boot=500).fit(X, y).p_value_ > 0.05
    True
    """

    def __init__(
        self,
        alpha=0.05,
        n_boot=DEFAULT_N_BOOT,
        q=None,
        var_frac=0.99,
        upsilon_mode="empirical",
        estimator="empirical",
        bandwidth=None,
        kernel="epanechnikov",
        calibration="mixture",
        seed=0,
        grid=None,
    ):
        self.alpha = alpha
        self.n_boot = n_boot
        self.q = q
        self.var_frac = var_frac
        self.upsilon_mode = upsilon_mode
        self.estimator = estimator
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.calibration = calibration
        self.seed = seed
        self.grid = grid

    def _config(self):
        return TestConfig(
            alpha=self.alpha,
            n_boot=self.n_boot,
            q=self.q,
            var_frac=self.var_frac,
            upsilon_mode=self.upsilon_mode,
            estimator=self.estimator,
            bandwidth=self.bandwidth,
            kernel=self.kernel,
            calibration=self.calibration,
            seed=self.seed,
        )

    def fit(self, X, y):
        """Run the test on curves ``X`` grouped by ``y``.

        Parameters
        ----------
        X : array-like of shape (n_curves, n_points)
        y : array-like of shape (n_curves,)
            Group label of each curve; at least two groups of two curves.

        Returns
        -------
        self : CovarianceOperatorTest
        """
        config = self._config()
        samples = split_groups(X, y, self.grid)
        report = run_test(samples, config)
        self.report_ = report
        self.statistic_ = report.statistic
        self.p_value_ = report.p_value
        self.critical_value_ = report.critical_value
        self.reject_ = report.reject
        self.theta_ = np.asarray(report.theta_hat)
        self.groups_ = np.array([s.label for s in samples])
        self.n_features_in_ = samples[0].grid.size
        return self


class FunctionalCovariance(TransformerMixin, BaseEstimator):
    """Covariance operator of a sample of curves and its principal scores.

    Parameters
    ----------
    n_components : int, optional
        Number of eigenfunctions kept; all positive ones by default.
    estimator : {"empirical", "smoothed", "spatial"}, default="empirical"
    bandwidth : float, optional
    kernel : {"epanechnikov", "gaussian"}, default="epanechnikov"
    grid : array-like of shape (n_points,), optional

    Attributes
    ----------
    covariance_ : CovarianceOperator
    mean_ : ndarray of shape (n_points,)
    eigenvalues_ : ndarray of shape (n_components_,)
    components_ : ndarray of shape (n_components_, n_points)
        Eigenfunctions, orthonormal in the grid inner product.
    n_components_ : int
    n_features_in_ : int
    """

    def __init__(self, n_components=None, estimator="empirical", bandwidth=None, kernel="epanechnikov", grid=None):
        self.n_components = n_components
        self.estimator = estimator
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.grid = grid

    def fit(self, X, y=None):
        """Estimate the covariance operator of ``X``.

        Parameters
        ----------
        X : array-like of shape (n_curves, n_points)
        y : ignored

        Returns
        -------
        self : FunctionalCovariance
        """
        X = check_curves(X, min_rows=2)
        grid = resolve_grid(self.grid, X.shape[1])
        s = FunctionalSample(grid, X)
        cov = estimate_cov(s, self.estimator, self.bandwidth, self.kernel)
        eig = eigen_decompose(cov)
        if self.n_components is not None:
            if int(self.n_components) < 1:
                raise ValueError("n_components must be a positive integer")
            eig = eig.truncate(int(self.n_components))
        self.grid_ = grid
        self.covariance_ = cov
        self.mean_ = sample_mean(s)
        self.eigenvalues_ = eig.eigenvalues
        self.components_ = eig.eigenfunctions
        self.n_components_ = len(eig)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Scores ``<X_j - mean, phi_a>`` of each curve on the fitted eigenfunctions."""
        check_is_fitted(self, "components_")
        X = check_curves(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} points per curve, expected {self.n_features_in_}")
        return ((X - self.mean_) * self.grid_.weights) @ self.components_.T

    def inverse_transform(self, scores):
        check_is_fitted(self, "components_")
        scores = np.atleast_2d(np.asarray(scores, dtype=float))
        return self.mean_ + scores @ self.components_


__all__ = ["CovarianceOperatorTest", "FunctionalCovariance"]
