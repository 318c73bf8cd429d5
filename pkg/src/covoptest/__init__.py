"""Tests for the equality of covariance operators of functional samples."""

__version__ = "0.1.0"

from .fcore import (  # noqa: E402
    CovarianceOperator,
    EigenSystem,
    FunctionalSample,
    Grid,
    KernelOperator,
    apply_operator,
    eigen_decompose,
    hs_inner,
    hs_norm,
    inner_product,
    tensor_op,
)
from .estim import (  # noqa: E402
    sample_cov,
    sample_mean,
    smoothed_cov,
    spatial_cov,
    spatial_median,
)
from .quadform import (  # noqa: E402
    ChiSquareMixture,
    cdf_moment_match,
    pvalue_mc,
    quantile_mc,
    sample_mixture,
)
from .cptest import (  # noqa: E402
    DegenerateNullError,
    TestConfig,
    TestReport,
    parametric_bootstrap_test,
    run_test,
    statistic_k,
    statistic_two,
)
from .power import FCPCModel, generate_sample, mc_size_power, noncentral_mixture  # noqa: E402
from .estimators import CovarianceOperatorTest, FunctionalCovariance  # noqa: E402
from .io import export_csv, ingest_csv  # noqa: E402
