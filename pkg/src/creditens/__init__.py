"""Ensemble-averaged credit portfolio loss distributions.

Merton-type structural losses with asset correlations averaged over a
Wishart-distributed ensemble: heavy-tailed return densities, analytic loss
densities at finite portfolio size, the exact infinite-portfolio limit, a
Monte Carlo oracle and a calibration pipeline for the two model parameters.
"""

from ._kernels import BACKEND_NAME, available_backends
from .calibration import (
    FitReport,
    PricePanel,
    ReturnMatrix,
    calibrate_panel,
    compute_returns,
    estimate_drift_vol,
    fit_n,
    mean_correlation,
    read_price_panel,
    rotate_and_rescale,
)
from .ensemble_returns import (
    CovarianceSpec,
    DensityCurve,
    EnsembleParams,
    averaged_density,
    averaged_density_onefactor,
    gaussian_density,
    sample_returns,
    univariate_rescaled_density,
    univariate_rescaled_logpdf,
)
from .errors import (
    BracketError,
    ConsistencyError,
    CreditEnsError,
    DataError,
    QuadratureError,
    ValidationError,
)
from .montecarlo import (
    ComparisonReport,
    EmpiricalDensity,
    LossSamples,
    SimConfig,
    compare_density,
    default_loss_edges,
    histogram,
    simulate_losses,
)
from .numerics import (
    QuadratureConfig,
    QuadratureRule,
    bessel_k,
    bracketed_root,
    gauss_hermite_scaled,
    gauss_laguerre,
    std_normal_cdf,
    sym_eigen,
)
from .portfolio_loss import (
    HomogeneousSpec,
    Horizon,
    LossMixture,
    Obligor,
    Portfolio,
    aggregate_moments,
    individual_loss,
    limit_loss_curve,
    limit_loss_density,
    limit_tail_mass,
    loss_density,
    loss_density_curve,
    loss_distribution,
    loss_tail_mass,
    moment_mjk,
    moment_mjk_du,
    portfolio_loss,
    terminal_value,
)

__version__ = "0.1.0"
