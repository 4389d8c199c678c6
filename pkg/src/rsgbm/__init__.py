"""Pricing and variance-optimal hedging under regime-switching GBM."""

from .auxfn import AuxFunctions, TimeDepGenerator, UniformizationBound
from .errors import (
    BoundViolation,
    CholeskyFailure,
    DimensionMismatch,
    GridTooCoarse,
    InvalidGenerator,
    MissingGradient,
    MultiAssetUnsupported,
    NegativeRate,
    NegativeTime,
    NonPositiveVol,
    NoValidGenerator,
    NumericalError,
    PricerFailure,
    QuadratureNotConverged,
    RSGBMError,
    SingularCovariance,
    ValidationError,
)
from .hedging import (
    HedgeConfig,
    HedgeResults,
    HedgeStats,
    hedging_error_decomposition,
    martingale_diagnostics,
    optimality_check,
    simulate_hedge,
)
from .model import (
    RegimeModel,
    approximate_generator,
    discrete_to_continuous,
    generator_from_transition,
    load_model,
    parse_config,
    risk_quantities,
    stationary_distribution,
    transition_matrix,
    validate_model,
)
from .pricing import (
    FourierPricer,
    GridPricer,
    NestedMCPricer,
    Payoff,
    PriceEstimate,
    alpha,
    bs_delta,
    bs_price,
    fourier_call,
    fourier_call_delta,
    fourier_put,
    mc_delta,
    mc_price,
    mc_price_and_delta,
)
from .simulate import MeasureTag, RegimePath, RegimePaths, sample_regime_path, sample_regime_paths, sample_terminal

__version__ = "0.1.0"
