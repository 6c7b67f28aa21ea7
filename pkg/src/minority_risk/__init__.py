"""Minority-group risk of overparameterized random-feature and linear models."""

from .errors import (
    AtInterpolationThreshold,
    ConfigParseError,
    ConfigValidationError,
    DegenerateActivation,
    DegenerateSubsample,
    EmptyMinority,
    MinorityRiskError,
    NearInterpolationThreshold,
    NoConvergence,
    NonFiniteIntegrand,
    NotSeparable,
    SingularSystem,
)
from .moments import Activation, ActivationMoments, activation_moments, gauss_hermite_expectation
from .theory_linear import LinearBreakdown, LinearRegime, minority_mspe_linear, subsample_gamma
from .theory_rf import (
    RfRegime,
    RiskBreakdown,
    SignalSpec,
    angle_to_signal,
    erm_breakdown,
    minority_risk_rf,
    ridge_breakdown,
    subsample_regime,
)

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "ActivationMoments",
    "AtInterpolationThreshold",
    "ConfigParseError",
    "ConfigValidationError",
    "DegenerateActivation",
    "DegenerateSubsample",
    "EmptyMinority",
    "LinearBreakdown",
    "LinearRegime",
    "MinorityRiskError",
    "NearInterpolationThreshold",
    "NoConvergence",
    "NonFiniteIntegrand",
    "NotSeparable",
    "RfRegime",
    "RiskBreakdown",
    "SignalSpec",
    "SingularSystem",
    "activation_moments",
    "angle_to_signal",
    "erm_breakdown",
    "gauss_hermite_expectation",
    "minority_mspe_linear",
    "minority_risk_rf",
    "ridge_breakdown",
    "subsample_gamma",
    "subsample_regime",
]
