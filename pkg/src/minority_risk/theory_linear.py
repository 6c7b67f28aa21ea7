"""Limiting minority MSPE of min-norm least squares with isotropic features.

With ``gamma = d/n``, ``s0 = ||beta0||^2``, ``r = ||delta||^2`` and
``c = <beta0, delta>`` the minority risk of the min-norm estimator splits as::

    inductive bias + approx quadratic + 2 * approx cross + variance

The cross term vanishes identically: the inductive-bias residual
``(I - P_X) beta0`` is orthogonal to the row space of ``X`` that contains the
misspecification error.  ``c`` is accepted for interface symmetry.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import AtInterpolationThreshold, DegenerateSubsample

GUARD_BAND = 1e-3


@dataclass(frozen=True)
class LinearRegime:
    gamma: float
    pi: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError(f"pi must lie in [0, 1], got {self.pi}")
        if self.pi < 0.5:
            warnings.warn(
                f"pi = {self.pi} < 1/2: group 1 is expected to be the majority",
                stacklevel=3,
            )


@dataclass(frozen=True)
class LinearBreakdown:
    inductive_bias: float
    approx_quadratic: float
    approx_cross: float
    variance: float
    total: float


def _guard(gamma):
    if abs(gamma - 1.0) < GUARD_BAND:
        raise AtInterpolationThreshold(
            f"gamma = {gamma} is within {GUARD_BAND} of the interpolation threshold"
        )


def inductive_bias(gamma: float, s0: float) -> float:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return max(s0 * (1.0 - 1.0 / gamma), 0.0)


def variance_term(gamma: float, tau: float) -> float:
    _guard(gamma)
    t2 = tau * tau
    if gamma < 1.0:
        return t2 * gamma / (1.0 - gamma)
    return t2 / (gamma - 1.0)


def approx_error(gamma: float, pi: float, r: float, c: float = 0.0) -> tuple[float, float]:
    """Limits of ``||X^+ G X delta||^2`` and of the bias/misspecification cross term.

    ``G`` selects the majority rows.  At ``pi = 1`` the quadratic reduces to
    ``r`` (gamma < 1) and ``r / gamma`` (gamma > 1), the energy of ``delta``
    projected on the row space.
    """
    _guard(gamma)
    if r < 0:
        raise ValueError("r = ||delta||^2 must be non-negative")
    if not math.isfinite(c):
        raise ValueError("c must be finite")
    if gamma < 1.0:
        quad = r * (pi * gamma + pi * pi * (1.0 - 2.0 * gamma)) / (1.0 - gamma)
    else:
        quad = r * (pi / (gamma - 1.0) - pi * pi / (gamma * (gamma - 1.0)))
    return quad, 0.0


def minority_mspe_linear(
    regime: LinearRegime, s0: float, r: float, c: float, tau: float
) -> LinearBreakdown:
    ib = inductive_bias(regime.gamma, s0)
    quad, cross = approx_error(regime.gamma, regime.pi, r, c)
    var = variance_term(regime.gamma, tau)
    return LinearBreakdown(ib, quad, cross, var, ib + quad + 2.0 * cross + var)


def subsample_gamma(gamma: float, pi: float) -> tuple[float, float]:
    """Aspect ratio and majority fraction after subsampling the majority."""
    if pi >= 1.0:
        raise DegenerateSubsample("pi = 1 leaves no minority samples to match")
    return gamma / (2.0 * (1.0 - pi)), 0.5
