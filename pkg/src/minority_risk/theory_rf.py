"""Limiting minority-group risk of ridgeless random-feature regression.

Shapes: ``psi1 = N/d`` (features), ``psi2 = n/d`` (samples), ``pi`` the
majority fraction.  For unit signal the minority risk splits into the
single-group bias ``B*`` and variance ``V*`` plus two misspecification terms
``M1*`` (coefficient ``||delta||^2``) and ``M2*`` (coefficient
``<beta0, delta>``)::

    R0 -> F_beta^2 B* + F_delta^2 M1* + F_beta_delta M2* + tau^2 V*
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NearInterpolationThreshold, NoConvergence
from .moments import ActivationMoments

THRESHOLD_BAND = 1e-3
E0_MIN = 1e-10


@dataclass(frozen=True)
class RfRegime:
    psi1: float
    psi2: float
    pi: float

    def __post_init__(self):
        if not (self.psi1 > 0 and self.psi2 > 0):
            raise ValueError(f"psi1, psi2 must be positive, got {self.psi1}, {self.psi2}")
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError(f"pi must lie in [0, 1], got {self.pi}")
        if self.pi < 0.5:
            warnings.warn(
                f"pi = {self.pi} < 1/2: group 1 is expected to be the majority",
                stacklevel=3,
            )

    def gamma(self) -> float:
        return self.psi1 / self.psi2

    def psi(self) -> float:
        return min(self.psi1, self.psi2)


@dataclass(frozen=True)
class SignalSpec:
    f_beta: float
    f_delta: float
    f_beta_delta: float
    tau: float

    def __post_init__(self):
        if self.f_beta < 0 or self.f_delta < 0 or self.tau < 0:
            raise ValueError("f_beta, f_delta and tau must be non-negative")
        if abs(self.f_beta_delta) > self.f_beta * self.f_delta + 1e-12:
            raise ValueError(
                f"|<beta0, delta>| = {abs(self.f_beta_delta)} exceeds "
                f"||beta0|| ||delta|| = {self.f_beta * self.f_delta}"
            )


@dataclass(frozen=True)
class RiskBreakdown:
    b_star: float
    v_star: float
    psi2_star: float
    m1_star: float
    m2_star: float
    total: float | None = None

    def with_signal(self, signal: SignalSpec) -> "RiskBreakdown":
        total = (
            signal.f_beta**2 * self.b_star
            + signal.f_delta**2 * self.m1_star
            + signal.f_beta_delta * self.m2_star
            + signal.tau**2 * self.v_star
        )
        return RiskBreakdown(
            self.b_star, self.v_star, self.psi2_star, self.m1_star, self.m2_star, total
        )


@dataclass(frozen=True)
class NuPair:
    nu1: complex
    nu2: complex
    zeta: complex
    iterations: int
    residual: float


@dataclass(frozen=True)
class RidgeBreakdown:
    b_ridge: float
    v_ridge: float
    imag_residue: float
    nu: NuPair

    def __iter__(self):
        # unpacks as (b_ridge, v_ridge)
        return iter((self.b_ridge, self.v_ridge))


def chi(xi: float, psi: float) -> float:
    """Non-positive root of ``xi^2 c^2 + (psi xi^2 - xi^2 - 1) c - psi = 0``."""
    if xi <= 0 or psi <= 0:
        raise ValueError("xi and psi must be positive")
    xi2 = xi * xi
    b = psi * xi2 - xi2 - 1.0
    disc = math.sqrt(b * b + 4.0 * xi2 * psi)
    # sqrt(b^2 + c) + b loses digits when b << 0
    s = disc + b if b >= 0 else 4.0 * xi2 * psi / (disc - b)
    return -s / (2.0 * xi2)


def _e_polys(c, xi, psi1, psi2):
    # Horner form in c; coefficients listed from c^5 down to c^0
    x2, x4, x6 = xi**2, xi**4, xi**6
    p12 = psi1 * psi2
    e0 = np.polyval(
        [
            -x6,
            3 * x4,
            (p12 - psi1 - psi2 + 1) * x6 - 2 * x4 - 3 * x2,
            (psi1 + psi2 - 3 * p12 + 1) * x4 + 2 * x2 + 1,
            3 * p12 * x2,
            -p12,
        ],
        c,
    )
    e1 = np.polyval([psi2 * x4, -psi2 * x2, p12 * x2, -p12], c)
    e2 = np.polyval(
        [
            x6,
            -3 * x4,
            (psi1 - 1) * x6 + 2 * x4 + 3 * x2,
            (-psi1 - 1) * x4 - 2 * x2 - 1,
            0.0,
            0.0,
        ],
        c,
    )
    return e0, e1, e2


def e_star_polynomials(xi: float, psi1: float, psi2: float) -> tuple[float, float, float]:
    c = chi(xi, min(psi1, psi2))
    e0, e1, e2 = (float(v) for v in _e_polys(c, xi, psi1, psi2))
    if abs(e0) < E0_MIN:
        raise NearInterpolationThreshold(
            f"E0* = {e0:.3g} at psi1={psi1}, psi2={psi2}: the ridgeless risk diverges"
        )
    return e0, e1, e2


def _check_band(psi1, psi2):
    if abs(psi1 - psi2) / max(psi1, psi2) < THRESHOLD_BAND:
        raise NearInterpolationThreshold(
            f"psi1={psi1} and psi2={psi2} are within the interpolation-threshold band"
        )


def _xi_of(moments):
    return moments.xi if isinstance(moments, ActivationMoments) else float(moments)


def erm_breakdown(regime: RfRegime, moments: ActivationMoments | float) -> RiskBreakdown:
    """Unit-signal risk terms; ``moments`` may also be ``xi`` directly."""
    _check_band(regime.psi1, regime.psi2)
    xi = _xi_of(moments)
    e0, e1, e2 = e_star_polynomials(xi, regime.psi1, regime.psi2)
    b = e1 / e0
    v = e2 / e0
    psi = regime.psi()
    psi2_star = b - 1.0 + 2.0 * (chi(xi, psi) + psi)
    p = regime.pi
    m1 = p * (1.0 - p) * v + p * p * psi2_star
    m2 = p * (b - 1.0 + psi2_star)
    return RiskBreakdown(b, v, psi2_star, m1, m2)


def minority_risk_rf(
    regime: RfRegime, signal: SignalSpec, moments: ActivationMoments | float
) -> RiskBreakdown:
    return erm_breakdown(regime, moments).with_signal(signal)


def angle_to_signal(norm_b0: float, norm_b1: float, theta: float, tau: float) -> SignalSpec:
    """Signal strengths for ``beta1`` at angle ``theta`` (radians) from ``beta0``."""
    if norm_b0 < 0 or norm_b1 < 0:
        raise ValueError("norms must be non-negative")
    cos = math.cos(theta)
    f_delta2 = norm_b0**2 + norm_b1**2 - 2.0 * norm_b0 * norm_b1 * cos
    f_delta = math.sqrt(max(f_delta2, 0.0))
    f_bd = norm_b0 * norm_b1 * cos - norm_b0**2
    # keep Cauchy-Schwarz exact under round-off
    bound = norm_b0 * f_delta
    f_bd = min(max(f_bd, -bound), bound)
    return SignalSpec(float(norm_b0), f_delta, f_bd, float(tau))


def subsample_regime(regime: RfRegime) -> RfRegime:
    """Shapes after discarding majority samples down to the minority count."""
    return RfRegime(regime.psi1, 2.0 * (1.0 - regime.pi) * regime.psi2, 0.5)


def _nu_map(nu1, nu2, zeta, xi2, psi1, psi2):
    den = 1.0 - xi2 * nu1 * nu2
    f1 = psi1 / (-zeta - nu2 - xi2 * nu2 / den)
    f2 = psi2 / (-zeta - nu1 - xi2 * nu1 / den)
    return f1, f2


def nu_fixed_point(
    xi: float,
    psi1: float,
    psi2: float,
    lam: float,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
    damping: float = 0.5,
) -> NuPair:
    """Solve the coupled resolvent equations at ``zeta = i sqrt(psi1 psi2 lam)``.

    Damped Picard iteration started from the large-``|zeta|`` asymptote
    ``nu_k = psi_k / (-zeta)``; the step is halved whenever the residual
    grows.  The residual is measured relative to ``max(1, |nu_k|)`` because
    one of the two functions grows like ``lam^{-1/2}`` as ``lam -> 0``.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    zeta = 1j * math.sqrt(psi1 * psi2 * lam)
    xi2 = xi * xi
    nu1, nu2 = psi1 / (-zeta), psi2 / (-zeta)
    alpha = damping
    prev = math.inf
    res = math.inf
    for it in range(1, max_iter + 1):
        f1, f2 = _nu_map(nu1, nu2, zeta, xi2, psi1, psi2)
        res = max(abs(f1 - nu1) / max(1.0, abs(nu1)), abs(f2 - nu2) / max(1.0, abs(nu2)))
        if not math.isfinite(res):
            break
        if res <= tol:
            return NuPair(complex(nu1), complex(nu2), zeta, it, res)
        if res > prev:
            alpha = max(0.5 * alpha, 1e-3)
        prev = res
        nu1 = (1.0 - alpha) * nu1 + alpha * f1
        nu2 = (1.0 - alpha) * nu2 + alpha * f2
    raise NoConvergence(
        f"nu fixed point did not converge (lam={lam}, residual={res:.3g}, iterations={max_iter})"
    )


def ridge_breakdown(
    xi: float, psi1: float, psi2: float, lam: float, **solver_kw
) -> RidgeBreakdown:
    """Single-group ridge bias and variance at penalty ``lam``."""
    nu = nu_fixed_point(xi, psi1, psi2, lam, **solver_kw)
    c = nu.nu1 * nu.nu2
    e0, e1, e2 = _e_polys(c, xi, psi1, psi2)
    b = e1 / e0
    v = e2 / e0
    return RidgeBreakdown(
        float(b.real), float(v.real), float(max(abs(b.imag), abs(v.imag))), nu
    )
