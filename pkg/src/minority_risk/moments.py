"""Gaussian moments of activation functions.

For ``G ~ N(0, 1)`` the random-feature asymptotics only see an activation
through three numbers::

    mu0 = E sigma(G),  mu1 = E G sigma(G),  mu_star^2 = E sigma(G)^2 - mu0^2 - mu1^2

and the ratio ``xi = mu1 / mu_star``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import expit, roots_hermitenorm, roots_legendre

from .errors import DegenerateActivation, NonFiniteIntegrand

DEFAULT_ORDER = 200

# mu_star^2 in [-MU_STAR2_ROUNDOFF, 0) is treated as round-off and clamped
MU_STAR2_ROUNDOFF = 1e-12
MU_STAR_MIN = 1e-9

# Panel edges for the split quadrature. Beyond |u| = 40 the Gaussian weight is
# below 1e-340, so any activation obeying |sigma(u)| <= c0 exp(c1 |u|) with a
# moderate c1 contributes nothing there.
_TAIL = 40.0
_PANEL_EDGES = (-_TAIL, -20.0, -10.0, -6.0, -3.0, 0.0, 3.0, 6.0, 10.0, 20.0, _TAIL)


def _relu(u):
    return np.maximum(u, 0.0)


def _identity(u):
    return np.asarray(u, dtype=float)


@dataclass(frozen=True)
class Activation:
    """A pointwise activation function.

    ``breakpoints`` lists points where the function (or its derivative) is not
    smooth; quadrature panels are split there so convergence stays spectral.
    Custom activations are trusted to satisfy an exponential growth bound.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    breakpoints: tuple[float, ...] = ()

    def __call__(self, u):
        return self.fn(u)

    @classmethod
    def custom(cls, fn, name="custom", breakpoints=()):
        return cls(name, fn, tuple(float(b) for b in breakpoints))

    @classmethod
    def from_name(cls, name: str) -> "Activation":
        try:
            return BUILTIN[name.lower()]
        except KeyError:
            raise ValueError(
                f"unknown activation {name!r}; expected one of {sorted(BUILTIN)}"
            ) from None


RELU = Activation("relu", _relu, (0.0,))
SIGMOID = Activation("sigmoid", expit)
TANH = Activation("tanh", np.tanh)
IDENTITY = Activation("identity", _identity)

BUILTIN = {a.name: a for a in (RELU, SIGMOID, TANH, IDENTITY)}


@dataclass(frozen=True)
class ActivationMoments:
    mu0: float
    mu1: float
    mu_star: float
    second_moment: float

    @property
    def xi(self) -> float:
        if self.mu_star <= 0.0:
            raise DegenerateActivation("xi is undefined when mu_star = 0")
        return self.mu1 / self.mu_star


@lru_cache(maxsize=32)
def _hermite_rule(order):
    nodes, weights = roots_hermitenorm(order)
    return nodes, weights / weights.sum()


@lru_cache(maxsize=32)
def _legendre_rule(order):
    return roots_legendre(order)


def _checked(values, nodes):
    values = np.asarray(values, dtype=float)
    if values.shape != nodes.shape:
        values = np.broadcast_to(values, nodes.shape)
    if not np.all(np.isfinite(values)):
        bad = nodes[~np.isfinite(values)][0]
        raise NonFiniteIntegrand(f"integrand is not finite at node u={bad:.6g}")
    return values


def gauss_hermite_expectation(f, order: int = DEFAULT_ORDER) -> float:
    """``E f(G)`` by probabilists' Gauss-Hermite quadrature (weights sum to 1).

    Exact for polynomials of degree < 2*order; converges only algebraically for
    integrands with a kink (ReLU), see :func:`gaussian_expectation`.
    """
    if order < 2:
        raise ValueError("order must be >= 2")
    nodes, weights = _hermite_rule(int(order))
    return float(weights @ _checked(f(nodes), nodes))


def _split_nodes(order, breakpoints):
    edges = sorted({*_PANEL_EDGES, *(b for b in breakpoints if -_TAIL < b < _TAIL)})
    t, w = _legendre_rule(int(order))
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        x = half * t + 0.5 * (a + b)
        nodes.append(x)
        weights.append(half * w * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi))
    return np.concatenate(nodes), np.concatenate(weights)


def gaussian_expectation(f, order: int = DEFAULT_ORDER, breakpoints=()) -> float:
    """``E f(G)`` by panel Gauss-Legendre quadrature on ``[-40, 40]``.

    Panels are split at ``breakpoints`` so that piecewise-smooth integrands
    (ReLU and friends) are integrated to machine precision.
    """
    if order < 2:
        raise ValueError("order must be >= 2")
    nodes, weights = _split_nodes(order, tuple(breakpoints))
    return float(weights @ _checked(f(nodes), nodes))


def activation_moments(act: Activation, order: int = DEFAULT_ORDER) -> ActivationMoments:
    if order < 2:
        raise ValueError("order must be >= 2")
    nodes, weights = _split_nodes(order, act.breakpoints)
    s = _checked(act(nodes), nodes)
    mu0 = float(weights @ s)
    mu1 = float(weights @ (nodes * s))
    second = float(weights @ (s * s))
    mu_star2 = second - mu0**2 - mu1**2
    if mu_star2 < -MU_STAR2_ROUNDOFF:
        raise DegenerateActivation(
            f"E sigma(G)^2 < mu0^2 + mu1^2 by {-mu_star2:.3g}; quadrature is unreliable"
        )
    mu_star = math.sqrt(max(mu_star2, 0.0))
    if mu_star <= MU_STAR_MIN:
        raise DegenerateActivation(
            f"activation {act.name!r} has mu_star = {mu_star:.3g}; it is (numerically) linear"
        )
    return ActivationMoments(mu0=mu0, mu1=mu1, mu_star=mu_star, second_moment=second)
