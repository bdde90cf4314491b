"""Plain duality lower bound for the amplitude-residual objective.

A candidate solution is summarized by two scalars: its squared norm c and
its overlap x with the planted unit-norm signal (r = sqrt(c - x^2) is the
orthogonal mass).  For standard normal g0, g1 the quantity

    f_q(c, x) = E (|g0| - |g0 x + g1 r|)^2

drives the bound: at oversampling ratio alpha the scaled objective of the
constrained recovery problem is lower-bounded by

    phi0(alpha, c, x) = max(sqrt(alpha f_q) - r, 0)^2.

f_q is evaluated by integrating one Gaussian analytically (an erf/exp
closed form) and the remaining one numerically on the half line with the
doubled weight 2 e^{-u^2/2}/sqrt(2 pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .numerics import QuadratureSpec, gauss_weighted_integral

__all__ = ["ParamPoint", "PlainBoundResult", "f_q_closed", "phi0_plain"]

_FEAS_SLOP = 1e-12


@dataclass(frozen=True)
class ParamPoint:
    """A feasible (c, x) pair with derived r = sqrt(c - x^2).

    c > 0 is the squared norm of the candidate, x >= 0 its overlap with
    the planted signal; feasibility requires x^2 <= c.
    """

    c: float
    x: float
    r: float

    def __init__(self, c: float, x: float):
        c = float(c)
        x = float(x)
        if not (c > 0 and math.isfinite(c) and math.isfinite(x)):
            raise ValueError(f"need finite c > 0, got c={c}")
        if x < 0:
            raise ValueError(f"overlap must be nonnegative, got x={x}")
        if x * x > c * (1.0 + _FEAS_SLOP):
            raise ValueError(f"infeasible point: x^2={x*x} exceeds c={c}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "r", math.sqrt(max(c - x * x, 0.0)))


@dataclass(frozen=True)
class PlainBoundResult:
    """Bound value with the ingredients it was assembled from.

    ``r_y_hat`` is the maximizing dual radius: max(sqrt(alpha f_q)/r - 1, 0)
    for r > 0; it degenerates to 0 when f_q = 0 and to +inf when r = 0 with
    f_q > 0 (the dual constraint becomes inactive).
    """

    f_q: float
    r_y_hat: float
    phi0: float


def _fq_integrand(pt: ParamPoint):
    """Half-line integrand of f_q after the inner Gaussian average.

    For outer variable u >= 0 the inner average of |g0| |g0 x + g1 r| over
    g1 has the closed form

        I(u) = x u^2 erf(u x / (r sqrt2)) + r u sqrt(2/pi) e^{-u^2 x^2/(2 r^2)}

    and the integrand is (1 + c) - 2 I(u).
    """
    c, x, r = pt.c, pt.x, pt.r
    inv = x / (r * math.sqrt(2.0))
    coef = r * math.sqrt(2.0 / math.pi)
    decay = x * x / (2.0 * r * r)

    def fq1(u):
        inner = x * u * u * erf(u * inv) + coef * u * np.exp(-decay * u * u)
        return (1.0 + c) - 2.0 * inner

    return fq1


def f_q_closed(pt: ParamPoint, quad: QuadratureSpec | None = None) -> float:
    """E (|g0| - |g0 x + g1 r|)^2 via the erf/exp closed form.

    At r = 0 both absolute values collapse onto |g0| and the expectation
    is (1 - x)^2 exactly (the closed form divides by r, so this edge is
    evaluated directly).
    """
    quad = quad or QuadratureSpec()
    if pt.r == 0.0:
        return (1.0 - pt.x) ** 2
    val = 2.0 * gauss_weighted_integral(_fq_integrand(pt), "half_line", quad)
    return max(val, 0.0)


def phi0_plain(alpha: float, pt: ParamPoint,
               quad: QuadratureSpec | None = None) -> PlainBoundResult:
    """Plain lower bound max(sqrt(alpha f_q) - r, 0)^2 with its optimizer."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    fq = f_q_closed(pt, quad)
    s = math.sqrt(alpha * fq)
    if fq == 0.0:
        r_y_hat = 0.0
    elif pt.r == 0.0:
        r_y_hat = math.inf
    else:
        r_y_hat = max(s / pt.r - 1.0, 0.0)
    phi0 = max(s - pt.r, 0.0) ** 2
    return PlainBoundResult(f_q=fq, r_y_hat=r_y_hat, phi0=phi0)
