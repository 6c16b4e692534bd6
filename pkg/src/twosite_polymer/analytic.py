"""Closed-form quantities of the two-site polymer model.

The mean overlap u(t) = E[I_t] of the model satisfies
u'(t) = E[P(I_t)] with the quadratic

    P(x) = 3 b^2 x^2 - (5 b^2 + 4) x + 2 (1 + b^2),

where b is the inverse temperature.  Its smaller root alpha_minus lies in
(0, 1) (P(1) = -2 for every b) and is a proven lower bound for u(t); the
associated decay rate is lambda = -3 b^2 (1 + alpha_minus) + 5 b^2 + 4.
The free-energy value tied to alpha_minus is -(b^2 / 2) alpha_minus.

This module also provides an independent equilibrium oracle: the ratio
R = X2/X1 of the two point-to-point partition functions is an autonomous
ergodic diffusion

    dR = (1 - R^2 + b^2 R) dt + sqrt(2) b R dW,

whose stationary density is pi(r) proportional to (1/r) exp(-(r + 1/r)/b^2).
The long-time mean overlap is E_pi[(1 + R^2) / (1 + R)^2], computed here by
quadrature.  For small b it agrees with alpha_minus to O(b^4); for moderate
b it sits strictly above alpha_minus (see overlap_limit_stationary).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Beta",
    "AnalyticSolution",
    "eval_poly",
    "solve_alpha",
    "free_energy",
    "bisect_alpha_minus",
    "overlap_limit_stationary",
]


@dataclass(frozen=True)
class Beta:
    """Inverse temperature, b >= 0."""

    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value) or self.value < 0.0:
            raise ValueError(f"inverse temperature must be finite and >= 0, got {self.value}")


@dataclass(frozen=True)
class AnalyticSolution:
    """All closed-form outputs for one inverse temperature.

    a            midpoint of the root pair, (5 b^2 + 4) / (6 b^2)
    alpha_minus  smaller root of the overlap quadratic, in (0, 1)
    alpha_plus   larger root, > 1
    free_energy  -(b^2 / 2) * alpha_minus, <= 0
    rate_lambda  -3 b^2 (1 + alpha_minus) + 5 b^2 + 4, > 0
    is_limit     True when the b = 0 limiting values are reported
    """

    beta: float
    a: float
    alpha_minus: float
    alpha_plus: float
    free_energy: float
    rate_lambda: float
    is_limit: bool = False


def eval_poly(beta: Beta, x: float) -> float:
    """Evaluate P(x) = 3 b^2 x^2 - (5 b^2 + 4) x + 2 (1 + b^2).

    Uses the factored form (x - 1)(3 b^2 x - 2 b^2 - 4) - 2, which is exact
    at x = 1 (P(1) = -2 identically) and avoids the cancellation the
    expanded form suffers for large b^2.
    """
    b2 = beta.value * beta.value
    if b2 == 0.0:
        raise ValueError("b = 0 degenerates the quadratic to -4x + 2; no root pair exists")
    return (x - 1.0) * (3.0 * b2 * x - 2.0 * b2 - 4.0) - 2.0


def solve_alpha(beta: Beta) -> AnalyticSolution:
    """Both roots of the overlap quadratic plus derived quantities.

    The larger-magnitude root is computed first (no cancellation) and the
    smaller one recovered through the product identity
    alpha_minus * alpha_plus = a - 1/6.  For b -> 0, a ~ 2/(3 b^2) blows
    up and the naive root subtraction would lose ~12 digits.

    b = 0 returns the limiting solution (alpha_minus = 1/2, zero free
    energy, rate 4) flagged with is_limit=True.
    """
    b = beta.value
    if b == 0.0:
        return AnalyticSolution(
            beta=0.0,
            a=math.inf,
            alpha_minus=0.5,
            alpha_plus=math.inf,
            free_energy=0.0,
            rate_lambda=4.0,
            is_limit=True,
        )
    b2 = b * b
    a = (5.0 * b2 + 4.0) / (6.0 * b2)
    disc = a * a - a + 1.0 / 6.0  # > 0 for all a > 5/6, i.e. all b
    alpha_plus = a + math.sqrt(disc)
    alpha_minus = (a - 1.0 / 6.0) / alpha_plus
    rate = -3.0 * b2 * (1.0 + alpha_minus) + 5.0 * b2 + 4.0
    return AnalyticSolution(
        beta=b,
        a=a,
        alpha_minus=alpha_minus,
        alpha_plus=alpha_plus,
        free_energy=-0.5 * b2 * alpha_minus,
        rate_lambda=rate,
    )


def free_energy(beta: Beta) -> float:
    """-(b^2 / 2) * alpha_minus(b); 0 at b = 0."""
    return solve_alpha(beta).free_energy


def bisect_alpha_minus(beta: Beta, tol: float = 1e-13, max_iter: int = 200) -> float:
    """Smaller root of the overlap quadratic by plain bisection on (0, 1).

    Independent of the quadratic-formula route in solve_alpha; used as a
    cross-check oracle.  P(0) = 2(1 + b^2) > 0 and P(1) = -2 < 0 bracket
    the root for every b > 0.
    """
    lo, hi = 0.0, 1.0
    flo = eval_poly(beta, lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = eval_poly(beta, mid)
        if fmid == 0.0 or hi - lo < tol:
            return mid
        if (flo > 0.0) == (fmid > 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def overlap_limit_stationary(beta: Beta, n_grid: int = 20001) -> float:
    """Long-time mean overlap from the stationary law of the ratio process.

    With a = 1/b^2 and r = e^u, the stationary density of u is
    proportional to exp(-2 a cosh(u)), so

        lim_t E[I_t] = int I(e^u) e^{-2a cosh u} du / int e^{-2a cosh u} du,

    with I(r) = (1 + r^2)/(1 + r)^2.  The integrand decays doubly
    exponentially, so a trapezoid rule on a truncated symmetric window is
    accurate to near machine precision.  Returns 1/2 at b = 0.

    This is independent of the quadratic: it requires no root-finding and
    serves as an equilibrium oracle for the simulated overlap plateau.
    """
    b = beta.value
    if b == 0.0:
        return 0.5
    a = 1.0 / (b * b)
    # window where exp(-2a(cosh u - 1)) has dropped below ~1e-40
    U = math.acosh(1.0 + 46.0 / a)
    u = np.linspace(-U, U, n_grid)
    logw = -2.0 * a * (np.cosh(u) - 1.0)  # peak value 0 at u = 0
    w = np.exp(logw)
    r = np.exp(u)
    overlap = (1.0 + r * r) / (1.0 + r) ** 2
    return float(np.trapezoid(overlap * w, u) / np.trapezoid(w, u))
