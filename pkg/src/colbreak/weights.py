"""Weight functions and their dissipativity under fragmentation averaging.

A weight g is admissible for a daughter distribution b when

* g(x) > 0 for x > 0,
* x -> g(x)/x is non-decreasing,
* g(y) - integral of g(x) b(x, y, z) over (0, y) >= theta * g(y)
  for some theta in (0, 1), uniformly in (y, z).

The constant ``theta`` is the fraction of the g-weighted moment destroyed
per breakup event; every a-priori bound downstream divides by it, so the
stored value must never overestimate the true infimum.

Catalog families (run-config names), all of the form x**alpha * h(x) with
h non-decreasing, which guarantees the closed-form constant
``(alpha - 1) / (nu + alpha + 1)`` against the power-law daughter family:

power(alpha)                      g = x**alpha
power_shifted(alpha, beta)        g = x**alpha * (1+x)**beta
power_exp(alpha, lam)             g = x**alpha * exp(lam*x)
power_log(alpha, gamma)           g = x**alpha * log(1+x)**gamma

The admissibility requirement alpha > 1 is enforced at construction;
out-of-class candidates (for membership testing) must be built with
``candidate=True``.

Dissipativity is only ever exercised for breakup sizes up to the solver's
truncation, so numerical membership is certified on a bounded range
(0, y_max] and reports carry that restriction.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import daughters
from .daughters import DaughterFamily, DaughterSpec

__all__ = [
    "WeightFamily",
    "WeightSpec",
    "eval_g",
    "g_values",
    "closed_form_theta",
    "dissipation_ratio",
    "estimate_theta",
    "ThetaEstimate",
    "infimum_theta",
    "resolve_theta",
    "check_ratio_monotone",
    "default_y_grid",
]

# Numerical infimum gets a 1% haircut before use: downstream bounds divide
# by theta, so an overestimate would weaken checks silently.
SAFETY_MARGIN = 0.99


class WeightFamily(enum.Enum):
    POWER = "power"
    POWER_SHIFTED = "power_shifted"
    POWER_EXP = "power_exp"
    POWER_LOG = "power_log"


@dataclass(frozen=True)
class WeightSpec:
    """A weight function instance.  Immutable after construction.

    ``theta`` is filled in by :func:`resolve_theta` once the weight is
    paired with a daughter distribution; it stays None until then.
    ``candidate=True`` skips the alpha > 1 admissibility requirement so
    out-of-class functions can still be run through the membership tests.
    """

    family: WeightFamily
    alpha: float
    beta: float = 0.0
    lam: float = 1.0
    gamma: float = 1.0
    theta: float | None = None
    candidate: bool = False

    def __post_init__(self):
        if isinstance(self.family, str):
            object.__setattr__(self, "family", WeightFamily(self.family))
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.candidate and not self.alpha > 1.0:
            raise ValueError(f"admissible weights require alpha > 1, got {self.alpha}")
        if self.family is WeightFamily.POWER_SHIFTED and self.beta < 0.0:
            raise ValueError(f"power_shifted requires beta >= 0, got {self.beta}")
        if self.family is WeightFamily.POWER_EXP and not self.lam > 0.0:
            raise ValueError(f"power_exp requires lam > 0, got {self.lam}")
        if self.family is WeightFamily.POWER_LOG and not self.gamma > 0.0:
            raise ValueError(f"power_log requires gamma > 0, got {self.gamma}")
        if self.theta is not None and not (0.0 < self.theta < 1.0):
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")

    def describe(self) -> dict:
        d = {"family": self.family.value, "alpha": self.alpha, "theta": self.theta}
        if self.family is WeightFamily.POWER_SHIFTED:
            d["beta"] = self.beta
        if self.family is WeightFamily.POWER_EXP:
            d["lam"] = self.lam
        if self.family is WeightFamily.POWER_LOG:
            d["gamma"] = self.gamma
        return d


def g_values(spec: WeightSpec, x: np.ndarray) -> np.ndarray:
    """Vectorised weight g(x); requires all x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise ValueError("g is defined for positive sizes only")
    fam = spec.family
    if fam is WeightFamily.POWER:
        return x ** spec.alpha
    if fam is WeightFamily.POWER_SHIFTED:
        return x ** spec.alpha * (1.0 + x) ** spec.beta
    if fam is WeightFamily.POWER_EXP:
        return x ** spec.alpha * np.exp(spec.lam * x)
    if fam is WeightFamily.POWER_LOG:
        return x ** spec.alpha * np.log1p(x) ** spec.gamma
    raise ValueError(f"unknown family {fam}")


def eval_g(spec: WeightSpec, x: float) -> float:
    """Scalar weight g(x), x > 0."""
    return float(g_values(spec, np.asarray(x, dtype=float)))


def closed_form_theta(alpha: float, nu: float) -> float:
    """Exact dissipativity constant for power weights vs power-law daughters.

    With g = x**alpha and b = (nu+2) x**nu / y**(nu+1), the averaged weight
    per breakup is a y-independent fraction (nu+2)/(nu+alpha+1) of g(y),
    leaving the gap (alpha-1)/(nu+alpha+1).
    """
    if not alpha > 1.0:
        raise ValueError(f"closed form requires alpha > 1, got {alpha}")
    if not (-1.0 < nu <= 0.0):
        raise ValueError(f"closed form requires nu in (-1, 0], got {nu}")
    return (alpha - 1.0) / (nu + alpha + 1.0)


def dissipation_ratio(spec: WeightSpec, daughter: DaughterSpec, y: float, z: float = 1.0) -> float:
    """Numerical value of (1/g(y)) * integral of g(x) b(x, y, z) over (0, y).

    Smooth daughter families are integrated on the rescaled interval
    s = x/y in (0, 1), which keeps the integrand O(1) at every scale; the
    end-concentrated families are integrated piece by piece.
    """
    gy = eval_g(spec, y)
    if daughter.family in (DaughterFamily.POWER_LAW, DaughterFamily.UNIFORM_BINARY):
        def integrand(s: float) -> float:
            x = y * s
            return g_values(spec, np.asarray(x)) / gy * daughters.eval_b(daughter, x, y, z) * y
        val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
        return float(val)
    total = 0.0
    for lo, hi, bval in daughters.support_pieces(daughter, y):
        lo = max(lo, 1e-300)  # g may be singular-free but undefined at 0
        piece, _ = integrate.quad(lambda x: eval_g(spec, x), lo, hi,
                                  epsabs=1e-13 * gy, epsrel=1e-12, limit=200)
        total += bval * piece
    return total / gy


@dataclass(frozen=True)
class ThetaEstimate:
    theta_hat: float
    argmin_y: float
    spread: float  # max - min of theta over the scanned grid
    in_class: bool


def estimate_theta(spec: WeightSpec, daughter: DaughterSpec, y_grid,
                   z_grid=None) -> ThetaEstimate:
    """Numerical infimum of 1 - dissipation ratio over the sample grid.

    ``in_class`` is False when the infimum is not strictly positive, i.e.
    the weight fails membership for this daughter on the scanned range.
    """
    y_grid = np.asarray(y_grid, dtype=float)
    z_grid = np.asarray([1.0] if z_grid is None else z_grid, dtype=float)
    best = math.inf
    worst = -math.inf
    arg = float("nan")
    for y in y_grid:
        for z in z_grid:
            theta = 1.0 - dissipation_ratio(spec, daughter, float(y), float(z))
            if theta < best:
                best, arg = theta, float(y)
            worst = max(worst, theta)
    return ThetaEstimate(theta_hat=best, argmin_y=arg, spread=worst - best,
                         in_class=best > 0.0)


def default_y_grid(y_max: float, points: int = 64) -> np.ndarray:
    """Log grid on [1e-4, y_max] used for infimum searches."""
    return np.logspace(-4.0, math.log10(y_max), points)


def infimum_theta(spec: WeightSpec, daughter: DaughterSpec, y_max: float) -> ThetaEstimate:
    """Two-stage infimum search: coarse 64-point log grid, refined once.

    Catalog integrands are smooth and monotone in y, so one refinement
    around the coarse argmin suffices.
    """
    coarse = default_y_grid(y_max)
    first = estimate_theta(spec, daughter, coarse)
    k = int(np.searchsorted(coarse, first.argmin_y))
    lo = coarse[max(k - 1, 0)]
    hi = coarse[min(k + 1, len(coarse) - 1)]
    fine = np.logspace(math.log10(lo), math.log10(hi), 17)
    second = estimate_theta(spec, daughter, fine)
    if second.theta_hat < first.theta_hat:
        return ThetaEstimate(second.theta_hat, second.argmin_y, first.spread,
                             second.in_class)
    return first


def resolve_theta(spec: WeightSpec, daughter: DaughterSpec, y_max: float | None = None) -> float:
    """Dissipativity constant to store for this weight/daughter pairing.

    Power weights against the power-law (or binary-uniform) daughters use
    the exact closed form; every other pairing takes the numerical
    infimum on (0, y_max] minus a safety margin.
    """
    nu = daughter.powerlaw_nu_equivalent
    if spec.family is WeightFamily.POWER and nu is not None:
        return closed_form_theta(spec.alpha, nu)
    est = infimum_theta(spec, daughter, y_max if y_max is not None else daughter.y_max)
    if not est.in_class:
        raise ValueError(
            f"weight {spec.family.value}(alpha={spec.alpha}) is not dissipative for "
            f"{daughter.family.value}: infimum {est.theta_hat:.3e} at y={est.argmin_y:.3e}")
    return SAFETY_MARGIN * est.theta_hat


def check_ratio_monotone(spec: WeightSpec, samples, tol: float = 1e-12) -> bool:
    """True when g(x)/x is non-decreasing along the (ascending) samples."""
    xs = np.asarray(samples, dtype=float)
    if np.any(np.diff(xs) <= 0.0):
        raise ValueError("samples must be sorted ascending")
    ratios = g_values(spec, xs) / xs
    drops = np.diff(ratios)
    return bool(np.all(drops >= -tol * np.maximum(ratios[:-1], ratios[1:])))
