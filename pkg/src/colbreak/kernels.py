"""Collision-kernel catalog.

All catalog members are symmetric product-type rate kernels

    a(x, y) = A0 * w(x) * w(y),

where the size factor ``w`` is continuous, non-negative and non-decreasing
on (0, inf), and its behaviour near the origin is controlled by a power
law ``w(x) <= A1 * x**ell`` on (0, 1).  Families are selected by the
Roman-numeral labels ``I``..``VIII`` used in run configs:

I     pure power law                     w(x) = x**ell
II    power law, shifted polynomial      w(x) = x**ell * (1+x)**beta
III   power law with exponential tail    w(x) = x**ell * exp(gamma*x)
IV    power law with logarithmic factor  w(x) = x**ell * log(1+x)**gamma
V     power law with stretched exp tail  w(x) = x**ell * exp(gamma*x**nu)
VI    rationally damped power law        w(x) = x**ell / (1+x)**mu, ell > mu
VII   saturating exponential factor      w(x) = x**ell * (2 - exp(-x))
VIII  piecewise split power law          a = A0*(xy)**ell for x,y <= 1,
                                         a = A0*(xy)**p   for x,y >= 1,
                                         a = 0 on the mixed regions, p > ell

Family VIII is the one member that is not a global product: it keeps its
indicator structure, so evaluation of the full kernel must go through
:func:`eval_kernel` rather than the factored form.

A truncated variant ``a_n`` vanishes whenever either argument reaches the
truncation size ``n``; the sectional solver integrates the truncated
dynamics on (0, n).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "KernelFamily",
    "Regime",
    "KernelSpec",
    "classify_regime",
    "eval_omega",
    "omega_values",
    "eval_kernel",
    "kernel_values",
    "verify_growth_bound",
    "GrowthBoundReport",
    "GROWTH_TOL",
]

# Catalog factors are smooth; any violation beyond this is a bug, not roundoff.
GROWTH_TOL = 1e-10


class KernelFamily(enum.Enum):
    """Catalog labels; values match the run-config names."""

    POWER_LAW = "I"
    POWER_LAW_SHIFTED = "II"
    POWER_LAW_EXP = "III"
    POWER_LAW_LOG = "IV"
    STRETCHED_EXP = "V"
    RATIONAL_DAMPED = "VI"
    SATURATING_EXP = "VII"
    PIECEWISE_SPLIT = "VIII"


class Regime(enum.Enum):
    """Small-size growth regime of the kernel factor."""

    SUB_LINEAR = "sub_linear"
    SUPER_LINEAR = "super_linear"


def classify_regime(ell: float) -> Regime:
    """Classify the small-size exponent.

    ``ell < 1/2`` puts the squared factor below first order near the
    origin (sub-linear regime, number growth is only locally controlled);
    ``ell >= 1/2`` allows mass to absorb one power (super-linear regime,
    number growth is controlled on every finite horizon).
    """
    if not ell > 0.0:
        raise ValueError(f"ell must be > 0, got {ell}")
    return Regime.SUB_LINEAR if ell < 0.5 else Regime.SUPER_LINEAR


def _default_a1(family: KernelFamily, ell: float, beta: float, gamma: float,
                nu: float, mu: float, p: float) -> float:
    """Smallest constant with w(x) <= A1 * x**ell on (0, 1), per family."""
    if family is KernelFamily.POWER_LAW:
        return 1.0
    if family is KernelFamily.POWER_LAW_SHIFTED:
        return 2.0 ** beta
    if family is KernelFamily.POWER_LAW_EXP:
        return math.exp(gamma)
    if family is KernelFamily.POWER_LAW_LOG:
        return math.log(2.0) ** gamma
    if family is KernelFamily.STRETCHED_EXP:
        return math.exp(gamma)
    if family is KernelFamily.RATIONAL_DAMPED:
        return 1.0
    if family is KernelFamily.SATURATING_EXP:
        return 2.0 - math.exp(-1.0)
    if family is KernelFamily.PIECEWISE_SPLIT:
        return 1.0
    raise ValueError(f"unknown family {family}")


@dataclass(frozen=True)
class KernelSpec:
    """A collision kernel instance.

    Immutable after construction; safe for concurrent reads.

    Parameters
    ----------
    family:
        Catalog member (Roman-numeral label).
    A0:
        Global rate amplitude, > 0.
    ell:
        Small-size exponent, > 0.
    n:
        Truncation size for the cut-off kernel ``a_n``, > 0.
    beta, gamma, nu, mu, p:
        Family-specific shape parameters (see module docstring).
    A1:
        Small-size growth constant.  Defaults to the analytically smallest
        constant for the family; override only to test looser bounds.
    """

    family: KernelFamily
    A0: float = 1.0
    ell: float = 1.0
    n: float = 10.0
    beta: float = 0.0
    gamma: float = 1.0
    nu: float = 1.0
    mu: float = 0.0
    p: float = 0.0
    A1: float | None = None

    def __post_init__(self):
        if isinstance(self.family, str):
            object.__setattr__(self, "family", KernelFamily(self.family))
        if not self.A0 > 0.0:
            raise ValueError(f"A0 must be > 0, got {self.A0}")
        if not self.ell > 0.0:
            raise ValueError(f"ell must be > 0, got {self.ell}")
        if not self.n > 0.0:
            raise ValueError(f"n must be > 0, got {self.n}")
        fam = self.family
        if fam is KernelFamily.POWER_LAW_SHIFTED and self.beta < 0.0:
            raise ValueError(f"family II requires beta >= 0, got {self.beta}")
        if fam in (KernelFamily.POWER_LAW_EXP, KernelFamily.POWER_LAW_LOG,
                   KernelFamily.STRETCHED_EXP) and not self.gamma > 0.0:
            raise ValueError(f"family {fam.value} requires gamma > 0, got {self.gamma}")
        if fam is KernelFamily.STRETCHED_EXP and not self.nu > 0.0:
            raise ValueError(f"family V requires nu > 0, got {self.nu}")
        if fam is KernelFamily.RATIONAL_DAMPED and not self.ell > self.mu > 0.0:
            raise ValueError(f"family VI requires ell > mu > 0, got ell={self.ell}, mu={self.mu}")
        if fam is KernelFamily.PIECEWISE_SPLIT and not self.p > self.ell:
            raise ValueError(f"family VIII requires p > ell, got p={self.p}, ell={self.ell}")
        if self.A1 is None:
            object.__setattr__(self, "A1", _default_a1(
                fam, self.ell, self.beta, self.gamma, self.nu, self.mu, self.p))
        elif not self.A1 > 0.0:
            raise ValueError(f"A1 must be > 0, got {self.A1}")

    @property
    def regime(self) -> Regime:
        return classify_regime(self.ell)

    @property
    def is_product(self) -> bool:
        """True when a(x,y) = A0*w(x)*w(y) globally (families I-VII)."""
        return self.family is not KernelFamily.PIECEWISE_SPLIT

    def with_ell(self, ell: float) -> "KernelSpec":
        """Copy with a new small-size exponent and refreshed default A1."""
        return replace(self, ell=ell, A1=None)

    def describe(self) -> dict:
        d = {"family": self.family.value, "A0": self.A0, "ell": self.ell,
             "n": self.n, "A1": self.A1, "regime": self.regime.value}
        fam = self.family
        if fam is KernelFamily.POWER_LAW_SHIFTED:
            d["beta"] = self.beta
        if fam in (KernelFamily.POWER_LAW_EXP, KernelFamily.POWER_LAW_LOG,
                   KernelFamily.STRETCHED_EXP):
            d["gamma"] = self.gamma
        if fam is KernelFamily.STRETCHED_EXP:
            d["nu"] = self.nu
        if fam is KernelFamily.RATIONAL_DAMPED:
            d["mu"] = self.mu
        if fam is KernelFamily.PIECEWISE_SPLIT:
            d["p"] = self.p
        return d


def omega_values(spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    """Vectorised size factor w(x); requires all x > 0.

    One function with a branch at x = 1: the small-size and large-size
    factors agree at 1 for every family in the catalog, so no duplication
    is needed; family VIII switches exponent at the branch point.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise ValueError("omega is defined for positive sizes only")
    fam = spec.family
    if fam is KernelFamily.POWER_LAW:
        return x ** spec.ell
    if fam is KernelFamily.POWER_LAW_SHIFTED:
        return x ** spec.ell * (1.0 + x) ** spec.beta
    if fam is KernelFamily.POWER_LAW_EXP:
        return x ** spec.ell * np.exp(spec.gamma * x)
    if fam is KernelFamily.POWER_LAW_LOG:
        return x ** spec.ell * np.log1p(x) ** spec.gamma
    if fam is KernelFamily.STRETCHED_EXP:
        return x ** spec.ell * np.exp(spec.gamma * x ** spec.nu)
    if fam is KernelFamily.RATIONAL_DAMPED:
        return x ** spec.ell / (1.0 + x) ** spec.mu
    if fam is KernelFamily.SATURATING_EXP:
        return x ** spec.ell * (2.0 - np.exp(-x))
    if fam is KernelFamily.PIECEWISE_SPLIT:
        return np.where(x <= 1.0, x ** spec.ell, x ** spec.p)
    raise ValueError(f"unknown family {fam}")


def eval_omega(spec: KernelSpec, x: float) -> float:
    """Scalar size factor w(x), x > 0."""
    return float(omega_values(spec, np.asarray(x, dtype=float)))


def kernel_values(spec: KernelSpec, x: np.ndarray, y: np.ndarray,
                  truncated: bool = True) -> np.ndarray:
    """Vectorised kernel a(x, y) (or its truncation a_n).

    The product w(x)*w(y) is formed before scaling by A0, so swapped
    arguments give bitwise-identical results.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = omega_values(spec, x) * omega_values(spec, y)
    if spec.family is KernelFamily.PIECEWISE_SPLIT:
        same_region = ((x <= 1.0) & (y <= 1.0)) | ((x >= 1.0) & (y >= 1.0))
        w = np.where(same_region, w, 0.0)
    vals = spec.A0 * w
    if truncated:
        vals = np.where((x >= spec.n) | (y >= spec.n), 0.0, vals)
    return vals


def eval_kernel(spec: KernelSpec, x: float, y: float, truncated: bool = True) -> float:
    """Scalar kernel a(x, y); zero above the truncation size when enabled."""
    return float(kernel_values(spec, np.asarray(x, float), np.asarray(y, float), truncated))


@dataclass(frozen=True)
class GrowthBoundReport:
    holds: bool
    worst_ratio: float
    worst_x: float


def verify_growth_bound(spec: KernelSpec, sample_count: int = 512) -> GrowthBoundReport:
    """Check w(x) <= A1 * x**ell on a log-spaced sample of (0, 1).

    Passes when the worst ratio stays within ``1 + GROWTH_TOL``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    xs = np.logspace(-8.0, 0.0, sample_count, endpoint=False)
    ratios = omega_values(spec, xs) / (spec.A1 * xs ** spec.ell)
    k = int(np.argmax(ratios))
    worst = float(ratios[k])
    return GrowthBoundReport(holds=worst <= 1.0 + GROWTH_TOL,
                             worst_ratio=worst, worst_x=float(xs[k]))
