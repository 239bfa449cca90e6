"""Fragment-size (daughter) distribution catalog.

A daughter distribution ``b(x, y, z)`` is the expected density of
fragments of size x produced when a particle of size y breaks after
colliding with a particle of size z.  Every catalog member satisfies, for
all y and z,

* support:        b(x, y, z) = 0 for x > y,
* mass identity:  integral of x*b over (0, y) equals y,
* count bound:    integral of b over (0, y) is at most ``beta0``,
* Lp structure:   integral of b**p over (0, y) is at most (Bp/2)*y**(1-p)
                  for the stored exponent p in (1, 2).

Catalog families (run-config names):

power_law(nu)       b = (nu+2) * x**nu / y**(nu+1),  nu in (-1, 0]
uniform_binary      b = 2/y on (0, y); the unique member with an exact
                    two-fragment sampling recipe (used by the stochastic
                    oracle)
kll_unit_ends       b = 1 on [0,1] and [y-1, y] for y > 2, else 2/y
kll_shrinking_ends  b = y on [0,1/y] and [y-1/y, y] for y > sqrt(2),
                    else 2/y

All catalog members are independent of the collision partner z; the z
argument is kept throughout because the surrounding machinery allows
partner-dependent distributions.

For the two piecewise-constant (end-concentrated) families the Lp bound
cannot hold with one constant on all of (0, inf): the left side is flat in
y while the right side decays.  Their ``Bp`` is therefore derived for a
finite verification horizon ``y_max`` and checks are valid on (0, y_max].
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import UnsupportedOperation

__all__ = [
    "DaughterFamily",
    "DaughterSpec",
    "eval_b",
    "b_values",
    "number_integral",
    "mass_integral",
    "power_integral",
    "fragment_count",
    "support_pieces",
    "check_lmc",
    "check_nop",
    "check_p_condition",
    "sample_fragments",
    "LmcReport",
    "NopReport",
    "PConditionReport",
    "default_beta0",
    "default_bp",
]

_SQRT2 = math.sqrt(2.0)


class DaughterFamily(enum.Enum):
    POWER_LAW = "power_law"
    UNIFORM_BINARY = "uniform_binary"
    KLL_UNIT_ENDS = "kll_unit_ends"
    KLL_SHRINKING_ENDS = "kll_shrinking_ends"


def default_beta0(family: DaughterFamily, nu: float = 0.0) -> float:
    """Sharp fragment-count bound for the family."""
    if family is DaughterFamily.POWER_LAW:
        return (nu + 2.0) / (nu + 1.0)
    return 2.0


def default_bp(family: DaughterFamily, nu: float, p: float, y_max: float) -> float | None:
    """Sharp Lp-structure constant; None when the integral diverges.

    For the end-concentrated families the supremum over y is taken on
    (0, y_max] (it is unbounded on (0, inf)).
    """
    if family is DaughterFamily.POWER_LAW:
        if nu * p <= -1.0:
            return None
        return 2.0 * (nu + 2.0) ** p / (nu * p + 1.0)
    if family is DaughterFamily.UNIFORM_BINARY:
        return 2.0 ** (p + 1.0)
    if family is DaughterFamily.KLL_UNIT_ENDS:
        return max(2.0 ** (p + 1.0), 4.0 * y_max ** (p - 1.0))
    if family is DaughterFamily.KLL_SHRINKING_ENDS:
        return max(2.0 ** (p + 1.0), 4.0 * y_max ** (2.0 * (p - 1.0)))
    raise ValueError(f"unknown family {family}")


@dataclass(frozen=True)
class DaughterSpec:
    """A daughter distribution instance.  Immutable after construction.

    ``beta0`` and ``Bp`` default to the family's sharp constants (``Bp``
    relative to the verification horizon ``y_max``); both can be
    overridden with looser values.
    """

    family: DaughterFamily
    nu: float = 0.0
    p: float = 1.5
    y_max: float = 100.0
    beta0: float | None = None
    Bp: float | None = None
    _bp_default: bool = True

    def __post_init__(self):
        if isinstance(self.family, str):
            object.__setattr__(self, "family", DaughterFamily(self.family))
        if self.family is DaughterFamily.POWER_LAW and not (-1.0 < self.nu <= 0.0):
            raise ValueError(f"power_law requires nu in (-1, 0], got {self.nu}")
        if not (1.0 < self.p < 2.0):
            raise ValueError(f"p must lie in (1, 2), got {self.p}")
        if not self.y_max > 0.0:
            raise ValueError(f"y_max must be > 0, got {self.y_max}")
        if self.beta0 is None:
            object.__setattr__(self, "beta0", default_beta0(self.family, self.nu))
        if self.beta0 < 2.0:
            raise ValueError(f"beta0 must be >= 2, got {self.beta0}")
        if self.Bp is None:
            object.__setattr__(self, "Bp", default_bp(self.family, self.nu, self.p, self.y_max))
        else:
            object.__setattr__(self, "_bp_default", False)

    @property
    def samplable(self) -> bool:
        """Whether an exact fragment-sampling recipe exists."""
        return self.family is DaughterFamily.UNIFORM_BINARY

    @property
    def powerlaw_nu_equivalent(self) -> float | None:
        """Exponent nu if the family coincides with power_law(nu), else None.

        uniform_binary equals power_law(0); used to reuse the closed-form
        dissipativity constant.
        """
        if self.family is DaughterFamily.POWER_LAW:
            return self.nu
        if self.family is DaughterFamily.UNIFORM_BINARY:
            return 0.0
        return None

    def describe(self) -> dict:
        d = {"family": self.family.value, "p": self.p, "beta0": self.beta0,
             "Bp": self.Bp, "y_max": self.y_max, "samplable": self.samplable}
        if self.family is DaughterFamily.POWER_LAW:
            d["nu"] = self.nu
        return d


def _kll_pieces(spec: DaughterSpec, y: float) -> list[tuple[float, float, float]]:
    """(lo, hi, constant value) pieces for the end-concentrated families."""
    if spec.family is DaughterFamily.KLL_UNIT_ENDS:
        if y <= 2.0:
            return [(0.0, y, 2.0 / y)]
        return [(0.0, 1.0, 1.0), (y - 1.0, y, 1.0)]
    if spec.family is DaughterFamily.KLL_SHRINKING_ENDS:
        if y <= _SQRT2:
            return [(0.0, y, 2.0 / y)]
        return [(0.0, 1.0 / y, y), (y - 1.0 / y, y, y)]
    raise ValueError(f"{spec.family} has no piecewise representation")


def support_pieces(spec: DaughterSpec, y: float) -> list[tuple[float, float, float | None]]:
    """Support intervals of x -> b(x, y, .) with constant value where flat.

    Smooth families report a single piece with value ``None`` (evaluate
    the density); the end-concentrated families report their flat pieces.
    Quadrature against b should integrate piece by piece: the jump points
    defeat adaptive error estimates otherwise.
    """
    if spec.family in (DaughterFamily.POWER_LAW, DaughterFamily.UNIFORM_BINARY):
        return [(0.0, y, None)]
    return [(lo, hi, val) for lo, hi, val in _kll_pieces(spec, y)]


def b_values(spec: DaughterSpec, x: np.ndarray, y: float, z: float) -> np.ndarray:
    """Vectorised density b(x, y, z); zero for x > y."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0) or y <= 0.0 or z <= 0.0:
        raise ValueError("b is defined for positive sizes only")
    fam = spec.family
    if fam is DaughterFamily.POWER_LAW:
        vals = (spec.nu + 2.0) / y ** (spec.nu + 1.0) * x ** spec.nu
        return np.where(x > y, 0.0, vals)
    if fam is DaughterFamily.UNIFORM_BINARY:
        return np.where(x > y, 0.0, 2.0 / y)
    out = np.zeros_like(x)
    for lo, hi, val in _kll_pieces(spec, y):
        out = np.where((x >= lo) & (x <= hi), val, out)
    return out


def eval_b(spec: DaughterSpec, x: float, y: float, z: float) -> float:
    """Scalar density b(x, y, z)."""
    return float(b_values(spec, np.asarray(x, float), y, z))


def _overlap_power(lo, hi, a: float, b: float, m: float):
    """Integral of x**m over [lo, hi] intersected with [a, b], vectorised."""
    lo_c = np.maximum(np.asarray(lo, float), a)
    hi_c = np.minimum(np.asarray(hi, float), b)
    hi_c = np.maximum(hi_c, lo_c)
    e = m + 1.0
    return (hi_c ** e - lo_c ** e) / e


def power_integral(spec: DaughterSpec, m: float, lo, hi, y: float, z: float = 1.0):
    """Closed-form integral of x**m * b(x, y, z) over [lo, hi], vectorised.

    Requires m + nu + 1 > 0 for the power-law family.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    fam = spec.family
    if fam is DaughterFamily.POWER_LAW:
        e = m + spec.nu + 1.0
        if e <= 0.0:
            raise ValueError(f"integral diverges: m + nu + 1 = {e} <= 0")
        lo_c = np.clip(lo, 0.0, y)
        hi_c = np.clip(hi, 0.0, y)
        hi_c = np.maximum(hi_c, lo_c)
        return (spec.nu + 2.0) / y ** (spec.nu + 1.0) * (hi_c ** e - lo_c ** e) / e
    if fam is DaughterFamily.UNIFORM_BINARY:
        return 2.0 / y * _overlap_power(lo, hi, 0.0, y, m)
    total = np.zeros(np.broadcast(lo, hi).shape, dtype=float)
    for a, b, val in _kll_pieces(spec, y):
        total = total + val * _overlap_power(lo, hi, a, b, m)
    return total


def number_integral(spec: DaughterSpec, lo, hi, y: float, z: float = 1.0):
    """Closed-form integral of b over [lo, hi] (expected fragment count there)."""
    return power_integral(spec, 0.0, lo, hi, y, z)


def mass_integral(spec: DaughterSpec, lo, hi, y: float, z: float = 1.0):
    """Closed-form integral of x*b over [lo, hi] (fragment mass there)."""
    return power_integral(spec, 1.0, lo, hi, y, z)


def fragment_count(spec: DaughterSpec, y: float, z: float = 1.0) -> float:
    """Expected number of fragments per breakup of a size-y particle."""
    if y <= 0.0 or z <= 0.0:
        raise ValueError("sizes must be positive")
    return float(number_integral(spec, 0.0, y, y, z))


@dataclass(frozen=True)
class LmcReport:
    passed: bool
    worst_rel_err: float
    worst_y: float
    worst_z: float
    quad_tol: float


def check_lmc(spec: DaughterSpec, y_samples, z_samples, quad_tol: float = 1e-8) -> LmcReport:
    """Verify the local mass identity: integral of x*b over (0, y) equals y.

    Smooth families are integrated by adaptive quadrature; the
    end-concentrated families use exact piecewise integration
    (discontinuous integrands defeat adaptive error estimates).
    """
    if quad_tol <= 0.0:
        raise ValueError("quad_tol must be positive")
    worst = -1.0
    wy = wz = float("nan")
    piecewise = spec.family in (DaughterFamily.KLL_UNIT_ENDS, DaughterFamily.KLL_SHRINKING_ENDS)
    for y in np.asarray(y_samples, dtype=float):
        for z in np.asarray(z_samples, dtype=float):
            if piecewise:
                total = float(mass_integral(spec, 0.0, y, y, z))
            else:
                total, _ = integrate.quad(
                    lambda x: x * eval_b(spec, x, y, z), 0.0, y,
                    epsabs=1e-12 * y, epsrel=1e-11, limit=200)
            rel = abs(total / y - 1.0)
            if rel > worst:
                worst, wy, wz = rel, float(y), float(z)
    return LmcReport(passed=worst <= quad_tol, worst_rel_err=worst,
                     worst_y=wy, worst_z=wz, quad_tol=quad_tol)


@dataclass(frozen=True)
class NopReport:
    passed: bool
    worst_count: float
    bound: float
    worst_y: float


def check_nop(spec: DaughterSpec, y_samples, z_samples) -> NopReport:
    """Verify the fragment-count bound over the sample grid."""
    worst = -1.0
    wy = float("nan")
    for y in np.asarray(y_samples, dtype=float):
        for z in np.asarray(z_samples, dtype=float):
            c = fragment_count(spec, float(y), float(z))
            if c > worst:
                worst, wy = c, float(y)
    return NopReport(passed=worst <= spec.beta0 * (1.0 + 1e-12),
                     worst_count=worst, bound=spec.beta0, worst_y=wy)


@dataclass(frozen=True)
class PConditionReport:
    verifiable: bool
    passed: bool
    Bp_observed: float
    bound: float | None
    worst_y: float
    p: float


def check_p_condition(spec: DaughterSpec, p: float, y_samples, z_samples) -> PConditionReport:
    """Verify the Lp structure condition on the sample grid.

    Computes ``sup_y 2 * y**(p-1) * integral(b**p)`` by quadrature (exact
    piecewise integration for the end-concentrated families) and compares
    it against the configured constant for this p.  When the integrand is
    non-integrable (nu*p <= -1 for the power-law family) the condition is
    reported as unverifiable rather than failed.
    """
    if not (1.0 < p < 2.0):
        raise ValueError(f"p must lie in (1, 2), got {p}")
    if spec.family is DaughterFamily.POWER_LAW and spec.nu * p <= -1.0:
        return PConditionReport(verifiable=False, passed=False, Bp_observed=float("nan"),
                                bound=None, worst_y=float("nan"), p=p)
    if p == spec.p and not spec._bp_default:
        bound = spec.Bp
    else:
        bound = default_bp(spec.family, spec.nu, p, spec.y_max)
    piecewise = spec.family in (DaughterFamily.KLL_UNIT_ENDS, DaughterFamily.KLL_SHRINKING_ENDS)
    worst = -1.0
    wy = float("nan")
    for y in np.asarray(y_samples, dtype=float):
        for z in np.asarray(z_samples, dtype=float):
            if piecewise:
                total = sum(val ** p * (hi - lo) for lo, hi, val in _kll_pieces(spec, float(y)))
            else:
                total, _ = integrate.quad(
                    lambda x: eval_b(spec, x, y, z) ** p, 0.0, float(y),
                    epsabs=0.0, epsrel=1e-11, limit=400)
            observed = 2.0 * y ** (p - 1.0) * total
            if observed > worst:
                worst, wy = float(observed), float(y)
    return PConditionReport(verifiable=True, passed=worst <= bound * (1.0 + 1e-9),
                            Bp_observed=worst, bound=bound, worst_y=wy, p=p)


def sample_fragments(spec: DaughterSpec, y: float, z: float, rng: np.random.Generator) -> list[float]:
    """Draw an exact fragment list for one breakup event.

    Only the binary-uniform family is samplable: u is uniform on (0, y)
    and the pair {u, y-u} has marginal fragment density 2/y.  The pair is
    post-corrected through one extra subtraction so u + v == y holds
    bitwise (the larger part is exact by construction, which pins the
    smaller one), keeping the particle oracle's total mass exactly
    constant event by event.
    """
    if not spec.samplable:
        raise UnsupportedOperation(
            f"{spec.family.value} has no exact fragment-sampling recipe; "
            "only uniform_binary is samplable")
    if y <= 0.0 or z <= 0.0:
        raise ValueError("sizes must be positive")
    while True:
        u = y * rng.random()
        v = y - u
        u = y - v
        if u > 0.0 and v > 0.0:
            return [u, v]
