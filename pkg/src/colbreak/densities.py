"""Initial number-density descriptors shared by the solver and the oracle.

A descriptor is an analytic density f(x) on (0, inf) together with the
closed-form partial moments and the inverse-CDF sampler the particle
oracle needs.  Config names: ``exponential`` (f = exp(-x)) and
``indicator`` (f = 1 on (lo, hi)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["InitialDensity", "exponential_density", "indicator_density"]


@dataclass(frozen=True)
class InitialDensity:
    kind: str  # "exponential" | "indicator"
    lo: float = 0.0
    hi: float = 0.0

    def __post_init__(self):
        if self.kind not in ("exponential", "indicator"):
            raise ValueError(f"unknown initial density kind {self.kind!r}")
        if self.kind == "indicator" and not 0.0 <= self.lo < self.hi:
            raise ValueError(f"indicator requires 0 <= lo < hi, got ({self.lo}, {self.hi})")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            return np.exp(-x)
        return np.where((x > self.lo) & (x < self.hi), 1.0, 0.0)

    def number_on(self, lo: float, hi: float) -> float:
        """Integral of f over (lo, hi)."""
        if self.kind == "exponential":
            return math.exp(-lo) - math.exp(-hi)
        a, b = max(lo, self.lo), min(hi, self.hi)
        return max(b - a, 0.0)

    def mass_on(self, lo: float, hi: float) -> float:
        """Integral of x*f over (lo, hi)."""
        if self.kind == "exponential":
            return (1.0 + lo) * math.exp(-lo) - (1.0 + hi) * math.exp(-hi)
        a, b = max(lo, self.lo), min(hi, self.hi)
        return max(b * b - a * a, 0.0) / 2.0

    def sample(self, rng: np.random.Generator, size: int, cutoff: float) -> np.ndarray:
        """Draw iid sizes from f restricted and normalised to (0, cutoff)."""
        total = self.number_on(0.0, cutoff)
        if not total > 0.0:
            raise ValueError("density is not normalizable on (0, cutoff)")
        u = rng.random(size)
        if self.kind == "exponential":
            return -np.log1p(-u * (1.0 - math.exp(-cutoff)))
        a, b = self.lo, min(self.hi, cutoff)
        return a + u * (b - a)

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "indicator":
            d["lo"] = self.lo
            d["hi"] = self.hi
        return d


def exponential_density() -> InitialDensity:
    return InitialDensity(kind="exponential")


def indicator_density(lo: float, hi: float) -> InitialDensity:
    return InitialDensity(kind="indicator", lo=lo, hi=hi)
