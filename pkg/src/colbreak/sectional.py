"""Sectional (fixed-pivot) solver for the truncated breakage dynamics.

The size interval (0, n) is discretised by a geometric grid on
[x_min, n]; the state is the vector of particle counts per cell
``u_i ~ integral of f over cell i``.  Breakage transfers counts through a
precomputed allocation matrix ``N`` with

    du_i/dt = sum_j N[i, j] * u_j * L_j - u_i * L_i,
    L_j     = sum_k a_n(xbar_j, xbar_k) * u_k,

where ``N[i, j]`` is the expected number of fragments landing at pivot i
when a particle at pivot j breaks.  The allocation is built so that every
column conserves fragment mass exactly (sum_i xbar_i N[i,j] == xbar_j to
machine precision) and carries the exact expected fragment count wherever
that is representable on the pivot set; mass wins over count where it is
not (fragments falling below the bottom pivot).

Time integration is an adaptive embedded explicit Runge-Kutta pair of
orders 3(2).  Explicit stepping is adequate: the dynamics are non-stiff
at the scales of interest, and runaway small-size cascades are detected
by step-size underflow rather than integrated through.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import daughters as _daughters
from . import kernels as _kernels
from .daughters import DaughterSpec
from .densities import InitialDensity
from .errors import ColbreakError, StiffnessError
from .kernels import KernelSpec

__all__ = [
    "GridSpec",
    "StateVector",
    "OperatorSet",
    "SolverConfig",
    "Trajectory",
    "build_grid",
    "project_initial",
    "assemble_operators",
    "rhs",
    "step",
    "StepResult",
    "solve",
]


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Geometric grid on [x_min, n] with arithmetic-midpoint pivots."""

    x_min: float
    n: float
    cells: int
    edges: np.ndarray = field(repr=False)
    pivots: np.ndarray = field(repr=False)
    widths: np.ndarray = field(repr=False)

    @property
    def ratio(self) -> float:
        return (self.n / self.x_min) ** (1.0 / self.cells)

    def describe(self) -> dict:
        return {"x_min": self.x_min, "n": self.n, "cells": self.cells,
                "ratio": self.ratio}


def build_grid(x_min: float, n: float, cells: int) -> GridSpec:
    """Build a geometric grid; requires 0 < x_min < n and cells >= 1."""
    if not 0.0 < x_min < n:
        raise ValueError(f"grid requires 0 < x_min < n, got x_min={x_min}, n={n}")
    if cells < 1:
        raise ValueError(f"cells must be >= 1, got {cells}")
    edges = np.geomspace(x_min, n, cells + 1)
    pivots = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    if np.any(np.diff(edges) <= 0.0) or np.any((pivots <= edges[:-1]) | (pivots >= edges[1:])):
        raise ValueError("degenerate grid: edges must increase and pivots stay interior")
    return GridSpec(x_min=float(x_min), n=float(n), cells=int(cells),
                    edges=edges, pivots=pivots, widths=widths)


@dataclass
class StateVector:
    """Cell counts at one instant, tied to the grid they live on."""

    counts: np.ndarray
    t: float
    grid: GridSpec

    def copy(self) -> "StateVector":
        return StateVector(self.counts.copy(), self.t, self.grid)

    @property
    def number(self) -> float:
        return float(self.counts.sum())

    @property
    def mass(self) -> float:
        return float(self.grid.pivots @ self.counts)


def project_initial(f_in: InitialDensity, grid: GridSpec) -> StateVector:
    """Project an analytic density onto cell counts by adaptive quadrature.

    Mass carried by f below x_min is not representable on the grid; it is
    quantified separately (see :func:`dropped_initial_mass`) and reported
    in the run log.
    """
    counts = np.empty(grid.cells)
    interior = [f_in.lo, f_in.hi] if f_in.kind == "indicator" else []
    for i in range(grid.cells):
        a, b = grid.edges[i], grid.edges[i + 1]
        pts = [p for p in interior if a < p < b] or None
        val, _ = integrate.quad(f_in, a, b, points=pts, epsabs=1e-13, epsrel=1e-12, limit=200)
        if not math.isfinite(val):
            raise ColbreakError(f"initial-density quadrature failed on cell {i}")
        counts[i] = max(val, 0.0)
    return StateVector(counts=counts, t=0.0, grid=grid)


def dropped_initial_mass(f_in: InitialDensity, grid: GridSpec) -> float:
    """Mass of f_in below the grid floor (quantified for the run log)."""
    return f_in.mass_on(0.0, grid.x_min)


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """Precomputed, immutable discrete operators; shareable across runs.

    ``frag_alloc`` is 2-index because every catalog daughter is
    independent of the collision partner; a partner-dependent allocation
    plugs in as a 3-index array behind the same interface.
    """

    grid: GridSpec
    frag_alloc: np.ndarray = field(repr=False)   # (C, C) or (C, C, C)
    rate_matrix: np.ndarray = field(repr=False)  # (C, C)
    omega_pivots: np.ndarray = field(repr=False)
    A0: float
    use_product: bool
    beta0: float
    z_independent: bool = True

    def column_counts(self) -> np.ndarray:
        """Expected fragments per breakup, by breaking cell."""
        if self.frag_alloc.ndim == 2:
            return self.frag_alloc.sum(axis=0)
        return self.frag_alloc.sum(axis=0).mean(axis=1)


def _allocate_column(daughter: DaughterSpec, pivots: np.ndarray, j: int) -> np.ndarray:
    """Fragment allocation for breakups at pivot j.

    Two-point (hat) splitting between neighbouring pivots preserves
    fragment count and mass simultaneously on each inter-pivot interval.
    Fragments below the bottom pivot are parked there at full count and
    the resulting mass excess is cancelled by shifting count from higher
    pivots down to the bottom one (count-neutral, mass-exact).  Columns
    whose mean fragment size falls below the bottom pivot cannot carry
    the full count non-negatively; they shed count instead, keeping mass
    exact.
    """
    y = pivots[j]
    col = np.zeros(pivots.shape[0])
    bounds = np.concatenate(([0.0], pivots[: j + 1]))
    nums = np.asarray(_daughters.number_integral(daughter, bounds[:-1], bounds[1:], y), dtype=float)
    mass = np.asarray(_daughters.mass_integral(daughter, bounds[:-1], bounds[1:], y), dtype=float)
    col[0] = nums[0]
    if j >= 1:
        pk = pivots[1: j + 1]
        pkm1 = pivots[0: j]
        gap = pk - pkm1
        lower = np.maximum((pk * nums[1:] - mass[1:]) / gap, 0.0)
        upper = np.maximum((mass[1:] - pkm1 * nums[1:]) / gap, 0.0)
        col[0: j] += lower
        col[1: j + 1] += upper
    delta = pivots[0] * nums[0] - mass[0]
    if delta > 0.0 and j >= 1:
        for k in range(1, j + 1):
            gap0 = pivots[k] - pivots[0]
            eps = min(col[k], delta / gap0)
            if eps > 0.0:
                col[k] -= eps
                col[0] += eps
                delta -= eps * gap0
            if delta <= 1e-16 * y:
                delta = max(delta, 0.0)
                break
    if delta > 1e-16 * y:
        col[0] -= delta / pivots[0]
        col[0] = max(col[0], 0.0)
    colmass = float(pivots[: j + 1] @ col[: j + 1])
    if colmass > 0.0:
        col[: j + 1] *= y / colmass
    return col


def assemble_operators(kernel: KernelSpec, daughter: DaughterSpec, grid: GridSpec) -> OperatorSet:
    """Build the fragment-allocation and collision-rate operators."""
    if kernel.n != grid.n:
        raise ValueError(f"kernel truncation ({kernel.n}) must match grid upper end ({grid.n})")
    piv = grid.pivots
    C = grid.cells
    omega_p = _kernels.omega_values(kernel, piv)
    K = _kernels.kernel_values(kernel, piv[:, None], piv[None, :])
    N = np.zeros((C, C))
    for j in range(C):
        N[:, j] = _allocate_column(daughter, piv, j)
    colmass = piv @ N
    if not np.allclose(colmass, piv, rtol=1e-12, atol=0.0):
        raise ColbreakError("fragment allocation failed to conserve column mass")
    return OperatorSet(grid=grid, frag_alloc=N, rate_matrix=K, omega_pivots=omega_p,
                       A0=kernel.A0, use_product=kernel.is_product, beta0=daughter.beta0)


def rhs(state: StateVector, ops: OperatorSet) -> np.ndarray:
    """Time derivative of the cell counts (pure function)."""
    return _rhs_counts(state.counts, ops)


def _rhs_counts(u: np.ndarray, ops: OperatorSet) -> np.ndarray:
    if ops.use_product:
        # O(C) contraction: L_j = A0 * w_j * sum_k w_k u_k
        s = ops.omega_pivots @ u
        L = ops.A0 * ops.omega_pivots * s
    else:
        L = ops.rate_matrix @ u
    flux = u * L
    if ops.frag_alloc.ndim == 2:
        gain = ops.frag_alloc @ flux
    else:
        # partner-dependent allocation: N[i,j,k] against pairwise rates
        pair = ops.rate_matrix * np.outer(u, u)
        gain = np.einsum("ijk,jk->i", ops.frag_alloc, pair)
    return gain - flux


@dataclass
class SolverConfig:
    """Adaptive-stepper settings (model-time units)."""

    t_end: float = 1.0
    dt_init: float = 1e-4
    dt_min: float = 1e-12
    dt_max: float | None = None          # default: t_end / 100
    rel_tol: float = 1e-9
    abs_tol: float = 1e-14
    checkpoint_times: np.ndarray | None = None  # default: 101 uniform points
    clip_tol: float | None = None        # default: 1e-14 * initial count

    def __post_init__(self):
        if self.t_end < 0.0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if not (0.0 < self.dt_min <= self.dt_init):
            raise ValueError("need 0 < dt_min <= dt_init")
        if self.dt_max is not None and self.dt_max < self.dt_init:
            raise ValueError("need dt_init <= dt_max")
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")

    def resolved_checkpoints(self) -> np.ndarray:
        if self.checkpoint_times is not None:
            cps = np.asarray(self.checkpoint_times, dtype=float)
            if cps.ndim != 1 or np.any(np.diff(cps) <= 0.0):
                raise ValueError("checkpoint_times must be strictly increasing")
            if cps[0] > 0.0:
                cps = np.concatenate(([0.0], cps))
            if not math.isclose(cps[-1], self.t_end, rel_tol=1e-12, abs_tol=1e-15):
                raise ValueError("checkpoint_times must end at t_end")
            return cps
        if self.t_end == 0.0:
            return np.array([0.0])
        return np.linspace(0.0, self.t_end, 101)


@dataclass
class StepResult:
    state: StateVector
    dt_used: float
    dt_next: float
    rejections: int
    clipped_mass: float
    clip_events: int
    error_norm: float


# Bogacki-Shampine 3(2) pair
_BS_C2, _BS_C3 = 0.5, 0.75
_BS_B = (2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0)
_BS_E = (-5.0 / 72.0, 1.0 / 12.0, 1.0 / 9.0, -1.0 / 8.0)


def step(state: StateVector, ops: OperatorSet, config: SolverConfig,
         dt: float | None = None, max_dt: float | None = None) -> StepResult:
    """One accepted adaptive step of the embedded 3(2) pair.

    A trial step is rejected (and the step size cut) when the embedded
    error estimate exceeds tolerance or any count undershoots below
    -clip_tol; surviving negatives within clip_tol are clipped to zero
    with the clipped mass accounted.  Underflow of the error-driven step
    size below ``dt_min`` raises :class:`StiffnessError` with a
    diagnostic snapshot.
    """
    u = state.counts
    piv = state.grid.pivots
    clip_tol = config.clip_tol if config.clip_tol is not None else 1e-14 * max(u.sum(), 1.0)
    dt_prop = dt if dt is not None else config.dt_init
    cap = config.dt_max if config.dt_max is not None else math.inf
    rejections = 0
    while True:
        if dt_prop < config.dt_min:
            raise StiffnessError(
                "step size underflow: dynamics too fast for the explicit stepper",
                t=state.t, dt=dt_prop,
                diagnostics={"min_count": float(u.min()), "max_count": float(u.max()),
                             "number": float(u.sum()), "mass": float(piv @ u)})
        dt_used = min(dt_prop, cap)
        if max_dt is not None:
            dt_used = min(dt_used, max_dt)
        k1 = _rhs_counts(u, ops)
        k2 = _rhs_counts(u + dt_used * _BS_C2 * k1, ops)
        k3 = _rhs_counts(u + dt_used * _BS_C3 * k2, ops)
        u3 = u + dt_used * (_BS_B[0] * k1 + _BS_B[1] * k2 + _BS_B[2] * k3)
        k4 = _rhs_counts(u3, ops)
        err = dt_used * (_BS_E[0] * k1 + _BS_E[1] * k2 + _BS_E[2] * k3 + _BS_E[3] * k4)
        scale = config.abs_tol + config.rel_tol * np.maximum(np.abs(u), np.abs(u3))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if err_norm <= 1.0 and float(u3.min()) >= -clip_tol:
            break
        rejections += 1
        if err_norm > 1.0:
            dt_prop = dt_used * max(0.2, 0.9 * err_norm ** (-1.0 / 3.0))
        else:
            dt_prop = dt_used * 0.5
    clipped_mass = 0.0
    clip_events = 0
    neg = u3 < 0.0
    if np.any(neg):
        clipped_mass = float(-(piv[neg] @ u3[neg]))
        clip_events = int(neg.sum())
        u3 = np.where(neg, 0.0, u3)
    growth = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** (-1.0 / 3.0)))
    dt_next = min(dt_used * growth, cap)
    new_state = StateVector(counts=u3, t=state.t + dt_used, grid=state.grid)
    return StepResult(state=new_state, dt_used=dt_used, dt_next=dt_next,
                      rejections=rejections, clipped_mass=clipped_mass,
                      clip_events=clip_events, error_norm=err_norm)


@dataclass
class Trajectory:
    """Checkpointed solution of one run plus the step-level event log."""

    grid: GridSpec
    times: np.ndarray
    states: np.ndarray  # (checkpoints, cells)
    kernel: KernelSpec
    daughter: DaughterSpec
    config: SolverConfig
    stats: dict
    step_log: dict
    flags: list[str]

    def state(self, i: int) -> StateVector:
        return StateVector(counts=self.states[i].copy(), t=float(self.times[i]), grid=self.grid)

    @property
    def initial_state(self) -> StateVector:
        return self.state(0)

    @property
    def final_state(self) -> StateVector:
        return self.state(len(self.times) - 1)


_MAX_STEPS = 5_000_000


def solve(f_in: InitialDensity, kernel: KernelSpec, daughter: DaughterSpec,
          grid: GridSpec, config: SolverConfig,
          ops: OperatorSet | None = None) -> Trajectory:
    """Integrate the truncated dynamics to t_end, emitting checkpoints.

    A single run is sequential and deterministic (fixed evaluation
    order); concurrent runs may share the immutable operator set.
    """
    if ops is None:
        ops = assemble_operators(kernel, daughter, grid)
    state = project_initial(f_in, grid)
    overrides = {}
    if config.clip_tol is None:
        overrides["clip_tol"] = 1e-14 * max(state.number, 1.0)
    if config.dt_max is None and config.t_end > 0.0:
        overrides["dt_max"] = max(config.t_end / 100.0, config.dt_init)
    if overrides:
        config = SolverConfig(**{**config.__dict__, **overrides})
    cps = config.resolved_checkpoints()
    states = np.empty((len(cps), grid.cells))
    states[0] = state.counts
    initial_mass = state.mass
    dropped = dropped_initial_mass(f_in, grid)

    accepted = rejected = clip_events = steps = 0
    clipped_mass = 0.0
    dt = config.dt_init
    log_t: list[float] = []
    log_dt: list[float] = []
    log_err: list[float] = []
    for ci in range(1, len(cps)):
        target = float(cps[ci])
        while target - state.t > 1e-12 * max(target, 1.0):
            res = step(state, ops, config, dt=dt, max_dt=target - state.t)
            state = res.state
            dt = res.dt_next
            accepted += 1
            rejected += res.rejections
            clipped_mass += res.clipped_mass
            clip_events += res.clip_events
            log_t.append(state.t)
            log_dt.append(res.dt_used)
            log_err.append(res.error_norm)
            steps += 1
            if steps > _MAX_STEPS:
                raise ColbreakError("step budget exhausted before reaching t_end")
        state.t = target
        states[ci] = state.counts

    flags: list[str] = []
    if initial_mass > 0.0 and clipped_mass > 1e-9 * initial_mass:
        flags.append("invalid: clipped mass exceeds 1e-9 of initial mass")
    stats = {
        "steps_accepted": accepted,
        "steps_rejected": rejected,
        "clip_events": clip_events,
        "clipped_mass": clipped_mass,
        "dropped_initial_mass": dropped,
        "initial_mass": initial_mass,
        "final_dt": dt,
    }
    step_log = {"t": np.asarray(log_t), "dt": np.asarray(log_dt), "err": np.asarray(log_err)}
    return Trajectory(grid=grid, times=cps, states=states, kernel=kernel,
                      daughter=daughter, config=config, stats=stats,
                      step_log=step_log, flags=flags)
