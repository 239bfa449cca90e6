"""Exact stochastic particle oracle for the breakage dynamics.

A finite system of particle masses in a volume V evolves by collision
events: every ordered pair (i, j) with i != j fires at rate
a(x_i, x_j) / V, upon which the focal particle i fragments against
partner j (the partner is untouched).  Empirical moments of the system
converge to the deterministic solution as the particle number grows, so
seeded ensembles of this process serve as an independent oracle for the
sectional solver at small scale.

Waiting times are exponential with the total rate

    Lambda = A0 * (S**2 - Q) / V,   S = sum w(x_i),  Q = sum w(x_i)**2,

available in O(1) per event for product kernels by keeping S and Q as
running sums (exactly recomputed periodically to cap drift).  The breaker
and partner are drawn independently with probability proportional to
w(x_i); equal pairs are rejected and both draws repeated, which yields
the joint law proportional to w(x_i) w(x_j) on i != j.

Fragment pairs are constructed so their float sum reproduces the parent
mass bitwise; the total mass of a replica is therefore exactly invariant
over every event.  The system volume of each replica is calibrated so
the empirical mass density equals the target first moment exactly, which
makes the reported M1 identical (hence of zero spread) across replicas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import daughters as _daughters
from . import kernels as _kernels
from .daughters import DaughterSpec
from .densities import InitialDensity
from .errors import UnsupportedOperation
from .kernels import KernelSpec

__all__ = [
    "ParticleSystem",
    "MCConfig",
    "MCStats",
    "ReplicaResult",
    "init_from_density",
    "total_rate",
    "sample_event",
    "apply_breakup",
    "run",
    "ensemble_stats",
]

_RESYNC_EVERY = 1 << 16  # exact recomputation period for the running sums


@dataclass
class ParticleSystem:
    """A finite ensemble of particle masses in a system volume.

    ``mass_density_target`` is the analytic first moment the volume was
    calibrated to; it equals ``mass_total / volume`` up to one rounding
    and is exactly invariant over events.
    """

    masses: np.ndarray
    count: int
    volume: float
    t: float = 0.0
    mass_total: float = 0.0
    mass_density_target: float = 0.0

    def __post_init__(self):
        if self.mass_total == 0.0:
            self.mass_total = float(np.sum(self.masses[: self.count]))
        if self.mass_density_target == 0.0:
            self.mass_density_target = self.mass_total / self.volume

    def live_masses(self) -> np.ndarray:
        return self.masses[: self.count]

    @property
    def m0(self) -> float:
        return self.count / self.volume

    @property
    def m1(self) -> float:
        return self.mass_total / self.volume

    def m2(self) -> float:
        m = self.live_masses()
        return float(np.sum(m * m)) / self.volume


@dataclass
class MCConfig:
    particle_count: int = 10_000
    replicas: int = 25
    t_end: float = 1.0
    checkpoint_times: np.ndarray | None = None  # default: 11 uniform points
    seed: int = 0
    event_cap: int = 5_000_000

    def __post_init__(self):
        if self.particle_count < 2:
            raise ValueError("particle_count must be >= 2")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.t_end < 0.0:
            raise ValueError("t_end must be >= 0")

    def resolved_checkpoints(self) -> np.ndarray:
        if self.checkpoint_times is not None:
            cps = np.asarray(self.checkpoint_times, dtype=float)
            if np.any(np.diff(cps) <= 0.0):
                raise ValueError("checkpoint_times must be strictly increasing")
            if cps[0] > 0.0:
                cps = np.concatenate(([0.0], cps))
            return cps
        if self.t_end == 0.0:
            return np.array([0.0])
        return np.linspace(0.0, self.t_end, 11)


def init_from_density(f_in: InitialDensity, count: int, rng: np.random.Generator,
                      cutoff: float) -> ParticleSystem:
    """Draw an iid particle ensemble from f restricted to (0, cutoff).

    The volume is set from the drawn total mass so the empirical mass
    density matches the analytic first moment of the (truncated) density
    exactly; the empirical number density then approximates the analytic
    zeroth moment up to the usual root-N fluctuation.
    """
    if count < 2:
        raise ValueError("need at least 2 particles")
    masses = f_in.sample(rng, count, cutoff)
    target_mass_density = f_in.mass_on(0.0, cutoff)
    if not target_mass_density > 0.0:
        raise ValueError("density has no mass on (0, cutoff)")
    total = float(np.sum(masses))
    volume = total / target_mass_density
    buf = np.empty(2 * count)
    buf[:count] = masses
    return ParticleSystem(masses=buf, count=count, volume=volume, t=0.0,
                          mass_total=total, mass_density_target=target_mass_density)


def _require_product(kernel: KernelSpec) -> None:
    if not kernel.is_product:
        raise UnsupportedOperation(
            "the particle oracle requires a globally factorised kernel "
            "(families I-VII); family VIII is not supported")


def total_rate(sys: ParticleSystem, kernel: KernelSpec) -> float:
    """Total event rate Lambda of the current configuration."""
    _require_product(kernel)
    w = _kernels.omega_values(kernel, sys.live_masses())
    s = float(w.sum())
    q = float((w * w).sum())
    return kernel.A0 * (s * s - q) / sys.volume


def sample_event(sys: ParticleSystem, kernel: KernelSpec,
                 rng: np.random.Generator) -> tuple[float, int, int] | None:
    """Draw the next event (waiting time, breaker, partner); None if absorbed.

    Standalone variant that recomputes the weight sums; the hot loop in
    :func:`run` keeps them incrementally.
    """
    if sys.count < 2:
        raise ValueError("need at least 2 particles")
    _require_product(kernel)
    w = _kernels.omega_values(kernel, sys.live_masses())
    s = float(w.sum())
    q = float((w * w).sum())
    lam = kernel.A0 * (s * s - q) / sys.volume
    if lam <= 0.0:
        return None
    tau = rng.exponential(1.0 / lam)
    cum = np.cumsum(w)
    while True:
        i = min(int(np.searchsorted(cum, rng.random() * s, side="right")), sys.count - 1)
        j = min(int(np.searchsorted(cum, rng.random() * s, side="right")), sys.count - 1)
        if i != j:
            return tau, i, j


def apply_breakup(sys: ParticleSystem, i: int, j: int, daughter: DaughterSpec,
                  rng: np.random.Generator) -> list[float]:
    """Fragment particle i against partner j in place; returns the fragments."""
    y = float(sys.masses[i])
    z = float(sys.masses[j])
    frags = _daughters.sample_fragments(daughter, y, z, rng)
    sys.masses[i] = frags[0]
    extra = len(frags) - 1
    if sys.count + extra > sys.masses.shape[0]:
        sys.masses = np.resize(sys.masses, 2 * (sys.count + extra))
    for k, f in enumerate(frags[1:]):
        sys.masses[sys.count + k] = f
    sys.count += extra
    return frags


@dataclass
class ReplicaResult:
    times: np.ndarray
    m0: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    events: int
    aborted: bool
    absorbed: bool
    max_mass: float


def run(sys: ParticleSystem, kernel: KernelSpec, daughter: DaughterSpec,
        t_end: float, checkpoints: np.ndarray, rng: np.random.Generator,
        event_cap: int = 5_000_000) -> ReplicaResult:
    """Exact event loop to t_end, recording moments at the checkpoints."""
    if not daughter.samplable:
        raise UnsupportedOperation(
            f"daughter family {daughter.family.value} is not samplable; "
            "the oracle never approximates fragment draws")
    _require_product(kernel)
    cps = np.asarray(checkpoints, dtype=float)
    n_cp = len(cps)
    m0 = np.empty(n_cp)
    m1 = np.empty(n_cp)
    m2 = np.empty(n_cp)
    target_m1 = sys.mass_density_target

    omegas = np.empty_like(sys.masses)
    omegas[: sys.count] = _kernels.omega_values(kernel, sys.live_masses())
    s = float(omegas[: sys.count].sum())
    q = float((omegas[: sys.count] ** 2).sum())

    def record(idx: int) -> None:
        m0[idx] = sys.count / sys.volume
        m1[idx] = target_m1  # exactly invariant; cross-checked below
        m2[idx] = sys.m2()
        recomputed = float(np.sum(sys.live_masses())) / sys.volume
        if abs(recomputed - target_m1) > 1e-9 * target_m1:
            raise AssertionError("per-event mass accounting drifted beyond tolerance")

    cp_idx = 0
    events = 0
    aborted = absorbed = False
    max_mass = float(sys.live_masses().max())
    while cp_idx < n_cp and cps[cp_idx] <= sys.t:
        record(cp_idx)
        cp_idx += 1
    while sys.t < t_end:
        lam = kernel.A0 * (s * s - q) / sys.volume
        if lam <= 0.0:
            absorbed = True
            break
        tau = rng.exponential(1.0 / lam)
        t_next = sys.t + tau
        while cp_idx < n_cp and cps[cp_idx] <= min(t_next, t_end):
            record(cp_idx)
            cp_idx += 1
        if t_next > t_end:
            sys.t = t_end
            break
        sys.t = t_next
        cum = np.cumsum(omegas[: sys.count])
        tot = cum[-1]
        while True:
            i = min(int(np.searchsorted(cum, rng.random() * tot, side="right")), sys.count - 1)
            j = min(int(np.searchsorted(cum, rng.random() * tot, side="right")), sys.count - 1)
            if i != j:
                break
        w_old = float(omegas[i])
        frags = apply_breakup(sys, i, j, daughter, rng)
        if omegas.shape[0] < sys.masses.shape[0]:
            omegas = np.resize(omegas, sys.masses.shape[0])
        new_w = _kernels.omega_values(kernel, np.asarray(frags))
        omegas[i] = new_w[0]
        omegas[sys.count - len(frags) + 1: sys.count] = new_w[1:]
        s += float(new_w.sum()) - w_old
        q += float((new_w ** 2).sum()) - w_old * w_old
        events += 1
        if events % _RESYNC_EVERY == 0:
            live = omegas[: sys.count]
            s = float(live.sum())
            q = float((live ** 2).sum())
        if events >= event_cap:
            aborted = True
            break
    while cp_idx < n_cp:
        # state frozen after absorption/abort/horizon; remaining checkpoints
        # see the final configuration
        record(cp_idx)
        cp_idx += 1
    return ReplicaResult(times=cps, m0=m0, m1=m1, m2=m2, events=events,
                         aborted=aborted, absorbed=absorbed,
                         max_mass=float(sys.live_masses().max()) if sys.count else max_mass)


@dataclass
class MCStats:
    """Ensemble moment statistics across independent replicas."""

    times: np.ndarray
    m0_mean: np.ndarray
    m0_stderr: np.ndarray
    m1_mean: np.ndarray
    m1_stderr: np.ndarray
    m2_mean: np.ndarray
    m2_stderr: np.ndarray
    replicas: int
    particle_count: int
    events_total: int
    aborted_replicas: int
    m0_samples: np.ndarray = field(repr=False, default=None)  # (R, T)


def _stderr(samples: np.ndarray) -> np.ndarray:
    r = samples.shape[0]
    if r < 2:
        return np.full(samples.shape[1], math.nan)
    # centre on the first replica before the two-pass moment: columns of
    # identical values then come out exactly zero instead of mean-rounding ulps
    centered = samples - samples[0]
    return centered.std(axis=0, ddof=1) / math.sqrt(r)


def ensemble_stats(f_in: InitialDensity, kernel: KernelSpec, daughter: DaughterSpec,
                   config: MCConfig) -> MCStats:
    """Run independent replicas and aggregate per-checkpoint moments.

    Replica r draws its generator from the spawned seed sequence
    (seed, r), so results are reproducible bit for bit and independent of
    scheduling.
    """
    cps = config.resolved_checkpoints()
    seeds = np.random.SeedSequence(config.seed).spawn(config.replicas)
    m0s = np.empty((config.replicas, len(cps)))
    m1s = np.empty_like(m0s)
    m2s = np.empty_like(m0s)
    events_total = 0
    aborted = 0
    for r in range(config.replicas):
        rng = np.random.default_rng(seeds[r])
        sys = init_from_density(f_in, config.particle_count, rng, cutoff=kernel.n)
        res = run(sys, kernel, daughter, config.t_end, cps, rng,
                  event_cap=config.event_cap)
        m0s[r] = res.m0
        m1s[r] = res.m1
        m2s[r] = res.m2
        events_total += res.events
        aborted += int(res.aborted)
    return MCStats(times=cps, m0_mean=m0s.mean(axis=0), m0_stderr=_stderr(m0s),
                   m1_mean=m1s.mean(axis=0), m1_stderr=_stderr(m1s),
                   m2_mean=m2s.mean(axis=0), m2_stderr=_stderr(m2s),
                   replicas=config.replicas, particle_count=config.particle_count,
                   events_total=events_total, aborted_replicas=aborted,
                   m0_samples=m0s)
