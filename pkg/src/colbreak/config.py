"""Run-configuration parsing and validation.

Configs are YAML mappings with one section per model ingredient; every
section is optional and defaults to the reference scenario (bilinear
kernel, binary-uniform daughter, quadratic weight, exponential initial
data on a 120-cell grid over [1e-3, 10]).  Validation is exhaustive: all
violations are collected and reported together, each with a
path-qualified message.

Top-level keys::

    mode          solve | mc | validate | sweep            (required)
    seed          integer, default 0
    output_dir    path, default "out"
    kernel        family ("I".."VIII"), A0, ell, n, beta, gamma, nu, mu,
                  p, A1
    daughter      family (power_law | uniform_binary | kll_unit_ends |
                  kll_shrinking_ends), nu, p, beta0, Bp, y_max
    weight        family (power | power_shifted | power_exp | power_log),
                  alpha, beta, lam, gamma
    grid          x_min, n, cells
    solver        t_end, dt_init, dt_min, dt_max, rel_tol, abs_tol,
                  checkpoints (count) or checkpoint_times (list), clip_tol
    initial       kind (exponential | indicator), lo, hi
    mc            particles, replicas, t_end, checkpoints or
                  checkpoint_times, event_cap
    sweep         ell_values (list of positive reals)
    diagnostics   m_cut

``validate`` mode accepts out-of-class weight exponents (the point of
that mode is membership testing); every other mode enforces alpha > 1 at
parse time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .daughters import DaughterSpec
from .densities import InitialDensity
from .errors import ConfigError
from .kernels import KernelSpec
from .oracle import MCConfig
from .sectional import GridSpec, SolverConfig, build_grid
from .weights import WeightSpec

__all__ = ["RunConfig", "parse_config", "MODES"]

MODES = ("solve", "mc", "validate", "sweep")

_SECTIONS = {
    "mode", "seed", "output_dir", "kernel", "daughter", "weight", "grid",
    "solver", "initial", "mc", "sweep", "diagnostics",
}
_KERNEL_KEYS = {"family", "A0", "ell", "n", "beta", "gamma", "nu", "mu", "p", "A1"}
_DAUGHTER_KEYS = {"family", "nu", "p", "beta0", "Bp", "y_max"}
_WEIGHT_KEYS = {"family", "alpha", "beta", "lam", "gamma"}
_GRID_KEYS = {"x_min", "n", "cells"}
_SOLVER_KEYS = {"t_end", "dt_init", "dt_min", "dt_max", "rel_tol", "abs_tol",
                "checkpoints", "checkpoint_times", "clip_tol"}
_INITIAL_KEYS = {"kind", "lo", "hi"}
_MC_KEYS = {"particles", "replicas", "t_end", "checkpoints", "checkpoint_times",
            "event_cap", "seed"}
_SWEEP_KEYS = {"ell_values"}
_DIAG_KEYS = {"m_cut"}


@dataclass
class RunConfig:
    """Fully validated, materialised run configuration."""

    mode: str
    seed: int
    output_dir: str
    kernel: KernelSpec
    daughter: DaughterSpec
    weight: WeightSpec
    grid: GridSpec
    solver: SolverConfig
    initial: InitialDensity
    mc: MCConfig
    ell_values: list[float] = field(default_factory=list)
    m_cut: float = 2.0

    def describe(self) -> dict:
        """Normalised echo of the configuration (manifest payload)."""
        return {
            "mode": self.mode,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "kernel": self.kernel.describe(),
            "daughter": self.daughter.describe(),
            "weight": self.weight.describe(),
            "grid": self.grid.describe(),
            "solver": {
                "t_end": self.solver.t_end,
                "dt_init": self.solver.dt_init,
                "dt_min": self.solver.dt_min,
                "dt_max": self.solver.dt_max,
                "rel_tol": self.solver.rel_tol,
                "abs_tol": self.solver.abs_tol,
                "checkpoints": len(self.solver.resolved_checkpoints()),
                "clip_tol": self.solver.clip_tol,
            },
            "initial": self.initial.describe(),
            "mc": {
                "particles": self.mc.particle_count,
                "replicas": self.mc.replicas,
                "t_end": self.mc.t_end,
                "checkpoints": len(self.mc.resolved_checkpoints()),
                "event_cap": self.mc.event_cap,
                "seed": self.mc.seed,
            },
            "sweep": {"ell_values": self.ell_values},
            "diagnostics": {"m_cut": self.m_cut},
        }


class _Scope:
    """Collects path-qualified validation errors while reading a mapping."""

    def __init__(self, data: dict, path: str, errors: list[str], allowed: set[str]):
        self.data = data if isinstance(data, dict) else {}
        self.path = path
        self.errors = errors
        if not isinstance(data, (dict, type(None))):
            errors.append(f"{path}: expected a mapping, got {type(data).__name__}")
        for key in self.data:
            if key not in allowed:
                errors.append(f"{path}.{key}: unknown key")

    def error(self, key: str, msg: str) -> None:
        self.errors.append(f"{self.path}.{key}: {msg}")

    def number(self, key: str, default: float | None, positive: bool = False) -> float | None:
        if key not in self.data:
            return default
        val = self.data[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.error(key, f"expected a number, got {val!r}")
            return default
        val = float(val)
        if positive and not val > 0.0:
            self.error(key, f"must be > 0, got {val}")
            return default
        return val

    def integer(self, key: str, default: int | None, minimum: int | None = None) -> int | None:
        if key not in self.data:
            return default
        val = self.data[key]
        if isinstance(val, bool) or not isinstance(val, int):
            self.error(key, f"expected an integer, got {val!r}")
            return default
        if minimum is not None and val < minimum:
            self.error(key, f"must be >= {minimum}, got {val}")
            return default
        return val

    def string(self, key: str, default: str | None, choices: tuple[str, ...] | None = None) -> str | None:
        if key not in self.data:
            return default
        val = self.data[key]
        if not isinstance(val, str):
            self.error(key, f"expected a string, got {val!r}")
            return default
        if choices is not None and val not in choices:
            self.error(key, f"must be one of {sorted(choices)}, got {val!r}")
            return default
        return val

    def number_list(self, key: str, default: list[float] | None) -> list[float] | None:
        if key not in self.data:
            return default
        val = self.data[key]
        if not isinstance(val, list) or not val or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
            self.error(key, f"expected a non-empty list of numbers, got {val!r}")
            return default
        return [float(v) for v in val]


def _checkpoints(scope: _Scope, t_end: float, default_count: int) -> np.ndarray | None:
    count = scope.integer("checkpoints", None, minimum=2)
    times = scope.number_list("checkpoint_times", None)
    if count is not None and times is not None:
        scope.error("checkpoint_times", "give either checkpoints or checkpoint_times, not both")
        return None
    if times is not None:
        return np.asarray(times, dtype=float)
    if count is not None:
        return np.linspace(0.0, t_end, count)
    if t_end == 0.0:
        return np.array([0.0])
    return np.linspace(0.0, t_end, default_count)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML run configuration.

    Raises :class:`ConfigError` carrying every violation found; a valid
    document yields a fully materialised :class:`RunConfig` with all
    defaults resolved.
    """
    errors: list[str] = []
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"config: not valid YAML ({exc})"]) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([f"config: expected a mapping at top level, got {type(raw).__name__}"])
    for key in raw:
        if key not in _SECTIONS:
            errors.append(f"{key}: unknown key")

    mode = raw.get("mode")
    if mode is None:
        errors.append("mode: required (one of solve, mc, validate, sweep)")
        mode = "solve"
    elif mode not in MODES:
        errors.append(f"mode: must be one of {list(MODES)}, got {mode!r}")
        mode = "solve"

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        errors.append(f"seed: expected an integer, got {seed!r}")
        seed = 0
    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str):
        errors.append(f"output_dir: expected a string, got {output_dir!r}")
        output_dir = "out"

    ks = _Scope(raw.get("kernel"), "kernel", errors, _KERNEL_KEYS)
    kernel = None
    n_before = len(errors)
    kern_kwargs = {
        "family": ks.string("family", "I", choices=("I", "II", "III", "IV", "V", "VI", "VII", "VIII")),
        "A0": ks.number("A0", 1.0, positive=True),
        "ell": ks.number("ell", 1.0, positive=True),
        "n": ks.number("n", 10.0, positive=True),
        "beta": ks.number("beta", 0.0),
        "gamma": ks.number("gamma", 1.0),
        "nu": ks.number("nu", 1.0),
        "mu": ks.number("mu", 0.0),
        "p": ks.number("p", 0.0),
        "A1": ks.number("A1", None, positive=True),
    }
    if len(errors) == n_before:
        try:
            kernel = KernelSpec(**kern_kwargs)
        except ValueError as exc:
            errors.append(f"kernel: {exc}")

    ds = _Scope(raw.get("daughter"), "daughter", errors, _DAUGHTER_KEYS)
    daughter = None
    n_before = len(errors)
    d_kwargs = {
        "family": ds.string("family", "uniform_binary",
                            choices=("power_law", "uniform_binary", "kll_unit_ends",
                                     "kll_shrinking_ends")),
        "nu": ds.number("nu", 0.0),
        "p": ds.number("p", 1.5),
        "y_max": ds.number("y_max", 100.0, positive=True),
        "beta0": ds.number("beta0", None),
        "Bp": ds.number("Bp", None, positive=True),
    }
    if len(errors) == n_before:
        try:
            daughter = DaughterSpec(**d_kwargs)
        except ValueError as exc:
            errors.append(f"daughter: {exc}")

    ws = _Scope(raw.get("weight"), "weight", errors, _WEIGHT_KEYS)
    weight = None
    n_before = len(errors)
    w_kwargs = {
        "family": ws.string("family", "power",
                            choices=("power", "power_shifted", "power_exp", "power_log")),
        "alpha": ws.number("alpha", 2.0),
        "beta": ws.number("beta", 0.0),
        "lam": ws.number("lam", 1.0),
        "gamma": ws.number("gamma", 1.0),
        # membership testing deliberately admits out-of-class candidates
        "candidate": mode == "validate",
    }
    if len(errors) == n_before:
        try:
            weight = WeightSpec(**w_kwargs)
        except ValueError as exc:
            errors.append(f"weight: {exc}")

    gs = _Scope(raw.get("grid"), "grid", errors, _GRID_KEYS)
    grid = None
    n_before = len(errors)
    g_kwargs = {
        "x_min": gs.number("x_min", 1e-3, positive=True),
        "n": gs.number("n", 10.0, positive=True),
        "cells": gs.integer("cells", 120, minimum=1),
    }
    if len(errors) == n_before:
        try:
            grid = build_grid(**g_kwargs)
        except ValueError as exc:
            errors.append(f"grid: {exc}")

    if kernel is not None and grid is not None and kernel.n != grid.n:
        errors.append(
            f"kernel.n / grid.n: truncation sizes must match, got kernel.n={kernel.n} "
            f"and grid.n={grid.n}")

    ss = _Scope(raw.get("solver"), "solver", errors, _SOLVER_KEYS)
    solver = None
    n_before = len(errors)
    t_end = ss.number("t_end", 1.0)
    if t_end is not None and t_end < 0.0:
        ss.error("t_end", f"must be >= 0, got {t_end}")
        t_end = 1.0
    s_kwargs = {
        "t_end": t_end,
        "dt_init": ss.number("dt_init", 1e-4, positive=True),
        "dt_min": ss.number("dt_min", 1e-12, positive=True),
        "dt_max": ss.number("dt_max", None, positive=True),
        "rel_tol": ss.number("rel_tol", 1e-9, positive=True),
        "abs_tol": ss.number("abs_tol", 1e-14, positive=True),
        "checkpoint_times": _checkpoints(ss, t_end, default_count=101),
        "clip_tol": ss.number("clip_tol", None),
    }
    if len(errors) == n_before:
        try:
            solver = SolverConfig(**s_kwargs)
        except ValueError as exc:
            errors.append(f"solver: {exc}")

    is_ = _Scope(raw.get("initial"), "initial", errors, _INITIAL_KEYS)
    initial = None
    n_before = len(errors)
    i_kwargs = {
        "kind": is_.string("kind", "exponential", choices=("exponential", "indicator")),
        "lo": is_.number("lo", 1.0),
        "hi": is_.number("hi", 2.0),
    }
    if len(errors) == n_before:
        try:
            initial = InitialDensity(**i_kwargs)
        except ValueError as exc:
            errors.append(f"initial: {exc}")

    ms = _Scope(raw.get("mc"), "mc", errors, _MC_KEYS)
    mc = None
    n_before = len(errors)
    mc_t_end = ms.number("t_end", 1.0)
    m_kwargs = {
        "particle_count": ms.integer("particles", 10_000, minimum=2),
        "replicas": ms.integer("replicas", 25, minimum=1),
        "t_end": mc_t_end,
        "checkpoint_times": _checkpoints(ms, mc_t_end, default_count=11),
        "seed": ms.integer("seed", seed),
        "event_cap": ms.integer("event_cap", 5_000_000, minimum=1),
    }
    if len(errors) == n_before:
        try:
            mc = MCConfig(**m_kwargs)
        except ValueError as exc:
            errors.append(f"mc: {exc}")

    sw = _Scope(raw.get("sweep"), "sweep", errors, _SWEEP_KEYS)
    ell_values = sw.number_list("ell_values", [0.25, 0.5, 1.0]) or []
    for v in ell_values:
        if not v > 0.0:
            sw.error("ell_values", f"entries must be > 0, got {v}")

    dg = _Scope(raw.get("diagnostics"), "diagnostics", errors, _DIAG_KEYS)
    m_cut = dg.number("m_cut", 2.0, positive=True)
    if grid is not None and m_cut is not None and not (1.0 < m_cut < grid.n):
        dg.error("m_cut", f"must lie in (1, grid.n), got {m_cut}")

    if errors:
        raise ConfigError(errors)
    return RunConfig(mode=mode, seed=seed, output_dir=output_dir, kernel=kernel,
                     daughter=daughter, weight=weight, grid=grid, solver=solver,
                     initial=initial, mc=mc, ell_values=ell_values, m_cut=m_cut)
