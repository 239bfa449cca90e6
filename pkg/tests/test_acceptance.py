"""Acceptance gate: every top-level criterion at its stated tolerance.

Each criterion is one test that prints its own PASS/FAIL line; the
reference scenario throughout is the bilinear kernel (family I, ell=1,
A0=1) with the binary-uniform daughter, exponential initial data and the
geometric grid on [1e-3, 10].
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from colbreak.daughters import DaughterSpec, check_lmc, check_nop, check_p_condition
from colbreak.densities import exponential_density
from colbreak.diagnostics import (envelope_constant, gronwall_bound,
                                  riccati_blowup_time, riccati_bound, tail_checks,
                                  weighted_moment)
from colbreak.kernels import KernelSpec
from colbreak.oracle import MCConfig, ensemble_stats
from colbreak.sectional import (SolverConfig, assemble_operators, build_grid,
                                project_initial, solve)
from colbreak.weights import (WeightSpec, closed_form_theta, infimum_theta,
                              resolve_theta)
from colbreak.cli import main as cli_main

KERNEL = KernelSpec(family="I", A0=1.0, ell=1.0, n=10.0)
BINARY = DaughterSpec(family="uniform_binary")
WEIGHT = WeightSpec(family="power", alpha=2.0)
F_IN = exponential_density()
THETA = 1.0 / 3.0  # closed form for the quadratic weight vs flat daughter


def _criterion(num: int, description: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    line = f"{status} criterion {num}: {description}"
    if detail:
        line += f" [{detail}]"
    print(line)
    assert passed, line


def _reference_run(cells: int):
    grid = build_grid(1e-3, 10.0, cells)
    cfg = SolverConfig(t_end=1.0, rel_tol=1e-11, abs_tol=1e-16)
    ops = assemble_operators(KERNEL, BINARY, grid)
    start = time.perf_counter()
    traj = solve(F_IN, KERNEL, BINARY, grid, cfg, ops=ops)
    elapsed = time.perf_counter() - start
    return traj, ops, elapsed


@pytest.fixture(scope="module")
def ref60():
    return _reference_run(60)


@pytest.fixture(scope="module")
def ref120():
    return _reference_run(120)


@pytest.fixture(scope="module")
def ref240():
    return _reference_run(240)


@pytest.fixture(scope="module")
def mc_ensemble():
    cfg = MCConfig(particle_count=10_000, replicas=25, t_end=1.0, seed=7)
    start = time.perf_counter()
    stats = ensemble_stats(F_IN, KERNEL, BINARY, cfg)
    elapsed = time.perf_counter() - start
    return stats, elapsed


@pytest.fixture(scope="module")
def sub_linear_run():
    kernel = KERNEL.with_ell(0.25)
    grid = build_grid(1e-3, 10.0, 120)
    state0 = project_initial(F_IN, grid)
    c0 = weighted_moment(state0, WEIGHT)
    a_const = envelope_constant(BINARY.beta0, kernel.A0, kernel.A1)
    t_star = riccati_blowup_time(state0.number, c0, THETA, 1.0, a_const)
    cfg = SolverConfig(t_end=0.8 * t_star, rel_tol=1e-10, abs_tol=1e-16)
    traj = solve(F_IN, kernel, BINARY, grid, cfg)
    return traj, state0.number, c0, a_const, t_star


def _m0_law_error(traj) -> float:
    m0 = traj.states.sum(axis=1)
    theta_mass = float(traj.states[0] @ traj.grid.pivots)
    window = traj.times >= 0.1
    drift = theta_mass ** 2 * traj.times[window]
    return float(np.max(np.abs(m0[window] - m0[0] - drift) / drift))


def test_criterion_01_mass_conservation(ref120):
    traj, _, elapsed = ref120
    m1 = traj.states @ traj.grid.pivots
    drift = float(np.max(np.abs(m1 / m1[0] - 1.0)))
    _criterion(1, "discrete mass conservation <= 1e-10 on the reference run",
               drift <= 1e-10 and elapsed <= 60.0,
               f"drift={drift:.3e}, runtime={elapsed:.1f}s")


def test_criterion_02_number_growth_law(ref60, ref120, ref240):
    errors = {}
    finals = {}
    for cells, fixture in ((60, ref60), (120, ref120), (240, ref240)):
        traj = fixture[0]
        errors[cells] = _m0_law_error(traj)
        finals[cells] = float(traj.states[-1].sum())
    within = all(e <= 0.01 for e in errors.values())
    decreasing = errors[60] > errors[120] > errors[240]
    # self-convergence order against the finest grid: for order q the
    # difference ratio equals 2**q + 1
    d60 = abs(finals[60] - finals[240])
    d120 = abs(finals[120] - finals[240])
    order = math.log2(d60 / d120 - 1.0) if d120 > 0.0 and d60 / d120 > 1.0 else 0.0
    _criterion(2, "closed-form number law within 1%, refining at order >= 1",
               within and decreasing and order >= 1.0,
               f"errors={ {c: f'{e:.2e}' for c, e in errors.items()} }, order={order:.2f}")


def test_criterion_03_oracle_equivalence(ref120, mc_ensemble):
    traj = ref120[0]
    stats, elapsed = mc_ensemble
    m0_pde = traj.states.sum(axis=1)
    agree = True
    worst = 0.0
    for i, t in enumerate(stats.times):
        j = int(np.argmin(np.abs(traj.times - t)))
        assert abs(traj.times[j] - t) <= 1e-9 * max(1.0, t)
        dev = abs(stats.m0_mean[i] - m0_pde[j])
        budget = 3.0 * stats.m0_stderr[i]
        worst = max(worst, dev / budget)
        agree = agree and dev <= budget
    mass_spread_zero = bool(np.all(stats.m1_stderr == 0.0))
    _criterion(3, "ensemble mean agrees with the solver within 3 standard errors; "
                  "mass spread exactly zero",
               agree and mass_spread_zero and elapsed <= 300.0,
               f"worst budget use={worst:.2f}, runtime={elapsed:.0f}s")


def test_criterion_04_dissipativity_constant():
    worst_dev = 0.0
    worst_spread = 0.0
    for alpha in (1.5, 2.0, 3.0):
        for nu in (0.0, -0.25, -0.5):
            weight = WeightSpec(family="power", alpha=alpha)
            daughter = DaughterSpec(family="power_law", nu=nu)
            est = infimum_theta(weight, daughter, y_max=10.0)
            worst_dev = max(worst_dev, abs(est.theta_hat - closed_form_theta(alpha, nu)))
            worst_spread = max(worst_spread, est.spread)
    _criterion(4, "dissipativity constant matches the closed form on the 9-point grid",
               worst_dev <= 1e-6 and worst_spread <= 1e-10,
               f"max dev={worst_dev:.2e}, max spread={worst_spread:.2e}")


def test_criterion_05_weighted_moment_bounds(ref120):
    traj, ops, _ = ref120
    g_piv = traj.grid.pivots ** 2
    mg = traj.states @ g_piv
    c0 = float(mg[0])
    bound = c0 / THETA
    hm1 = bool(np.all(mg <= bound * (1.0 + 1e-12)))
    s = traj.states @ ops.omega_pivots
    functional = (traj.states * (ops.A0 * s[:, None] * ops.omega_pivots[None, :])) @ g_piv
    total = float(np.trapezoid(functional, traj.times))
    hm2 = total <= bound * (1.0 + 1e-12)
    _criterion(5, "weighted-moment and collision-functional bounds hold",
               hm1 and hm2, f"max moment={float(np.max(mg)):.4f}, "
                            f"functional={total:.4f}, bound={bound:.4f}")


def test_criterion_06_regime_envelopes(ref120, sub_linear_run):
    traj, _, _ = ref120
    m0 = traj.states.sum(axis=1)
    m1_0 = float(traj.states[0] @ traj.grid.pivots)
    c0 = float(traj.states[0] @ traj.grid.pivots ** 2)
    a_const = envelope_constant(BINARY.beta0, KERNEL.A0, KERNEL.A1)
    growth_ok = all(m0[i] <= gronwall_bound(m0[0], c0, THETA, 1.0, a_const, m1_0, t)
                    for i, t in enumerate(traj.times))

    sub_traj, m0_init, sub_c0, sub_a, t_star = sub_linear_run
    sub_m0 = sub_traj.states.sum(axis=1)
    window = sub_traj.times <= 0.8 * t_star
    blowup_ok = all(sub_m0[i] <= riccati_bound(m0_init, sub_c0, THETA, 1.0, sub_a, t)
                    for i, t in enumerate(sub_traj.times) if window[i])
    _criterion(6, "exponential envelope (super-linear) and comparison envelope "
                  "(sub-linear, up to 0.8 of blow-up) hold",
               growth_ok and blowup_ok,
               f"blow-up time={t_star:.4f}")


def test_criterion_07_tail_inequalities(ref120):
    traj, _, _ = ref120
    checks = tail_checks(traj, WEIGHT, m_cut=2.0, theta=THETA, kernel=KERNEL)
    _criterion(7, "tail monotonicity and tail square-integral bounds at m_cut=2",
               all(c.passed for c in checks),
               "; ".join(f"{c.name}: {c.observed:.3e} <= {c.bound:.3e}" for c in checks))


def test_criterion_08_daughter_validators():
    ys = np.logspace(-2, 2, 20)
    zs = np.logspace(-2, 2, 20)
    families = [DaughterSpec(family="power_law", nu=0.0),
                DaughterSpec(family="power_law", nu=-0.5),
                DaughterSpec(family="uniform_binary"),
                DaughterSpec(family="kll_unit_ends"),
                DaughterSpec(family="kll_shrinking_ends")]
    ok = True
    details = []
    for spec in families:
        lmc = check_lmc(spec, ys, zs, quad_tol=1e-8)
        nop = check_nop(spec, ys, zs)
        pcond = check_p_condition(spec, 1.5, ys, zs)
        piecewise_exact = True
        if spec.family.value.startswith("kll"):
            piecewise_exact = lmc.worst_rel_err <= 1e-12
        ok = ok and lmc.passed and nop.passed and pcond.verifiable and pcond.passed \
            and piecewise_exact
        details.append(f"{spec.family.value}: lmc={lmc.worst_rel_err:.1e}")
    _criterion(8, "mass identity, count bound and Lp structure pass for the "
                  "full catalog on the 20x20 grid", ok, "; ".join(details))


def test_criterion_09_second_moment_decay(ref60, ref120, ref240, sub_linear_run):
    worst = -math.inf
    for traj in (ref60[0], ref120[0], ref240[0], sub_linear_run[0]):
        m2 = traj.states @ traj.grid.pivots ** 2
        worst = max(worst, float(np.max(np.diff(m2))))
    _criterion(9, "second moment non-increasing on every pure-breakage run",
               worst <= 1e-12, f"largest rise={worst:.2e}")


def test_criterion_10_reproducibility(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("""
mode: solve
seed: 5
grid: {x_min: 1.0e-3, n: 10.0, cells: 60}
solver: {t_end: 0.3, rel_tol: 1.0e-9, checkpoints: 31}
""")
    mc_cfg = tmp_path / "mc.yaml"
    mc_cfg.write_text("mode: mc\nseed: 5\nmc: {particles: 500, replicas: 4, t_end: 0.3}\n")
    out = tmp_path / "out"
    assert cli_main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    assert cli_main(["mc", "--config", str(mc_cfg), "--out", str(out)]) == 0
    csvs = sorted(p for p in out.rglob("*.csv"))
    first = {p: p.read_bytes() for p in csvs}
    assert cli_main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    assert cli_main(["mc", "--config", str(mc_cfg), "--out", str(out)]) == 0
    identical = all(p.read_bytes() == blob for p, blob in first.items())
    _criterion(10, "identical config and seed reproduce byte-identical delimited outputs",
               identical and len(csvs) >= 3, f"{len(csvs)} files compared")
