"""Command-line entry point: solve, mc, validate and sweep workflows.

One config file per run, no interactive prompts; identical config and
seed reproduce every output byte for byte.  Exit status is 0 iff every
enabled check passed.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import daughters as _daughters
from . import diagnostics as diag
from . import kernels as _kernels
from . import oracle as _oracle
from . import outputs as out
from . import sectional as sect
from . import weights as _weights
from .config import RunConfig, parse_config
from .errors import ColbreakError, ConfigError, StiffnessError
from .kernels import Regime

__all__ = ["main", "cmd_solve", "cmd_mc", "cmd_validate", "cmd_sweep"]


def _print_check(check: diag.DiagnosticCheck) -> None:
    status = "PASS" if check.passed else "FAIL"
    print(f"{status} {check.name}: observed={check.observed:.6g} bound={check.bound:.6g}")


def _emit_report(out_dir: Path, report: diag.DiagnosticsReport) -> None:
    out.write_json(out_dir / "report.json", report.to_dict())
    for check in report:
        _print_check(check)


def _theta_for_run(cfg: RunConfig) -> float:
    return _weights.resolve_theta(cfg.weight, cfg.daughter, y_max=cfg.grid.n)


def _moment_rows_and_series(traj, weight, theta, a_const):
    """Long-format moment rows plus the plot series used by both emitters."""
    t = traj.times
    m0 = traj.states @ np.ones(traj.grid.cells)
    m1 = traj.states @ traj.grid.pivots
    m2 = traj.states @ traj.grid.pivots ** 2
    g_piv = _weights.g_values(weight, traj.grid.pivots)
    mg = traj.states @ g_piv
    c0 = float(mg[0])
    g1 = _weights.eval_g(weight, 1.0)
    theta_mass = float(m1[0])
    if traj.kernel.regime is Regime.SUPER_LINEAR:
        m0_bound = np.array([diag.gronwall_bound(m0[0], c0, theta, g1, a_const,
                                                 theta_mass, tt) for tt in t])
    else:
        m0_bound = np.array([diag.riccati_bound(m0[0], c0, theta, g1, a_const, tt)
                             for tt in t])
    rows = []
    for i, tt in enumerate(t):
        rows.append((tt, "m0", m0[i], m0_bound[i]))
        rows.append((tt, "m1", m1[i], m1[0]))
        rows.append((tt, "m2", m2[i], m2[0]))
        rows.append((tt, "mg", mg[i], c0 / theta))
    series = {"m0": (t, m0), "m1": (t, m1), "m2": (t, m2), "mg": (t, mg)}
    bounds = {"m0_bound": m0_bound}
    return rows, series, bounds


def cmd_solve(cfg: RunConfig) -> int:
    """Run the sectional solver, the full diagnostics battery, and emit results."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ops = sect.assemble_operators(cfg.kernel, cfg.daughter, cfg.grid)
    traj = sect.solve(cfg.initial, cfg.kernel, cfg.daughter, cfg.grid, cfg.solver, ops=ops)
    theta = _theta_for_run(cfg)
    report = diag.run_standard_checks(traj, ops, cfg.weight, theta, m_cut=cfg.m_cut)

    traj_rows = []
    for i, tt in enumerate(traj.times):
        for c in range(cfg.grid.cells):
            traj_rows.append((tt, c, cfg.grid.pivots[c], traj.states[i, c]))
    out.write_csv(out_dir / "trajectory.csv", ["t", "cell_index", "pivot", "count"], traj_rows)

    a_const = diag.envelope_constant(cfg.daughter.beta0, cfg.kernel.A0, cfg.kernel.A1)
    rows, series, bounds = _moment_rows_and_series(traj, cfg.weight, theta, a_const)
    out.write_csv(out_dir / "moments.csv", ["t", "series", "value", "bound"], rows)
    out.emit_plot_data(out_dir, series)
    out.render_solve_figures(out_dir, traj, {k: v[1] for k, v in series.items()}, bounds)
    _emit_report(out_dir, report)

    ok = report.passed and not traj.flags
    out.write_manifest(out_dir, {
        "command": "solve",
        "seed": cfg.seed,
        "theta": theta,
        "envelope_constant": a_const,
        "config": cfg.describe(),
        "run": {**traj.stats, "flags": traj.flags, "passed": ok},
    })
    for flag in traj.flags:
        print(f"FLAG {flag}")
    return 0 if ok else 1


def _read_pde_m0(out_dir: Path) -> tuple[np.ndarray, np.ndarray] | None:
    path = out_dir / "moments.csv"
    if not path.exists():
        return None
    times, vals = [], []
    for line in path.read_text().splitlines()[1:]:
        cells = line.split(",")
        if len(cells) >= 3 and cells[1] == "m0":
            times.append(float(cells[0]))
            vals.append(float(cells[2]))
    if not times:
        return None
    return np.asarray(times), np.asarray(vals)


def cmd_mc(cfg: RunConfig) -> int:
    """Run the particle-oracle ensemble; compare to a solve output if present."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not cfg.daughter.samplable:
        print(f"ERROR mc requires a samplable daughter family; "
              f"{cfg.daughter.family.value} has no exact fragment-sampling recipe "
              "(use uniform_binary)", file=sys.stderr)
        return 2
    if not cfg.kernel.is_product:
        print("ERROR mc requires a globally factorised kernel (families I-VII)",
              file=sys.stderr)
        return 2
    mc_cfg = replace(cfg.mc, seed=cfg.seed)
    stats = _oracle.ensemble_stats(cfg.initial, cfg.kernel, cfg.daughter, mc_cfg)
    rows = [(stats.times[i], stats.m0_mean[i], stats.m0_stderr[i], stats.m1_mean[i],
             stats.m2_mean[i], stats.m2_stderr[i]) for i in range(len(stats.times))]
    out.write_csv(out_dir / "mc_stats.csv",
                  ["t", "M0_mean", "M0_stderr", "M1_mean", "M2_mean", "M2_stderr"], rows)

    pde = _read_pde_m0(out_dir)
    comparison: dict = {"available": pde is not None}
    ok = True
    if pde is None:
        comparison["note"] = "no solve output (moments.csv) in this directory; comparison skipped"
        print("NOTE mc comparison skipped: no matching solve output found")
    else:
        pde_t, pde_m0 = pde
        checks = []
        for i, tt in enumerate(stats.times):
            j = int(np.argmin(np.abs(pde_t - tt)))
            if abs(pde_t[j] - tt) > 1e-9 * max(1.0, tt):
                checks.append({"t": float(tt), "matched": False})
                continue
            se = stats.m0_stderr[i]
            dev = abs(stats.m0_mean[i] - pde_m0[j])
            passed = bool(not math.isfinite(se) or dev <= 3.0 * se)
            checks.append({"t": float(tt), "matched": True, "pde": float(pde_m0[j]),
                           "mc_mean": float(stats.m0_mean[i]),
                           "stderr": float(se), "passed": passed})
            ok = ok and passed
        comparison["checks"] = checks
        comparison["passed"] = ok
        status = "PASS" if ok else "FAIL"
        print(f"{status} oracle_agreement: solver number density within 3 standard "
              "errors at every matched checkpoint")
    out.write_json(out_dir / "mc_comparison.json", comparison)
    out.emit_plot_data(out_dir, {"mc_m0_mean": (stats.times, stats.m0_mean),
                                 "mc_m2_mean": (stats.times, stats.m2_mean)})
    out.render_mc_figure(out_dir, stats, pde)
    out.write_manifest(out_dir, {
        "command": "mc",
        "seed": cfg.seed,
        "config": cfg.describe(),
        "run": {"events_total": stats.events_total,
                "aborted_replicas": stats.aborted_replicas,
                "passed": ok},
    })
    if stats.aborted_replicas:
        print(f"FLAG {stats.aborted_replicas} replica(s) hit the event cap")
        ok = False
    return 0 if ok else 1


def _kernel_checks(cfg: RunConfig, rng: np.random.Generator) -> list[diag.DiagnosticCheck]:
    kernel = cfg.kernel
    checks = []
    g = _kernels.verify_growth_bound(kernel)
    checks.append(diag.DiagnosticCheck(
        name="kernel_growth_bound", passed=g.holds, observed=g.worst_ratio, bound=1.0,
        tolerance=_kernels.GROWTH_TOL, note=f"worst ratio at x={g.worst_x:.3g}"))

    xs = 10.0 ** rng.uniform(-4, math.log10(kernel.n), size=10_000)
    ys = 10.0 ** rng.uniform(-4, math.log10(kernel.n), size=10_000)
    axy = _kernels.kernel_values(kernel, xs, ys)
    ayx = _kernels.kernel_values(kernel, ys, xs)
    sym_ok = bool(np.all(axy == ayx))
    checks.append(diag.DiagnosticCheck(
        name="kernel_symmetry_bitwise", passed=sym_ok,
        observed=float(np.max(np.abs(axy - ayx))), bound=0.0, tolerance=0.0,
        note="a(x,y) == a(y,x) bitwise on 1e4 random pairs"))

    grid_x = np.sort(10.0 ** rng.uniform(-4, math.log10(kernel.n), size=512))
    w = _kernels.omega_values(kernel, grid_x)
    mono_viol = float(np.max(-np.diff(w), initial=0.0))
    checks.append(diag.DiagnosticCheck(
        name="kernel_factor_monotone", passed=mono_viol <= 0.0, observed=mono_viol,
        bound=0.0, tolerance=0.0, note="size factor non-decreasing on sorted samples"))

    # product identity within one region: a(x,y)a(u,v) == a(x,v)a(u,y)
    lo = 10.0 ** rng.uniform(-4, 0, size=(4, 2000))
    hi = 10.0 ** rng.uniform(0, math.log10(kernel.n), size=(4, 2000))
    worst = 0.0
    for quad in (lo, hi):
        x, y, u, v = quad
        lhs = _kernels.kernel_values(kernel, x, y) * _kernels.kernel_values(kernel, u, v)
        rhs = _kernels.kernel_values(kernel, x, v) * _kernels.kernel_values(kernel, u, y)
        denom = np.maximum(np.abs(lhs), 1e-300)
        worst = max(worst, float(np.max(np.abs(lhs - rhs) / denom)))
    checks.append(diag.DiagnosticCheck(
        name="kernel_product_identity", passed=worst <= 1e-12, observed=worst,
        bound=0.0, tolerance=1e-12, note="cross-factorisation identity within one region"))

    above = kernel.n * (1.0 + rng.random(100))
    below = 10.0 ** rng.uniform(-4, math.log10(kernel.n) - 1e-9, size=100)
    trunc_ok = bool(np.all(_kernels.kernel_values(kernel, above, below) == 0.0)
                    and np.all(_kernels.kernel_values(kernel, below, above) == 0.0))
    checks.append(diag.DiagnosticCheck(
        name="kernel_truncation", passed=trunc_ok, observed=0.0 if trunc_ok else 1.0,
        bound=0.0, tolerance=0.0, note="cut kernel vanishes once either size reaches n"))
    return checks


def _daughter_checks(cfg: RunConfig) -> list[diag.DiagnosticCheck]:
    daughter = cfg.daughter
    ys = np.logspace(-2, math.log10(daughter.y_max), 20)
    zs = np.logspace(-2, math.log10(daughter.y_max), 20)
    checks = []
    lmc = _daughters.check_lmc(daughter, ys, zs, quad_tol=1e-8)
    checks.append(diag.DiagnosticCheck(
        name="daughter_mass_identity", passed=lmc.passed, observed=lmc.worst_rel_err,
        bound=0.0, tolerance=lmc.quad_tol,
        note=f"worst relative defect at y={lmc.worst_y:.3g}"))
    nop = _daughters.check_nop(daughter, ys, zs)
    checks.append(diag.DiagnosticCheck(
        name="daughter_count_bound", passed=nop.passed, observed=nop.worst_count,
        bound=nop.bound, tolerance=1e-12, note="fragment count against beta0"))
    pc = _daughters.check_p_condition(daughter, daughter.p, ys, zs)
    if not pc.verifiable:
        checks.append(diag.DiagnosticCheck(
            name="daughter_lp_structure", passed=True, observed=float("nan"),
            bound=float("nan"), tolerance=0.0,
            note=f"unverifiable: nu*p = {daughter.nu * daughter.p:.3g} <= -1, "
                 "integral diverges"))
        print(f"NOTE daughter_lp_structure unverifiable for nu={daughter.nu}, p={daughter.p}")
    else:
        checks.append(diag.DiagnosticCheck(
            name="daughter_lp_structure", passed=pc.passed, observed=pc.Bp_observed,
            bound=pc.bound, tolerance=1e-9,
            note=f"sup of 2 y^(p-1) int b^p at p={pc.p}, worst y={pc.worst_y:.3g}"))
    return checks


def _weight_checks(cfg: RunConfig) -> list[diag.DiagnosticCheck]:
    weight, daughter = cfg.weight, cfg.daughter
    checks = []
    samples = np.logspace(-4, math.log10(cfg.grid.n), 256)
    mono = _weights.check_ratio_monotone(weight, samples)
    checks.append(diag.DiagnosticCheck(
        name="weight_ratio_monotone", passed=mono, observed=0.0 if mono else 1.0,
        bound=0.0, tolerance=1e-12, note="g(x)/x non-decreasing on log samples"))

    est = _weights.infimum_theta(weight, daughter, y_max=cfg.grid.n)
    checks.append(diag.DiagnosticCheck(
        name="weight_dissipativity", passed=est.in_class, observed=est.theta_hat,
        bound=0.0, tolerance=0.0,
        note=f"numerical infimum on (0, {cfg.grid.n:g}], argmin y={est.argmin_y:.3g}"))

    nu = daughter.powerlaw_nu_equivalent
    if est.in_class and weight.family is _weights.WeightFamily.POWER and nu is not None \
            and weight.alpha > 1.0:
        exact = _weights.closed_form_theta(weight.alpha, nu)
        dev = abs(est.theta_hat - exact)
        checks.append(diag.DiagnosticCheck(
            name="weight_theta_closed_form", passed=dev <= 1e-6, observed=dev,
            bound=0.0, tolerance=1e-6, note=f"numerical vs exact {exact:.8g}"))
        checks.append(diag.DiagnosticCheck(
            name="weight_theta_scale_free", passed=est.spread <= 1e-10,
            observed=est.spread, bound=0.0, tolerance=1e-10,
            note="dissipation fraction independent of breakup size"))
    return checks


def cmd_validate(cfg: RunConfig) -> int:
    """Validate the configured kernel/daughter/weight triple."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    report = diag.DiagnosticsReport()
    for check in _kernel_checks(cfg, rng):
        report.add(check)
    for check in _daughter_checks(cfg):
        report.add(check)
    for check in _weight_checks(cfg):
        report.add(check)
    _emit_report(out_dir, report)
    theta_line = next((c for c in report if c.name == "weight_dissipativity"), None)
    if theta_line is not None and theta_line.passed:
        print(f"INFO dissipativity constant theta = {theta_line.observed:.8g}")
    out.write_manifest(out_dir, {
        "command": "validate",
        "seed": cfg.seed,
        "config": cfg.describe(),
        "run": {"passed": report.passed},
    })
    return 0 if report.passed else 1


def _growth_exponent(times: np.ndarray, m0: np.ndarray) -> float:
    """Log-log slope of the number increase over the late half-window."""
    t_end = times[-1]
    sel = (times >= 0.2 * t_end) & (m0 - m0[0] > 0.0)
    if sel.sum() < 3:
        return float("nan")
    lt = np.log(times[sel])
    lg = np.log(m0[sel] - m0[0])
    slope, _ = np.polyfit(lt, lg, 1)
    return float(slope)


def cmd_sweep(cfg: RunConfig) -> int:
    """Scan small-size exponents, recording regime, growth and envelopes."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    theta = _theta_for_run(cfg)
    g1 = _weights.eval_g(cfg.weight, 1.0)
    rows = []
    curves = {}
    all_ok = True
    for ell in cfg.ell_values:
        kernel = cfg.kernel.with_ell(ell)
        regime = kernel.regime
        a_const = diag.envelope_constant(cfg.daughter.beta0, kernel.A0, kernel.A1)
        state0 = sect.project_initial(cfg.initial, cfg.grid)
        m0_init = state0.number
        c0 = diag.weighted_moment(state0, cfg.weight)
        t_end = cfg.solver.t_end
        if regime is Regime.SUB_LINEAR:
            t_star = diag.riccati_blowup_time(m0_init, c0, theta, g1, a_const)
            t_end = min(t_end, 0.8 * t_star)
        run_cfg = sect.SolverConfig(**{**cfg.solver.__dict__,
                                       "t_end": t_end, "checkpoint_times": None,
                                       "dt_max": None})
        try:
            traj = sect.solve(cfg.initial, kernel, cfg.daughter, cfg.grid, run_cfg)
        except StiffnessError as exc:
            rows.append((ell, regime.value, float("nan"), "halted_stiff", False,
                         False, False, 0, t_end))
            print(f"NOTE ell={ell:g}: integration halted (stiffness guard at t={exc.t:.3g})")
            continue
        m0 = traj.states @ np.ones(cfg.grid.cells)
        m1 = traj.states @ cfg.grid.pivots
        mass_ok = bool(np.max(np.abs(m1 / m1[0] - 1.0)) <= 1e-10)
        growth = _growth_exponent(traj.times, m0)
        if regime is Regime.SUPER_LINEAR:
            env_name = "exponential"
            bounds = np.array([diag.gronwall_bound(m0[0], c0, theta, g1, a_const,
                                                   float(m1[0]), tt) for tt in traj.times])
        else:
            env_name = "blowup_comparison"
            bounds = np.array([diag.riccati_bound(m0[0], c0, theta, g1, a_const, tt)
                               for tt in traj.times])
        env_ok = bool(np.all(m0 <= bounds))
        rows.append((ell, regime.value, growth, env_name, env_ok, mass_ok, True,
                     traj.stats["steps_accepted"], t_end))
        curves[f"ell={ell:g}"] = (traj.times, m0)
        status = "PASS" if (env_ok and mass_ok) else "FAIL"
        print(f"{status} ell={ell:g}: regime={regime.value} growth_exponent={growth:.3g} "
              f"envelope={env_name}")
        all_ok = all_ok and env_ok and mass_ok
    out.write_csv(out_dir / "sweep.csv",
                  ["ell", "regime", "growth_exponent", "envelope", "envelope_pass",
                   "mass_conserved", "completed", "steps", "t_end"], rows)
    if curves:
        out.render_sweep_figure(out_dir, curves)
        out.emit_plot_data(out_dir, {k.replace("=", "_"): v for k, v in curves.items()})
    out.write_manifest(out_dir, {
        "command": "sweep",
        "seed": cfg.seed,
        "config": cfg.describe(),
        "run": {"passed": all_ok},
    })
    return 0 if all_ok else 1


_COMMANDS = {"solve": cmd_solve, "mc": cmd_mc, "validate": cmd_validate, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="colbreak",
        description="Sectional solver, stochastic oracle and validation suite "
                    "for collision-induced breakage kinetics")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"ERROR cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return 2
    if cfg.mode != args.command:
        print(f"ERROR config mode is {cfg.mode!r} but the {args.command!r} command "
              "was invoked", file=sys.stderr)
        return 2
    if args.out is not None:
        cfg.output_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        return _COMMANDS[args.command](cfg)
    except ColbreakError as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
