"""Moment diagnostics: every quantitative check applied to trajectories.

The checks fall into three groups:

* conservation and structure: first-moment (mass) constancy, count
  non-negativity, support confinement, fragment-count consistency of the
  assembled operators;
* closed-form laws: for the bilinear kernel a = A0*x*y with A0 = 1 and an
  exact-count daughter, the particle number obeys
  dM0/dt = (beta0 - 1) * Theta**2 with Theta the (conserved) first
  moment, giving an exact linear-in-time oracle;
* a-priori envelopes: weighted-moment and collision-functional bounds
  from the dissipativity constant, tail monotonicity and the square-
  integral tail bound, and the regime-dependent number envelopes
  (quadratic-comparison blow-up bound in the sub-linear regime,
  exponential-in-time bound in the super-linear regime).

Every check is a pure function over an immutable trajectory; the checks
are independent and trivially parallel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import daughters as _daughters
from . import kernels as _kernels
from . import weights as _weights
from .daughters import DaughterSpec
from .errors import UnsupportedOperation
from .kernels import KernelFamily, KernelSpec, Regime
from .sectional import OperatorSet, StateVector, Trajectory
from .weights import WeightSpec

__all__ = [
    "MomentSeries",
    "DiagnosticCheck",
    "DiagnosticsReport",
    "moment",
    "weighted_moment",
    "moment_series",
    "supports_m0_law",
    "m0_closed_form_oracle",
    "envelope_constant",
    "riccati_bound",
    "riccati_blowup_time",
    "gronwall_bound",
    "collision_loss_rates",
    "tail_checks",
    "PsiPower",
    "PsiIndicator",
    "PsiCallable",
    "weak_form_residual",
    "uniform_integrability_modulus",
    "ui_shape_fit",
    "lipschitz_quotient",
    "run_standard_checks",
]


# ---------------------------------------------------------------------------
# moments

def moment(state: StateVector, m: float) -> float:
    """Discrete m-th moment: sum of pivot**m * count."""
    return float((state.grid.pivots ** m) @ state.counts)


def weighted_moment(state: StateVector, weight: WeightSpec) -> float:
    """Discrete g-weighted moment: sum of g(pivot) * count."""
    return float(_weights.g_values(weight, state.grid.pivots) @ state.counts)


@dataclass(frozen=True)
class MomentSeries:
    times: np.ndarray
    values: np.ndarray
    descriptor: str

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("moment series contains non-finite values")


def moment_series(traj: Trajectory, m: float) -> MomentSeries:
    vals = traj.states @ (traj.grid.pivots ** m)
    return MomentSeries(times=traj.times, values=vals, descriptor=f"m{m:g}")


def weighted_moment_series(traj: Trajectory, weight: WeightSpec) -> MomentSeries:
    vals = traj.states @ _weights.g_values(weight, traj.grid.pivots)
    return MomentSeries(times=traj.times, values=vals,
                        descriptor=f"g_{weight.family.value}_{weight.alpha:g}")


# ---------------------------------------------------------------------------
# closed-form number law

def supports_m0_law(kernel: KernelSpec, daughter: DaughterSpec) -> bool:
    """The linear number law needs a = x*y and an exact fragment count."""
    kernel_ok = (kernel.family is KernelFamily.POWER_LAW
                 and kernel.ell == 1.0 and kernel.A0 == 1.0)
    daughter_ok = daughter.powerlaw_nu_equivalent is not None
    return kernel_ok and daughter_ok


def m0_closed_form_oracle(theta_mass: float, beta0: float, m0_init: float, t: float,
                          kernel: KernelSpec | None = None,
                          daughter: DaughterSpec | None = None) -> float:
    """Exact particle number at time t for the bilinear-kernel scenario.

    Taking the constant test function in the time-integrated identity and
    using the exact fragment count turns the number balance into
    dM0/dt = (beta0 - 1) * Theta**2, Theta being the conserved mass.
    """
    if kernel is not None and daughter is not None and not supports_m0_law(kernel, daughter):
        raise UnsupportedOperation(
            "closed-form number law requires the bilinear kernel (family I, "
            "ell=1, A0=1) and an exact-count daughter")
    return m0_init + (beta0 - 1.0) * theta_mass ** 2 * t


# ---------------------------------------------------------------------------
# number envelopes

def envelope_constant(beta0: float, A0: float, A1: float) -> float:
    """Explicit constant for the number envelopes.

    Obtained by tracking the kernel amplitude and small-size growth
    constant through the region-split estimates of the collision
    integral (small/small via Cauchy-Schwarz, mixed via the arithmetic-
    geometric mean inequality, large/large via the tail square bound) and
    taking the larger of the quadratic-term and constant-term
    combinations so a single constant serves both slots.
    """
    return (beta0 - 1.0) * max(A0 * A1 * (A1 + 1.0), 1.0 + A1)


def _envelope_y0(m0_init: float, c0: float, theta: float, g1: float, a_const: float) -> float:
    return m0_init + a_const * c0 / (theta * g1)


def riccati_blowup_time(m0_init: float, c0: float, theta: float, g1: float,
                        a_const: float) -> float:
    """Blow-up time of the quadratic comparison solution."""
    return 1.0 / (a_const * _envelope_y0(m0_init, c0, theta, g1, a_const))


def riccati_bound(m0_init: float, c0: float, theta: float, g1: float,
                  a_const: float, t: float) -> float:
    """Quadratic-comparison envelope y(t) = y0 / (1 - A*y0*t); +inf at blow-up."""
    y0 = _envelope_y0(m0_init, c0, theta, g1, a_const)
    denom = 1.0 - a_const * y0 * t
    if denom <= 0.0:
        return math.inf
    return y0 / denom


def gronwall_bound(m0_init: float, c0: float, theta: float, g1: float,
                   a_const: float, theta_mass: float, horizon: float) -> float:
    """Exponential-in-time envelope for the super-linear regime."""
    return _envelope_y0(m0_init, c0, theta, g1, a_const) * math.exp(
        a_const * theta_mass * horizon)


# ---------------------------------------------------------------------------
# trajectory functionals

def collision_loss_rates(traj: Trajectory, ops: OperatorSet) -> np.ndarray:
    """Per-checkpoint loss rates L_j(t) = sum_k a(x_j, x_k) u_k, shape (T, C)."""
    if ops.use_product:
        s = traj.states @ ops.omega_pivots
        return ops.A0 * s[:, None] * ops.omega_pivots[None, :]
    return traj.states @ ops.rate_matrix.T


@dataclass
class DiagnosticCheck:
    name: str
    passed: bool
    observed: float
    bound: float
    tolerance: float
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed),
                "observed": self.observed, "bound": self.bound,
                "tolerance": self.tolerance, "note": self.note}


@dataclass
class DiagnosticsReport:
    checks: list[DiagnosticCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: DiagnosticCheck) -> None:
        self.checks.append(check)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def __iter__(self):
        return iter(self.checks)


def tail_checks(traj: Trajectory, weight: WeightSpec, m_cut: float, theta: float,
                kernel: KernelSpec) -> list[DiagnosticCheck]:
    """Large-size tail diagnostics above the cut m_cut in (1, n).

    * the g-weighted tail moment never exceeds its initial value
      (breakage only moves mass down);
    * the running time integral of the squared tail collision activity
      stays below (initial tail moment) / (theta * g(m) * A0).
    """
    if not 1.0 < m_cut < traj.grid.n:
        raise ValueError(f"m_cut must lie in (1, n), got {m_cut}")
    piv = traj.grid.pivots
    tail = piv > m_cut
    g_tail = np.where(tail, _weights.g_values(weight, piv), 0.0)
    series = traj.states @ g_tail
    init = float(series[0])
    excess = float(np.max(series - init))
    tol1 = 1e-10 * max(init, 1.0)
    c1 = DiagnosticCheck(
        name="tail_moment_monotone", passed=excess <= tol1, observed=excess,
        bound=0.0, tolerance=tol1,
        note=f"max increase of the g-weighted tail above m={m_cut:g}")

    w_tail = np.where(tail, _kernels.omega_values(kernel, piv), 0.0)
    activity = traj.states @ w_tail
    running = integrate.cumulative_trapezoid(activity ** 2, traj.times, initial=0.0)
    bound = init / (theta * _weights.eval_g(weight, m_cut) * kernel.A0)
    observed = float(running[-1])
    c2 = DiagnosticCheck(
        name="tail_square_integral", passed=observed <= bound * (1.0 + 1e-12),
        observed=observed, bound=bound, tolerance=1e-12,
        note=f"time integral of squared tail activity above m={m_cut:g}")
    return [c1, c2]


# ---------------------------------------------------------------------------
# weak-form residuals

@dataclass(frozen=True)
class PsiPower:
    """Test function x**m (m=0: counts, m=1: mass)."""

    m: float

    def at(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) ** self.m

    def fragment_integral(self, daughter: DaughterSpec, y: float) -> float:
        return float(_daughters.power_integral(daughter, self.m, 0.0, y, y))

    @property
    def label(self) -> str:
        return f"x^{self.m:g}"


@dataclass(frozen=True)
class PsiIndicator:
    """Test function 1 on (lo, hi)."""

    lo: float
    hi: float

    def at(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where((x > self.lo) & (x < self.hi), 1.0, 0.0)

    def fragment_integral(self, daughter: DaughterSpec, y: float) -> float:
        return float(_daughters.number_integral(daughter, self.lo, self.hi, y))

    @property
    def label(self) -> str:
        return f"1_({self.lo:g},{self.hi:g})"


@dataclass(frozen=True)
class PsiCallable:
    """Arbitrary bounded test function; fragment averages by quadrature."""

    fn: object
    name: str = "psi"

    def at(self, x: np.ndarray) -> np.ndarray:
        return np.asarray([self.fn(float(v)) for v in np.atleast_1d(x)], dtype=float)

    def fragment_integral(self, daughter: DaughterSpec, y: float) -> float:
        total = 0.0
        for lo, hi, val in _daughters.support_pieces(daughter, y):
            if val is None:
                piece, _ = integrate.quad(
                    lambda x: self.fn(x) * _daughters.eval_b(daughter, x, y, 1.0),
                    lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200)
            else:
                piece, _ = integrate.quad(self.fn, lo, hi,
                                          epsabs=1e-12, epsrel=1e-10, limit=200)
                piece *= val
            total += piece
        return total

    @property
    def label(self) -> str:
        return self.name


def weak_form_residual(traj: Trajectory, psi, ops: OperatorSet,
                       daughter: DaughterSpec | None = None) -> float:
    """Relative defect of the time-integrated test-function identity.

    The fragment average of the test function is computed from the
    analytic daughter distribution (not from the assembled allocation),
    so the residual measures the discretisation fidelity on top of the
    trapezoidal time quadrature over checkpoints.  Expected magnitude:
    O(checkpoint spacing + grid error).
    """
    if daughter is None:
        daughter = traj.daughter
    piv = traj.grid.pivots
    psi_piv = psi.at(piv)
    frag_avg = np.asarray([psi.fragment_integral(daughter, float(y)) for y in piv])
    dissip = psi_piv - frag_avg  # per-breakup change of the psi-moment, sign-flipped
    L = collision_loss_rates(traj, ops)
    integrand = (traj.states * L) @ dissip
    running = integrate.cumulative_trapezoid(integrand, traj.times, initial=0.0)
    series = traj.states @ psi_piv
    residual = series + running - series[0]
    scale = max(float(np.max(np.abs(series))), float(np.max(np.abs(running))), 1e-300)
    return float(np.max(np.abs(residual))) / scale


# ---------------------------------------------------------------------------
# uniform integrability and time regularity

def uniform_integrability_modulus(state: StateVector, a_cut: float, delta: float) -> float:
    """Largest count carried by sets of measure <= delta below a_cut.

    For a piecewise-constant density the exact maximiser fills the
    measure budget with cells in decreasing density order, taking the
    final cell fractionally.
    """
    if delta < 0.0:
        raise ValueError("delta must be >= 0")
    if delta == 0.0:
        return 0.0
    sel = state.grid.pivots < a_cut
    counts = state.counts[sel]
    widths = state.grid.widths[sel]
    if counts.size == 0:
        return 0.0
    density = np.where(widths > 0.0, counts / widths, 0.0)
    order = np.argsort(density)[::-1]
    budget = delta
    total = 0.0
    for i in order:
        if budget <= 0.0:
            break
        take = min(widths[i], budget)
        total += density[i] * take
        budget -= take
    return float(total)


def ui_shape_fit(traj: Trajectory, a_cut: float, deltas, p: float) -> tuple[float, np.ndarray]:
    """Fit of the uniform-integrability growth to delta**((p-1)/p).

    Returns the fitted coefficient (largest over checkpoints of the
    renormalised modulus increase) and the per-delta coefficients.
    """
    deltas = np.asarray(deltas, dtype=float)
    expo = (p - 1.0) / p
    coeffs = np.empty_like(deltas)
    w0 = np.array([uniform_integrability_modulus(traj.state(0), a_cut, d) for d in deltas])
    for k, d in enumerate(deltas):
        worst = 0.0
        for i in range(1, len(traj.times)):
            w = uniform_integrability_modulus(traj.state(i), a_cut, float(d))
            worst = max(worst, w - w0[k])
        coeffs[k] = worst / d ** expo
    return float(np.max(coeffs)), coeffs


def lipschitz_quotient(traj: Trajectory, lambda_cut: float) -> float:
    """Largest L1 difference quotient below lambda_cut between checkpoints."""
    sel = traj.grid.pivots < lambda_cut
    worst = 0.0
    for i in range(1, len(traj.times)):
        dt = float(traj.times[i] - traj.times[i - 1])
        diff = float(np.abs(traj.states[i, sel] - traj.states[i - 1, sel]).sum())
        worst = max(worst, diff / dt)
    return worst


# ---------------------------------------------------------------------------
# the full battery

def run_standard_checks(traj: Trajectory, ops: OperatorSet, weight: WeightSpec,
                        theta: float, m_cut: float = 2.0,
                        ui_deltas=(1e-3, 1e-2, 1e-1)) -> DiagnosticsReport:
    """Run every applicable check on a finished trajectory."""
    report = DiagnosticsReport()
    piv = traj.grid.pivots
    kernel = traj.kernel
    daughter = traj.daughter

    m1 = moment_series(traj, 1.0)
    m1_drift = float(np.max(np.abs(m1.values / m1.values[0] - 1.0)))
    report.add(DiagnosticCheck(
        name="mass_conservation", passed=m1_drift <= 1e-10, observed=m1_drift,
        bound=0.0, tolerance=1e-10, note="max relative drift of the first moment"))

    min_count = float(traj.states.min())
    clip_tol = traj.config.clip_tol or 0.0
    report.add(DiagnosticCheck(
        name="count_non_negativity", passed=min_count >= -clip_tol,
        observed=min_count, bound=0.0, tolerance=clip_tol,
        note="smallest cell count over all checkpoints"))

    occupied = traj.states > 1e-30
    tops = np.array([int(np.max(np.nonzero(row)[0])) if row.any() else -1 for row in occupied])
    confined = bool(np.all(np.diff(tops) <= 0))
    report.add(DiagnosticCheck(
        name="support_confinement", passed=confined, observed=float(np.max(np.diff(tops), initial=0)),
        bound=0.0, tolerance=0.0, note="highest occupied cell never climbs"))

    colsum = ops.column_counts()
    worst_col = float(colsum.max())
    report.add(DiagnosticCheck(
        name="fragment_count_consistency", passed=worst_col <= ops.beta0 * (1.0 + 1e-6),
        observed=worst_col, bound=ops.beta0, tolerance=1e-6,
        note="largest column count of the fragment allocation"))

    clipped = traj.stats["clipped_mass"]
    clip_bound = 1e-9 * traj.stats["initial_mass"]
    report.add(DiagnosticCheck(
        name="clipped_mass_budget", passed=clipped <= clip_bound, observed=clipped,
        bound=clip_bound, tolerance=0.0, note="total mass removed by negativity clipping"))

    m0 = moment_series(traj, 0.0)
    theta_mass = float(m1.values[0])
    t_end = float(traj.times[-1])
    if supports_m0_law(kernel, daughter) and t_end > 0.0:
        window = traj.times >= 0.1 * t_end
        law = m0.values[0] + (daughter.beta0 - 1.0) * theta_mass ** 2 * traj.times[window]
        denom = (daughter.beta0 - 1.0) * theta_mass ** 2 * traj.times[window]
        rel = float(np.max(np.abs(m0.values[window] - law) / denom))
        report.add(DiagnosticCheck(
            name="number_growth_law", passed=rel <= 0.01, observed=rel, bound=0.01,
            tolerance=0.0, note="closed-form linear number growth, bilinear kernel"))

    c0 = weighted_moment(traj.state(0), weight)
    g_piv = _weights.g_values(weight, piv)
    mg = traj.states @ g_piv
    hm_bound = c0 / theta
    worst_mg = float(np.max(mg))
    report.add(DiagnosticCheck(
        name="weighted_moment_bound", passed=worst_mg <= hm_bound * (1.0 + 1e-12),
        observed=worst_mg, bound=hm_bound, tolerance=1e-12,
        note="g-weighted moment against initial/theta"))

    L = collision_loss_rates(traj, ops)
    functional = (traj.states * L) @ g_piv
    total = float(integrate.trapezoid(functional, traj.times))
    report.add(DiagnosticCheck(
        name="collision_functional_bound", passed=total <= hm_bound * (1.0 + 1e-12),
        observed=total, bound=hm_bound, tolerance=1e-12,
        note="time-integrated g-weighted collision functional"))

    a_const = envelope_constant(daughter.beta0, kernel.A0, kernel.A1)
    g1 = _weights.eval_g(weight, 1.0)
    m0_init = float(m0.values[0])
    if kernel.regime is Regime.SUPER_LINEAR:
        bounds = np.array([gronwall_bound(m0_init, c0, theta, g1, a_const, theta_mass, t)
                           for t in traj.times])
        margin = float(np.max(m0.values / bounds))
        report.add(DiagnosticCheck(
            name="number_envelope_exponential", passed=margin <= 1.0, observed=margin,
            bound=1.0, tolerance=0.0,
            note="number stays under the exponential envelope (super-linear regime)"))
    else:
        t_star = riccati_blowup_time(m0_init, c0, theta, g1, a_const)
        window = traj.times <= 0.8 * t_star
        if np.any(window):
            bounds = np.array([riccati_bound(m0_init, c0, theta, g1, a_const, t)
                               for t in traj.times[window]])
            margin = float(np.max(m0.values[window] / bounds))
            report.add(DiagnosticCheck(
                name="number_envelope_blowup", passed=margin <= 1.0, observed=margin,
                bound=1.0, tolerance=0.0,
                note=f"number stays under the comparison envelope up to 0.8*t*={0.8*t_star:.4g}"))

    for chk in tail_checks(traj, weight, m_cut, theta, kernel):
        report.add(chk)

    m2 = moment_series(traj, 2.0)
    rises = float(np.max(np.diff(m2.values), initial=-math.inf))
    report.add(DiagnosticCheck(
        name="second_moment_monotone", passed=rises <= 1e-12, observed=rises,
        bound=0.0, tolerance=1e-12, note="second moment never increases (pure breakage)"))

    res_mass = weak_form_residual(traj, PsiPower(1.0), ops)
    report.add(DiagnosticCheck(
        name="weak_form_mass", passed=res_mass <= 1e-10, observed=res_mass,
        bound=0.0, tolerance=1e-10, note="test function x: residual equals mass error"))

    res_count = weak_form_residual(traj, PsiPower(0.0), ops)
    report.add(DiagnosticCheck(
        name="weak_form_number", passed=res_count <= 0.01, observed=res_count,
        bound=0.0, tolerance=0.01, note="constant test function"))

    if t_end > 0.0:
        c_fit, _ = ui_shape_fit(traj, a_cut=min(2.0, traj.grid.n), deltas=ui_deltas,
                                p=daughter.p)
        report.add(DiagnosticCheck(
            name="uniform_integrability_shape", passed=math.isfinite(c_fit),
            observed=c_fit, bound=math.inf, tolerance=0.0,
            note="fitted coefficient of the delta^((p-1)/p) modulus growth"))

        lip = lipschitz_quotient(traj, lambda_cut=min(2.0, traj.grid.n))
        report.add(DiagnosticCheck(
            name="time_lipschitz_bounded", passed=math.isfinite(lip), observed=lip,
            bound=math.inf, tolerance=0.0,
            note="largest small-size L1 difference quotient between checkpoints"))

    return report
