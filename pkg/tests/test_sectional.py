import math

import numpy as np
import pytest

from colbreak.daughters import DaughterSpec, fragment_count
from colbreak.densities import exponential_density, indicator_density
from colbreak.errors import StiffnessError
from colbreak.kernels import KernelSpec
from colbreak.sectional import (OperatorSet, SolverConfig, StateVector,
                                assemble_operators, build_grid, dropped_initial_mass,
                                project_initial, rhs, solve, step)

KERNEL = KernelSpec(family="I", A0=1.0, ell=1.0, n=10.0)
BINARY = DaughterSpec(family="uniform_binary")


class TestGrid:
    def test_geometric_ratio(self):
        grid = build_grid(1e-3, 10.0, 60)
        assert grid.ratio == pytest.approx(1e4 ** (1.0 / 60.0), rel=1e-14)
        assert grid.edges[0] == 1e-3
        assert grid.edges[-1] == 10.0
        assert np.all(np.diff(grid.edges) > 0)
        assert np.all((grid.pivots > grid.edges[:-1]) & (grid.pivots < grid.edges[1:]))

    def test_single_cell(self):
        grid = build_grid(1.0, 2.0, 1)
        assert grid.cells == 1
        assert grid.pivots[0] == pytest.approx(1.5)

    def test_rejects_inverted_range(self):
        with pytest.raises(ValueError):
            build_grid(2.0, 1.0, 10)
        with pytest.raises(ValueError):
            build_grid(1e-3, 10.0, 0)


class TestProjection:
    def test_exponential_total_number(self):
        grid = build_grid(1e-3, 10.0, 60)
        state = project_initial(exponential_density(), grid)
        expected = math.exp(-1e-3) - math.exp(-10.0)
        assert state.number == pytest.approx(expected, abs=1e-9)

    def test_density_outside_grid_gives_zero_state(self):
        grid = build_grid(1e-3, 10.0, 30)
        state = project_initial(indicator_density(10.2, 10.4), grid)
        assert np.all(state.counts == 0.0)

    def test_indicator_number_and_mass(self):
        grid = build_grid(1e-3, 10.0, 60)
        state = project_initial(indicator_density(1.0, 2.0), grid)
        assert state.number == pytest.approx(1.0, abs=1e-10)
        cell_width = float(np.max(np.diff(grid.edges)))
        assert abs(state.mass - 1.5) <= cell_width

    def test_dropped_mass_reported(self):
        grid = build_grid(1e-3, 10.0, 60)
        dropped = dropped_initial_mass(exponential_density(), grid)
        exact = 1.0 - (1.0 + 1e-3) * math.exp(-1e-3)
        assert dropped == pytest.approx(exact, rel=1e-12)


class TestOperators:
    def test_truncation_mismatch_rejected(self):
        grid = build_grid(1e-3, 5.0, 30)
        with pytest.raises(ValueError):
            assemble_operators(KERNEL, BINARY, grid)

    @pytest.mark.parametrize("daughter", [
        BINARY,
        DaughterSpec(family="power_law", nu=-0.5),
        DaughterSpec(family="kll_unit_ends"),
        DaughterSpec(family="kll_shrinking_ends"),
    ], ids=lambda d: d.family.value)
    def test_column_mass_identity_exact(self, daughter):
        grid = build_grid(1e-3, 10.0, 60)
        ops = assemble_operators(KERNEL, daughter, grid)
        colmass = grid.pivots @ ops.frag_alloc
        assert np.max(np.abs(colmass / grid.pivots - 1.0)) <= 1e-13

    @pytest.mark.parametrize("daughter", [
        BINARY,
        DaughterSpec(family="power_law", nu=-0.5),
        DaughterSpec(family="kll_unit_ends"),
    ], ids=lambda d: d.family.value)
    def test_column_counts(self, daughter):
        grid = build_grid(1e-3, 10.0, 60)
        ops = assemble_operators(KERNEL, daughter, grid)
        colsum = ops.frag_alloc.sum(axis=0)
        expected = np.array([fragment_count(daughter, y) for y in grid.pivots])
        # exact wherever the mean fragment is representable above the bottom pivot
        feasible = grid.pivots >= 1.1 * expected * grid.pivots[0]
        assert np.all(np.abs(colsum[feasible] - expected[feasible]) <= 1e-10)
        # never exceeds the analytic count, never negative
        assert np.all(colsum <= expected * (1.0 + 1e-12))
        assert np.all(ops.frag_alloc >= 0.0)

    def test_fragments_never_exceed_breaker_cell(self):
        # row i > column j means a fragment landing above its parent
        grid = build_grid(1e-3, 10.0, 40)
        ops = assemble_operators(KERNEL, BINARY, grid)
        assert np.all(ops.frag_alloc[np.tril_indices(40, k=-1)] == 0.0)

    def test_single_cell_grid(self):
        grid = build_grid(1.0, 2.0, 1)
        kernel = KernelSpec(family="I", A0=1.0, ell=1.0, n=2.0)
        ops = assemble_operators(kernel, BINARY, grid)
        # breakup below resolution returns the particle itself: mass exact
        assert ops.frag_alloc[0, 0] == pytest.approx(1.0, rel=1e-14)


class TestRhs:
    def test_zero_state(self):
        grid = build_grid(1e-3, 10.0, 30)
        ops = assemble_operators(KERNEL, BINARY, grid)
        state = StateVector(np.zeros(30), 0.0, grid)
        assert np.all(rhs(state, ops) == 0.0)

    def test_monodisperse_top_cell_balances(self):
        grid = build_grid(1e-3, 10.0, 60)
        ops = assemble_operators(KERNEL, BINARY, grid)
        counts = np.zeros(60)
        counts[-1] = 3.0
        state = StateVector(counts, 0.0, grid)
        du = rhs(state, ops)
        top = grid.pivots[-1]
        # mass rate vanishes; number rate is u^2 * A0 * w(top)^2
        assert abs(grid.pivots @ du) <= 1e-12 * top * 3.0
        expected_number_rate = 3.0 ** 2 * KERNEL.A0 * top ** 2
        assert du.sum() == pytest.approx(expected_number_rate, rel=1e-12)

    def test_partner_dependent_allocation_path(self):
        # a broadcast 3-index allocation must reproduce the 2-index result
        grid = build_grid(1e-3, 10.0, 20)
        ops = assemble_operators(KERNEL, BINARY, grid)
        n3 = np.repeat(ops.frag_alloc[:, :, None], 20, axis=2)
        ops3 = OperatorSet(grid=grid, frag_alloc=n3, rate_matrix=ops.rate_matrix,
                           omega_pivots=ops.omega_pivots, A0=ops.A0,
                           use_product=False, beta0=ops.beta0, z_independent=False)
        state = project_initial(exponential_density(), grid)
        assert np.allclose(rhs(state, ops3), rhs(state, ops), rtol=1e-12, atol=1e-300)


class TestStep:
    def test_zero_state_grows_step(self):
        grid = build_grid(1e-3, 10.0, 20)
        ops = assemble_operators(KERNEL, BINARY, grid)
        state = StateVector(np.zeros(20), 0.0, grid)
        cfg = SolverConfig(t_end=1.0, dt_init=1e-4, dt_max=0.5, clip_tol=1e-16)
        res = step(state, ops, cfg, dt=1e-4)
        assert np.all(res.state.counts == 0.0)
        assert res.dt_next > 1e-4

    def test_mass_drift_per_step(self):
        grid = build_grid(1e-3, 10.0, 60)
        ops = assemble_operators(KERNEL, BINARY, grid)
        state = project_initial(exponential_density(), grid)
        cfg = SolverConfig(t_end=1.0, dt_init=1e-3, clip_tol=1e-18)
        res = step(state, ops, cfg, dt=1e-3)
        before = state.mass
        after = res.state.mass
        assert abs(after - before) <= 1e-13 * before

    def test_runaway_rates_raise_stiffness_error(self):
        grid = build_grid(1e-3, 10.0, 40)
        kernel = KernelSpec(family="I", A0=1e14, ell=0.25, n=10.0)
        ops = assemble_operators(kernel, DaughterSpec(family="uniform_binary"), grid)
        counts = np.zeros(40)
        counts[:10] = 1e3  # dense small-size load
        state = StateVector(counts, 0.0, grid)
        cfg = SolverConfig(t_end=1.0, dt_init=1e-4, dt_min=1e-7, clip_tol=1e-10)
        with pytest.raises(StiffnessError) as info:
            step(state, ops, cfg, dt=1e-4)
        assert info.value.dt < 1e-7
        assert "number" in info.value.diagnostics


class TestSolve:
    def test_zero_horizon_returns_initial_state(self):
        grid = build_grid(1e-3, 10.0, 30)
        cfg = SolverConfig(t_end=0.0)
        traj = solve(exponential_density(), KERNEL, BINARY, grid, cfg)
        assert len(traj.times) == 1
        state = project_initial(exponential_density(), grid)
        assert np.allclose(traj.states[0], state.counts, rtol=0, atol=0)

    def test_mass_conserved_and_confined(self):
        grid = build_grid(1e-3, 10.0, 60)
        cfg = SolverConfig(t_end=0.5, rel_tol=1e-10, abs_tol=1e-15)
        traj = solve(exponential_density(), KERNEL, BINARY, grid, cfg)
        m1 = traj.states @ grid.pivots
        assert np.max(np.abs(m1 / m1[0] - 1.0)) <= 1e-10
        assert traj.stats["clip_events"] == 0
        # cells above the top initially occupied cell never gain
        top0 = int(np.max(np.nonzero(traj.states[0] > 0)[0]))
        assert np.all(traj.states[:, top0 + 1:] == 0.0)

    def test_checkpoint_times_hit_exactly(self):
        grid = build_grid(1e-3, 10.0, 30)
        cps = np.array([0.0, 0.1, 0.25, 0.4])
        cfg = SolverConfig(t_end=0.4, checkpoint_times=cps)
        traj = solve(exponential_density(), KERNEL, BINARY, grid, cfg)
        assert np.array_equal(traj.times, cps)

    def test_shared_operator_set_reused(self):
        grid = build_grid(1e-3, 10.0, 30)
        ops = assemble_operators(KERNEL, BINARY, grid)
        cfg = SolverConfig(t_end=0.1)
        t1 = solve(exponential_density(), KERNEL, BINARY, grid, cfg, ops=ops)
        t2 = solve(exponential_density(), KERNEL, BINARY, grid, cfg, ops=ops)
        assert np.array_equal(t1.states, t2.states)

    def test_split_kernel_uses_rate_matrix_path(self):
        # family VIII is not a global product; the solver must fall back to
        # the full rate matrix and still conserve mass and confine support
        kernel = KernelSpec(family="VIII", A0=1.0, ell=1.0, p=2.0, n=10.0)
        grid = build_grid(1e-3, 10.0, 50)
        ops = assemble_operators(kernel, BINARY, grid)
        assert not ops.use_product
        cfg = SolverConfig(t_end=0.3, rel_tol=1e-10)
        traj = solve(exponential_density(), kernel, BINARY, grid, cfg, ops=ops)
        m1 = traj.states @ grid.pivots
        assert np.max(np.abs(m1 / m1[0] - 1.0)) <= 1e-10
        m0 = traj.states.sum(axis=1)
        assert m0[-1] > m0[0]

    def test_end_concentrated_daughter_run(self):
        daughter = DaughterSpec(family="kll_unit_ends")
        grid = build_grid(1e-3, 10.0, 50)
        cfg = SolverConfig(t_end=0.3, rel_tol=1e-10)
        traj = solve(exponential_density(), KERNEL, daughter, grid, cfg)
        m1 = traj.states @ grid.pivots
        assert np.max(np.abs(m1 / m1[0] - 1.0)) <= 1e-10
        m2 = traj.states @ grid.pivots ** 2
        assert np.all(np.diff(m2) <= 1e-12)

    def test_step_log_recorded(self):
        grid = build_grid(1e-3, 10.0, 30)
        cfg = SolverConfig(t_end=0.1)
        traj = solve(exponential_density(), KERNEL, BINARY, grid, cfg)
        assert len(traj.step_log["t"]) == traj.stats["steps_accepted"]
        assert np.all(traj.step_log["dt"] > 0.0)
