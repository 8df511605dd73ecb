import math
import warnings

import numpy as np
import pytest

from sclaw import (GridField, TorusGrid, Trajectory, TrajectoryMeta, cfl_dt,
                   control_from_target, i_functional, preset, r_fun,
                   r_fun_bruteforce, solve_kruzkov, two_jump_initial,
                   young_dual_objective, young_i)
from sclaw.ratefun import DiscreteMeasure, YoungMeasureField, _polygon_table


def kruzkov_run(model, grid, T, outer=0.2, inner=0.8):
    u0 = two_jump_initial(grid, outer, inner)
    dt = cfl_dt(model, grid, T)
    n = int(round(T / dt))
    stride = max(1, int(math.floor(grid.dx / dt)))
    while n % stride:
        stride -= 1
    return solve_kruzkov(model, u0, T, dt, store_stride=stride), u0


def random_phi_frames(times, x, rng):
    phi = np.zeros((times.size, x.size))
    amp = rng.normal(size=5)
    for k, t in enumerate(times):
        phi[k] = (amp[0] * np.sin(2 * np.pi * x) * (1 - t)
                  + amp[1] * np.cos(2 * np.pi * x) * t**2
                  + amp[2] * np.sin(4 * np.pi * x) * t
                  + amp[3] * np.cos(6 * np.pi * x) + amp[4])
    return phi


class TestDiscreteMeasure:
    def test_normalization_enforced(self):
        with pytest.raises(ValueError):
            DiscreteMeasure(np.array([0.2, 0.8]), np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            DiscreteMeasure(np.array([1.2]), np.array([1.0]))

    def test_moments(self):
        m = DiscreteMeasure(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
        assert m.mean() == pytest.approx(0.5)
        assert m.moment(lambda v: v * (1 - v)) == pytest.approx(0.0)


class TestRFun:
    def test_feasible_zero(self, tasep):
        value, measure = r_fun(tasep, 0.3, float(tasep.f(0.3)))
        assert value == 0.0
        assert measure.positions.size == 1
        assert measure.positions[0] == pytest.approx(0.3, abs=1e-9)

    def test_linear_flux_case(self, linear):
        # f = identity: nu(f) = w is forced; the best denominator is
        # a2(w) = 0.25 by concavity, so R = (0.5 - 0.25)^2 / 0.25
        value, _ = r_fun(linear, 0.5, 0.25)
        assert value == pytest.approx(0.25, abs=1e-6)

    def test_degenerate_convention(self, tasep):
        # nu = (delta_0 + delta_1)/2: nu(f) = 0 = c and nu(a2) = 0
        value, measure = r_fun(tasep, 0.5, 0.0)
        assert value == 0.0
        assert sorted(measure.positions.tolist()) == pytest.approx([0.0, 1.0])

    def test_infeasible_mean(self, tasep):
        with pytest.raises(ValueError):
            r_fun(tasep, 1.4, 0.0)

    def test_nonnegative(self, tasep):
        rng = np.random.default_rng(3)
        for _ in range(5):
            value, _ = r_fun(tasep, rng.uniform(0, 1),
                             rng.uniform(-0.5, 0.7))
            assert value >= 0.0

    @pytest.mark.parametrize("model_name", ["tasep", "burgers", "linear"])
    def test_three_atom_vs_bruteforce(self, model_name):
        model = preset(model_name)
        rng = np.random.default_rng(hash(model_name) % 2**32)
        for _ in range(5):
            w = float(rng.uniform(0.05, 0.95))
            c = float(rng.uniform(-0.3, 0.6))
            v1, _ = r_fun(model, w, c)
            v2 = r_fun_bruteforce(model, w, c, n_iters=150)
            assert abs(v1 - v2) <= 1e-3

    def test_polygon_table_upper_bounds(self, tasep):
        table = _polygon_table(tasep)
        rng = np.random.default_rng(9)
        for _ in range(10):
            w = float(rng.uniform(0.02, 0.98))
            c = float(rng.uniform(-0.4, 0.7))
            exact, _ = r_fun(tasep, w, c)
            approx = float(table.query(np.array([w]), np.array([c]))[0])
            assert approx >= exact - 1e-9
            assert approx <= exact + 0.05 * max(1.0, exact)


class TestYoungI:
    def test_two_atom_measure_valued_solution(self, tasep, grid64):
        # (delta_0 + delta_1)/2 with f(0) = f(1) = 0: zero source on every
        # slice, zero cost, a genuinely non-Dirac measure-valued solution
        times = np.linspace(0, 1, 17)
        mu = YoungMeasureField.constant_atoms(grid64, times,
                                              [(0.0, 0.5), (1.0, 0.5)])
        u0 = GridField(grid64, np.full(64, 0.5))
        assert young_i(mu, tasep, u0) == 0.0

    def test_dirac_of_kruzkov_small(self, tasep):
        grid = TorusGrid(128)
        traj, u0 = kruzkov_run(tasep, grid, 0.25)
        mu = YoungMeasureField.from_trajectory(traj)
        val = young_i(mu, tasep, u0)
        assert 0.0 <= val <= 0.01

    def test_initial_mismatch_sentinel(self, tasep, grid64):
        times = np.linspace(0, 1, 9)
        mu = YoungMeasureField.constant_atoms(grid64, times, [(0.4, 1.0)])
        u0 = GridField(grid64, np.full(64, 0.7))
        with pytest.warns(UserWarning):
            assert math.isinf(young_i(mu, tasep, u0))

    def test_mass_drift_sentinel(self, tasep, grid64):
        times = np.linspace(0, 1, 9)
        pos = np.broadcast_to(0.4 + 0.1 * times[:, None, None],
                              (9, 64, 1)).copy()
        mu = YoungMeasureField(grid64, times, pos, np.ones_like(pos))
        u0 = GridField(grid64, np.full(64, 0.4))
        with pytest.warns(UserWarning):
            assert math.isinf(young_i(mu, tasep, u0))

    def test_duality_no_test_function_beats_value(self, tasep):
        grid = TorusGrid(128)
        traj, u0 = kruzkov_run(tasep, grid, 0.25)
        mu = YoungMeasureField.from_trajectory(traj)
        value = young_i(mu, tasep, u0)
        rng = np.random.default_rng(11)
        x = grid.cell_centers
        for _ in range(10):
            phi = random_phi_frames(traj.times, x, rng)
            obj = young_dual_objective(mu, tasep, u0, phi)
            assert obj <= value + 1e-6

    def test_time_increment_diagnostic(self, tasep, grid64):
        times = np.linspace(0, 1, 5)
        mu = YoungMeasureField.constant_atoms(grid64, times, [(0.5, 1.0)])
        assert np.max(mu.time_increments_h_minus1()) == 0.0


class TestIFunctional:
    def test_constant_trajectory_zero(self, tasep, grid64):
        times = np.linspace(0, 1, 17)
        traj = Trajectory(grid64, times, np.full((17, 64), 0.5),
                          TrajectoryMeta("const"))
        assert i_functional(traj, tasep) == 0.0

    def test_kruzkov_small(self, tasep):
        grid = TorusGrid(256)
        traj, _ = kruzkov_run(tasep, grid, 0.25)
        assert 0.0 <= i_functional(traj, tasep) <= 0.01

    def test_time_reversed_positive(self, burgers):
        # convex flux: the relaxed moment band is thin, so the reversed
        # entropic solution has a genuinely positive cost
        grid = TorusGrid(256)
        traj, _ = kruzkov_run(burgers, grid, 0.2, outer=0.8, inner=0.2)
        rev = Trajectory(grid, traj.times, traj.data[::-1],
                         TrajectoryMeta("reversed"))
        fwd_val = i_functional(traj, burgers)
        rev_val = i_functional(rev, burgers)
        assert fwd_val <= 0.01
        assert rev_val > 0.02

    @pytest.mark.parametrize("model_name", ["tasep", "burgers"])
    def test_contraction_inequality(self, model_name):
        # I(u) <= Young(delta_u) + 1e-6 on every trajectory tested
        model = preset(model_name)
        grid = TorusGrid(128)
        cases = []
        traj, u0 = kruzkov_run(model, grid, 0.25)
        cases.append((traj, u0))
        rev = Trajectory(grid, traj.times, traj.data[::-1],
                         TrajectoryMeta("reversed"))
        cases.append((rev, GridField(grid, rev.data[0])))
        for traj_k, u0_k in cases:
            i_val = i_functional(traj_k, model)
            y_val = young_i(YoungMeasureField.from_trajectory(traj_k),
                            model, u0_k)
            assert i_val <= y_val + 1e-6

    def test_contraction_on_noisy_path(self, tasep):
        from sclaw import (NoisePlan, RngStream, SpdeParams, make_kernel,
                           simulate, stable_dt)
        grid = TorusGrid(64)
        kernel = make_kernel("triangle", 0.1, grid)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            dt = stable_dt(tasep, grid, kernel, 0.1, 1.5)
        n = int(math.ceil(0.1 / dt))
        n = ((n + 7) // 8) * 8
        params = SpdeParams(0.1, 1.5, 0.1 / n, 0.1, store_stride=n // 8)
        x = grid.cell_centers
        u0 = GridField(grid, 0.5 + 0.2 * np.sin(2 * np.pi * x))
        traj = simulate(tasep, params, NoisePlan(kernel), u0,
                        RngStream(5, 0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # coarse-stride warning ok here
            i_val = i_functional(traj, tasep)
            y_val = young_i(YoungMeasureField.from_trajectory(traj), tasep,
                            u0)
        assert i_val <= y_val + 1e-6

    def test_mass_drift_precondition(self, tasep, grid64):
        times = np.linspace(0, 1, 9)
        data = np.full((9, 64), 0.5) + 0.01 * times[:, None]
        traj = Trajectory(grid64, times, data, TrajectoryMeta("drift"))
        with pytest.raises(ValueError):
            i_functional(traj, tasep)


class TestControl:
    def test_constant_target_zero(self, tasep, grid64):
        times = np.linspace(0, 1, 17)
        target = Trajectory(grid64, times, np.full((17, 64), 0.5),
                            TrajectoryMeta("target"))
        field = control_from_target(target, tasep)
        assert field.cost == 0.0
        assert np.all(field.psi == 0.0)

    def test_weak_solution_costs_little(self, tasep):
        grid = TorusGrid(256)
        traj, _ = kruzkov_run(tasep, grid, 0.25)
        field = control_from_target(traj, tasep)
        assert 0.0 <= field.cost <= 0.01

    def test_cost_recomputable(self, tasep, grid64):
        x = grid64.cell_centers
        times = np.linspace(0, 0.5, 33)
        frames = np.stack([0.5 + 0.2 * np.sin(2 * np.pi * (x - 0.4 * t))
                           for t in times])
        target = Trajectory(grid64, times, frames, TrajectoryMeta("target"))
        field = control_from_target(target, tasep)
        assert field.recompute_cost(tasep) == pytest.approx(field.cost,
                                                            abs=1e-10)

    def test_zero_mean_slices(self, tasep, grid64):
        x = grid64.cell_centers
        times = np.linspace(0, 0.5, 33)
        frames = np.stack([0.5 + 0.2 * np.sin(2 * np.pi * (x - 0.4 * t))
                           for t in times])
        field = control_from_target(
            Trajectory(grid64, times, frames, TrajectoryMeta("t")), tasep)
        assert np.max(np.abs(field.psi.mean(axis=1))) < 1e-12

    def test_quadratic_cost_scaling(self, linear, grid64):
        # linear flux: the residual is proportional to the speed mismatch,
        # so halving it quarters the cost
        x = grid64.cell_centers
        times = np.linspace(0, 0.5, 65)

        def cost_for(speed):
            frames = np.stack([
                0.5 + 0.2 * np.sin(2 * np.pi * (x - speed * t))
                for t in times])
            target = Trajectory(grid64, times, frames,
                                TrajectoryMeta("target"))
            return control_from_target(target, linear).cost

        c_full = cost_for(1.0 + 0.4)
        c_half = cost_for(1.0 + 0.2)
        assert c_full / c_half == pytest.approx(4.0, rel=0.1)

    def test_degenerate_target_sentinel(self, tasep, grid64):
        times = np.linspace(0, 0.5, 9)
        target = Trajectory(grid64, times, np.full((9, 64), 1.0),
                            TrajectoryMeta("target"))
        with pytest.warns(UserWarning):
            field = control_from_target(target, tasep)
        assert math.isinf(field.cost)
