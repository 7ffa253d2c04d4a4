"""Augmented-Lagrangian VI solver: thresholds, certificates, Stokes limits."""

import numpy as np
import pytest

from thinbingham import fields as flds
from thinbingham import geometry, vi_solver as vi

SQRT2 = np.sqrt(2.0)


def cell_spec(g=1.0, radius=0.25):
    return geometry.MediumSpec(omega_extent=(0.25, 0.25), epsilon=0.25,
                               a_eps=0.25, lam=1.0, regime=geometry.CRITICAL,
                               obstacle_radius=radius, mu=1.0, g=g)


def cell_problem(xi=(12.0, 3.0), g=1.0, n=8, radius=0.25, mu=1.0):
    grid = geometry.build_cell(cell_spec(g=g, radius=radius), n)
    forcing = vi.constant_forcing(grid, xi)
    return vi.BinghamProblem(grid, mu, g, 1.0, forcing)


def planar_problem(xi=(12.0, 3.0), g=1.0, n=16):
    spec = geometry.MediumSpec(omega_extent=(0.25, 0.25), epsilon=0.25,
                               a_eps=0.0625, lam=0.0,
                               regime=geometry.SUBCRITICAL,
                               obstacle_radius=0.25, mu=1.0, g=g)
    grid = geometry.build_cell_2d(spec, n)
    return vi.BinghamProblem(grid, 1.0, g, 1.0,
                             vi.constant_forcing(grid, xi))


CFG = vi.VISolverConfig(rho=5.0, tol_rel=1e-8)


class TestValidation:
    def test_nonzero_vertical_forcing_rejected(self):
        grid = geometry.build_cell(cell_spec(), 8)
        f = flds.StaggeredField.zeros(grid)
        f.components[2][:] = 1.0
        with pytest.raises(ValueError):
            vi.BinghamProblem(grid, 1.0, 1.0, 1.0, f)

    def test_bad_viscosity_rejected(self):
        grid = geometry.build_cell(cell_spec(), 8)
        f = flds.StaggeredField.zeros(grid)
        with pytest.raises(ValueError):
            vi.BinghamProblem(grid, 0.0, 1.0, 1.0, f)

    def test_bad_rho_rejected(self):
        with pytest.raises(ValueError):
            vi.VISolverConfig(rho=-1.0)


class TestBasicSolves:
    def test_zero_forcing_short_circuit(self):
        sol = vi.solve_bingham(cell_problem(xi=(0.0, 0.0)), CFG)
        assert sol.converged
        assert sol.iterations == 0
        assert flds.l2_norm(sol.velocity) == 0.0

    def test_below_threshold_zero_flow(self):
        sol = vi.solve_bingham(cell_problem(xi=(1.0, 0.0), g=1.0), CFG)
        assert sol.converged
        assert flds.l2_norm(sol.velocity) < 1e-10

    def test_above_threshold_flows(self):
        sol = vi.solve_bingham(cell_problem(xi=(12.0, 0.0), g=1.0), CFG)
        assert sol.converged
        assert flds.l2_norm(sol.velocity) > 1e-4

    def test_divergence_residual_small(self):
        sol = vi.solve_bingham(cell_problem(), CFG)
        assert sol.residual_history[-1, 0] <= CFG.tol_div * 10

    def test_pressure_mean_zero(self):
        sol = vi.solve_bingham(cell_problem(), CFG)
        assert abs(sol.pressure.fluid_mean()) < 1e-12

    def test_energy_history_nonincreasing(self):
        sol = vi.solve_bingham(cell_problem(), CFG)
        e = sol.energy_history
        assert np.all(np.diff(e) <= 1e-12 * np.maximum(1.0, np.abs(e[:-1])))

    def test_diagnostics_csv_shape(self):
        sol = vi.solve_bingham(cell_problem(), CFG)
        lines = sol.diagnostics_csv().splitlines()
        assert lines[0] == "iteration,energy,div_residual,shrink_residual"
        assert len(lines) == len(sol.energy_history) + 1


class TestStokesLimit:
    def test_linearity_in_forcing(self):
        s1 = vi.solve_bingham(cell_problem(xi=(4.0, 1.0), g=0.0), CFG)
        s2 = vi.solve_bingham(cell_problem(xi=(8.0, 2.0), g=0.0), CFG)
        for a, b in zip(s1.velocity.components, s2.velocity.components):
            np.testing.assert_allclose(2.0 * a, b, rtol=1e-8, atol=1e-12)

    def test_single_iteration(self):
        sol = vi.solve_bingham(cell_problem(xi=(4.0, 1.0), g=0.0), CFG)
        assert sol.converged
        assert sol.iterations <= 1

    def test_disc_reuse_matches_fresh_solve(self):
        # sharing one discretization across forcings must not change results
        probs = [cell_problem(xi=xi) for xi in ((12.0, 3.0), (3.0, 12.0))]
        disc = vi._Discretization(probs[0], CFG)
        for prob in probs:
            fresh = vi.solve_bingham(prob, CFG)
            shared = vi.solve_bingham(prob, CFG, _disc=disc)
            for a, b in zip(fresh.velocity.components,
                            shared.velocity.components):
                np.testing.assert_array_equal(a, b)

    def test_solve_stokes_wrapper(self):
        prob = cell_problem(xi=(4.0, 1.0), g=0.0)
        s1 = vi.solve_stokes(prob, CFG)
        s2 = vi.solve_bingham(prob, CFG)
        for a, b in zip(s1.velocity.components, s2.velocity.components):
            np.testing.assert_array_equal(a, b)


class TestMultiplier:
    def test_bound_and_activity(self):
        g = 1.0
        prob = cell_problem(xi=(12.0, 3.0), g=g)
        sol = vi.solve_bingham(prob, CFG)
        bound = SQRT2 * g
        for m_grp, q_grp in zip(sol.multiplier_grouped, sol.strain_grouped):
            mag = np.sqrt(np.einsum("ij,ij->j", m_grp, m_grp))
            assert mag.max() <= bound * (1 + 1e-9)
            # where the strain is active the multiplier sits on the bound
            qmag = np.sqrt(np.einsum("ij,ij->j", q_grp, q_grp))
            # clearly flowing locations; near the plug boundary the strain
            # carries splitting noise and the multiplier is interior
            active = qmag > 1e-2 * qmag.max()
            if active.any():
                np.testing.assert_allclose(mag[active], bound, rtol=1e-9)


class TestCertificate:
    def test_inequality_residual_on_converged_solves(self):
        for prob in (cell_problem(xi=(12.0, 3.0), g=1.0),
                     cell_problem(xi=(6.0, 0.0), g=0.5),
                     planar_problem(xi=(8.0, 2.0), g=1.0)):
            sol = vi.solve_bingham(prob, CFG)
            assert sol.converged
            J = vi.energy(prob, sol.velocity, CFG)
            worst = vi.certificate(prob, sol, n_fields=50, seed=0, config=CFG)
            assert worst >= -10.0 * CFG.tol_rel * abs(J)

    def test_perturbations_increase_energy(self):
        prob = cell_problem(xi=(12.0, 3.0), g=1.0)
        sol = vi.solve_bingham(prob, CFG)
        J = vi.energy(prob, sol.velocity, CFG)
        rng = np.random.default_rng(1)
        u = sol.velocity.to_vector()
        for _ in range(5):
            v = flds.StaggeredField.from_vector(
                prob.grid, u + 1e-3 * rng.standard_normal(u.shape))
            assert vi.energy(prob, v, CFG) >= J - 1e-10 * abs(J)


class TestForcingHelpers:
    def test_constant_forcing_values(self):
        grid = geometry.build_cell(cell_spec(), 8)
        f = vi.constant_forcing(grid, (2.0, -1.0))
        assert np.all(f.components[0] == 2.0)
        assert np.all(f.components[1] == -1.0)
        assert np.all(f.components[2] == 0.0)

    def test_forcing_from_function_matches_coords(self):
        grid = geometry.build_cell(cell_spec(), 8)
        f = vi.forcing_from_function(grid, lambda x, y: (x, 0.0 * x))
        from thinbingham import operators as ops
        x = ops.comp_coords(grid, 0, origin=(0.0, 0.0, 0.0))
        np.testing.assert_allclose(f.components[0], x[0])
