# This file is part of ts_ucacopf.
#
# Developed for Vera C. Rubin Observatory Telescope and Site Systems.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

import json
import logging
import pathlib
import tempfile
import types
import unittest
from unittest import mock

import numpy as np
import pytest
from lsst.ts import ucacopf

DATA_DIR = pathlib.Path(__file__).parent / "data"


SINGLE_BUS_CASE = """function mpc = single_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	50	0	0	0	1	1	0	230	1	1.05	0.95;
];
mpc.gen = [
	1	50	0	50	-50	1	100	1	100	10	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
];
mpc.gencost = [
	2	0	0	3	0.01	10	0;
];
"""


class SingleBusTestCase(unittest.TestCase):
    """One generator serving one load with no network."""

    def test_converges_to_demand(self):
        grid = ucacopf.parse_matpower(SINGLE_BUS_CASE)
        assert (grid.n_buses, grid.n_generators, grid.n_branches) == (1, 1, 0)
        profile = ucacopf.DemandProfile(factors=[1.0], discount=1.0)
        problem = ucacopf.build_problem(grid, profile)
        settings = ucacopf.SolverSettings(
            epsilon=1e-7,
            max_outer=50,
            max_inner=20000,
            inner_primal_tol=1e-9,
            inner_dual_tol=1e-9,
        )
        report = ucacopf.solve(problem, settings=settings)

        assert report.converged
        np.testing.assert_array_equal(report.schedule, [[1]])
        assert report.schedule_violations == []
        base = grid.base_mva
        assert abs(report.dispatch_p[0, 0] - 50.0) <= 1e-6 * base
        assert report.primal_infeasibility <= 1e-6
        assert report.dispatch_residuals["box"] <= 1e-6
        assert report.dispatch_residuals["ramp"] <= 1e-6
        c2, c1 = grid.generators[0].c2, grid.generators[0].c1
        p = report.dispatch_p[0, 0] / base
        assert report.objective == pytest.approx(
            c2 * p**2 + c1 * p + problem.uc[0].op_cost, rel=1e-9
        )
        np.testing.assert_array_equal(report.angle, [[0.0]])


def dispatch_bounds(form, primal_infeasibility):
    """Bounds on the box and ramp violations of the final dispatch.

    Each violation is a combination of coupling rows: a limit row plus,
    for the ramps, the generator and copy rows linking p to the previous
    period, with the commitment duplicates weighted by the coefficients
    of the relaxed commitment.
    """
    box_scale = 1 + np.max(np.abs([form.pmin, form.pmax, form.qmin, form.qmax]))
    ramp_scale = 3 + np.max(
        [form.ramp_up + form.startup_ramp, form.ramp_down + form.shutdown_ramp]
    )
    return box_scale * primal_infeasibility, ramp_scale * primal_infeasibility


class Case9AcceptanceTestCase(unittest.TestCase):
    """End-to-end solves of case9 with the tabulated penalties."""

    def setUp(self):
        self.grid = ucacopf.read_case(DATA_DIR / "case9.m")
        self.penalties = ucacopf.Penalties(rho_pq=5e3, rho_va=1e4, rho_uc=1e4)

    @pytest.mark.slow
    def test_day_ahead(self):
        problem = ucacopf.build_problem(self.grid, ucacopf.default_profile(24))
        form = ucacopf.layout(problem)
        settings = ucacopf.SolverSettings(max_outer=10, max_inner=500)
        report = ucacopf.solve(problem, penalties=self.penalties, settings=settings)

        assert report.inner_iterations <= 5000
        assert report.primal_infeasibility <= 1e-2
        assert report.schedule_violations == []
        assert report.schedule.shape == (24, 3)
        box, ramp = dispatch_bounds(form, report.primal_infeasibility)
        assert report.dispatch_residuals["box"] <= box + 1e-12
        assert report.dispatch_residuals["ramp"] <= ramp + 1e-12

        # The copper-plate dispatch ignores the network and the minimum
        # outputs, so its generation cost is a lower bound.
        relaxed = ucacopf.relaxed_dispatch(problem)
        lower = np.sum(form.c2 * relaxed**2 + form.c1 * relaxed)
        u = ucacopf.infer_transitions(report.schedule, form.initial_on)
        commitment = np.sum(
            form.op_cost * u[..., 0]
            + form.su_cost * u[..., 1]
            + form.sd_cost * u[..., 2]
        )
        assert 0.99 * lower <= report.objective - commitment <= 1.1 * lower

    @pytest.mark.slow
    def test_single_period_acopf(self):
        # With every unit on and no ramp coupling this is the standard
        # case9 AC optimal power flow.
        profile = ucacopf.DemandProfile(factors=[1.0], discount=1.0)
        uc_defaults = dict(ramp_up=10.0, ramp_down=10.0, min_up=1, min_down=1)
        problem = ucacopf.build_problem(self.grid, profile, uc_defaults)
        settings = ucacopf.SolverSettings(
            epsilon=1e-4,
            max_outer=20,
            max_inner=1000,
            fixed_commitment=np.ones((1, 3), dtype=int),
        )
        report = ucacopf.solve(problem, penalties=self.penalties, settings=settings)

        assert report.primal_infeasibility <= 1e-3
        assert report.objective == pytest.approx(5296.69, rel=1e-2)
        np.testing.assert_allclose(
            report.dispatch_p[0], [89.80, 134.32, 94.19], atol=2.0
        )
        assert np.all(report.voltage <= 1.1 + 1e-3)
        assert np.all(report.voltage >= 0.9 - 1e-3)


class UpdateRulesTestCase(unittest.TestCase):
    """Test the closed-form z, y and outer updates."""

    def test_z_update(self):
        lam, y, rho, beta, r = 2.0, -1.0, 10.0, 30.0, 0.5
        z = ucacopf.z_update(lam, y, rho, beta, r)
        assert z == pytest.approx(-(2.0 - 1.0 + 5.0) / 40.0)
        # z minimizes lam z + beta z^2 / 2 + y (r + z) + rho (r + z)^2 / 2
        grad = lam + beta * z + y + rho * (r + z)
        assert grad == pytest.approx(0.0, abs=1e-12)

    def test_y_update(self):
        y = ucacopf.y_update(np.array([1.0, -1.0]), 10.0, np.array([0.1, 0.2]), -0.05)
        np.testing.assert_allclose(y, [1.5, 0.5])

    def test_outer_update(self):
        penalties = ucacopf.Penalties(lambda_lower=-1.0, lambda_upper=1.0)
        lam = np.array([0.0, 0.5, -0.5])
        z = np.array([0.001, 1.0, -1.0])

        new_lam, beta = ucacopf.outer_update(lam, 100.0, 1.0, None, z, penalties)
        np.testing.assert_allclose(new_lam, [0.1, 1.0, -1.0])
        assert beta == 100.0

        _, beta = ucacopf.outer_update(lam, 100.0, 0.9, 1.0, z, penalties)
        assert beta == 600.0
        _, beta = ucacopf.outer_update(lam, 100.0, 0.7, 1.0, z, penalties)
        assert beta == 100.0

    def test_penalties(self):
        penalties = ucacopf.Penalties()
        assert penalties.beta == 1e4
        assert ucacopf.Penalties(rho_pq=1e5).beta == 1e5
        assert ucacopf.Penalties(beta=7.0).beta == 7.0
        for kwargs in (
            dict(rho_pq=0),
            dict(rho_uc=-1),
            dict(beta=-1.0),
            dict(tau=1.0),
            dict(theta=1.0),
            dict(lambda_lower=1.0, lambda_upper=-1.0),
        ):
            with self.subTest(kwargs=kwargs):
                with pytest.raises(ValueError):
                    ucacopf.Penalties(**kwargs)

    def test_settings(self):
        for kwargs in (dict(epsilon=0), dict(max_outer=0), dict(max_inner=0)):
            with self.subTest(kwargs=kwargs):
                with pytest.raises(ValueError):
                    ucacopf.SolverSettings(**kwargs)


class RecoverAnglesTestCase(unittest.TestCase):
    def test_case9(self):
        grid = ucacopf.read_case(DATA_DIR / "case9.m")
        form = ucacopf.layout(ucacopf.build_problem(grid, ucacopf.default_profile(3)))
        rng = np.random.default_rng(21)
        truth = rng.uniform(-0.3, 0.3, size=(3, form.n_buses))
        # Each line holds its own angle reference.
        shift = rng.uniform(-1, 1, size=form.n_branches)
        line_theta = truth[:, form.line_ends] - shift[:, np.newaxis]
        angle = ucacopf.recover_angles(form, line_theta)
        expected = truth - truth[:, form.reference_bus, np.newaxis]
        np.testing.assert_allclose(angle, expected, atol=1e-12)

    def test_disconnected(self):
        form = types.SimpleNamespace(
            n_buses=4, line_ends=np.array([[0, 1], [2, 1]]), reference_bus=1
        )
        line_theta = np.array([[[0.2, 0.0], [0.1, 0.3]]])
        angle = ucacopf.recover_angles(form, line_theta)
        np.testing.assert_allclose(angle[0, :3], [0.2, 0.0, -0.2])
        assert np.isnan(angle[0, 3])


class AdmmSolverTestCase(unittest.TestCase):
    """Test the two-level ADMM on small instances of case9."""

    def setUp(self):
        grid = ucacopf.read_case(DATA_DIR / "case9.m")
        self.problem = ucacopf.build_problem(grid, ucacopf.default_profile(2))

    def make_settings(self, **kwargs):
        settings = dict(max_outer=2, max_inner=20)
        settings.update(kwargs)
        return ucacopf.SolverSettings(**settings)

    @pytest.mark.slow
    def test_fixed_commitment(self):
        settings = self.make_settings(fixed_commitment=np.ones((2, 3), dtype=int))
        report = ucacopf.solve(self.problem, settings=settings)

        assert report.status in ("converged", "iteration_cap")
        assert report.converged == (report.status == "converged")
        np.testing.assert_array_equal(report.schedule, 1)
        assert report.schedule_violations == []
        assert report.outer_iterations == len(report.inner_per_outer)
        assert report.inner_iterations == sum(report.inner_per_outer)
        assert len(report.beta_history) == report.outer_iterations
        assert len(report.z_inf_history) == report.outer_iterations
        assert len(report.z_2_history) == report.outer_iterations
        for name in ucacopf.HISTORY_COLUMNS:
            assert len(report.history[name]) == report.inner_iterations
        assert min(report.history["primal"]) < report.history["primal"][0]
        assert np.isfinite(report.objective)
        assert np.isfinite(report.primal_infeasibility)

        form = ucacopf.layout(self.problem)
        base = form.base_mva
        assert np.all(report.dispatch_p >= form.p_lower * base - 1e-9)
        assert np.all(report.dispatch_p <= form.pmax * base + 1e-9)
        assert report.voltage.shape == (2, 9)
        assert np.all(report.voltage >= np.sqrt(form.w_lower) - 1e-9)
        assert np.all(report.voltage <= np.sqrt(form.w_upper) + 1e-9)
        np.testing.assert_array_equal(report.angle[:, form.reference_bus], 0)
        assert report.generator_buses == [1, 2, 3]
        assert report.parameters["row_count"] == 195
        assert report.parameters["horizon"] == 2
        for phase in ("uc", "opf", "ucbar", "bus", "update"):
            assert phase in report.timing
        assert "warm_start" not in report.timing

    def test_dp_commitment(self):
        settings = self.make_settings(max_outer=1, max_inner=5)
        report = ucacopf.solve(self.problem, settings=settings)
        assert report.schedule.shape == (2, 3)
        assert set(np.unique(report.schedule)) <= {0, 1}
        assert report.schedule_violations == []
        assert "warm_start" in report.timing
        # The dispatch is the raw iterate; its limit violations are reported.
        form = ucacopf.layout(self.problem)
        u = ucacopf.infer_transitions(report.schedule, form.initial_on)
        residuals = form.dispatch_residuals(
            report.dispatch_p / form.base_mva, report.dispatch_q / form.base_mva, u
        )
        assert set(report.dispatch_residuals) == {"box", "ramp"}
        for name, value in residuals.items():
            with self.subTest(name=name):
                assert report.dispatch_residuals[name] == pytest.approx(value)
                assert value >= 0
        off = report.schedule == 0
        if off.any():
            assert report.dispatch_residuals["box"] >= np.max(
                np.abs(report.dispatch_p[off]) / form.base_mva
            ) - 1e-12
        box, ramp = dispatch_bounds(form, report.primal_infeasibility)
        assert report.dispatch_residuals["box"] <= box + 1e-12
        assert report.dispatch_residuals["ramp"] <= ramp + 1e-12

    @pytest.mark.slow
    def test_workers(self):
        products = []
        with tempfile.TemporaryDirectory() as tmpdir:
            for workers in (1, 2):
                settings = self.make_settings(
                    max_outer=1,
                    max_inner=3,
                    workers=workers,
                    chunk_size=4,
                )
                report = ucacopf.solve(self.problem, settings=settings)
                manager = ucacopf.DataManager(pathlib.Path(tmpdir) / str(workers))
                paths = manager.write(report)
                data = json.loads(paths["report"].read_text())
                data.pop("timing")
                products.append(
                    dict(
                        report=data,
                        **{
                            name: paths[name].read_bytes()
                            for name in ("history", "schedule", "dispatch")
                        },
                    )
                )
        serial, parallel = products
        assert serial == parallel

    def test_kernel_failure(self):
        error = ucacopf.KernelError("bus", (0, 3), "singular balance system")
        settings = self.make_settings(fixed_commitment=np.ones((2, 3), dtype=int))
        with mock.patch.object(
            ucacopf.admm_engine, "bus_kernel", side_effect=error
        ), pytest.raises(ucacopf.SolverError, match="singular") as excinfo:
            ucacopf.solve(self.problem, settings=settings)
        assert excinfo.value.code == ucacopf.ErrorCode.KERNEL_FAILURE
        assert excinfo.value.step == "bus"
        assert excinfo.value.outer == 0
        assert excinfo.value.inner == 0
        assert excinfo.value.diagnostics["index"] == (0, 3)

    def test_divergence(self):
        solver = ucacopf.AdmmSolver(
            self.problem, settings=self.make_settings(divergence_window=2)
        )
        solver.check_divergence([1.0, 1.0, 1.0], 0, 2)
        solver.check_divergence([1e-3, 1e-2], 0, 1)
        with pytest.raises(ucacopf.DivergenceError, match="grew") as excinfo:
            solver.check_divergence([1e-3, 1e-2, 1.0], 1, 7)
        assert excinfo.value.code == ucacopf.ErrorCode.DIVERGED
        assert (excinfo.value.outer, excinfo.value.inner) == (1, 7)

    def test_fixed_commitment_shape(self):
        with pytest.raises(ValueError, match="fixed_commitment"):
            ucacopf.AdmmSolver(
                self.problem,
                settings=self.make_settings(fixed_commitment=np.ones((3, 3))),
            )

    def test_iteration_cap(self):
        log = logging.getLogger("TestAdmmSolver")
        settings = self.make_settings(
            max_outer=1,
            max_inner=2,
            epsilon=1e-12,
            fixed_commitment=np.ones((2, 3), dtype=int),
        )
        with self.assertLogs(log, "WARNING") as logs:
            report = ucacopf.solve(self.problem, settings=settings, log=log)
        assert report.status == "iteration_cap"
        assert not report.converged
        assert report.inner_iterations <= 2
        assert any("iteration cap" in message for message in logs.output)

    def test_kernel_dump(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            settings = self.make_settings(
                max_outer=1,
                max_inner=1,
                kernel_dump_dir=tmpdir,
                fixed_commitment=np.ones((2, 3), dtype=int),
            )
            ucacopf.solve(self.problem, settings=settings)
            names = sorted(path.name for path in pathlib.Path(tmpdir).iterdir())
        assert names == ["bus.json", "gen.json", "line.json", "ucbar.json"]


if __name__ == "__main__":
    unittest.main()
