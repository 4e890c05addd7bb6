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

import itertools
import json
import pathlib
import pickle
import tempfile
import unittest

import numpy as np
import pytest
import scipy.optimize
from lsst.ts import ucacopf

DATA_DIR = pathlib.Path(__file__).parent / "data"

# Line 4-5 of case9.
LINE_RXB = (0.017, 0.092, 0.158)


def box_qp(rng, n_problems, n, scale=1.0):
    """Random strictly convex quadratics ``x.H.x / 2 + h.x``."""
    a = rng.normal(size=(n_problems, n, n))
    H = np.einsum("kij,kil->kjl", a, a) + 0.5 * np.eye(n)
    h = rng.normal(scale=scale, size=(n_problems, n))

    def fun(x, index=slice(None)):
        Hk, hk = H[index], h[index]
        Hx = np.einsum("kij,kj->ki", Hk, x)
        return np.einsum("ki,ki->k", x, 0.5 * Hx + hk), Hx + hk, Hk

    return H, h, fun


def make_gen_batch(rng, n_problems):
    """Generator subproblems with a bounded, convex objective."""
    rho = np.full((n_problems, 9), 100.0)
    rho[:, :6] = 50.0
    rho[::2, 8] = 0.0  # no ramp-copy row in the first period
    lower = np.zeros((n_problems, 9))
    upper = np.full((n_problems, 9), np.inf)
    lower[:, 0], upper[:, 0] = 0.0, 2.5
    lower[:, 1], upper[:, 1] = -3.0, 3.0
    lower[:, 2], upper[:, 2] = 0.0, 2.5
    return ucacopf.GenBatch(
        rho=rho,
        y=rng.normal(size=(n_problems, 9)),
        offset=rng.normal(scale=0.5, size=(n_problems, 9)),
        c2=rng.uniform(500, 1500, size=n_problems),
        c1=rng.uniform(100, 500, size=n_problems),
        lower=lower,
        upper=upper,
        labels=np.stack([np.arange(n_problems), np.zeros(n_problems)], axis=1),
    )


def projected_gradient(x, g, lower, upper):
    return x - np.clip(x - g, lower, upper)


class TronTestCase(unittest.TestCase):
    """Test the batched trust-region Newton solver."""

    def test_box_qp(self):
        rng = np.random.default_rng(10)
        H, h, fun = box_qp(rng, 20, 5, scale=3.0)
        lower = np.full((20, 5), -0.5)
        upper = np.full((20, 5), 0.5)
        result = ucacopf.tron_solve(fun, np.zeros((20, 5)), lower, upper)
        np.testing.assert_array_equal(result.status, ucacopf.TronStatus.CONVERGED)
        _, g, _ = fun(result.x)
        pg = projected_gradient(result.x, g, lower, upper)
        assert np.max(np.abs(pg)) <= 1e-8
        for k in range(20):
            oracle = scipy.optimize.minimize(
                lambda x: 0.5 * x @ H[k] @ x + h[k] @ x,
                np.zeros(5),
                jac=lambda x: H[k] @ x + h[k],
                bounds=[(-0.5, 0.5)] * 5,
                method="L-BFGS-B",
                options=dict(ftol=1e-14, gtol=1e-12),
            )
            with self.subTest(k=k):
                assert result.f[k] <= oracle.fun + 1e-9

    def test_mixed_batch(self):
        # Seven problems: some optima inside the box, some on its faces,
        # and every trust region a different size.
        rng = np.random.default_rng(21)
        H, h, fun = box_qp(rng, 7, 3)
        x_free = -np.linalg.solve(H, h[:, :, np.newaxis])[:, :, 0]
        half_width = np.where(np.arange(7) % 2 == 0, 10.0, 0.1)[:, np.newaxis]
        lower = np.broadcast_to(-half_width, (7, 3))
        upper = np.broadcast_to(half_width, (7, 3))
        x = np.zeros((7, 3))
        _, g, _ = fun(x)
        radius = np.linspace(0.05, 2.0, 7)
        step = ucacopf.opf_kernels._trust_region_step(x, g, H, lower, upper, radius)
        assert step.shape == (7, 3)
        assert np.all(np.linalg.norm(step, axis=1) <= radius * (1 + 1e-8))
        assert np.all(ucacopf.opf_kernels._model(g, H, step) <= 0)

        result = ucacopf.tron_solve(fun, x, lower, upper)
        np.testing.assert_array_equal(result.status, ucacopf.TronStatus.CONVERGED)
        inside = np.all(np.abs(x_free) < half_width, axis=1)
        assert inside.any() and not inside.all()
        np.testing.assert_allclose(result.x[inside], x_free[inside], atol=1e-7)
        on_face = np.isclose(np.abs(result.x[~inside]), half_width[~inside])
        assert np.all(on_face.any(axis=1))

    def test_active_set_enumeration(self):
        # On small boxes the optimum of a strictly convex quadratic is the
        # best feasible stationary point over all lower/upper/free patterns.
        rng = np.random.default_rng(22)
        for n in (1, 2, 3):
            H, h, fun = box_qp(rng, 6, n, scale=2.0)
            lower = rng.uniform(-1.0, -0.1, size=(6, n))
            upper = rng.uniform(0.1, 1.0, size=(6, n))
            result = ucacopf.tron_solve(fun, np.zeros((6, n)), lower, upper)
            for k in range(6):
                best, best_f = None, np.inf
                for pattern in itertools.product((0, 1, 2), repeat=n):
                    pattern = np.array(pattern)
                    x = np.where(pattern == 0, lower[k], upper[k])
                    free = pattern == 2
                    if free.any():
                        rhs = h[k][free] + H[k][np.ix_(free, ~free)] @ x[~free]
                        x[free] = np.linalg.solve(H[k][np.ix_(free, free)], -rhs)
                    if np.any(x < lower[k] - 1e-12) or np.any(x > upper[k] + 1e-12):
                        continue
                    value = 0.5 * x @ H[k] @ x + h[k] @ x
                    if value < best_f:
                        best, best_f = x, value
                with self.subTest(n=n, k=k):
                    np.testing.assert_allclose(result.x[k], best, atol=1e-7)
                    assert result.f[k] == pytest.approx(best_f, abs=1e-9)

    def test_nonconvex(self):
        # f = (x0^2 - 1)^2 + x1^2 starting at the saddle x0 = 0.
        def fun(x, index):
            f = (x[:, 0] ** 2 - 1) ** 2 + x[:, 1] ** 2
            g = np.stack([4 * x[:, 0] * (x[:, 0] ** 2 - 1), 2 * x[:, 1]], axis=1)
            H = np.zeros((len(x), 2, 2))
            H[:, 0, 0] = 12 * x[:, 0] ** 2 - 4
            H[:, 1, 1] = 2
            return f, g, H

        x0 = np.array([[0.0, 0.3], [0.5, -1.0]])
        result = ucacopf.tron_solve(fun, x0, np.full((2, 2), -5), np.full((2, 2), 5))
        np.testing.assert_allclose(np.abs(result.x[:, 0]), 1, atol=1e-6)
        np.testing.assert_allclose(result.x[:, 1], 0, atol=1e-6)
        np.testing.assert_array_equal(result.status, ucacopf.TronStatus.CONVERGED)

    def test_iteration_cap(self):
        rng = np.random.default_rng(3)
        _, _, fun = box_qp(rng, 2, 4, scale=100.0)
        config = ucacopf.TrSolverConfig(max_iterations=1, initial_radius=1e-3)
        unbounded = np.full((2, 4), np.inf)
        x0 = np.zeros((2, 4))
        result = ucacopf.tron_solve(fun, x0, -unbounded, unbounded, config)
        np.testing.assert_array_equal(result.iterations, 1)
        np.testing.assert_array_equal(result.status, ucacopf.TronStatus.MAX_ITERATIONS)

    def test_non_finite(self):
        def fun(x, index):
            f = np.where(x[:, 0] > 0, np.nan, 0.0)
            return f, np.zeros_like(x), np.zeros(x.shape + (x.shape[1],))

        with pytest.raises(ucacopf.KernelError) as excinfo:
            ucacopf.tron_solve(
                fun,
                np.array([[-1.0], [1.0]]),
                np.full((2, 1), -2.0),
                np.full((2, 1), 2.0),
                kernel="line",
                labels=np.array([[0, 4], [0, 7]]),
            )
        error = excinfo.value
        assert error.kernel == "line"
        assert error.index == (0, 7)
        assert error.code == ucacopf.ErrorCode.KERNEL_FAILURE
        assert error.iterate["x"] == [1.0]
        copy = pickle.loads(pickle.dumps(error))
        assert (copy.kernel, copy.index, copy.what) == (
            error.kernel,
            error.index,
            error.what,
        )
        assert "KernelError(kernel='line'" in repr(error)

    def test_relative_tolerance(self):
        rng = np.random.default_rng(12)
        H, h, fun = box_qp(rng, 8, 4, scale=1e4)
        lower = np.full((8, 4), -np.inf)
        upper = np.full((8, 4), np.inf)
        x0 = np.zeros((8, 4))
        _, g0, _ = fun(x0)
        config = ucacopf.TrSolverConfig(gtol=1e-12, rtol=1e-6)
        result = ucacopf.tron_solve(fun, x0, lower, upper, config)
        np.testing.assert_array_equal(result.status, ucacopf.TronStatus.CONVERGED)
        _, g, _ = fun(result.x)
        pg = np.max(np.abs(g), axis=1)
        assert np.all(pg <= 1e-6 * np.max(np.abs(g0), axis=1))

    def test_config_validation(self):
        for kwargs in (
            dict(gtol=0),
            dict(rtol=1.0),
            dict(rtol=-0.1),
            dict(max_iterations=0),
            dict(initial_radius=-1),
        ):
            with self.subTest(kwargs=kwargs):
                with pytest.raises(ValueError):
                    ucacopf.TrSolverConfig(**kwargs)


class GenKernelTestCase(unittest.TestCase):
    """Test the generator kernel."""

    def test_kkt(self):
        rng = np.random.default_rng(4)
        batch = make_gen_batch(rng, 12)
        result = ucacopf.gen_kernel(batch, np.zeros((12, 9)))
        np.testing.assert_array_equal(result.status, ucacopf.TronStatus.CONVERGED)
        assert np.all(result.x >= batch.lower)
        assert np.all(result.x <= batch.upper)
        H, h = batch.quadratic()
        g = np.einsum("kij,kj->ki", H, result.x) + h
        pg = projected_gradient(result.x, g, batch.lower, batch.upper)
        assert np.max(np.abs(pg)) <= 1e-8

    def test_objective(self):
        rng = np.random.default_rng(5)
        batch = make_gen_batch(rng, 1)
        M = ucacopf.GEN_ROW_MATRIX
        x = rng.uniform(0.1, 1.0, size=9)
        r = M @ x + batch.offset[0]
        expected = (
            batch.c2[0] * x[0] ** 2
            + batch.c1[0] * x[0]
            + batch.y[0] @ r
            + 0.5 * np.sum(batch.rho[0] * r * r)
        )
        H, h = batch.quadratic()
        constant = batch.y[0] @ batch.offset[0] + 0.5 * np.sum(
            batch.rho[0] * batch.offset[0] ** 2
        )
        assert 0.5 * x @ H[0] @ x + h[0] @ x + constant == pytest.approx(expected)

    def test_select(self):
        rng = np.random.default_rng(6)
        batch = make_gen_batch(rng, 5)
        assert len(batch) == 5
        sub = batch.select(slice(1, 3))
        assert len(sub) == 2
        np.testing.assert_array_equal(sub.c2, batch.c2[1:3])
        np.testing.assert_array_equal(sub.labels, batch.labels[1:3])
        unlabeled = ucacopf.GenBatch(**{**vars(batch), "labels": None})
        assert unlabeled.select(slice(0, 2)).labels is None


class LineKernelTestCase(unittest.TestCase):
    """Test the line flow model and the line kernel."""

    def setUp(self):
        self.admittance = np.array(ucacopf.admittance_of(*LINE_RXB))

    def test_line_flows(self):
        rng = np.random.default_rng(8)
        w = rng.uniform(0.81, 1.21, size=(6, 2))
        theta = rng.uniform(-0.5, 0.5, size=(6, 2))
        flows = ucacopf.line_flows(self.admittance, w, theta)
        assert flows.shape == (6, 4)
        Gii, Gij, Gji, Gjj, Bii, Bij, Bji, Bjj = self.admittance
        for n in range(6):
            vi = np.sqrt(w[n, 0]) * np.exp(1j * theta[n, 0])
            vj = np.sqrt(w[n, 1]) * np.exp(1j * theta[n, 1])
            s_ij = vi * np.conj(complex(Gii, Bii) * vi + complex(Gij, Bij) * vj)
            s_ji = vj * np.conj(complex(Gji, Bji) * vi + complex(Gjj, Bjj) * vj)
            with self.subTest(n=n):
                np.testing.assert_allclose(
                    flows[n], [s_ij.real, s_ij.imag, s_ji.real, s_ji.imag], atol=1e-12
                )

    def test_line_basis_derivatives(self):
        rng = np.random.default_rng(9)
        v = np.column_stack(
            [
                rng.uniform(0.8, 1.2, size=4),
                rng.uniform(0.8, 1.2, size=4),
                rng.uniform(-0.4, 0.4, size=4),
                rng.uniform(-0.4, 0.4, size=4),
            ]
        )
        basis, jacobian, hessian = ucacopf.line_basis(v)
        step = 1e-6
        for i in range(4):
            dv = np.zeros(4)
            dv[i] = step
            plus_basis, plus_jacobian, _ = ucacopf.line_basis(v + dv)
            minus_basis, minus_jacobian, _ = ucacopf.line_basis(v - dv)
            with self.subTest(i=i):
                np.testing.assert_allclose(
                    (plus_basis - minus_basis) / (2 * step),
                    jacobian[:, :, i],
                    atol=1e-7,
                )
                np.testing.assert_allclose(
                    (plus_jacobian - minus_jacobian) / (2 * step),
                    hessian[:, :, :, i],
                    atol=1e-6,
                )

    def make_batch(self, v_target, rate):
        n_problems = len(v_target)
        admittance = np.tile(self.admittance, (n_problems, 1))
        flows = ucacopf.line_flows(admittance, v_target[:, :2], v_target[:, 2:])
        lower = np.tile([0.81, 0.81, -np.pi, 0.0], (n_problems, 1))
        upper = np.tile([1.21, 1.21, np.pi, 0.0], (n_problems, 1))
        return ucacopf.LineBatch(
            admittance=admittance,
            rate=np.full(n_problems, rate),
            rho=np.full((n_problems, 6), 1e3),
            target=np.concatenate([flows, v_target[:, :2]], axis=1),
            lower=lower,
            upper=upper,
            nu=np.zeros((n_problems, 2)),
            labels=np.stack([np.zeros(n_problems), np.arange(n_problems)], axis=1),
        )

    def test_reachable_targets(self):
        v_target = np.array([[1.0, 0.95, 0.05, 0.0], [1.1, 1.05, -0.1, 0.0]])
        batch = self.make_batch(v_target, rate=100.0)
        start = np.tile([1.0, 1.0, 0.0, 0.0], (2, 1))
        result = ucacopf.line_kernel(batch, start)
        np.testing.assert_allclose(result.x, v_target, atol=1e-6)
        np.testing.assert_allclose(result.flows, batch.target[:, :4], atol=1e-5)
        assert not result.violated.any()
        np.testing.assert_array_equal(result.nu, 0)

    def test_thermal_limit(self):
        v_target = np.array([[1.0, 1.0, 0.3, 0.0]])
        batch = self.make_batch(v_target, rate=1.0)
        unconstrained = batch.target[0, :4]
        assert unconstrained[0] ** 2 + unconstrained[1] ** 2 > 4.0
        result = ucacopf.line_kernel(batch, np.tile([1.0, 1.0, 0.0, 0.0], (1, 1)))
        flows = result.flows[0]
        assert not result.violated[0]
        assert flows[0] ** 2 + flows[1] ** 2 <= 1.0 + 1e-5
        assert flows[2] ** 2 + flows[3] ** 2 <= 1.0 + 1e-5
        assert result.nu[0].max() > 0


class BusKernelTestCase(unittest.TestCase):
    """Test the closed-form bus kernel."""

    def setUp(self):
        grid = ucacopf.read_case(DATA_DIR / "case9.m")
        problem = ucacopf.build_problem(grid, ucacopf.default_profile(2))
        self.form = ucacopf.layout(problem)

    def make_batch(self, rng, gs=None, bs=None, w_lower=None, w_upper=None):
        form = self.form
        T, G, L, B = 2, form.n_generators, form.n_branches, form.n_buses
        return ucacopf.BusBatch(
            tau_p=rng.uniform(0, 2, size=(T, G)),
            weight_p=rng.uniform(1, 3, size=(T, G)),
            tau_q=rng.uniform(-1, 1, size=(T, G)),
            weight_q=rng.uniform(1, 3, size=(T, G)),
            tau_flow=rng.normal(size=(T, L, 4)),
            weight_flow=rng.uniform(1, 3, size=(T, L, 4)),
            tau_w=rng.uniform(0.9, 1.1, size=(T, B)),
            weight_w=rng.uniform(1, 3, size=(T, B)),
            p_demand=form.p_demand,
            q_demand=form.q_demand,
            periods=np.arange(T),
            gs=form.gs if gs is None else gs,
            bs=form.bs if bs is None else bs,
            w_lower=np.zeros(B) if w_lower is None else w_lower,
            w_upper=np.full(B, 10.0) if w_upper is None else w_upper,
            gen_incidence=form.gen_incidence,
            from_incidence=form.from_incidence,
            to_incidence=form.to_incidence,
        )

    def balance(self, batch, result):
        form = self.form
        p = (
            result.p_bar @ form.gen_incidence
            - result.flow_bar[..., 0] @ form.from_incidence
            - result.flow_bar[..., 2] @ form.to_incidence
            - batch.gs * result.w_bar
        )
        q = (
            result.q_bar @ form.gen_incidence
            - result.flow_bar[..., 1] @ form.from_incidence
            - result.flow_bar[..., 3] @ form.to_incidence
            + batch.bs * result.w_bar
        )
        return p - batch.p_demand, q - batch.q_demand

    def test_balance_and_optimality(self):
        rng = np.random.default_rng(12)
        B = self.form.n_buses
        batch = self.make_batch(
            rng, gs=rng.uniform(0, 0.1, size=B), bs=rng.uniform(-0.2, 0.2, size=B)
        )
        result = ucacopf.bus_kernel(batch)
        p_error, q_error = self.balance(batch, result)
        np.testing.assert_allclose(p_error, 0, atol=1e-10)
        np.testing.assert_allclose(q_error, 0, atol=1e-10)
        # Stationarity: each copy moves from its target by multiplier / weight.
        lam = result.multipliers
        gen_bus = self.form.gen_bus
        np.testing.assert_allclose(
            (result.p_bar - batch.tau_p) * batch.weight_p, lam[:, gen_bus, 0]
        )
        from_bus = self.form.line_ends[:, 0]
        np.testing.assert_allclose(
            (result.flow_bar[..., 1] - batch.tau_flow[..., 1])
            * batch.weight_flow[..., 1],
            -lam[:, from_bus, 1],
        )
        np.testing.assert_allclose(
            (result.w_bar - batch.tau_w) * batch.weight_w,
            -batch.gs * lam[..., 0] + batch.bs * lam[..., 1],
        )

    def test_clipped_voltage(self):
        rng = np.random.default_rng(13)
        B = self.form.n_buses
        batch = self.make_batch(
            rng,
            gs=np.full(B, 0.5),
            bs=np.zeros(B),
            w_lower=np.full(B, 1.0),
            w_upper=np.full(B, 1.0),
        )
        result = ucacopf.bus_kernel(batch)
        np.testing.assert_allclose(result.w_bar, 1.0)
        p_error, q_error = self.balance(batch, result)
        np.testing.assert_allclose(p_error, 0, atol=1e-10)
        np.testing.assert_allclose(q_error, 0, atol=1e-10)

    def test_isolated_bus(self):
        rng = np.random.default_rng(14)
        batch = self.make_batch(rng)
        batch.gen_incidence = np.zeros_like(batch.gen_incidence)
        batch.from_incidence = batch.from_incidence.copy()
        batch.to_incidence = batch.to_incidence.copy()
        # bus 1 (position 0) only touches line 0
        batch.from_incidence[0, 0] = 0.0
        with pytest.raises(ucacopf.KernelError, match="singular") as excinfo:
            ucacopf.bus_kernel(batch)
        assert excinfo.value.kernel == "bus"
        assert excinfo.value.index == (0, 0)

    def test_voltage_kernel(self):
        w_bar = np.array([1.0, 1.0, 1.0])
        z = np.array([0.0, 0.1, -0.5])
        y = np.array([10.0, 0.0, 0.0])
        w = ucacopf.voltage_kernel(w_bar, z, y, 100.0, 0.81, 1.21)
        np.testing.assert_allclose(w, [0.9, 0.9, 1.21])


class UcBarKernelTestCase(unittest.TestCase):
    """Test the relaxed commitment kernel."""

    def test_matches_bounded_least_squares(self):
        rng = np.random.default_rng(15)
        n_problems, n_rows, n = 6, 12, 6
        batch = ucacopf.UcBarBatch(
            coefficients=rng.normal(size=(n_problems, n_rows, n)),
            rho=rng.uniform(1, 10, size=(n_problems, n_rows)),
            y=rng.normal(size=(n_problems, n_rows)),
            offset=rng.normal(size=(n_problems, n_rows)),
            labels=np.arange(n_problems),
        )
        result = ucacopf.ucbar_kernel(batch, np.full((n_problems, n), 0.5))
        assert result.converged.all()
        for k in range(n_problems):
            root = np.sqrt(batch.rho[k])
            oracle = scipy.optimize.lsq_linear(
                root[:, np.newaxis] * batch.coefficients[k],
                -root * (batch.offset[k] + batch.y[k] / batch.rho[k]),
                bounds=(0.0, 1.0),
                tol=1e-14,
                method="bvls",
            )
            with self.subTest(k=k):
                np.testing.assert_allclose(result.x[k], oracle.x, atol=1e-6)

    def test_engine_rows(self):
        # Rows built from a real layout, with the all-on schedule as target.
        grid = ucacopf.read_case(DATA_DIR / "case9.m")
        problem = ucacopf.build_problem(grid, ucacopf.default_profile(3))
        form = ucacopf.layout(problem)
        G, T = form.n_generators, form.n_periods
        coefficients = form.ubar_coefficients()
        target = np.tile([1.0, 0.0, 0.0], (G, T))
        batch = ucacopf.UcBarBatch(
            coefficients=coefficients,
            rho=np.ones((G, 9 * T)),
            y=np.zeros((G, 9 * T)),
            offset=-np.einsum("gij,gj->gi", coefficients, target),
        )
        result = ucacopf.ucbar_kernel(batch, np.full((G, 3 * T), 0.5))
        assert result.converged.all()
        np.testing.assert_allclose(result.x, target, atol=1e-6)


class KernelDumpTestCase(unittest.TestCase):
    def test_dump_kernel_call(self):
        batch = ucacopf.UcBarBatch(
            coefficients=np.ones((1, 2, 2)),
            rho=np.ones((1, 2)),
            y=np.zeros((1, 2)),
            offset=np.zeros((1, 2)),
        )
        result = ucacopf.ucbar_kernel(batch, np.zeros((1, 2)))
        with tempfile.TemporaryDirectory() as tmpdir:
            path = ucacopf.dump_kernel_call(tmpdir, "ucbar", batch, result)
            assert path.name == "ucbar.json"
            data = json.loads(path.read_text())
        assert data["kernel"] == "ucbar"
        assert data["inputs"]["rho"] == [[1.0, 1.0]]
        assert data["inputs"]["labels"] is None
        assert data["outputs"]["converged"] == [True]


class KernelPoolTestCase(unittest.TestCase):
    """Test chunked kernel runs."""

    def make_batch(self, n_problems):
        return make_gen_batch(np.random.default_rng(16), n_problems)

    def test_chunks(self):
        pool = ucacopf.KernelPool(chunk_size=4)
        assert pool.chunks(10) == [slice(0, 4), slice(4, 8), slice(8, 10)]
        assert pool.chunks(0) == [slice(0, 0)]
        for kwargs in (dict(workers=0), dict(chunk_size=0)):
            with self.subTest(kwargs=kwargs):
                with pytest.raises(ValueError):
                    ucacopf.KernelPool(**kwargs)

    def test_results_independent_of_workers(self):
        batch = self.make_batch(11)
        x0 = np.zeros((11, 9))
        whole = ucacopf.gen_kernel(batch, x0)
        results = []
        for workers in (1, 2):
            with ucacopf.KernelPool(workers=workers, chunk_size=3) as pool:
                results.append(pool.run(ucacopf.gen_kernel, batch, x0))
        for result in results:
            np.testing.assert_array_equal(result.x, results[0].x)
            np.testing.assert_array_equal(result.status, results[0].status)
            np.testing.assert_allclose(result.x, whole.x, atol=1e-8)

    def test_shared_keywords(self):
        batch = self.make_batch(5)
        config = ucacopf.TrSolverConfig(max_iterations=1)
        with ucacopf.KernelPool(chunk_size=2) as pool:
            result = pool.run(
                ucacopf.gen_kernel, batch, np.zeros((5, 9)), config=config
            )
        np.testing.assert_array_equal(result.iterations, 1)

    def test_concatenate_arrays(self):
        result = ucacopf.concatenate_results([np.zeros((2, 3)), np.ones((1, 3))])
        np.testing.assert_array_equal(result, [[0, 0, 0], [0, 0, 0], [1, 1, 1]])


if __name__ == "__main__":
    unittest.main()
