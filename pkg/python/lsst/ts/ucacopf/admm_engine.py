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

__all__ = [
    "SolverError",
    "DivergenceError",
    "Penalties",
    "SolverSettings",
    "AdmmState",
    "AdmmSolver",
    "z_update",
    "y_update",
    "outer_update",
    "recover_angles",
    "solve",
]

import collections
import contextlib
import dataclasses
import logging
import time

import networkx as nx
import numpy as np

from .constants import ErrorCode, TronStatus
from .data_manager import HISTORY_COLUMNS, SolveReport
from .formulation import BarVars, OpfVars, layout
from .opf_kernels import (
    BusBatch,
    GenBatch,
    KernelError,
    LineBatch,
    TrSolverConfig,
    UcBarBatch,
    bus_kernel,
    dump_kernel_call,
    gen_kernel,
    line_flows,
    line_kernel,
    ucbar_kernel,
    voltage_kernel,
)
from .scenario import relaxed_dispatch, warm_start_uc
from .uc_dp import (
    check_uc_schedule,
    commitment_arrays,
    dp_solve_batch,
    infer_transitions,
    stage_costs,
)
from .worker_pool import KernelPool


class SolverError(RuntimeError):
    """The solve was aborted.

    Parameters
    ----------
    code : `ErrorCode`
    what : `str`
        Description of the failure.
    outer : `int`
        Outer iteration (0-based) at the failure.
    inner : `int`
        Inner sweeps completed before the failure, over all outer
        iterations.
    step : `str`
        Sweep step that failed: "uc", "opf", "ucbar", "bus", "z" or "y".
    diagnostics : `dict`, optional
    """

    def __init__(self, code, what, outer, inner, step, diagnostics=None):
        self.code = code
        self.what = what
        self.outer = outer
        self.inner = inner
        self.step = step
        self.diagnostics = diagnostics if diagnostics is not None else dict()
        super().__init__(
            f"{what} (outer iteration {outer}, inner sweep {inner}, step {step})"
        )

    def __repr__(self):
        return (
            f"{type(self).__name__}(code={self.code!r}, what={self.what!r}, "
            f"outer={self.outer}, inner={self.inner}, step={self.step!r})"
        )


class DivergenceError(SolverError):
    """The primal residual kept growing."""

    def __init__(self, what, outer, inner, diagnostics=None):
        super().__init__(ErrorCode.DIVERGED, what, outer, inner, "y", diagnostics)


@dataclasses.dataclass
class Penalties:
    """Penalty parameters of the two-level augmented Lagrangian."""

    rho_pq: float = 5e3
    """Penalty of the ramp-copy, generator and flow consensus rows."""
    rho_va: float = 1e4
    """Penalty of the voltage consensus rows."""
    rho_uc: float = 1e4
    """Penalty of the rows that contain the commitment."""
    beta: float = None
    """Initial penalty on z; None for the largest rho."""
    tau: float = 6.0
    """Growth factor of beta."""
    theta: float = 0.8
    """Beta grows when ``|z|`` fails to drop below ``theta`` times its
    previous value."""
    lambda_lower: float = -1e12
    lambda_upper: float = 1e12

    def __post_init__(self):
        for name in ("rho_pq", "rho_va", "rho_uc"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name}={getattr(self, name)} must be positive")
        if self.beta is None:
            self.beta = max(self.rho_pq, self.rho_va, self.rho_uc)
        if not self.beta > 0:
            raise ValueError(f"beta={self.beta} must be positive")
        if not self.tau > 1:
            raise ValueError(f"tau={self.tau} must be > 1")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta={self.theta} must be in (0, 1)")
        if not self.lambda_lower < self.lambda_upper:
            raise ValueError(
                f"lambda_lower={self.lambda_lower} must be < "
                f"lambda_upper={self.lambda_upper}"
            )


@dataclasses.dataclass
class SolverSettings:
    """Tolerances, caps and execution options of `solve`."""

    epsilon: float = 1e-3
    """Outer termination tolerance on the infinity norm of z."""
    max_outer: int = 100
    max_inner: int = 1000
    inner_primal_tol: float = 1e-4
    """Relative tolerance on ``|r + z|``, scaled by ``max(1, |x|)``."""
    inner_dual_tol: float = 1e-4
    """Relative tolerance on ``rho |change of B xbar|``, scaled by
    ``max(1, |y|)``."""
    divergence_factor: float = 10.0
    divergence_window: int = 200
    workers: int = 1
    chunk_size: int = 64
    mp_context: str = None
    gen_config: TrSolverConfig = dataclasses.field(default_factory=TrSolverConfig)
    line_config: TrSolverConfig = dataclasses.field(
        default_factory=lambda: TrSolverConfig(rtol=1e-8, max_iterations=100)
    )
    """Line solves stop on a relative gradient tolerance; their gradients
    scale with the penalties."""
    thermal_penalty: float = 1e3
    thermal_growth: float = 10.0
    thermal_rounds: int = 20
    thermal_tolerance: float = 1e-6
    ucbar_tolerance: float = 1e-8
    ucbar_max_iterations: int = 100
    warm_start: bool = True
    """Seed the commitment from the relaxed dispatch; False starts every
    unit in its initial state."""
    warm_start_threshold: float = 1e-3
    fixed_commitment: np.ndarray = None
    """0/1 array (T, G); when set the commitment step is skipped and the
    commitment held at this schedule."""
    kernel_dump_dir: str = None
    """Directory for JSON dumps of the latest call of each kernel."""

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon={self.epsilon} must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError(
                f"max_outer={self.max_outer} and max_inner={self.max_inner} "
                "must be >= 1"
            )


@dataclasses.dataclass
class AdmmState:
    """Iterate of the two-level method."""

    u: np.ndarray
    """Commitment (on, su, sd), shape (T, G, 3)."""
    x: OpfVars
    xbar: BarVars
    z: object
    """Artificial variables, `RowBlocks`."""
    y: object
    """Inner multipliers, `RowBlocks`."""
    lam: object
    """Outer multipliers, `RowBlocks`."""
    beta: float
    line_nu: np.ndarray
    """Thermal multipliers of the line kernels, shape (T, L, 2)."""
    outer: int = 0
    inner: int = 0
    """Total inner sweeps."""
    z_history: list = dataclasses.field(default_factory=list)


def z_update(lam, y, rho, beta, r):
    """Minimize the augmented Lagrangian over z, row by row.

    Parameters
    ----------
    lam, y, rho, r : `float` or `numpy.ndarray`
        Outer multiplier, inner multiplier, penalty and ``A x + B xbar``.
    beta : `float`

    Returns
    -------
    z : `float` or `numpy.ndarray`
        ``-(lam + y + rho r) / (beta + rho)``.
    """
    return -(lam + y + rho * r) / (beta + rho)


def y_update(y, rho, r, z):
    """Inner multiplier step ``y + rho (r + z)``."""
    return y + rho * (r + z)


def outer_update(lam, beta, z_norm, z_prev_norm, z, penalties):
    """Update the outer multipliers and the penalty on z.

    Parameters
    ----------
    lam : `numpy.ndarray`
    beta : `float`
    z_norm : `float`
        Norm of z at the end of this outer iteration.
    z_prev_norm : `float` or None
        Norm at the end of the previous one; None on the first outer
        iteration, which keeps beta.
    z : `numpy.ndarray`
    penalties : `Penalties`

    Returns
    -------
    lam, beta
        ``clip(lam + beta z)`` and ``beta`` times tau if
        ``z_norm > theta * z_prev_norm``, else beta.
    """
    new_lam = np.clip(lam + beta * z, penalties.lambda_lower, penalties.lambda_upper)
    if z_prev_norm is not None and z_norm > penalties.theta * z_prev_norm:
        beta = penalties.tau * beta
    return new_lam, beta


def recover_angles(formulation, line_theta):
    """Assign bus angles by a walk from the reference bus.

    Parameters
    ----------
    formulation : `Formulation`
    line_theta : `numpy.ndarray`
        Line-local angles, shape (T, L, 2).

    Returns
    -------
    angle : `numpy.ndarray`
        Bus angles (radians), shape (T, B); NaN where a bus is not
        connected to the reference bus.
    """
    graph = nx.Graph()
    graph.add_nodes_from(range(formulation.n_buses))
    for l, (i, j) in enumerate(formulation.line_ends):
        graph.add_edge(int(i), int(j), branch=l, from_bus=int(i))
    ref = formulation.reference_bus
    difference = line_theta[..., 0] - line_theta[..., 1]
    angle = np.full((line_theta.shape[0], formulation.n_buses), np.nan)
    angle[:, ref] = 0.0
    for parent, child in nx.bfs_edges(graph, ref):
        edge = graph.edges[parent, child]
        sign = 1.0 if edge["from_bus"] == child else -1.0
        angle[:, child] = angle[:, parent] + sign * difference[:, edge["branch"]]
    return angle


class AdmmSolver:
    """Two-level ADMM for a `ScheduleProblem`.

    The outer loop updates the multipliers and penalty of the artificial
    variables z; each inner sweep updates, in order, the commitment (by
    dynamic programming), the generator and line variables, the relaxed
    commitment, the bus-side copies, z and the inner multipliers.

    Parameters
    ----------
    problem : `ScheduleProblem`
    penalties : `Penalties`, optional
    settings : `SolverSettings`, optional
    log : `logging.Logger`, optional
    """

    def __init__(self, problem, penalties=None, settings=None, log=None):
        self.problem = problem
        self.penalties = penalties or Penalties()
        self.settings = settings or SolverSettings()
        if log is None:
            self.log = logging.getLogger("UcAcopf.engine")
        else:
            self.log = log.getChild("engine")
        self.form = layout(problem)
        self.rho = self.form.penalties(
            self.penalties.rho_pq, self.penalties.rho_va, self.penalties.rho_uc
        )
        self.commitment = commitment_arrays(problem.uc)
        self.ubar_coefficients = self.form.ubar_coefficients()
        self.timing = collections.defaultdict(float)
        fixed = self.settings.fixed_commitment
        if fixed is not None:
            fixed = np.asarray(fixed, dtype=int)
            shape = (self.form.n_periods, self.form.n_generators)
            if fixed.shape != shape:
                raise ValueError(
                    f"fixed_commitment has shape {fixed.shape}; expected {shape}"
                )
        self.fixed_commitment = fixed

    @contextlib.contextmanager
    def timer(self, phase):
        start = time.monotonic()
        try:
            yield
        finally:
            self.timing[phase] += time.monotonic() - start

    def initial_state(self):
        """Initial iterate: bound midpoints, zero angles, warm-started
        commitment."""
        form = self.form
        T = form.n_periods
        if self.fixed_commitment is not None:
            u_on = self.fixed_commitment
        elif self.settings.warm_start:
            with self.timer("warm_start"):
                dispatch = relaxed_dispatch(self.problem, log=self.log)
                u_on = warm_start_uc(
                    dispatch, self.problem.uc, self.settings.warm_start_threshold
                )
        else:
            u_on = np.tile(form.initial_on.astype(int), (T, 1))
        u = infer_transitions(u_on, form.initial_on)

        p = np.tile(0.5 * (form.pmin + form.pmax), (T, 1))
        q = np.tile(0.5 * (form.qmin + form.qmax), (T, 1))
        p_hat = np.concatenate([form.p0[np.newaxis], p[:-1]])
        w_mid = 0.5 * (form.w_lower + form.w_upper)
        line_w = np.tile(w_mid[form.line_ends], (T, 1, 1))
        line_theta = np.zeros_like(line_w)
        flows = line_flows(form.admittance, line_w, line_theta)
        x = OpfVars(
            p=p,
            q=q,
            p_hat=p_hat,
            slack=np.zeros(p.shape + (6,)),
            line_w=line_w,
            line_theta=line_theta,
            line_flow=flows,
            bus_w=np.tile(w_mid, (T, 1)),
        )
        xbar = BarVars(
            ubar=u.copy(),
            p_bar=p.copy(),
            q_bar=q.copy(),
            flow_bar=flows.copy(),
            w_bar=np.tile(w_mid, (T, 1)),
        )
        return AdmmState(
            u=u,
            x=x,
            xbar=xbar,
            z=form.zeros(),
            y=form.zeros(),
            lam=form.zeros(),
            beta=self.penalties.beta,
            line_nu=np.zeros((T, form.n_branches, 2)),
        )

    def _dump(self, kernel, inputs, outputs):
        if self.settings.kernel_dump_dir is not None:
            dump_kernel_call(self.settings.kernel_dump_dir, kernel, inputs, outputs)

    def update_commitment(self, state):
        """Commitment step: one dynamic program per generator."""
        if self.fixed_commitment is not None:
            return
        form = self.form
        costs = stage_costs(
            state.xbar.ubar.transpose(1, 0, 2),
            state.y.uc_dup.transpose(1, 0, 2),
            state.z.uc_dup.transpose(1, 0, 2),
            self.penalties.rho_uc,
            form.op_cost,
            form.su_cost,
            form.sd_cost,
        )
        schedules, _ = dp_solve_batch(costs, **self.commitment)
        state.u = infer_transitions(schedules.T, form.initial_on)

    def gen_batch(self, state):
        """Build the generator subproblems of all (t, g)."""
        form = self.form
        T, G = form.n_periods, form.n_generators
        bar = form.bar_terms(state.xbar)
        names = ("p_lo", "p_hi", "q_lo", "q_hi", "ramp_dn", "ramp_up")

        def rows(blocks, copy_first=0.0):
            copy = np.concatenate([np.full((1, G), copy_first), blocks.ramp_copy])
            return np.concatenate(
                [
                    np.stack([getattr(blocks, name) for name in names], axis=-1),
                    blocks.gen,
                    copy[..., np.newaxis],
                ],
                axis=-1,
            )

        lower = np.zeros((T, G, 9))
        upper = np.full((T, G, 9), np.inf)
        lower[..., 0], upper[..., 0] = form.p_lower, form.p_upper
        lower[..., 1], upper[..., 1] = form.q_lower, form.q_upper
        lower[..., 2], upper[..., 2] = -np.inf, np.inf
        lower[0, :, 2] = upper[0, :, 2] = form.p0
        t, g = np.meshgrid(np.arange(T), np.arange(G), indexing="ij")
        return GenBatch(
            rho=rows(self.rho).reshape(T * G, 9),
            y=rows(state.y).reshape(T * G, 9),
            offset=rows(bar + state.z).reshape(T * G, 9),
            c2=np.tile(form.c2, T),
            c1=np.tile(form.c1, T),
            lower=lower.reshape(T * G, 9),
            upper=upper.reshape(T * G, 9),
            labels=np.stack([t.ravel(), g.ravel()], axis=1),
        )

    def line_batch(self, state):
        """Build the line subproblems of all (t, l)."""
        form = self.form
        T, L = form.n_periods, form.n_branches
        rho = np.concatenate([self.rho.flow, self.rho.volt_line], axis=-1)
        y = np.concatenate([state.y.flow, state.y.volt_line], axis=-1)
        z = np.concatenate([state.z.flow, state.z.volt_line], axis=-1)
        shared = np.concatenate(
            [state.xbar.flow_bar, state.xbar.w_bar[:, form.line_ends]], axis=-1
        )
        lower = np.stack(
            [
                form.w_lower[form.line_ends[:, 0]],
                form.w_lower[form.line_ends[:, 1]],
                form.angle_lower,
                np.zeros(L),
            ],
            axis=-1,
        )
        upper = np.stack(
            [
                form.w_upper[form.line_ends[:, 0]],
                form.w_upper[form.line_ends[:, 1]],
                form.angle_upper,
                np.zeros(L),
            ],
            axis=-1,
        )
        t, l = np.meshgrid(np.arange(T), np.arange(L), indexing="ij")
        return LineBatch(
            admittance=np.tile(form.admittance, (T, 1)),
            rate=np.tile(form.rate, T),
            rho=rho.reshape(T * L, 6),
            target=(shared - z - y / rho).reshape(T * L, 6),
            lower=np.tile(lower, (T, 1)),
            upper=np.tile(upper, (T, 1)),
            nu=state.line_nu.reshape(T * L, 2),
            labels=np.stack([t.ravel(), l.ravel()], axis=1),
        )

    def update_opf(self, state, pool):
        """Generator and line step, plus the bus-held voltage copies."""
        form = self.form
        T, G, L = form.n_periods, form.n_generators, form.n_branches
        x = state.x
        with self.timer("gen"):
            batch = self.gen_batch(state)
            x0 = np.concatenate(
                [x.p[..., None], x.q[..., None], x.p_hat[..., None], x.slack], axis=-1
            ).reshape(T * G, 9)
            result = pool.run(gen_kernel, batch, x0, config=self.settings.gen_config)
            self._dump("gen", batch, result)
            n_bad = int(np.sum(result.status != TronStatus.CONVERGED))
            if n_bad:
                self.log.warning("%d generator kernels did not converge", n_bad)
            values = result.x.reshape(T, G, 9)
            x.p, x.q, x.p_hat = values[..., 0], values[..., 1], values[..., 2]
            x.slack = values[..., 3:].copy()

        with self.timer("line"):
            batch = self.line_batch(state)
            x0 = np.concatenate([x.line_w, x.line_theta], axis=-1).reshape(T * L, 4)
            result = pool.run(
                line_kernel,
                batch,
                x0,
                config=self.settings.line_config,
                penalty=self.settings.thermal_penalty,
                growth=self.settings.thermal_growth,
                max_rounds=self.settings.thermal_rounds,
                tolerance=self.settings.thermal_tolerance,
            )
            self._dump("line", batch, result)
            if result.violated.any():
                self.log.warning(
                    "%d line kernels stopped with a thermal limit violated",
                    int(np.sum(result.violated)),
                )
            values = result.x.reshape(T, L, 4)
            x.line_w = values[..., :2].copy()
            x.line_theta = values[..., 2:].copy()
            x.line_flow = result.flows.reshape(T, L, 4)
            state.line_nu = result.nu.reshape(T, L, 2)

        x.bus_w = voltage_kernel(
            state.xbar.w_bar,
            state.z.volt_bus,
            state.y.volt_bus,
            self.rho.volt_bus,
            form.w_lower,
            form.w_upper,
        )

    def update_ubar(self, state, pool):
        """Relaxed commitment step: one box QP per generator."""
        form = self.form
        T, G = form.n_periods, form.n_generators
        without_ubar = dataclasses.replace(
            state.xbar, ubar=np.zeros_like(state.xbar.ubar)
        )
        offset = form.x_terms(state.x, state.u) + form.bar_terms(without_ubar) + state.z
        batch = UcBarBatch(
            coefficients=self.ubar_coefficients,
            rho=form.gather_ubar_rows(self.rho),
            y=form.gather_ubar_rows(state.y),
            offset=form.gather_ubar_rows(offset),
            labels=np.arange(G),
        )
        x0 = state.xbar.ubar.transpose(1, 0, 2).reshape(G, 3 * T)
        result = pool.run(
            ucbar_kernel,
            batch,
            x0,
            tolerance=self.settings.ucbar_tolerance,
            max_iterations=self.settings.ucbar_max_iterations,
        )
        self._dump("ucbar", batch, result)
        if not result.converged.all():
            self.log.warning(
                "%d relaxed commitment kernels hit the iteration cap",
                int(np.sum(~result.converged)),
            )
        state.xbar.ubar = result.x.reshape(G, T, 3).transpose(1, 0, 2).copy()

    def bus_batch(self, state):
        """Build the bus subproblems of all periods."""
        form = self.form
        T, G = form.n_periods, form.n_generators
        x, y, z, rho = state.x, state.y, state.z, self.rho

        def weighted(value, row_z, row_y, row_rho):
            return row_rho * (value + row_z) + row_y

        numer_p = weighted(x.p, z.gen[..., 0], y.gen[..., 0], rho.gen[..., 0])
        weight_p = rho.gen[..., 0].copy()
        numer_p[:-1] += weighted(x.p_hat[1:], z.ramp_copy, y.ramp_copy, rho.ramp_copy)
        weight_p[:-1] += rho.ramp_copy
        numer_q = weighted(x.q, z.gen[..., 1], y.gen[..., 1], rho.gen[..., 1])
        weight_q = rho.gen[..., 1]
        numer_f = weighted(x.line_flow, z.flow, y.flow, rho.flow)
        numer_line_w = weighted(x.line_w, z.volt_line, y.volt_line, rho.volt_line)
        numer_w = weighted(x.bus_w, z.volt_bus, y.volt_bus, rho.volt_bus)
        numer_w = (
            numer_w
            + numer_line_w[..., 0] @ form.from_incidence
            + numer_line_w[..., 1] @ form.to_incidence
        )
        weight_w = (
            rho.volt_bus
            + rho.volt_line[..., 0] @ form.from_incidence
            + rho.volt_line[..., 1] @ form.to_incidence
        )
        return BusBatch(
            tau_p=numer_p / weight_p,
            weight_p=weight_p,
            tau_q=numer_q / weight_q,
            weight_q=weight_q,
            tau_flow=numer_f / rho.flow,
            weight_flow=rho.flow,
            tau_w=numer_w / weight_w,
            weight_w=weight_w,
            p_demand=form.p_demand,
            q_demand=form.q_demand,
            periods=np.arange(T),
            gs=form.gs,
            bs=form.bs,
            w_lower=form.w_lower,
            w_upper=form.w_upper,
            gen_incidence=form.gen_incidence,
            from_incidence=form.from_incidence,
            to_incidence=form.to_incidence,
        )

    def update_bus(self, state, pool):
        """Bus step: closed-form balance projections."""
        batch = self.bus_batch(state)
        result = pool.run(bus_kernel, batch)
        self._dump("bus", batch, result)
        xbar = state.xbar
        xbar.p_bar = result.p_bar
        xbar.q_bar = result.q_bar
        xbar.flow_bar = result.flow_bar
        xbar.w_bar = result.w_bar

    def sweep(self, state, pool):
        """Run one inner sweep.

        Returns
        -------
        primal, dual : `float`
            ``|r + z|`` and ``max rho |change of B xbar|``, both infinity
            norms.
        """
        form = self.form
        bar_before = form.bar_terms(state.xbar)
        steps = (
            ("uc", lambda: self.update_commitment(state)),
            ("opf", lambda: self.update_opf(state, pool)),
            ("ucbar", lambda: self.update_ubar(state, pool)),
            ("bus", lambda: self.update_bus(state, pool)),
        )
        for step, update in steps:
            try:
                with self.timer(step):
                    update()
            except KernelError as e:
                raise SolverError(
                    ErrorCode.KERNEL_FAILURE,
                    str(e),
                    state.outer,
                    state.inner,
                    step,
                    diagnostics=dict(kernel=e.kernel, index=e.index, iterate=e.iterate),
                ) from e

        with self.timer("update"):
            bar_after = form.bar_terms(state.xbar)
            r = form.x_terms(state.x, state.u) + bar_after
            state.z = r.map(
                lambda r_row, lam, y, rho: z_update(lam, y, rho, state.beta, r_row),
                state.lam,
                state.y,
                self.rho,
            )
            state.y = state.y.map(y_update, self.rho, r, state.z)
            primal = (r + state.z).max_abs()
            dual = self.rho.map(
                lambda rho, after, before: rho * (after - before), bar_after, bar_before
            ).max_abs()
        return primal, dual

    def solve(self):
        """Run the two-level method.

        Returns
        -------
        report : `SolveReport`

        Raises
        ------
        SolverError
            If a kernel fails.
        DivergenceError
            If the primal residual grows by ``divergence_factor`` over
            ``divergence_window`` sweeps.
        """
        settings = self.settings
        penalties = self.penalties
        form = self.form
        self.timing.clear()
        self.log.info(
            "Solving %d periods, %d generators, %d branches, %d buses; "
            "%d coupling rows",
            form.n_periods,
            form.n_generators,
            form.n_branches,
            form.n_buses,
            form.row_count,
        )
        state = self.initial_state()
        history = {name: [] for name in HISTORY_COLUMNS}
        inner_per_outer = []
        z_2_history = []
        beta_history = []
        z_prev = None
        converged = False
        with KernelPool(
            workers=settings.workers,
            chunk_size=settings.chunk_size,
            mp_context=settings.mp_context,
            log=self.log,
        ) as pool:
            for k in range(settings.max_outer):
                state.outer = k
                beta_history.append(state.beta)
                primal_history = []
                n_inner = 0
                for l in range(settings.max_inner):
                    primal, dual = self.sweep(state, pool)
                    n_inner += 1
                    state.inner += 1
                    z_inf = state.z.max_abs()
                    values = (k, l, primal, dual, z_inf)
                    for name, value in zip(HISTORY_COLUMNS, values):
                        history[name].append(value)
                    primal_history.append(primal)
                    self.log.debug(
                        "outer %d inner %d: primal %.3e dual %.3e |z| %.3e",
                        k,
                        l,
                        primal,
                        dual,
                        z_inf,
                    )
                    self.check_divergence(primal_history, k, l)
                    x_scale = max(
                        1.0, state.x.max_abs(), float(np.max(state.u, initial=0))
                    )
                    y_scale = max(1.0, state.y.max_abs())
                    if (
                        primal <= settings.inner_primal_tol * x_scale
                        and dual <= settings.inner_dual_tol * y_scale
                    ):
                        break
                inner_per_outer.append(n_inner)
                z_norm = state.z.max_abs()
                state.z_history.append(z_norm)
                z_2_history.append(state.z.norm2())
                self.log.info(
                    "outer %d: %d inner sweeps, |z| %.3e, beta %.3e, "
                    "primal %.3e, dual %.3e",
                    k,
                    n_inner,
                    z_norm,
                    state.beta,
                    primal,
                    dual,
                )
                if z_norm <= settings.epsilon:
                    converged = True
                    break
                lam, state.beta = outer_update(
                    state.lam.flatten(),
                    state.beta,
                    z_norm,
                    z_prev,
                    state.z.flatten(),
                    penalties,
                )
                state.lam = state.lam.unflatten(lam)
                z_prev = z_norm

        if not converged:
            self.log.warning(
                "Stopped at the outer iteration cap (%d) with |z| %.3e",
                settings.max_outer,
                state.z_history[-1],
            )
        report = self.make_report(
            state, converged, history, inner_per_outer, z_2_history, beta_history
        )
        self.log.info(
            "Finished: %s, objective %.6g, primal infeasibility %.3e, "
            "%d outer / %d total iterations",
            report.status,
            report.objective,
            report.primal_infeasibility,
            report.outer_iterations,
            report.inner_iterations,
        )
        return report

    def check_divergence(self, primal_history, outer, inner):
        window = self.settings.divergence_window
        if len(primal_history) <= window:
            return
        now, before = primal_history[-1], primal_history[-1 - window]
        if now > self.settings.inner_primal_tol and now > (
            self.settings.divergence_factor * before
        ):
            raise DivergenceError(
                f"primal residual grew from {before:.3e} to {now:.3e} "
                f"over {window} inner sweeps",
                outer,
                inner,
                diagnostics=dict(primal=now, primal_before=before, window=window),
            )

    def make_report(
        self, state, converged, history, inner_per_outer, z_2_history, beta_history
    ):
        form = self.form
        base = form.base_mva
        on = np.rint(state.u[..., 0]).astype(int)
        dispatch_residuals = form.dispatch_residuals(state.x.p, state.x.q, state.u)
        self.log.info(
            "Dispatch residuals: box %.3g, ramp %.3g",
            dispatch_residuals["box"],
            dispatch_residuals["ramp"],
        )
        violations = []
        for g, params in enumerate(self.problem.uc):
            violations += [
                f"generator {g}: {text}" for text in check_uc_schedule(on[:, g], params)
            ]
        parameters = dict(
            rho_pq=self.penalties.rho_pq,
            rho_va=self.penalties.rho_va,
            rho_uc=self.penalties.rho_uc,
            beta0=beta_history[0] if beta_history else self.penalties.beta,
            tau=self.penalties.tau,
            theta=self.penalties.theta,
            epsilon=self.settings.epsilon,
            max_outer=self.settings.max_outer,
            max_inner=self.settings.max_inner,
            horizon=form.n_periods,
            row_count=form.row_count,
        )
        return SolveReport(
            status="converged" if converged else "iteration_cap",
            converged=converged,
            objective=form.objective(state.x, state.u),
            primal_infeasibility=form.primal_infeasibility(
                state.x, state.u, state.xbar
            ),
            outer_iterations=len(inner_per_outer),
            inner_iterations=state.inner,
            inner_per_outer=inner_per_outer,
            z_inf_history=list(state.z_history),
            z_2_history=z_2_history,
            beta_history=beta_history,
            history=history,
            schedule=on,
            dispatch_p=state.x.p * base,
            dispatch_q=state.x.q * base,
            voltage=np.sqrt(state.xbar.w_bar),
            angle=np.degrees(recover_angles(form, state.x.line_theta)),
            schedule_violations=violations,
            dispatch_residuals=dispatch_residuals,
            generator_buses=[gen.bus for gen in self.problem.grid.generators],
            parameters=parameters,
            timing=dict(self.timing),
        )


def solve(problem, penalties=None, settings=None, log=None):
    """Solve a `ScheduleProblem` with the two-level ADMM.

    See `AdmmSolver`.

    Returns
    -------
    report : `SolveReport`
    """
    return AdmmSolver(problem, penalties=penalties, settings=settings, log=log).solve()
