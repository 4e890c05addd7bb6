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
    "OpfVars",
    "BarVars",
    "RowBlocks",
    "CouplingRow",
    "Formulation",
    "BLOCK_KINDS",
    "BLOCK_PENALTY",
    "layout",
    "residuals",
    "primal_infeasibility",
    "objective",
]

import dataclasses

import numpy as np

from .constants import PenaltyClass, RowKind

# Row blocks in flattening order, with their row kind.
BLOCK_KINDS = {
    "uc_dup": RowKind.UC_DUPLICATE,
    "p_lo": RowKind.P_LO,
    "p_hi": RowKind.P_HI,
    "q_lo": RowKind.Q_LO,
    "q_hi": RowKind.Q_HI,
    "ramp_dn": RowKind.RAMP_DN,
    "ramp_up": RowKind.RAMP_UP,
    "ramp_copy": RowKind.RAMP_COPY,
    "gen": RowKind.GEN_CONSENSUS,
    "flow": RowKind.FLOW_CONSENSUS,
    "volt_line": RowKind.VOLT_CONSENSUS,
    "volt_bus": RowKind.VOLT_CONSENSUS,
}

BLOCK_PENALTY = {
    "uc_dup": PenaltyClass.UC,
    "p_lo": PenaltyClass.UC,
    "p_hi": PenaltyClass.UC,
    "q_lo": PenaltyClass.UC,
    "q_hi": PenaltyClass.UC,
    "ramp_dn": PenaltyClass.UC,
    "ramp_up": PenaltyClass.UC,
    "ramp_copy": PenaltyClass.PQ,
    "gen": PenaltyClass.PQ,
    "flow": PenaltyClass.PQ,
    "volt_line": PenaltyClass.VA,
    "volt_bus": PenaltyClass.VA,
}


@dataclasses.dataclass
class OpfVars:
    """Continuous component-local variables (the x-side OPF block).

    All arrays are per-unit; angles are in radians.
    """

    p: np.ndarray
    """Real power output, shape (T, G)."""
    q: np.ndarray
    """Reactive power output, shape (T, G)."""
    p_hat: np.ndarray
    """Local copy of the previous period's output, shape (T, G);
    ``p_hat[0]`` is the initial dispatch."""
    slack: np.ndarray
    """Nonnegative slacks, shape (T, G, 6), ordered as `SLACK_NAMES`."""
    line_w: np.ndarray
    """Squared voltage magnitudes at the line ends, shape (T, L, 2)."""
    line_theta: np.ndarray
    """Voltage angles at the line ends, shape (T, L, 2); the to end is the
    line-local reference."""
    line_flow: np.ndarray
    """Flows computed from the line voltages, shape (T, L, 4), ordered as
    `FLOW_NAMES`."""
    bus_w: np.ndarray
    """Squared voltage magnitude copy held by each bus, shape (T, B)."""

    def copy(self):
        return OpfVars(
            **{
                field.name: getattr(self, field.name).copy()
                for field in dataclasses.fields(self)
            }
        )

    def max_abs(self):
        return max(
            float(np.max(np.abs(getattr(self, field.name)), initial=0.0))
            for field in dataclasses.fields(self)
        )


@dataclasses.dataclass
class BarVars:
    """Shared duplicates (the x-bar block)."""

    ubar: np.ndarray
    """Relaxed commitment (on, su, sd) in [0, 1], shape (T, G, 3)."""
    p_bar: np.ndarray
    """Bus-side real power copy, shape (T, G)."""
    q_bar: np.ndarray
    """Bus-side reactive power copy, shape (T, G)."""
    flow_bar: np.ndarray
    """Bus-side flow copies, shape (T, L, 4)."""
    w_bar: np.ndarray
    """Consensus squared voltage magnitude, shape (T, B)."""

    def copy(self):
        return BarVars(
            **{
                field.name: getattr(self, field.name).copy()
                for field in dataclasses.fields(self)
            }
        )


@dataclasses.dataclass
class RowBlocks:
    """One array per block of coupling rows.

    Used for residuals, artificial variables, multipliers and penalties
    alike. Shapes, for T periods, G generators, L lines and B buses:
    ``uc_dup`` (T, G, 3); ``p_lo`` to ``ramp_up`` (T, G);
    ``ramp_copy`` (T - 1, G); ``gen`` (T, G, 2); ``flow`` (T, L, 4);
    ``volt_line`` (T, L, 2); ``volt_bus`` (T, B).
    """

    uc_dup: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    q_lo: np.ndarray
    q_hi: np.ndarray
    ramp_dn: np.ndarray
    ramp_up: np.ndarray
    ramp_copy: np.ndarray
    gen: np.ndarray
    flow: np.ndarray
    volt_line: np.ndarray
    volt_bus: np.ndarray

    @classmethod
    def full(cls, shapes, value=0.0):
        return cls(
            **{
                name: np.full(shape, value, dtype=float)
                for name, shape in shapes.items()
            }
        )

    def items(self):
        for name in BLOCK_KINDS:
            yield name, getattr(self, name)

    def map(self, func, *others):
        """Apply ``func`` blockwise to this and other `RowBlocks`."""
        return RowBlocks(
            **{
                name: func(block, *(getattr(other, name) for other in others))
                for name, block in self.items()
            }
        )

    def __add__(self, other):
        return self.map(np.add, other)

    def __sub__(self, other):
        return self.map(np.subtract, other)

    def copy(self):
        return self.map(np.copy)

    def flatten(self):
        """Concatenate all rows in block order."""
        return np.concatenate([block.ravel() for _, block in self.items()])

    def unflatten(self, vector):
        """Inverse of `flatten`, using the block shapes of this instance."""
        vector = np.asarray(vector, dtype=float)
        expected = sum(block.size for _, block in self.items())
        if vector.shape != (expected,):
            raise ValueError(f"vector has {vector.size} rows; expected {expected}")
        blocks = {}
        start = 0
        for name, block in self.items():
            blocks[name] = vector[start : start + block.size].reshape(block.shape)
            start += block.size
        return RowBlocks(**blocks)

    def max_abs(self):
        """Infinity norm over all rows."""
        return float(np.max(np.abs(self.flatten()), initial=0.0))

    def norm2(self):
        return float(np.linalg.norm(self.flatten()))

    def dot(self, other):
        return float(np.dot(self.flatten(), other.flatten()))


@dataclasses.dataclass(frozen=True)
class CouplingRow:
    """Description of one coupling row."""

    kind: RowKind
    block: str
    """Name of the `RowBlocks` field holding the row."""
    index: tuple
    """Index of the row within its block."""
    penalty_class: PenaltyClass
    coefficients: dict = dataclasses.field(default_factory=dict, compare=False)
    """Constant data entering the row, e.g. ``{"Pmin": 0.1}``."""


class Formulation:
    """Variable layout and coupling rows of a `ScheduleProblem`.

    Parameters
    ----------
    problem : `ScheduleProblem`

    Notes
    -----
    Every row has the form ``A x + B xbar + z = 0``, where ``x`` holds
    the commitment ``u`` and the `OpfVars`, and ``xbar`` the `BarVars`.
    The ``p_hat`` copies keep the ramp rows separable per period:
    ``p_hat[t]`` is tied to ``p_bar[t - 1]`` by a ramp-copy row and
    ``p_hat[0]`` is fixed to the initial dispatch.
    """

    def __init__(self, problem):
        self.problem = problem
        grid = problem.grid
        self.base_mva = grid.base_mva
        self.n_periods = problem.horizon
        self.n_generators = grid.n_generators
        self.n_branches = grid.n_branches
        self.n_buses = grid.n_buses

        gens = grid.generators
        uc = problem.uc
        self.pmin = np.array([gen.Pmin for gen in gens])
        self.pmax = np.array([gen.Pmax for gen in gens])
        self.qmin = np.array([gen.Qmin for gen in gens])
        self.qmax = np.array([gen.Qmax for gen in gens])
        self.c2 = np.array([gen.c2 for gen in gens])
        self.c1 = np.array([gen.c1 for gen in gens])
        self.op_cost = np.array([params.op_cost for params in uc])
        self.su_cost = np.array([params.su_cost for params in uc])
        self.sd_cost = np.array([params.sd_cost for params in uc])
        self.ramp_up = np.array([params.ramp_up for params in uc])
        self.ramp_down = np.array([params.ramp_down for params in uc])
        self.startup_ramp = np.array([params.startup_ramp for params in uc])
        self.shutdown_ramp = np.array([params.shutdown_ramp for params in uc])
        self.initial_on = np.array([float(params.initial_on) for params in uc])
        self.p0 = np.asarray(problem.p0, dtype=float)
        self.gen_bus = np.array([grid.bus_index[gen.bus] for gen in gens], dtype=int)
        # Output boxes hold both the physical range and zero.
        self.p_lower = np.minimum(0.0, self.pmin)
        self.p_upper = self.pmax
        self.q_lower = np.minimum(0.0, self.qmin)
        self.q_upper = np.maximum(0.0, self.qmax)

        branches = grid.branches
        self.line_ends = np.array(
            [
                [grid.bus_index[branch.from_bus], grid.bus_index[branch.to_bus]]
                for branch in branches
            ],
            dtype=int,
        ).reshape(-1, 2)
        self.admittance = np.array([branch.admittance for branch in branches]).reshape(
            -1, 8
        )
        self.rate = np.array([branch.rate_limit for branch in branches])
        # Angle difference limits (radians), within one turn.
        self.angle_lower = np.maximum(
            -np.pi, np.radians([branch.angmin for branch in branches])
        )
        self.angle_upper = np.minimum(
            np.pi, np.radians([branch.angmax for branch in branches])
        )

        buses = grid.buses
        self.gs = np.array([bus.Gs for bus in buses])
        self.bs = np.array([bus.Bs for bus in buses])
        self.w_lower = np.array([bus.Vmin**2 for bus in buses])
        self.w_upper = np.array([bus.Vmax**2 for bus in buses])
        self.p_demand = np.asarray(problem.p_demand, dtype=float)
        self.q_demand = np.asarray(problem.q_demand, dtype=float)
        self.reference_bus = grid.reference_buses[0] if grid.reference_buses else 0

        # Incidence matrices for scatter sums onto buses.
        self.gen_incidence = np.zeros((self.n_generators, self.n_buses))
        self.gen_incidence[np.arange(self.n_generators), self.gen_bus] = 1.0
        self.from_incidence = np.zeros((self.n_branches, self.n_buses))
        self.from_incidence[np.arange(self.n_branches), self.line_ends[:, 0]] = 1.0
        self.to_incidence = np.zeros((self.n_branches, self.n_buses))
        self.to_incidence[np.arange(self.n_branches), self.line_ends[:, 1]] = 1.0

    @property
    def block_shapes(self):
        T, G, L, B = self.n_periods, self.n_generators, self.n_branches, self.n_buses
        return dict(
            uc_dup=(T, G, 3),
            p_lo=(T, G),
            p_hi=(T, G),
            q_lo=(T, G),
            q_hi=(T, G),
            ramp_dn=(T, G),
            ramp_up=(T, G),
            ramp_copy=(T - 1, G),
            gen=(T, G, 2),
            flow=(T, L, 4),
            volt_line=(T, L, 2),
            volt_bus=(T, B),
        )

    @property
    def row_count(self):
        return int(sum(np.prod(shape) for shape in self.block_shapes.values()))

    def zeros(self):
        """`RowBlocks` of zeros."""
        return RowBlocks.full(self.block_shapes)

    def penalties(self, rho_pq, rho_va, rho_uc):
        """`RowBlocks` holding each row's penalty."""
        values = {
            PenaltyClass.PQ: rho_pq,
            PenaltyClass.VA: rho_va,
            PenaltyClass.UC: rho_uc,
        }
        return RowBlocks(
            **{
                name: np.full(shape, values[BLOCK_PENALTY[name]], dtype=float)
                for name, shape in self.block_shapes.items()
            }
        )

    def _coefficients(self, block, index):
        g = index[1] if block not in ("flow", "volt_line", "volt_bus") else None
        if block in ("p_lo", "p_hi"):
            return dict(Pmin=self.pmin[g], Pmax=self.pmax[g])
        if block in ("q_lo", "q_hi"):
            return dict(Qmin=self.qmin[g], Qmax=self.qmax[g])
        if block == "ramp_dn":
            return dict(
                ramp_down=self.ramp_down[g], shutdown_ramp=self.shutdown_ramp[g]
            )
        if block == "ramp_up":
            return dict(ramp_up=self.ramp_up[g], startup_ramp=self.startup_ramp[g])
        return {}

    def rows(self):
        """List every coupling row, in flattening order.

        Returns
        -------
        rows : `list` [`CouplingRow`]
        """
        return [
            CouplingRow(
                kind=BLOCK_KINDS[name],
                block=name,
                index=index,
                penalty_class=BLOCK_PENALTY[name],
                coefficients=self._coefficients(name, index),
            )
            for name, shape in self.block_shapes.items()
            for index in np.ndindex(*shape)
        ]

    def check_shapes(self, x, u, xbar):
        """Raise ValueError if the blocks do not match the layout."""
        T, G, L, B = self.n_periods, self.n_generators, self.n_branches, self.n_buses
        expected = dict(
            u=((T, G, 3), u),
            p=((T, G), x.p),
            q=((T, G), x.q),
            p_hat=((T, G), x.p_hat),
            slack=((T, G, 6), x.slack),
            line_w=((T, L, 2), x.line_w),
            line_theta=((T, L, 2), x.line_theta),
            line_flow=((T, L, 4), x.line_flow),
            bus_w=((T, B), x.bus_w),
            ubar=((T, G, 3), xbar.ubar),
            p_bar=((T, G), xbar.p_bar),
            q_bar=((T, G), xbar.q_bar),
            flow_bar=((T, L, 4), xbar.flow_bar),
            w_bar=((T, B), xbar.w_bar),
        )
        for name, (shape, value) in expected.items():
            if np.shape(value) != shape:
                raise ValueError(
                    f"dimension mismatch: {name} has shape {np.shape(value)}; "
                    f"expected {shape}"
                )

    def x_terms(self, x, u):
        """The ``A x`` part of every row."""
        slack = x.slack
        return RowBlocks(
            uc_dup=np.asarray(u, dtype=float).copy(),
            p_lo=x.p - slack[..., 0],
            p_hi=x.p + slack[..., 1],
            q_lo=x.q - slack[..., 2],
            q_hi=x.q + slack[..., 3],
            ramp_dn=x.p - x.p_hat - slack[..., 4],
            ramp_up=x.p - x.p_hat + slack[..., 5],
            ramp_copy=x.p_hat[1:].copy(),
            gen=np.stack([x.p, x.q], axis=-1),
            flow=x.line_flow.copy(),
            volt_line=x.line_w.copy(),
            volt_bus=x.bus_w.copy(),
        )

    def bar_terms(self, xbar):
        """The ``B xbar`` part of every row, with the constant terms.

        The only constant is the initial state entering the first
        period's ramp-up row.
        """
        on = xbar.ubar[..., 0]
        su = xbar.ubar[..., 1]
        sd = xbar.ubar[..., 2]
        on_prev = np.concatenate([self.initial_on[np.newaxis], on[:-1]])
        return RowBlocks(
            uc_dup=-xbar.ubar,
            p_lo=-self.pmin * on,
            p_hi=-self.pmax * on,
            q_lo=-self.qmin * on,
            q_hi=-self.qmax * on,
            ramp_dn=self.ramp_down * on + self.shutdown_ramp * sd,
            ramp_up=-self.ramp_up * on_prev - self.startup_ramp * su,
            ramp_copy=-xbar.p_bar[:-1],
            gen=-np.stack([xbar.p_bar, xbar.q_bar], axis=-1),
            flow=-xbar.flow_bar,
            volt_line=-xbar.w_bar[:, self.line_ends],
            volt_bus=-xbar.w_bar,
        )

    def ubar_coefficients(self):
        """Coefficients of the relaxed commitment in the rows it enters.

        Returns
        -------
        coefficients : `numpy.ndarray`
            Shape (G, 9T, 3T): for each generator, rows in the order of
            `gather_ubar_rows` and variables ``ubar[t, k]`` at column
            ``3 t + k``.
        """
        T, G = self.n_periods, self.n_generators
        coefficients = np.zeros((G, 9 * T, 3 * T))
        t = np.arange(T)
        on, su, sd = 3 * t, 3 * t + 1, 3 * t + 2
        coefficients[:, np.arange(3 * T), np.arange(3 * T)] = -1.0
        for block, data in enumerate((-self.pmin, -self.pmax, -self.qmin, -self.qmax)):
            coefficients[:, (3 + block) * T + t, on] = data[:, np.newaxis]
        ramp_dn = 7 * T + t
        coefficients[:, ramp_dn, on] = self.ramp_down[:, np.newaxis]
        coefficients[:, ramp_dn, sd] = self.shutdown_ramp[:, np.newaxis]
        ramp_up = 8 * T + t
        coefficients[:, ramp_up[1:], on[:-1]] = -self.ramp_up[:, np.newaxis]
        coefficients[:, ramp_up, su] = -self.startup_ramp[:, np.newaxis]
        return coefficients

    def gather_ubar_rows(self, blocks):
        """Collect, per generator, the rows that contain the relaxed
        commitment.

        Parameters
        ----------
        blocks : `RowBlocks`

        Returns
        -------
        rows : `numpy.ndarray`
            Shape (G, 9T): ``uc_dup`` (period-major), then ``p_lo``,
            ``p_hi``, ``q_lo``, ``q_hi``, ``ramp_dn`` and ``ramp_up``.
        """
        T, G = self.n_periods, self.n_generators
        return np.concatenate(
            [blocks.uc_dup.transpose(1, 0, 2).reshape(G, 3 * T)]
            + [
                getattr(blocks, name).T
                for name in ("p_lo", "p_hi", "q_lo", "q_hi", "ramp_dn", "ramp_up")
            ],
            axis=1,
        )

    def residuals(self, x, u, xbar, z=None):
        """Compute ``r = A x + B xbar + z`` blockwise.

        Parameters
        ----------
        x : `OpfVars`
        u : `numpy.ndarray`
            Commitment (on, su, sd), shape (T, G, 3).
        xbar : `BarVars`
        z : `RowBlocks`, optional
            Artificial variables; omitted means zero.

        Returns
        -------
        r : `RowBlocks`

        Raises
        ------
        ValueError
            If a block has the wrong shape.
        """
        self.check_shapes(x, u, xbar)
        r = self.x_terms(x, u) + self.bar_terms(xbar)
        if z is not None:
            r = r + z
        return r

    def primal_infeasibility(self, x, u, xbar):
        """Largest absolute coupling row violation, with z excluded."""
        return self.residuals(x, u, xbar).max_abs()

    def dispatch_residuals(self, p, q, u):
        """Largest violations of the generator limits by a dispatch.

        Unlike the coupling rows, these use no slack variables or local
        copies: the limits are evaluated on the dispatch itself, with the
        previous period's output taken from ``p`` (``p0`` before the first
        period).

        Parameters
        ----------
        p, q : `numpy.ndarray`
            Real and reactive output (per-unit), shape (T, G).
        u : `numpy.ndarray`
            Commitment (on, su, sd), shape (T, G, 3).

        Returns
        -------
        residuals : `dict` [`str`, `float`]
            ``box``: output outside ``[min, max] * on``;
            ``ramp``: ramp-down or ramp-up limit exceeded. Per-unit, and
            zero when the dispatch is feasible.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        u = np.asarray(u, dtype=float)
        on, su, sd = u[..., 0], u[..., 1], u[..., 2]
        on_prev = np.concatenate([self.initial_on[np.newaxis], on[:-1]])
        p_prev = np.concatenate([self.p0[np.newaxis], p[:-1]])
        box = np.stack(
            [
                self.pmin * on - p,
                p - self.pmax * on,
                self.qmin * on - q,
                q - self.qmax * on,
            ]
        )
        ramp = np.stack(
            [
                p_prev - p - self.ramp_down * on - self.shutdown_ramp * sd,
                p - p_prev - self.ramp_up * on_prev - self.startup_ramp * su,
            ]
        )
        return dict(
            box=float(np.max(box, initial=0.0)),
            ramp=float(np.max(ramp, initial=0.0)),
        )

    def objective(self, x, u):
        """Generation cost plus commitment cost ($)."""
        u = np.asarray(u, dtype=float)
        generation = np.sum(self.c2 * x.p * x.p + self.c1 * x.p)
        commitment = np.sum(
            self.op_cost * u[..., 0]
            + self.su_cost * u[..., 1]
            + self.sd_cost * u[..., 2]
        )
        return float(generation + commitment)

    def augmented_lagrangian(self, x, u, xbar, z, y, lam, beta, rho):
        """Value of the two-level augmented Lagrangian.

        Parameters
        ----------
        x, u, xbar
            Primal blocks as in `residuals`.
        z, y, lam, rho : `RowBlocks`
            Artificial variables, inner multipliers, outer multipliers
            and penalties.
        beta : `float`
            Penalty on ``z``.
        """
        r = self.residuals(x, u, xbar, z)
        flat_r = r.flatten()
        flat_z = z.flatten()
        return float(
            self.objective(x, u)
            + np.dot(lam.flatten(), flat_z)
            + 0.5 * beta * np.dot(flat_z, flat_z)
            + np.dot(y.flatten(), flat_r)
            + 0.5 * np.dot(rho.flatten(), flat_r * flat_r)
        )


def layout(problem):
    """Build the `Formulation` of a problem."""
    return Formulation(problem)


def residuals(formulation, x, u, xbar, z=None):
    """Compute ``A x + B xbar + z``; see `Formulation.residuals`."""
    return formulation.residuals(x, u, xbar, z)


def primal_infeasibility(formulation, x, u, xbar):
    """Largest absolute coupling row violation."""
    return formulation.primal_infeasibility(x, u, xbar)


def objective(formulation, x, u):
    """Generation plus commitment cost."""
    return formulation.objective(x, u)
