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
    "DpError",
    "DpTable",
    "commitment_arrays",
    "infer_transitions",
    "stage_costs",
    "schedule_cost",
    "dp_solve_batch",
    "dp_solve",
    "dp_table",
    "dp_oracle",
    "check_uc_schedule",
    "random_dp_instances",
    "bench_dp",
]

import dataclasses
import time

import astropy.table
import numpy as np

from .constants import ErrorCode

# Largest horizon dp_oracle will enumerate.
MAX_ORACLE_HORIZON = 20


class DpError(ValueError):
    """Raised for inconsistent commitment data or an infeasible schedule."""

    code = ErrorCode.DP_INFEASIBLE


@dataclasses.dataclass
class DpTable:
    """Backward-induction table for one generator.

    ``cost[t, s]`` is the optimal cost of periods ``t..T-1`` when the unit
    was in state ``s`` in period ``t - 1`` and is free to switch at ``t``;
    ``cost[T, s] = 0``.

    Only the stay/switch decision of each entry is stored, which keeps the
    backward pass linear in the horizon; `trajectory` rebuilds the optimal
    suffix of any entry from the decisions, and `trajectories` materializes
    all of them.
    """

    costs: np.ndarray
    """Stage costs, shape (T, 2, 2), indexed [t, previous state, state]."""
    cost: np.ndarray
    """Optimal cost-to-go, shape (T + 1, 2)."""
    switch: np.ndarray
    """True where switching is optimal, shape (T, 2)."""
    window: np.ndarray
    """Forced stay after switching into state s: (min_down, min_up)."""

    @property
    def horizon(self):
        return self.costs.shape[0]

    def trajectory(self, t, s):
        """Return the optimal states of periods ``t..T-1``.

        Parameters
        ----------
        t : `int`
            First period (0-based).
        s : `int`
            State in period ``t - 1``.

        Returns
        -------
        states : `numpy.ndarray`
            Array of 0/1 of length ``T - t``.
        """
        states = np.empty(self.horizon - t, dtype=np.int8)
        state = s
        free_from = t
        for tau in range(t, self.horizon):
            if tau >= free_from and self.switch[tau, state]:
                state = 1 - state
                free_from = tau + self.window[state]
            states[tau - t] = state
        return states

    def trajectories(self):
        """Materialize every optimal suffix, keyed by ``(t, s)``."""
        return {
            (t, s): self.trajectory(t, s)
            for t in range(self.horizon + 1)
            for s in (0, 1)
        }


def commitment_arrays(params):
    """Stack the commitment data of a sequence of `UcParams`-like objects.

    Parameters
    ----------
    params : sequence
        Objects with ``min_up``, ``min_down``, ``initial_on``, ``forced_on``
        and ``forced_off`` attributes.

    Returns
    -------
    arrays : `dict` [`str`, `numpy.ndarray`]
        Integer arrays keyed by attribute name.
    """
    names = ("min_up", "min_down", "initial_on", "forced_on", "forced_off")
    return {
        name: np.array([int(getattr(item, name)) for item in params], dtype=int)
        for name in names
    }


def infer_transitions(u_on, initial_on):
    """Infer startup and shutdown indicators from on/off states.

    Parameters
    ----------
    u_on : `numpy.ndarray`
        States, shape (T, ...).
    initial_on : array-like
        State before the first period, broadcastable to ``u_on[0]``.

    Returns
    -------
    u : `numpy.ndarray`
        Shape (T, ..., 3) with components (on, su, sd).
    """
    u_on = np.asarray(u_on, dtype=float)
    prev = np.concatenate(
        [
            np.broadcast_to(np.asarray(initial_on, dtype=float), u_on[:1].shape),
            u_on[:-1],
        ]
    )
    return np.stack(
        [u_on, np.maximum(0.0, u_on - prev), np.maximum(0.0, prev - u_on)], axis=-1
    )


def stage_costs(ubar, y, z, rho_uc, op_cost=0.0, su_cost=0.0, sd_cost=0.0):
    """Compute the stage cost table of the commitment subproblem.

    The entry for a transition ``s_prev -> s`` is the commitment cost
    of state ``s`` plus the augmented Lagrangian terms of the three
    duplicate rows, with the startup and shutdown indicators inferred
    from the transition.

    Parameters
    ----------
    ubar : `numpy.ndarray`
        Relaxed duplicates (on, su, sd), shape (..., T, 3).
    y, z : `numpy.ndarray`
        Multipliers and artificial variables of the duplicate rows,
        same shape as ``ubar``.
    rho_uc : `float`
        Penalty of the duplicate rows.
    op_cost, su_cost, sd_cost : `float` or `numpy.ndarray`
        Commitment cost coefficients, broadcastable to ``ubar.shape[:-2]``.

    Returns
    -------
    costs : `numpy.ndarray`
        Shape (..., T, 2, 2), indexed [..., t, previous state, state].
    """
    ubar = np.asarray(ubar, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    op_cost = np.asarray(op_cost, dtype=float)[..., None]
    su_cost = np.asarray(su_cost, dtype=float)[..., None]
    sd_cost = np.asarray(sd_cost, dtype=float)[..., None]
    costs = np.empty(ubar.shape[:-1] + (2, 2))
    for s_prev in (0, 1):
        for s in (0, 1):
            u = np.array([s, max(0, s - s_prev), max(0, s_prev - s)], dtype=float)
            diff = u - ubar + z
            penalty = np.sum(y * diff + 0.5 * rho_uc * diff * diff, axis=-1)
            commitment = op_cost * u[0] + su_cost * u[1] + sd_cost * u[2]
            costs[..., s_prev, s] = commitment + penalty
    return costs


def schedule_cost(costs, schedule, initial_on):
    """Sum the stage costs along a schedule.

    Parameters
    ----------
    costs : `numpy.ndarray`
        Shape (T, 2, 2).
    schedule : array-like
        0/1 states, length T.
    initial_on : `int`
        State before the first period.
    """
    schedule = np.asarray(schedule, dtype=int)
    prev = np.concatenate([[int(initial_on)], schedule[:-1]])
    return float(np.sum(costs[np.arange(len(schedule)), prev, schedule]))


def _check_obligations(horizon, initial_on, forced_on, forced_off):
    if np.any((forced_on < 0) | (forced_off < 0)):
        raise DpError("initial obligations must be nonnegative")
    if np.any((forced_on > horizon) | (forced_off > horizon)):
        raise DpError(f"initial obligation exceeds the horizon T={horizon}")
    if np.any((forced_on > 0) & (initial_on == 0)):
        raise DpError("forced_on > 0 requires the unit to be initially on")
    if np.any((forced_off > 0) & (initial_on == 1)):
        raise DpError("forced_off > 0 requires the unit to be initially off")


def _backward(costs, window):
    """Backward pass over a batch: returns (value, switch, cumulative)."""
    n_gen, horizon = costs.shape[:2]
    gens = np.arange(n_gen)
    stay = np.stack([costs[:, :, 0, 0], costs[:, :, 1, 1]], axis=-1)
    cumulative = np.zeros((n_gen, horizon + 1, 2))
    cumulative[:, 1:] = np.cumsum(stay, axis=1)
    value = np.zeros((horizon + 1, 2, n_gen))
    switch = np.zeros((horizon, 2, n_gen), dtype=bool)
    for t in range(horizon - 1, -1, -1):
        for s in (0, 1):
            other = 1 - s
            c_stay = costs[:, t, s, s] + value[t + 1, s]
            end = np.minimum(t + window[:, other], horizon)
            c_switch = (
                costs[:, t, s, other]
                + (cumulative[gens, end, other] - cumulative[:, t + 1, other])
                + value[end, other, gens]
            )
            # ties stay
            take = c_switch < c_stay
            switch[t, s] = take
            value[t, s] = np.where(take, c_switch, c_stay)
    return value, switch, cumulative


def dp_solve_batch(costs, min_up, min_down, initial_on, forced_on=0, forced_off=0):
    """Solve the commitment subproblems of a batch of generators.

    Parameters
    ----------
    costs : `numpy.ndarray`
        Stage costs, shape (G, T, 2, 2).
    min_up, min_down : array-like of `int`
        Minimum up and down times, shape (G,).
    initial_on : array-like of `int`
        States before the first period, shape (G,).
    forced_on, forced_off : array-like of `int`, optional
        Remaining forced-on or forced-off periods at the start of the
        horizon, shape (G,).

    Returns
    -------
    schedules : `numpy.ndarray`
        Optimal 0/1 states, shape (G, T), dtype int8.
    totals : `numpy.ndarray`
        Optimal total stage cost, shape (G,).

    Raises
    ------
    DpError
        If the initial obligations are inconsistent.
    """
    costs = np.asarray(costs, dtype=float)
    n_gen, horizon = costs.shape[:2]

    def as_array(value):
        return np.broadcast_to(np.asarray(value, dtype=int), (n_gen,))

    min_up = as_array(min_up)
    min_down = as_array(min_down)
    initial_on = as_array(initial_on)
    forced_on = as_array(forced_on)
    forced_off = as_array(forced_off)
    if np.any((min_up < 1) | (min_down < 1)):
        raise DpError("minimum up and down times must be at least 1")
    _check_obligations(horizon, initial_on, forced_on, forced_off)

    gens = np.arange(n_gen)
    window = np.stack([min_down, min_up], axis=1)
    value, switch, cumulative = _backward(costs, window)

    prefix = np.maximum(forced_on, forced_off)
    totals = cumulative[gens, prefix, initial_on] + value[prefix, initial_on, gens]

    schedules = np.empty((n_gen, horizon), dtype=np.int8)
    state = initial_on.copy()
    free_from = prefix.copy()
    for t in range(horizon):
        switched = switch[t, state, gens] & (t >= free_from)
        state = np.where(switched, 1 - state, state)
        free_from = np.where(switched, t + window[gens, state], free_from)
        schedules[:, t] = state
    return schedules, totals


def dp_solve(costs, params):
    """Solve the commitment subproblem of one generator.

    Parameters
    ----------
    costs : `numpy.ndarray`
        Stage costs, shape (T, 2, 2).
    params : `UcParams`
        Commitment parameters of the generator.

    Returns
    -------
    schedule : `numpy.ndarray`
        Optimal 0/1 states, length T.
    cost : `float`
        Optimal total stage cost.
    """
    arrays = commitment_arrays([params])
    schedules, totals = dp_solve_batch(np.asarray(costs)[np.newaxis], **arrays)
    return schedules[0], float(totals[0])


def dp_table(costs, params):
    """Build the backward-induction table of one generator."""
    costs = np.asarray(costs, dtype=float)
    window = np.array([[int(params.min_down), int(params.min_up)]])
    value, switch, _ = _backward(costs[np.newaxis], window)
    return DpTable(
        costs=costs, cost=value[:, :, 0], switch=switch[:, :, 0], window=window[0]
    )


def _window_violations(u, initial_on, min_up, min_down):
    """Boolean arrays (..., T) flagging min-up and min-down violations."""
    prev = np.concatenate(
        [np.full(u.shape[:-1] + (1,), initial_on, dtype=u.dtype), u[..., :-1]], axis=-1
    )
    startup = np.maximum(0, u - prev)
    shutdown = np.maximum(0, prev - u)
    zeros = np.zeros(u.shape[:-1] + (1,), dtype=int)
    cum_su = np.concatenate([zeros, np.cumsum(startup, axis=-1)], axis=-1)
    cum_sd = np.concatenate([zeros, np.cumsum(shutdown, axis=-1)], axis=-1)
    t = np.arange(u.shape[-1])
    # Windows starting before the horizon are clipped to its first period.
    up_sum = cum_su[..., t + 1] - cum_su[..., np.maximum(0, t - min_up + 1)]
    down_sum = cum_sd[..., t + 1] - cum_sd[..., np.maximum(0, t - min_down + 1)]
    return up_sum > u, down_sum > 1 - u


def check_uc_schedule(u_on, params):
    """Check one generator's schedule against the commitment constraints.

    The constraints are the initial obligation, minimum up and down times
    and binary states; startups and shutdowns are inferred from the
    states and ``params.initial_on``.

    Parameters
    ----------
    u_on : array-like
        States, length T.
    params : `UcParams`

    Returns
    -------
    violations : `list` [`str`]
        Empty if the schedule is feasible.
    """
    u = np.asarray(u_on)
    violations = []
    if not np.all((u == 0) | (u == 1)):
        return ["states are not binary"]
    u = u.astype(int)
    horizon = len(u)
    if params.forced_on > 0 and np.any(u[: params.forced_on] != 1):
        violations.append(f"must be on in periods 1..{params.forced_on}")
    if params.forced_off > 0 and np.any(u[: params.forced_off] != 0):
        violations.append(f"must be off in periods 1..{params.forced_off}")
    up_bad, down_bad = _window_violations(
        u, int(params.initial_on), int(params.min_up), int(params.min_down)
    )
    for t in range(horizon):
        if up_bad[t]:
            violations.append(f"period {t + 1}: minimum up time {params.min_up}")
        if down_bad[t]:
            violations.append(f"period {t + 1}: minimum down time {params.min_down}")
    return violations


def dp_oracle(costs, params):
    """Solve one commitment subproblem by exhaustive enumeration.

    Schedules are enumerated in lexicographic order and the first
    minimizer is returned.

    Parameters
    ----------
    costs : `numpy.ndarray`
        Stage costs, shape (T, 2, 2), with T <= 20.
    params : `UcParams`

    Returns
    -------
    schedule : `numpy.ndarray`
    cost : `float`

    Raises
    ------
    ValueError
        If T > 20.
    DpError
        If no schedule is feasible.
    """
    costs = np.asarray(costs, dtype=float)
    horizon = costs.shape[0]
    if horizon > MAX_ORACLE_HORIZON:
        raise ValueError(f"T={horizon} > {MAX_ORACLE_HORIZON} is too long to enumerate")
    initial_on = int(params.initial_on)
    codes = np.arange(2**horizon)
    shifts = np.arange(horizon - 1, -1, -1)
    schedules = (codes[:, None] >> shifts[None, :]) & 1

    feasible = np.ones(len(codes), dtype=bool)
    if params.forced_on > 0:
        feasible &= np.all(schedules[:, : params.forced_on] == 1, axis=1)
    if params.forced_off > 0:
        feasible &= np.all(schedules[:, : params.forced_off] == 0, axis=1)
    up_bad, down_bad = _window_violations(
        schedules, initial_on, int(params.min_up), int(params.min_down)
    )
    feasible &= ~np.any(up_bad | down_bad, axis=1)
    if not feasible.any():
        raise DpError("no feasible schedule")

    prev = np.concatenate(
        [np.full((len(codes), 1), initial_on), schedules[:, :-1]], axis=1
    )
    totals = np.sum(costs[np.arange(horizon), prev, schedules], axis=1)
    totals = np.where(feasible, totals, np.inf)
    best = int(np.argmin(totals))
    return schedules[best].astype(np.int8), float(totals[best])


def random_dp_instances(rng, n_generators, horizon, max_window=4):
    """Draw random commitment subproblems.

    Parameters
    ----------
    rng : `numpy.random.Generator`
    n_generators : `int`
    horizon : `int`
    max_window : `int`, optional
        Largest minimum up or down time.

    Returns
    -------
    instance : `dict`
        Keyword arguments for `dp_solve_batch`.
    """
    costs = rng.uniform(-1.0, 1.0, size=(n_generators, horizon, 2, 2))
    min_up = rng.integers(1, max_window + 1, size=n_generators)
    min_down = rng.integers(1, max_window + 1, size=n_generators)
    initial_on = rng.integers(0, 2, size=n_generators)
    obligation = rng.integers(0, min(max_window, horizon) + 1, size=n_generators)
    return dict(
        costs=costs,
        min_up=min_up,
        min_down=min_down,
        initial_on=initial_on,
        forced_on=np.where(initial_on == 1, obligation, 0),
        forced_off=np.where(initial_on == 0, obligation, 0),
    )


def bench_dp(n_generators, horizons, seed=0, repetitions=5):
    """Time `dp_solve_batch` on random instances.

    Parameters
    ----------
    n_generators : sequence of `int`
        Batch sizes.
    horizons : sequence of `int`
        Horizons.
    seed : `int`, optional
        Seed of the instance stream.
    repetitions : `int`, optional
        Timings per instance; the median is reported.

    Returns
    -------
    table : `astropy.table.Table`
        Columns ``n_generators``, ``T`` and ``wall_time`` (seconds).
    """
    rng = np.random.default_rng(seed)
    rows = []
    for n_gen in n_generators:
        for horizon in horizons:
            instance = random_dp_instances(rng, n_gen, horizon)
            times = []
            for _ in range(repetitions):
                t0 = time.perf_counter()
                dp_solve_batch(**instance)
                times.append(time.perf_counter() - t0)
            rows.append((n_gen, horizon, float(np.median(times))))
    return astropy.table.Table(
        rows=rows,
        names=("n_generators", "T", "wall_time"),
        dtype=(int, int, float),
    )
