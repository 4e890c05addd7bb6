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
    "ScenarioError",
    "UcParams",
    "DemandProfile",
    "ScheduleProblem",
    "ScenarioConfig",
    "build_problem",
    "default_profile",
    "read_profile_csv",
    "relaxed_dispatch",
    "warm_start_uc",
    "load_scenario_file",
    "scenario_profile",
]

import dataclasses
import logging
import pathlib

import astropy.io.ascii
import jsonschema
import numpy as np
import scipy.optimize
import yaml

from .config_schema import CONFIG_SCHEMA
from .constants import (
    DEFAULT_DISCOUNT,
    DEFAULT_MIN_DOWN,
    DEFAULT_MIN_UP,
    DEFAULT_RAMP_FRACTION,
    DEFAULT_RATE,
    DEFAULT_WARM_START_THRESHOLD,
    ErrorCode,
)
from .uc_dp import commitment_arrays, dp_solve_batch

# Rules for the dispatch before the first period.
INITIAL_DISPATCH_RULES = ("demand-share", "midpoint")

# Peaks of the synthetic diurnal profile: (hour, relative amplitude, width).
_PROFILE_PEAKS = ((8.5, 0.7, 2.5), (18.5, 1.0, 3.0))
_PROFILE_RANGE = (0.6, 1.0)


class ScenarioError(ValueError):
    """Raised for an invalid demand profile or commitment parameters."""

    code = ErrorCode.SCENARIO_INVALID


@dataclasses.dataclass(frozen=True)
class UcParams:
    """Commitment parameters of one generator.

    Ramp quantities are per-unit per period; costs are in $.
    """

    min_up: int
    """Minimum number of periods on after a startup."""
    min_down: int
    """Minimum number of periods off after a shutdown."""
    ramp_up: float
    ramp_down: float
    startup_ramp: float
    """Largest output in the period of a startup."""
    shutdown_ramp: float
    """Largest output in the period before a shutdown."""
    initial_on: bool = True
    """State before the first period."""
    forced_on: int = 0
    """Remaining periods the unit must stay on; only if initially on."""
    forced_off: int = 0
    """Remaining periods the unit must stay off; only if initially off."""
    op_cost: float = 0.0
    """No-load cost charged in every committed period."""
    su_cost: float = 0.0
    sd_cost: float = 0.0

    def check(self, horizon):
        """Raise `ScenarioError` if the parameters are invalid for a horizon.
        """
        if self.min_up < 1 or self.min_down < 1:
            raise ScenarioError(
                f"min_up={self.min_up} and min_down={self.min_down} must be >= 1"
            )
        if self.min_up > horizon or self.min_down > horizon:
            raise ScenarioError(
                f"min_up={self.min_up} or min_down={self.min_down} "
                f"exceeds the horizon T={horizon}"
            )
        ramps = (self.ramp_up, self.ramp_down, self.startup_ramp, self.shutdown_ramp)
        if min(ramps) < 0:
            raise ScenarioError(f"ramp limits {ramps} must be nonnegative")
        if self.forced_on < 0 or self.forced_off < 0:
            raise ScenarioError("initial obligations must be nonnegative")
        if self.forced_on > horizon or self.forced_off > horizon:
            raise ScenarioError(
                f"initial obligation exceeds the horizon T={horizon}"
            )
        if self.forced_on > 0 and not self.initial_on:
            raise ScenarioError("forced_on > 0 requires initial_on")
        if self.forced_off > 0 and self.initial_on:
            raise ScenarioError("forced_off > 0 requires not initial_on")


@dataclasses.dataclass(frozen=True, eq=False)
class DemandProfile:
    """Per-period demand scaling."""

    factors: np.ndarray
    """Scaling factor of each period; all positive."""
    discount: float = DEFAULT_DISCOUNT
    """Factor applied to every period."""

    def __post_init__(self):
        factors = np.array(self.factors, dtype=float).ravel()
        if factors.size == 0:
            raise ScenarioError("the demand profile is empty")
        if not np.all(np.isfinite(factors)) or np.any(factors <= 0):
            raise ScenarioError("demand factors must be finite and positive")
        if not self.discount > 0:
            raise ScenarioError(f"discount={self.discount} must be positive")
        factors.flags.writeable = False
        object.__setattr__(self, "factors", factors)

    @property
    def horizon(self):
        return len(self.factors)


@dataclasses.dataclass(frozen=True, eq=False)
class ScheduleProblem:
    """A network case expanded over a horizon."""

    grid: object
    """The `GridCase`."""
    profile: DemandProfile
    p_demand: np.ndarray
    """Real power demand, shape (T, B), per-unit."""
    q_demand: np.ndarray
    """Reactive power demand, shape (T, B), per-unit."""
    uc: tuple
    """`UcParams` of each generator."""
    p0: np.ndarray
    """Dispatch before the first period, shape (G,), per-unit."""

    @property
    def horizon(self):
        return self.p_demand.shape[0]


@dataclasses.dataclass
class ScenarioConfig:
    """Contents of a scenario file."""

    horizon: int = None
    discount: float = DEFAULT_DISCOUNT
    profile: pathlib.Path = None
    """Profile CSV, resolved against the scenario file directory."""
    initial_dispatch: str = "demand-share"
    default_rate: float = DEFAULT_RATE
    warm_start_threshold: float = DEFAULT_WARM_START_THRESHOLD
    uc_defaults: dict = dataclasses.field(default_factory=dict)
    generators: dict = dataclasses.field(default_factory=dict)
    """Per-generator overrides keyed by generator index."""
    solver: dict = dataclasses.field(default_factory=dict)


def default_profile(horizon, discount=DEFAULT_DISCOUNT):
    """Return the synthetic double-peaked daily demand profile.

    The profile has a morning and an evening peak, spans [0.6, 1.0]
    and repeats every 24 periods.

    Parameters
    ----------
    horizon : `int`
        Number of periods; must be positive.
    discount : `float`, optional

    Returns
    -------
    profile : `DemandProfile`
    """
    if horizon < 1:
        raise ScenarioError(f"horizon={horizon} must be >= 1")
    hours = np.arange(24, dtype=float)
    raw = np.zeros(24)
    for center, amplitude, width in _PROFILE_PEAKS:
        distance = np.abs(hours - center)
        distance = np.minimum(distance, 24 - distance)
        raw += amplitude * np.exp(-0.5 * (distance / width) ** 2)
    low, high = _PROFILE_RANGE
    day = low + (high - low) * (raw - raw.min()) / (raw.max() - raw.min())
    return DemandProfile(factors=np.resize(day, horizon), discount=discount)


def read_profile_csv(path, discount=DEFAULT_DISCOUNT):
    """Read a demand profile with one factor per line.

    Lines starting with ``#`` are comments.

    Parameters
    ----------
    path : `str` or `pathlib.Path`
    discount : `float`, optional

    Returns
    -------
    profile : `DemandProfile`

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    ScenarioError
        If the file holds no factors or a non-numeric or nonpositive one.
    """
    path = pathlib.Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"profile file {str(path)!r} not found")
    try:
        table = astropy.io.ascii.read(
            path, format="no_header", names=["factor"], guess=False
        )
        factors = np.asarray(table["factor"], dtype=float)
    except (ValueError, astropy.io.ascii.InconsistentTableError) as e:
        raise ScenarioError(f"cannot read profile {str(path)!r}: {e}") from e
    return DemandProfile(factors=factors, discount=discount)


def _initial_dispatch(grid, p_demand, uc, rule, overrides):
    pmin = np.array([gen.Pmin for gen in grid.generators])
    pmax = np.array([gen.Pmax for gen in grid.generators])
    if rule == "midpoint":
        p0 = 0.5 * (pmin + pmax)
    elif rule == "demand-share":
        share = pmax / pmax.sum() if pmax.sum() > 0 else np.zeros_like(pmax)
        p0 = np.clip(share * p_demand[0].sum(), pmin, pmax)
    else:
        raise ScenarioError(
            f"initial_dispatch={rule!r} not one of {INITIAL_DISPATCH_RULES}"
        )
    p0 = np.where([params.initial_on for params in uc], p0, 0.0)
    for ind, value in overrides.items():
        p0[ind] = value
    return p0


def build_problem(
    grid,
    profile,
    uc_defaults=None,
    *,
    generator_overrides=None,
    initial_dispatch="demand-share",
):
    """Expand a network case over the horizon of a demand profile.

    Demand in period t is ``discount * factor[t]`` times the base-case
    demand, for both real and reactive power. Commitment parameters come
    from ``generator_overrides``, then ``uc_defaults``, then the module
    defaults: ramp limits of 10% of capacity, startup and shutdown ramps
    of ``max(Pmin, ramp_up)``, minimum up and down times of
    ``min(2, T)`` periods, initially on with no obligation, and costs
    from the case.

    Parameters
    ----------
    grid : `GridCase`
    profile : `DemandProfile`
    uc_defaults : `dict`, optional
        `UcParams` field values applied to every generator.
    generator_overrides : `dict` [`int`, `dict`], optional
        `UcParams` field values per generator index; the extra key
        ``initial_dispatch_mw`` sets that generator's initial dispatch.
    initial_dispatch : `str`, optional
        "demand-share" splits the first-period demand in proportion to
        capacity; "midpoint" uses the middle of [Pmin, Pmax].

    Returns
    -------
    problem : `ScheduleProblem`

    Raises
    ------
    ScenarioError
        If a parameter is invalid, for instance a minimum up time longer
        than the horizon.
    """
    uc_defaults = dict(uc_defaults or {})
    generator_overrides = {
        int(key): dict(value) for key, value in (generator_overrides or {}).items()
    }
    horizon = profile.horizon
    for ind in generator_overrides:
        if not 0 <= ind < grid.n_generators:
            raise ScenarioError(f"no generator with index {ind}")

    dispatch_overrides = {}
    uc = []
    for ind, gen in enumerate(grid.generators):
        overrides = dict(generator_overrides.get(ind, {}))
        if "initial_dispatch_mw" in overrides:
            dispatch_overrides[ind] = (
                overrides.pop("initial_dispatch_mw") / grid.base_mva
            )
        ramp = DEFAULT_RAMP_FRACTION * gen.Pmax
        fields = dict(
            min_up=min(DEFAULT_MIN_UP, horizon),
            min_down=min(DEFAULT_MIN_DOWN, horizon),
            ramp_up=ramp,
            ramp_down=ramp,
            initial_on=True,
            forced_on=0,
            forced_off=0,
            op_cost=gen.c0,
            su_cost=gen.startup_cost,
            sd_cost=gen.shutdown_cost,
        )
        fields.update(uc_defaults)
        fields.update(overrides)
        fields.setdefault("startup_ramp", max(gen.Pmin, fields["ramp_up"]))
        fields.setdefault("shutdown_ramp", max(gen.Pmin, fields["ramp_up"]))
        try:
            params = UcParams(**fields)
        except TypeError as e:
            raise ScenarioError(f"generator {ind}: {e}") from e
        try:
            params.check(horizon)
        except ScenarioError as e:
            raise ScenarioError(f"generator {ind}: {e}") from e
        uc.append(params)

    scale = profile.discount * profile.factors
    p_demand = scale[:, np.newaxis] * np.array([bus.Pd for bus in grid.buses])
    q_demand = scale[:, np.newaxis] * np.array([bus.Qd for bus in grid.buses])
    p0 = _initial_dispatch(grid, p_demand, uc, initial_dispatch, dispatch_overrides)
    return ScheduleProblem(
        grid=grid,
        profile=profile,
        p_demand=p_demand,
        q_demand=q_demand,
        uc=tuple(uc),
        p0=p0,
    )


def relaxed_dispatch(problem, log=None):
    """Solve the relaxed multiperiod dispatch that seeds the warm start.

    Every unit is on with ``0 <= p <= Pmax``; each period balances total
    demand plus shunt consumption at nominal voltage, ramps are limited
    from the initial dispatch onward, and network losses are ignored.

    Parameters
    ----------
    problem : `ScheduleProblem`
    log : `logging.Logger`, optional

    Returns
    -------
    dispatch : `numpy.ndarray`
        Shape (T, G), per-unit.
    """
    log = log or logging.getLogger("UcAcopf")
    grid = problem.grid
    horizon, n_gen = problem.horizon, grid.n_generators
    c2 = np.tile([gen.c2 for gen in grid.generators], horizon)
    c1 = np.tile([gen.c1 for gen in grid.generators], horizon)
    pmax = np.array([gen.Pmax for gen in grid.generators])
    ramp_up = np.array([params.ramp_up for params in problem.uc])
    ramp_down = np.array([params.ramp_down for params in problem.uc])
    demand = problem.p_demand.sum(axis=1) + sum(bus.Gs for bus in grid.buses)

    n_var = horizon * n_gen
    balance = np.kron(np.eye(horizon), np.ones((1, n_gen)))
    # difference[t] = p[t] - p[t - 1], with p[-1] the initial dispatch
    difference = np.eye(n_var) - np.eye(n_var, k=-n_gen)
    initial = np.zeros(n_var)
    initial[:n_gen] = problem.p0
    ramp_matrix = np.vstack([-difference, difference])
    ramp_offset = np.concatenate(
        [np.tile(ramp_up, horizon) + initial, np.tile(ramp_down, horizon) - initial]
    )

    def cost(x):
        return float(np.sum(c2 * x * x + c1 * x)), 2 * c2 * x + c1

    share = pmax / pmax.sum() if pmax.sum() > 0 else np.zeros(n_gen)
    x0 = np.clip(np.outer(demand, share), 0, pmax).ravel()
    result = scipy.optimize.minimize(
        cost,
        x0,
        jac=True,
        method="SLSQP",
        bounds=[(0.0, value) for value in np.tile(pmax, horizon)],
        constraints=[
            dict(
                type="eq",
                fun=lambda x: balance @ x - demand,
                jac=lambda x: balance,
            ),
            dict(
                type="ineq",
                fun=lambda x: ramp_matrix @ x + ramp_offset,
                jac=lambda x: ramp_matrix,
            ),
        ],
        options=dict(maxiter=500, ftol=1e-10),
    )
    if not result.success:
        log.warning("Relaxed dispatch did not converge: %s", result.message)
    return np.clip(result.x, 0, np.tile(pmax, horizon)).reshape(horizon, n_gen)


def warm_start_uc(dispatch, uc, threshold=DEFAULT_WARM_START_THRESHOLD):
    """Round a relaxed dispatch to a feasible commitment schedule.

    A unit is committed where its dispatch exceeds ``threshold``; the
    thresholded schedule is then repaired to the feasible schedule with
    the fewest changed periods by one dynamic program per generator.

    Parameters
    ----------
    dispatch : `numpy.ndarray`
        Shape (T, G), per-unit.
    uc : sequence of `UcParams`
    threshold : `float`, optional

    Returns
    -------
    u_on : `numpy.ndarray`
        Shape (T, G), 0/1 ints.
    """
    target = (np.asarray(dispatch) > threshold).T.astype(int)
    costs = np.zeros(target.shape + (2, 2))
    for s in (0, 1):
        costs[..., :, s] = (target != s)[..., np.newaxis]
    schedules, _ = dp_solve_batch(costs, **commitment_arrays(uc))
    return schedules.T.astype(int)


def load_scenario_file(path):
    """Read and validate a YAML or JSON scenario file.

    Parameters
    ----------
    path : `str` or `pathlib.Path`

    Returns
    -------
    config : `ScenarioConfig`

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    jsonschema.exceptions.ValidationError
        If the contents do not match `CONFIG_SCHEMA`.
    """
    path = pathlib.Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file {str(path)!r} not found")
    data = yaml.safe_load(path.read_text()) or {}
    jsonschema.Draft7Validator(CONFIG_SCHEMA).validate(data)
    profile = data.get("profile")
    if profile is not None:
        profile = pathlib.Path(profile)
        if not profile.is_absolute():
            profile = path.parent / profile
    generators = {}
    for item in data.get("generators", []):
        item = dict(item)
        generators[item.pop("index")] = item
    return ScenarioConfig(
        horizon=data.get("horizon"),
        discount=data.get("discount", DEFAULT_DISCOUNT),
        profile=profile,
        initial_dispatch=data.get("initial_dispatch", "demand-share"),
        default_rate=data.get("default_rate", DEFAULT_RATE),
        warm_start_threshold=data.get(
            "warm_start_threshold", DEFAULT_WARM_START_THRESHOLD
        ),
        uc_defaults=dict(data.get("uc_defaults", {})),
        generators=generators,
        solver=dict(data.get("solver", {})),
    )


def scenario_profile(config, horizon):
    """Return the demand profile of a scenario for a horizon.

    Uses the scenario's profile CSV (its first ``horizon`` factors) if
    there is one, else `default_profile`.

    Raises
    ------
    ScenarioError
        If the CSV holds fewer than ``horizon`` factors.
    """
    if config.profile is None:
        return default_profile(horizon, discount=config.discount)
    profile = read_profile_csv(config.profile, discount=config.discount)
    if profile.horizon < horizon:
        raise ScenarioError(
            f"profile {str(config.profile)!r} has {profile.horizon} factors; "
            f"need {horizon}"
        )
    return DemandProfile(factors=profile.factors[:horizon], discount=config.discount)
