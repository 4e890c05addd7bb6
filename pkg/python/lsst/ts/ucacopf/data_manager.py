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
    "FORMAT_VERSION",
    "HISTORY_COLUMNS",
    "SolveReport",
    "DataManager",
    "read_report",
    "read_history",
    "read_schedule",
    "read_dispatch",
]

import dataclasses
import json
import logging
import math
import pathlib

import astropy.table
import numpy as np

# The version of the report format produced by this module.
FORMAT_VERSION = 1

# Columns of the per-sweep history.
HISTORY_COLUMNS = ("outer", "inner", "primal", "dual", "z_inf")


@dataclasses.dataclass
class SolveReport:
    """Class to hold the results of one solve."""

    status: str
    """"converged" or "iteration_cap"."""
    converged: bool
    objective: float
    """Generation plus commitment cost ($) at the final iterate."""
    primal_infeasibility: float
    """Largest coupling row violation at the final iterate."""
    outer_iterations: int
    inner_iterations: int
    """Total inner sweeps over all outer iterations."""
    inner_per_outer: list
    """Inner sweeps of each outer iteration."""
    z_inf_history: list
    """Infinity norm of z at the end of each outer iteration."""
    z_2_history: list
    """2-norm of z at the end of each outer iteration."""
    beta_history: list
    """Penalty on z used in each outer iteration."""
    history: dict
    """Per-sweep history: a list per name in `HISTORY_COLUMNS`."""
    schedule: np.ndarray
    """Commitment (0/1), shape (T, G)."""
    dispatch_p: np.ndarray
    """Real power (MW) of the final iterate, shape (T, G)."""
    dispatch_q: np.ndarray
    """Reactive power (MVAr), shape (T, G)."""
    voltage: np.ndarray
    """Consensus bus voltage magnitudes (per-unit), shape (T, B)."""
    angle: np.ndarray
    """Recovered bus voltage angles (degrees), shape (T, B); NaN for buses
    not connected to the reference bus."""
    schedule_violations: list
    """Commitment constraint violations of the schedule; empty when
    feasible."""
    generator_buses: list
    """Bus id of each generator."""
    dispatch_residuals: dict = dataclasses.field(default_factory=dict)
    """Largest violations (per-unit) of the output limits by the dispatch
    under the schedule: ``box`` for the commitment-scaled bounds, ``ramp``
    for the ramp limits."""
    parameters: dict = dataclasses.field(default_factory=dict)
    """Penalties and settings of the run."""
    timing: dict = dataclasses.field(default_factory=dict)
    """Wall-clock seconds per phase."""


def _json_value(value):
    if isinstance(value, dict):
        return {str(key): _json_value(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_json_value(item) for item in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class DataManager:
    """Write the products of a solve to a directory.

    Parameters
    ----------
    output_dir : `str` or `pathlib.Path`
        Directory for the products; created if needed.
    log : `logging.Logger`, optional
        Parent logger.
    """

    report_name = "report.json"
    """Name of the summary file."""
    history_name = "history.csv"
    """Name of the per-sweep history table."""
    schedule_name = "schedule.csv"
    """Name of the period x generator commitment table."""
    dispatch_name = "dispatch.csv"
    """Name of the dispatch table."""

    def __init__(self, output_dir, log=None):
        self.output_dir = pathlib.Path(output_dir)
        if log is None:
            self.log = logging.getLogger("UcAcopf.data")
        else:
            self.log = log.getChild("data")

    def make_report_dict(self, report):
        """Return the JSON-ready summary of a `SolveReport`.

        Timing lives under its own key so runs can be compared without it.
        """
        data = dict(
            format_version=FORMAT_VERSION,
            status=report.status,
            converged=bool(report.converged),
            objective=float(report.objective),
            primal_infeasibility=float(report.primal_infeasibility),
            outer_iterations=int(report.outer_iterations),
            inner_iterations=int(report.inner_iterations),
            inner_per_outer=report.inner_per_outer,
            z_inf_history=report.z_inf_history,
            z_2_history=report.z_2_history,
            beta_history=report.beta_history,
            schedule_violations=report.schedule_violations,
            dispatch_residuals=report.dispatch_residuals,
            voltage=report.voltage,
            angle=report.angle,
            parameters=report.parameters,
            timing=report.timing,
        )
        return _json_value(data)

    def make_history_table(self, report):
        """Return the per-sweep history as a table."""
        table = astropy.table.Table()
        for name in HISTORY_COLUMNS:
            dtype = int if name in ("outer", "inner") else float
            table[name] = np.asarray(report.history.get(name, []), dtype=dtype)
        return table

    def make_schedule_table(self, report):
        """Return the commitment as a period x generator table."""
        schedule = np.asarray(report.schedule, dtype=int)
        table = astropy.table.Table()
        table["period"] = np.arange(1, schedule.shape[0] + 1)
        for g in range(schedule.shape[1]):
            table[f"g{g}"] = schedule[:, g]
        return table

    def make_dispatch_table(self, report):
        """Return the dispatch as one row per (period, generator)."""
        schedule = np.asarray(report.schedule, dtype=int)
        n_periods, n_gen = schedule.shape
        table = astropy.table.Table()
        table["period"] = np.repeat(np.arange(1, n_periods + 1), n_gen)
        table["generator"] = np.tile(np.arange(n_gen), n_periods)
        table["bus"] = np.tile(np.asarray(report.generator_buses, dtype=int), n_periods)
        table["on"] = schedule.ravel()
        table["p_mw"] = np.asarray(report.dispatch_p, dtype=float).ravel()
        table["q_mvar"] = np.asarray(report.dispatch_q, dtype=float).ravel()
        return table

    def write(self, report):
        """Write every product of a solve.

        Parameters
        ----------
        report : `SolveReport`

        Returns
        -------
        paths : `dict` [`str`, `pathlib.Path`]
            Paths keyed by "report", "history", "schedule" and "dispatch".
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        paths = dict(
            report=self.output_dir / self.report_name,
            history=self.output_dir / self.history_name,
            schedule=self.output_dir / self.schedule_name,
            dispatch=self.output_dir / self.dispatch_name,
        )
        paths["report"].write_text(
            json.dumps(self.make_report_dict(report), sort_keys=True, indent=2) + "\n"
        )
        for name, make_table in (
            ("history", self.make_history_table),
            ("schedule", self.make_schedule_table),
            ("dispatch", self.make_dispatch_table),
        ):
            make_table(report).write(paths[name], format="ascii.csv", overwrite=True)
        self.log.info("Wrote solve products to %s", self.output_dir)
        return paths


def read_report(path):
    """Read a report.json file into a dict."""
    with open(path) as f:
        return json.load(f)


def read_history(path):
    """Read a history.csv file.

    Returns
    -------
    history : `astropy.table.Table`
    """
    return astropy.table.Table.read(path, format="ascii.csv")


def read_schedule(path):
    """Read a schedule.csv file.

    Returns
    -------
    schedule : `numpy.ndarray`
        Shape (T, G), 0/1 ints.
    """
    table = astropy.table.Table.read(path, format="ascii.csv")
    names = [name for name in table.colnames if name != "period"]
    if not names:
        return np.zeros((len(table), 0), dtype=int)
    return np.stack([np.asarray(table[name], dtype=int) for name in names], axis=1)


def read_dispatch(path):
    """Read a dispatch.csv file.

    Returns
    -------
    dispatch : `astropy.table.Table`
    """
    return astropy.table.Table.read(path, format="ascii.csv")
