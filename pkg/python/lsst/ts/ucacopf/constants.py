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
    "RowKind",
    "PenaltyClass",
    "ErrorCode",
    "ExitCode",
    "TronStatus",
    "ROW_KIND_NAMES",
    "UC_COMPONENTS",
    "SLACK_NAMES",
    "FLOW_NAMES",
    "DEFAULT_RATE",
    "DEFAULT_DISCOUNT",
    "DEFAULT_RAMP_FRACTION",
    "DEFAULT_MIN_UP",
    "DEFAULT_MIN_DOWN",
    "DEFAULT_WARM_START_THRESHOLD",
]

import enum


class RowKind(enum.IntEnum):
    """Kinds of coupling rows in the consensus formulation."""

    UC_DUPLICATE = 1
    P_LO = 2
    P_HI = 3
    Q_LO = 4
    Q_HI = 5
    RAMP_DN = 6
    RAMP_UP = 7
    RAMP_COPY = 8
    GEN_CONSENSUS = 9
    FLOW_CONSENSUS = 10
    VOLT_CONSENSUS = 11


class PenaltyClass(enum.IntEnum):
    """Penalty classes; each class shares one value of rho."""

    PQ = 1
    VA = 2
    UC = 3


class ErrorCode(enum.IntEnum):
    """Machine-readable codes carried by the package exceptions."""

    CASE_PARSE = 1
    CASE_INVALID = 2
    SCENARIO_INVALID = 3
    KERNEL_FAILURE = 10
    DIVERGED = 11
    DP_INFEASIBLE = 12


class ExitCode(enum.IntEnum):
    """Process exit codes of the ``run_ucacopf`` command."""

    CONVERGED = 0
    ERROR = 1
    ITERATION_CAP = 2
    USAGE = 64


class TronStatus(enum.IntEnum):
    """Termination status of the trust-region Newton kernel."""

    CONVERGED = 0
    MAX_ITERATIONS = 1
    STALLED = 2


# Names of the row kinds as they appear in reports.
ROW_KIND_NAMES = {
    RowKind.UC_DUPLICATE: "uc-duplicate",
    RowKind.P_LO: "p-lo",
    RowKind.P_HI: "p-hi",
    RowKind.Q_LO: "q-lo",
    RowKind.Q_HI: "q-hi",
    RowKind.RAMP_DN: "ramp-dn",
    RowKind.RAMP_UP: "ramp-up",
    RowKind.RAMP_COPY: "ramp-copy",
    RowKind.GEN_CONSENSUS: "gen-consensus",
    RowKind.FLOW_CONSENSUS: "flow-consensus",
    RowKind.VOLT_CONSENSUS: "volt-consensus",
}

# Order of the last axis of the commitment arrays.
UC_COMPONENTS = ("on", "su", "sd")

# Order of the last axis of the generator slack array.
SLACK_NAMES = ("p_lo", "p_hi", "q_lo", "q_hi", "ramp_dn", "ramp_up")

# Order of the last axis of the line flow arrays.
FLOW_NAMES = ("p_ij", "q_ij", "p_ji", "q_ji")

# Apparent power limit (per-unit) substituted for a MATPOWER rate of 0.
DEFAULT_RATE = 10.0

DEFAULT_DISCOUNT = 0.7

# Default ramp limit as a fraction of the generator capacity.
DEFAULT_RAMP_FRACTION = 0.10

DEFAULT_MIN_UP = 2
DEFAULT_MIN_DOWN = 2

# Per-unit dispatch above which a unit counts as committed.
DEFAULT_WARM_START_THRESHOLD = 1e-3
