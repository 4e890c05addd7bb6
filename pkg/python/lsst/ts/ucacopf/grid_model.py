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
    "Bus",
    "Branch",
    "Generator",
    "GridCase",
    "CaseParseError",
    "CaseValidationError",
    "DegenerateBranchError",
    "admittance_of",
    "parse_matpower",
    "read_case",
    "format_matpower",
    "validate_case",
    "case_summary",
]

import dataclasses
import math
import pathlib
import re

import numpy as np

from .constants import DEFAULT_RATE, ErrorCode

# Minimum number of columns of each MATPOWER matrix block.
MIN_COLUMNS = dict(bus=13, gen=10, branch=11, gencost=4)

# MATPOWER bus type of the reference bus.
REF_BUS_TYPE = 3

_BLOCK_RE = r"mpc\.{name}\s*=\s*\[(.*?)\]"
_BASE_MVA_RE = re.compile(r"mpc\.baseMVA\s*=\s*([^;\n]+)")


class CaseParseError(ValueError):
    """Raised when a MATPOWER case file cannot be parsed.

    Parameters
    ----------
    what : `str`
        Description of the problem.
    """

    code = ErrorCode.CASE_PARSE

    def __init__(self, what):
        super().__init__(what)
        self.what = what

    def __repr__(self):
        return f"{type(self).__name__}({self.what!r})"


class CaseValidationError(ValueError):
    """Raised when a parsed case violates the network invariants.

    Parameters
    ----------
    violations : `list` [`str`]
        One description per violated invariant.
    """

    code = ErrorCode.CASE_INVALID

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(str(self))

    def __str__(self):
        return "Invalid case: " + "; ".join(self.violations)

    def __repr__(self):
        return f"{type(self).__name__}({self.violations!r})"


class DegenerateBranchError(ValueError):
    """Raised for a branch with zero series impedance."""

    code = ErrorCode.CASE_INVALID


@dataclasses.dataclass(frozen=True)
class Bus:
    """A network bus, in per-unit."""

    id: int
    """MATPOWER bus number."""
    bus_type: int
    """MATPOWER bus type (1 PQ, 2 PV, 3 reference, 4 isolated)."""
    Pd: float
    """Base-case real power demand."""
    Qd: float
    """Base-case reactive power demand."""
    Gs: float
    """Shunt conductance (real power drawn at 1 pu voltage)."""
    Bs: float
    """Shunt susceptance (reactive power injected at 1 pu voltage)."""
    Vm: float
    """Voltage magnitude from the case file."""
    Va: float
    """Voltage angle from the case file (degrees)."""
    base_kV: float
    """Base voltage (kV)."""
    Vmax: float
    """Voltage magnitude upper bound."""
    Vmin: float
    """Voltage magnitude lower bound."""

    @property
    def is_reference(self):
        return self.bus_type == REF_BUS_TYPE


@dataclasses.dataclass(frozen=True)
class Branch:
    """A two-port branch (line or transformer), in per-unit."""

    from_bus: int
    """Bus number of the from end."""
    to_bus: int
    """Bus number of the to end."""
    r: float
    """Series resistance."""
    x: float
    """Series reactance."""
    b: float
    """Total line charging susceptance."""
    rate_limit: float
    """Apparent power limit, after substituting the default for a rate of 0.
    """
    tap: float
    """Off-nominal tap ratio (1 for a line)."""
    shift: float
    """Phase shift angle (degrees)."""
    angmin: float
    """Minimum angle difference (degrees), as parsed."""
    angmax: float
    """Maximum angle difference (degrees), as parsed."""
    Gii: float
    Gij: float
    Gji: float
    Gjj: float
    Bii: float
    Bij: float
    Bji: float
    Bjj: float

    @property
    def admittance(self):
        """The two-port entries as an array
        (Gii, Gij, Gji, Gjj, Bii, Bij, Bji, Bjj).
        """
        return np.array(
            [
                self.Gii,
                self.Gij,
                self.Gji,
                self.Gjj,
                self.Bii,
                self.Bij,
                self.Bji,
                self.Bjj,
            ]
        )


@dataclasses.dataclass(frozen=True)
class Generator:
    """A generating unit, in per-unit.

    Cost coefficients are in $/h for a per-unit output ``p``:
    ``c2 * p**2 + c1 * p + c0``.
    """

    bus: int
    """Bus number the unit is connected to."""
    Pg: float
    """Real power output from the case file."""
    Qg: float
    """Reactive power output from the case file."""
    Qmax: float
    Qmin: float
    Vg: float
    """Voltage setpoint from the case file."""
    Pmax: float
    Pmin: float
    c2: float
    c1: float
    c0: float
    startup_cost: float
    shutdown_cost: float


@dataclasses.dataclass(frozen=True)
class GridCase:
    """A validated per-unit network model.

    Parameters
    ----------
    base_mva : `float`
        System base (MVA).
    buses : `tuple` [`Bus`]
    branches : `tuple` [`Branch`]
    generators : `tuple` [`Generator`]

    Attributes
    ----------
    bus_index : `dict` [`int`, `int`]
        Bus number to position in ``buses``.
    bus_generators : `tuple` [`tuple` [`int`]]
        For each bus position, the positions of its generators.
    bus_branches : `tuple` [`tuple` [(`int`, `int`)]]
        For each bus position, ``(branch position, end)`` pairs of the
        incident branches, where end is 0 for the from end and 1 for the
        to end.
    """

    base_mva: float
    buses: tuple
    branches: tuple
    generators: tuple
    bus_index: dict = dataclasses.field(init=False, repr=False, compare=False)
    bus_generators: tuple = dataclasses.field(init=False, repr=False, compare=False)
    bus_branches: tuple = dataclasses.field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "generators", tuple(self.generators))
        bus_index = {bus.id: i for i, bus in enumerate(self.buses)}
        bus_generators = [[] for _ in self.buses]
        for gen_ind, gen in enumerate(self.generators):
            if gen.bus in bus_index:
                bus_generators[bus_index[gen.bus]].append(gen_ind)
        bus_branches = [[] for _ in self.buses]
        for branch_ind, branch in enumerate(self.branches):
            for end, bus_id in enumerate((branch.from_bus, branch.to_bus)):
                if bus_id in bus_index:
                    bus_branches[bus_index[bus_id]].append((branch_ind, end))
        object.__setattr__(self, "bus_index", bus_index)
        object.__setattr__(
            self, "bus_generators", tuple(tuple(item) for item in bus_generators)
        )
        object.__setattr__(
            self, "bus_branches", tuple(tuple(item) for item in bus_branches)
        )

    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def n_branches(self):
        return len(self.branches)

    @property
    def n_generators(self):
        return len(self.generators)

    @property
    def reference_buses(self):
        """Positions of the reference buses."""
        return [i for i, bus in enumerate(self.buses) if bus.is_reference]


def admittance_of(r, x, b, tap=1.0, shift=0.0):
    """Compute the two-port admittance entries of a branch.

    Uses the standard pi-model: series admittance ``1/(r + jx)``,
    charging ``b/2`` at each end, and the complex tap
    ``tap * exp(j shift)`` on the from side.

    Parameters
    ----------
    r, x, b : `float`
        Series resistance, series reactance and total charging
        susceptance (per-unit).
    tap : `float`, optional
        Off-nominal tap ratio; must be positive.
    shift : `float`, optional
        Phase shift (radians).

    Returns
    -------
    entries : `tuple` [`float`]
        (Gii, Gij, Gji, Gjj, Bii, Bij, Bji, Bjj).

    Raises
    ------
    DegenerateBranchError
        If ``r`` and ``x`` are both zero.
    ValueError
        If ``tap`` is not positive.
    """
    if r == 0 and x == 0:
        raise DegenerateBranchError("degenerate branch: r = x = 0")
    if not tap > 0:
        raise ValueError(f"tap={tap} must be positive")
    ys = 1 / complex(r, x)
    ratio = tap * complex(math.cos(shift), math.sin(shift))
    ytt = ys + 0.5j * b
    yff = ytt / (ratio * ratio.conjugate())
    yft = -ys / ratio.conjugate()
    ytf = -ys / ratio
    return (
        yff.real,
        yft.real,
        ytf.real,
        ytt.real,
        yff.imag,
        yft.imag,
        ytf.imag,
        ytt.imag,
    )


def _strip_comments(text):
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_block(text, name):
    """Parse one ``mpc.<name> = [...]`` matrix into a list of float rows."""
    match = re.search(_BLOCK_RE.format(name=name), text, re.DOTALL)
    if match is None:
        raise CaseParseError(f"missing mpc.{name}")
    rows = []
    for raw_row in re.split(r"[;\n]", match.group(1)):
        tokens = raw_row.replace(",", " ").split()
        if not tokens:
            continue
        row_number = len(rows) + 1
        row = []
        for column, token in enumerate(tokens, start=1):
            try:
                row.append(float(token))
            except ValueError:
                raise CaseParseError(
                    f"mpc.{name}: non-numeric entry {token!r} "
                    f"at row {row_number}, column {column}"
                ) from None
        if name in MIN_COLUMNS and len(row) < MIN_COLUMNS[name]:
            raise CaseParseError(
                f"mpc.{name}: row {row_number} has {len(row)} columns; "
                f"expected at least {MIN_COLUMNS[name]}"
            )
        rows.append(row)
    return rows


def _parse_cost(row, row_number, base_mva):
    """Convert one gencost row to per-unit (c2, c1, c0, startup, shutdown)."""
    model = int(row[0])
    if model != 2:
        raise CaseParseError(
            f"mpc.gencost: row {row_number} uses cost model {model}; "
            "only polynomial (model 2) costs are supported"
        )
    ncost = int(row[3])
    if ncost > 3:
        raise CaseParseError(
            f"mpc.gencost: row {row_number} has a polynomial of degree "
            f"{ncost - 1}; at most degree 2 is supported"
        )
    coeffs = row[4 : 4 + ncost]
    if len(coeffs) < ncost:
        raise CaseParseError(
            f"mpc.gencost: row {row_number} lists {len(coeffs)} of "
            f"{ncost} coefficients"
        )
    c2, c1, c0 = [0.0] * (3 - ncost) + list(coeffs)
    return c2 * base_mva**2, c1 * base_mva, c0, row[1], row[2]


def parse_matpower(text, default_rate=DEFAULT_RATE, validate=True):
    """Parse the contents of a MATPOWER case file.

    Out-of-service generators and branches are dropped.

    Parameters
    ----------
    text : `str`
        Contents of the case file.
    default_rate : `float`, optional
        Apparent power limit (per-unit) for branches with a rate of 0.
    validate : `bool`, optional
        Raise `CaseValidationError` if `validate_case` reports violations.

    Returns
    -------
    case : `GridCase`
        The network model, in per-unit.

    Raises
    ------
    CaseParseError
        If a block is missing or malformed.
    CaseValidationError
        If ``validate`` and the case violates an invariant.
    DegenerateBranchError
        If an in-service branch has zero series impedance.
    """
    text = _strip_comments(text)
    blocks = {name: _parse_block(text, name) for name in MIN_COLUMNS}
    match = _BASE_MVA_RE.search(text)
    if match is None:
        raise CaseParseError("missing mpc.baseMVA")
    try:
        base_mva = float(match.group(1))
    except ValueError:
        raise CaseParseError(
            f"mpc.baseMVA: non-numeric value {match.group(1).strip()!r}"
        ) from None
    if not base_mva > 0:
        raise CaseParseError(f"mpc.baseMVA={base_mva} must be positive")

    buses = [
        Bus(
            id=int(row[0]),
            bus_type=int(row[1]),
            Pd=row[2] / base_mva,
            Qd=row[3] / base_mva,
            Gs=row[4] / base_mva,
            Bs=row[5] / base_mva,
            Vm=row[7],
            Va=row[8],
            base_kV=row[9],
            Vmax=row[11],
            Vmin=row[12],
        )
        for row in blocks["bus"]
    ]

    if len(blocks["gencost"]) < len(blocks["gen"]):
        raise CaseParseError(
            f"mpc.gencost has {len(blocks['gencost'])} rows; "
            f"expected {len(blocks['gen'])}"
        )
    generators = []
    for row_number, (row, cost_row) in enumerate(
        zip(blocks["gen"], blocks["gencost"]), start=1
    ):
        costs = _parse_cost(cost_row, row_number, base_mva)
        if row[7] <= 0:
            continue
        generators.append(
            Generator(
                bus=int(row[0]),
                Pg=row[1] / base_mva,
                Qg=row[2] / base_mva,
                Qmax=row[3] / base_mva,
                Qmin=row[4] / base_mva,
                Vg=row[5],
                Pmax=row[8] / base_mva,
                Pmin=row[9] / base_mva,
                c2=costs[0],
                c1=costs[1],
                c0=costs[2],
                startup_cost=costs[3],
                shutdown_cost=costs[4],
            )
        )

    branches = []
    for row in blocks["branch"]:
        if row[10] <= 0:
            continue
        r, x, b = row[2], row[3], row[4]
        tap = row[8] if row[8] != 0 else 1.0
        shift = row[9]
        rate = row[5] / base_mva if row[5] != 0 else default_rate
        angmin = row[11] if len(row) > 11 else -360.0
        angmax = row[12] if len(row) > 12 else 360.0
        try:
            entries = admittance_of(r, x, b, tap=tap, shift=math.radians(shift))
        except DegenerateBranchError as e:
            raise DegenerateBranchError(
                f"branch {int(row[0])}-{int(row[1])}: {e}"
            ) from None
        branches.append(
            Branch(
                int(row[0]),
                int(row[1]),
                r,
                x,
                b,
                rate,
                tap,
                shift,
                angmin,
                angmax,
                *entries,
            )
        )

    case = GridCase(
        base_mva=base_mva, buses=buses, branches=branches, generators=generators
    )
    if validate:
        violations = validate_case(case)
        if violations:
            raise CaseValidationError(violations)
    return case


def read_case(path, **kwargs):
    """Read and parse a MATPOWER case file.

    Parameters
    ----------
    path : `str` or `pathlib.Path`
        Path to the ``.m`` file.
    **kwargs
        Passed to `parse_matpower`.

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    """
    path = pathlib.Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"case file {str(path)!r} not found")
    return parse_matpower(path.read_text(), **kwargs)


def validate_case(case):
    """Check the invariants of a parsed case.

    Parameters
    ----------
    case : `GridCase`

    Returns
    -------
    violations : `list` [`str`]
        Descriptions of all violations; empty if the case is valid.
    """
    violations = []
    reference = [case.buses[i].id for i in case.reference_buses]
    if not reference:
        violations.append("no reference bus")
    elif len(reference) > 1:
        violations.append(
            f"{len(reference)} reference buses (ids {', '.join(map(str, reference))})"
        )
    if len(case.bus_index) != case.n_buses:
        violations.append("duplicate bus ids")
    for bus in case.buses:
        if not all(
            math.isfinite(value)
            for value in (bus.Pd, bus.Qd, bus.Gs, bus.Bs, bus.Vmin, bus.Vmax)
        ):
            violations.append(f"bus {bus.id}: non-finite data")
        elif bus.Vmin <= 0:
            violations.append(f"bus {bus.id}: Vmin {bus.Vmin} <= 0")
        elif bus.Vmin > bus.Vmax:
            violations.append(f"bus {bus.id}: Vmin {bus.Vmin} > Vmax {bus.Vmax}")
    for ind, gen in enumerate(case.generators):
        if gen.bus not in case.bus_index:
            violations.append(f"generator {ind}: bus {gen.bus} does not exist")
        values = (gen.Pmin, gen.Pmax, gen.Qmin, gen.Qmax, gen.c2, gen.c1, gen.c0)
        if not all(math.isfinite(value) for value in values):
            violations.append(f"generator {ind}: non-finite data")
            continue
        if gen.Pmin > gen.Pmax:
            violations.append(f"generator {ind}: Pmin {gen.Pmin} > Pmax {gen.Pmax}")
        if gen.Qmin > gen.Qmax:
            violations.append(f"generator {ind}: Qmin {gen.Qmin} > Qmax {gen.Qmax}")
        if gen.c2 < 0:
            violations.append(f"generator {ind}: negative quadratic cost {gen.c2}")
    for ind, branch in enumerate(case.branches):
        name = f"branch {ind} ({branch.from_bus}-{branch.to_bus})"
        for bus_id in (branch.from_bus, branch.to_bus):
            if bus_id not in case.bus_index:
                violations.append(f"{name}: bus {bus_id} does not exist")
        if branch.from_bus == branch.to_bus:
            violations.append(f"{name}: from_bus == to_bus")
        if not np.all(np.isfinite(branch.admittance)):
            violations.append(f"{name}: non-finite admittance")
        if not branch.rate_limit > 0:
            violations.append(f"{name}: rate limit {branch.rate_limit} <= 0")
    return violations


def case_summary(case):
    """Summarize a case as a JSON-friendly dict."""
    return dict(
        n_buses=case.n_buses,
        n_branches=case.n_branches,
        n_generators=case.n_generators,
        n_reference_buses=len(case.reference_buses),
        base_mva=case.base_mva,
    )


def _format_row(values):
    return "\t" + "\t".join(format(value, ".17g") for value in values) + ";"


def format_matpower(case, name="case"):
    """Serialize a case in MATPOWER syntax.

    Per-unit quantities are converted back to MW, MVAr and $/MWh units.
    Branches are written with their substituted rate limit.

    Parameters
    ----------
    case : `GridCase`
    name : `str`, optional
        Function name written on the first line.

    Returns
    -------
    text : `str`
    """
    base = case.base_mva
    lines = [
        f"function mpc = {name}",
        "mpc.version = '2';",
        f"mpc.baseMVA = {base!r};",
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
        "mpc.bus = [",
    ]
    for bus in case.buses:
        lines.append(
            _format_row(
                (
                    bus.id,
                    bus.bus_type,
                    bus.Pd * base,
                    bus.Qd * base,
                    bus.Gs * base,
                    bus.Bs * base,
                    1,
                    bus.Vm,
                    bus.Va,
                    bus.base_kV,
                    1,
                    bus.Vmax,
                    bus.Vmin,
                )
            )
        )
    lines += [
        "];",
        "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin",
        "mpc.gen = [",
    ]
    for gen in case.generators:
        lines.append(
            _format_row(
                (
                    gen.bus,
                    gen.Pg * base,
                    gen.Qg * base,
                    gen.Qmax * base,
                    gen.Qmin * base,
                    gen.Vg,
                    base,
                    1,
                    gen.Pmax * base,
                    gen.Pmin * base,
                )
            )
        )
    lines += [
        "];",
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
        "mpc.branch = [",
    ]
    for branch in case.branches:
        rate = branch.rate_limit * base
        lines.append(
            _format_row(
                (
                    branch.from_bus,
                    branch.to_bus,
                    branch.r,
                    branch.x,
                    branch.b,
                    rate,
                    rate,
                    rate,
                    branch.tap,
                    branch.shift,
                    1,
                    branch.angmin,
                    branch.angmax,
                )
            )
        )
    lines += [
        "];",
        "%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0",
        "mpc.gencost = [",
    ]
    for gen in case.generators:
        lines.append(
            _format_row(
                (
                    2,
                    gen.startup_cost,
                    gen.shutdown_cost,
                    3,
                    gen.c2 / base**2,
                    gen.c1 / base,
                    gen.c0,
                )
            )
        )
    lines.append("];")
    return "\n".join(lines) + "\n"
