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
    "KernelError",
    "TrSolverConfig",
    "TronResult",
    "tron_solve",
    "GEN_ROW_MATRIX",
    "GenBatch",
    "gen_kernel",
    "LineBatch",
    "LineResult",
    "line_basis",
    "line_flows",
    "line_kernel",
    "BusBatch",
    "BusResult",
    "bus_kernel",
    "voltage_kernel",
    "UcBarBatch",
    "UcBarResult",
    "ucbar_kernel",
    "dump_kernel_call",
]

import dataclasses
import json
import pathlib

import numpy as np

from .constants import ErrorCode, TronStatus

# Backtracking levels for the projected Cauchy and Armijo searches.
_N_BACKTRACK = 30
_N_BISECT = 60


class KernelError(RuntimeError):
    """A kernel hit a numerical failure.

    Parameters
    ----------
    kernel : `str`
        Kernel class: "gen", "line", "bus", "ucbar" or "tron".
    index : `int` or `tuple`
        Label of the failing problem, e.g. ``(t, l)``.
    what : `str`
        Description of the failure.
    iterate : `dict`, optional
        Dump of the failing iterate.
    """

    def __init__(self, kernel, index, what, iterate=None):
        self.code = ErrorCode.KERNEL_FAILURE
        self.kernel = kernel
        self.index = index
        self.what = what
        self.iterate = iterate if iterate is not None else dict()
        super().__init__(f"{kernel} kernel failed for problem {index}: {what}")

    def __reduce__(self):
        return (type(self), (self.kernel, self.index, self.what, self.iterate))

    def __repr__(self):
        return (
            f"KernelError(kernel={self.kernel!r}, index={self.index!r}, "
            f"what={self.what!r})"
        )


@dataclasses.dataclass(frozen=True)
class TrSolverConfig:
    """Configuration of `tron_solve`."""

    gtol: float = 1e-8
    """Tolerance on the infinity norm of the projected gradient."""
    rtol: float = 0.0
    """Tolerance on the same norm relative to its value at the starting
    point; a problem converges when either tolerance is met."""
    max_iterations: int = 200
    initial_radius: float = 1.0
    eta: float = 1e-4
    """Smallest actual/predicted reduction ratio that accepts a step."""
    shrink: float = 0.25
    expand: float = 2.0
    min_radius: float = 1e-14
    """Trust radius below which the solve reports STALLED."""

    def __post_init__(self):
        if not self.gtol > 0:
            raise ValueError(f"gtol={self.gtol} must be positive")
        if not 0 <= self.rtol < 1:
            raise ValueError(f"rtol={self.rtol} must be in [0, 1)")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations={self.max_iterations} must be >= 1")
        if not self.initial_radius > 0:
            raise ValueError(f"initial_radius={self.initial_radius} must be positive")


@dataclasses.dataclass
class TronResult:
    """Result of `tron_solve` for a batch of problems."""

    x: np.ndarray
    """Final iterates, shape (N, n)."""
    f: np.ndarray
    """Objective at ``x``, shape (N,)."""
    status: np.ndarray
    """`TronStatus` value per problem."""
    iterations: np.ndarray


def _label(labels, k):
    if labels is None:
        return int(k)
    label = np.asarray(labels)[k]
    return tuple(int(v) for v in np.atleast_1d(label))


def _model(g, H, d):
    """Quadratic model value ``g.d + d.H.d / 2`` per problem."""
    return np.einsum("ki,ki->k", g, d) + 0.5 * np.einsum("ki,kij,kj->k", d, H, d)


def _boundary_coefficients(lam, a, g_norm, radius):
    """Eigenbasis coefficients of the trust-region step on the boundary.

    Solves the secular equation ``||s(sigma)|| = radius`` by bisection and,
    in the hard case, fills the radius along the leftmost eigenvector.
    """
    lam_min = lam[:, 0]
    lo = np.maximum(0.0, -lam_min)
    hi = lo + np.where(g_norm > 0, g_norm / radius, 1.0)
    for _ in range(_N_BISECT):
        mid = 0.5 * (lo + hi)
        denom = lam + mid[:, np.newaxis]
        coef = np.divide(-a, denom, out=np.zeros_like(a), where=denom > 0)
        too_long = (np.linalg.norm(coef, axis=1) > radius) | np.any(
            (denom <= 0) & (a != 0), axis=1
        )
        lo = np.where(too_long, mid, lo)
        hi = np.where(too_long, hi, mid)
        if np.all(hi - lo <= 1e-12 * np.maximum(hi, 1.0)):
            break
    denom = lam + hi[:, np.newaxis]
    coef = np.divide(-a, denom, out=np.zeros_like(a), where=denom > 0)
    deficit = radius**2 - np.sum(coef**2, axis=1)
    hard = (lam_min < 0) & (deficit > (1e-8 * radius) ** 2)
    coef[:, 0] += np.where(
        hard, np.sqrt(np.maximum(deficit, 0.0)) * np.where(a[:, 0] > 0, -1.0, 1.0), 0.0
    )
    return coef


def _trust_region_step(x, g, H, lower, upper, radius):
    """Approximate trust-region step for one iteration of `tron_solve`.

    Takes the better (in model value) of the clipped trust-region step on
    the free variables and a projected Cauchy step.
    """
    n_problems, n = x.shape
    fixed = (
        ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0)) | (lower >= upper)
    )
    free = ~fixed
    pair = free[:, :, np.newaxis] & free[:, np.newaxis, :]
    Hf = np.where(pair, H, 0.0) + np.eye(n) * fixed[:, np.newaxis, :]
    gf = np.where(free, g, 0.0)
    g_norm = np.linalg.norm(gf, axis=1)

    lam, vec = np.linalg.eigh(Hf)
    a = np.einsum("kji,kj->ki", vec, gf)
    lam_min = lam[:, 0]

    with np.errstate(divide="ignore", invalid="ignore"):
        newton = -a / lam
        interior = (lam_min > 0) & (np.linalg.norm(newton, axis=1) <= radius)

    coef = np.nan_to_num(newton)
    boundary = np.flatnonzero(~interior)
    if boundary.size:
        coef[boundary] = _boundary_coefficients(
            lam[boundary], a[boundary], g_norm[boundary], radius[boundary]
        )
    step = np.einsum("kij,kj->ki", vec, coef)
    step = np.where(free, step, 0.0)
    d_tr = np.clip(x + step, lower, upper) - x

    # Projected Cauchy step with backtracking.
    alpha0 = radius / np.maximum(g_norm, np.finfo(float).tiny)
    alphas = alpha0[:, np.newaxis] * 0.5 ** np.arange(_N_BACKTRACK)
    d_c = (
        np.clip(
            x[:, np.newaxis, :] - alphas[:, :, np.newaxis] * g[:, np.newaxis, :],
            lower[:, np.newaxis, :],
            upper[:, np.newaxis, :],
        )
        - x[:, np.newaxis, :]
    )
    slope = np.einsum("ki,kmi->km", g, d_c)
    model_c = slope + 0.5 * np.einsum("kmi,kij,kmj->km", d_c, H, d_c)
    inside = np.linalg.norm(d_c, axis=2) <= radius[:, np.newaxis] * (1 + 1e-12)
    ok = (model_c <= 0.01 * slope) & inside
    first = np.where(ok.any(axis=1), np.argmax(ok, axis=1), _N_BACKTRACK - 1)
    d_c = d_c[np.arange(n_problems), first]

    use_tr = _model(g, H, d_tr) <= _model(g, H, d_c)
    return np.where(use_tr[:, np.newaxis], d_tr, d_c)


def tron_solve(fun, x0, lower, upper, config=None, kernel="tron", labels=None):
    """Minimize a batch of smooth functions over boxes.

    Trust-region projected Newton: each iteration takes the better of a
    trust-region Newton step restricted to the free variables (clipped
    to the box) and a projected Cauchy step, then applies the usual
    ratio test.

    Parameters
    ----------
    fun : callable
        ``fun(x, index)`` returns ``(f, g, H)`` of shapes (k,), (k, n)
        and (k, n, n) for the iterates ``x`` of shape (k, n) of the
        problems at positions ``index`` of the batch. Problems must be
        independent. Only problems still iterating are evaluated.
    x0 : `numpy.ndarray`
        Starting points, shape (N, n); projected onto the box.
    lower, upper : `numpy.ndarray`
        Bounds, shape (N, n); may be infinite.
    config : `TrSolverConfig`, optional
    kernel : `str`, optional
        Kernel name used in error reports.
    labels : array-like, optional
        Problem labels used in error reports.

    Returns
    -------
    result : `TronResult`

    Raises
    ------
    KernelError
        If the objective or gradient is not finite at an iterate.
        A non-finite trial point is rejected like any failed step.
    """
    config = config or TrSolverConfig()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = np.clip(np.array(x0, dtype=float), lower, upper)
    n_problems = x.shape[0]

    f, g, H = fun(x, np.arange(n_problems))
    f = np.array(f, dtype=float)
    g = np.array(g, dtype=float)
    H = np.array(H, dtype=float)
    bad = ~(np.isfinite(f) & np.all(np.isfinite(g), axis=1))
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise KernelError(
            kernel,
            _label(labels, k),
            "non-finite objective or gradient",
            iterate=dict(x=x[k].tolist(), f=float(f[k]), g=g[k].tolist()),
        )

    pg0 = np.max(np.abs(x - np.clip(x - g, lower, upper)), axis=1, initial=0.0)
    gtol = np.maximum(config.gtol, config.rtol * pg0)
    radius = np.full(n_problems, float(config.initial_radius))
    status = np.full(n_problems, int(TronStatus.MAX_ITERATIONS))
    iterations = np.zeros(n_problems, dtype=int)
    active = np.ones(n_problems, dtype=bool)
    while True:
        pg = x - np.clip(x - g, lower, upper)
        pg_norm = np.max(np.abs(pg), axis=1, initial=0.0)
        converged = active & (pg_norm <= gtol)
        status[converged] = TronStatus.CONVERGED
        stalled = active & ~converged & (radius < config.min_radius)
        status[stalled] = TronStatus.STALLED
        active &= ~(converged | stalled) & (iterations < config.max_iterations)
        if not active.any():
            break

        idx = np.flatnonzero(active)
        xa, fa, ga, Ha, ra = x[idx], f[idx], g[idx], H[idx], radius[idx]
        d = _trust_region_step(xa, ga, Ha, lower[idx], upper[idx], ra)
        trial = xa + d
        with np.errstate(all="ignore"):
            ft, gt, Ht = fun(trial, idx)
        finite = np.isfinite(ft) & np.all(np.isfinite(gt), axis=1)
        predicted = -_model(ga, Ha, d)
        actual = fa - ft
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(predicted > 0, actual / predicted, -np.inf)
        # Reductions at rounding level count as agreement.
        close = np.abs(actual - predicted) <= 1e-12 * np.maximum(1.0, np.abs(fa))
        ratio = np.where(close & (predicted >= 0), 1.0, ratio)
        ratio = np.where(finite, ratio, -np.inf)

        accept = ratio > config.eta
        d_norm = np.linalg.norm(d, axis=1)
        new_radius = np.where(ratio < 0.25, config.shrink * d_norm, ra)
        radius[idx] = np.where(
            (ratio > 0.75) & (d_norm >= 0.99 * ra), config.expand * ra, new_radius
        )
        taken = idx[accept]
        x[taken] = trial[accept]
        f[taken] = ft[accept]
        g[taken] = gt[accept]
        H[taken] = Ht[accept]
        iterations[idx] += 1

    return TronResult(x=x, f=f, status=status, iterations=iterations)


class _Batch:
    """Mixin selecting a subset of the problems of a batch."""

    # Names of fields that are shared by every problem.
    _shared = ()

    def __len__(self):
        for field in dataclasses.fields(self):
            if field.name not in self._shared:
                return len(getattr(self, field.name))
        return 0

    def select(self, index):
        return dataclasses.replace(
            self,
            **{
                field.name: np.asarray(getattr(self, field.name))[index]
                for field in dataclasses.fields(self)
                if field.name not in self._shared
                and getattr(self, field.name) is not None
            },
        )


# Rows of the generator kernel, by column:
# p, q, p_hat, s_p_lo, s_p_hi, s_q_lo, s_q_hi, s_ramp_dn, s_ramp_up.
GEN_ROW_MATRIX = np.array(
    [
        [1, 0, 0, -1, 0, 0, 0, 0, 0],  # p_lo
        [1, 0, 0, 0, 1, 0, 0, 0, 0],  # p_hi
        [0, 1, 0, 0, 0, -1, 0, 0, 0],  # q_lo
        [0, 1, 0, 0, 0, 0, 1, 0, 0],  # q_hi
        [1, 0, -1, 0, 0, 0, 0, -1, 0],  # ramp_dn
        [1, 0, -1, 0, 0, 0, 0, 0, 1],  # ramp_up
        [1, 0, 0, 0, 0, 0, 0, 0, 0],  # gen p
        [0, 1, 0, 0, 0, 0, 0, 0, 0],  # gen q
        [0, 0, 1, 0, 0, 0, 0, 0, 0],  # ramp_copy
    ],
    dtype=float,
)


@dataclasses.dataclass
class GenBatch(_Batch):
    """Generator subproblems, one per (t, g).

    Each problem minimizes ``c2 p^2 + c1 p + sum_k y_k r_k + rho_k r_k^2 / 2``
    with ``r = GEN_ROW_MATRIX @ x + offset`` over the box.
    """

    rho: np.ndarray
    """Row penalties, shape (N, 9); zero for an absent ramp-copy row."""
    y: np.ndarray
    """Row multipliers, shape (N, 9)."""
    offset: np.ndarray
    """Constant part of each row (shared-variable terms plus z), shape (N, 9)."""
    c2: np.ndarray
    c1: np.ndarray
    lower: np.ndarray
    """Lower bounds, shape (N, 9)."""
    upper: np.ndarray
    labels: np.ndarray = None
    """(t, g) of each problem."""

    def quadratic(self):
        """Return ``(H, h)`` such that the objective is ``x.H.x / 2 + h.x``
        up to a constant."""
        M = GEN_ROW_MATRIX
        H = np.einsum("ri,kr,rj->kij", M, self.rho, M)
        H[:, 0, 0] += 2 * self.c2
        h = np.einsum("ri,kr->ki", M, self.y + self.rho * self.offset)
        h[:, 0] += self.c1
        return H, h


def gen_kernel(batch, x0, config=None):
    """Solve a batch of generator subproblems.

    Parameters
    ----------
    batch : `GenBatch`
    x0 : `numpy.ndarray`
        Warm start, shape (N, 9).
    config : `TrSolverConfig`, optional

    Returns
    -------
    result : `TronResult`
    """
    H, h = batch.quadratic()

    def fun(x, index):
        Hk, hk = H[index], h[index]
        Hx = np.einsum("kij,kj->ki", Hk, x)
        return np.einsum("ki,ki->k", x, 0.5 * Hx + hk), Hx + hk, Hk

    return tron_solve(
        fun, x0, batch.lower, batch.upper, config, kernel="gen", labels=batch.labels
    )


def line_basis(v):
    """Voltage products of a line and their derivatives.

    Parameters
    ----------
    v : `numpy.ndarray`
        (w_i, w_j, theta_i, theta_j), shape (N, 4), with positive w.

    Returns
    -------
    basis : `numpy.ndarray`
        (w_i, w_j, wR_ij, wI_ij), shape (N, 4), where
        ``wR = sqrt(w_i w_j) cos(theta_i - theta_j)`` and
        ``wI = sqrt(w_i w_j) sin(theta_i - theta_j)``.
    jacobian : `numpy.ndarray`
        Shape (N, 4, 4).
    hessian : `numpy.ndarray`
        Shape (N, 4, 4, 4), indexed [basis, v, v].
    """
    wi, wj = v[:, 0], v[:, 1]
    delta = v[:, 2] - v[:, 3]
    cos, sin = np.cos(delta), np.sin(delta)
    s = np.sqrt(wi * wj)
    si = 0.5 * np.sqrt(wj / wi)
    sj = 0.5 * np.sqrt(wi / wj)
    sii = -0.25 * np.sqrt(wj) * wi**-1.5
    sjj = -0.25 * np.sqrt(wi) * wj**-1.5
    sij = 0.25 / s

    n_problems = v.shape[0]
    basis = np.stack([wi, wj, s * cos, s * sin], axis=1)
    jacobian = np.zeros((n_problems, 4, 4))
    jacobian[:, 0, 0] = 1.0
    jacobian[:, 1, 1] = 1.0
    jacobian[:, 2] = np.stack([si * cos, sj * cos, -s * sin, s * sin], axis=1)
    jacobian[:, 3] = np.stack([si * sin, sj * sin, s * cos, -s * cos], axis=1)

    hessian = np.zeros((n_problems, 4, 4, 4))
    for k, (trig, dtrig) in enumerate(((cos, -sin), (sin, cos)), start=2):
        # d/dtheta_i of trig(delta) is dtrig, d/dtheta_j is -dtrig.
        block = hessian[:, k]
        block[:, 0, 0] = sii * trig
        block[:, 1, 1] = sjj * trig
        block[:, 0, 1] = block[:, 1, 0] = sij * trig
        block[:, 0, 2] = block[:, 2, 0] = si * dtrig
        block[:, 0, 3] = block[:, 3, 0] = -si * dtrig
        block[:, 1, 2] = block[:, 2, 1] = sj * dtrig
        block[:, 1, 3] = block[:, 3, 1] = -sj * dtrig
        block[:, 2, 2] = block[:, 3, 3] = -s * trig
        block[:, 2, 3] = block[:, 3, 2] = s * trig
    return basis, jacobian, hessian


def _flow_matrix(admittance):
    """Map (w_i, w_j, wR, wI) to (p_ij, q_ij, p_ji, q_ji, w_i, w_j).

    Parameters
    ----------
    admittance : `numpy.ndarray`
        (Gii, Gij, Gji, Gjj, Bii, Bij, Bji, Bjj), shape (N, 8).
    """
    Gii, Gij, Gji, Gjj, Bii, Bij, Bji, Bjj = np.asarray(admittance, dtype=float).T
    zero = np.zeros_like(Gii)
    one = np.ones_like(Gii)
    return np.stack(
        [
            np.stack([Gii, zero, Gij, Bij], axis=1),
            np.stack([-Bii, zero, -Bij, Gij], axis=1),
            np.stack([zero, Gjj, Gji, -Bji], axis=1),
            np.stack([zero, -Bjj, -Bji, -Gji], axis=1),
            np.stack([one, zero, zero, zero], axis=1),
            np.stack([zero, one, zero, zero], axis=1),
        ],
        axis=1,
    )


def line_flows(admittance, w, theta):
    """Power flows at both ends of lines.

    Parameters
    ----------
    admittance : `numpy.ndarray`
        Shape (..., 8).
    w : `numpy.ndarray`
        Squared voltage magnitudes (w_i, w_j), shape (..., 2).
    theta : `numpy.ndarray`
        Voltage angles (theta_i, theta_j), shape (..., 2).

    Returns
    -------
    flows : `numpy.ndarray`
        (p_ij, q_ij, p_ji, q_ji), shape (..., 4).
    """
    admittance = np.asarray(admittance, dtype=float)
    w = np.asarray(w, dtype=float)
    theta = np.asarray(theta, dtype=float)
    shape = np.broadcast_shapes(admittance.shape[:-1], w.shape[:-1], theta.shape[:-1])
    v = np.concatenate(
        [
            np.broadcast_to(w, shape + (2,)).reshape(-1, 2),
            np.broadcast_to(theta, shape + (2,)).reshape(-1, 2),
        ],
        axis=1,
    )
    basis, _, _ = line_basis(v)
    K = _flow_matrix(np.broadcast_to(admittance, shape + (8,)).reshape(-1, 8))
    flows = np.einsum("nkb,nb->nk", K[:, :4], basis)
    return flows.reshape(shape + (4,))


@dataclasses.dataclass
class LineBatch(_Batch):
    """Line subproblems, one per (t, l).

    Variables are (w_i, w_j, theta_i, theta_j). The objective is
    ``sum_k rho_k (q_k - target_k)^2 / 2`` over the coupled quantities
    (p_ij, q_ij, p_ji, q_ji, w_i, w_j), plus the thermal limits
    ``p^2 + q^2 <= rate^2`` at both ends.
    """

    admittance: np.ndarray
    """Shape (N, 8)."""
    rate: np.ndarray
    """Apparent power limit (per-unit), shape (N,)."""
    rho: np.ndarray
    """Penalties, shape (N, 6)."""
    target: np.ndarray
    """Consensus targets ``xbar - z - y / rho``, shape (N, 6)."""
    lower: np.ndarray
    """Shape (N, 4)."""
    upper: np.ndarray
    nu: np.ndarray
    """Thermal limit multipliers (from, to), shape (N, 2)."""
    labels: np.ndarray = None


@dataclasses.dataclass
class LineResult:
    x: np.ndarray
    """(w_i, w_j, theta_i, theta_j), shape (N, 4)."""
    flows: np.ndarray
    """Shape (N, 4)."""
    nu: np.ndarray
    """Updated thermal multipliers, shape (N, 2)."""
    violated: np.ndarray
    """True where the thermal loop hit its cap with a violation left."""
    status: np.ndarray
    """`TronStatus` of the last inner solve."""
    iterations: np.ndarray
    """Total trust-region iterations."""


def _thermal(quantities, rate):
    """Thermal constraint values ``p^2 + q^2 - rate^2`` at both ends."""
    rate2 = (rate**2)[:, np.newaxis]
    return np.stack(
        [
            quantities[:, 0] ** 2 + quantities[:, 1] ** 2,
            quantities[:, 2] ** 2 + quantities[:, 3] ** 2,
        ],
        axis=1,
    ) - rate2


def _line_objective(batch, nu, mu):
    K_all = _flow_matrix(batch.admittance)

    def fun(v, index):
        K, rho, target = K_all[index], batch.rho[index], batch.target[index]
        nu_k, mu_k = nu[index], mu[index]
        basis, jb, hb = line_basis(v)
        q = np.einsum("nkb,nb->nk", K, basis)
        jq = np.einsum("nkb,nbi->nki", K, jb)
        hq = np.einsum("nkb,nbij->nkij", K, hb)
        re = rho * (q - target)
        f = 0.5 * np.einsum("nk,nk->n", re, q - target)
        grad = np.einsum("nki,nk->ni", jq, re)
        hess = np.einsum("nki,nk,nkj->nij", jq, rho, jq) + np.einsum(
            "nk,nkij->nij", re, hq
        )
        h = _thermal(q, batch.rate[index])
        for end, (a, b) in enumerate(((0, 1), (2, 3))):
            shifted = nu_k[:, end] + mu_k * h[:, end]
            pos = np.maximum(shifted, 0.0)
            f = f + (pos**2 - nu_k[:, end] ** 2) / (2 * mu_k)
            binding = shifted > 0
            if not binding.any():
                continue
            dh = 2 * (q[:, a, None] * jq[:, a] + q[:, b, None] * jq[:, b])
            d2h = 2 * (
                np.einsum("ni,nj->nij", jq[:, a], jq[:, a])
                + np.einsum("ni,nj->nij", jq[:, b], jq[:, b])
                + q[:, a, None, None] * hq[:, a]
                + q[:, b, None, None] * hq[:, b]
            )
            grad = grad + pos[:, None] * dh
            hess = (
                hess
                + (binding * mu_k)[:, None, None] * np.einsum("ni,nj->nij", dh, dh)
                + pos[:, None, None] * d2h
            )
        return f, grad, hess

    return fun


def line_kernel(
    batch,
    x0,
    config=None,
    penalty=1e3,
    growth=10.0,
    max_rounds=50,
    tolerance=1e-6,
):
    """Solve a batch of line subproblems.

    The thermal limits are handled by an augmented Lagrangian loop
    (multiplier update ``nu = max(0, nu + mu h)``; ``mu`` grows by
    ``growth`` when the violation fails to drop to a quarter of the
    previous round's) around `tron_solve`.

    Parameters
    ----------
    batch : `LineBatch`
    x0 : `numpy.ndarray`
        Warm start, shape (N, 4).
    config : `TrSolverConfig`, optional
    penalty : `float`, optional
        Initial thermal penalty.
    growth : `float`, optional
    max_rounds : `int`, optional
        Cap on multiplier updates.
    tolerance : `float`, optional
        Largest acceptable thermal violation.

    Returns
    -------
    result : `LineResult`
    """
    n_problems = len(batch)
    v = np.clip(np.array(x0, dtype=float), batch.lower, batch.upper)
    nu = np.array(batch.nu, dtype=float)
    mu = np.full(n_problems, float(penalty))
    previous = np.full(n_problems, np.inf)
    pending = np.ones(n_problems, dtype=bool)
    status = np.zeros(n_problems, dtype=int)
    iterations = np.zeros(n_problems, dtype=int)
    for _ in range(max_rounds):
        idx = np.flatnonzero(pending)
        if idx.size == 0:
            break
        sub = batch.select(idx)
        result = tron_solve(
            _line_objective(sub, nu[idx], mu[idx]),
            v[idx],
            sub.lower,
            sub.upper,
            config,
            kernel="line",
            labels=sub.labels,
        )
        v[idx] = result.x
        status[idx] = result.status
        iterations[idx] += result.iterations
        flows = line_flows(sub.admittance, result.x[:, :2], result.x[:, 2:])
        h = _thermal(flows, sub.rate)
        nu[idx] = np.maximum(0.0, nu[idx] + mu[idx, np.newaxis] * h)
        violation = np.max(np.maximum(h, 0.0), axis=1)
        done = violation <= tolerance
        grow = ~done & (violation > 0.25 * previous[idx])
        mu[idx[grow]] *= growth
        previous[idx] = violation
        pending[idx[done]] = False

    return LineResult(
        x=v,
        flows=line_flows(batch.admittance, v[:, :2], v[:, 2:]),
        nu=nu,
        violated=pending,
        status=status,
        iterations=iterations,
    )


@dataclasses.dataclass
class BusBatch(_Batch):
    """Bus subproblems for a set of periods.

    The leading axis of the per-period fields indexes periods; every
    bus of a period is solved independently. ``tau_*`` are the targets
    and ``weight_*`` the summed penalties of the rows each shared
    variable enters.
    """

    tau_p: np.ndarray
    """Shape (N, G)."""
    weight_p: np.ndarray
    tau_q: np.ndarray
    weight_q: np.ndarray
    tau_flow: np.ndarray
    """Shape (N, L, 4)."""
    weight_flow: np.ndarray
    tau_w: np.ndarray
    """Shape (N, B)."""
    weight_w: np.ndarray
    p_demand: np.ndarray
    q_demand: np.ndarray
    periods: np.ndarray
    gs: np.ndarray
    """Shunt conductance, shape (B,)."""
    bs: np.ndarray
    w_lower: np.ndarray
    w_upper: np.ndarray
    gen_incidence: np.ndarray
    """Shape (G, B)."""
    from_incidence: np.ndarray
    """Shape (L, B)."""
    to_incidence: np.ndarray

    _shared = (
        "gs",
        "bs",
        "w_lower",
        "w_upper",
        "gen_incidence",
        "from_incidence",
        "to_incidence",
    )


@dataclasses.dataclass
class BusResult:
    p_bar: np.ndarray
    q_bar: np.ndarray
    flow_bar: np.ndarray
    w_bar: np.ndarray
    multipliers: np.ndarray
    """Balance multipliers (P, Q), shape (N, B, 2)."""


def _check_singular(singular, batch, what):
    if singular.any():
        n, i = np.argwhere(singular)[0]
        raise KernelError(
            "bus",
            (int(batch.periods[n]), int(i)),
            what,
            iterate=dict(
                tau_w=float(batch.tau_w[n, i]), weight_w=float(batch.weight_w[n, i])
            ),
        )


def bus_kernel(batch):
    """Solve a batch of bus subproblems in closed form.

    Each bus minimizes the weighted distance of its shared copies to
    their targets subject to the real and reactive power balance::

        sum p_bar - sum p_flow - Gs w_bar = P_demand
        sum q_bar - sum q_flow + Bs w_bar = Q_demand

    The two multipliers come from a 2x2 system. When the resulting
    ``w_bar`` leaves its bounds it is clipped and the balance is
    re-solved with ``w_bar`` fixed.

    Parameters
    ----------
    batch : `BusBatch`

    Returns
    -------
    result : `BusResult`

    Raises
    ------
    KernelError
        If a balance system is singular (a bus with no incident
        generator or line).
    """
    inv_p = 1 / batch.weight_p
    inv_q = 1 / batch.weight_q
    inv_f = 1 / batch.weight_flow
    inv_w = 1 / batch.weight_w
    Cg, Cf, Ct = batch.gen_incidence, batch.from_incidence, batch.to_incidence
    gs, bs = batch.gs, batch.bs

    # Sums over the p (q) variables of each bus, excluding w_bar.
    sum_p = inv_p @ Cg + inv_f[..., 0] @ Cf + inv_f[..., 2] @ Ct
    sum_q = inv_q @ Cg + inv_f[..., 1] @ Cf + inv_f[..., 3] @ Ct
    tau_f = batch.tau_flow
    base_p = batch.tau_p @ Cg - tau_f[..., 0] @ Cf - tau_f[..., 2] @ Ct
    base_q = batch.tau_q @ Cg - tau_f[..., 1] @ Cf - tau_f[..., 3] @ Ct

    s_pp = sum_p + gs**2 * inv_w
    s_qq = sum_q + bs**2 * inv_w
    s_pq = -gs * bs * inv_w
    det = s_pp * s_qq - s_pq**2
    _check_singular(
        ~(det > 1e-12 * s_pp * s_qq) | ~(s_pp > 0) | ~(s_qq > 0),
        batch,
        "singular balance system",
    )
    delta_p = batch.p_demand - (base_p - gs * batch.tau_w)
    delta_q = batch.q_demand - (base_q + bs * batch.tau_w)
    lam_p = (s_qq * delta_p - s_pq * delta_q) / det
    lam_q = (s_pp * delta_q - s_pq * delta_p) / det
    w_bar = batch.tau_w + (-gs * lam_p + bs * lam_q) * inv_w

    clipped = (w_bar < batch.w_lower) | (w_bar > batch.w_upper)
    if clipped.any():
        w_bar = np.clip(w_bar, batch.w_lower, batch.w_upper)
        _check_singular(
            clipped & ~((sum_p > 0) & (sum_q > 0)),
            batch,
            "singular balance system with clipped voltage",
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            fixed_p = (batch.p_demand - base_p + gs * w_bar) / sum_p
            fixed_q = (batch.q_demand - base_q - bs * w_bar) / sum_q
        lam_p = np.where(clipped, fixed_p, lam_p)
        lam_q = np.where(clipped, fixed_q, lam_q)

    return BusResult(
        p_bar=batch.tau_p + (lam_p @ Cg.T) * inv_p,
        q_bar=batch.tau_q + (lam_q @ Cg.T) * inv_q,
        flow_bar=batch.tau_flow
        - np.stack(
            [lam_p @ Cf.T, lam_q @ Cf.T, lam_p @ Ct.T, lam_q @ Ct.T], axis=-1
        )
        * inv_f,
        w_bar=w_bar,
        multipliers=np.stack([lam_p, lam_q], axis=-1),
    )


def voltage_kernel(w_bar, z, y, rho, lower, upper):
    """Update the bus-held voltage copies in closed form.

    Minimizes ``y r + rho r^2 / 2`` with ``r = w - w_bar + z`` over
    ``[lower, upper]``.
    """
    return np.clip(w_bar - z - y / rho, lower, upper)


@dataclasses.dataclass
class UcBarBatch(_Batch):
    """Relaxed commitment subproblems, one per generator.

    Each problem minimizes ``sum_r y_r e_r + rho_r e_r^2 / 2`` with
    ``e = coefficients @ ubar + offset`` over ``[0, 1]^n``.
    """

    coefficients: np.ndarray
    """Shape (N, R, n)."""
    rho: np.ndarray
    """Shape (N, R)."""
    y: np.ndarray
    offset: np.ndarray
    labels: np.ndarray = None

    def quadratic(self):
        H = np.einsum("nri,nr,nrj->nij", self.coefficients, self.rho, self.coefficients)
        h = np.einsum("nri,nr->ni", self.coefficients, self.rho * self.offset + self.y)
        return H, h


@dataclasses.dataclass
class UcBarResult:
    x: np.ndarray
    """Shape (N, n)."""
    converged: np.ndarray
    iterations: np.ndarray


def ucbar_kernel(batch, x0, tolerance=1e-8, max_iterations=100, sigma=1e-4):
    """Minimize a batch of convex box QPs over ``[0, 1]^n``.

    Projected Newton with an Armijo search along the projection arc;
    the Newton system is restricted to the variables not held at a
    bound.

    Parameters
    ----------
    batch : `UcBarBatch`
    x0 : `numpy.ndarray`
        Warm start, shape (N, n).
    tolerance : `float`, optional
        Tolerance on the infinity norm of the projected gradient.
    max_iterations : `int`, optional
    sigma : `float`, optional
        Armijo constant.

    Returns
    -------
    result : `UcBarResult`
        ``converged`` is False where the cap was reached.
    """
    H, h = batch.quadratic()
    x = np.clip(np.array(x0, dtype=float), 0.0, 1.0)
    n_problems, n = x.shape
    converged = np.zeros(n_problems, dtype=bool)
    iterations = np.zeros(n_problems, dtype=int)
    alphas = 0.5 ** np.arange(_N_BACKTRACK)

    def objective(points):
        return 0.5 * np.einsum("n...i,nij,n...j->n...", points, H, points) + np.einsum(
            "n...i,ni->n...", points, h
        )

    for _ in range(max_iterations + 1):
        g = np.einsum("nij,nj->ni", H, x) + h
        pg = x - np.clip(x - g, 0.0, 1.0)
        converged = np.max(np.abs(pg), axis=1, initial=0.0) <= tolerance
        active = ~converged & (iterations < max_iterations)
        if not active.any():
            break
        fixed = ((x <= 0) & (g > 0)) | ((x >= 1) & (g < 0))
        free = ~fixed
        pair = free[:, :, np.newaxis] & free[:, np.newaxis, :]
        reduced = np.where(pair, H, 0.0) + np.eye(n) * fixed[:, np.newaxis, :]
        d = np.linalg.solve(reduced, -np.where(free, g, 0.0)[..., np.newaxis])[..., 0]
        candidates = np.clip(
            x[:, np.newaxis, :]
            + alphas[np.newaxis, :, np.newaxis] * d[:, np.newaxis, :],
            0.0,
            1.0,
        )
        decrease = objective(candidates) - objective(x)[:, np.newaxis]
        armijo = decrease <= sigma * np.einsum(
            "ni,nmi->nm", g, candidates - x[:, np.newaxis, :]
        )
        first = np.where(
            armijo.any(axis=1), np.argmax(armijo, axis=1), _N_BACKTRACK - 1
        )
        step = candidates[np.arange(n_problems), first]
        x = np.where(active[:, np.newaxis], step, x)
        iterations += active

    return UcBarResult(x=x, converged=converged, iterations=iterations)


def _jsonable(value):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {
            field.name: _jsonable(getattr(value, field.name))
            for field in dataclasses.fields(value)
        }
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def dump_kernel_call(directory, kernel, inputs, outputs):
    """Write one kernel call's inputs and outputs as JSON.

    The file is ``<directory>/<kernel>.json``; a later call of the same
    kernel class replaces it.

    Parameters
    ----------
    directory : `str` or `pathlib.Path`
    kernel : `str`
    inputs, outputs
        Batches, results, arrays or dicts of them.

    Returns
    -------
    path : `pathlib.Path`
    """
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{kernel}.json"
    path.write_text(
        json.dumps(
            dict(kernel=kernel, inputs=_jsonable(inputs), outputs=_jsonable(outputs)),
            sort_keys=True,
        )
    )
    return path
