"""Wasserstein costs between empirical measures, and against reference laws.

All values returned are ``W_p^p`` (the p-th power), with euclidean ground
cost ``|x - y|_2^p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .measures import EmpiricalMeasure, parse_measure

__all__ = [
    "TransportPlan",
    "SolverCapacityError",
    "DimensionMismatch",
    "DEFAULT_ASSIGNMENT_CAP",
    "DEFAULT_EXACT_CAP",
    "wasserstein_1d",
    "wasserstein_assignment",
    "wasserstein_entropic",
    "wasserstein",
    "quantile_wp",
    "semidiscrete_wp",
    "dual_lipschitz_lower_bound",
]

DEFAULT_ASSIGNMENT_CAP = 2048
DEFAULT_EXACT_CAP = 512


class DimensionMismatch(ValueError):
    pass


class SolverCapacityError(ValueError):
    """Raised when an exact solver is asked for more than it is allowed to do."""


@dataclass
class TransportPlan:
    """A coupling in sparse triplet form.

    ``rows[k], cols[k], mass[k]`` are the non-zero entries of the coupling;
    for the equal-size uniform case the plan is a permutation and
    :meth:`as_permutation` recovers it.
    """

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    shape: tuple
    cost: float
    method: str

    def to_dense(self):
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), self.mass)
        return out

    def as_permutation(self):
        n, m = self.shape
        if n != m or self.rows.size != n or np.unique(self.rows).size != n:
            return None
        perm = np.empty(n, dtype=np.int64)
        perm[self.rows] = self.cols
        return perm

    def marginals(self):
        n, m = self.shape
        return (
            np.bincount(self.rows, weights=self.mass, minlength=n),
            np.bincount(self.cols, weights=self.mass, minlength=m),
        )

    def evaluate(self, x, y, p):
        """Re-evaluate the cost of the stored coupling."""
        diff = x.points[self.rows] - y.points[self.cols]
        return math.fsum(self.mass * np.linalg.norm(diff, axis=1) ** p)

    def to_json(self):
        return {
            "method": self.method,
            "shape": list(self.shape),
            "cost": self.cost,
            "rows": self.rows.tolist(),
            "cols": self.cols.tolist(),
            "mass": self.mass.tolist(),
        }


def _as_emp(x, dim=None):
    return x if isinstance(x, EmpiricalMeasure) else EmpiricalMeasure(x, dim=dim)


def _check_dims(x, y):
    if x.dim != y.dim:
        raise DimensionMismatch(f"dimension mismatch: {x.dim} vs {y.dim}")


def _check_p(p):
    if not p >= 1:
        raise ValueError("p must be >= 1")


# --------------------------------------------------------------------------
# exact one-dimensional coupling


def wasserstein_1d(x, y, p=1.0):
    """Exact ``W_p^p`` on the line by matching quantile functions.

    Handles arbitrary weights with a merged sweep over the two CDFs:
    the optimal (monotone) coupling moves mass between the i-th and j-th
    order statistics on the overlap of their quantile intervals.
    """
    x, y = _as_emp(x, 1), _as_emp(y, 1)
    _check_dims(x, y)
    if x.dim != 1:
        raise DimensionMismatch("dimension mismatch: wasserstein_1d needs d = 1")
    _check_p(p)
    xi = np.argsort(x.points[:, 0], kind="stable")
    yi = np.argsort(y.points[:, 0], kind="stable")
    if x.n == y.n and x.uniform and y.uniform:
        diff = np.abs(x.points[xi, 0] - y.points[yi, 0]) ** p
        cost = math.fsum(diff) / x.n
        plan = TransportPlan(xi, yi, np.full(x.n, 1.0 / x.n), (x.n, y.n), cost, "exact-1d")
        return cost, plan
    cx = np.cumsum(x.weights[xi])
    cy = np.cumsum(y.weights[yi])
    cx[-1] = cy[-1] = 1.0
    # breakpoints of the merged quantile grid
    u = np.union1d(cx, cy)
    lo = np.concatenate(([0.0], u[:-1]))
    mass = u - lo
    keep = mass > 0
    lo, u, mass = lo[keep], u[keep], mass[keep]
    mid = 0.5 * (lo + u)
    i = np.minimum(np.searchsorted(cx, mid), x.n - 1)
    j = np.minimum(np.searchsorted(cy, mid), y.n - 1)
    rows, cols = xi[i], yi[j]
    cost = math.fsum(mass * np.abs(x.points[rows, 0] - y.points[cols, 0]) ** p)
    return cost, TransportPlan(rows, cols, mass, (x.n, y.n), cost, "exact-1d")


# --------------------------------------------------------------------------
# assignment solver


def _cost_matrix(x, y, p):
    c = cdist(x.points, y.points)
    return c if p == 1 else c**p


def wasserstein_assignment(x, y, p=1.0, cap=DEFAULT_ASSIGNMENT_CAP):
    """Exact ``W_p^p`` for equal-size uniform clouds (linear assignment)."""
    x, y = _as_emp(x), _as_emp(y)
    _check_dims(x, y)
    _check_p(p)
    if x.n != y.n or not (x.uniform and y.uniform):
        raise ValueError(
            "assignment solver needs equal sizes and uniform weights; use wasserstein_entropic instead"
        )
    if x.n > cap:
        raise SolverCapacityError(f"n = {x.n} exceeds the assignment cap {cap} (O(n^3) guard)")
    c = _cost_matrix(x, y, p)
    rows, cols = linear_sum_assignment(c)
    cost = math.fsum(c[rows, cols]) / x.n
    return cost, TransportPlan(rows, cols, np.full(x.n, 1.0 / x.n), (x.n, y.n), cost, "assignment")


# --------------------------------------------------------------------------
# entropic solver


class _Costs:
    """Cost matrix, either materialized or streamed in row blocks."""

    def __init__(self, x, y, p, materialize, block=512):
        self.x, self.y, self.p, self.block = x.points, y.points, p, block
        self.full = _cost_matrix(x, y, p) if materialize else None
        self.shape = (x.n, y.n)

    def rows(self):
        n = self.shape[0]
        for a in range(0, n, self.block):
            b = min(n, a + self.block)
            if self.full is not None:
                yield a, b, self.full[a:b]
            else:
                c = cdist(self.x[a:b], self.y)
                yield a, b, c if self.p == 1 else c**self.p

    def median(self):
        if self.full is not None:
            return float(np.median(self.full))
        rng = np.random.default_rng(0)
        i = rng.integers(0, self.shape[0], 4096)
        j = rng.integers(0, self.shape[1], 4096)
        return float(np.median(np.linalg.norm(self.x[i] - self.y[j], axis=1) ** self.p))


def _sinkhorn(costs, loga, logb, eps, f, g, iters, tol, a):
    """Log-domain Sinkhorn sweeps; returns duals, iterations used, row error."""
    err = np.inf
    row = np.empty(costs.shape[0])
    for it in range(1, iters + 1):
        col = None
        for lo, hi, c in costs.rows():
            cur = logsumexp((f[lo:hi, None] - c) / eps, axis=0)
            col = cur if col is None else np.logaddexp(col, cur)
        g = eps * (logb - col)
        for lo, hi, c in costs.rows():
            row[lo:hi] = logsumexp((g[None, :] - c) / eps, axis=1)
        # row sums of the plan after the g-update; columns are exact here
        err = float(np.abs(np.exp(f / eps + row) - a).sum())
        f = eps * (loga - row)
        if err < tol:
            break
    return f, g, it, err


def wasserstein_entropic(
    x,
    y,
    p=1.0,
    epsilon=None,
    max_iter=2000,
    tol=1e-9,
    materialize_cap=DEFAULT_ASSIGNMENT_CAP,
    return_plan=True,
):
    """Entropic transport with log-domain stabilization and feasible rounding.

    Returns ``(value, plan, converged, marginal_error)``. ``value`` is the cost
    of the rounded plan, which is feasible, hence an upper bound on the exact
    ``W_p^p``; ``marginal_error`` is the L1 row-marginal error before rounding.
    ``epsilon`` defaults to 0.05 times the median pairwise cost; the run
    anneals from the median cost down to ``epsilon``.
    """
    x, y = _as_emp(x), _as_emp(y)
    _check_dims(x, y)
    _check_p(p)
    materialize = x.n * y.n <= materialize_cap**2
    costs = _Costs(x, y, p, materialize)
    med = costs.median()
    if epsilon is None:
        epsilon = 0.05 * med
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    a, b = x.weights, y.weights
    with np.errstate(divide="ignore"):
        loga, logb = np.log(a), np.log(b)
    f = np.zeros(x.n)
    g = np.zeros(y.n)
    eps = max(med, epsilon)
    budget = max_iter
    while eps > epsilon * (1 + 1e-12) and budget > 0:
        f, g, used, _ = _sinkhorn(costs, loga, logb, eps, f, g, min(20, budget), tol, a)
        budget -= used
        eps = max(epsilon, eps / 2)
    f, g, used, err = _sinkhorn(costs, loga, logb, epsilon, f, g, max(budget, 1), tol, a)
    converged = bool(err < tol)
    value, plan = _round_plan(costs, f, g, epsilon, a, b, return_plan and materialize)
    return value, plan, converged, err


def _round_plan(costs, f, g, eps, a, b, keep):
    """Project the Gibbs plan onto the transport polytope and price it."""
    n, m = costs.shape
    rsum = np.empty(n)
    for lo, hi, c in costs.rows():
        rsum[lo:hi] = np.exp((f[lo:hi, None] + g[None, :] - c) / eps).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rs = np.where(rsum > 0, np.minimum(a / rsum, 1.0), 0.0)
    csum = np.zeros(m)
    for lo, hi, c in costs.rows():
        csum += (rs[lo:hi, None] * np.exp((f[lo:hi, None] + g[None, :] - c) / eps)).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cs = np.where(csum > 0, np.minimum(b / csum, 1.0), 0.0)
    # marginals of the scaled plan, then the rank-one correction
    r = np.zeros(n)
    cfin = np.zeros(m)
    base_cost = []
    for lo, hi, c in costs.rows():
        blk = rs[lo:hi, None] * np.exp((f[lo:hi, None] + g[None, :] - c) / eps) * cs[None, :]
        r[lo:hi] = blk.sum(axis=1)
        cfin += blk.sum(axis=0)
        base_cost.append(float((blk * c).sum()))
    er = np.maximum(a - r, 0.0)
    ec = np.maximum(b - cfin, 0.0)
    tot = er.sum()
    corr = []
    dense = np.zeros(costs.shape) if keep else None
    for lo, hi, c in costs.rows():
        if tot > 0:
            corr.append(float(er[lo:hi] @ c @ ec) / tot)
        if keep:
            blk = rs[lo:hi, None] * np.exp((f[lo:hi, None] + g[None, :] - c) / eps) * cs[None, :]
            if tot > 0:
                blk = blk + np.outer(er[lo:hi], ec) / tot
            dense[lo:hi] = blk
    value = math.fsum(base_cost) + math.fsum(corr)
    plan = None
    if keep:
        rows, cols = np.nonzero(dense)
        plan = TransportPlan(rows, cols, dense[rows, cols], costs.shape, value, "entropic")
    return value, plan


# --------------------------------------------------------------------------
# dispatch


def wasserstein(x, y, p=1.0, exact_cap=DEFAULT_EXACT_CAP, assignment_cap=DEFAULT_ASSIGNMENT_CAP, epsilon=None):
    """``W_p^p(x, y)`` with the default solver policy.

    d = 1 uses the exact quantile coupling; equal-size uniform clouds with
    n <= ``exact_cap`` use the assignment solver; everything else goes to the
    entropic solver (an upward-biased upper bound). Returns ``(value, method)``.
    """
    x, y = _as_emp(x), _as_emp(y)
    _check_dims(x, y)
    if x.dim == 1:
        return wasserstein_1d(x, y, p)[0], "exact-1d"
    if x.n == y.n and x.uniform and y.uniform and x.n <= min(exact_cap, assignment_cap):
        return wasserstein_assignment(x, y, p, cap=assignment_cap)[0], "assignment"
    value = wasserstein_entropic(x, y, p, epsilon=epsilon, materialize_cap=assignment_cap, return_plan=False)[0]
    return value, "entropic"


# --------------------------------------------------------------------------
# against a reference law


def _segment_power_integral(marg, x, lo, hi, p):
    """sum_i int_{lo_i}^{hi_i} |x_i - Q(u)|^p du, exact for p in {1, 2}."""
    if p == 1 or p == 2:
        if marg.quantile_primitive(np.array([0.5]), 1) is not None:
            P1 = lambda u: marg.quantile_primitive(u, 1)
            if p == 2:
                P2 = lambda u: marg.quantile_primitive(u, 2)
                with np.errstate(invalid="ignore"):
                    vals = x**2 * (hi - lo) - 2 * x * _diff(P1, lo, hi) + _diff(P2, lo, hi)
                return _finite_sum(np.maximum(vals, 0.0))
            # split each segment where the quantile crosses x
            s = np.clip(marg.cdf(x), lo, hi)
            with np.errstate(invalid="ignore"):
                left = x * (s - lo) - _diff(P1, lo, s)
                right = _diff(P1, s, hi) - x * (hi - s)
            return _finite_sum(np.maximum(left, 0.0) + np.maximum(right, 0.0))
    total = []
    for xi, a, b in zip(x, lo, hi):
        s = float(np.clip(marg.cdf(xi), a, b))
        f = lambda u: abs(xi - float(marg.ppf(u))) ** p
        parts = [integrate.quad(f, c, e, limit=100)[0] for c, e in ((a, s), (s, b)) if e > c]
        total.append(math.fsum(parts))
    return math.fsum(total)


def _diff(P, a, b):
    with np.errstate(invalid="ignore"):
        out = P(b) - P(a)
    return np.where(b > a, out, 0.0)


def _finite_sum(vals):
    if np.any(np.isnan(vals)) or np.any(np.isinf(vals)):
        return np.inf
    return math.fsum(vals)


def quantile_wp(x, mu, p=1.0):
    """Exact ``W_p^p(x, mu)`` in d = 1 via the quantile function of ``mu``.

    ``W_p^p = sum_i int over the i-th quantile cell of |x_(i) - Q(u)|^p du``;
    closed form for p in {1, 2}, adaptive quadrature otherwise.
    """
    x = _as_emp(x, 1)
    mu = parse_measure(mu)
    if x.dim != 1 or mu.dim != 1:
        raise DimensionMismatch("dimension mismatch: quantile route needs d = 1")
    _check_p(p)
    order = np.argsort(x.points[:, 0], kind="stable")
    xs = x.points[order, 0]
    cw = np.cumsum(x.weights[order])
    cw[-1] = 1.0
    lo = np.concatenate(([0.0], cw[:-1]))
    return _segment_power_integral(mu.marginal, xs, lo, cw, p)


def semidiscrete_wp(
    x,
    mu,
    p=1.0,
    oversample=4,
    seed=0,
    exact_cap=DEFAULT_ASSIGNMENT_CAP,
    assignment_cap=DEFAULT_ASSIGNMENT_CAP,
    draws=3,
    key=(),
):
    """Estimate ``W_p^p(x, mu)`` for an empirical ``x`` and a reference law.

    d = 1: exact quantile route, fluctuation proxy 0. Otherwise each of
    ``draws`` independent reference samples of size ``oversample * n`` is
    matched against ``x`` (each point of ``x`` replicated ``oversample``
    times, so the assignment solver applies); returns the mean and the
    half-spread of the draws. Reference draw ``j`` uses the stream
    ``(seed, *key, 7, j)``.
    """
    x = _as_emp(x)
    mu = parse_measure(mu)
    _check_dims(x, mu)
    if int(oversample) < 2:
        raise ValueError("oversample must be at least 2")
    if x.dim == 1:
        return quantile_wp(x, mu, p), 0.0
    k = int(oversample)
    m = k * x.n
    vals = []
    for j in range(draws):
        ref = mu.sample(m, seed, *key, 7, j)
        if x.uniform and m <= min(exact_cap, assignment_cap):
            rep = EmpiricalMeasure(np.repeat(x.points, k, axis=0), dim=x.dim)
            vals.append(wasserstein_assignment(rep, ref, p, cap=assignment_cap)[0])
        else:
            vals.append(wasserstein_entropic(x, ref, p, materialize_cap=assignment_cap, return_plan=False)[0])
    vals = np.array(vals)
    return float(vals.mean()), float(0.5 * (vals.max() - vals.min()))


def dual_lipschitz_lower_bound(x, mu):
    """``|mean_i |X_i|_2 - E|X|_2|``, a lower bound on ``W_1(x, mu)``.

    The euclidean norm is 1-Lipschitz, so it is admissible in the dual
    formulation of ``W_1``.
    """
    x = _as_emp(x)
    mu = parse_measure(mu)
    _check_dims(x, mu)
    target = mu.mean_euclidean_norm()
    if not np.isfinite(target):
        raise ValueError("reference has infinite mean norm; the dual bound is undefined")
    emp = math.fsum(x.weights * np.linalg.norm(x.points, axis=1))
    return abs(emp - target)
