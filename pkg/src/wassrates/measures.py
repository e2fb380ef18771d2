"""Reference and empirical measures on R^d.

Reference measures are products of i.i.d. one-dimensional marginals, which
makes every quantity the multiscale functionals need exactly computable:
the max-norm tail ``H(t) = P(|X| > t)``, masses of half-open dyadic boxes,
and the quantile primitives used by the exact one-dimensional transport.

Two norms coexist here and are never mixed: tails, blocks and cells use the
max-norm ``|x| = max_i |x_i|``; transport costs (see :mod:`wassrates.transport`)
use the euclidean norm.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "EmpiricalMeasure",
    "AnalyticMeasure",
    "AtomicMeasure",
    "MeasureCatalogEntry",
    "CATALOG",
    "parse_measure",
    "make_rng",
    "sample",
    "tail_H",
    "weak_moment",
    "strong_moment",
    "sqrt_tail_integral",
    "block_index",
    "finest_cells",
]


def make_rng(seed, *key):
    """Independent Philox stream for ``(seed, *key)``.

    Streams for distinct keys are statistically independent and need no
    shared state, so replicates can be generated in any order or process.
    """
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point cloud in R^d (uniform weights by default)."""

    points: np.ndarray
    weights: np.ndarray = None
    dim: int = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if self.dim in (None, 1) else pts.reshape(1, -1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a non-empty (n, d) array")
        dim = pts.shape[1] if self.dim is None else int(self.dim)
        if pts.shape[1] != dim:
            raise ValueError(f"points have {pts.shape[1]} coordinates, expected {dim}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        n = pts.shape[0]
        if self.weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.shape[0] != n:
                raise ValueError("weights and points differ in length")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite and non-negative")
            if abs(math.fsum(w) - 1.0) > 1e-12:
                raise ValueError(f"weights sum to {math.fsum(w)!r}, not 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dim", dim)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def uniform(self):
        return bool(np.all(self.weights == self.weights[0]))

    def head(self, k):
        """Empirical measure of the first ``k`` points (uniform weights)."""
        return EmpiricalMeasure(self.points[:k], dim=self.dim)

    def __len__(self):
        return self.n


# --------------------------------------------------------------------------
# one-dimensional marginals


class Marginal:
    """A real distribution with an exact CDF and quantile function.

    Subclasses provide ``cdf``, ``ppf`` and ``draw``; atoms override
    ``cdf_left``. ``quantile_primitive(u, k)`` returns a primitive of
    ``Q(u)**k`` for k in {1, 2} (``None`` when no closed form exists).
    """

    support = (-np.inf, np.inf)
    tail_index = np.inf  # sup of q with a finite weak moment of |X_1|
    tail_constant = 0.0  # lim t^tail_index P(|X_1| > t) when finite

    def cdf(self, x):
        raise NotImplementedError

    def cdf_left(self, x):
        return self.cdf(x)

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def sf_left(self, x):
        return 1.0 - self.cdf_left(x)

    def ppf(self, u):
        raise NotImplementedError

    def draw(self, rng, size):
        return self.ppf(rng.random(size))

    def quantile_primitive(self, u, k):
        return None

    def abs_gt(self, t):
        """P(|X_1| > t) for t >= 0, without cancellation in the far tail."""
        t = np.asarray(t, dtype=float)
        return np.clip(self.sf(t) + self.cdf_left(-t), 0.0, 1.0)

    def mean_exp_sq(self, s):
        """E exp(-s X^2), used for the euclidean mean norm."""
        val, _ = integrate.quad(lambda u: math.exp(-s * float(self.ppf(u)) ** 2), 0.0, 1.0, limit=200)
        return val


class Uniform(Marginal):
    def __init__(self, a, b):
        self.a, self.b = float(a), float(b)
        self.support = (self.a, self.b)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def ppf(self, u):
        return self.a + (self.b - self.a) * np.asarray(u, dtype=float)

    def quantile_primitive(self, u, k):
        u = np.asarray(u, dtype=float)
        w = self.b - self.a
        if k == 1:
            return self.a * u + w * u**2 / 2
        return self.a**2 * u + self.a * w * u**2 + w**2 * u**3 / 3

    def mean_exp_sq(self, s):
        if s == 0:
            return 1.0
        r = math.sqrt(s)
        return math.sqrt(math.pi) / (2 * r) * (math.erf(r * self.b) - math.erf(r * self.a)) / (self.b - self.a)


class Pareto(Marginal):
    """Classical Pareto on [1, inf): P(X > t) = t^-beta."""

    def __init__(self, beta):
        self.beta = float(beta)
        self.support = (1.0, np.inf)
        self.tail_index = self.beta
        self.tail_constant = 1.0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x >= 1.0, 1.0 - np.power(np.maximum(x, 1.0), -self.beta), 0.0)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 1.0, np.power(np.maximum(x, 1.0), -self.beta), 1.0)

    def ppf(self, u):
        return np.power(1.0 - np.asarray(u, dtype=float), -1.0 / self.beta)

    def quantile_primitive(self, u, k):
        # primitive of (1-u)^(-k/beta), up to a constant
        u = np.asarray(u, dtype=float)
        e = 1.0 - k / self.beta
        with np.errstate(divide="ignore"):
            if e == 0:
                return -np.log1p(-u)
            return -np.power(1.0 - u, e) / e

    def mean_exp_sq(self, s):
        f = lambda x: math.exp(-s * x * x) * x ** (-self.beta - 1.0)
        return self.beta * integrate.quad(f, 1.0, np.inf, limit=200)[0]


class SymmetricPareto(Marginal):
    """Random sign times a Pareto(beta) magnitude."""

    def __init__(self, beta):
        self.beta = float(beta)
        self.tail_index = self.beta
        self.tail_constant = 1.0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.maximum(np.abs(x), 1.0)
        half = 0.5 * np.power(ax, -self.beta)
        return np.where(x >= 1.0, 1.0 - half, np.where(x <= -1.0, half, 0.5))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        half = 0.5 * np.power(np.maximum(np.abs(x), 1.0), -self.beta)
        return np.where(x >= 1.0, half, np.where(x <= -1.0, 1.0 - half, 0.5))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            lo = -np.power(2.0 * u, -1.0 / self.beta)
            hi = np.power(2.0 * (1.0 - u), -1.0 / self.beta)
        return np.where(u < 0.5, lo, hi)

    def draw(self, rng, size):
        mag = np.power(1.0 - rng.random(size), -1.0 / self.beta)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * mag

    def quantile_primitive(self, u, k):
        u = np.asarray(u, dtype=float)
        e = 1.0 - k / self.beta
        sgn = -1.0 if k == 1 else 1.0

        def left(v):  # primitive of (sgn) (2v)^(-k/beta) on (0, 1/2]
            if e == 0:
                return sgn * 0.5 * np.log(2.0 * v)
            return sgn * np.power(2.0 * v, e) / (2.0 * e)

        def right(v):  # primitive of (2(1-v))^(-k/beta) on [1/2, 1)
            if e == 0:
                return -0.5 * np.log(2.0 * (1.0 - v))
            return -np.power(2.0 * (1.0 - v), e) / (2.0 * e)

        with np.errstate(divide="ignore", invalid="ignore"):
            lo = left(np.minimum(u, 0.5))
            hi = right(np.maximum(u, 0.5)) - right(0.5) + left(0.5)
        return np.where(u <= 0.5, lo, hi)

    def mean_exp_sq(self, s):
        f = lambda x: math.exp(-s * x * x) * x ** (-self.beta - 1.0)
        return self.beta * integrate.quad(f, 1.0, np.inf, limit=200)[0]


class Normal(Marginal):
    def __init__(self, sigma=1.0):
        self.sigma = float(sigma)

    def cdf(self, x):
        return special.ndtr(np.asarray(x, dtype=float) / self.sigma)

    def sf(self, x):
        return special.ndtr(-np.asarray(x, dtype=float) / self.sigma)

    def ppf(self, u):
        return self.sigma * special.ndtri(np.asarray(u, dtype=float))

    def quantile_primitive(self, u, k):
        # int_0^u z(s) ds = -phi(z(u));  int_0^u z(s)^2 ds = u - z(u) phi(z(u))
        z = special.ndtri(np.asarray(u, dtype=float))
        finite = np.isfinite(z)
        zf = np.where(finite, z, 0.0)
        phi = np.where(finite, np.exp(-0.5 * zf**2) / math.sqrt(2 * math.pi), 0.0)
        if k == 1:
            return -self.sigma * phi
        return self.sigma**2 * (np.asarray(u, dtype=float) - zf * phi)

    def mean_exp_sq(self, s):
        return 1.0 / math.sqrt(1.0 + 2.0 * s * self.sigma**2)


class Dirac(Marginal):
    def __init__(self, at):
        self.at = float(at)
        self.support = (self.at, self.at)

    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= self.at).astype(float)

    def cdf_left(self, x):
        return (np.asarray(x, dtype=float) > self.at).astype(float)

    def ppf(self, u):
        return np.full(np.shape(u), self.at)

    def quantile_primitive(self, u, k):
        return self.at**k * np.asarray(u, dtype=float)

    def mean_exp_sq(self, s):
        return math.exp(-s * self.at**2)


def _interval_mass(marg, lo, lo_closed, hi):
    """Mass of the interval (lo, hi] (or [lo, hi] where ``lo_closed``)."""
    # survival differences on the right half keep far-tail cells accurate
    by_cdf = marg.cdf(hi) - np.where(lo_closed, marg.cdf_left(lo), marg.cdf(lo))
    by_sf = np.where(lo_closed, marg.sf_left(lo), marg.sf(lo)) - marg.sf(hi)
    mass = np.where(lo > 0, by_sf, by_cdf)
    empty = (hi < lo) | ((hi == lo) & ~lo_closed)
    return np.where(empty, 0.0, np.maximum(mass, 0.0))


# --------------------------------------------------------------------------
# dyadic geometry shared with the multiscale module


def block_index(x):
    """Block index m of each point: the unique m with x in B_m.

    ``B_0 = (-1, 1]^d`` and ``B_m = (-2^m, 2^m]^d minus (-2^(m-1), 2^(m-1)]^d``.
    Exact in floating point (uses frexp, no logarithms).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    mant, expo = np.frexp(np.abs(x))
    # x > 0 needs x <= 2^m; x <= 0 needs -x < 2^m
    pos = np.where(mant == 0.5, expo - 1, expo)
    m = np.where(x > 0, pos, np.where(x < 0, expo, 0))
    return np.maximum(m.max(axis=1), 0).astype(np.int64)


def finest_cells(x, m, level):
    """Level-``level`` cell coordinates of points ``x`` rescaled from block ``m``.

    Cell c covers ``(-1 + c h, -1 + (c+1) h]`` with ``h = 2^(1-level)`` in the
    rescaled cube, i.e. ``c = ceil(y 2^(level-1)) + 2^(level-1) - 1``; every
    step is a power-of-two scaling, so faces are resolved exactly.
    """
    x = np.asarray(x, dtype=float)
    if level == 0:
        return np.zeros(x.shape, dtype=np.int64)
    y = np.ldexp(x, -np.asarray(m, dtype=np.int64).reshape(-1, 1) + (level - 1))
    c = np.ceil(y).astype(np.int64) + (1 << (level - 1)) - 1
    return np.clip(c, 0, (1 << level) - 1)


def _cell_boxes(m, level, cells):
    """Lower/upper corners of the scaled cells ``2^m F`` (half-open)."""
    cells = np.asarray(cells, dtype=np.int64)
    h = 2.0 ** (1 - level)
    lo = np.ldexp(-1.0 + cells * h, m)
    hi = np.ldexp(-1.0 + (cells + 1) * h, m)
    return lo, hi


# --------------------------------------------------------------------------
# reference measures


@dataclass(frozen=True)
class MeasureCatalogEntry:
    name: str
    params: dict = field(default_factory=dict)

    @property
    def spec(self):
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={_fmt(v)}" for k, v in self.params.items())


def _fmt(v):
    return str(int(v)) if isinstance(v, (int, np.integer)) or float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


class AnalyticMeasure:
    """Law of X = (X_1, ..., X_d) with i.i.d. coordinates drawn from ``marginal``.

    Parameters
    ----------
    dim : int
    marginal : Marginal
    entry : MeasureCatalogEntry, optional
        Catalog provenance, used for the string spec and closed forms.
    """

    has_cell_mass = True

    def __init__(self, dim, marginal, entry=None):
        if int(dim) < 1:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        self.marginal = marginal
        self.entry = entry or MeasureCatalogEntry(type(marginal).__name__.lower(), {"d": self.dim})

    def __repr__(self):
        return f"AnalyticMeasure({self.spec!r})"

    @property
    def spec(self):
        return self.entry.spec

    @property
    def name(self):
        return self.entry.name

    # sampling -------------------------------------------------------------
    def sample(self, n, seed, *key):
        if int(n) < 1:
            raise ValueError("sample size must be at least 1")
        rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, *key)
        pts = self.marginal.draw(rng, (int(n), self.dim))
        return EmpiricalMeasure(pts, dim=self.dim)

    # tails and moments ----------------------------------------------------
    def tail(self, t):
        """H(t) = P(|X| > t) in the max-norm."""
        t = np.asarray(t, dtype=float)
        s = self.marginal.abs_gt(np.maximum(t, 0.0))
        with np.errstate(divide="ignore"):
            return np.clip(-np.expm1(self.dim * np.log1p(-s)), 0.0, 1.0)

    @property
    def tail_index(self):
        return self.marginal.tail_index

    @property
    def tail_constant(self):
        # 1 - (1 - c t^-b)^d ~ d c t^-b
        return self.dim * self.marginal.tail_constant

    @property
    def radius(self):
        lo, hi = self.marginal.support
        return max(abs(lo), abs(hi))

    def mean_euclidean_norm(self):
        """E|X|_2 via E sqrt(S) = (2 sqrt(pi))^-1 int_0^inf (1 - E e^(-sS)) s^(-3/2) ds."""
        if self.tail_index <= 1:
            return np.inf
        if self.dim == 1:
            return strong_moment(self, 1.0)
        cached = self.__dict__.get("_mean_norm")
        if cached is not None:
            return cached
        d, marg = self.dim, self.marginal

        # s = v^2 removes the endpoint singularity
        def integrand(v):
            if v == 0:
                return 0.0
            phi = max(marg.mean_exp_sq(v * v), 1e-300)
            return -2.0 * math.expm1(d * math.log(phi)) / (v * v)

        with warnings.catch_warnings():
            # 1 - phi^d cancels for small v; absolute accuracy ~1e-12 is the ceiling
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            total = _tail_quad(integrand, np.inf, epsrel=1e-10, epsabs=1e-13)
        self._mean_norm = total / (2.0 * math.sqrt(math.pi))
        return self._mean_norm

    # dyadic masses --------------------------------------------------------
    def _box_mass(self, lo, hi, lo_closed):
        per = _interval_mass(self.marginal, lo, lo_closed, hi)
        return np.prod(per, axis=-1)

    def _clipped_box_mass(self, lo, hi, clip):
        lo_closed = np.zeros(lo.shape, dtype=bool)
        if clip is not None:
            # (lo, hi] intersect [-M, M]
            lo_closed = lo < -clip
            lo = np.maximum(lo, -clip)
            hi = np.minimum(hi, clip)
        return self._box_mass(lo, hi, lo_closed)

    def cell_mass(self, m, level, cells, clip=None):
        """Mass of ``2^m F intersect B_m`` (and ``[-clip, clip]^d`` if given).

        ``cells`` is a (k, d) integer array of level-``level`` cell coordinates.
        Exact: products of CDF differences, inner cube subtracted for m >= 1.
        """
        cells = np.atleast_2d(np.asarray(cells, dtype=np.int64))
        if cells.shape[-1] != self.dim:
            raise ValueError("cell coordinates do not match the dimension")
        lo, hi = _cell_boxes(m, level, cells)
        mass = self._clipped_box_mass(lo, hi, clip)
        if m >= 1:
            inner = 2.0 ** (m - 1)
            ilo = np.maximum(lo, -inner)
            ihi = np.minimum(hi, inner)
            mass = mass - self._clipped_box_mass(ilo, ihi, clip)
        return np.maximum(mass, 0.0)

    def block_mass(self, m, clip=None):
        return float(self.cell_mass(m, 0, np.zeros((1, self.dim), dtype=np.int64), clip)[0])

    def default_m_max(self, threshold=1e-6):
        """Smallest m >= 0 with H(2^(m-1)) <= threshold."""
        m = 0
        while float(self.tail(2.0 ** (m - 1))) > threshold:
            m += 1
            if m > 1000:
                raise ValueError("tail does not reach the threshold")
        return m

    # closed forms ---------------------------------------------------------
    def _strong_closed(self, q):
        marg = self.marginal
        if isinstance(marg, Dirac):
            return abs(marg.at) ** q
        if isinstance(marg, (Pareto, SymmetricPareto)):
            # 1 + q int_1^inf t^(q-1) (1 - (1 - t^-b)^d) dt, binomial expansion
            b, d = marg.beta, self.dim
            s = sum(math.comb(d, k) * (-1) ** (k + 1) / (k * b - q) for k in range(1, d + 1))
            return 1.0 + q * s
        if isinstance(marg, Uniform) and (marg.a == 0 or marg.a == -marg.b):
            # |X| = R * max of d uniforms on [0, 1]
            return self.radius**q * self.dim / (self.dim + q)
        return None

    def _sqrt_tail_closed(self, p):
        marg = self.marginal
        if isinstance(marg, (Pareto, SymmetricPareto)) and self.dim == 1:
            return 1.0 / p + 1.0 / (marg.beta / 2.0 - p)
        if isinstance(marg, Dirac):
            return abs(marg.at) ** p / p
        return None


class AtomicMeasure:
    """An empirical measure used as the reference of the multiscale functionals."""

    has_cell_mass = True

    def __init__(self, emp):
        self.emp = emp
        self.dim = emp.dim
        self.spec = f"atoms:n={emp.n},d={emp.dim}"
        self._m = block_index(emp.points)
        self._abs = np.abs(emp.points).max(axis=1)

    def tail(self, t):
        t = np.asarray(t, dtype=float)
        return np.array([math.fsum(self.emp.weights[self._abs > s]) for s in np.atleast_1d(t)]).reshape(t.shape)

    def cell_mass(self, m, level, cells, clip=None):
        cells = np.atleast_2d(np.asarray(cells, dtype=np.int64))
        sel = self._m == m
        if clip is not None:
            sel &= self._abs <= clip
        pts, w = self.emp.points[sel], self.emp.weights[sel]
        if pts.shape[0] == 0:
            return np.zeros(cells.shape[0])
        own = finest_cells(pts, np.full(pts.shape[0], m), level)
        keys, inv = np.unique(own, axis=0, return_inverse=True)
        sums = np.bincount(inv.reshape(-1), weights=w, minlength=keys.shape[0])
        table = {tuple(k): s for k, s in zip(keys.tolist(), sums)}
        return np.array([table.get(tuple(c), 0.0) for c in cells.tolist()])

    def block_mass(self, m, clip=None):
        sel = self._m == m
        if clip is not None:
            sel &= self._abs <= clip
        return math.fsum(self.emp.weights[sel])

    def default_m_max(self, threshold=1e-6):
        return int(self._m.max())


# --------------------------------------------------------------------------
# catalog


def _build_uniform(d=1):
    return AnalyticMeasure(d, Uniform(0.0, 1.0), MeasureCatalogEntry("uniform", {"d": int(d)}))


def _build_cube(d=1):
    return AnalyticMeasure(d, Uniform(-1.0, 1.0), MeasureCatalogEntry("cube", {"d": int(d)}))


def _build_pareto(beta, d=1):
    if int(d) != 1:
        raise ValueError("pareto is one-dimensional; use pareto_prod for d > 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    return AnalyticMeasure(1, Pareto(beta), MeasureCatalogEntry("pareto", {"beta": beta, "d": 1}))


def _build_pareto_prod(beta, d=1):
    if beta <= 0:
        raise ValueError("beta must be positive")
    return AnalyticMeasure(d, SymmetricPareto(beta), MeasureCatalogEntry("pareto_prod", {"beta": beta, "d": int(d)}))


def _build_gauss(d=1, sigma=1.0):
    return AnalyticMeasure(d, Normal(sigma), MeasureCatalogEntry("gauss", {"d": int(d), "sigma": sigma}))


def _build_dirac(d=1, at=0.0):
    return AnalyticMeasure(d, Dirac(at), MeasureCatalogEntry("dirac", {"d": int(d), "at": at}))


CATALOG = {
    "uniform": _build_uniform,
    "cube": _build_cube,
    "pareto": _build_pareto,
    "pareto_prod": _build_pareto_prod,
    "gauss": _build_gauss,
    "dirac": _build_dirac,
}

_INT_KEYS = {"d"}


def parse_measure(spec):
    """Resolve ``name:key=value,...`` (case-sensitive) to an AnalyticMeasure.

    >>> parse_measure("pareto:beta=1.5,d=1").spec
    'pareto:beta=1.5,d=1'
    """
    if isinstance(spec, AnalyticMeasure):
        return spec
    name, _, rest = str(spec).strip().partition(":")
    if name not in CATALOG:
        raise ValueError(f"unknown measure {name!r}; known: {', '.join(sorted(CATALOG))}")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        key = key.strip()
        if not eq or not key:
            raise ValueError(f"malformed parameter {item!r} in {spec!r}")
        if key in params:
            raise ValueError(f"duplicate parameter {key!r} in {spec!r}")
        try:
            params[key] = int(value) if key in _INT_KEYS else float(value)
        except ValueError:
            raise ValueError(f"parameter {key!r} has non-numeric value {value!r}") from None
    try:
        return CATALOG[name](**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {name!r}: {exc}") from None


# --------------------------------------------------------------------------
# module-level operations


def sample(measure, n, seed, *key):
    """``n`` i.i.d. draws from ``measure``; bit-identical for identical (seed, key)."""
    return parse_measure(measure).sample(n, seed, *key)


def tail_H(measure, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    return float(parse_measure(measure).tail(t)) if np.ndim(t) == 0 else parse_measure(measure).tail(t)


def _tail_quad(f, radius, epsrel=1e-10, epsabs=0.0):
    """int_0^radius f(t) dt over dyadic panels, radius possibly infinite.

    For infinite radius, panels [2^k, 2^(k+1)] are summed until they decay
    geometrically; the remainder is the geometric extrapolation of the last
    two panels, exact for power-law tails.
    """
    quad = lambda a, b: integrate.quad(f, a, b, limit=200, epsabs=epsabs, epsrel=epsrel)[0]
    if np.isfinite(radius):
        top = max(0, math.ceil(math.log2(max(radius, 1.0))))
        edges = sorted({0.0, radius} | {min(2.0**k, radius) for k in range(-8, top + 1)})
        return math.fsum(quad(a, b) for a, b in zip(edges, edges[1:]))
    parts = [quad(0.0, 2.0**-8)] + [quad(2.0**k, 2.0 ** (k + 1)) for k in range(-8, 0)]
    k, prev = 0, None
    while True:
        cur = quad(2.0**k, 2.0 ** (k + 1))
        parts.append(cur)
        total = math.fsum(parts)
        if prev is not None and prev > 0 and cur >= 0:
            ratio = cur / prev
            if ratio < 0.999:
                rest = cur * ratio / (1.0 - ratio)
                if rest <= 1e-12 * total or k > 4000:
                    return total + rest
        if cur == 0.0 and k > 8:
            return total
        prev, k = cur, k + 1


def weak_moment(measure, q):
    """q-th power of the weak moment, ``sup_t t^q H(t)`` (may be +inf)."""
    if q < 1:
        raise ValueError("q must be >= 1")
    mu = parse_measure(measure)
    if q > mu.tail_index:
        return np.inf
    radius = mu.radius

    def g(t):
        return t**q * float(mu.tail(t))

    hi = radius if np.isfinite(radius) else 2.0**40
    grid = np.union1d(np.geomspace(1e-6, hi, 2000), [1.0, min(hi, 1.0)])
    vals = grid**q * mu.tail(grid)
    k = int(np.argmax(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda t: -g(t), bounds=(a, b), method="bounded", options={"xatol": 1e-12 * b})
    best = max(float(vals[k]), -float(res.fun))
    if q == mu.tail_index:
        best = max(best, mu.tail_constant)
    return best


def strong_moment(measure, q, closed_form=True):
    """q-th power of the strong moment, ``E|X|^q = q int t^(q-1) H(t) dt``."""
    if q < 1:
        raise ValueError("q must be >= 1")
    mu = parse_measure(measure)
    if q >= mu.tail_index:
        return np.inf
    if closed_form:
        val = mu._strong_closed(q)
        if val is not None:
            return val
    return q * _tail_quad(lambda t: t ** (q - 1) * float(mu.tail(t)), mu.radius)


def sqrt_tail_integral(measure, p, closed_form=True):
    """``int_0^inf t^(p-1) sqrt(H(t)) dt`` (+inf when divergent)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    mu = parse_measure(measure)
    if mu.tail_index <= 2 * p:
        return np.inf
    if closed_form:
        val = mu._sqrt_tail_closed(p)
        if val is not None:
            return val
    return _tail_quad(lambda t: t ** (p - 1) * math.sqrt(float(mu.tail(t))), mu.radius)
