"""Regime classification and predicted rate exponents.

Everything here is exact: parameters are converted to ``Fraction`` so that
boundary cases such as ``p = d (r - 1) / r`` are detected by equality, not
by a float tolerance. Unknown universal constants are set to 1; envelopes are
shapes, never levels.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import optimize

__all__ = [
    "STATISTICS",
    "REGIMES",
    "NearBoundaryWarning",
    "ProblemParams",
    "RatePrediction",
    "BaumKatzWeight",
    "classify",
    "threshold",
    "moment_rate",
    "deviation_bound",
    "moderate_deviation_rate",
    "baum_katz_weights",
    "export_table",
    "as_fraction",
]

STATISTICS = ("deviation_prob", "mean", "second_moment", "r_moment", "as_rate", "lil_rate")
REGIMES = ("small_dim", "boundary", "large_dim")
SHAPE_ONLY = "shape only: universal constants set to 1"


class NearBoundaryWarning(UserWarning):
    pass


def as_fraction(x):
    """Exact rational from an int, Fraction, decimal string or float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite parameter {x!r}")
    exact = Fraction(repr(x))
    # floats such as 2/3 or 1/0.75 snap to the simple fraction they round from
    simple = exact.limit_denominator(1000)
    return simple if abs(float(simple) - x) <= 4 * math.ulp(x) else exact


def _fmt(q):
    return None if q is None else str(q)


@dataclass(frozen=True)
class ProblemParams:
    p: Fraction
    d: int
    r: Fraction
    moment_kind: str = "weak"
    sqrt_h: Optional[bool] = None  # whether int t^(p-1) sqrt(H) < inf is assumed
    dim_override: Optional[int] = None  # probe d' < d; predictions then carry no assertion

    def __post_init__(self):
        object.__setattr__(self, "p", as_fraction(self.p))
        object.__setattr__(self, "r", as_fraction(self.r))
        if int(self.d) != self.d:
            raise ValueError("d must be an integer")
        object.__setattr__(self, "d", int(self.d))
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.r <= 1:
            raise ValueError(f"r must be > 1, got {self.r}")
        if self.moment_kind not in ("weak", "strong"):
            raise ValueError("moment_kind must be 'weak' or 'strong'")
        if self.dim_override is not None and not 1 <= int(self.dim_override) <= self.d:
            raise ValueError("dim_override must lie in [1, d]")

    @property
    def dim(self):
        return self.d if self.dim_override is None else int(self.dim_override)

    @property
    def has_sqrt_h(self):
        # a strong or weak moment of order rp with r > 2 makes sqrt(H) integrable
        return bool(self.sqrt_h) or self.r > 2

    def to_json(self):
        return {
            "p": str(self.p),
            "d": self.d,
            "r": str(self.r),
            "moment_kind": self.moment_kind,
            "sqrt_h": self.sqrt_h,
            "dim_override": self.dim_override,
        }


@dataclass(frozen=True)
class RatePrediction:
    statistic: str
    regime: str
    exponent: Optional[Fraction]  # power of n; None means no prediction
    log_power: Fraction = Fraction(0)
    x_power: Fraction = Fraction(0)
    loglog_power: Fraction = Fraction(0)
    source: str = ""
    terms: tuple = ()  # (exponent, log_power) of each summand of the bound
    note: str = SHAPE_ONLY
    asserted: bool = True
    warnings: tuple = field(default=(), compare=False)

    @property
    def has_prediction(self):
        return self.exponent is not None

    def to_json(self):
        return {
            "statistic": self.statistic,
            "regime": self.regime,
            "exponent": _fmt(self.exponent),
            "log_power": _fmt(self.log_power),
            "x_power": _fmt(self.x_power),
            "loglog_power": _fmt(self.loglog_power),
            "source": self.source,
            "terms": [[_fmt(e), _fmt(l)] for e, l in self.terms],
            "note": self.note,
            "asserted": self.asserted,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, obj):
        def fr(s):
            return None if s is None else Fraction(s)

        return cls(
            statistic=obj["statistic"],
            regime=obj["regime"],
            exponent=fr(obj["exponent"]),
            log_power=fr(obj["log_power"]),
            x_power=fr(obj["x_power"]),
            loglog_power=fr(obj.get("loglog_power", "0")),
            source=obj["source"],
            terms=tuple((fr(e), fr(l)) for e, l in obj.get("terms", [])),
            note=obj.get("note", SHAPE_ONLY),
            asserted=obj.get("asserted", True),
            warnings=tuple(obj.get("warnings", [])),
        )


# --------------------------------------------------------------------------
# regimes


def threshold(params):
    """``d min((r - 1)/r, 1/2)``."""
    return params.dim * min((params.r - 1) / params.r, Fraction(1, 2))


def _compare(p, thr):
    return "small_dim" if p > thr else "boundary" if p == thr else "large_dim"


def classify(params):
    return _compare(params.p, threshold(params))


def _near(p, thr):
    if p != thr and abs(p - thr) < Fraction(1, 50) * p:
        msg = f"p = {p} is within 2% of the regime threshold {thr}; finite-n slopes may mix regimes"
        warnings.warn(msg, NearBoundaryWarning, stacklevel=3)
        return (msg,)
    return ()


def _prediction(params, statistic, regime, exponent, log_power=0, source="", thr=None, **kw):
    warn = _near(params.p, thr if thr is not None else threshold(params))
    terms = kw.pop("terms", None)
    if terms is None:
        terms = () if exponent is None else ((exponent, Fraction(log_power)),)
    return RatePrediction(
        statistic=statistic,
        regime=regime,
        exponent=exponent,
        log_power=Fraction(log_power),
        source=source,
        terms=tuple(terms),
        asserted=params.dim_override is None,
        warnings=warn,
        **kw,
    )


# --------------------------------------------------------------------------
# moment rates


def _mean(params):
    p, d, r = params.p, params.dim, params.r
    if r < 2:
        thr = d * (r - 1) / r
        reg = _compare(p, thr)
        if reg == "small_dim":
            return _prediction(params, "mean", reg, -(r - 1) / r, 0, "first moment, weak moment of order rp", thr)
        if reg == "boundary":
            return _prediction(params, "mean", reg, -p / d, 2, "first moment, weak moment of order rp", thr)
        return _prediction(params, "mean", reg, -p / d, 0, "first moment, weak moment of order rp", thr)
    half = Fraction(d, 2)
    reg = _compare(p, half)
    if r == 2 and not params.has_sqrt_h:
        # weak moment of order 2p only
        src = "first moment, weak moment of order 2p"
        if reg == "small_dim":
            return _prediction(params, "mean", reg, Fraction(-1, 2), 1, src, half)
        if reg == "boundary":
            return _prediction(params, "mean", reg, Fraction(-1, 2), 2, src, half)
        return _prediction(params, "mean", reg, -p / d, 0, src, half)
    # sqrt(H) integrable: ||W||_1 <= ||W||_2 and the second-moment bound
    src = "first moment via the second moment"
    if reg == "small_dim":
        return _prediction(params, "mean", reg, Fraction(-1, 2), 0, src, half)
    if reg == "boundary":
        return _prediction(params, "mean", reg, Fraction(-1, 2), 1, src, half)
    return _prediction(params, "mean", reg, -p / d, 0, src, half)


def _second_moment(params):
    if not params.has_sqrt_h:
        raise ValueError("second_moment needs int t^(p-1) sqrt(H(t)) dt < inf (set sqrt_h=True or r > 2)")
    p, d = params.p, params.dim
    half = Fraction(d, 2)
    reg = _compare(p, half)
    src = "second moment, sqrt-tail condition"
    if reg == "small_dim":
        return _prediction(params, "second_moment", reg, Fraction(-1), 0, src, half)
    if reg == "boundary":
        return _prediction(params, "second_moment", reg, Fraction(-1), 2, src, half)
    return _prediction(params, "second_moment", reg, -2 * p / d, 0, src, half)


def _r_moment(params, eps):
    p, d, r = params.p, params.dim, params.r
    if r == 2:
        raise ValueError("the r-th moment with r = 2 is the statistic 'second_moment'")
    if r < 2:
        thr = d * (r - 1) / r
        reg = _compare(p, thr)
        if reg == "small_dim":
            return _prediction(params, "r_moment", reg, -(r - 1), 0, "von Bahr-Esseen type", thr)
        if reg == "boundary":
            return _prediction(params, "r_moment", reg, -(r - 1), r, "von Bahr-Esseen type, boundary case", thr)
        return _prediction(params, "r_moment", reg, -r * p / d, 0, "von Bahr-Esseen type", thr)
    eps = as_fraction(eps)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    half = Fraction(d, 2)
    upper = d * (r - 1) / r
    src = "Rosenthal type"
    if p > upper:
        terms = ((-r / 2, Fraction(0)), (-(r - 1), Fraction(0)))
        return _prediction(params, "r_moment", "small_dim", -r / 2, 0, src, half, terms=terms)
    if p > half:
        gamma = eps * (2 * p - d) / (d * (r - 2 + eps))
        terms = ((-r / 2, Fraction(0)), (gamma - p * r / d, Fraction(0)))
        return _prediction(params, "r_moment", "small_dim", max(-r / 2, gamma - p * r / d), 0, src, half, terms=terms)
    if p == half:
        terms = ((-r / 2, r), (-r / 2, Fraction(2)))
        return _prediction(params, "r_moment", "boundary", -r / 2, max(r, Fraction(2)), src, half, terms=terms)
    return _prediction(params, "r_moment", "large_dim", -r * p / d, 0, src, half)


def _as_rate(params):
    p, d, r = params.p, params.dim, params.r
    if not 1 < r < 2:
        raise ValueError("as_rate needs r in (1, 2)")
    thr = d * (r - 1) / r
    reg = _compare(p, thr)
    src = "almost sure rate"
    if reg == "small_dim":
        return _prediction(params, "as_rate", reg, -(r - 1) / r, 0, src, thr)
    if reg == "boundary":
        return _prediction(params, "as_rate", reg, None, 0, src + " (boundary not covered: no prediction)", thr)
    return _prediction(params, "as_rate", reg, -p / d, 1 / r, src, thr)


def _lil_rate(params):
    if not params.has_sqrt_h:
        raise ValueError("lil_rate needs int t^(p-1) sqrt(H(t)) dt < inf (set sqrt_h=True or r > 2)")
    p, d = params.p, params.dim
    half = Fraction(d, 2)
    reg = _compare(p, half)
    src = "LIL-type bound"
    if reg == "small_dim":
        return _prediction(params, "lil_rate", reg, Fraction(-1, 2), 0, src, half, loglog_power=Fraction(1, 2))
    if reg == "boundary":
        return _prediction(params, "lil_rate", reg, None, 0, src + " (p = d/2 not covered: no prediction)", half)
    return _prediction(params, "lil_rate", reg, -p / d, 0, src, half, loglog_power=p / d)


def _deviation(params):
    """Decay in n of P(W_p^p > x) at fixed x."""
    p, d, r = params.p, params.dim, params.r
    if r == 2:
        raise ValueError("deviation bounds cover r in (1, 2) and r > 2 only")
    if r > 2:
        # exponential term plus x^-q n^(-q/2) with any q > r; the polynomial term dominates
        reg = classify(params)
        return _prediction(
            params, "deviation_prob", reg, -(r - 1), 0, "deviation, r > 2", x_power=-r,
            terms=((-(r - 1), Fraction(0)),),
        )
    thr = d * (r - 1) / r
    reg = _compare(p, thr)
    src = "deviation, r in (1, 2)"
    if reg == "small_dim":
        return _prediction(params, "deviation_prob", reg, -(r - 1), 0, src, thr, x_power=-r)
    if reg == "boundary":
        # (log n)^r times (1 + log_+(c n^(r/(dr-d))))^r at fixed x
        return _prediction(params, "deviation_prob", reg, -(r - 1), 2 * r, src, thr, x_power=-r)
    return _prediction(params, "deviation_prob", reg, -r * p / d, 0, src, thr, x_power=-r)


def moment_rate(params, statistic, epsilon=Fraction(1, 10)):
    """Predicted decay of ``statistic`` of ``W_p^p(mu_n, mu)`` as a power of ``n``."""
    if statistic == "mean":
        return _mean(params)
    if statistic == "second_moment":
        return _second_moment(params)
    if statistic == "r_moment":
        return _r_moment(params, epsilon)
    if statistic == "as_rate":
        return _as_rate(params)
    if statistic == "lil_rate":
        return _lil_rate(params)
    if statistic == "deviation_prob":
        return _deviation(params)
    raise ValueError(f"unknown statistic {statistic!r}; expected one of {STATISTICS}")


# --------------------------------------------------------------------------
# deviation envelopes


def _boundary_shape(u, r, p, d, x, norm):
    # u = log n
    lp = math.log(x) / p + u * r / (d * r - d) - math.log(norm)
    return u**r * (1.0 + max(lp, 0.0)) ** r * math.exp(-(r - 1) * u)


@functools.lru_cache(maxsize=256)
def _majorant_table(r, p, d, x, norm):
    """Local maxima of the boundary shape on a fixed grid in u = log n, with suffix maxima."""
    f = functools.partial(_boundary_shape, r=r, p=p, d=d, x=x, norm=norm)
    top = 60.0 / (r - 1.0) + 60.0
    grid = np.linspace(0.0, top, 20001)
    vals = np.array([f(u) for u in grid])
    peaks = [float(grid[0])]
    for i in np.flatnonzero((vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:])) + 1:
        res = optimize.minimize_scalar(lambda u: -f(u), bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                                       options={"xatol": 1e-12})
        peaks.append(float(res.x))
    peaks = np.array(sorted(peaks))
    pv = np.array([f(u) for u in peaks])
    suffix = np.maximum.accumulate(pv[::-1])[::-1]
    return top, peaks, suffix


def _boundary_majorant(u0, r, p, d, x, norm):
    top, peaks, suffix = _majorant_table(r, p, d, x, norm)
    here = _boundary_shape(u0, r, p, d, x, norm)
    if u0 >= top:
        return here
    i = int(np.searchsorted(peaks, u0, side="left"))
    return max(here, float(suffix[i])) if i < peaks.size else here


def deviation_bound(params, n, x, q=None, moment_norm=1.0, sqrt_tail=1.0):
    """Envelope of ``P(W_p^p(mu_n, mu) > x)`` with constants set to 1.

    ``moment_norm`` is ``||X||_{rp,w}`` and ``sqrt_tail`` the integral of
    ``t^(p-1) sqrt(H)``. At the boundary the stated bound is not monotone in
    ``n`` for small ``n``; its non-increasing majorant ``sup_{m >= n}`` is
    returned instead (still a valid envelope).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not x > 0:
        raise ValueError("x must be positive")
    p, d, r = float(params.p), params.dim, float(params.r)
    if params.r == 2:
        raise ValueError("deviation bounds cover r in (1, 2) and r > 2 only")
    if params.r < 2:
        reg = _compare(params.p, params.dim * (params.r - 1) / params.r)
        if reg == "small_dim":
            return moment_norm ** (r * p) * x**-r * n ** -(r - 1)
        if reg == "large_dim":
            return moment_norm ** (r * p) * x**-r * n ** -(r * p / d)
        shape = _boundary_majorant(math.log(n), r, p, d, float(x), float(moment_norm))
        return moment_norm ** (r * p) * x**-r * shape
    q = r + 1.0 if q is None else float(q)
    if q <= r:
        raise ValueError("q must exceed r")
    y = x / moment_norm**p
    half = Fraction(d, 2)
    if y > 1.0:  # indicator x <= A with A = 1
        a = 0.0
    elif params.p > half:
        a = math.exp(-n * y * y)
    elif params.p == half:
        a = math.exp(-n * (y / math.log(2.0 + 1.0 / y)) ** 2)
    else:
        a = math.exp(-n * y ** (d / p))
    return a + moment_norm ** (r * p) * x**-r * n ** -(r - 1) + x**-q * n ** (-q / 2) * sqrt_tail**q


# --------------------------------------------------------------------------
# moderate deviations and Baum-Katz weights


@dataclass(frozen=True)
class BaumKatzWeight:
    admissible: bool
    exponent: Optional[Fraction]  # weight n^exponent
    interval: Optional[tuple]  # (lo, lo_closed, hi) with hi always closed
    source: str
    message: str = ""

    def to_json(self):
        iv = None
        if self.interval is not None:
            lo, closed, hi = self.interval
            iv = {"lo": str(lo), "lo_closed": closed, "hi": str(hi)}
        return {
            "admissible": self.admissible,
            "exponent": _fmt(self.exponent),
            "interval": iv,
            "source": self.source,
            "message": self.message,
        }


def _interval_text(lo, closed, hi):
    return f"{'[' if closed else '('}{lo}, {hi}]"


def _in(alpha, lo, closed, hi):
    return (alpha >= lo if closed else alpha > lo) and alpha <= hi


def baum_katz_weights(params, alpha):
    """Weight exponent for which the maximal-deviation series converges, or a refusal."""
    alpha = as_fraction(alpha)
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    p, d, r = params.p, params.dim, params.r
    if 1 < r < 2:
        thr = d * (r - 1) / r
        reg = _compare(p, thr)
        src = "Baum-Katz type, r in (1, 2)"
        if reg == "boundary":
            return BaumKatzWeight(False, None, None, src, "p = d(r-1)/r is not covered: no prediction")
        if reg == "small_dim":
            iv, expo = (1 / r, True, Fraction(1)), alpha * r - 2
        else:
            iv, expo = (Fraction(d - p) / d, False, Fraction(1)), (p * r - (1 - alpha) * r * d - d) / d
    elif r > 2:
        src = "Baum-Katz type, r > 2"
        iv, expo = (max(Fraction(1, 2), Fraction(d - p) / d), False, Fraction(1)), alpha * r - 2
    else:
        return BaumKatzWeight(False, None, None, "", "r = 2 is not covered: no prediction")
    if not _in(alpha, *iv):
        return BaumKatzWeight(False, None, iv, src, f"alpha = {alpha} outside the admissible interval {_interval_text(*iv)}")
    return BaumKatzWeight(True, expo, iv, src)


def moderate_deviation_rate(params, alpha):
    """Decay exponent of ``P(W_p^p > x n^(alpha - 1))``; ``None`` exponent when alpha is inadmissible."""
    alpha = as_fraction(alpha)
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    p, d, r = params.p, params.dim, params.r
    if 1 < r < 2:
        thr = d * (r - 1) / r
        reg = _compare(p, thr)
        src = "moderate deviation, r in (1, 2)"
        if reg == "small_dim":
            iv, expo, logp = (1 / r, True), -(alpha * r - 1), Fraction(0)
        elif reg == "boundary":
            iv, expo, logp = (1 / r, False), -(alpha * r - 1), 2 * r
        else:
            iv, expo, logp = (Fraction(d - p) / d, True), -(p * r - (1 - alpha) * r * d) / d, Fraction(0)
    elif r > 2:
        reg = classify(params)
        src = "moderate deviation, r > 2"
        iv, expo, logp = (max(Fraction(1, 2), Fraction(d - p) / d), False), -(alpha * r - 1), Fraction(0)
        thr = threshold(params)
    else:
        raise ValueError("moderate deviations cover r in (1, 2) and r > 2 only")
    if not _in(alpha, iv[0], iv[1], Fraction(1)):
        return _prediction(
            params, "deviation_prob", reg, None, 0,
            f"{src}: alpha = {alpha} outside {_interval_text(iv[0], iv[1], 1)}", thr, x_power=-r,
        )
    return _prediction(params, "deviation_prob", reg, expo, logp, src, thr, x_power=-r)


# --------------------------------------------------------------------------
# table export


def _default_grid():
    ps = [Fraction(1), Fraction(3, 2), Fraction(2)]
    ds = [1, 2, 3, 4]
    rs = [Fraction(6, 5), Fraction(3, 2), Fraction(2), Fraction(3), Fraction(4)]
    return [(p, d, r) for p in ps for d in ds for r in rs]


def export_table(grid=None, statistics=STATISTICS, epsilon=Fraction(1, 10)):
    """Rows of predictions over a parameter grid; incompatible combinations are skipped."""
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearBoundaryWarning)
        for p, d, r in grid or _default_grid():
            params = ProblemParams(p, d, r, sqrt_h=True if as_fraction(r) >= 2 else None)
            for stat in statistics:
                try:
                    pred = moment_rate(params, stat, epsilon)
                except ValueError:
                    continue
                row = {"p": str(params.p), "d": params.d, "r": str(params.r)}
                row.update(pred.to_json())
                rows.append(row)
    return rows
