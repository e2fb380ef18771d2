"""Dyadic multiscale discrepancies dominating ``W_p^p``.

Blocks ``B_0 = (-1, 1]^d`` and ``B_m = (-2^m, 2^m]^d minus (-2^(m-1), 2^(m-1)]^d``
are rescaled into ``(-1, 1]^d`` and cut into the ``2^(d l)`` half-open cubes
of level ``l``. Two functionals are computed on truncated ranges
``m <= m_max``, ``l <= l_max``::

    Delta_p = sum_m 2^(pm) sum_l 2^(-pl) sum_F |mu(2^m F & B_m) - nu(2^m F & B_m)|

    D_p = sum_m 2^(pm) |mu(B_m) - nu(B_m)|
          + sum_m 2^(pm) (mu(B_m) ^ nu(B_m)) (2^p - 1)/2
                * sum_{l>=1} 2^(-pl) sum_F |mu(.)/mu(B_m) - nu(.)/nu(B_m)|

together with explicit bounds on the omitted terms. Empirical cells are
stored sparsely; the reference mass of the unoccupied cells of a level is
recovered as block mass minus occupied mass, so no level is enumerated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .measures import AtomicMeasure, EmpiricalMeasure, block_index, finest_cells, parse_measure

__all__ = [
    "DyadicCellKey",
    "MultiscaleProfile",
    "KappaStats",
    "cell_key",
    "default_l_max",
    "default_truncation_M",
    "delta_p",
    "d_p_functional",
    "empirical_kappa",
    "lemma_ratio",
]


@dataclass(frozen=True)
class DyadicCellKey:
    m: int
    level: int
    cell: tuple

    def __post_init__(self):
        if self.m < 0 or self.level < 0:
            raise ValueError("block index and level must be non-negative")
        if any(not 0 <= c < 2**self.level for c in self.cell):
            raise ValueError(f"cell {self.cell} out of range for level {self.level}")


def cell_key(x, m, level):
    """Cell of point ``x`` (which must lie in ``B_m``) at the given level."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    if int(block_index(x)[0]) != m:
        raise ValueError(f"point {x[0].tolist()} is not in block B_{m}")
    c = finest_cells(x, m, level)[0]
    return DyadicCellKey(int(m), int(level), tuple(int(v) for v in c))


def default_l_max(d):
    return 10 if d <= 2 else 6 if d == 3 else 4


def default_truncation_M(n, x, p, d, regime):
    """Split radius used by the deviation arguments: ``(n x)^(1/p)`` or ``n^(1/d) x^(1/p)``."""
    if regime == "large_dim":
        return n ** (1.0 / d) * x ** (1.0 / p)
    return (n * x) ** (1.0 / p)


def lemma_ratio(p):
    """Constant in ``D_p <= max(3/2, (2^p - 1)/2) Delta_p``."""
    return max(1.5, (2.0**p - 1.0) / 2.0)


@dataclass
class MultiscaleProfile:
    p: float
    m_max: int
    l_max: int
    block_discrepancy: np.ndarray  # |mu_n(B_m) - nu(B_m)|, m <= m_max
    level_sums: np.ndarray  # [m, l] -> sum_F |mu_n - nu| on level-l cells of B_m
    normalized_sums: np.ndarray  # [m, l] -> same with block-normalized masses
    sample_block_mass: np.ndarray
    reference_block_mass: np.ndarray
    block_counts: np.ndarray  # number of sample points per block
    cell_count_totals: np.ndarray  # [m, l] -> sum of per-cell counts
    delta_p: float
    d_p: float
    tail_bound: float  # bound on the omitted terms of delta_p
    d_p_tail_bound: float
    M: float = None
    a_pm: float = None
    b_pm: float = None
    split_level_sums: tuple = field(default=None, repr=False)

    @property
    def per_block(self):
        """Contribution of each block to ``delta_p``."""
        m = np.arange(self.m_max + 1)
        l = np.arange(self.l_max + 1)
        return 2.0 ** (self.p * m) * (self.level_sums * 2.0 ** (-self.p * l)[None, :]).sum(axis=1)

    def summary(self):
        out = {
            "p": self.p,
            "m_max": self.m_max,
            "l_max": self.l_max,
            "delta_p": self.delta_p,
            "d_p": self.d_p,
            "tail_bound": self.tail_bound,
            "d_p_tail_bound": self.d_p_tail_bound,
        }
        if self.M is not None:
            out.update(M=self.M, a_pm=self.a_pm, b_pm=self.b_pm)
        return out

    def to_json(self):
        out = self.summary()
        for key in (
            "block_discrepancy",
            "level_sums",
            "normalized_sums",
            "sample_block_mass",
            "reference_block_mass",
            "block_counts",
            "cell_count_totals",
        ):
            out[key] = np.asarray(getattr(self, key)).tolist()
        return out


# --------------------------------------------------------------------------
# core pass


class _Ref:
    """Reference masses, optionally restricted to the closed cube [-M, M]^d or its complement."""

    def __init__(self, ref, clip=None, complement=False):
        self.ref, self.clip, self.complement = ref, clip, complement

    def cell(self, m, level, cells):
        if self.clip is None:
            return self.ref.cell_mass(m, level, cells)
        inside = self.ref.cell_mass(m, level, cells, clip=self.clip)
        if not self.complement:
            return inside
        return np.maximum(self.ref.cell_mass(m, level, cells) - inside, 0.0)

    def block(self, m):
        if self.clip is None:
            return self.ref.block_mass(m)
        inside = self.ref.block_mass(m, clip=self.clip)
        return max(self.ref.block_mass(m) - inside, 0.0) if self.complement else inside


def _encode(cells, level):
    key = np.zeros(cells.shape[0], dtype=np.int64)
    for i in range(cells.shape[1]):
        key |= cells[:, i] << (level * i)
    return key


def _decode(keys, level, d):
    mask = (1 << level) - 1
    return np.stack([(keys >> (level * i)) & mask for i in range(d)], axis=1) if level else np.zeros(
        (keys.size, d), dtype=np.int64
    )


def _level_pass(pts, w, blocks, ref, m_max, l_max):
    """Per-(m, l) absolute and normalized discrepancy sums."""
    d = pts.shape[1]
    if d * l_max > 62:
        raise ValueError("l_max too large for this dimension")
    L = l_max + 1
    S = np.zeros((m_max + 1, L))
    N = np.zeros((m_max + 1, L))
    counts = np.zeros((m_max + 1, L), dtype=np.int64)
    emp_block = np.zeros(m_max + 1)
    ref_block = np.zeros(m_max + 1)
    nblock = np.zeros(m_max + 1, dtype=np.int64)
    for m in range(m_max + 1):
        sel = blocks == m
        P, W = pts[sel], w[sel]
        B = ref.block(m)
        A = math.fsum(W)
        emp_block[m], ref_block[m], nblock[m] = A, B, P.shape[0]
        if P.shape[0] == 0:
            S[m] = B
            N[m] = 1.0 if B > 0 else 0.0
            continue
        fine = finest_cells(P, m, l_max)
        for level in range(L):
            coarse = fine >> (l_max - level)
            keys, inv = np.unique(_encode(coarse, level), return_inverse=True)
            inv = inv.reshape(-1)
            emp = np.bincount(inv, weights=W, minlength=keys.size)
            counts[m, level] = int(np.bincount(inv, minlength=keys.size).sum())
            refm = ref.cell(m, level, _decode(keys, level, d))
            unocc = max(B - math.fsum(refm), 0.0)
            S[m, level] = math.fsum(np.abs(emp - refm)) + unocc
            if A > 0 and B > 0:
                N[m, level] = math.fsum(np.abs(emp / A - refm / B)) + unocc / B
            elif A > 0:
                N[m, level] = 1.0
    return S, N, counts, emp_block, ref_block, nblock


def _far_reference(ref, p, m_max):
    """sum_{m > m_max} 2^(pm) nu(B_m), extrapolating geometric decay."""
    if isinstance(ref, AtomicMeasure):
        blocks = ref._m
        far = blocks > m_max
        return math.fsum(ref.emp.weights[far] * 2.0 ** (p * blocks[far]))
    terms = []
    prev = None
    for m in range(m_max + 1, m_max + 400):
        t = 2.0 ** (p * m) * ref.block_mass(m)
        terms.append(t)
        total = math.fsum(terms)
        if prev is not None and prev > 0:
            ratio = t / prev
            if ratio >= 1.0 and m > m_max + 8:
                return np.inf
            if ratio < 1.0 and t * ratio / (1.0 - ratio) <= 1e-16 * max(total, 1e-300):
                return total + t * ratio / (1.0 - ratio)
        if t == 0.0 and m > m_max + 2 and np.isfinite(ref.radius) and 2.0 ** (m - 1) > ref.radius:
            return total
        prev = t
    return np.inf


def _as_reference(reference):
    if isinstance(reference, EmpiricalMeasure):
        return AtomicMeasure(reference)
    ref = parse_measure(reference) if isinstance(reference, str) else reference
    if not getattr(ref, "has_cell_mass", False):
        raise ValueError("reference measure has no cell-mass oracle")
    return ref


def _weighted(S, p, from_level=0):
    m = np.arange(S.shape[0])
    l = np.arange(S.shape[1])
    wl = 2.0 ** (-p * l)
    wl[:from_level] = 0.0
    return math.fsum((2.0 ** (p * m)[:, None] * wl[None, :] * S).ravel())


def delta_p(sample, reference, p=1.0, m_max=None, l_max=None, M=None):
    """Multiscale profile of ``sample`` against ``reference``.

    ``reference`` is a catalog measure (exact cell masses) or an empirical
    measure (masses of its atoms). ``M`` additionally computes the split
    into the closed cube ``[-M, M]^d`` and its complement.
    """
    if not p >= 1:
        raise ValueError("p must be >= 1")
    if not isinstance(sample, EmpiricalMeasure):
        sample = EmpiricalMeasure(sample)
    ref = _as_reference(reference)
    if ref.dim != sample.dim:
        raise ValueError(f"dimension mismatch: {sample.dim} vs {ref.dim}")
    d = sample.dim
    if l_max is None:
        l_max = default_l_max(d)
    if m_max is None:
        m_max = ref.default_m_max()
    if m_max < 0 or l_max < 0:
        raise ValueError("truncation levels must be non-negative")
    pts, w = sample.points, sample.weights
    blocks = block_index(pts)
    S, N, counts, A, B, nblock = _level_pass(pts, w, blocks, _Ref(ref), m_max, l_max)

    delta = _weighted(S, p)
    c = (2.0**p - 1.0) / 2.0
    mm = 2.0 ** (p * np.arange(m_max + 1))
    block_term = math.fsum(mm * S[:, 0])
    # per-block inner sums, without the 2^(pm) factor applied by _weighted
    inner = c * np.array([_weighted(N[i : i + 1], p, from_level=1) for i in range(m_max + 1)])
    d_val = block_term + math.fsum(mm * np.minimum(A, B) * inner)

    # omitted terms
    far = blocks > m_max
    emp_far = math.fsum(w[far] * 2.0 ** (p * blocks[far]))
    ref_far = _far_reference(ref, p, m_max)
    level_tail = math.fsum(mm * (A + B)) * 2.0 ** (-p * l_max) / (2.0**p - 1.0)
    tail = level_tail + (emp_far + ref_far) / (1.0 - 2.0**-p)
    # an omitted block adds at most 2^(pm) (|a - b| + min(a, b)) <= 1.5 * 2^(pm) (a + b)
    d_tail = math.fsum(mm * np.minimum(A, B)) * 2.0 ** (-p * l_max) + 1.5 * (emp_far + ref_far)

    prof = MultiscaleProfile(
        p=float(p),
        m_max=int(m_max),
        l_max=int(l_max),
        block_discrepancy=S[:, 0].copy(),
        level_sums=S,
        normalized_sums=N,
        sample_block_mass=A,
        reference_block_mass=B,
        block_counts=nblock,
        cell_count_totals=counts,
        delta_p=delta,
        d_p=d_val,
        tail_bound=tail,
        d_p_tail_bound=d_tail,
    )
    if M is not None:
        if not M > 0:
            raise ValueError("M must be positive")
        inside = np.abs(pts).max(axis=1) <= M
        SA = _level_pass(pts[inside], w[inside], blocks[inside], _Ref(ref, M), m_max, l_max)[0]
        SB = _level_pass(pts[~inside], w[~inside], blocks[~inside], _Ref(ref, M, True), m_max, l_max)[0]
        prof.M = float(M)
        prof.a_pm = _weighted(SA, p)
        prof.b_pm = _weighted(SB, p)
        prof.split_level_sums = (SA, SB)
    return prof


def d_p_functional(sample, reference, p=1.0, m_max=None, l_max=None):
    """Two-level functional ``D_p``; returns ``(value, tail_bound)``."""
    prof = delta_p(sample, reference, p, m_max, l_max)
    return prof.d_p, prof.d_p_tail_bound


# --------------------------------------------------------------------------
# empirical constant


@dataclass
class KappaStats:
    max_ratio: float
    median_ratio: float
    trend_slope: float
    trend_pvalue: float
    growth: bool
    count: int

    def to_json(self):
        return asdict(self)


def empirical_kappa(series, alpha=0.05):
    """Ratio statistics of ``W_p^p / D_p`` over ``(n, w, d)`` observations.

    ``growth`` flags a positive trend of the ratio in ``log n`` at level
    ``alpha`` (one-sided t-test on the regression slope). A zero ``D_p`` with
    positive ``W_p^p`` contradicts the domination inequality and raises.
    """
    rows = np.asarray(series, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != 3:
        raise ValueError("series must be (n, W, D) triples")
    n, wv, dv = rows.T
    bad = (dv <= 0) & (wv > 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ArithmeticError(f"D_p = 0 but W_p^p = {wv[i]!r} > 0 at n = {int(n[i])}")
    keep = dv > 0
    if keep.sum() < 5:
        raise ValueError("need at least 5 observations with D_p > 0")
    n, ratio = n[keep], wv[keep] / dv[keep]
    if np.unique(n).size >= 2 and np.ptp(ratio) > 0:
        fit = stats.linregress(np.log(n), ratio)
        slope = float(fit.slope)
        pval = float(fit.pvalue / 2 if slope > 0 else 1 - fit.pvalue / 2)
    else:
        slope, pval = 0.0, 1.0
    return KappaStats(
        max_ratio=float(ratio.max()),
        median_ratio=float(np.median(ratio)),
        trend_slope=slope,
        trend_pvalue=pval,
        growth=bool(pval < alpha),
        count=int(ratio.size),
    )
