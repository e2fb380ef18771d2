"""Cross-module invariant suite, run by ``wassrates verify``.

Each group is a list of named checks that raise ``AssertionError`` on
failure. The suite is sized to finish in well under a minute; the pytest
suite runs the same properties on larger instances.
"""

from __future__ import annotations

import contextlib
import json
import math
import time
import traceback
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import measures, multiscale, theory
from .experiments import ExperimentConfig, fit_loglog_slope, run_moment_rate, verdict
from .measures import EmpiricalMeasure, make_rng, parse_measure
from .transport import wasserstein_1d, wasserstein_assignment, wasserstein_entropic

GROUPS = ("measures", "transport", "multiscale", "theory", "experiments")
FAULTS = ("cell-boundary",)

CATALOG_SPECS = (
    "uniform:d=1",
    "uniform:d=2",
    "cube:d=2",
    "pareto:beta=1.5",
    "pareto_prod:beta=2.5,d=2",
    "gauss:d=2",
)


@dataclass
class CheckResult:
    group: str
    name: str
    passed: bool
    message: str = ""
    seconds: float = 0.0


# --------------------------------------------------------------------------
# measures


def _tail_monotone():
    grid = np.concatenate(([0.0], np.geomspace(1e-3, 1e6, 200)))
    for spec in CATALOG_SPECS:
        h = measures.tail_H(spec, grid)
        assert np.all(np.diff(h) <= 1e-15), f"{spec}: tail increases"
        assert 0 <= h[0] <= 1 and h[-1] < 1e-6, f"{spec}: tail limits"


def _refinement_consistency():
    for spec in CATALOG_SPECS:
        mu = parse_measure(spec)
        top = 6 if mu.dim <= 2 else 4
        for m in range(0, 7):
            whole = mu.block_mass(m)
            for level in range(1, top + 1):
                axes = [np.arange(2**level)] * mu.dim
                cells = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, mu.dim)
                total = math.fsum(mu.cell_mass(m, level, cells))
                assert abs(total - whole) <= 1e-10, f"{spec}: m={m} l={level} {total} vs {whole}"


def _blocks_sum_to_one():
    for spec in CATALOG_SPECS:
        mu = parse_measure(spec)
        m_max = 6
        total = math.fsum(mu.block_mass(m) for m in range(m_max + 1)) + float(mu.tail(2.0**m_max))
        assert abs(total - 1.0) <= 1e-10, f"{spec}: block masses + tail = {total}"


def _weak_below_strong():
    for spec in CATALOG_SPECS:
        mu = parse_measure(spec)
        for q in (1.0, 1.25, 2.0, 3.0):
            s = measures.strong_moment(mu, q)
            w = measures.weak_moment(mu, q)
            assert w <= s * (1 + 1e-8) or (math.isinf(w) and math.isinf(s)), f"{spec}: q={q} weak {w} > strong {s}"


def _sampling_determinism():
    a = measures.sample("pareto_prod:beta=2.5,d=2", 100, 11, 3)
    b = measures.sample("pareto_prod:beta=2.5,d=2", 100, 11, 3)
    c = measures.sample("pareto_prod:beta=2.5,d=2", 100, 11, 4)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def _empirical_tail():
    mu = parse_measure("pareto:beta=1.5")
    x = np.abs(mu.sample(10**5, 1).points[:, 0])
    for t in np.geomspace(1.01, 50, 10):
        h = float(mu.tail(t))
        se = math.sqrt(h * (1 - h) / x.size)
        assert abs(np.mean(x > t) - h) <= 4 * se, f"t={t}"


# --------------------------------------------------------------------------
# transport


def _one_d_matches_assignment():
    rng = make_rng(5, 0)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        x, y = rng.normal(size=(n, 1)), rng.pareto(1.5, size=(n, 1))
        p = float(rng.choice([1.0, 1.5, 2.0]))
        a = wasserstein_assignment(x, y, p)[0]
        b = wasserstein_1d(x, y, p)[0]
        assert abs(a - b) <= 1e-10 * max(1.0, abs(b)), f"{a} vs {b}"


def _metric_axioms():
    rng = make_rng(5, 1)
    for _ in range(30):
        a, b, c = (rng.normal(size=(12, 2)) for _ in range(3))
        p = float(rng.choice([1.0, 2.0]))
        w = lambda u, v: wasserstein_assignment(u, v, p)[0] ** (1 / p)
        assert abs(w(a, b) - w(b, a)) <= 1e-12
        assert w(a, a) == 0
        assert w(a, c) <= w(a, b) + w(b, c) + 1e-9


def _scaling_translation():
    rng = make_rng(5, 2)
    x, y = rng.normal(size=(20, 3)), rng.normal(size=(20, 3))
    for p in (1.0, 2.0, 2.5):
        base = wasserstein_assignment(x, y, p)[0]
        lam = 3.7
        assert abs(wasserstein_assignment(lam * x, lam * y, p)[0] - lam**p * base) <= 1e-10 * lam**p * base
        shift = np.array([1.0, -2.0, 0.5])
        assert abs(wasserstein_assignment(x + shift, y + shift, p)[0] - base) <= 1e-10 * base


def _entropic_upper_bound():
    rng = make_rng(5, 3)
    x, y = rng.random((40, 2)), rng.random((40, 2))
    exact = wasserstein_assignment(x, y, 1.0)[0]
    value, plan, _, _ = wasserstein_entropic(x, y, 1.0, max_iter=300)
    assert value >= exact - 1e-9
    rs, cs = plan.marginals()
    assert np.allclose(rs, 1 / 40, atol=1e-9) and np.allclose(cs, 1 / 40, atol=1e-9)


# --------------------------------------------------------------------------
# multiscale


def _delta_pair():
    prof = multiscale.delta_p(np.array([[0.5]]), "dirac:d=1,at=-0.5", 1.0, m_max=0, l_max=10)
    assert abs(prof.delta_p - 2 * (1 - 2.0**-10)) <= 1e-12, prof.delta_p
    assert abs(prof.d_p - (1 - 2.0**-10)) <= 1e-12, prof.d_p


def _dyadic_convention():
    # atoms on dyadic faces must land in the cell whose upper face they are
    for at in (0.5, -0.5, 0.25, 1.0, 2.0, -0.75):
        prof = multiscale.delta_p(np.array([[at]]), f"dirac:d=1,at={at!r}", 1.0, m_max=2, l_max=8)
        assert prof.delta_p <= 1e-12, f"atom at {at}: delta = {prof.delta_p}"


def _random_instances(count, seed):
    rng = make_rng(seed, 0)
    specs = ("uniform:d={d}", "cube:d={d}", "pareto_prod:beta=2.5,d={d}", "gauss:d={d}")
    for i in range(count):
        d = int(rng.integers(1, 4))
        spec = specs[int(rng.integers(len(specs)))].format(d=d)
        mu = parse_measure(spec)
        n = int(rng.integers(5, 200))
        x = mu.sample(n, seed, 1, i)
        yield mu, x, float(rng.choice([1.0, 2.0])), rng


def _partition_and_monotonicity():
    for mu, x, p, _ in _random_instances(40, 21):
        prof = multiscale.delta_p(x, mu, p, l_max=min(6, multiscale.default_l_max(mu.dim)))
        assert np.all(prof.cell_count_totals == prof.block_counts[:, None]), "partition of unity"
        assert np.all(np.diff(prof.level_sums, axis=1) >= -1e-12), "refinement monotonicity"
        assert abs(prof.delta_p - math.fsum(prof.per_block)) <= 1e-12 * max(1.0, prof.delta_p)


def _lemma_ratio_and_split():
    for mu, x, p, rng in _random_instances(40, 22):
        l_max = min(6, multiscale.default_l_max(mu.dim))
        for M in (0.5, 1.0, 3.0):
            prof = multiscale.delta_p(x, mu, p, l_max=l_max, M=M)
            bound = multiscale.lemma_ratio(p) * prof.delta_p + prof.tail_bound
            assert prof.d_p <= bound, f"D_p {prof.d_p} > {bound}"
            assert prof.delta_p <= prof.a_pm + prof.b_pm + 1e-12, "A + B split"


def _truncation_soundness():
    for mu, x, p, _ in _random_instances(15, 23):
        l_max = min(5, multiscale.default_l_max(mu.dim))
        coarse = multiscale.delta_p(x, mu, p, l_max=l_max)
        fine = multiscale.delta_p(x, mu, p, m_max=coarse.m_max + 2, l_max=l_max + 2)
        assert fine.delta_p - coarse.delta_p <= coarse.tail_bound + 1e-12


# --------------------------------------------------------------------------
# theory


def _theory_examples():
    P = theory.ProblemParams
    assert theory.classify(P(1, 1, Fraction(3, 2))) == "small_dim"
    assert theory.classify(P(1, 3, Fraction(3, 2))) == "boundary"
    assert theory.classify(P(1, 4, 3)) == "large_dim"
    assert theory.moment_rate(P(1, 1, Fraction(3, 2)), "mean").exponent == Fraction(-1, 3)
    assert theory.moment_rate(P(1, 3, 2, sqrt_h=True), "second_moment").exponent == Fraction(-2, 3)
    bk = theory.baum_katz_weights(P(1, 4, Fraction(3, 2), "strong"), Fraction(1, 2))
    assert not bk.admissible and bk.interval == (Fraction(3, 4), False, Fraction(1))


def _theory_continuity():
    for d in (1, 2, 3, 4, 5):
        for r in (Fraction(6, 5), Fraction(3, 2), Fraction(7, 4)):
            thr = d * (r - 1) / r
            if thr <= 1:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", theory.NearBoundaryWarning)
                above = theory.moment_rate(theory.ProblemParams(thr + Fraction(1, 10**6), d, r), "mean").exponent
                below = theory.moment_rate(theory.ProblemParams(thr - Fraction(1, 10**6), d, r), "mean").exponent
            assert abs(above - below) < Fraction(1, 10**5), (d, r, above, below)


def _theory_signs_and_monotone():
    order = {"large_dim": 0, "boundary": 1, "small_dim": 2}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", theory.NearBoundaryWarning)
        for row in theory.export_table():
            if row["exponent"] is not None:
                assert Fraction(row["exponent"]) < 0, row
        for d in (1, 2, 3, 4, 6):
            for r in (Fraction(6, 5), Fraction(3, 2), Fraction(3)):
                regimes = [theory.classify(theory.ProblemParams(Fraction(k, 4), d, r)) for k in range(4, 40)]
                assert all(order[a] <= order[b] for a, b in zip(regimes, regimes[1:])), (d, r)


# --------------------------------------------------------------------------
# experiments


def _fit_examples():
    ns = [2**k for k in range(4, 10)]
    fit = fit_loglog_slope([(n, 3.0 * n**-0.5) for n in ns])
    assert abs(fit.slope + 0.5) < 1e-12 and fit.stderr < 1e-12
    fit = fit_loglog_slope([(n, 2.0) for n in ns])
    assert fit.slope == 0
    pred = theory.RatePrediction("mean", "small_dim", Fraction(-1, 2))
    assert verdict(-0.48, pred, 0.05) == "consistent"
    assert verdict(-0.30, pred, 0.05) == "inconsistent"
    assert verdict(-0.40, pred, stderr=0.04) == "consistent"


def _experiment_determinism():
    cfg = ExperimentConfig(measure="uniform:d=1", n_grid=[16, 32, 64, 128], replicates=20, seed=3)
    a = json.dumps(run_moment_rate(cfg).to_json(), sort_keys=True)
    b = json.dumps(run_moment_rate(cfg).to_json(), sort_keys=True)
    assert a == b


CHECKS = {
    "measures": [
        ("tail monotone with limits", _tail_monotone),
        ("cell-mass refinement consistency", _refinement_consistency),
        ("block masses plus tail sum to one", _blocks_sum_to_one),
        ("weak moment below strong moment", _weak_below_strong),
        ("sampling determinism", _sampling_determinism),
        ("empirical tail within 4 standard errors", _empirical_tail),
    ],
    "transport": [
        ("1-D and assignment solvers agree", _one_d_matches_assignment),
        ("metric axioms", _metric_axioms),
        ("scaling and translation", _scaling_translation),
        ("entropic value is a feasible upper bound", _entropic_upper_bound),
    ],
    "multiscale": [
        ("delta pair hand values", _delta_pair),
        ("dyadic face convention", _dyadic_convention),
        ("partition of unity and refinement monotonicity", _partition_and_monotonicity),
        ("D_p ratio and A/B split", _lemma_ratio_and_split),
        ("truncation soundness", _truncation_soundness),
    ],
    "theory": [
        ("stated examples", _theory_examples),
        ("continuity across the boundary", _theory_continuity),
        ("negative exponents and monotone regimes", _theory_signs_and_monotone),
    ],
    "experiments": [
        ("slope fit and verdict rules", _fit_examples),
        ("rerun determinism", _experiment_determinism),
    ],
}


def _closed_open_cells(x, m, level):
    """Deliberately wrong convention: closed-open cells, used to test the suite."""
    x = np.asarray(x, dtype=float)
    if level == 0:
        return np.zeros(x.shape, dtype=np.int64)
    y = np.ldexp(x, -np.asarray(m, dtype=np.int64).reshape(-1, 1) + (level - 1))
    c = np.floor(y).astype(np.int64) + (1 << (level - 1))
    return np.clip(c, 0, (1 << level) - 1)


@contextlib.contextmanager
def injected_fault(name):
    if name is None:
        yield
        return
    if name != "cell-boundary":
        raise ValueError(f"unknown fault {name!r}; known: {', '.join(FAULTS)}")
    saved = (measures.finest_cells, multiscale.finest_cells)
    measures.finest_cells = multiscale.finest_cells = _closed_open_cells
    try:
        yield
    finally:
        measures.finest_cells, multiscale.finest_cells = saved


def run(groups=None, fault=None):
    """Run the selected groups; returns a list of CheckResult."""
    groups = list(GROUPS) if not groups else list(groups)
    bad = [g for g in groups if g not in CHECKS]
    if bad:
        raise ValueError(f"unknown group(s) {bad}; known: {', '.join(GROUPS)}")
    results = []
    with injected_fault(fault):
        for group in groups:
            for name, fn in CHECKS[group]:
                t0 = time.perf_counter()
                try:
                    fn()
                    results.append(CheckResult(group, name, True, seconds=time.perf_counter() - t0))
                except AssertionError as exc:
                    results.append(CheckResult(group, name, False, str(exc) or "assertion failed",
                                               time.perf_counter() - t0))
                except Exception as exc:  # a crash is a failure of the group, not of the runner
                    msg = f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"
                    results.append(CheckResult(group, name, False, msg, time.perf_counter() - t0))
    return results


def group_status(results):
    status = {}
    for res in results:
        status[res.group] = status.get(res.group, True) and res.passed
    return status
