import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from wassrates import measures
from wassrates.measures import (
    AtomicMeasure,
    EmpiricalMeasure,
    make_rng,
    parse_measure,
    sample,
    sqrt_tail_integral,
    strong_moment,
    tail_H,
    weak_moment,
)

CATALOG_SPECS = [
    "uniform:d=1",
    "uniform:d=2",
    "cube:d=2",
    "pareto:beta=1.5",
    "pareto:beta=3",
    "pareto_prod:beta=2.5,d=2",
    "pareto_prod:beta=1.2,d=3",
    "gauss:d=2",
    "dirac:d=1,at=0.3",
]


# --- empirical measures ------------------------------------------------------


def test_empirical_measure_defaults_to_uniform_weights():
    emp = EmpiricalMeasure(np.arange(4.0))
    assert emp.dim == 1 and emp.n == 4
    np.testing.assert_array_equal(emp.weights, np.full(4, 0.25))
    assert emp.uniform


@pytest.mark.parametrize(
    "points, weights",
    [
        ([[0.0, np.nan]], None),
        ([[0.0], [1.0]], [0.5, 0.6]),
        ([[0.0], [1.0]], [1.5, -0.5]),
        ([[0.0], [1.0]], [1.0]),
        (np.empty((0, 2)), None),
    ],
)
def test_empirical_measure_rejects_invalid_input(points, weights):
    with pytest.raises(ValueError):
        EmpiricalMeasure(points, weights)


def test_empirical_measure_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((3, 2)), dim=3)


# --- catalog and sampling ------------------------------------------------------


def test_parse_measure_round_trips_spec():
    mu = parse_measure("pareto_prod:beta=2.5,d=2")
    assert mu.dim == 2
    assert parse_measure(mu.spec).spec == mu.spec


@pytest.mark.parametrize("spec", ["nosuch:d=1", "uniform:d", "uniform:d=x", "uniform:d=1,d=2", "Uniform:d=1", "pareto:beta=2,d=2"])
def test_parse_measure_errors(spec):
    with pytest.raises(ValueError):
        parse_measure(spec)


def test_sample_support_of_unit_cube():
    x = sample("uniform:d=2", 4, 7)
    assert x.points.shape == (4, 2)
    assert np.all((x.points >= 0) & (x.points <= 1))


def test_sample_pareto_tail_fraction():
    x = sample("pareto:beta=1.5", 10_000, 1)
    frac = np.mean(np.abs(x.points[:, 0]) > 2)
    h = 2**-1.5
    assert abs(frac - h) <= 3 * math.sqrt(h * (1 - h) / 10_000)


def test_sample_is_deterministic_and_streams_differ():
    a = sample("gauss:d=3", 50, 11, 4)
    b = sample("gauss:d=3", 50, 11, 4)
    c = sample("gauss:d=3", 50, 11, 5)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_sample_rejects_zero():
    with pytest.raises(ValueError):
        sample("uniform:d=1", 0, 1)


def test_make_rng_streams_are_independent_of_generation_order():
    first = make_rng(3, 1).random(5)
    make_rng(3, 0).random(100)
    np.testing.assert_array_equal(first, make_rng(3, 1).random(5))


# --- tails and moments -----------------------------------------------------------


def test_tail_examples():
    assert tail_H("uniform:d=1", 0.25) == pytest.approx(0.75, abs=1e-15)
    assert tail_H("pareto:beta=2", 3.0) == pytest.approx(1 / 9, rel=1e-14)
    assert tail_H("uniform:d=3", 1.0) == 0.0
    assert tail_H("cube:d=2", 5.0) == 0.0


def test_tail_uses_max_norm():
    # P(max(|U1|, |U2|) > t) = 1 - t^2 for the unit square
    assert tail_H("uniform:d=2", 0.5) == pytest.approx(0.75, abs=1e-15)


def test_tail_rejects_negative_t():
    with pytest.raises(ValueError):
        tail_H("uniform:d=1", -1.0)


@pytest.mark.parametrize("beta", [1.2, 1.5, 2.0, 3.5])
def test_weak_moment_pareto_at_and_above_index(beta):
    assert weak_moment(f"pareto:beta={beta}", beta) == pytest.approx(1.0, rel=1e-9)
    assert weak_moment(f"pareto:beta={beta}", beta + 0.1) == math.inf


def test_weak_moment_uniform_is_finite():
    # sup_t t^q (1 - t) = q^q / (q + 1)^(q + 1)
    for q in (1.0, 2.0, 5.0):
        assert weak_moment("uniform:d=1", q) == pytest.approx(q**q / (q + 1) ** (q + 1), rel=1e-8)


def test_strong_moment_examples():
    assert strong_moment("pareto:beta=2", 1.0) == pytest.approx(2.0, rel=1e-8)
    assert strong_moment("pareto:beta=2", 2.0) == math.inf
    assert strong_moment("pareto:beta=1.5", 1.7) == math.inf
    assert strong_moment("dirac:d=2,at=0", 3.0) == 0.0
    assert strong_moment("uniform:d=1", 2.0) == pytest.approx(1 / 3, rel=1e-8)


def test_sqrt_tail_integral_examples():
    assert sqrt_tail_integral("uniform:d=1", 1) == pytest.approx(2 / 3, rel=1e-8)
    assert sqrt_tail_integral("pareto:beta=4", 1) == pytest.approx(2.0, rel=1e-8)
    assert sqrt_tail_integral("pareto:beta=2", 1) == math.inf


@pytest.mark.parametrize("spec", ["uniform:d=2", "pareto:beta=3", "pareto_prod:beta=5,d=2", "gauss:d=1", "cube:d=3"])
@pytest.mark.parametrize("p", [1.0, 1.5])
def test_closed_forms_match_quadrature(spec, p):
    for q in (1.0, 2.0):
        a = strong_moment(spec, q)
        b = strong_moment(spec, q, closed_form=False)
        assert a == pytest.approx(b, rel=1e-7)
    a = sqrt_tail_integral(spec, p)
    b = sqrt_tail_integral(spec, p, closed_form=False)
    assert a == pytest.approx(b, rel=1e-7)


def test_pareto_strong_moment_against_scipy():
    # E|X| for Pareto(beta) on [1, inf) is beta / (beta - 1)
    for beta in (1.5, 3.0):
        assert strong_moment(f"pareto:beta={beta}", 1.0) == pytest.approx(stats.pareto(beta).mean(), rel=1e-8)


@pytest.mark.parametrize("spec", CATALOG_SPECS)
def test_weak_below_strong_and_moment_nesting(spec):
    qs = [1.0, 1.1, 1.5, 2.0, 3.0]
    strong = [strong_moment(spec, q) for q in qs]
    for q, s in zip(qs, strong):
        w = weak_moment(spec, q)
        if math.isfinite(s):
            assert w ** (1 / q) <= s ** (1 / q) * (1 + 1e-9)
    for lo, hi in zip(strong, strong[1:]):
        if math.isfinite(hi):
            assert math.isfinite(lo)


@pytest.mark.parametrize("spec", CATALOG_SPECS)
def test_tail_is_nonincreasing_and_vanishes(spec):
    mu = parse_measure(spec)
    grid = np.concatenate([[0.0], np.geomspace(1e-4, 1e8, 400)])
    h = mu.tail(grid)
    assert np.all(h <= 1.0) and np.all(h >= 0.0)
    assert np.all(np.diff(h) <= 1e-15)
    assert h[-1] < 1e-8


@pytest.mark.parametrize("spec", ["uniform:d=1", "pareto:beta=1.5", "pareto_prod:beta=2.5,d=2", "gauss:d=2", "cube:d=1"])
def test_empirical_tail_within_four_standard_errors(spec):
    mu = parse_measure(spec)
    n = 100_000
    r = np.abs(mu.sample(n, 2024).points).max(axis=1)
    qs = np.quantile(r, np.linspace(0.05, 0.95, 10))
    for t in qs:
        h = float(mu.tail(t))
        se = math.sqrt(max(h * (1 - h), 1e-12) / n)
        assert abs(np.mean(r > t) - h) <= 4 * se


# --- dyadic blocks and cells -------------------------------------------------------


@pytest.mark.parametrize("spec", CATALOG_SPECS)
def test_refinement_consistency(spec):
    mu = parse_measure(spec)
    d = mu.dim
    for m in range(0, 7):
        block = mu.block_mass(m)
        for level in range(0, 7):
            side = 2**level
            cells = np.stack(np.meshgrid(*[np.arange(side)] * d, indexing="ij"), -1).reshape(-1, d)
            assert math.fsum(mu.cell_mass(m, level, cells)) == pytest.approx(block, abs=1e-10)


@pytest.mark.parametrize("spec", CATALOG_SPECS)
def test_block_masses_and_tail_sum_to_one(spec):
    mu = parse_measure(spec)
    for m_max in (0, 3, 8):
        total = math.fsum(mu.block_mass(m) for m in range(m_max + 1)) + float(mu.tail(2.0**m_max))
        assert total == pytest.approx(1.0, abs=1e-10)


def test_block_index_half_open_faces():
    x = np.array([[0.5, -0.25], [2.0, 0.0], [2.0001, 0.0], [1.0, 1.0], [-1.0, 0.0], [-2.0, 0.5]])
    np.testing.assert_array_equal(measures.block_index(x), [0, 1, 2, 0, 1, 2])


def test_cell_mass_matches_direct_interval_masses():
    # uniform[0,1] on B_0 at level 2: cells (-1,-.5], (-.5,0], (0,.5], (.5,1]
    mu = parse_measure("uniform:d=1")
    np.testing.assert_allclose(mu.cell_mass(0, 2, [[0], [1], [2], [3]]), [0, 0, 0.5, 0.5], atol=1e-15)


def test_atomic_measure_masses():
    emp = EmpiricalMeasure([[0.5], [0.5], [3.0], [-0.75]])
    ref = AtomicMeasure(emp)
    assert ref.block_mass(0) == pytest.approx(0.75)
    assert ref.block_mass(2) == pytest.approx(0.25)
    assert ref.cell_mass(0, 2, [[2], [0]]).tolist() == pytest.approx([0.5, 0.25])
    assert float(ref.tail(1.0)) == pytest.approx(0.25)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e6, 1e6, allow_nan=False), st.integers(0, 12))
def test_finest_cells_contain_their_point(v, level):
    x = np.array([[v]])
    m = int(measures.block_index(x)[0])
    c = int(measures.finest_cells(x, np.array([m]), level)[0, 0])
    half = 2.0 ** (1 - level)
    lo = (-1.0 + c * half) * 2.0**m
    hi = (-1.0 + (c + 1) * half) * 2.0**m
    assert 0 <= c < 2**level
    assert lo < v <= hi
