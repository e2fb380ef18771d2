import math
import warnings
from fractions import Fraction as F

import pytest
from hypothesis import assume, given, settings, strategies as st

from theory_fixture import load_rows, mismatches, row_id
from wassrates import theory
from wassrates.theory import (
    NearBoundaryWarning,
    ProblemParams,
    RatePrediction,
    as_fraction,
    baum_katz_weights,
    classify,
    deviation_bound,
    moderate_deviation_rate,
    moment_rate,
    threshold,
)

ROWS = load_rows()


def test_fixture_has_forty_rows():
    assert len(ROWS) == 40


@pytest.mark.parametrize("row", ROWS, ids=[row_id(r) for r in ROWS])
def test_fixture_row(row):
    assert mismatches(row) == []


# --- parameters ------------------------------------------------------------------


def test_as_fraction_snaps_simple_floats():
    assert as_fraction(2 / 3) == F(2, 3)
    assert as_fraction(1.2) == F(6, 5)
    assert as_fraction("3/2") == F(3, 2)
    assert as_fraction(0.1 + 0.2) == F(3, 10)
    with pytest.raises(ValueError):
        as_fraction(float("nan"))


@pytest.mark.parametrize("kw", [dict(p=0.5, d=1, r=2), dict(p=1, d=0, r=2), dict(p=1, d=1, r=1), dict(p=1, d=2, r=3, dim_override=3)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        ProblemParams(**kw)


def test_classify_examples():
    assert classify(ProblemParams(1, 1, F(3, 2))) == "small_dim"
    assert classify(ProblemParams(1, 3, F(3, 2))) == "boundary"
    assert classify(ProblemParams(1, 4, 3)) == "large_dim"
    assert threshold(ProblemParams(1, 4, 3)) == 2


def test_near_boundary_warning():
    with pytest.warns(NearBoundaryWarning):
        moment_rate(ProblemParams(F(101, 100), 3, F(3, 2)), "mean")
    with warnings.catch_warnings():
        warnings.simplefilter("error", NearBoundaryWarning)
        moment_rate(ProblemParams(1, 1, F(3, 2)), "mean")


# --- predictions ---------------------------------------------------------------------


def test_spec_examples():
    assert moment_rate(ProblemParams(1, 1, F(3, 2)), "mean").exponent == F(-1, 3)
    pred = moment_rate(ProblemParams(1, 3, 3), "second_moment")
    assert (pred.exponent, pred.log_power) == (F(-2, 3), 0)
    pred = moment_rate(ProblemParams(2, 4, 3), "r_moment")
    assert (pred.regime, pred.exponent, pred.log_power) == ("boundary", F(-3, 2), F(3))


def test_predictions_are_shape_only():
    pred = moment_rate(ProblemParams(1, 2, 3), "mean")
    assert "shape only" in pred.note and pred.asserted


def test_dim_override_is_not_asserted():
    pred = moment_rate(ProblemParams(1, 4, F(3, 2), dim_override=1), "mean")
    assert pred.exponent == F(-1, 3)
    assert not pred.asserted


@pytest.mark.parametrize(
    "params, statistic",
    [
        (ProblemParams(1, 1, 2), "r_moment"),
        (ProblemParams(1, 1, F(3, 2)), "second_moment"),
        (ProblemParams(1, 1, F(3, 2)), "lil_rate"),
        (ProblemParams(1, 1, 3), "as_rate"),
        (ProblemParams(1, 1, 2), "deviation_prob"),
        (ProblemParams(1, 1, 3), "nonsense"),
    ],
)
def test_incompatible_statistics_raise(params, statistic):
    with pytest.raises(ValueError):
        moment_rate(params, statistic)


def test_rosenthal_gamma_depends_on_epsilon():
    params = ProblemParams(F(3, 2), 2, 4)
    pred = moment_rate(params, "r_moment", epsilon=F(1, 10))
    gamma = F(1, 10) * (2 * F(3, 2) - 2) / (2 * (4 - 2 + F(1, 10)))
    assert gamma == F(1, 42)
    assert [F(-2), gamma - F(3, 2) * 4 / 2] == [F(e) for e, _ in pred.terms][:2]


def test_prediction_json_round_trip():
    pred = moment_rate(ProblemParams(1, 4, F(3, 2)), "as_rate")
    assert RatePrediction.from_json(pred.to_json()) == pred


def test_export_table_has_all_compatible_rows():
    rows = theory.export_table()
    assert len(rows) == 252
    assert all("exponent" in r and "regime" in r for r in rows)


# --- Baum-Katz and moderate deviations ------------------------------------------------


def test_baum_katz_examples():
    w = baum_katz_weights(ProblemParams(1, 1, F(3, 2)), 2 / 3)
    assert w.admissible and w.exponent == -1
    w = baum_katz_weights(ProblemParams(1, 4, F(3, 2)), 0.5)
    assert not w.admissible and w.interval == (F(3, 4), False, F(1))
    assert "(3/4, 1]" in w.message


def test_baum_katz_alpha_one():
    # small dimension and r > 2: alpha = 1 gives n^(r - 2)
    assert baum_katz_weights(ProblemParams(1, 1, F(3, 2)), 1).exponent == F(-1, 2)
    assert baum_katz_weights(ProblemParams(1, 1, 3), 1).exponent == 1
    # large dimension, r in (1, 2): the weight is n^((pr - d)/d) instead
    assert baum_katz_weights(ProblemParams(1, 4, F(3, 2)), 1).exponent == F(-5, 8)


def test_baum_katz_rejects_bad_alpha():
    with pytest.raises(ValueError):
        baum_katz_weights(ProblemParams(1, 1, F(3, 2)), 0)


def test_moderate_deviation_at_inverse_r_is_flat():
    pred = moderate_deviation_rate(ProblemParams(1, 1, F(3, 2)), F(2, 3))
    assert pred.exponent == 0


def test_moderate_deviation_large_dim_interval():
    params = ProblemParams(1, 4, F(3, 2))
    assert moderate_deviation_rate(params, F(3, 4)).exponent == F(0)
    assert moderate_deviation_rate(params, F(1, 2)).exponent is None


# --- deviation envelope ---------------------------------------------------------------


def test_deviation_doubling_examples():
    small = ProblemParams(1, 1, F(3, 2))
    large = ProblemParams(1, 4, F(3, 2))
    for params, expo in ((small, -0.5), (large, -0.375)):
        ratio = deviation_bound(params, 2000, 0.3) / deviation_bound(params, 1000, 0.3)
        assert math.log2(ratio) == pytest.approx(expo, abs=1e-12)
        xr = deviation_bound(params, 1000, 0.6) / deviation_bound(params, 1000, 0.3)
        assert math.log2(xr) == pytest.approx(-1.5, abs=1e-12)


def test_deviation_r_above_two_terms():
    params = ProblemParams(1, 1, 3)
    n, x = 100, 0.05
    expected = math.exp(-n * x * x) + x**-3 * n**-2 + x**-4 * n**-2
    assert deviation_bound(params, n, x) == pytest.approx(expected, rel=1e-14)
    # beyond A = 1 the exponential term is switched off
    assert deviation_bound(params, n, 2.0) == pytest.approx(2.0**-3 * n**-2 + 2.0**-4 * n**-2, rel=1e-14)


def test_deviation_errors():
    with pytest.raises(ValueError):
        deviation_bound(ProblemParams(1, 1, 2), 10, 1.0)
    with pytest.raises(ValueError):
        deviation_bound(ProblemParams(1, 1, 3), 0, 1.0)
    with pytest.raises(ValueError):
        deviation_bound(ProblemParams(1, 1, 3), 10, 1.0, q=2)


# --- invariants ----------------------------------------------------------------------------

rationals = st.fractions(min_value=1, max_value=4, max_denominator=8)
ratios = st.one_of(
    st.fractions(min_value=F(11, 10), max_value=F(19, 10), max_denominator=10),
    st.fractions(min_value=F(21, 10), max_value=6, max_denominator=10),
)
STATS = ["mean", "second_moment", "r_moment", "as_rate", "lil_rate", "deviation_prob"]


@settings(max_examples=300, deadline=None)
@given(rationals, st.integers(1, 6), ratios, st.sampled_from(STATS))
def test_exponents_are_negative(p, d, r, statistic):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearBoundaryWarning)
        params = ProblemParams(p, d, r, sqrt_h=True)
        try:
            pred = moment_rate(params, statistic)
        except ValueError:
            return
    if pred.exponent is not None:
        assert pred.exponent < 0


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6), ratios, rationals, rationals)
def test_regime_is_monotone_in_p(d, r, p1, p2):
    assume(p1 < p2)
    order = {"large_dim": 0, "boundary": 1, "small_dim": 2}
    a = classify(ProblemParams(p1, d, r))
    b = classify(ProblemParams(p2, d, r))
    assert order[a] <= order[b]


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.fractions(min_value=F(11, 10), max_value=F(19, 10), max_denominator=20))
def test_mean_exponent_continuous_at_boundary(d, r):
    thr = d * (r - 1) / r
    assume(thr > 1)
    below = F(1) + (thr - 1) / 2
    above = thr + F(1, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearBoundaryWarning)
        small = moment_rate(ProblemParams(above, d, r), "mean")
        large = moment_rate(ProblemParams(below, d, r), "mean")
        at = moment_rate(ProblemParams(thr, d, r), "mean")
    # small-dim exponent does not depend on p; the large-dim one is -p/d, equal at p = thr
    assert small.exponent == -(r - 1) / r == -thr / d
    assert large.exponent == -below / d
    assert at.exponent == -thr / d


@settings(max_examples=150, deadline=None)
@given(rationals, st.integers(1, 5), ratios, st.floats(0.05, 5.0), st.integers(2, 10**5))
def test_deviation_bound_nonincreasing(p, d, r, x, n):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearBoundaryWarning)
        params = ProblemParams(p, d, r)
        base = deviation_bound(params, n, x)
        assert deviation_bound(params, n + 1, x) <= base * (1 + 1e-12)
        assert deviation_bound(params, 2 * n, x) <= base * (1 + 1e-12)
        if classify(params) != "boundary" or r > 2:
            assert deviation_bound(params, n, 1.5 * x) <= base * (1 + 1e-12)
