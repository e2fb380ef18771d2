import json
from fractions import Fraction

import numpy as np
import pytest

from wassrates import experiments
from wassrates.experiments import (
    ConfigError,
    ExperimentConfig,
    ExperimentRefusal,
    boundedness_flag,
    default_band,
    fit_loglog_slope,
    load_config,
    run_deviation_tail,
    run_moment_rate,
    run_running_max,
    verdict,
)


def cfg(**kw):
    base = dict(measure="uniform:d=1", n_grid=[16, 32, 64, 128], replicates=20, seed=5)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


# --- fitting ----------------------------------------------------------------------


def test_exact_power_law_fit():
    fit = fit_loglog_slope([(n, 3.0 * n**-0.5) for n in (10, 20, 40, 80, 160)])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.stderr == pytest.approx(0.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)


def test_noisy_fit_recovers_slope():
    rng = np.random.default_rng(0)
    ns = 2.0 ** np.arange(6, 14)
    pairs = [(n, n ** (-1 / 3) * (1 + 0.01 * rng.standard_normal())) for n in ns]
    assert fit_loglog_slope(pairs).slope == pytest.approx(-1 / 3, abs=0.02)


def test_constant_fit_has_zero_slope():
    fit = fit_loglog_slope([(n, 2.0) for n in (1, 2, 3, 4)])
    assert fit.slope == pytest.approx(0.0, abs=1e-14)


def test_weights_pull_the_fit():
    pairs = [(1, 1.0, 1.0), (2, 0.5, 1.0), (4, 0.25, 1.0), (8, 1.0, 1e-9)]
    assert fit_loglog_slope(pairs).slope == pytest.approx(-1.0, abs=1e-6)


@pytest.mark.parametrize(
    "pairs",
    [
        [],
        [(1, 1.0), (2, 1.0), (4, 1.0)],
        [(1, 1.0), (1, 2.0), (2, 1.0), (2, 3.0)],
        [(1, 1.0), (2, 0.0), (4, 1.0), (8, 1.0)],
        [(1, 1.0), (2, 1.0, -1.0), (4, 1.0), (8, 1.0)],
    ],
)
def test_fit_errors(pairs):
    with pytest.raises(ValueError):
        fit_loglog_slope(pairs)


def test_verdict_examples():
    pred = -0.5
    assert verdict(-0.48, pred) == "consistent"
    assert verdict(-0.30, pred) == "inconsistent"
    assert default_band(0.04) == pytest.approx(0.12)
    assert verdict(-0.39, pred, stderr=0.04) == "consistent"
    assert verdict(-0.39, pred) == "inconsistent"
    assert verdict(float("nan"), pred) == "inconclusive"
    assert verdict(-0.5, None) == "inconclusive"


# --- configuration -------------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        dict(n_grid=[16, 32, 64]),
        dict(n_grid=[16, 32, 32, 64]),
        dict(n_grid=[16, 8, 32, 64]),
        dict(n_grid=[0, 8, 32, 64]),
        dict(n_grid=[16.5, 32, 64, 128]),
        dict(estimator="magic"),
        dict(measure="uniform:d=2"),
        dict(alpha=0),
        dict(p=0.5),
        dict(measure="nosuch:d=1"),
    ],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        cfg(**kw)


def test_unknown_and_missing_keys():
    with pytest.raises(ConfigError, match="unknown config keys: colour"):
        ExperimentConfig.from_dict({"measure": "uniform:d=1", "n_grid": [1, 2, 3, 4], "colour": 1})
    with pytest.raises(ConfigError, match="missing"):
        ExperimentConfig.from_dict({"measure": "uniform:d=1"})


def test_load_config_reports_json_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "measure": "uniform:d=1",\n  "n_grid": [1, 2,, 3]\n}\n')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(path)


def test_slope_runs_need_twenty_replicates():
    with pytest.raises(ConfigError):
        run_moment_rate(cfg(replicates=19))


def test_hash_ignores_threads():
    assert cfg(threads=1).config_hash() == cfg(threads=4).config_hash()
    assert cfg(seed=1).config_hash() != cfg(seed=2).config_hash()


def test_problem_params_from_measure():
    assert experiments.problem_params(cfg()).r == 4
    params = experiments.problem_params(cfg(measure="pareto:beta=1.5"))
    assert params.r == Fraction(3, 2) and params.moment_kind == "weak"


# --- moment-rate runs -------------------------------------------------------------------


def test_degenerate_measure_is_inconclusive():
    report = run_moment_rate(cfg(measure="dirac:d=1,at=0"))
    assert report.verdict == "inconclusive"
    assert report.fit is None
    assert all(row["mean"] == 0 for row in report.rows)


def test_moment_rate_is_deterministic_and_thread_independent(tmp_path):
    a = run_moment_rate(cfg(threads=1))
    b = run_moment_rate(cfg(threads=2))
    pa = a.write(tmp_path / "a")
    pb = b.write(tmp_path / "b")
    assert pa["json"].read_bytes() == pb["json"].read_bytes()
    assert pa["csv"].read_bytes() == pb["csv"].read_bytes()
    assert json.loads(pa["runtime"].read_text())["threads"] == 1


def test_report_round_trips_as_strict_json(tmp_path):
    paths = run_moment_rate(cfg()).write(tmp_path)
    data = json.loads(paths["json"].read_text())
    assert data["kind"] == "rate" and data["seed"] == 5
    assert "threads" not in data["config"]
    assert experiments.dumps(data) == paths["json"].read_text()
    assert paths["csv"].read_text().splitlines()[0] == "n,replicate,value"


def test_uniform_mean_slope():
    report = run_moment_rate(cfg(n_grid=[64, 128, 256, 512, 1024, 2048], replicates=100))
    assert report.prediction.exponent == Fraction(-1, 2)
    assert report.fit.slope == pytest.approx(-0.5, abs=0.08)
    assert report.verdict == "consistent"


def test_r_moment_for_heavy_tail_refuses():
    # r = 1.5 for beta = 1.5 and p = 1: the r-th moment run needs r > 2 or has no strong moment
    with pytest.raises(ExperimentRefusal):
        run_moment_rate(cfg(measure="pareto:beta=1.5", statistic="r_moment"))


def test_two_sample_and_semidiscrete_agree_in_one_dimension():
    grid = [32, 64, 128, 256, 512]
    a = run_moment_rate(cfg(n_grid=grid, replicates=60, estimator="two_sample"))
    b = run_moment_rate(cfg(n_grid=grid, replicates=60, estimator="semidiscrete", oversample=8))
    c = run_moment_rate(cfg(n_grid=grid, replicates=60))
    assert a.fit.slope == pytest.approx(c.fit.slope, abs=0.1)
    assert b.fit.slope == pytest.approx(c.fit.slope, abs=0.1)


def test_assignment_runtime_grows_with_n():
    config = cfg(measure="uniform:d=2", estimator="two_sample", n_grid=[32, 64, 512, 1024], replicates=20,
                 exact_cap=1024, assignment_cap=1024)
    report = run_moment_rate(config)
    secs = report.runtime["seconds_per_n"]
    assert all("assignment" in row["methods"] for row in report.rows)
    assert secs["1024"] > secs["32"]


# --- deviation runs ------------------------------------------------------------------------


def test_underpowered_deviation_refuses_with_minimal_k():
    config = cfg(measure="pareto:beta=1.5", statistic="deviation_prob", n_grid=[64, 256, 1024, 4096, 16384, 32768])
    with pytest.raises(ExperimentRefusal) as info:
        run_deviation_tail(config)
    assert info.value.minimal_k is not None and info.value.minimal_k > 20
    assert f"need K >= {info.value.minimal_k}" in str(info.value)


def test_deviation_alpha_contrast():
    base = dict(measure="pareto:beta=1.5", statistic="deviation_prob", n_grid=[128, 256, 512, 1024, 2048],
                replicates=300, seed=9)
    flat = run_deviation_tail(cfg(alpha=2 / 3, **base))
    decay = run_deviation_tail(cfg(alpha=1, **base))
    assert flat.prediction.exponent == 0
    assert decay.prediction.exponent == Fraction(-1, 2)
    slopes_flat = [f["fit"]["slope"] for f in flat.fits if f["fit"]]
    slopes_decay = [f["fit"]["slope"] for f in decay.fits if f["fit"]]
    assert slopes_flat and slopes_decay
    assert np.median(slopes_decay) < np.median(slopes_flat) - 0.1
    assert decay.verdict == "consistent"


def test_deviation_cells_carry_wilson_intervals():
    report = run_deviation_tail(cfg(measure="pareto:beta=1.5", statistic="deviation_prob",
                                    n_grid=[64, 128, 256, 512], replicates=100, x_grid=[0.5, 1.0]))
    for cell in report.cells:
        lo, hi = cell["wilson"]
        assert lo <= cell["prob"] <= hi
        assert cell["usable"] == (cell["count"] >= 10)


# --- trajectories -----------------------------------------------------------------------------


def test_boundedness_flag():
    assert not boundedness_flag(np.ones(16))
    assert boundedness_flag(np.r_[np.ones(12), [1, 1, 1, 10.0]])
    assert not boundedness_flag([1.0, 2.0, 3.0])


def test_dirac_trajectory_is_zero():
    report = run_running_max(cfg(measure="dirac:d=1,at=0", normalization="none", trajectories=3))
    assert all(v == 0 for t in report.trajectories for v in t["values"])
    assert report.verdict == "inconclusive"


def test_as_normalized_pareto_trajectory_drifts_down():
    config = cfg(measure="pareto:beta=1.2", r=1.15, normalization="as", statistic="as_rate",
                 n_grid=[2**k for k in range(6, 15)], trajectories=20, seed=4)
    report = run_running_max(config)
    med = np.median(np.array([t["normalized"] for t in report.trajectories]), axis=0)
    assert med[-1] < med[0]


def test_lil_trajectories_are_bounded():
    config = load_config("demos/configs/uniform_lil.json")
    report = run_running_max(config)
    assert report.flagged <= 1 and report.verdict == "consistent"
    assert all(np.all(np.diff(t["max_k_w"]) >= 0) for t in report.trajectories)


def test_lil_needs_checkpoints_above_two():
    with pytest.raises(ConfigError):
        run_running_max(cfg(n_grid=[2, 4, 8, 16], normalization="lil"))


def test_trajectory_refuses_without_sqrt_h():
    with pytest.raises(ExperimentRefusal):
        run_running_max(cfg(measure="pareto:beta=1.5", normalization="lil"))
