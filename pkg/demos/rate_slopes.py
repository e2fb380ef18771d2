"""Fitted log-log slopes of E[W_1(mu_n, mu)] against their predicted exponents.

Three small runs: a compact measure in d = 1, a heavy Pareto tail in d = 1 and
the unit cube in d = 3 with the two-sample estimator. Usage:

    python3 demos/rate_slopes.py [--quick]
"""

import argparse
import time

from wassrates.experiments import ExperimentConfig, run_moment_rate

RUNS = [
    ("uniform[0,1]", dict(measure="uniform:d=1", n_grid=[2**k for k in range(7, 14)], replicates=200)),
    ("Pareto(1.5)", dict(measure="pareto:beta=1.5", n_grid=[2**k for k in range(9, 16)], replicates=300)),
    ("uniform[0,1]^3", dict(measure="uniform:d=3", n_grid=[2**k for k in range(7, 11)], replicates=40,
                            estimator="two_sample", exact_cap=1024, assignment_cap=1024)),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="fewer replicates")
    args = ap.parse_args()
    print(f"{'measure':<16} {'slope':>8} {'+/-':>7} {'predicted':>10} {'regime':>10} {'verdict':>13} {'secs':>6}")
    for label, kw in RUNS:
        kw = {"p": 1, "statistic": "mean", "estimator": "exact_1d", "seed": 1, **kw}
        if args.quick:
            kw["replicates"] = 20
        t0 = time.perf_counter()
        rep = run_moment_rate(ExperimentConfig.from_dict(kw))
        pred = rep.prediction
        print(f"{label:<16} {rep.fit.slope:>8.4f} {rep.fit.stderr:>7.4f} {str(pred.exponent):>10} "
              f"{pred.regime:>10} {rep.verdict:>13} {time.perf_counter() - t0:>6.1f}")


if __name__ == "__main__":
    main()
