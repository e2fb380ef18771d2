"""Empirical Wasserstein convergence rates under heavy tails.

Sample-level tools (measures, exact and entropic transport, the dyadic
multiscale functional), closed-form rate predictions, and an experiment
harness comparing the two.
"""

__version__ = "0.1.0"

from .measures import AnalyticMeasure, AtomicMeasure, EmpiricalMeasure, make_rng, parse_measure  # noqa: E402
from .multiscale import MultiscaleProfile, d_p_functional, delta_p  # noqa: E402
from .theory import ProblemParams, RatePrediction, classify, moment_rate  # noqa: E402
from .transport import TransportPlan, semidiscrete_wp, wasserstein  # noqa: E402

__all__ = [
    "AnalyticMeasure",
    "AtomicMeasure",
    "EmpiricalMeasure",
    "MultiscaleProfile",
    "ProblemParams",
    "RatePrediction",
    "TransportPlan",
    "classify",
    "d_p_functional",
    "delta_p",
    "make_rng",
    "moment_rate",
    "parse_measure",
    "semidiscrete_wp",
    "wasserstein",
]
