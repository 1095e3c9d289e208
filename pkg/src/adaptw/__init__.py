"""Adapted Wasserstein distance and adapted empirical measures.

Exact nested distance between finitely supported process laws, the
(Markov) adapted empirical estimators, and a seeded experiment harness.
"""
from adaptw.adapted import (
    BicausalPlan,
    DPMemoryError,
    PathCoupling,
    ShapeMismatch,
    bicausal_oracle_T2,
    check_causality,
    markov_nested_distance,
    nested_distance,
)
from adaptw.estimators import (
    SampleSet,
    adapted_empirical,
    empirical,
    markov_adapted_empirical,
)
from adaptw.grid import GridSpec, Mode, make_grid, quantize
from adaptw.kernels import BACKEND
from adaptw.measures import (
    MarkovMeasure,
    PathMeasure,
    ProcessShape,
    ScenarioTree,
    make_markov_measure,
    make_path_measure,
    markov_to_tree,
    to_scenario_tree,
)
from adaptw.transport import solve_transport, wasserstein1

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BicausalPlan",
    "DPMemoryError",
    "GridSpec",
    "MarkovMeasure",
    "Mode",
    "PathCoupling",
    "PathMeasure",
    "ProcessShape",
    "SampleSet",
    "ScenarioTree",
    "ShapeMismatch",
    "adapted_empirical",
    "bicausal_oracle_T2",
    "check_causality",
    "empirical",
    "make_grid",
    "make_markov_measure",
    "make_path_measure",
    "markov_adapted_empirical",
    "markov_nested_distance",
    "markov_to_tree",
    "nested_distance",
    "quantize",
    "solve_transport",
    "to_scenario_tree",
    "wasserstein1",
]
