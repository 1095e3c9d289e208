import numpy as np
import pytest

from adaptw.adapted import nested_distance
from adaptw.estimators import sample_set
from adaptw.grid import center_of
from adaptw.measures import ProcessShape, make_path_measure, scenario_tree, to_scenario_tree
from adaptw.processes import figure_one_measures
from adaptw.stopping import (
    DIRAC_LIMIT,
    OPTIMAL_VALUE,
    StoppingProblem,
    solve_stopping,
    stopping_stability_demo,
)
from helpers import random_tree

S12 = ProcessShape(1, 2)


def test_single_path():
    res = solve_stopping(make_path_measure(S12, [[0.3, 0.2]]))
    assert res.value == pytest.approx(0.2)
    assert not res.decision(1, 0) and res.decision(2, 0)


def test_figure_one_tie_stops():
    mu, _ = figure_one_measures(0.1)
    res = solve_stopping(mu)
    assert res.value == pytest.approx(0.5)
    assert res.decision(1, 0)  # 0.5 == 0.5: ties resolve to stop


def test_fine_grid_iid_uniform_value():
    K = 400
    c = center_of(K, np.arange(K))
    paths = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)
    res = solve_stopping(make_path_measure(S12, paths))
    assert res.value == pytest.approx(OPTIMAL_VALUE, abs=1e-3)


def test_custom_costs():
    tree = to_scenario_tree(make_path_measure(S12, [[0.2, 0.9], [0.8, 0.1]]))
    scalar = solve_stopping(StoppingProblem(tree, lambda t, p: 1 - p[t - 1, 0]))
    vector = solve_stopping(StoppingProblem(tree, lambda t, p: 1 - p[:, t - 1, 0],
                                            vectorized=True))
    assert scalar.value == vector.value
    with pytest.raises(ValueError):
        solve_stopping(StoppingProblem(tree, lambda t, p: np.inf))


def test_policy_ignores_subtrees_below_stopped_nodes():
    base = [(0.1, 0.5, [(0.6, 0.5, []), (0.8, 0.5, [])]),
            (0.9, 0.5, [(0.2, 0.5, []), (0.4, 0.5, [])])]
    mutated = [(0.1, 0.5, [(0.7, 0.5, []), (0.95, 0.5, [])]),
               (0.9, 0.5, [(0.2, 0.5, []), (0.4, 0.5, [])])]
    r1 = solve_stopping(scenario_tree(S12, base))
    r2 = solve_stopping(scenario_tree(S12, mutated))
    assert r1.decision(1, 0) and r2.decision(1, 0)
    assert r1.decision(1, 1) == r2.decision(1, 1)


def test_value_shift_monotonicity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        tree = random_tree(rng, 3)
        base = solve_stopping(tree).value
        for t in (1, 2, 3):
            shift = float(rng.random())
            res = solve_stopping(StoppingProblem(
                tree, lambda s, p, t=t, k=shift: p[:, s - 1, 0] + (k if s == t else 0.0),
                vectorized=True)).value
            assert base - 1e-12 <= res <= base + shift + 1e-12


def test_lipschitz_stability_in_aw():
    rng = np.random.default_rng(1)
    for _ in range(50):
        T = int(rng.integers(1, 4))
        a, b = random_tree(rng, T), random_tree(rng, T)
        gap = abs(solve_stopping(a).value - solve_stopping(b).value)
        assert gap <= nested_distance(a, b, plan=False).value + 1e-9


def test_demo_single_sample():
    from adaptw.processes import sample, stream_key
    from adaptw.stopping import iid_uniform

    rep = stopping_stability_demo(Ns=(1,), seed=3)
    s = sample(iid_uniform(), 1, 3, key=stream_key(3, 1))
    # one path: stopping picks its smallest coordinate; with N = 1 the grid has
    # a single cell, so the adapted path is the center path (1/2, 1/2)
    assert rep.value_empirical[0] == pytest.approx(s.rows.min())
    assert rep.value_adapted[0] == pytest.approx(0.5)


def test_demo_limits_at_ten_thousand():
    rep = stopping_stability_demo(Ns=(10_000,), seed=2024)
    assert abs(rep.value_adapted[-1] - OPTIMAL_VALUE) <= 0.03
    assert abs(rep.value_empirical[-1] - DIRAC_LIMIT) <= 0.02


def test_report_outputs(tmp_path):
    rep = stopping_stability_demo(Ns=(10, 100), seed=1)
    c, j = rep.write(tmp_path)
    lines = c.read_text().splitlines()
    assert lines[0] == "N,value_empirical,value_adapted"
    assert len(lines) == 3
    assert "final_gap_adapted" in j.read_text()


def test_stopping_sample_set_input():
    s = sample_set(S12, [[0.4, 0.1], [0.6, 0.9]])
    from adaptw.estimators import empirical

    assert solve_stopping(empirical(s)).value == pytest.approx(0.5 * 0.1 + 0.5 * 0.6)
