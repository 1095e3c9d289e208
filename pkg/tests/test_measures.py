import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptw.measures import (
    MarkovMeasure,
    MeasureError,
    ProcessShape,
    load_measure,
    make_markov_measure,
    make_path_measure,
    markov_to_tree,
    save_measure,
    scenario_tree,
    to_path_measure,
    to_scenario_tree,
)
from helpers import random_markov

S12 = ProcessShape(1, 2)


def test_shape_validation():
    with pytest.raises(MeasureError):
        ProcessShape(0, 2)
    with pytest.raises(MeasureError):
        ProcessShape(1, 0)


def test_merge_and_normalize():
    m = make_path_measure(S12, [[0.5, 1.0], [0.5, 1.0], [0.5, 0.0]], [1, 1, 2])
    assert m.n_atoms == 2
    np.testing.assert_allclose(m.weights, [0.5, 0.5])


def test_zero_weight_atoms_dropped():
    m = make_path_measure(S12, [[0.1, 0.2], [0.3, 0.4]], [0, 3])
    assert m.n_atoms == 1
    assert m.weights[0] == 1.0


@pytest.mark.parametrize("paths,weights", [
    ([[1.5, 0.0]], None),
    ([[0.1, np.nan]], None),
    ([[0.1, 0.2]], [-1.0]),
    ([[0.1, 0.2]], [0.0]),
    ([], None),
])
def test_invalid_measures(paths, weights):
    with pytest.raises(MeasureError):
        make_path_measure(S12, np.array(paths).reshape(-1, 2), weights)


def test_figure_one_tree_structure():
    mu = make_path_measure(S12, [[0.5, 1.0], [0.5, 0.0]])
    tree = to_scenario_tree(mu)
    assert tree.n_nodes(1) == 1 and tree.n_nodes(2) == 2
    kids = tree.root.children
    assert len(kids) == 1 and kids[0][1] == 1.0
    grand = kids[0][0].children
    assert [float(n.point[0]) for n, _ in grand] == [0.0, 1.0]
    assert [p for _, p in grand] == [0.5, 0.5]


def test_scenario_tree_builder_normalizes():
    tree = scenario_tree(S12, [(0.2, 2.0, [(0.1, 1.0, []), (0.9, 3.0, [])]),
                               (0.7, 2.0, [(0.5, 1.0, [])])])
    np.testing.assert_allclose(tree.cond_prob[1], [0.5, 0.5])
    np.testing.assert_allclose(tree.cond_prob[2], [0.25, 0.75, 1.0])
    with pytest.raises(MeasureError):
        scenario_tree(S12, [(0.2, 1.0, [])])


paths_strategy = st.lists(
    st.tuples(st.sampled_from([0.0, 0.25, 0.5, 1.0]), st.sampled_from([0.0, 0.5, 1.0]),
              st.floats(0.01, 1.0)),
    min_size=1, max_size=8)


@given(paths_strategy)
def test_tree_roundtrip_and_kernel_consistency(rows):
    m = make_path_measure(S12, [[r[0], r[1]] for r in rows], [r[2] for r in rows])
    tree = to_scenario_tree(m)
    back = to_path_measure(tree)
    np.testing.assert_array_equal(back.paths, m.paths)
    np.testing.assert_allclose(back.weights, m.weights, atol=1e-12)
    # conditional probabilities sum to one per parent, node masses add up
    for t in range(1, 3):
        sums = np.bincount(tree.parent[t], weights=tree.cond_prob[t])
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)
        assert tree.node_mass(t).sum() == pytest.approx(1.0)


def test_markov_validation():
    with pytest.raises(MeasureError):
        make_markov_measure(S12, [[0.1], [0.2]], [1.0], [[[0.5]]])
    with pytest.raises(MeasureError):
        make_markov_measure(S12, [[0.1], [0.2]], [0.5], [[[1.0]]])


def test_markov_expansion_masses():
    rng = np.random.default_rng(2)
    m = random_markov(rng, 3)
    tree = markov_to_tree(m)
    for t in range(1, 4):
        # law of the time-t state equals the depth-t marginal of the expansion
        pts = tree.points[t][:, 0]
        mass = tree.node_mass(t)
        for k, s in enumerate(m.supports[t - 1][:, 0]):
            assert mass[pts == s].sum() == pytest.approx(m.state_mass(t)[k], abs=1e-12)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    m = make_path_measure(ProcessShape(2, 2), rng.random((4, 2, 2)), rng.random(4))
    save_measure(m, tmp_path / "m.json")
    back = load_measure(tmp_path / "m.json")
    np.testing.assert_array_equal(back.paths, m.paths)
    np.testing.assert_array_equal(back.weights, m.weights)
    mk = random_markov(rng, 3)
    save_measure(mk, tmp_path / "k.json")
    back = load_measure(tmp_path / "k.json")
    assert isinstance(back, MarkovMeasure)
    for P, Q in zip(back.transitions, mk.transitions):
        np.testing.assert_array_equal(P, Q)


def test_load_errors(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(MeasureError):
        load_measure(tmp_path / "bad.json")
    (tmp_path / "odd.json").write_text(json.dumps({"d": 1}))
    with pytest.raises(MeasureError):
        load_measure(tmp_path / "odd.json")
