import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptw.estimators import (
    SampleError,
    adapted_empirical,
    empirical,
    markov_adapted_empirical,
    read_samples_csv,
    sample_set,
    write_samples_csv,
)
from adaptw.grid import cell_index, make_grid, quantize_array
from adaptw.measures import ProcessShape, make_path_measure, markov_to_tree, to_scenario_tree
from adaptw.transport import distribution, wasserstein1

S12 = ProcessShape(1, 2)


def test_empirical_basics():
    s = sample_set(S12, [[0.1, 0.2]])
    m = empirical(s)
    assert m.n_atoms == 1 and m.weights[0] == 1.0
    s = sample_set(S12, [[0.1, 0.2], [0.1, 0.2]])
    assert empirical(s).n_atoms == 1
    s = sample_set(S12, [[0.1, 0.2], [0.3, 0.2], [0.5, 0.5]])
    np.testing.assert_allclose(empirical(s).weights, 1 / 3)


def test_empty_sample():
    with pytest.raises(SampleError):
        sample_set(S12, np.zeros((0, 2)))


def test_single_cell_collapses_to_center_path():
    s = sample_set(S12, [[0.1, 0.2], [0.2, 0.3], [0.05, 0.45]])
    m = adapted_empirical(s)  # N = 3, m = 2
    assert m.n_atoms == 1
    np.testing.assert_allclose(m.paths[0, :, 0], [0.25, 0.25])


def test_figure_two_center_paths():
    rng = np.random.default_rng(0)
    rows = rng.random((8, 2))
    m = adapted_empirical(sample_set(S12, rows))
    assert set(np.unique(m.paths)) <= {0.25, 0.75}
    assert m.n_atoms <= 4


rows = st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=40)


@given(rows)
def test_push_forward_identity(rs):
    s = sample_set(S12, np.array(rs))
    g = make_grid(S12, s.N)
    direct = make_path_measure(S12, quantize_array(g, empirical(s).paths), empirical(s).weights)
    adapted = adapted_empirical(s)
    np.testing.assert_array_equal(adapted.paths, direct.paths)
    np.testing.assert_allclose(adapted.weights, direct.weights, atol=1e-15)


@given(rows)
def test_cell_masses_agree(rs):
    s = sample_set(S12, np.array(rs))
    g = make_grid(S12, s.N)
    emp, ada = empirical(s), adapted_empirical(s)
    for t in (1, 2):
        ce = cell_index(g, emp.paths[:, :t, :]).reshape(emp.n_atoms, -1)
        ca = cell_index(g, ada.paths[:, :t, :]).reshape(ada.n_atoms, -1)
        for G in np.unique(ce, axis=0):
            me = emp.weights[np.all(ce == G, axis=1)].sum()
            ma = ada.weights[np.all(ca == G, axis=1)].sum()
            assert ma == pytest.approx(me, abs=1e-12)


def test_quantization_bound_on_w():
    rng = np.random.default_rng(1)
    for N in (10, 100, 1000):
        s = sample_set(S12, rng.random((N, 2)))
        g = make_grid(S12, N)
        e, a = empirical(s), adapted_empirical(s)
        # cost on paths flattened in R^{Td}: Euclidean, bounded by the sum cost
        w = wasserstein1(distribution(e.flat(), e.weights), distribution(a.flat(), a.weights))
        assert w.value <= S12.T * 0.5 / g.m + 1e-12


def test_empirical_kernels_are_dirac_but_adapted_are_not():
    rng = np.random.default_rng(2)
    s = sample_set(S12, rng.random((200, 2)))
    emp = to_scenario_tree(empirical(s))
    assert np.all(np.diff(emp.child_ptr[1]) == 1)
    ada = to_scenario_tree(adapted_empirical(s))
    assert np.any(np.diff(ada.child_ptr[1]) > 1)


def test_markov_estimator_hand_count():
    # N = 6, d = 1, r = 1/3: m = 2 cells, centers 0.25 and 0.75
    rows = [[0.1, 0.1], [0.2, 0.9], [0.3, 0.8], [0.7, 0.1], [0.8, 0.2], [0.9, 0.6]]
    est = markov_adapted_empirical(sample_set(S12, rows))
    assert est.grid.m == 2
    np.testing.assert_allclose(est.supports[0][:, 0], [0.25, 0.75])
    np.testing.assert_allclose(est.initial, [0.5, 0.5])
    np.testing.assert_allclose(est.transitions[0], [[1 / 3, 2 / 3], [2 / 3, 1 / 3]])
    pts, w = est.kernel_at(1, [0.3])
    np.testing.assert_allclose(pts[:, 0], [0.25, 0.75])


def test_markov_estimator_unvisited_state_is_dirac_at_origin():
    est = markov_adapted_empirical(sample_set(S12, [[0.1, 0.2], [0.2, 0.3]]))
    pts, w = est.kernel_at(1, [0.9])
    np.testing.assert_array_equal(pts, [[0.0]])
    np.testing.assert_array_equal(w, [1.0])


def test_markov_estimator_constant_samples_absorb():
    s = sample_set(ProcessShape(1, 3), [[0.4, 0.4, 0.4]] * 5)
    est = markov_adapted_empirical(s)
    assert all(len(sp) == 1 for sp in est.supports)
    assert all(P.shape == (1, 1) and P[0, 0] == 1.0 for P in est.transitions)


def test_markov_expansion_kernels_depend_on_state_only():
    rng = np.random.default_rng(3)
    s = sample_set(ProcessShape(1, 3), rng.random((300, 3)))
    tree = markov_to_tree(markov_adapted_empirical(s))
    kernels = {}
    for i in range(tree.n_nodes(2)):
        lo, hi = tree.child_ptr[2][i], tree.child_ptr[2][i + 1]
        law = (tuple(tree.points[3][lo:hi, 0]), tuple(np.round(tree.cond_prob[3][lo:hi], 12)))
        kernels.setdefault(float(tree.points[2][i, 0]), set()).add(law)
    assert all(len(v) == 1 for v in kernels.values())


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    s = sample_set(ProcessShape(2, 3), rng.random((5, 3, 2)))
    text = write_samples_csv(s, tmp_path / "s.csv")
    assert text.splitlines()[0] == "x1_1,x1_2,x2_1,x2_2,x3_1,x3_2"
    back = read_samples_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.rows, s.rows)


@pytest.mark.parametrize("text", [
    "", "a,b\n0.1,0.2\n", "x1_1,x2_1\n0.1\n", "x1_1,x2_1\n0.1,zz\n", "x1_1,x2_1\n",
    "x2_1,x1_1\n0.1,0.2\n", "x1_1,x2_1\n0.1,1.5\n",
])
def test_malformed_csv(tmp_path, text):
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(SampleError):
        read_samples_csv(tmp_path / "bad.csv")
