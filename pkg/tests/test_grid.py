from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptw.grid import (
    Mode,
    averaged_kernel,
    cell_index,
    cells_per_dim,
    derive_r,
    make_grid,
    quantize,
    quantize_array,
)
from adaptw.measures import ProcessShape, make_path_measure


@pytest.mark.parametrize("d,T,mode,r", [
    (1, 2, "general", Fraction(1, 3)),
    (1, 3, "general", Fraction(1, 4)),
    (2, 2, "general", Fraction(1, 4)),
    (3, 2, "general", Fraction(1, 6)),
    (1, 5, "markov", Fraction(1, 3)),
    (2, 5, "markov", Fraction(1, 4)),
    (3, 2, "markov", Fraction(1, 6)),
])
def test_exponents(d, T, mode, r):
    assert derive_r(ProcessShape(d, T), mode) == r


@pytest.mark.parametrize("N,r,m", [
    (8, Fraction(1, 3), 2), (9, Fraction(1, 3), 3), (27, Fraction(1, 3), 3),
    (28, Fraction(1, 3), 4), (1, Fraction(1, 3), 1), (8192, Fraction(1, 3), 21),
    (1000, Fraction(1, 3), 10), (10**6, Fraction(1, 2), 1000),
])
def test_cells_per_dim_exact(N, r, m):
    assert cells_per_dim(N, r) == m


def test_grid_figure_two_parameters():
    g = make_grid(ProcessShape(1, 2), 8)
    assert g.m == 2 and g.r == Fraction(1, 3) and g.mode is Mode.GENERAL
    assert g.max_displacement == pytest.approx(0.25)


def test_quantize_boundaries():
    g = make_grid(ProcessShape(1, 1), 8, r=1)
    assert quantize(g, [0.0])[0] == (0,)
    assert quantize(g, [1.0])[0] == (7,)  # right edge joins the last cell
    assert quantize(g, [0.125])[0] == (1,)  # left-closed cells
    np.testing.assert_allclose(quantize(g, [0.3])[1], [0.3125])
    with pytest.raises(ValueError):
        cell_index(g, [1.2])
    with pytest.raises(ValueError):
        cell_index(g, [-0.1])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.integers(1, 50))
def test_displacement_bound_and_idempotence(xs, m):
    x = np.array(xs)
    c = quantize_array(m, x)
    assert np.all(np.abs(x - c) <= 0.5 / m + 1e-15)
    np.testing.assert_array_equal(quantize_array(m, c), c)


def test_averaged_kernel():
    shape = ProcessShape(1, 2)
    mu = make_path_measure(shape, [[0.1, 0.2], [0.2, 0.9], [0.8, 0.3]], [1, 1, 2])
    g = make_grid(shape, 8)  # m = 2
    pts, w = averaged_kernel(mu, 1, [[0]], g)
    np.testing.assert_allclose(pts[:, 0], [0.2, 0.9])
    np.testing.assert_allclose(w, [0.5, 0.5])
    pts, w = averaged_kernel(mu, 1, [[1]], g)
    np.testing.assert_allclose(pts[:, 0], [0.3])
    # a cell without mass: the Dirac at the origin
    mu0 = make_path_measure(shape, [[0.1, 0.2]])
    pts, w = averaged_kernel(mu0, 1, [[1]], g)
    np.testing.assert_array_equal(pts, [[0.0]])
    np.testing.assert_array_equal(w, [1.0])
