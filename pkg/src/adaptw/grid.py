"""Uniform cube partition and the quantization map onto cell centers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from adaptw.measures import PathMeasure, ProcessShape


class Mode(str, Enum):
    GENERAL = "general"
    MARKOV = "markov"


def derive_r(shape: ProcessShape, mode: Mode | str = Mode.GENERAL) -> Fraction:
    """Grid exponent r: cells per dimension grow like N**r."""
    mode = Mode(mode)
    d, T = shape.d, shape.T
    if mode is Mode.GENERAL:
        return Fraction(1, T + 1) if d == 1 else Fraction(1, d * T)
    return Fraction(1, 3) if d == 1 else Fraction(1, 2 * d)


def cells_per_dim(N: int, r: Fraction) -> int:
    """Exact ceil(N**r) for rational r, by integer arithmetic."""
    if N < 1:
        raise ValueError("sample size N must be >= 1")
    r = Fraction(r)
    if r <= 0:
        return 1
    p, q = r.numerator, r.denominator
    target = N**p  # want the least m with m**q >= N**p
    m = max(1, int(round(N ** float(r))))
    while m > 1 and (m - 1) ** q >= target:
        m -= 1
    while m**q < target:
        m += 1
    return m


@dataclass(frozen=True)
class GridSpec:
    """Partition of [0,1]^d into m**d congruent cubes, m = ceil(N**r)."""

    shape: ProcessShape
    N: int
    r: Fraction
    m: int
    mode: Mode = Mode.GENERAL

    @property
    def edge(self) -> float:
        return 1.0 / self.m

    @property
    def n_cells(self) -> int:
        return self.m**self.shape.d

    @property
    def max_displacement(self) -> float:
        """sup |x - center(x)|: half the cube diagonal."""
        return math.sqrt(self.shape.d) / (2 * self.m)

    @property
    def diameter(self) -> float:
        return math.sqrt(self.shape.d) / self.m

    def centers_1d(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) / self.m


def make_grid(shape: ProcessShape, N: int, mode: Mode | str = Mode.GENERAL,
              r: Fraction | None = None, m: int | None = None) -> GridSpec:
    """Grid for sample size N.

    ``r`` or ``m`` override the default exponent / cell count (experimentation
    only; the rate theory covers the defaults).
    """
    mode = Mode(mode)
    if N < 1:
        raise ValueError("sample size N must be >= 1")
    if r is None:
        r = derive_r(shape, mode)
    r = Fraction(r)
    if m is None:
        m = cells_per_dim(N, r)
    if m < 1:
        raise ValueError("cells per dimension must be >= 1")
    return GridSpec(shape, N, r, int(m), mode)


def cell_index(g: GridSpec | int, x) -> np.ndarray:
    """Per-coordinate cell index min(floor(x*m), m-1); x = 1 joins the last cell."""
    m = g if isinstance(g, int) else g.m
    x = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("coordinates must lie in [0, 1]")
    return np.minimum(np.floor(x * m), m - 1).astype(np.int64)


def center_of(g: GridSpec | int, idx) -> np.ndarray:
    m = g if isinstance(g, int) else g.m
    return (np.asarray(idx, dtype=np.float64) + 0.5) / m


def quantize(g: GridSpec, x):
    """Map a point of [0,1]^d to its cell id and the cell center."""
    idx = cell_index(g, x)
    return tuple(int(i) for i in np.atleast_1d(idx)), center_of(g, idx)


def quantize_array(g: GridSpec | int, x) -> np.ndarray:
    """Vectorized centers for any array of coordinates."""
    return center_of(g, cell_index(g, x))


def quantize_path(g: GridSpec, path) -> np.ndarray:
    """Apply the quantization to every time step of a path (or batch of paths)."""
    return quantize_array(g, path)


def quantize_measure(g: GridSpec | int, m: PathMeasure) -> PathMeasure:
    """Push-forward of a path measure under coordinate-wise quantization."""
    from adaptw.measures import make_path_measure

    return make_path_measure(m.shape, quantize_array(g, m.paths), m.weights)


def averaged_kernel(m: PathMeasure, t: int, G, g: GridSpec):
    """Law of X_{t+1} given that the length-t prefix lies in the cell block G.

    ``G`` is a sequence of t cell ids (each a d-tuple). Returns
    ``(points, weights)``; an event of mass zero yields the Dirac at the
    origin.
    """
    T, d = m.shape.T, m.shape.d
    if not 1 <= t <= T - 1:
        raise ValueError(f"t must be in 1..T-1, got {t}")
    G = np.asarray(G, dtype=np.int64).reshape(t, d)
    idx = cell_index(g, m.paths[:, :t, :])
    inside = np.all(idx == G[None, :, :], axis=(1, 2))
    mass = m.weights[inside].sum()
    if mass <= 0:
        return np.zeros((1, d)), np.ones(1)
    pts, inv = np.unique(m.paths[inside, t, :], axis=0, return_inverse=True)
    w = np.zeros(len(pts))
    np.add.at(w, inv.ravel(), m.weights[inside])
    return pts, w / mass
