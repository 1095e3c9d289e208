"""Classical, adapted and Markov adapted empirical measures."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path as _FsPath

import numpy as np

from adaptw.grid import GridSpec, Mode, make_grid, quantize_array
from adaptw.measures import (
    MarkovMeasure,
    MeasureError,
    PathMeasure,
    ProcessShape,
    _check_paths,
    make_markov_measure,
    make_path_measure,
)


class SampleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SampleSet:
    """N i.i.d. paths, ``rows`` of shape (N, T, d), all in [0,1]^d."""

    shape: ProcessShape
    rows: np.ndarray

    def __post_init__(self):
        if self.rows.ndim != 3 or self.rows.shape[1:] != (self.shape.T, self.shape.d):
            raise SampleError(f"rows must have shape (N, {self.shape.T}, {self.shape.d})")
        if self.rows.shape[0] == 0:
            raise SampleError("empty sample")
        self.rows.setflags(write=False)

    @property
    def N(self) -> int:
        return self.rows.shape[0]

    def __len__(self):
        return self.N

    def flat(self) -> np.ndarray:
        return self.rows.reshape(self.N, -1)


def sample_set(shape: ProcessShape, rows) -> SampleSet:
    try:
        arr = _check_paths(shape, rows)
    except MeasureError as exc:
        raise SampleError(str(exc)) from exc
    return SampleSet(shape, np.array(arr, dtype=np.float64))


def empirical(s: SampleSet) -> PathMeasure:
    """Uniform weights 1/N on the raw paths, duplicates merged."""
    return make_path_measure(s.shape, s.rows)


def adapted_empirical(s: SampleSet, grid: GridSpec | None = None) -> PathMeasure:
    """Empirical measure of the quantized paths (general-mode grid by default)."""
    g = grid or make_grid(s.shape, s.N, Mode.GENERAL)
    return make_path_measure(s.shape, quantize_array(g, s.rows))


class MarkovEstimate(MarkovMeasure):
    """Markov adapted estimator with the grid it was built on.

    Supports hold the visited cell centers only; :meth:`kernel_at` answers
    for any state and returns the Dirac at the origin for unvisited ones.
    """

    grid: GridSpec

    def kernel_at(self, t: int, x) -> tuple[np.ndarray, np.ndarray]:
        """Estimated law of X_{t+1} given X_t in the cell of ``x`` (1 <= t < T)."""
        if not 1 <= t < self.shape.T:
            raise ValueError(f"t must be in 1..T-1, got {t}")
        c = quantize_array(self.grid, np.asarray(x, dtype=np.float64).reshape(self.shape.d))
        hit = np.flatnonzero(np.all(self.supports[t - 1] == c[None, :], axis=1))
        if hit.size == 0:
            return np.zeros((1, self.shape.d)), np.ones(1)
        row = self.transitions[t - 1][hit[0]]
        nz = np.flatnonzero(row > 0)
        return self.supports[t][nz], row[nz]


def markov_adapted_empirical(s: SampleSet, grid: GridSpec | None = None) -> MarkovEstimate:
    """Markov estimator: quantized initial law and cell-conditional
    frequencies of the next quantized step."""
    T, d = s.shape.T, s.shape.d
    g = grid or make_grid(s.shape, s.N, Mode.MARKOV)
    q = quantize_array(g, s.rows)
    supports, codes = [], []
    for t in range(T):
        pts, inv = np.unique(q[:, t, :], axis=0, return_inverse=True)
        supports.append(pts)
        codes.append(inv.ravel())
    initial = np.bincount(codes[0], minlength=len(supports[0])) / s.N
    transitions = []
    for t in range(T - 1):
        counts = np.zeros((len(supports[t]), len(supports[t + 1])))
        np.add.at(counts, (codes[t], codes[t + 1]), 1.0)
        transitions.append(counts / counts.sum(axis=1, keepdims=True))
    base = make_markov_measure(s.shape, supports, initial, transitions)
    est = MarkovEstimate(base.shape, base.supports, base.initial, base.transitions)
    object.__setattr__(est, "grid", g)
    return est


# -- CSV -----------------------------------------------------------------------


def csv_header(shape: ProcessShape) -> list[str]:
    return [f"x{t}_{i}" for t in range(1, shape.T + 1) for i in range(1, shape.d + 1)]


def write_samples_csv(s: SampleSet, path=None) -> str:
    """Header ``x{t}_{i}`` then one row per sample; values in repr form."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(s.shape))
    for row in s.flat():
        w.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        _FsPath(path).write_text(text)
    return text


def _parse_header(header: list[str]) -> ProcessShape:
    pairs = []
    for name in header:
        name = name.strip()
        try:
            t, i = name[1:].split("_")
            if name[0] != "x":
                raise ValueError
            pairs.append((int(t), int(i)))
        except ValueError as exc:
            raise SampleError(f"bad column name {name!r}; expected x<t>_<i>") from exc
    if not pairs:
        raise SampleError("empty header")
    T = max(p[0] for p in pairs)
    d = max(p[1] for p in pairs)
    expected = [(t, i) for t in range(1, T + 1) for i in range(1, d + 1)]
    if pairs != expected:
        raise SampleError("columns must be ordered x1_1..x1_d, x2_1..x2_d, ...")
    return ProcessShape(d, T)


def read_samples_csv(path) -> SampleSet:
    text = _FsPath(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise SampleError(f"{path}: empty file")
    shape = _parse_header(rows[0])
    width = shape.T * shape.d
    data = []
    for k, r in enumerate(rows[1:], start=2):
        if len(r) != width:
            raise SampleError(f"{path}:{k}: expected {width} values, got {len(r)}")
        try:
            data.append([float(v) for v in r])
        except ValueError as exc:
            raise SampleError(f"{path}:{k}: {exc}") from exc
    if not data:
        raise SampleError(f"{path}: no sample rows")
    arr = np.asarray(data).reshape(-1, shape.T, shape.d)
    if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1:
        raise SampleError(f"{path}: values must lie in [0, 1]")
    return SampleSet(shape, arr)
