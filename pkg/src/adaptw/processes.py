"""Ground-truth process models, seeded samplers and grid references.

Sampling is counter-based: row ``r`` of ``sample(model, N, seed)`` is a
function of ``(seed, r)`` only, so any chunking of rows across workers gives
the same array.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path as _FsPath
from typing import Callable, Sequence

import numpy as np

from adaptw.estimators import SampleSet
from adaptw.grid import cell_index, center_of
from adaptw.measures import (
    MarkovMeasure,
    PathMeasure,
    ProcessShape,
    ScenarioTree,
    _build_tree,
    make_markov_measure,
    make_path_measure,
    path_measure_from_dict,
    to_scenario_tree,
)

ROW_CHUNK = 4096


class ModelError(ValueError):
    pass


# -- models --------------------------------------------------------------------


@dataclass(frozen=True)
class LipschitzDynamics:
    """X_{t+1} = clip(F(X_{1:t}, Z_{t+1})), Z uniform on [0,1]^d.

    The default step is affine, F = a * X_t + b * Z + c, Lipschitz with
    constant |a|; clipping to the cube is part of F and keeps the constant.
    ``step`` replaces it with any callable ``step(prefix (n,t,d), z (n,d))``
    whose Lipschitz constant ``L`` the caller asserts.
    ``initial`` is "uniform" or a finite law ``(points (k,d), weights)``.
    """

    shape: ProcessShape
    a: float = 0.5
    b: float = 0.5
    c: float = 0.0
    initial: object = "uniform"
    step: Callable | None = None
    L: float | None = None

    def __post_init__(self):
        if self.step is None:
            if not all(math.isfinite(v) for v in (self.a, self.b, self.c)) or self.b < 0:
                raise ModelError("affine step needs finite a, c and b >= 0")
            object.__setattr__(self, "L", abs(self.a))
        elif self.L is None or self.L < 0:
            raise ModelError("a custom step needs its Lipschitz constant L >= 0")
        if isinstance(self.initial, str):
            if self.initial != "uniform":
                raise ModelError("initial must be 'uniform' or (points, weights)")
        else:
            pts, w = self.initial
            pts = np.asarray(pts, dtype=np.float64).reshape(len(w), self.shape.d)
            w = np.asarray(w, dtype=np.float64)
            if np.any(w < 0) or w.sum() <= 0 or pts.min() < 0 or pts.max() > 1:
                raise ModelError("finite initial law must have weights >= 0 on [0,1]^d")
            object.__setattr__(self, "initial", (pts, w / w.sum()))

    @property
    def lipschitz(self) -> float:
        return float(self.L)

    def draws_per_row(self) -> int:
        return self.shape.T * self.shape.d

    def _rows(self, u: np.ndarray) -> np.ndarray:
        n, T, d = u.shape[0], self.shape.T, self.shape.d
        u = u.reshape(n, T, d)
        x = np.empty((n, T, d))
        if isinstance(self.initial, str):
            x[:, 0] = u[:, 0]
        else:
            pts, w = self.initial
            k = np.minimum(np.searchsorted(np.cumsum(w), u[:, 0, 0], side="right"), len(w) - 1)
            x[:, 0] = pts[k]
        for t in range(1, T):
            if self.step is None:
                nxt = self.a * x[:, t - 1] + self.b * u[:, t] + self.c
            else:
                nxt = np.asarray(self.step(x[:, :t], u[:, t]), dtype=np.float64)
            x[:, t] = np.clip(nxt, 0.0, 1.0)
        return x


def ar_model(d: int = 1, T: int = 2) -> LipschitzDynamics:
    """X_1 uniform, X_{t+1} = X_t / 2 + Z / 2 (stays in the cube, L = 1/2)."""
    return LipschitzDynamics(ProcessShape(d, T), 0.5, 0.5, 0.0)


@dataclass(frozen=True)
class DensityModel:
    """Density f = 1 + alpha * g on [0,1]^{dT}, g = cos(2 pi sum x) / (2 pi T d).

    g is 1-Lipschitz, |g| <= 1/(2 pi T d) and integrates to 0, so Z = 1 and
    f >= 1 - alpha > 0. Sampling is by rejection from the uniform proposal
    with bound 1 + alpha (acceptance rate 1/(1+alpha)).
    """

    shape: ProcessShape
    alpha: float = 0.5

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ModelError("alpha must lie in [0, 1)")

    @property
    def bound(self) -> float:
        return 1.0 + self.alpha

    def g(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        s = x.reshape(x.shape[0], -1).sum(axis=1)
        return np.cos(2 * np.pi * s) / (2 * np.pi * self.shape.T * self.shape.d)

    def density(self, x) -> np.ndarray:
        return 1.0 + self.alpha * self.g(x)

    @property
    def lipschitz(self) -> float:
        # W1-Lipschitz constant of the only non-uniform kernel (the last step)
        return self.alpha / (2 * self.shape.T)


@dataclass(frozen=True)
class FiniteSupport:
    measure: PathMeasure

    @property
    def shape(self) -> ProcessShape:
        return self.measure.shape

    @property
    def lipschitz(self) -> float:
        return float("nan")  # kernels are Lipschitz with a support-dependent constant

    def draws_per_row(self) -> int:
        return 1

    def _rows(self, u: np.ndarray) -> np.ndarray:
        cw = np.cumsum(self.measure.weights)
        k = np.minimum(np.searchsorted(cw, u[:, 0], side="right"), self.measure.n_atoms - 1)
        return self.measure.paths[k].copy()


@dataclass(frozen=True)
class FigureOnePair:
    """The two-atom pair mu, nu at distance eps in W but eps + 1/2 in AW.

    ``which`` selects the law that gets sampled ("mu" or "nu").
    """

    eps: float
    which: str = "mu"

    def __post_init__(self):
        if not 0 < self.eps < 0.5:
            raise ModelError("eps must lie in (0, 1/2)")
        if self.which not in ("mu", "nu"):
            raise ModelError("which must be 'mu' or 'nu'")

    @property
    def shape(self) -> ProcessShape:
        return ProcessShape(1, 2)

    def finite(self) -> FiniteSupport:
        mu, nu = figure_one_measures(self.eps)
        return FiniteSupport(mu if self.which == "mu" else nu)

    @property
    def lipschitz(self) -> float:
        return float("nan")


ProcessModel = LipschitzDynamics | DensityModel | FiniteSupport | FigureOnePair


def figure_one_measures(eps: float) -> tuple[PathMeasure, PathMeasure]:
    if not 0 < eps < 0.5:
        raise ModelError("eps must lie in (0, 1/2)")
    shape = ProcessShape(1, 2)
    mu = make_path_measure(shape, [[0.5, 1.0], [0.5, 0.0]])
    nu = make_path_measure(shape, [[0.5 + eps, 1.0], [0.5 - eps, 0.0]])
    return mu, nu


# -- sampling ------------------------------------------------------------------


def stream_key(*entropy: int) -> np.ndarray:
    """128-bit Philox key from integer entropy (seed, and optional labels)."""
    return np.random.SeedSequence([int(e) for e in entropy]).generate_state(2, np.uint64)


def row_uniforms(key, r0: int, r1: int, k: int) -> np.ndarray:
    """Uniforms for rows r0..r1-1, ``k`` per row; row r depends on (key, r) only."""
    kp = -(-k // 4) * 4  # Philox emits blocks of four 64-bit words
    bg = np.random.Philox(key=key)
    bg.advance(r0 * kp // 4)
    u = np.random.Generator(bg).random((r1 - r0) * kp).reshape(r1 - r0, kp)
    return u[:, :k]


def _row_generator(key, r: int) -> np.random.Generator:
    counter = np.zeros(4, dtype=np.uint64)
    counter[3] = r
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _rejection_row(model: DensityModel, rng: np.random.Generator, batch: int = 4):
    D = model.shape.T * model.shape.d
    tries = 0
    while True:
        prop = rng.random((batch, D))
        acc = rng.random(batch) * model.bound <= model.density(prop)
        tries += batch
        if acc.any():
            i = int(np.argmax(acc))
            return prop[i], tries - batch + i + 1


def acceptance_rate(model: DensityModel, n_proposals: int, seed: int) -> float:
    """Fraction of accepted proposals among ``n_proposals`` uniform draws."""
    rng = np.random.Generator(np.random.Philox(key=stream_key(seed)))
    D = model.shape.T * model.shape.d
    prop = rng.random((n_proposals, D))
    acc = rng.random(n_proposals) * model.bound <= model.density(prop)
    return float(acc.mean())


def sample(model, N: int, seed: int, key=None) -> SampleSet:
    """N i.i.d. paths of ``model``; bit-for-bit reproducible from the seed."""
    if int(N) != N or N < 1:
        raise ModelError("N must be a positive integer")
    if isinstance(model, FigureOnePair):
        model = model.finite()
    key = stream_key(seed) if key is None else key
    shape = model.shape
    if isinstance(model, DensityModel):
        rows = np.empty((N, shape.T * shape.d))
        for r in range(N):
            rows[r] = _rejection_row(model, _row_generator(key, r))[0]
        return SampleSet(shape, rows.reshape(N, shape.T, shape.d))
    k = model.draws_per_row()
    out = np.empty((N, shape.T, shape.d))
    for r0 in range(0, N, ROW_CHUNK):
        r1 = min(N, r0 + ROW_CHUNK)
        out[r0:r1] = model._rows(row_uniforms(key, r0, r1, k))
    return SampleSet(shape, out)


# -- references ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuantizedReference:
    """Grid discretization of a model with a certified bound AW(mu, measure) <= budget."""

    measure: object  # PathMeasure, ScenarioTree or MarkovMeasure
    K: int
    budget: float
    exact: bool = False
    note: str = field(default="")

    def n_nodes(self) -> int:
        if isinstance(self.measure, MarkovMeasure):
            return int(sum(len(s) for s in self.measure.supports))
        tree = self.measure if isinstance(self.measure, ScenarioTree) \
            else to_scenario_tree(self.measure)
        return int(sum(tree.n_nodes(t) for t in range(1, tree.shape.T + 1)))


def reference_budget(L: Sequence[float], delta: float, markov: bool) -> float:
    """Bound on AW(mu, nu) when nu's kernels are the quantized kernels of mu
    evaluated at cell centers.

    ``L[t]`` (t = 1..T-1, list index t-1) is the W1-Lipschitz constant of the
    step-t kernel, ``delta`` the largest quantization displacement. The value
    to go satisfies V_t <= a_t * |x - y| + b_t (Markov: current states;
    otherwise summed over the prefix), which gives
    a_t = (1 + a_{t+1}) L_t [+ a_{t+1}], b_t = (1 + a_{t+1}) delta + b_{t+1}.
    """
    a = b = 0.0
    for Lt in reversed(list(L)):
        a, b = (1 + a) * Lt + (0.0 if markov else a), (1 + a) * delta + b
    return (1 + a) * delta + b


def _interval_cell_mass(lo: np.ndarray, width: float, K: int) -> np.ndarray:
    """Cell masses of U[lo, lo + width] clipped to [0,1]; one row per lo."""
    edges = np.arange(K + 1) / K
    if width == 0:
        idx = cell_index(K, np.clip(lo, 0, 1))
        P = np.zeros((len(lo), K))
        P[np.arange(len(lo)), idx] = 1.0
        return P
    hi = lo + width
    left = np.clip(edges[:-1][None, :], lo[:, None], hi[:, None])
    right = np.clip(edges[1:][None, :], lo[:, None], hi[:, None])
    P = (right - left) / width
    P[:, 0] += np.clip(0.0 - lo, 0, width) / width  # mass clipped to 0
    P[:, -1] += np.clip(hi - 1.0, 0, width) / width  # mass clipped to 1
    return P / P.sum(axis=1, keepdims=True)


def _lex_centers(K: int, d: int) -> np.ndarray:
    c = center_of(K, np.arange(K))
    grids = np.meshgrid(*([c] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _kron_all(P: np.ndarray, d: int) -> np.ndarray:
    out = P
    for _ in range(d - 1):
        out = np.kron(out, P)
    return out


def _affine_reference(model: LipschitzDynamics, K: int, max_states: int) -> QuantizedReference:
    T, d = model.shape.T, model.shape.d
    n = K**d
    if n * n > max_states:
        raise ModelError(f"K = {K} gives {n} grid states per step; too many for d = {d}")
    centers = _lex_centers(K, d)
    if isinstance(model.initial, str):
        initial = np.full(n, 1.0 / n)
    else:
        pts, w = model.initial
        idx = cell_index(K, pts)
        flat = np.ravel_multi_index(tuple(idx.T), (K,) * d)
        initial = np.bincount(flat, weights=w, minlength=n)
    c1 = center_of(K, np.arange(K))
    P1 = _interval_cell_mass(model.a * c1 + model.c, model.b, K)
    P = _kron_all(P1, d)
    m = make_markov_measure(model.shape, [centers] * T, initial, [P] * (T - 1))
    delta = math.sqrt(d) / (2 * K)
    budget = reference_budget([model.L] * (T - 1), delta, markov=True)
    return QuantizedReference(m, K, budget, note="Markov chain on the K-grid, kernels at cell centers")


def _density_reference(model: DensityModel, K: int, max_states: int) -> QuantizedReference:
    T, d = model.shape.T, model.shape.d
    n = K**d
    if n**T > max_states:
        raise ModelError(f"K = {K} gives {n ** T} reference paths; too many")
    centers = _lex_centers(K, d)
    edges = np.arange(K + 1) / K
    # integral of exp(2 pi i x) over each 1-d cell, then over boxes by products
    e1 = (np.exp(2j * np.pi * edges[1:]) - np.exp(2j * np.pi * edges[:-1])) / (2j * np.pi)
    box = e1
    for _ in range(d - 1):
        box = np.kron(box, e1)
    scale = model.alpha / (2 * np.pi * T * d)

    def last_kernel(s: np.ndarray) -> np.ndarray:
        # P(cell | past sum s) = vol + scale * Re(exp(2 pi i s) * box)
        P = 1.0 / n + scale * np.real(np.exp(2j * np.pi * s)[:, None] * box[None, :])
        return P / P.sum(axis=1, keepdims=True)

    points = [None]
    parent = [None]
    cond = [None]
    n_prev = 1
    sums = np.zeros(1)
    for t in range(1, T + 1):
        parent.append(np.repeat(np.arange(n_prev), n))
        points.append(np.tile(centers, (n_prev, 1)))
        if t < T:
            cond.append(np.full(n_prev * n, 1.0 / n))
        else:
            cond.append(last_kernel(sums).ravel())
        sums = np.repeat(sums, n) + np.tile(centers.sum(axis=1), n_prev)
        n_prev *= n
    tree = _build_tree(model.shape, points, parent, cond)
    delta = math.sqrt(d) / (2 * K)
    L = [0.0] * (T - 2) + [model.lipschitz] if T >= 2 else []
    budget = reference_budget(L, delta, markov=False)
    return QuantizedReference(tree, K, budget, note="tree on the K-grid, kernels at cell centers")


def _finite_reference(m: PathMeasure, K: int) -> QuantizedReference:
    snapped = center_of(K, cell_index(K, m.paths))
    T = m.shape.T
    injective = True
    for t in range(1, T + 1):
        a = np.unique(m.paths[:, :t].reshape(m.n_atoms, -1), axis=0).shape[0]
        b = np.unique(snapped[:, :t].reshape(m.n_atoms, -1), axis=0).shape[0]
        injective &= a == b
    if not injective:
        return QuantizedReference(m, K, 0.0, exact=True, note="exact atoms (grid snap merges prefixes)")
    # the snap is a bijection on prefixes, so the diagonal coupling is bicausal
    cost = float(np.dot(m.weights, np.sqrt(((m.paths - snapped) ** 2).sum(axis=2)).sum(axis=1)))
    if cost == 0.0:
        return QuantizedReference(m, K, 0.0, exact=True, note="atoms already on the K-grid")
    return QuantizedReference(make_path_measure(m.shape, snapped, m.weights), K, cost,
                              note="atoms snapped to the K-grid")


def quantized_reference(model, K: int, max_states: int = 40_000_000) -> QuantizedReference:
    """Discretization of ``model`` on K cells per dimension plus its AW budget."""
    if int(K) != K or K < 1:
        raise ModelError("K must be a positive integer")
    if isinstance(model, FigureOnePair):
        model = model.finite()
    if isinstance(model, FiniteSupport):
        return _finite_reference(model.measure, K)
    if isinstance(model, LipschitzDynamics):
        if model.step is not None:
            raise ModelError("no tractable reference for a custom step map")
        return _affine_reference(model, K, max_states)
    if isinstance(model, DensityModel):
        return _density_reference(model, K, max_states)
    raise ModelError(f"no reference for {type(model).__name__}")


# -- JSON model specs ----------------------------------------------------------


def model_from_dict(spec: dict):
    """Build a model from its JSON spec.

    Variants: ``{"variant": "ar", "d", "T"}``,
    ``{"variant": "lipschitz", "d", "T", "a", "b", "c", "initial"}`` with
    initial "uniform" or ``{"points": [...], "weights": [...]}``,
    ``{"variant": "density", "d", "T", "alpha"}``,
    ``{"variant": "finite", "measure": <path measure document>}``,
    ``{"variant": "figure_one", "eps", "which"}``.
    """
    if not isinstance(spec, dict) or "variant" not in spec:
        raise ModelError("model spec must be an object with a 'variant' key")
    v = spec["variant"]
    try:
        if v == "ar":
            return ar_model(int(spec.get("d", 1)), int(spec.get("T", 2)))
        if v == "lipschitz":
            init = spec.get("initial", "uniform")
            if isinstance(init, dict):
                init = (init["points"], init["weights"])
            return LipschitzDynamics(ProcessShape(int(spec["d"]), int(spec["T"])),
                                     float(spec.get("a", 0.5)), float(spec.get("b", 0.5)),
                                     float(spec.get("c", 0.0)), init)
        if v == "density":
            return DensityModel(ProcessShape(int(spec["d"]), int(spec["T"])),
                                float(spec.get("alpha", 0.5)))
        if v == "finite":
            return FiniteSupport(path_measure_from_dict(spec["measure"]))
        if v == "figure_one":
            return FigureOnePair(float(spec["eps"]), spec.get("which", "mu"))
    except (KeyError, TypeError) as exc:
        raise ModelError(f"incomplete model spec: {exc}") from exc
    raise ModelError(f"unknown model variant {v!r}")


def model_to_dict(model) -> dict:
    if isinstance(model, LipschitzDynamics):
        if model.step is not None:
            raise ModelError("custom step maps cannot be serialized")
        init = model.initial if isinstance(model.initial, str) else {
            "points": model.initial[0].tolist(), "weights": model.initial[1].tolist()}
        return {"variant": "lipschitz", "d": model.shape.d, "T": model.shape.T,
                "a": model.a, "b": model.b, "c": model.c, "initial": init}
    if isinstance(model, DensityModel):
        return {"variant": "density", "d": model.shape.d, "T": model.shape.T,
                "alpha": model.alpha}
    if isinstance(model, FiniteSupport):
        return {"variant": "finite", "measure": model.measure.to_dict()}
    if isinstance(model, FigureOnePair):
        return {"variant": "figure_one", "eps": model.eps, "which": model.which}
    raise ModelError(f"cannot serialize {type(model).__name__}")


def load_model(path):
    try:
        spec = json.loads(_FsPath(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_dict(spec)
