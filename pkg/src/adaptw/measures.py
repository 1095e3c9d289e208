"""Finitely supported laws of discrete-time processes.

Three representations of the same object:

* :class:`PathMeasure` -- weighted paths, the exchange format;
* :class:`ScenarioTree` -- the filtration-respecting tree obtained by
  grouping paths on bit-identical prefixes;
* :class:`MarkovMeasure` -- per-time supports with transition matrices.

Trees and Markov chains both expose :meth:`layers`, a depth-indexed
description of "node -> children with conditional probabilities" that the
nested dynamic program in :mod:`adaptw.adapted` consumes directly.

Prefix grouping uses exact equality of coordinates. Paths whose prefixes
differ by rounding noise are different prefixes; snapping them is the
caller's job (the adapted empirical measure lives on grid centers, where
equality is exact).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path as _FsPath
from typing import Iterable, Sequence

import numpy as np

MASS_TOL = 1e-12


class MeasureError(ValueError):
    """Invalid measure input (shape, range, weights)."""


@dataclass(frozen=True)
class ProcessShape:
    d: int
    T: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise MeasureError(f"dimension d must be a positive integer, got {self.d}")
        if int(self.T) != self.T or self.T < 1:
            raise MeasureError(f"number of time steps T must be >= 1, got {self.T}")


def _check_paths(shape: ProcessShape, paths: np.ndarray) -> np.ndarray:
    paths = np.asarray(paths, dtype=np.float64)
    if paths.ndim == 2 and shape.d == 1 and paths.shape[1] == shape.T:
        paths = paths[:, :, None]
    if paths.ndim != 3 or paths.shape[1:] != (shape.T, shape.d):
        raise MeasureError(
            f"paths must have shape (n, T={shape.T}, d={shape.d}), got {paths.shape}"
        )
    if not np.all(np.isfinite(paths)):
        raise MeasureError("paths contain non-finite coordinates")
    if paths.size and (paths.min() < 0.0 or paths.max() > 1.0):
        raise MeasureError("path coordinates must lie in [0, 1]")
    return paths


@dataclass(frozen=True, eq=False)
class PathMeasure:
    """Probability on ([0,1]^d)^T given by weighted, distinct paths.

    ``paths`` has shape ``(n, T, d)`` and is sorted lexicographically;
    ``weights`` are positive and sum to one. Build through
    :func:`make_path_measure`, which normalizes and merges duplicates.
    """

    shape: ProcessShape
    paths: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.paths.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_atoms(self) -> int:
        return self.weights.shape[0]

    @property
    def atoms(self):
        return [(self.paths[k], float(self.weights[k])) for k in range(self.n_atoms)]

    def flat(self) -> np.ndarray:
        """Paths as points of [0,1]^(T*d)."""
        return self.paths.reshape(self.n_atoms, -1)

    def marginal(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Law of X_t (1-based) as ``(points, weights)`` with distinct points."""
        pts, inv = np.unique(self.paths[:, t - 1, :], axis=0, return_inverse=True)
        w = np.zeros(len(pts))
        np.add.at(w, inv.ravel(), self.weights)
        return pts, w

    def same_atoms(self, other: "PathMeasure", tol: float = 0.0) -> bool:
        if self.shape != other.shape or self.n_atoms != other.n_atoms:
            return False
        return bool(
            np.array_equal(self.paths, other.paths)
            and np.all(np.abs(self.weights - other.weights) <= tol)
        )

    def to_dict(self) -> dict:
        return {
            "d": self.shape.d,
            "T": self.shape.T,
            "atoms": [
                {"path": self.paths[k].tolist(), "w": float(self.weights[k])}
                for k in range(self.n_atoms)
            ],
        }


def make_path_measure(shape: ProcessShape, paths, weights=None) -> PathMeasure:
    """Normalize, drop zero weights, merge duplicate paths, sort atoms.

    ``paths`` is an ``(n, T, d)`` array (or ``(n, T)`` when d = 1); missing
    ``weights`` means uniform.
    """
    paths = _check_paths(shape, paths)
    n = paths.shape[0]
    if n == 0:
        raise MeasureError("empty atom list")
    if weights is None:
        weights = np.ones(n)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.shape[0] != n:
        raise MeasureError("number of weights does not match number of paths")
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise MeasureError("weights must be finite and nonnegative")
    keep = weights > 0
    if not np.any(keep):
        raise MeasureError("all weights are zero")
    paths, weights = paths[keep], weights[keep]
    flat = paths.reshape(paths.shape[0], -1)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    merged = np.zeros(uniq.shape[0])
    np.add.at(merged, inv.ravel(), weights)
    total = merged.sum()
    if abs(total - 1.0) > 4 * np.finfo(float).eps:  # keep normalized input bit-exact
        merged /= total
    return PathMeasure(shape, uniq.reshape(-1, shape.T, shape.d), merged)


def path_measure_from_dict(data: dict) -> PathMeasure:
    try:
        shape = ProcessShape(int(data["d"]), int(data["T"]))
        atoms = data["atoms"]
        paths = [a["path"] for a in atoms]
        weights = [a["w"] for a in atoms]
    except (KeyError, TypeError) as exc:
        raise MeasureError(f"malformed measure document: {exc}") from exc
    if not paths:
        raise MeasureError("empty atom list")
    arr = np.asarray(paths, dtype=np.float64)
    if arr.ndim == 2 and shape.d == 1:
        arr = arr[:, :, None]
    return make_path_measure(shape, arr, weights)


@dataclass(frozen=True)
class Layer:
    """Children of every node at depth ``t`` (nodes of depth ``t + 1``).

    ``points`` are the depth-(t+1) node points; the children of depth-t node
    ``i`` are ``index[ptr[i]:ptr[i+1]]`` with conditional probabilities
    ``prob[ptr[i]:ptr[i+1]]``.
    """

    points: np.ndarray
    ptr: np.ndarray
    index: np.ndarray
    prob: np.ndarray

    @property
    def n_parents(self) -> int:
        return self.ptr.shape[0] - 1

    @property
    def n_children(self) -> int:
        return self.points.shape[0]


class Node:
    """Read-only view of a tree node (depth 0 is the root, without a point)."""

    __slots__ = ("_tree", "depth", "index")

    def __init__(self, tree: "ScenarioTree", depth: int, index: int):
        self._tree = tree
        self.depth = depth
        self.index = index

    @property
    def point(self):
        if self.depth == 0:
            return None
        return self._tree.points[self.depth][self.index]

    @property
    def children(self) -> list[tuple["Node", float]]:
        if self.depth == self._tree.shape.T:
            return []
        lo, hi = self._tree.child_ptr[self.depth][self.index : self.index + 2]
        probs = self._tree.cond_prob[self.depth + 1]
        return [(Node(self._tree, self.depth + 1, k), float(probs[k])) for k in range(lo, hi)]

    def __repr__(self):
        return f"Node(depth={self.depth}, index={self.index}, point={self.point})"


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """Depth-T tree stored level by level.

    For depth ``t`` in ``1..T``: ``points[t]`` (``(n_t, d)``), ``parent[t]``
    (index into depth ``t-1``) and ``cond_prob[t]``. Nodes of a level are
    ordered by (parent, point), so children are contiguous and sorted
    lexicographically. Index 0 of each list is a placeholder for the root.
    """

    shape: ProcessShape
    points: list
    parent: list
    cond_prob: list
    child_ptr: list = field(repr=False)

    @property
    def root(self) -> Node:
        return Node(self, 0, 0)

    def n_nodes(self, t: int) -> int:
        return 1 if t == 0 else self.points[t].shape[0]

    def node_mass(self, t: int) -> np.ndarray:
        """Unconditional probability of every depth-t node."""
        mass = np.ones(1)
        for s in range(1, t + 1):
            mass = mass[self.parent[s]] * self.cond_prob[s]
        return mass

    def prefixes(self, t: int) -> np.ndarray:
        """``(n_t, t, d)`` array of the root-to-node point sequences."""
        out = np.empty((self.n_nodes(t), t, self.shape.d))
        idx = np.arange(self.n_nodes(t))
        for s in range(t, 0, -1):
            out[:, s - 1, :] = self.points[s][idx]
            idx = self.parent[s][idx]
        return out

    def layers(self) -> list[Layer]:
        return [
            Layer(self.points[t + 1], self.child_ptr[t], np.arange(self.n_nodes(t + 1)),
                  self.cond_prob[t + 1])
            for t in range(self.shape.T)
        ]

    def reachable(self, t: int) -> np.ndarray:
        return np.ones(self.n_nodes(t), dtype=bool)

    def leaf_count(self) -> int:
        return self.n_nodes(self.shape.T)


def _child_ptr(parent: np.ndarray, n_parents: int) -> np.ndarray:
    counts = np.bincount(parent, minlength=n_parents)
    ptr = np.zeros(n_parents + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr


def _build_tree(shape: ProcessShape, points, parent, cond_prob) -> ScenarioTree:
    child_ptr = [_child_ptr(parent[t + 1], 1 if t == 0 else points[t].shape[0])
                 for t in range(shape.T)]
    for t in range(1, shape.T + 1):
        for arr in (points[t], parent[t], cond_prob[t]):
            arr.setflags(write=False)
    return ScenarioTree(shape, points, parent, cond_prob, child_ptr)


def to_scenario_tree(m: PathMeasure) -> ScenarioTree:
    """Group paths on common prefixes; edge probabilities are mass ratios."""
    T, d = m.shape.T, m.shape.d
    points: list = [None]
    parent: list = [None]
    cond: list = [None]
    # atoms are lexicographically sorted, so every prefix block is contiguous
    node_of_atom = np.zeros(m.n_atoms, dtype=np.int64)
    prev_mass = np.array([1.0])
    for t in range(1, T + 1):
        key = m.paths[:, :t, :].reshape(m.n_atoms, -1)
        if m.n_atoms > 1:
            new = np.any(key[1:] != key[:-1], axis=1)
            starts = np.concatenate([[True], new])
        else:
            starts = np.array([True])
        node_id = np.cumsum(starts) - 1
        n_t = int(node_id[-1]) + 1
        mass = np.zeros(n_t)
        np.add.at(mass, node_id, m.weights)
        first = np.flatnonzero(starts)
        par = node_of_atom[first]
        points.append(np.ascontiguousarray(m.paths[first, t - 1, :]))
        parent.append(par)
        cond.append(mass / prev_mass[par])
        node_of_atom = node_id
        prev_mass = mass
    return _build_tree(m.shape, points, parent, cond)


def to_path_measure(tree: ScenarioTree) -> PathMeasure:
    """Inverse of :func:`to_scenario_tree`; zero-probability leaves vanish."""
    T = tree.shape.T
    return make_path_measure(tree.shape, tree.prefixes(T), tree.node_mass(T))


def scenario_tree(shape: ProcessShape, root_children: Sequence) -> ScenarioTree:
    """Build a tree from nested ``(point, prob, children)`` tuples.

    Children probabilities are normalized per node; zero-probability
    branches are kept out of the tree.
    """
    points: list = [None] + [[] for _ in range(shape.T)]
    parent: list = [None] + [[] for _ in range(shape.T)]
    cond: list = [None] + [[] for _ in range(shape.T)]

    def visit(children, depth, par):
        if depth > shape.T:
            if children:
                raise MeasureError("tree deeper than T")
            return
        if not children:
            raise MeasureError(f"leaf at depth {depth - 1} < T")
        total = sum(float(c[1]) for c in children)
        if total <= 0:
            raise MeasureError("children probabilities sum to zero")
        order = sorted(children, key=lambda c: tuple(np.atleast_1d(c[0])))
        for point, prob, sub in order:
            if prob <= 0:
                continue
            idx = len(points[depth])
            points[depth].append(np.atleast_1d(np.asarray(point, dtype=np.float64)))
            parent[depth].append(par)
            cond[depth].append(float(prob) / total)
            visit(sub, depth + 1, idx)

    visit(root_children, 1, 0)
    pts = [None] + [np.array(points[t]).reshape(-1, shape.d) for t in range(1, shape.T + 1)]
    par = [None] + [np.array(parent[t], dtype=np.int64) for t in range(1, shape.T + 1)]
    cp = [None] + [np.array(cond[t]) for t in range(1, shape.T + 1)]
    return to_scenario_tree(to_path_measure(_build_tree(shape, pts, par, cp)))


@dataclass(frozen=True, eq=False)
class MarkovMeasure:
    """Markov law: ``supports[t]`` (``(n_t, d)``) for t = 1..T (list index
    t-1), an initial vector over ``supports[0]`` and row-stochastic
    ``transitions[t]`` from ``supports[t]`` to ``supports[t+1]``.
    """

    shape: ProcessShape
    supports: list
    initial: np.ndarray
    transitions: list

    def __post_init__(self):
        T, d = self.shape.T, self.shape.d
        if len(self.supports) != T or len(self.transitions) != T - 1:
            raise MeasureError("need T supports and T-1 transition matrices")
        for t, s in enumerate(self.supports):
            if s.ndim != 2 or s.shape[1] != d:
                raise MeasureError(f"support {t + 1} has wrong dimension (expected d={d})")
            if s.size and (s.min() < 0 or s.max() > 1):
                raise MeasureError("support points must lie in [0, 1]")
        if self.initial.shape != (self.supports[0].shape[0],):
            raise MeasureError("initial law does not match the first support")
        if np.any(self.initial < 0) or abs(self.initial.sum() - 1) > MASS_TOL:
            raise MeasureError("initial law must be a probability vector")
        for t, P in enumerate(self.transitions):
            if P.shape != (self.supports[t].shape[0], self.supports[t + 1].shape[0]):
                raise MeasureError(f"transition {t + 1} has wrong shape")
            if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1) > MASS_TOL):
                raise MeasureError(f"transition {t + 1} is not row-stochastic")

    def state_mass(self, t: int) -> np.ndarray:
        """Law of the state at time t (1-based) over ``supports[t-1]``."""
        p = self.initial
        for s in range(t - 1):
            p = p @ self.transitions[s]
        return p

    def reachable(self, t: int) -> np.ndarray:
        """States with positive probability at depth t (root at t = 0)."""
        if t == 0:
            return np.ones(1, dtype=bool)
        return self.state_mass(t) > 0

    def layers(self) -> list[Layer]:
        out = []
        rows = [self.initial[None, :]] + list(self.transitions)
        for t in range(self.shape.T):
            P = rows[t]
            reach = self.reachable(t)
            ptr = [0]
            idx, prob = [], []
            for i in range(P.shape[0]):
                if reach[i]:
                    nz = np.flatnonzero(P[i] > 0)
                    idx.append(nz)
                    prob.append(P[i, nz])
                ptr.append(ptr[-1] + (len(idx[-1]) if reach[i] else 0))
            out.append(Layer(
                self.supports[t],
                np.asarray(ptr, dtype=np.int64),
                np.concatenate(idx).astype(np.int64) if idx else np.zeros(0, np.int64),
                np.concatenate(prob) if prob else np.zeros(0),
            ))
        return out

    def to_dict(self) -> dict:
        return {
            "d": self.shape.d,
            "T": self.shape.T,
            "supports": [s.tolist() for s in self.supports],
            "initial": self.initial.tolist(),
            "transitions": [P.tolist() for P in self.transitions],
        }


def make_markov_measure(shape: ProcessShape, supports, initial, transitions) -> MarkovMeasure:
    supports = [np.asarray(s, dtype=np.float64).reshape(len(s), -1) for s in supports]
    initial = np.asarray(initial, dtype=np.float64)
    transitions = [np.asarray(P, dtype=np.float64).reshape(len(P), -1) for P in transitions]
    return MarkovMeasure(shape, supports, initial, transitions)


def markov_from_dict(data: dict) -> MarkovMeasure:
    try:
        shape = ProcessShape(int(data["d"]), int(data["T"]))
        supports = [np.asarray(s, dtype=np.float64).reshape(len(s), shape.d)
                    for s in data["supports"]]
        return make_markov_measure(shape, supports, data["initial"], data["transitions"])
    except (KeyError, TypeError) as exc:
        raise MeasureError(f"malformed Markov document: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, MeasureError):
            raise
        raise MeasureError(f"malformed Markov document: {exc}") from exc


def markov_to_tree(m: MarkovMeasure) -> ScenarioTree:
    """Expand a Markov law into its scenario tree (positive-mass branches)."""
    T = m.shape.T
    state = [None, np.flatnonzero(m.initial > 0)]
    points = [None, m.supports[0][state[1]]]
    parent = [None, np.zeros(len(state[1]), dtype=np.int64)]
    cond = [None, m.initial[state[1]]]
    for t in range(1, T):
        P = m.transitions[t - 1]
        par, nxt = np.nonzero(P[state[t]] > 0)
        state.append(nxt)
        points.append(m.supports[t][nxt])
        parent.append(par.astype(np.int64))
        cond.append(P[state[t][par], nxt])
    tree = _build_tree(m.shape, points, parent, cond)
    # regroup so that equal points under one parent merge and order is canonical
    return to_scenario_tree(to_path_measure(tree))


def load_measure(path) -> PathMeasure | MarkovMeasure:
    """Read a JSON measure file (path-measure or Markov document)."""
    text = _FsPath(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeasureError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise MeasureError(f"{path}: expected a JSON object")
    if "atoms" in data:
        return path_measure_from_dict(data)
    if "transitions" in data:
        return markov_from_dict(data)
    raise MeasureError(f"{path}: neither a path measure nor a Markov measure")


def save_measure(m: PathMeasure | MarkovMeasure, path) -> None:
    # json writes floats with repr(), which round-trips binary64 exactly
    _FsPath(path).write_text(json.dumps(m.to_dict()) + "\n")


def as_tree(m) -> ScenarioTree:
    if isinstance(m, ScenarioTree):
        return m
    if isinstance(m, PathMeasure):
        return to_scenario_tree(m)
    if isinstance(m, MarkovMeasure):
        return markov_to_tree(m)
    raise TypeError(f"cannot interpret {type(m).__name__} as a scenario tree")


def iter_paths(m: PathMeasure) -> Iterable[tuple[np.ndarray, float]]:
    for k in range(m.n_atoms):
        yield m.paths[k], float(m.weights[k])
