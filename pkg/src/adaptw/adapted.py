"""Adapted (nested) Wasserstein distance by backward dynamic programming.

The value function on node pairs is

    V_T = 0,
    V_t(i, j) = min over couplings g of (children of i, children of j) of
                sum g(k, l) * (|x_k - y_l| + V_{t+1}(k, l)),

and AW = V_0 at the pair of roots. Both sides may be scenario trees or
Markov chains: a Markov side is walked on its state lattice, which is exact
because the law of the future seen from a node depends only on its state.

For d = 1 the last stage is a plain 1-d W1 and is computed by the CDF
formula; every other stage is an exact transportation problem.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from adaptw import kernels
from adaptw.measures import (
    Layer,
    MarkovMeasure,
    PathMeasure,
    ProcessShape,
    ScenarioTree,
    to_scenario_tree,
)
from adaptw.transport import TransportPlan, euclidean_cost, solve_transport

DEFAULT_MAX_PAIRS = 30_000_000
CAUSAL_TOL = 1e-9


class ShapeMismatch(ValueError):
    pass


class DPMemoryError(MemoryError):
    """A DP level would hold more node pairs than allowed."""

    def __init__(self, t: int, n_pairs: int, limit: int):
        super().__init__(
            f"depth {t} needs {n_pairs} node pairs, above the limit of {limit}"
        )
        self.t = t
        self.n_pairs = n_pairs
        self.limit = limit


def _layers(m):
    if isinstance(m, PathMeasure):
        m = to_scenario_tree(m)
    if isinstance(m, (ScenarioTree, MarkovMeasure)):
        return m.shape, m.layers()
    raise TypeError(f"expected a PathMeasure, ScenarioTree or MarkovMeasure, got {type(m).__name__}")


@dataclass(frozen=True)
class DPValueTable:
    """V_t on all node pairs: ``levels[t][i, j]`` for depth t = 0..T."""

    levels: list

    def __getitem__(self, key):
        t, i, j = key
        return float(self.levels[t][i, j])

    @property
    def T(self) -> int:
        return len(self.levels) - 1


@dataclass
class PlanNode:
    """Optimal coupling of the children of node ``a`` (side A) and ``b``."""

    depth: int
    a: int
    b: int
    coupling: TransportPlan  # rows/cols index child_a / child_b
    child_a: np.ndarray
    child_b: np.ndarray
    children: dict = field(default_factory=dict)


@dataclass
class PathCoupling:
    """Coupling of two path measures on finitely many path pairs."""

    x: np.ndarray  # (K, T, d)
    y: np.ndarray  # (K, T, d)
    mass: np.ndarray  # (K,)

    def cost(self) -> float:
        step = np.sqrt(np.sum((self.x - self.y) ** 2, axis=2))
        return float(np.dot(self.mass, step.sum(axis=1)))

    def marginals(self) -> tuple[PathMeasure, PathMeasure]:
        from adaptw.measures import make_path_measure

        shape = ProcessShape(self.x.shape[2], self.x.shape[1])
        return (make_path_measure(shape, self.x, self.mass),
                make_path_measure(shape, self.y, self.mass))


@dataclass
class BicausalPlan:
    value: float
    shape: ProcessShape
    root: PlanNode
    layers_a: list = field(repr=False)
    layers_b: list = field(repr=False)

    def flatten(self) -> PathCoupling:
        T, d = self.shape.T, self.shape.d
        xs, ys, ms = [], [], []
        stack = [(self.root, 1.0, (), ())]
        while stack:
            node, mass, pa, pb = stack.pop()
            t = node.depth
            la, lb = self.layers_a[t], self.layers_b[t]
            cp = node.coupling
            for r, c, w in zip(cp.rows, cp.cols, cp.mass):
                ka, kb = int(node.child_a[r]), int(node.child_b[c])
                qa = pa + (la.points[ka],)
                qb = pb + (lb.points[kb],)
                if t + 1 == T:
                    xs.append(np.array(qa))
                    ys.append(np.array(qb))
                    ms.append(mass * w)
                else:
                    stack.append((node.children[(ka, kb)], mass * w, qa, qb))
        return PathCoupling(np.array(xs).reshape(-1, T, d), np.array(ys).reshape(-1, T, d),
                            np.array(ms))

    def to_dict(self) -> dict:
        flat = self.flatten()
        return {
            "value": self.value,
            "d": self.shape.d,
            "T": self.shape.T,
            "pairs": [
                {"x": flat.x[k].tolist(), "y": flat.y[k].tolist(), "mass": float(flat.mass[k])}
                for k in range(len(flat.mass))
            ],
        }


class NestedResult(NamedTuple):
    value: float
    plan: BicausalPlan | None
    table: DPValueTable


def _sorted_groups(layer: Layer):
    """Children of every parent as ascending 1-d runs: (ptr, x, w)."""
    group = np.repeat(np.arange(layer.n_parents), np.diff(layer.ptr))
    x = layer.points[layer.index, 0]
    order = np.lexsort((x, group))
    return layer.ptr, x[order], layer.prob[order]


def _check_shapes(sa: ProcessShape, sb: ProcessShape):
    if sa != sb:
        raise ShapeMismatch(f"shape mismatch: (d={sa.d}, T={sa.T}) vs (d={sb.d}, T={sb.T})")


def _backward(shape, LA, LB, last_stage: str, max_pairs: int) -> list:
    T = shape.T
    for t in range(1, T + 1):
        n_pairs = LA[t - 1].n_children * LB[t - 1].n_children
        if n_pairs > max_pairs:
            raise DPMemoryError(t, n_pairs, max_pairs)
    V = [None] * (T + 1)
    V[T] = np.zeros((LA[T - 1].n_children, LB[T - 1].n_children))
    for t in range(T - 1, -1, -1):
        la, lb = LA[t], LB[t]
        if t == T - 1 and shape.d == 1 and last_stage == "auto":
            V[t] = kernels.w1_pairs(*_sorted_groups(la), *_sorted_groups(lb))
        else:
            M = euclidean_cost(la.points, lb.points)
            M += V[t + 1]
            V[t] = kernels.dp_level(la.ptr, la.index, la.prob, lb.ptr, lb.index, lb.prob, M)
    return V


def build_plan(shape: ProcessShape, LA, LB, V, value: float,
               coupling_fn: Callable | None = None) -> BicausalPlan:
    """Assemble a bicausal plan from per-node-pair couplings.

    By default each node pair gets the optimal coupling for the cost
    |x - y| + V_{t+1}; ``coupling_fn(pa, pb, C) -> TransportPlan`` swaps in
    any other feasible rule (the result is still bicausal).
    """
    T = shape.T
    solver = coupling_fn or solve_transport

    def make(t, i, j):
        la, lb = LA[t], LB[t]
        ca = la.index[la.ptr[i]:la.ptr[i + 1]]
        cb = lb.index[lb.ptr[j]:lb.ptr[j + 1]]
        pa = la.prob[la.ptr[i]:la.ptr[i + 1]]
        pb = lb.prob[lb.ptr[j]:lb.ptr[j + 1]]
        C = euclidean_cost(la.points[ca], lb.points[cb])
        if V is not None:
            C = C + V[t + 1][np.ix_(ca, cb)]
        node = PlanNode(t, i, j, solver(pa, pb, C), ca, cb)
        if t + 1 < T:
            for r, c in zip(node.coupling.rows, node.coupling.cols):
                key = (int(ca[r]), int(cb[c]))
                if key not in node.children:
                    node.children[key] = make(t + 1, *key)
        return node

    return BicausalPlan(value, shape, make(0, 0, 0), LA, LB)


def nested_distance(a, b, plan: bool = True, last_stage: str = "auto",
                    max_pairs: int = DEFAULT_MAX_PAIRS) -> NestedResult:
    """Adapted Wasserstein distance between two finitely supported laws.

    ``a`` and ``b`` may be path measures, scenario trees or Markov
    measures. Returns ``(value, plan, table)``; ``plan`` is None when
    ``plan=False``. ``last_stage="lp"`` solves the last stage as a
    transport problem even for d = 1.
    """
    sa, LA = _layers(a)
    sb, LB = _layers(b)
    _check_shapes(sa, sb)
    if last_stage not in ("auto", "lp"):
        raise ValueError("last_stage must be 'auto' or 'lp'")
    V = _backward(sa, LA, LB, last_stage, max_pairs)
    value = float(V[0][0, 0])
    bp = build_plan(sa, LA, LB, V, value) if plan else None
    return NestedResult(value, bp, DPValueTable(V))


def path_cost(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Pairwise sum over t of |x_t - y_t| between path arrays (n,T,d), (k,T,d)."""
    out = np.zeros((P.shape[0], Q.shape[0]))
    for t in range(P.shape[1]):
        out += euclidean_cost(P[:, t, :], Q[:, t, :])
    return out


def path_wasserstein(a, b) -> float:
    """Classical W1 on path space with the same cost as the adapted distance."""
    from adaptw.measures import as_tree, to_path_measure

    pa = a if isinstance(a, PathMeasure) else to_path_measure(as_tree(a))
    pb = b if isinstance(b, PathMeasure) else to_path_measure(as_tree(b))
    _check_shapes(pa.shape, pb.shape)
    return solve_transport(pa.weights, pb.weights, path_cost(pa.paths, pb.paths)).value


def markov_nested_distance(a: MarkovMeasure, b: MarkovMeasure,
                           max_pairs: int = DEFAULT_MAX_PAIRS):
    """Nested distance of two Markov laws by a DP over state pairs.

    Returns ``(value, table)`` where ``table.levels[t][i, j]`` is the value
    at states ``i`` of A and ``j`` of B at time t (t = 0 is the root).
    """
    if not isinstance(a, MarkovMeasure) or not isinstance(b, MarkovMeasure):
        raise TypeError("markov_nested_distance needs two MarkovMeasure inputs")
    _check_shapes(a.shape, b.shape)
    V = _backward(a.shape, a.layers(), b.layers(), "auto", max_pairs)
    return float(V[0][0, 0]), DPValueTable(V)


def product_coupling(pa, pb, C) -> TransportPlan:
    """Independent coupling; feasible but usually not optimal."""
    rows, cols = np.meshgrid(np.arange(len(pa)), np.arange(len(pb)), indexing="ij")
    mass = np.outer(pa, pb)
    return TransportPlan(rows.ravel(), cols.ravel(), mass.ravel(),
                         float(np.sum(mass * C)), np.zeros(len(pa)), np.zeros(len(pb)))


def plan_from_couplings(a, b, coupling_fn: Callable) -> BicausalPlan:
    """Bicausal plan built node by node with ``coupling_fn`` on cost |x - y|."""
    sa, LA = _layers(a)
    sb, LB = _layers(b)
    _check_shapes(sa, sb)
    p = build_plan(sa, LA, LB, None, float("nan"), coupling_fn)
    p.value = p.flatten().cost()
    return p


# -- causality -----------------------------------------------------------------


@dataclass(frozen=True)
class CausalityWitness:
    direction: str  # "causal" or "anti"
    t: int
    prefix: np.ndarray  # conditioning prefix (t, d)
    discrepancy: float


@dataclass(frozen=True)
class CausalityResult:
    ok: bool
    witness: CausalityWitness | None = None

    def __bool__(self):
        return self.ok


def _codes(rows: np.ndarray) -> np.ndarray:
    if rows.shape[1] == 0:
        return np.zeros(rows.shape[0], dtype=np.int64)
    _, inv = np.unique(rows, axis=0, return_inverse=True)
    return inv.ravel().astype(np.int64)


def _causal_one_way(x, y, mass, tol, history, direction):
    K, T, d = x.shape
    worst = None
    for t in range(1, T):
        g = _codes(x[:, :t, :].reshape(K, -1))
        f = _codes(x[:, t:, :].reshape(K, -1))
        yy = y[:, :t, :] if history else y[:, t - 1, :]
        h = _codes(yy.reshape(K, -1))
        for grp in np.unique(g):
            sel = g == grp
            pg = mass[sel].sum()
            if pg <= 0:
                continue
            fl = _codes(f[sel][:, None])
            hl = _codes(h[sel][:, None])
            joint = np.zeros((fl.max() + 1, hl.max() + 1))
            np.add.at(joint, (fl, hl), mass[sel])
            joint /= pg
            gap = np.abs(joint - np.outer(joint.sum(axis=1), joint.sum(axis=0))).max()
            if gap > tol and (worst is None or worst.t == t and gap > worst.discrepancy):
                prefix = x[np.flatnonzero(sel)[0], :t, :].copy()
                worst = CausalityWitness(direction, t, prefix, float(gap))
        if worst is not None:
            return worst
    return None


def check_causality(coupling: PathCoupling, direction: str = "bi", tol: float = CAUSAL_TOL,
                    history: bool = False) -> CausalityResult:
    """Check the causality constraint of a coupling on its finite support.

    For every t < T and every X-prefix x_{1:t} of positive mass, Y_t must be
    independent of X_{t+1:T} given x_{1:t} (``history=True`` uses Y_{1:t}).
    ``direction`` is "causal", "anti" (roles of X and Y swapped) or "bi".
    The witness reports the first violating time and its worst prefix.
    """
    mass = np.asarray(coupling.mass, dtype=np.float64)
    if np.any(mass < -tol) or abs(mass.sum() - 1.0) > 1e-9:
        raise ValueError("coupling masses must be nonnegative and sum to 1")
    if direction not in ("causal", "anti", "bi"):
        raise ValueError("direction must be 'causal', 'anti' or 'bi'")
    x, y = np.asarray(coupling.x), np.asarray(coupling.y)
    if direction in ("causal", "bi"):
        w = _causal_one_way(x, y, mass, tol, history, "causal")
        if w is not None:
            return CausalityResult(False, w)
    if direction in ("anti", "bi"):
        w = _causal_one_way(y, x, mass, tol, history, "anti")
        if w is not None:
            return CausalityResult(False, w)
    return CausalityResult(True)


# -- LP oracle for T = 2 -------------------------------------------------------


class OracleTooLarge(ValueError):
    pass


def bicausal_oracle_T2(a, b, max_pairs: int = 2500) -> float:
    """Bicausal transport for T = 2 as one linear program (HiGHS).

    Variables are the masses on path pairs; besides the two marginal
    constraints, causality (Y_1 independent of X_2 given X_1) and its mirror
    image are imposed in their linear form
    pi(x1, x2, y1) = mu_{x1}(x2) * pi(x1, y1).
    """
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    if isinstance(a, (ScenarioTree, MarkovMeasure)):
        from adaptw.measures import as_tree, to_path_measure
        a = to_path_measure(as_tree(a))
    if isinstance(b, (ScenarioTree, MarkovMeasure)):
        from adaptw.measures import as_tree, to_path_measure
        b = to_path_measure(as_tree(b))
    _check_shapes(a.shape, b.shape)
    if a.shape.T != 2:
        raise ValueError("the LP oracle is restricted to T = 2")
    P, Q = a.n_atoms, b.n_atoms
    if P * Q > max_pairs:
        raise OracleTooLarge(f"{P} x {Q} path pairs exceed the oracle limit {max_pairs}")

    def var(p, q):
        return p * Q + q

    x1 = _codes(a.paths[:, 0, :])
    y1 = _codes(b.paths[:, 0, :])
    mu1 = np.bincount(x1, weights=a.weights)
    nu1 = np.bincount(y1, weights=b.weights)
    kx = a.weights / mu1[x1]  # mu_{x1}(x2) for each path p
    ky = b.weights / nu1[y1]

    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for p in range(P):
        for q in range(Q):
            rows.append(r)
            cols.append(var(p, q))
            vals.append(1.0)
        rhs.append(a.weights[p])
        r += 1
    for q in range(Q):
        for p in range(P):
            rows.append(r)
            cols.append(var(p, q))
            vals.append(1.0)
        rhs.append(b.weights[q])
        r += 1
    # causal: for each path p and each y1-class h
    for p in range(P):
        same = np.flatnonzero(x1 == x1[p])
        for h in range(len(nu1)):
            qs = np.flatnonzero(y1 == h)
            for q in qs:
                for p2 in same:
                    rows.append(r)
                    cols.append(var(p2, q))
                    vals.append((1.0 if p2 == p else 0.0) - kx[p])
            rhs.append(0.0)
            r += 1
    # anticausal: for each path q and each x1-class g
    for q in range(Q):
        same = np.flatnonzero(y1 == y1[q])
        for g in range(len(mu1)):
            ps = np.flatnonzero(x1 == g)
            for p in ps:
                for q2 in same:
                    rows.append(r)
                    cols.append(var(p, q2))
                    vals.append((1.0 if q2 == q else 0.0) - ky[q])
            rhs.append(0.0)
            r += 1
    A = coo_matrix((vals, (rows, cols)), shape=(r, P * Q)).tocsr()
    A.sum_duplicates()
    cost = np.zeros(P * Q)
    for p in range(P):
        for q in range(Q):
            diff = a.paths[p] - b.paths[q]
            cost[var(p, q)] = np.sqrt(np.sum(diff * diff, axis=1)).sum()
    res = linprog(cost, A_eq=A, b_eq=np.array(rhs), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"oracle LP failed: {res.message}")
    return float(res.fun)
