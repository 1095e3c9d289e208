"""Exact discrete optimal transport.

:func:`solve_transport` is a transportation simplex (compiled when the
extension is available) returning a primal plan together with dual
potentials, so every answer carries its own optimality certificate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from adaptw import kernels

log = logging.getLogger(__name__)

PLAN_TOL = 1e-9


class TransportError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteDistribution:
    points: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[0] != self.weights.shape[0]:
            raise TransportError("points must be (n, d) with one weight per point")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise TransportError("weights must form a probability vector")

    @property
    def d(self) -> int:
        return self.points.shape[1]


def distribution(points, weights=None) -> DiscreteDistribution:
    """Normalize and merge duplicate points."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=np.float64)
    if len(pts) == 0 or w.sum() <= 0:
        raise TransportError("empty distribution")
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    merged = np.zeros(len(uniq))
    np.add.at(merged, inv.ravel(), w)
    return DiscreteDistribution(uniq, merged / merged.sum())


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling: ``mass[k]`` moves from ``rows[k]`` to ``cols[k]``."""

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    value: float
    u: np.ndarray
    v: np.ndarray

    @property
    def entries(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.mass.tolist()))

    def dense(self, shape) -> np.ndarray:
        out = np.zeros(shape)
        np.add.at(out, (self.rows, self.cols), self.mass)
        return out

    def dual_value(self, a, b) -> float:
        return float(np.dot(a, self.u) + np.dot(b, self.v))


def _linprog_transport(a, b, C):
    # fallback for the (never observed) case of simplex stalling
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix, vstack

    m, n = C.shape
    rows = coo_matrix((np.ones(m * n), (np.repeat(np.arange(m), n), np.arange(m * n))),
                      shape=(m, m * n))
    cols = coo_matrix((np.ones(m * n), (np.tile(np.arange(n), m), np.arange(m * n))),
                      shape=(n, m * n))
    res = linprog(C.ravel(), A_eq=vstack([rows, cols]), b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise TransportError(f"LP solver failed: {res.message}")
    x = res.x.reshape(m, n)
    r, c = np.nonzero(x > 0)
    duals = res.eqlin.marginals
    return r, c, x[r, c], duals[:m], duals[m:]


def solve_transport(a, b, C) -> TransportPlan:
    """Exact optimal transport between weight vectors ``a`` and ``b``.

    Zero-weight rows and columns are stripped before solving and come back
    with zero mass. The returned potentials satisfy u_i + v_j <= C_ij (to
    rounding) and close the duality gap.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (a.shape[0], b.shape[0]):
        raise TransportError(f"cost matrix shape {C.shape} does not match ({a.size}, {b.size})")
    if not np.all(np.isfinite(C)):
        raise TransportError("cost matrix must be finite")
    if a.size == 0 or b.size == 0:
        raise TransportError("empty marginal")
    if np.any(a < 0) or np.any(b < 0):
        raise TransportError("marginals must be nonnegative")
    if abs(a.sum() - b.sum()) > 1e-9 * max(1.0, a.sum()):
        raise TransportError("marginals must have equal total mass")

    ia = np.flatnonzero(a > 0)
    ib = np.flatnonzero(b > 0)
    sub = np.ascontiguousarray(C[np.ix_(ia, ib)])
    r, c, f, u, v, status, n_iter = kernels.transport_simplex(a[ia], b[ib], sub)
    if status != kernels.OPTIMAL:
        log.warning("transport simplex stalled after %d pivots; using HiGHS", n_iter)
        r, c, f, u, v = _linprog_transport(a[ia], b[ib], sub)
    keep = f > 0
    rows, cols, mass = ia[r[keep]], ib[c[keep]], f[keep]
    value = float(np.dot(mass, C[rows, cols]))

    # potentials for stripped rows/columns: any value keeping u_i + v_j <= C_ij
    full_u = np.zeros(a.size)
    full_v = np.zeros(b.size)
    full_u[ia] = u
    full_v[ib] = v
    if ia.size < a.size:
        za = np.setdiff1d(np.arange(a.size), ia)
        full_u[za] = np.min(C[za][:, ib] - v[None, :], axis=1)
    if ib.size < b.size:
        zb = np.setdiff1d(np.arange(b.size), ib)
        full_v[zb] = np.min(C[:, zb] - full_u[:, None], axis=0)
    return TransportPlan(rows, cols, mass, value, full_u, full_v)


def euclidean_cost(p, q) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    diff = p[:, None, :] - q[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def wasserstein1(a: DiscreteDistribution, b: DiscreteDistribution) -> TransportPlan:
    """W1 with Euclidean ground cost, solved exactly."""
    if a.d != b.d:
        raise TransportError(f"dimension mismatch: {a.d} vs {b.d}")
    return solve_transport(a.weights, b.weights, euclidean_cost(a.points, b.points))


def wasserstein1_sorted(a: DiscreteDistribution, b: DiscreteDistribution) -> float:
    """1-d W1 as the integral of |F_a^{-1}(u) - F_b^{-1}(u)| over u in (0,1)."""
    if a.d != 1 or b.d != 1:
        raise TransportError("the quantile formula needs d = 1")
    xa, wa = _sorted(a)
    xb, wb = _sorted(b)
    ca = np.cumsum(wa)
    cb = np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    levels = np.union1d(ca, cb)
    lo = np.concatenate([[0.0], levels[:-1]])
    mid = 0.5 * (lo + levels)
    qa = xa[np.minimum(np.searchsorted(ca, mid), len(xa) - 1)]
    qb = xb[np.minimum(np.searchsorted(cb, mid), len(xb) - 1)]
    return float(np.sum((levels - lo) * np.abs(qa - qb)))


def quantile_coupling(xa, wa, xb, wb):
    """Monotone coupling of two 1-d laws (ascending supports).

    Returns ``(rows, cols, mass)``; optimal for the cost |x - y|.
    """
    rows, cols, mass = [], [], []
    i = j = 0
    ra, rb = float(wa[0]), float(wb[0])
    na, nb = len(wa), len(wb)
    while i < na and j < nb:
        f = min(ra, rb)
        if f > 0:
            rows.append(i)
            cols.append(j)
            mass.append(f)
        ra -= f
        rb -= f
        if i == na - 1 and j == nb - 1:
            break
        if (ra <= rb and i < na - 1) or j == nb - 1:
            i += 1
            ra += float(wa[i])
        else:
            j += 1
            rb += float(wb[j])
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(mass)


def _sorted(a: DiscreteDistribution):
    order = np.argsort(a.points[:, 0], kind="stable")
    return a.points[order, 0], a.weights[order]
