"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The Monte-Carlo criteria (5 to 8) run the full desk-scale sweeps and take a
few minutes in total.
"""
import time

import numpy as np

import conftest
from adaptw.adapted import (
    PathCoupling,
    bicausal_oracle_T2,
    check_causality,
    markov_nested_distance,
    nested_distance,
    path_wasserstein,
)
from adaptw.estimators import adapted_empirical, empirical
from adaptw.experiments import (
    make_manifest,
    nonconvergence_report,
    rate_report,
    run_manifest,
    run_sweep,
    u_rate,
)
from adaptw.grid import cell_index, make_grid, quantize_array
from adaptw.measures import ProcessShape, make_path_measure, markov_to_tree
from adaptw.processes import ar_model, figure_one_measures, sample, stream_key
from adaptw.stopping import DIRAC_LIMIT, OPTIMAL_VALUE, solve_stopping, stopping_stability_demo
from adaptw.transport import distribution, wasserstein1, wasserstein1_sorted
from helpers import random_markov, random_tree

SEED = 20240101
RATE_NS = tuple(2**k for k in range(6, 14))

# instances shared by criteria 2 to 4
_PLANS = []
_SWEEPS = {}


def report(n, ok, detail, t0):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.time() - t0:.1f} s)"
    conftest.ACCEPTANCE_LINES[n] = line
    print(line)
    return ok


def test_criterion_01_figure_one():
    t0 = time.time()
    errs = []
    for eps in (0.01, 0.1, 0.25):
        mu, nu = figure_one_measures(eps)
        errs.append(abs(path_wasserstein(mu, nu) - eps))
        errs.append(abs(nested_distance(mu, nu, plan=False).value - (eps + 0.5)))
    ok = max(errs) <= 1e-9 and time.time() - t0 < 1.0
    assert report(1, ok, f"max error {max(errs):.2e}", t0)


def _instances():
    """30 random T=2 tree pairs and 20 random Markov pairs with their plans."""
    if "instances" in _SWEEPS:
        return _SWEEPS["instances"]
    rng = np.random.default_rng(SEED)
    tree_err = markov_err = 0.0
    for _ in range(30):
        a, b = random_tree(rng, 2), random_tree(rng, 2)
        value, plan, _ = nested_distance(a, b)
        _PLANS.append((a, b, value, plan))
        tree_err = max(tree_err, abs(value - bicausal_oracle_T2(a, b)))
    for _ in range(20):
        T = int(rng.integers(2, 5))
        a, b = random_markov(rng, T), random_markov(rng, T)
        v = markov_nested_distance(a, b)[0]
        ta, tb = markov_to_tree(a), markov_to_tree(b)
        value, plan, _ = nested_distance(ta, tb)
        _PLANS.append((ta, tb, value, plan))
        markov_err = max(markov_err, abs(v - value))
    _SWEEPS["instances"] = (tree_err, markov_err)
    return _SWEEPS["instances"]


def test_criterion_02_oracles():
    t0 = time.time()
    tree_err, markov_err = _instances()
    ok = tree_err <= 1e-8 and markov_err <= 1e-9 and time.time() - t0 < 120
    assert report(2, ok, f"tree vs LP {tree_err:.1e}, Markov vs expansion {markov_err:.1e}", t0)


def test_criterion_03_metric_properties():
    t0 = time.time()
    _instances()
    rng = np.random.default_rng(SEED + 3)
    worst_order = worst_sym = worst_tri = 0.0
    for a, b, value, _ in _PLANS:
        worst_order = max(worst_order, path_wasserstein(a, b) - value)
    for _ in range(50):
        T = int(rng.integers(1, 4))
        a, b, c = (random_tree(rng, T, levels=6) for _ in range(3))
        ab = nested_distance(a, b, plan=False).value
        ba = nested_distance(b, a, plan=False).value
        ac = nested_distance(a, c, plan=False).value
        cb = nested_distance(c, b, plan=False).value
        worst_sym = max(worst_sym, abs(ab - ba))
        worst_tri = max(worst_tri, ab - ac - cb)
        for x, y, v in ((a, b, ab), (a, c, ac), (c, b, cb)):
            worst_order = max(worst_order, path_wasserstein(x, y) - v)
    worst_q = 0.0
    for _ in range(200):
        n, k = rng.integers(1, 12, 2)
        p = distribution(rng.integers(0, 8, n) / 7, rng.random(n) + 0.01)
        q = distribution(rng.random(k), rng.random(k) + 0.01)
        worst_q = max(worst_q, abs(wasserstein1(p, q).value - wasserstein1_sorted(p, q)))
    ok = (worst_order <= 1e-9 and worst_sym <= 1e-9 and worst_tri <= 1e-9
          and worst_q <= 1e-9 and time.time() - t0 < 120)
    assert report(3, ok, f"W-AW {worst_order:.1e}, symmetry {worst_sym:.1e}, "
                         f"triangle {worst_tri:.1e}, quantile {worst_q:.1e}", t0)


def test_criterion_04_causality():
    _instances()
    t0 = time.time()
    bad = sum(not check_causality(plan.flatten(), "bi").ok for _, _, _, plan in _PLANS)
    x = np.array([[[0.5], [1.0]], [[0.5], [0.0]]])
    y = np.array([[[0.6], [1.0]], [[0.4], [0.0]]])
    res = check_causality(PathCoupling(x, y, np.array([0.5, 0.5])), "causal")
    witness_ok = (not res.ok) and res.witness is not None and res.witness.t == 1
    ok = bad == 0 and witness_ok and time.time() - t0 < 10
    detail = f"{len(_PLANS) - bad}/{len(_PLANS)} plans bicausal, comonotone witness t=" \
             f"{res.witness.t if res.witness else None}"
    assert report(4, ok, detail, t0)


def _rate_sweep_T2():
    if "T2" not in _SWEEPS:
        _SWEEPS["T2"] = run_sweep(ar_model(1, 2), RATE_NS, 50, 512, SEED,
                                  ("empirical", "general"))
    return _SWEEPS["T2"]


def test_criterion_05_rates():
    t0 = time.time()
    rep = rate_report(_rate_sweep_T2(), "general")
    ok = rep.slope_ok and rep.budget_ok and time.time() - t0 < 1800
    assert report(5, ok, f"slope {rep.slope:.4f} (target -1/3 +- 0.15), min mean "
                         f"{min(rep.means):.4f} vs 10 x budget {10 * rep.budget:.4f}", t0)


def test_criterion_06_nonconvergence():
    t0 = time.time()
    rep = nonconvergence_report(_rate_sweep_T2())
    ok = rep.floor_ok and rep.adapted_halved
    assert report(6, ok, f"empirical floor {rep.floor:.4f} (>= 0.05), adapted "
                         f"{rep.means_adapted[0]:.4f} -> {rep.means_adapted[-1]:.4f}", t0)


def test_criterion_07_markov():
    t0 = time.time()
    sw = run_sweep(ar_model(1, 3), RATE_NS, 50, 512, SEED, ("general", "markov"))
    mk = rate_report(sw, "markov")
    gen = rate_report(sw, "general")
    order = all(m <= g for n, m, g in zip(sw.Ns, mk.means, gen.means) if n >= 2**8)
    ok = mk.slope_ok and order and time.time() - t0 < 1800
    assert report(7, ok, f"Markov slope {mk.slope:.4f} (target -1/3 +- 0.15), "
                         f"Markov <= general for N >= 256: {order}", t0)


def test_criterion_08_deviation():
    t0 = time.time()
    from adaptw.experiments import deviation_report

    eps = (0.0, 0.005, 0.01, 0.02, 0.05)
    sw = run_sweep(ar_model(1, 2), (2**8, 2**10), 300, 512, SEED, ("general",))
    rep = deviation_report(sw, eps)
    mono_eps = all(row[j + 1] <= row[j] for row in rep.freq for j in range(len(eps) - 1))
    j = eps.index(0.05)
    f8, f10 = rep.freq[0][j], rep.freq[1][j]
    mono_n = f10 <= f8 + rep.stderr(0, j)
    ok = mono_eps and mono_n and time.time() - t0 < 1800
    table = "; ".join(f"N={n}: " + " ".join(f"{f:.3f}" for f in row)
                      for n, row in zip(sw.Ns, rep.freq))
    assert report(8, ok, f"nonincreasing in eps: {mono_eps}; eps=0.05 N=256 {f8:.3f} "
                         f"vs N=1024 {f10:.3f}; freq over eps {eps}: {table}", t0)


def test_criterion_09_stopping():
    t0 = time.time()
    rep = stopping_stability_demo(Ns=(10_000,), seed=SEED)
    gap_a = abs(rep.value_adapted[-1] - OPTIMAL_VALUE)
    gap_e = abs(rep.value_empirical[-1] - DIRAC_LIMIT)
    rng = np.random.default_rng(SEED + 9)
    worst = -np.inf
    for _ in range(50):
        T = int(rng.integers(1, 4))
        a, b = random_tree(rng, T), random_tree(rng, T)
        diff = abs(solve_stopping(a).value - solve_stopping(b).value)
        worst = max(worst, diff - nested_distance(a, b, plan=False).value)
    ok = gap_a <= 0.03 and gap_e <= 0.02 and worst <= 1e-9 and time.time() - t0 < 300
    assert report(9, ok, f"adapted {rep.value_adapted[-1]:.4f} (3/8), empirical "
                         f"{rep.value_empirical[-1]:.4f} (1/3), Lipschitz slack {worst:.1e}", t0)


def test_criterion_10_structure():
    t0 = time.time()
    shape = ProcessShape(2, 2)
    push = cells = True
    for N in (5, 50, 500):
        s = sample(ar_model(2, 2), N, SEED, key=stream_key(SEED, N))
        g = make_grid(shape, N)
        emp, ada = empirical(s), adapted_empirical(s)
        direct = make_path_measure(shape, quantize_array(g, emp.paths), emp.weights)
        push &= np.array_equal(direct.paths, ada.paths) and \
            np.allclose(direct.weights, ada.weights, atol=1e-15, rtol=0)
        for t in (1, 2):
            ce = cell_index(g, emp.paths[:, :t]).reshape(emp.n_atoms, -1)
            ca = cell_index(g, ada.paths[:, :t]).reshape(ada.n_atoms, -1)
            for G in np.unique(ce, axis=0):
                cells &= abs(emp.weights[np.all(ce == G, axis=1)].sum()
                             - ada.weights[np.all(ca == G, axis=1)].sum()) <= 1e-12
    concave = True
    for d in (1, 2, 3):
        u = np.logspace(-4, 4, 1000)
        slopes = np.diff(u_rate(u, d)) / np.diff(u)
        concave &= bool(np.all(np.diff(slopes) <= 1e-12))
    manifests = [
        make_manifest("rates", ar_model(1, 2), seed=1, Ns=[16, 32, 64], M=4, K=64,
                      mode="general", tolerance=0.15),
        make_manifest("rates", ar_model(1, 3), seed=2, Ns=[16, 32, 64], M=4, K=32,
                      mode="markov", tolerance=0.15),
        make_manifest("nonconvergence", ar_model(1, 2), seed=3, Ns=[16, 64], M=4, K=64,
                      floor=0.05),
        make_manifest("deviation", ar_model(1, 2), seed=4, Ns=[32, 64], M=6, K=64,
                      eps=[0.0, 0.01], mode="general"),
        make_manifest("stopping", ar_model(1, 2), seed=5, Ns=[10, 100]),
    ]
    repro = True
    for man in manifests:
        outs = {run_manifest(man, workers=w).to_csv() for w in (1, 4, 8)}
        repro &= len(outs) == 1
    ok = push and cells and concave and repro and time.time() - t0 < 300
    assert report(10, ok, f"push-forward {push}, cell masses {cells}, concavity {concave}, "
                          f"reproducible across 1/4/8 workers {repro}", t0)
