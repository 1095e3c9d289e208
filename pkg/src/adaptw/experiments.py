"""Monte-Carlo harness: rate curves, non-convergence of the classical
empirical measure, deviation tails and the rate function R.

Every (N, repetition) job draws its own sample from the stream
``(seed, N, rep)`` and is compared with the same grid reference, so a
report depends only on its manifest, never on the number of workers.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path as _FsPath
from typing import Sequence

import numpy as np

from adaptw import kernels
from adaptw.adapted import nested_distance
from adaptw.estimators import adapted_empirical, empirical, markov_adapted_empirical
from adaptw.grid import Mode, derive_r, make_grid
from adaptw.processes import (
    model_from_dict,
    model_to_dict,
    quantized_reference,
    sample,
    stream_key,
)

SLOPE_TOL = 0.15
BUDGET_FACTOR = 10.0
ESTIMATORS = ("empirical", "general", "markov")


def _fmt(x) -> str:
    return format(float(x), "#.12g")


# -- rate function and fits ----------------------------------------------------


def rate_fn(u, d: int):
    """R(u): u^{-1/2} (d = 1), u^{-1/2} log(u + 3) (d = 2), u^{-1/d} (d >= 3)."""
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    with np.errstate(divide="ignore"):
        if d == 1:
            out = u**-0.5
        elif d == 2:
            out = u**-0.5 * np.log(u + 3)
        else:
            out = u ** (-1.0 / d)
    return float(out) if out.ndim == 0 else out


def u_rate(u, d: int):
    """u * R(u), extended by its limit 0 at u = 0."""
    u = np.asarray(u, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(u > 0, u * np.asarray(rate_fn(np.where(u > 0, u, 1.0), d)), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    half_width: float


def fit_loglog(xs, ys) -> LogLogFit:
    """OLS of log y on log x; half-width is twice the slope's standard error."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least 3 matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive inputs")
    lx, ly = np.log(x), np.log(y)
    xm, ym = lx.mean(), ly.mean()
    sxx = np.sum((lx - xm) ** 2)
    if sxx == 0:
        raise ValueError("x values must not all coincide")
    slope = np.sum((lx - xm) * (ly - ym)) / sxx
    intercept = ym - slope * xm
    resid = ly - (intercept + slope * lx)
    se = math.sqrt(np.sum(resid**2) / (x.size - 2) / sxx)
    return LogLogFit(float(slope), float(intercept), 2.0 * se)


def theoretical_slope(d: int, T: int, mode: str) -> float:
    """Exponent of the proven rate (log factors dropped)."""
    if mode == "markov":
        return -1 / 3 if d == 1 else (-0.25 if d == 2 else -1.0 / (2 * d))
    if mode == "general":
        return -1.0 / (T + 1) if d == 1 else -1.0 / (d * T)
    return float("nan")  # the classical empirical measure does not converge


# -- sweeps --------------------------------------------------------------------


_REFERENCE_CACHE: dict = {}


def _reference(spec_json: str, K: int):
    key = (spec_json, K)
    if key not in _REFERENCE_CACHE:
        _REFERENCE_CACHE.clear()
        _REFERENCE_CACHE[key] = quantized_reference(model_from_dict(json.loads(spec_json)), K)
    return _REFERENCE_CACHE[key]


def _estimate(name: str, s):
    if name == "empirical":
        return empirical(s)
    if name == "general":
        return adapted_empirical(s)
    if name == "markov":
        return markov_adapted_empirical(s)
    raise ValueError(f"unknown estimator {name!r}")


def _job(args):
    spec_json, K, seed, N, rep, names = args
    ref = _reference(spec_json, K)
    model = model_from_dict(json.loads(spec_json))
    s = sample(model, N, seed, key=stream_key(seed, N, rep))
    return tuple(nested_distance(ref.measure, _estimate(n, s), plan=False).value for n in names)


@dataclass(frozen=True)
class Sweep:
    """AW(reference, estimator) for every estimator, N and repetition."""

    model: dict
    Ns: tuple
    M: int
    K: int
    seed: int
    budget: float
    values: dict  # estimator -> array (len(Ns), M)

    def means(self, name: str) -> np.ndarray:
        return self.values[name].mean(axis=1)

    def stderrs(self, name: str) -> np.ndarray:
        if self.M < 2:
            return np.zeros(len(self.Ns))
        return self.values[name].std(axis=1, ddof=1) / math.sqrt(self.M)


def _check_common(Ns, M, K):
    Ns = tuple(int(n) for n in Ns)
    if not Ns:
        raise ValueError("the list of sample sizes is empty")
    if any(n < 1 for n in Ns):
        raise ValueError("sample sizes must be positive")
    if int(M) != M or M < 1:
        raise ValueError("M must be a positive integer")
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    return Ns


def run_sweep(model, Ns: Sequence[int], M: int, K: int, seed: int,
              estimators: Sequence[str] = ("general",), workers: int = 1) -> Sweep:
    """Evaluate the estimators on M samples per N against the K-grid reference."""
    Ns = _check_common(Ns, M, K)
    names = tuple(estimators)
    for n in names:
        if n not in ESTIMATORS:
            raise ValueError(f"unknown estimator {n!r}")
    spec = model_to_dict(model) if not isinstance(model, dict) else model
    spec_json = json.dumps(spec, sort_keys=True)
    ref = _reference(spec_json, K)
    jobs = [(spec_json, K, int(seed), N, rep, names) for N in Ns for rep in range(M)]
    workers = max(1, int(workers))
    if workers == 1:
        results = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    arr = np.array(results).reshape(len(Ns), M, len(names))
    values = {n: arr[:, :, k] for k, n in enumerate(names)}
    return Sweep(spec, Ns, int(M), int(K), int(seed), float(ref.budget), values)


# -- reports -------------------------------------------------------------------


def _version() -> str:
    from adaptw import __version__

    return __version__


@dataclass(frozen=True)
class RateReport:
    model: dict
    mode: str
    K: int
    M: int
    seed: int
    budget: float
    Ns: tuple
    cells: tuple
    means: tuple
    stderrs: tuple
    slope: float
    intercept: float
    half_width: float
    theoretical_slope: float
    tolerance: float = SLOPE_TOL

    @property
    def slope_ok(self) -> bool:
        return abs(self.slope - self.theoretical_slope) <= self.tolerance

    @property
    def budget_ok(self) -> bool:
        """Every mean exceeds BUDGET_FACTOR times the reference budget."""
        return all(m > BUDGET_FACTOR * self.budget for m in self.means)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "m", "mean", "stderr", "M", "budget", "lower", "upper"])
        for n, c, mu, se in zip(self.Ns, self.cells, self.means, self.stderrs):
            w.writerow([n, c, _fmt(mu), _fmt(se), self.M, _fmt(self.budget),
                        _fmt(max(0.0, mu - self.budget)), _fmt(mu + self.budget)])
        return buf.getvalue()

    def summary(self) -> dict:
        out = asdict(self)
        out.update(slope_ok=self.slope_ok, budget_ok=self.budget_ok)
        return out


def rate_report(sw: Sweep, mode: str, tolerance: float = SLOPE_TOL) -> RateReport:
    model = model_from_dict(sw.model)
    shape = model.shape
    means = sw.means(mode)
    if len(sw.Ns) >= 3 and np.all(means > 0):
        fit = fit_loglog(sw.Ns, means)
    else:
        fit = LogLogFit(float("nan"), float("nan"), float("nan"))
    grid_mode = Mode.MARKOV if mode == "markov" else Mode.GENERAL
    cells = tuple(make_grid(shape, n, grid_mode).m if mode != "empirical" else 0 for n in sw.Ns)
    return RateReport(sw.model, mode, sw.K, sw.M, sw.seed, sw.budget, sw.Ns, cells,
                      tuple(float(x) for x in means), tuple(float(x) for x in sw.stderrs(mode)),
                      fit.slope, fit.intercept, fit.half_width,
                      theoretical_slope(shape.d, shape.T, mode), tolerance)


def rate_curve(model, Ns: Sequence[int], M: int, K: int, mode: str = "general",
               seed: int = 0, workers: int = 1, tolerance: float = SLOPE_TOL) -> RateReport:
    """Mean AW(mu_K, estimator) per N with a log-log slope fit.

    ``mode`` is "general" (adapted empirical), "markov" or "empirical".
    """
    if mode not in ESTIMATORS:
        raise ValueError(f"unknown mode {mode!r}")
    return rate_report(run_sweep(model, Ns, M, K, seed, (mode,), workers), mode, tolerance)


@dataclass(frozen=True)
class NonconvergenceReport:
    model: dict
    K: int
    M: int
    seed: int
    budget: float
    Ns: tuple
    means_empirical: tuple
    means_adapted: tuple
    floor_threshold: float = 0.05

    @property
    def floor(self) -> float:
        return float(min(self.means_empirical))

    @property
    def floor_ok(self) -> bool:
        return self.floor >= self.floor_threshold

    @property
    def adapted_halved(self) -> bool:
        return self.means_adapted[-1] < 0.5 * self.means_adapted[0]

    @property
    def inversions(self) -> int:
        a = self.means_adapted
        return sum(1 for i in range(len(a) - 1) if a[i + 1] >= a[i])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "mean_empirical", "mean_adapted", "budget"])
        for n, e, a in zip(self.Ns, self.means_empirical, self.means_adapted):
            w.writerow([n, _fmt(e), _fmt(a), _fmt(self.budget)])
        return buf.getvalue()

    def summary(self) -> dict:
        out = asdict(self)
        out.update(floor=self.floor, floor_ok=self.floor_ok,
                   adapted_halved=self.adapted_halved, inversions=self.inversions)
        return out


def nonconvergence_report(sw: Sweep, floor: float = 0.05) -> NonconvergenceReport:
    return NonconvergenceReport(sw.model, sw.K, sw.M, sw.seed, sw.budget, sw.Ns,
                                tuple(float(x) for x in sw.means("empirical")),
                                tuple(float(x) for x in sw.means("general")), floor)


def nonconvergence_demo(model, Ns: Sequence[int], M: int, K: int, seed: int = 0,
                        workers: int = 1, floor: float = 0.05) -> NonconvergenceReport:
    """Classical empirical vs adapted empirical measure on the same samples."""
    sw = run_sweep(model, Ns, M, K, seed, ("empirical", "general"), workers)
    return nonconvergence_report(sw, floor)


@dataclass(frozen=True)
class DeviationReport:
    model: dict
    mode: str
    K: int
    M: int
    seed: int
    budget: float
    Ns: tuple
    eps: tuple
    means: tuple
    freq: tuple  # freq[i][j]: N = Ns[i], eps = eps[j]
    c_hat: float
    c_intercept: float

    def stderr(self, i: int, j: int) -> float:
        p = self.freq[i][j]
        return math.sqrt(p * (1 - p) / self.M)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "eps", "mean", "frequency", "stderr", "M"])
        for i, n in enumerate(self.Ns):
            for j, e in enumerate(self.eps):
                w.writerow([n, _fmt(e), _fmt(self.means[i]), _fmt(self.freq[i][j]),
                            _fmt(self.stderr(i, j)), self.M])
        return buf.getvalue()

    def summary(self) -> dict:
        return asdict(self)


def deviation_report(sw: Sweep, eps: Sequence[float], mode: str = "general") -> DeviationReport:
    vals = sw.values[mode]
    means = vals.mean(axis=1)
    eps = tuple(float(e) for e in eps)
    freq = tuple(tuple(float(np.mean(vals[i] >= means[i] + e)) for e in eps)
                 for i in range(len(sw.Ns)))
    # fit log frequency against N eps^2 on the positive part of the table
    xs, ys = [], []
    for i, n in enumerate(sw.Ns):
        for j, e in enumerate(eps):
            if e > 0 and freq[i][j] > 0:
                xs.append(n * e * e)
                ys.append(math.log(freq[i][j]))
    if len(xs) >= 2 and len(set(xs)) >= 2:
        slope, icpt = np.polyfit(xs, ys, 1)
        c_hat, c_int = float(-slope), float(icpt)
    else:
        c_hat = c_int = float("nan")
    return DeviationReport(sw.model, mode, sw.K, sw.M, sw.seed, sw.budget, sw.Ns, eps,
                           tuple(float(m) for m in means), freq, c_hat, c_int)


def deviation_tails(model, Ns: Sequence[int], eps: Sequence[float], M: int, K: int,
                    seed: int = 0, mode: str = "general", workers: int = 1) -> DeviationReport:
    """Frequencies of {AW >= mean + eps}; c is estimated, never asserted."""
    if not eps:
        raise ValueError("the eps grid is empty")
    sw = run_sweep(model, Ns, M, K, seed, (mode,), workers)
    return deviation_report(sw, eps, mode)


# -- manifests -----------------------------------------------------------------


def make_manifest(kind: str, model, **params) -> dict:
    spec = model_to_dict(model) if not isinstance(model, dict) else model
    shape = model_from_dict(spec).shape
    out = {"kind": kind, "model": spec, "version": _version(), "backend": kernels.BACKEND}
    out.update(params)
    if kind in ("rates", "nonconvergence", "deviation"):
        mode = params.get("mode", "general")
        gm = Mode.MARKOV if mode == "markov" else Mode.GENERAL
        out["grid"] = {"mode": gm.value, "r": str(derive_r(shape, gm)),
                       "m": [make_grid(shape, int(n), gm).m for n in params.get("Ns", [])]}
    if kind == "rates":
        out.setdefault("tolerance", SLOPE_TOL)
        out["budget_factor"] = BUDGET_FACTOR
    return out


def run_manifest(manifest: dict, workers: int = 1):
    """Re-run a report from its manifest (outputs are independent of workers)."""
    kind = manifest["kind"]
    model = model_from_dict(manifest["model"])
    if kind == "rates":
        return rate_curve(model, manifest["Ns"], manifest["M"], manifest["K"],
                          manifest.get("mode", "general"), manifest["seed"], workers,
                          manifest.get("tolerance", SLOPE_TOL))
    if kind == "nonconvergence":
        return nonconvergence_demo(model, manifest["Ns"], manifest["M"], manifest["K"],
                                   manifest["seed"], workers, manifest.get("floor", 0.05))
    if kind == "deviation":
        return deviation_tails(model, manifest["Ns"], manifest["eps"], manifest["M"],
                               manifest["K"], manifest["seed"], manifest.get("mode", "general"),
                               workers)
    if kind == "stopping":
        from adaptw.stopping import stopping_stability_demo

        return stopping_stability_demo(model, manifest["Ns"], manifest["seed"])
    raise ValueError(f"unknown manifest kind {kind!r}")


def write_report(report, manifest: dict, out_dir, stem: str, force: bool = False):
    """Write ``<stem>.csv``, ``<stem>.json`` (summary) and ``manifest.json``."""
    out = _FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{stem}.csv", out / f"{stem}.json", out / "manifest.json"]
    if not force:
        clash = [p for p in paths if p.exists()]
        if clash:
            raise FileExistsError(f"{clash[0]} exists (use --force to overwrite)")
    paths[0].write_text(report.to_csv())
    paths[1].write_text(json.dumps(_jsonable(report.summary()), indent=2, sort_keys=True) + "\n")
    paths[2].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, Fraction):
        return str(x)
    return x


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
