"""Command-line interface: ``adaptw <command> ...``.

Exit codes: 0 success, 1 failed check, 2 input error, 3 resource limit.
All numbers are printed with 12 significant digits.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from adaptw.adapted import (
    DPMemoryError,
    ShapeMismatch,
    check_causality,
    nested_distance,
    path_wasserstein,
)
from adaptw.estimators import (
    SampleError,
    adapted_empirical,
    markov_adapted_empirical,
    read_samples_csv,
    write_samples_csv,
)
from adaptw.grid import Mode, make_grid
from adaptw.measures import MeasureError, load_measure, save_measure
from adaptw.processes import ModelError, load_model, model_from_dict, sample

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_RESOURCE = 0, 1, 2, 3

log = logging.getLogger("adaptw")


class InputError(Exception):
    pass


def fmt(x) -> str:
    return format(float(x), "#.12g")


def _int_list(text) -> list[int]:
    if isinstance(text, list):
        return [int(v) for v in text]
    items = [v for v in str(text).replace(" ", "").split(",") if v]
    try:
        return [int(v) for v in items]
    except ValueError as exc:
        raise InputError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text) -> list[float]:
    if isinstance(text, list):
        return [float(v) for v in text]
    items = [v for v in str(text).replace(" ", "").split(",") if v]
    try:
        return [float(v) for v in items]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from exc


def _seed(args) -> int:
    if args.seed is None:
        raise InputError("--seed is required for this command")
    seed = int(args.seed)
    if not 0 <= seed < 2**64:
        raise InputError("--seed must be an unsigned 64-bit integer")
    return seed


def _model(text: str):
    if text is None:
        raise InputError("--model is required")
    if text.lstrip().startswith("{"):
        try:
            return model_from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid model JSON: {exc}") from exc
    if text == "ar":
        return model_from_dict({"variant": "ar"})
    return load_model(text)


def _writable(path: Path, force: bool):
    if path.exists() and not force:
        raise InputError(f"{path} exists (use --force to overwrite)")


# -- commands ------------------------------------------------------------------


def cmd_distance(args) -> int:
    a = load_measure(args.a)
    b = load_measure(args.b)
    value, plan, _ = nested_distance(a, b, plan=bool(args.plan or args.check),
                                     max_pairs=args.max_pairs)
    w = path_wasserstein(a, b)
    print(f"W={fmt(w)} AW={fmt(value)} gap={fmt(value - w)}")
    if args.plan:
        out = Path(args.plan)
        _writable(out, args.force)
        out.write_text(json.dumps(plan.to_dict()) + "\n")
    if args.check:
        res = check_causality(plan.flatten(), "bi")
        if not res.ok:
            wit = res.witness
            print(f"causality check FAILED: {wit.direction} at t={wit.t}, "
                  f"discrepancy={fmt(wit.discrepancy)}")
            return EXIT_CHECK
        print("causality check passed (causal and anticausal)")
    return EXIT_OK


def cmd_estimate(args) -> int:
    s = read_samples_csv(args.samples)
    mode = Mode.MARKOV if args.markov else Mode.GENERAL
    g = make_grid(s.shape, s.N, mode, r=args.r, m=args.m)
    est = markov_adapted_empirical(s, g) if args.markov else adapted_empirical(s, g)
    print(f"N={s.N} r={g.r} m={g.m} cells={g.n_cells}")
    if args.out:
        out = Path(args.out)
        _writable(out, args.force)
        save_measure(est, out)
    else:
        print(json.dumps(est.to_dict()))
    return EXIT_OK


def cmd_sample(args) -> int:
    model = _model(args.model)
    if args.N is None or args.N < 1:
        raise InputError("N must be a positive integer")
    s = sample(model, args.N, _seed(args))
    if args.out:
        out = Path(args.out)
        _writable(out, args.force)
        write_samples_csv(s, out)
    else:
        sys.stdout.write(write_samples_csv(s))
    return EXIT_OK


def _out_dir(args) -> Path:
    if not args.out:
        raise InputError("--out DIR is required for report commands")
    return Path(args.out)


def _experiment(args, kind: str) -> int:
    from adaptw import experiments as ex

    model = _model(args.model)
    seed = _seed(args)
    Ns = _int_list(args.Ns)
    if not Ns:
        raise InputError("the list of sample sizes (--Ns) is empty")
    params = {"seed": seed, "Ns": Ns, "M": int(args.M), "K": int(args.K)}
    if kind == "rates":
        params.update(mode=args.mode, tolerance=float(args.tolerance))
    elif kind == "nonconvergence":
        params.update(floor=float(args.floor))
    elif kind == "deviation":
        eps = _float_list(args.eps)
        if not eps:
            raise InputError("the eps grid (--eps) is empty")
        params.update(eps=eps, mode=args.mode)
    manifest = ex.make_manifest(kind, model, **params)
    return _run_and_write(manifest, args)


def _run_and_write(manifest: dict, args) -> int:
    from adaptw import experiments as ex

    out = _out_dir(args)
    stem = manifest["kind"]
    if not args.force:
        for name in (f"{stem}.csv", f"{stem}.json", "manifest.json"):
            _writable(out / name, False)
    report = ex.run_manifest(manifest, workers=int(args.threads))
    ex.write_report(report, manifest, out, stem, force=True)
    _print_summary(report)
    return EXIT_OK


def _print_summary(report) -> None:
    from adaptw import experiments as ex
    from adaptw.stopping import StoppingReport

    if isinstance(report, ex.RateReport):
        for n, m, se in zip(report.Ns, report.means, report.stderrs):
            print(f"N={n} mean={fmt(m)} stderr={fmt(se)} budget={fmt(report.budget)}")
        print(f"slope={fmt(report.slope)} half_width={fmt(report.half_width)} "
              f"theory={fmt(report.theoretical_slope)} slope_ok={report.slope_ok} "
              f"budget_ok={report.budget_ok}")
    elif isinstance(report, ex.NonconvergenceReport):
        for n, e, a in zip(report.Ns, report.means_empirical, report.means_adapted):
            print(f"N={n} empirical={fmt(e)} adapted={fmt(a)}")
        print(f"floor={fmt(report.floor)} floor_ok={report.floor_ok} "
              f"adapted_halved={report.adapted_halved}")
    elif isinstance(report, ex.DeviationReport):
        for i, n in enumerate(report.Ns):
            row = " ".join(f"{fmt(e)}:{fmt(f)}" for e, f in zip(report.eps, report.freq[i]))
            print(f"N={n} mean={fmt(report.means[i])} freq {row}")
        print(f"c_hat={fmt(report.c_hat)}")
    elif isinstance(report, StoppingReport):
        for n, e, a in zip(report.Ns, report.value_empirical, report.value_adapted):
            print(f"N={n} value_empirical={fmt(e)} value_adapted={fmt(a)}")


def cmd_rates(args) -> int:
    return _experiment(args, "rates")


def cmd_nonconvergence(args) -> int:
    return _experiment(args, "nonconvergence")


def cmd_deviation(args) -> int:
    return _experiment(args, "deviation")


def cmd_stopping(args) -> int:
    from adaptw import experiments as ex
    from adaptw.stopping import iid_uniform

    model = _model(args.model) if args.model else iid_uniform()
    Ns = _int_list(args.Ns)
    if not Ns:
        raise InputError("the list of sample sizes (--Ns) is empty")
    manifest = ex.make_manifest("stopping", model, seed=_seed(args), Ns=Ns)
    return _run_and_write(manifest, args)


def cmd_replay(args) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read manifest: {exc}") from exc
    if not isinstance(manifest, dict) or "kind" not in manifest:
        raise InputError("not a run manifest")
    return _run_and_write(manifest, args)


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptw", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file whose keys provide defaults for the flags")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=False, out=True, threads=False):
        if seed:
            sp.add_argument("--seed", type=int, help="unsigned 64-bit seed")
        if out:
            sp.add_argument("--out", help="output file or directory")
            sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if threads:
            sp.add_argument("--threads", type=int, default=1, help="worker processes")

    sp = sub.add_parser("distance", help="adapted and classical W1 between two measure files")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--plan", help="write the optimal bicausal plan as JSON")
    sp.add_argument("--check", action="store_true", help="verify bicausality of the plan")
    sp.add_argument("--max-pairs", type=int, default=30_000_000, dest="max_pairs",
                    help="node pairs allowed per DP level")
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(func=cmd_distance)

    sp = sub.add_parser("estimate", help="adapted empirical measure of a sample CSV")
    sp.add_argument("samples")
    sp.add_argument("--markov", action="store_true", help="Markov adapted estimator")
    sp.add_argument("--r", help="override the grid exponent (experimentation only)")
    sp.add_argument("--m", type=int, help="override cells per dimension (experimentation only)")
    common(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("sample", help="draw N paths from a model spec")
    sp.add_argument("model", help="model JSON file, inline JSON or 'ar'")
    sp.add_argument("N", type=int)
    common(sp, seed=True)
    sp.set_defaults(func=cmd_sample)

    for name, func in (("rates", cmd_rates), ("nonconvergence", cmd_nonconvergence),
                       ("deviation", cmd_deviation)):
        sp = sub.add_parser(name, help=f"{name} experiment (CSV, JSON summary, manifest)")
        sp.add_argument("--model", default="ar", help="model JSON file, inline JSON or 'ar'")
        sp.add_argument("--Ns", default="64,128,256,512,1024,2048,4096,8192")
        sp.add_argument("--M", type=int, default=50)
        sp.add_argument("--K", type=int, default=512)
        if name == "rates":
            sp.add_argument("--mode", choices=["general", "markov", "empirical"],
                            default="general")
            sp.add_argument("--markov", action="store_const", const="markov", dest="mode")
            sp.add_argument("--tolerance", type=float, default=0.15)
        if name == "nonconvergence":
            sp.add_argument("--floor", type=float, default=0.05)
        if name == "deviation":
            sp.add_argument("--eps", default="0,0.01,0.02,0.05")
            sp.add_argument("--mode", choices=["general", "markov", "empirical"],
                            default="general")
        common(sp, seed=True, threads=True)
        sp.set_defaults(func=func)

    sp = sub.add_parser("stopping", help="optimal stopping under both empirical trees")
    sp.add_argument("--model", help="model spec (default: i.i.d. uniform, T = 2)")
    sp.add_argument("--Ns", default="10,100,1000,10000")
    common(sp, seed=True, threads=True)
    sp.set_defaults(func=cmd_stopping)

    sp = sub.add_parser("replay", help="re-run a report from its manifest")
    sp.add_argument("manifest")
    common(sp, threads=True)
    sp.set_defaults(func=cmd_replay)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    try:
        cfg = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {known.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    args = parser.parse_args(argv)
    explicit = {a.lstrip("-").split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}
    for key, val in cfg.items():
        key = key.replace("-", "_")
        if key not in explicit:
            setattr(args, key, val)
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if exc.code is not None else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DPMemoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (InputError, MeasureError, SampleError, ModelError, ShapeMismatch,
            FileExistsError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
