"""Command-line interface: ``coxtail {fit,predict,select,aggregate,simulate,calibrate}``.

Exit codes: 0 success, 2 usage, 3 data error, 4 numeric/convergence error,
5 selection error. Each run writes ``<output>.manifest.json`` next to its
first output file.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .aggregation import aggregate_adaptive, aggregate_simple
from .cox import fit_cox
from .data import load_dataset
from .errors import ConvergenceError, DataError, SelectionError
from .models import NelsonAalenModel, curve_table, load_model, save_model
from .simulation import SimConfig, run_monte_carlo
from .tail import fit_semiparametric, snap_threshold
from .threshold import SelectionParams, calibrate_D, select_threshold

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_SELECTION = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def parse_grid(text):
    """``a:b:n`` (linear), ``geom:a:b:n`` (geometric) or a comma list."""
    if text.startswith("geom:"):
        a, b, n = text[5:].split(":")
        return np.geomspace(float(a), float(b), int(n))
    if ":" in text:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n))
    return np.array(_floats(text))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(primary_output, command, args, inputs=(), outputs=()):
    manifest = {
        "command": command,
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": list(outputs),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    with open(f"{primary_output}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _resolve_D(args, n):
    if args.critical_value is not None:
        cv = args.critical_value
        if os.path.exists(cv):
            with open(cv, encoding="utf-8") as fh:
                return float(json.load(fh)["D"])
        try:
            return float(cv)
        except ValueError:
            raise UsageError(f"--critical-value: not a number or readable file: {cv}") from None
    if args.calibrate:
        return calibrate_D(n, _params(args), quantile=args.quantile, n_mc=args.n_mc,
                           seed=args.seed, n_jobs=args.threads)
    raise UsageError("a critical value is required: pass --critical-value or --calibrate")


def _params(args, D=None):
    return SelectionParams(n_grid=args.n_grid, zeta_prime=args.zeta_prime,
                           zeta_second=args.zeta_second, D=D)


def _sample_and_cox(args):
    sample = load_dataset(args.data)
    beta = None if args.beta is None else _floats(args.beta)
    if beta is not None and len(beta) != sample.p:
        raise DataError(f"--beta has {len(beta)} values, data has {sample.p} covariates")
    cox = fit_cox(sample, beta)
    return sample, cox


def _select(args, sample, cox):
    D = _resolve_D(args, sample.n)
    return select_threshold(sample, cox.beta, _params(args, D), cox=cox)


def _z(args, p):
    if args.z is None:
        return None
    z = _floats(args.z)
    if len(z) != p:
        raise DataError(f"--z has {len(z)} values, model has {p} covariates")
    return z


def _write_curve(path, model, grid, z):
    rows = curve_table(model, grid, z)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "survival", "cum_hazard"])
        for x, s, h in rows:
            w.writerow([repr(float(x)), repr(float(s)), repr(float(h))])


def _emit_model(args, model, command, extra_outputs=()):
    save_model(model, args.out)
    outputs = [args.out, *extra_outputs]
    if args.curve:
        _write_curve(args.curve, model, parse_grid(args.grid), _z(args, model.cox.beta.size))
        outputs.append(args.curve)
    write_manifest(args.out, command, args, inputs=[args.data], outputs=outputs)


def cmd_fit(args):
    sample, cox = _sample_and_cox(args)
    method = args.method
    extra = []
    if method == "na":
        model = NelsonAalenModel(cox)
    elif method.startswith("fixed:"):
        try:
            tau = float(method.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"--method {method}: threshold is not a number") from None
        model = fit_semiparametric(sample, cox.beta, snap_threshold(sample, tau), cox=cox)
    elif method == "adaptive":
        sel = _select(args, sample, cox)
        model = fit_semiparametric(sample, cox.beta, sel.tau_hat, cox=cox)
        report = args.report or f"{args.out}.selection.json"
        _write_json(report, sel.to_dict())
        extra.append(report)
    elif method == "agg-simple":
        model = aggregate_simple(sample, cox.beta, m0=args.m0, M=args.M, m0_frac=args.m0_frac, cox=cox)
    elif method == "agg-adaptive":
        sel = _select(args, sample, cox)
        model = aggregate_adaptive(sample, cox.beta, sel, M=args.M, cox=cox)
    else:
        raise UsageError(f"unknown method {method!r}")
    _emit_model(args, model, "fit", extra)
    print(args.out)


def cmd_aggregate(args):
    args.method = "agg-simple" if args.kind == "simple" else "agg-adaptive"
    cmd_fit(args)


def cmd_select(args):
    sample, cox = _sample_and_cox(args)
    sel = _select(args, sample, cox)
    _write_json(args.out, sel.to_dict())
    write_manifest(args.out, "select", args, inputs=[args.data], outputs=[args.out])
    print(f"tau_hat={sel.tau_hat!r} theta_hat={sel.theta_hat!r} k_hat={sel.k_hat} exceeded={sel.exceeded}")


def _fmt(v):
    return "NA" if v is None else repr(float(v))


def cmd_predict(args):
    model = load_model(args.model)
    p = model.cox.beta.size
    z = _z(args, p)
    if args.batch:
        _predict_batch(args, model, p)
        return
    if not args.survival_at and not args.quantile:
        raise UsageError("one of --survival-at, --quantile or --batch is required")
    for x in args.survival_at or []:
        print(f"S({x!r})={_fmt(model.survival(x, z))}")
    for q in args.quantile or []:
        print(f"q({q!r})={_fmt(model.quantile(q, z))}")


def _predict_batch(args, model, p):
    with open(args.batch, encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(line for line in fh if not line.startswith("#"))]
    out = sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["row", "kind", "value", "result"])
    for i, row in enumerate(rows):
        try:
            z = [float(row[f"z{j + 1}"]) for j in range(p)]
        except (KeyError, ValueError):
            raise DataError(f"batch row {i + 1}: expected numeric columns z1..z{p}") from None
        if row.get("x", "") not in ("", None):
            w.writerow([i + 1, "survival", row["x"], _fmt(model.survival(float(row["x"]), z or None))])
        if row.get("p", "") not in ("", None):
            w.writerow([i + 1, "quantile", row["p"], _fmt(model.quantile(float(row["p"]), z or None))])


def cmd_simulate(args):
    config = SimConfig.from_json(args.config)
    if args.estimate_beta:
        config = SimConfig.from_dict({**config.to_dict(), "estimate_beta": True})
    report = run_monte_carlo(config, n_jobs=args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    stem = os.path.join(args.out_dir, os.path.splitext(os.path.basename(args.config))[0])
    report.to_json(f"{stem}.report.json")
    report.to_csv(f"{stem}.relmse.csv")
    write_manifest(f"{stem}.report.json", "simulate", args, inputs=[args.config],
                   outputs=[f"{stem}.report.json", f"{stem}.relmse.csv"])
    print(f"{stem}.report.json")


def cmd_calibrate(args):
    params = _params(args)
    D = calibrate_D(args.n, params, quantile=args.quantile, n_mc=args.n_mc, seed=args.seed,
                    theta=args.theta, censor_theta=args.censor_theta, n_jobs=args.threads)
    _write_json(args.out, {
        "D": D,
        "n": args.n,
        "quantile": args.quantile,
        "n_mc": args.n_mc,
        "seed": args.seed,
        "theta": args.theta,
        "censor_theta": args.censor_theta,
        "n_grid": params.n_grid,
        "zeta_prime": params.zeta_prime,
        "zeta_second": params.zeta_second,
    })
    write_manifest(args.out, "calibrate", args, outputs=[args.out])
    print(repr(D))


def _selection_flags(p, calibrate=True):
    p.add_argument("--n-grid", type=int, default=100)
    p.add_argument("--zeta-prime", type=float, default=0.25)
    p.add_argument("--zeta-second", type=float, default=0.05)
    if calibrate:
        p.add_argument("--critical-value", help="number, or path to a calibrate output file")
        p.add_argument("--calibrate", action="store_true", help="calibrate D for this sample size")
    p.add_argument("--quantile", type=float, default=0.99)
    p.add_argument("--n-mc", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)


def _fit_flags(p):
    p.add_argument("data", help="CSV with header time,status,z1,...,zp")
    p.add_argument("--beta", help="comma-separated coefficients; fitted when omitted")
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--curve", help="optional curve CSV (x, survival, cum_hazard)")
    p.add_argument("--grid", default="geom:0.1:1000:200", help="curve grid: a:b:n, geom:a:b:n or list")
    p.add_argument("--z", help="covariate vector for the curve, zeros by default")
    p.add_argument("--M", type=int, default=10)
    p.add_argument("--m0", type=int)
    p.add_argument("--m0-frac", type=float)
    _selection_flags(p)


def build_parser():
    parser = argparse.ArgumentParser(prog="coxtail", description="Cox model with a Pareto tail: fitting, prediction, simulation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a survival model")
    _fit_flags(p)
    p.add_argument("--method", default="adaptive",
                   help="na | fixed:TAU | adaptive | agg-simple | agg-adaptive")
    p.add_argument("--report", help="selection report path (adaptive)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("aggregate", help="fit an aggregated model")
    _fit_flags(p)
    p.add_argument("--kind", choices=("simple", "adaptive"), default="adaptive")
    p.add_argument("--report", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("select", help="adaptive threshold selection report")
    p.add_argument("data")
    p.add_argument("--beta")
    p.add_argument("--out", required=True)
    _selection_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("predict", help="survival probabilities or quantiles from a model file")
    p.add_argument("model")
    p.add_argument("--z")
    p.add_argument("--survival-at", type=float, nargs="+")
    p.add_argument("--quantile", type=float, nargs="+")
    p.add_argument("--batch", help="CSV with columns z1..zp and x and/or p")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="run a Monte-Carlo study from a JSON config")
    p.add_argument("config")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--estimate-beta", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="calibrate the critical value D")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--censor-theta", type=float)
    _selection_flags(p, calibrate=False)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"coxtail: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SelectionError as exc:
        print(f"coxtail: selection error: {exc}", file=sys.stderr)
        return EXIT_SELECTION
    except (DataError, OSError) as exc:
        print(f"coxtail: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, FloatingPointError) as exc:
        print(f"coxtail: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"coxtail: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
