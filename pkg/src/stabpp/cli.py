"""Command-line entry point: ``stabpp {simulate,fit,select,bench}``.

Exit status is 0 on success, 2 for invalid input or configuration and 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench
from .criteria import KINDS, SecondOrderSpec, select_by_criterion
from .geometry import (
    GeometryError, Window, read_covariates_csv, read_pattern_csv, synth_covariates, write_covariates_csv,
    write_pattern_csv,
)
from .likelihood import DegenerateDataError, NumericalError, build_fit_data
from .simulate import LogLinearModel, ThomasParams, calibrate_intercept, sample_poisson, sample_thomas, stream
from .solver import L0, L1, PathConfig, adaptive_path, log_grid
from .stability import StabilityConfig, select_stable, stability_path

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _covariates(spec, seed=0, p=15):
    if spec == "synth":
        return synth_covariates(seed, p)
    return read_covariates_csv(spec)


def _window(args, field):
    if getattr(args, "window", None):
        vals = _floats(args.window)
        if len(vals) != 4:
            raise UsageError("--window needs xmin,xmax,ymin,ymax")
        return Window(*vals)
    return field.extent


def _penalty(name):
    return {"l0": L0, "l1": L1}[name.lower()]


def cmd_simulate(args):
    field = _covariates(args.covariates, args.covariate_seed, args.p)
    window = _window(args, field)
    beta = np.zeros(field.p)
    true = _floats(args.beta) if args.beta else ([1.0, 0.5] if args.process == "poisson" else [2.0, 0.75])
    if len(true) > field.p:
        raise UsageError("more coefficients than covariates")
    beta[: len(true)] = true
    model = calibrate_intercept(LogLinearModel(0.0, beta), field, window, args.target_n)
    rng = stream(args.seed)
    if args.process == "poisson":
        pattern = sample_poisson(model, field, window, rng)
    else:
        pattern = sample_thomas(model, ThomasParams(args.kappa, args.sigma), field, window, rng)
    write_pattern_csv(pattern, args.out)
    if args.covariates_out:
        write_covariates_csv(field, args.covariates_out)
    print(f"wrote {len(pattern)} points to {args.out}")


def _load(args):
    field = _covariates(args.covariates)
    window = _window(args, field)
    pattern = read_pattern_csv(args.pattern, window)
    return field, window, pattern


def _path_config(args):
    if args.lam is not None:
        if args.lam <= 0:
            raise UsageError("--lambda must be positive")
        return PathConfig(np.array([args.lam]))
    vals = _floats(args.path)
    if len(vals) != 3:
        raise UsageError("--path needs max,min,count")
    hi, lo = max(vals[:2]), min(vals[:2])
    return PathConfig(log_grid(hi, lo, int(vals[2])))


def cmd_fit(args):
    field, window, pattern = _load(args)
    fit = build_fit_data(pattern, field, window)
    path, _ = adaptive_path(fit, _penalty(args.penalty), _path_config(args))
    header = ["lambda", "log_omega", *field.names, "converged"]
    with open(args.out, "w") as fh:
        fh.write(",".join(header) + "\n")
        for m, lam in enumerate(path.lambdas):
            row = [f"{lam:.12g}", *(f"{v:.12g}" for v in path.coefs[m]), str(bool(path.converged[m])).lower()]
            fh.write(",".join(row) + "\n")
    print(f"wrote {len(path.lambdas)} path points to {args.out}")


def cmd_select(args):
    field, window, pattern = _load(args)
    kind = _penalty(args.penalty)
    path_config = _path_config(args)
    if args.selector == "stability":
        cfg = StabilityConfig(args.k, args.pthin, args.pith, args.pfer, args.seed)
        sp = stability_path(pattern, field, window, kind, cfg, path_config)
        res = select_stable(sp, pattern, field, window)
        if args.stability_csv:
            sp.to_csv(args.stability_csv)
        echo = cfg
    else:
        crit = {k.lower(): k for k in KINDS}[args.selector]
        fit = build_fit_data(pattern, field, window)
        path, _ = adaptive_path(fit, kind, path_config)
        spec = SecondOrderSpec.thomas(ThomasParams(args.kappa, args.sigma)) if args.kappa else None
        res = select_by_criterion(path, fit, crit, spec)
        echo = {"selector": crit, "kappa": args.kappa, "sigma": args.sigma}
    Path(args.out).write_text(res.to_json(field.names, echo) + "\n")
    print(f"selected {[field.names[j] for j in res.support]}")


def cmd_bench(args):
    configs = bench.parse_config(Path(args.config).read_text())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, cfg in enumerate(configs):
        if args.reps:
            cfg = replace(cfg, reps=args.reps)
        res = bench.run_grid(cfg)
        stem = f"{cfg.scenario}" if len(configs) == 1 else f"{i:02d}_{cfg.scenario}"
        (out / f"{stem}.csv").write_text(res.to_csv())
        (out / f"{stem}_diagnostics.json").write_text(bench.diagnostics_json(res, cfg) + "\n")
        print(f"{stem}: {len(res.rows)} rows, failures {res.failure_counts()}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stabpp", description="Sparse intensity selection for spatial point processes.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a Poisson or Thomas pattern")
    s.add_argument("--process", choices=("poisson", "thomas"), required=True)
    s.add_argument("--covariates", default="synth", help="covariate CSV or 'synth'")
    s.add_argument("--covariate-seed", type=int, default=0)
    s.add_argument("--p", type=int, default=15, help="number of synthetic covariates")
    s.add_argument("--covariates-out", help="also write the covariates used")
    s.add_argument("--beta", help="comma-separated leading coefficients")
    s.add_argument("--kappa", type=float, default=4e-3)
    s.add_argument("--sigma", type=float, default=1.5)
    s.add_argument("--window", help="xmin,xmax,ymin,ymax (default: covariate extent)")
    s.add_argument("--target-n", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    for name, func in (("fit", cmd_fit), ("select", cmd_select)):
        f = sub.add_parser(name, help=f"{name} an adaptive penalized model")
        f.add_argument("--pattern", required=True)
        f.add_argument("--covariates", required=True)
        f.add_argument("--window")
        f.add_argument("--penalty", choices=("l0", "l1", "L0", "L1"), required=True)
        grid = f.add_mutually_exclusive_group()
        grid.add_argument("--lambda", dest="lam", type=float)
        grid.add_argument("--path", default="500,1e-4,35", help="max,min,count")
        f.add_argument("--out", required=True)
        f.set_defaults(func=func)
        if name == "select":
            f.add_argument("--selector", choices=("bic", "eric", "cbic", "ceric", "stability"), required=True)
            f.add_argument("--pfer", type=float, default=1.0)
            f.add_argument("--k", type=int, default=50)
            f.add_argument("--pthin", type=float, default=0.5)
            f.add_argument("--pith", type=float, default=0.9)
            f.add_argument("--seed", type=int, default=0)
            f.add_argument("--kappa", type=float, help="Thomas kappa for cBIC/cERIC")
            f.add_argument("--sigma", type=float, default=1.5)
            f.add_argument("--stability-csv", help="also write the stability path")

    b = sub.add_parser("bench", help="run a simulation study from a config file")
    b.add_argument("--config", required=True)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--reps", type=int)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except (NumericalError, DegenerateDataError, ArithmeticError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, GeometryError, bench.ConfigError, ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
