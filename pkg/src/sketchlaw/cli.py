"""Command-line interface.

Subcommands: ``simulate`` (config -> records/aggregates), ``fit`` (records ->
scaling-law exponents), ``theory`` (parameters -> prediction JSON),
``spectra-check`` (sketched-spectrum concentration report), ``plot``
(aggregated records -> SVG).

Configuration files are flat ``key = value`` documents (``#`` comments
allowed); every key can be overridden on the command line with
``--key=value``.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .fit import FitConvergenceError, chinchilla_fit
from .harness import (
    ConfigError,
    ExperimentConfig,
    aggregate,
    effective_x,
    emit_outputs,
    fit_aggregates,
    read_records_csv,
    run_grid,
)
from .sgd import LAST_ITERATE_VARIANT
from .sketch import (
    SingularModelError,
    build_model,
    concentration_report,
    sample_sketch,
    write_concentration_csv,
)
from .spectrum import make_log_power_law, make_power_law
from .theory import NonMatchingRegimeError, optimal_stepsize, predicted_rates

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_CONFIG_TYPES = {
    "d": int, "a": float, "b": float, "sigma2": float, "gamma0": float,
    "trials": int, "master_seed": int, "parallelism": int,
    "spectrum_kind": str, "prior_kind": str, "sgd_variant": str,
    "output_dir": str, "reuse_sketch_across_N": bool,
    "M_grid": list, "N_grid": list,
}


def _parse_value(key: str, raw: str):
    kind = _CONFIG_TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown configuration key {key!r}")
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean {key}={raw!r}")
    if kind is list:
        try:
            return [int(tok) for tok in raw.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"cannot parse grid {key}={raw!r}") from exc
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key}={raw!r} as {kind.__name__}") from exc


def load_config_file(path) -> dict:
    """Parse a flat key = value configuration document."""
    values: dict = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = line.split("=", 1)
        values[key.strip()] = _parse_value(key.strip(), raw)
    return values


def _apply_overrides(values: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"unrecognized argument {item!r}; "
                              "overrides take the form --key=value")
        key, raw = item[2:].split("=", 1)
        values[key] = _parse_value(key, raw)
    return values


def _cmd_simulate(args, overrides) -> int:
    values = load_config_file(args.config) if args.config else {}
    _apply_overrides(values, overrides)
    values["master_seed"] = args.seed
    if args.out is not None:
        values["output_dir"] = args.out
    missing = [k for k in ("d", "a", "M_grid", "N_grid", "trials")
               if k not in values]
    if missing:
        raise ConfigError(f"missing configuration keys: {', '.join(missing)}")
    config = ExperimentConfig(**values)
    records, manifest = run_grid(config)
    cells = aggregate(records)
    if config.output_dir:
        emit_outputs(cells, None, config.output_dir, sigma2=config.sigma2,
                     variant=config.sgd_variant, plots=args.plots)
    print(json.dumps({
        "records": len(records),
        "cells": len(cells),
        "diverged": sum(c.excluded for c in cells),
        "output_dir": config.output_dir,
        "version": manifest["version"],
    }))
    return EXIT_OK


def _cmd_fit(args, overrides) -> int:
    if overrides:
        raise ConfigError(f"unrecognized arguments: {overrides}")
    records = read_records_csv(args.records)
    variant = records[0].variant if records else LAST_ITERATE_VARIANT
    cells = aggregate(records)
    sigma2 = None if args.free_sigma2 else args.sigma2
    result = fit_aggregates(cells, variant=variant, sigma2=sigma2,
                            delta=args.delta, x_axis=args.x_axis)
    payload = json.dumps(result.as_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(payload)
    print(payload)
    return EXIT_OK


def _cmd_theory(args, overrides) -> int:
    if overrides:
        raise ConfigError(f"unrecognized arguments: {overrides}")
    gamma0 = args.gamma
    rule = None
    if args.gamma_mode == "tuned":
        rule = optimal_stepsize(args.regime, args.a, b=args.b, M=args.M, N=args.N)
        gamma0 = rule.value if rule.kind == "value" else rule.upper
    prediction = predicted_rates(args.regime, args.variant, args.a, b=args.b,
                                 M=args.M, N=args.N, gamma0=gamma0,
                                 sigma2=args.sigma2)
    payload = prediction.as_dict()
    payload["gamma_mode"] = args.gamma_mode
    if rule is not None:
        payload["stepsize_rule"] = rule.as_dict()
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _cmd_spectra_check(args, overrides) -> int:
    if overrides:
        raise ConfigError(f"unrecognized arguments: {overrides}")
    maker = make_power_law if args.kind == "power_law" else make_log_power_law
    spec = maker(args.d, args.a, normalize=args.normalize)
    sketch = sample_sketch(args.M, args.d, args.seed)
    model = build_model(sketch, spec, np.zeros(args.d))
    report = concentration_report(model)
    if args.out:
        write_concentration_csv(report, args.out)
    else:
        write_concentration_csv(report, sys.stdout)
    print(json.dumps({"max_min_ratio": report.max_min_ratio,
                      "boundary": report.boundary}), file=sys.stderr)
    return EXIT_OK


def _cmd_plot(args, overrides) -> int:
    if overrides:
        raise ConfigError(f"unrecognized arguments: {overrides}")
    from .harness import plot_aggregates

    records = read_records_csv(args.records)
    variant = records[0].variant if records else LAST_ITERATE_VARIANT
    sigma2 = records[0].sigma2 if records else args.sigma2
    cells = aggregate(records)
    fit = None
    if args.fit:
        data = json.loads(Path(args.fit).read_text())
        from .fit import FitResult

        fit = FitResult(**data)
    written = plot_aggregates(cells, args.out_dir, sigma2=sigma2,
                              variant=variant, fit=fit)
    print(json.dumps({"written": [str(p) for p in written]}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchlaw",
        description="Simulate and analyze scaling laws of one-pass SGD on "
                    "Gaussian-sketched linear regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo grid from a config")
    sim.add_argument("--config", help="flat key = value configuration file")
    sim.add_argument("--seed", type=int, required=True, help="master seed")
    sim.add_argument("--out", help="output directory (overrides output_dir)")
    sim.add_argument("--plots", action="store_true", help="emit SVG plots")
    sim.set_defaults(func=_cmd_simulate, allow_overrides=True)

    fit_p = sub.add_parser("fit", help="fit scaling-law exponents to records")
    fit_p.add_argument("--records", required=True, help="records.csv path")
    fit_p.add_argument("--sigma2", type=float, default=1.0)
    fit_p.add_argument("--free-sigma2", action="store_true",
                       help="fit sigma2 instead of fixing it")
    fit_p.add_argument("--delta", type=float, default=1e-3,
                       help="Huber transition width in log space")
    fit_p.add_argument("--x-axis", choices=("n_eff", "n"), default="n_eff",
                       help="sample-size coordinate used in the fit")
    fit_p.add_argument("--out", help="also write the fit JSON here")
    fit_p.set_defaults(func=_cmd_fit, allow_overrides=False)

    theo = sub.add_parser("theory", help="print a rate prediction record")
    theo.add_argument("--regime", choices=("power_law", "source",
                                           "log_power_law"), required=True)
    theo.add_argument("--variant", choices=("last_iterate", "averaged"),
                      default="last_iterate")
    theo.add_argument("--a", type=float, required=True)
    theo.add_argument("--b", type=float)
    theo.add_argument("--M", type=int, required=True)
    theo.add_argument("--N", type=int, required=True)
    theo.add_argument("--gamma", type=float, default=1.0)
    theo.add_argument("--sigma2", type=float, default=1.0)
    theo.add_argument("--gamma-mode", choices=("fixed", "tuned"),
                      default="fixed",
                      help="evaluate rates at the given gamma or at the "
                           "predicted optimal one")
    theo.set_defaults(func=_cmd_theory, allow_overrides=False)

    check = sub.add_parser("spectra-check",
                           help="concentration report for a sketched spectrum")
    check.add_argument("--kind", choices=("power_law", "log_power_law"),
                       default="power_law")
    check.add_argument("--a", type=float, required=True)
    check.add_argument("--d", type=int, required=True)
    check.add_argument("--M", type=int, required=True)
    check.add_argument("--seed", type=int, required=True)
    check.add_argument("--normalize", action="store_true")
    check.add_argument("--out", help="CSV output path (default stdout)")
    check.set_defaults(func=_cmd_spectra_check, allow_overrides=False)

    plot = sub.add_parser("plot", help="SVG log-log plots from records")
    plot.add_argument("--records", required=True)
    plot.add_argument("--out-dir", required=True)
    plot.add_argument("--sigma2", type=float, default=1.0)
    plot.add_argument("--fit", help="fit JSON to overlay")
    plot.set_defaults(func=_cmd_plot, allow_overrides=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    if extras and not args.allow_overrides:
        print(f"error: unrecognized arguments: {' '.join(extras)}",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args, extras)
    except (SingularModelError, FitConvergenceError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, NonMatchingRegimeError, ValueError, OSError,
            TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
