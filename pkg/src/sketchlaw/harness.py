"""Experiment orchestration: seeded Monte Carlo grids, aggregation, outputs.

A grid run samples one (w*, S) pair per trial from three derived seed
streams (sketch, prior, data), builds the sketched model once per
(M, trial), and runs one SGD trajectory per (M, N, trial) cell.  With
``reuse_sketch_across_N`` on (the default) all N values within a trial share
the model and the leading innovations, a common-random-numbers choice that
cuts the dominant O(M^2 d) build cost by the grid size and smooths the
N-curves without biasing any single cell.

Records stream to ``records.csv`` in trial order regardless of the worker
count, so a run is reproducible byte-for-byte from its manifest (modulo the
wall-clock ``runtime_ms`` column).  Aggregation excludes diverged rows and
reports normal-approximation confidence intervals.
"""

from __future__ import annotations

import csv
import json
import math
import multiprocessing
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .fit import FitResult, chinchilla_fit
from .risk import decompose
from .sgd import (
    AVERAGED_VARIANT,
    LAST_ITERATE_VARIANT,
    constant_schedule,
    geometric_schedule,
    run_average_iterate,
    run_last_iterate,
    trial_seed,
)
from .sketch import build_model, sample_sketch
from .spectrum import (
    LOG_POWER_LAW,
    POWER_LAW,
    PriorSpec,
    Spectrum,
    make_log_power_law,
    make_power_law,
    sample_prior,
)

RECORD_COLUMNS = (
    "spectrum_kind", "d", "a", "b", "M", "N", "gamma0", "sigma2", "variant",
    "trial", "seed", "risk_emp", "excess_emp", "approx", "bias_cf",
    "variance_cf", "d_eff", "diverged", "runtime_ms",
)

AGGREGATE_COLUMNS = ("M", "N", "mean_risk", "ci_low", "ci_high", "n")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    d: int
    a: float
    M_grid: list[int]
    N_grid: list[int]
    trials: int
    master_seed: int
    spectrum_kind: str = POWER_LAW
    b: Optional[float] = None
    prior_kind: str = "isotropic"
    sigma2: float = 1.0
    gamma0: float = 0.1
    sgd_variant: str = LAST_ITERATE_VARIANT
    parallelism: int = 1
    output_dir: Optional[str] = None
    reuse_sketch_across_N: bool = True

    def validate(self) -> None:
        if self.spectrum_kind not in (POWER_LAW, LOG_POWER_LAW):
            raise ConfigError(f"unsupported spectrum kind {self.spectrum_kind!r}")
        if self.sgd_variant not in (LAST_ITERATE_VARIANT, AVERAGED_VARIANT):
            raise ConfigError(f"unsupported SGD variant {self.sgd_variant!r}")
        if self.prior_kind not in ("isotropic", "source"):
            raise ConfigError(f"unsupported prior kind {self.prior_kind!r}")
        if self.prior_kind == "source" and (self.b is None or self.b <= 1.0):
            raise ConfigError("source prior requires b > 1")
        if not self.M_grid or not self.N_grid:
            raise ConfigError("M and N grids must be non-empty")
        if sorted(self.M_grid) != list(self.M_grid) or sorted(self.N_grid) != list(self.N_grid):
            raise ConfigError("grids must be sorted ascending")
        if max(self.M_grid) > self.d:
            raise ConfigError("largest M exceeds the ambient dimension d")
        if min(self.N_grid) < 2 and self.sgd_variant == LAST_ITERATE_VARIANT:
            raise ConfigError("geometric decay requires N >= 2")
        if self.trials < 1:
            raise ConfigError("need at least one trial")
        if self.sigma2 < 0.0 or self.gamma0 < 0.0:
            raise ConfigError("sigma2 and gamma0 must be non-negative")
        if self.parallelism < 0:
            raise ConfigError("parallelism must be non-negative")

    def spectrum(self) -> Spectrum:
        # Experiments always run with unit trace, matching tr(H) = 1 setups.
        maker = make_power_law if self.spectrum_kind == POWER_LAW else make_log_power_law
        return maker(self.d, self.a, normalize=True)

    def prior(self) -> PriorSpec:
        return PriorSpec(kind=self.prior_kind, b=self.b)

    def manifest(self) -> dict:
        record = asdict(self)
        record["version"] = __version__
        record["started_at"] = datetime.now(timezone.utc).isoformat()
        return record


@dataclass
class ExperimentRecord:
    spectrum_kind: str
    d: int
    a: float
    b: Optional[float]
    M: int
    N: int
    gamma0: float
    sigma2: float
    variant: str
    trial: int
    seed: int
    risk_emp: float
    excess_emp: float
    approx: float
    bias_cf: float
    variance_cf: float
    d_eff: float
    diverged: bool
    runtime_ms: float

    def row(self) -> list[str]:
        values = []
        for name in RECORD_COLUMNS:
            value = getattr(self, name)
            if value is None:
                values.append("")
            elif isinstance(value, bool):
                values.append(str(int(value)))
            elif isinstance(value, float):
                values.append(repr(float(value)))
            else:
                values.append(str(value))
        return values


def _row_seed(config: ExperimentConfig, trial: int, n_index: int) -> int:
    base = trial_seed(config.master_seed, trial, "data")
    if config.reuse_sketch_across_N:
        return base
    # Independent resampling per N cell: fold the grid index into the stream.
    return trial_seed(base, n_index, "data")


def _trial_records(config: ExperimentConfig, trial: int) -> list[ExperimentRecord]:
    spec = config.spectrum()
    prior = config.prior()
    sketch_seed = trial_seed(config.master_seed, trial, "sketch")
    prior_seed = trial_seed(config.master_seed, trial, "prior")
    w_star = sample_prior(spec, prior, prior_seed)

    records = []
    for M in config.M_grid:
        model = build_model(sample_sketch(M, config.d, sketch_seed), spec, w_star)
        for n_index, N in enumerate(config.N_grid):
            if not config.reuse_sketch_across_N and n_index > 0:
                resample_seed = trial_seed(sketch_seed, n_index, "sketch")
                model = build_model(sample_sketch(M, config.d, resample_seed),
                                    spec, w_star)
            data_seed = _row_seed(config, trial, n_index)
            start = time.perf_counter()
            if config.sgd_variant == LAST_ITERATE_VARIANT:
                schedule = geometric_schedule(config.gamma0, N)
                outcome = run_last_iterate(model, config.sigma2, schedule, data_seed)
            else:
                schedule = constant_schedule(config.gamma0, N)
                outcome = run_average_iterate(model, config.sigma2,
                                              config.gamma0, N, data_seed)
            report = decompose(model, schedule, config.sigma2,
                               empirical_excess=outcome.excess_risk)
            runtime_ms = (time.perf_counter() - start) * 1e3
            records.append(ExperimentRecord(
                spectrum_kind=config.spectrum_kind,
                d=config.d, a=config.a, b=config.b, M=M, N=N,
                gamma0=config.gamma0, sigma2=config.sigma2,
                variant=config.sgd_variant, trial=trial, seed=data_seed,
                risk_emp=report.total, excess_emp=outcome.excess_risk,
                approx=model.approx_error, bias_cf=report.bias_cf,
                variance_cf=report.variance_cf, d_eff=report.d_eff,
                diverged=outcome.diverged, runtime_ms=runtime_ms,
            ))
    return records


def _worker_init() -> None:
    # Workers each get one BLAS thread so trial-level parallelism scales.
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:  # pragma: no cover
        pass


def _worker(args) -> list[ExperimentRecord]:
    config, trial = args
    return _trial_records(config, trial)


def run_grid(config: ExperimentConfig) -> tuple[list[ExperimentRecord], dict]:
    """Run the full (M, N, trial) grid; stream records and write the manifest.

    Results are consumed in trial order whatever the worker count, so the
    emitted ``records.csv`` does not depend on ``parallelism``.
    """
    config.validate()
    manifest = config.manifest()

    out_dir = Path(config.output_dir) if config.output_dir else None
    records_fh = None
    writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
        records_fh = open(out_dir / "records.csv", "w", newline="")
        writer = csv.writer(records_fh)
        writer.writerow(RECORD_COLUMNS)

    records: list[ExperimentRecord] = []

    def _consume(batch: list[ExperimentRecord]) -> None:
        records.extend(batch)
        if writer is not None:
            for record in batch:
                writer.writerow(record.row())
            records_fh.flush()

    tasks = [(config, trial) for trial in range(config.trials)]
    try:
        if config.parallelism > 1 and config.trials > 1:
            workers = min(config.parallelism, config.trials)
            with multiprocessing.Pool(workers, initializer=_worker_init) as pool:
                for batch in pool.imap(_worker, tasks, chunksize=1):
                    _consume(batch)
        else:
            for task in tasks:
                _consume(_worker(task))
    finally:
        if records_fh is not None:
            records_fh.close()
    return records, manifest


@dataclass
class AggregateCell:
    M: int
    N: int
    mean_risk: float
    ci_low: float
    ci_high: float
    n: int
    excluded: int = 0


def aggregate(records: Sequence[ExperimentRecord]) -> list[AggregateCell]:
    """Per-(M, N) mean risk with a 95% normal-approximation interval.

    Diverged rows are excluded from the means; their counts are reported.
    A single surviving record yields an infinite-width interval.
    """
    cells: dict[tuple[int, int], list[ExperimentRecord]] = {}
    for record in records:
        cells.setdefault((record.M, record.N), []).append(record)
    result = []
    for (M, N), rows in sorted(cells.items()):
        kept = [r.risk_emp for r in rows if not r.diverged]
        excluded = len(rows) - len(kept)
        if not kept:
            raise ValueError(f"cell (M={M}, N={N}) has no non-diverged records")
        mean = float(np.mean(kept))
        if len(kept) == 1:
            half = float("inf")
        else:
            half = 1.96 * float(np.std(kept, ddof=1)) / math.sqrt(len(kept))
        result.append(AggregateCell(M=M, N=N, mean_risk=mean,
                                    ci_low=mean - half, ci_high=mean + half,
                                    n=len(kept), excluded=excluded))
    return result


def effective_x(N: int, variant: str) -> float:
    """Sample-size axis used for fitting: N_eff for the last iterate, else N."""
    if variant == LAST_ITERATE_VARIANT:
        return N / math.log2(N)
    return float(N)


def fit_aggregates(aggregates: Sequence[AggregateCell], variant: str,
                   sigma2: Optional[float], delta: float = 1e-3,
                   x_axis: str = "n_eff") -> FitResult:
    """Joint scaling-law fit of the aggregated means.

    ``x_axis`` selects the sample-size coordinate: "n_eff" (the effective
    sample size, matching how the risk curves are presented) or "n" (raw).
    """
    if x_axis not in ("n_eff", "n"):
        raise ValueError(f"unknown x_axis {x_axis!r}")
    triples = []
    excluded = 0
    for cell in aggregates:
        x = effective_x(cell.N, variant) if x_axis == "n_eff" else float(cell.N)
        triples.append((cell.M, x, cell.mean_risk))
        excluded += cell.excluded
    return chinchilla_fit(triples, sigma2=sigma2, delta=delta,
                          excluded_diverged=excluded)


def write_aggregate_csv(aggregates: Sequence[AggregateCell], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for cell in aggregates:
            writer.writerow([cell.M, cell.N, repr(cell.mean_risk),
                             repr(cell.ci_low), repr(cell.ci_high), cell.n])


def read_records_csv(path) -> list[ExperimentRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
            raise ValueError(f"{path}: unexpected record columns "
                             f"{reader.fieldnames}")
        for row in reader:
            records.append(ExperimentRecord(
                spectrum_kind=row["spectrum_kind"],
                d=int(row["d"]), a=float(row["a"]),
                b=float(row["b"]) if row["b"] else None,
                M=int(row["M"]), N=int(row["N"]),
                gamma0=float(row["gamma0"]), sigma2=float(row["sigma2"]),
                variant=row["variant"], trial=int(row["trial"]),
                seed=int(row["seed"]), risk_emp=float(row["risk_emp"]),
                excess_emp=float(row["excess_emp"]), approx=float(row["approx"]),
                bias_cf=float(row["bias_cf"]),
                variance_cf=float(row["variance_cf"]),
                d_eff=float(row["d_eff"]), diverged=bool(int(row["diverged"])),
                runtime_ms=float(row["runtime_ms"]),
            ))
    return records


def _plot_series(ax, aggregates, fit, sigma2, variant, sweep: str) -> None:
    groups: dict[int, list[AggregateCell]] = {}
    for cell in aggregates:
        key = cell.M if sweep == "N" else cell.N
        groups.setdefault(key, []).append(cell)
    for key, cells in sorted(groups.items()):
        xs = np.array([c.N if sweep == "N" else c.M for c in cells], dtype=float)
        ys = np.array([c.mean_risk - sigma2 for c in cells])
        label = f"M={key}" if sweep == "N" else f"N={key}"
        ax.plot(xs, ys, "o-", ms=3, lw=0.8, label=label)
        if fit is not None:
            grid = np.geomspace(xs.min(), xs.max(), 64)
            if sweep == "N":
                x_fit = np.array([effective_x(int(round(v)), variant) for v in grid])
                pred = fit.c1 * key ** (-fit.a1) + fit.c2 * x_fit ** (-fit.a2)
            else:
                x2 = effective_x(key, variant)
                pred = fit.c1 * grid ** (-fit.a1) + fit.c2 * x2 ** (-fit.a2)
            ax.plot(grid, pred, "--", lw=0.8, color="gray")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=2)
    ax.set_xlabel("N" if sweep == "N" else "M")
    ax.set_ylabel("risk - sigma^2")
    ax.legend(fontsize=6)


def plot_aggregates(aggregates: Sequence[AggregateCell], out_dir,
                    sigma2: float, variant: str = LAST_ITERATE_VARIANT,
                    fit: Optional[FitResult] = None) -> list[Path]:
    """Write static SVG log-log plots of risk - sigma2 vs N per M and vs M per N."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for sweep, name in (("N", "risk_vs_N.svg"), ("M", "risk_vs_M.svg")):
        fig, ax = plt.subplots(figsize=(4.2, 3.2), constrained_layout=True)
        _plot_series(ax, aggregates, fit, sigma2, variant, sweep)
        path = out_dir / name
        fig.savefig(path, format="svg")
        plt.close(fig)
        written.append(path)
    return written


def emit_outputs(aggregates: Sequence[AggregateCell],
                 fits: Optional[FitResult], output_dir, sigma2: float = 1.0,
                 variant: str = LAST_ITERATE_VARIANT,
                 plots: bool = False) -> list[Path]:
    """Write aggregate.csv, fit.json when a fit is given, and optional plots."""
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        agg_path = out_dir / "aggregate.csv"
        write_aggregate_csv(aggregates, agg_path)
        written.append(agg_path)
        if fits is not None:
            fit_path = out_dir / "fit.json"
            fit_path.write_text(json.dumps(fits.as_dict(), indent=2))
            written.append(fit_path)
        if plots:
            written.extend(plot_aggregates(aggregates, out_dir, sigma2,
                                           variant, fits))
    except OSError as exc:
        raise OSError(f"failed writing outputs under {out_dir}: {exc}") from exc
    return written
