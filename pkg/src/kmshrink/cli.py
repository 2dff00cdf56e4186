"""Command-line front end: config-file driven experiment runs.

Subcommands
    risk-sweep        sweep n / d / lambda / alpha and record losses
    tradeoff          shrinkage intensity vs improvement probability
    improvement-grid  percentage improvement over random ground truths
                      on an (n, d) x kernel grid
    loocv-check       closed-form vs naive leave-one-out score report
    parzen            classifier error-rate comparison on a CSV dataset

Every run reads one TOML config (--config), writes CSVs plus a
run_manifest.json under --out and nowhere else, and never modifies the
config. --workers only affects wall time; --seed overrides the master
seed. KMSE_LOG sets log verbosity. Exit codes: 0 success, 1 config
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import LoadedConfig, load_config
from .errors import ConfigError, KmshrinkError
from .estimators import (
    EstimatorSpec,
    s_kmse_loocv_naive,
    s_kmse_loocv_score,
)
from .harness import (
    ExperimentConfig,
    MEDIAN_RBF,
    estimate_risk,
    improvement_over_distributions,
    percentage_improvement,
    probability_of_improvement,
    summarize,
    sweep,
    write_records_csv,
    write_summary_csv,
    write_sweep_records_csv,
    write_sweep_summary_csv,
)
from .kernels import KernelFamily, KernelSpec, gram_matrix
from .parzen import compare_estimators, load_csv, write_parzen_csv
from .synthgen import derive_seed, rng

_LOG = logging.getLogger("kmshrink")

_SUBCOMMANDS = ("risk-sweep", "tradeoff", "improvement-grid", "loocv-check", "parzen")


@dataclass(frozen=True)
class Invocation:
    subcommand: str
    config_path: Path
    output_dir: Path
    workers: int
    seed: int | None = None


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path: Path, header, rows) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])


def _kernel_name(kernel) -> str:
    if isinstance(kernel, str):
        return kernel
    if kernel.family is KernelFamily.RBF:
        return f"rbf:{kernel.sigma2!r}"
    return kernel.family.value


def _experiment_or_die(loaded: LoadedConfig, subcommand: str) -> ExperimentConfig:
    if loaded.experiment is None:
        raise ConfigError(f"{loaded.path}: {subcommand} needs an [experiment] section")
    return loaded.experiment


def _section_or_die(loaded: LoadedConfig, attr: str, subcommand: str):
    value = getattr(loaded, attr)
    if value is None:
        section = attr
        raise ConfigError(f"{loaded.path}: {subcommand} needs a [{section}] section")
    return value


def _run_risk_sweep(loaded: LoadedConfig, inv: Invocation) -> None:
    exp = _experiment_or_die(loaded, "risk-sweep")
    settings = _section_or_die(loaded, "sweep", "risk-sweep")
    items = sweep(exp, settings.axis, settings.values, workers=inv.workers)
    write_sweep_records_csv(inv.output_dir / "sweep_records.csv", settings.axis, items)
    write_sweep_summary_csv(inv.output_dir / "sweep_summary.csv", settings.axis, items)
    _LOG.info("risk-sweep over %s: %d values", settings.axis, len(items))


def _run_tradeoff(loaded: LoadedConfig, inv: Invocation) -> None:
    exp = _experiment_or_die(loaded, "tradeoff")
    settings = _section_or_die(loaded, "tradeoff", "tradeoff")
    estimators = [EstimatorSpec("kme", label="KME")]
    fraction_of = {}
    for f in settings.fractions:
        label = f"SHRINK@{f!r}"
        estimators.append(EstimatorSpec("shrink", label=label, bound_fraction=f,
                                        positive_part=settings.positive_part))
        fraction_of[label] = f
    cfg = dataclasses.replace(exp, estimators=tuple(estimators), baseline="KME")
    result = estimate_risk(cfg, workers=inv.workers)
    prob = probability_of_improvement(result)
    pct = percentage_improvement(result)
    rows = []
    for s in summarize(result):
        rows.append([fraction_of.get(s.estimator), s.estimator, s.mean_loss, s.se,
                     prob.get(s.estimator), pct.get(s.estimator), s.n_failed])
    _write_rows(inv.output_dir / "tradeoff.csv",
                ("fraction", "estimator", "mean_loss", "se", "prob_improve",
                 "pct_improve", "n_failed"),
                rows)


def _run_improvement_grid(loaded: LoadedConfig, inv: Invocation) -> None:
    exp = _experiment_or_die(loaded, "improvement-grid")
    settings = _section_or_die(loaded, "improvement_grid", "improvement-grid")
    if exp.generator is None:
        raise ConfigError(f"{loaded.path}: improvement-grid needs [experiment.generator]")
    detail = []
    summary = []
    for kernel in settings.kernels:
        for n in settings.ns:
            for d in settings.ds:
                cfg = dataclasses.replace(
                    exp, kernel=kernel, n=n,
                    generator=dataclasses.replace(exp.generator, d=d))
                rows = improvement_over_distributions(cfg, settings.n_distributions,
                                                      workers=inv.workers)
                by_label: dict[str, list[float]] = {}
                for row in rows:
                    detail.append([_kernel_name(kernel), n, d, row["distribution"],
                                   row["estimator"], row["pct_improve"]])
                    if row["pct_improve"] is not None:
                        by_label.setdefault(row["estimator"], []).append(row["pct_improve"])
                for label in cfg.labels:
                    values = by_label.get(label, [])
                    median = float(np.median(values)) if values else None
                    summary.append([_kernel_name(kernel), n, d, label, median,
                                    len(values)])
    _write_rows(inv.output_dir / "grid_detail.csv",
                ("kernel", "n", "d", "distribution", "estimator", "pct_improve"),
                detail)
    _write_rows(inv.output_dir / "grid_summary.csv",
                ("kernel", "n", "d", "estimator", "median_pct_improve",
                 "n_distributions"),
                summary)


def _run_loocv_check(loaded: LoadedConfig, inv: Invocation) -> None:
    settings = _section_or_die(loaded, "loocv_check", "loocv-check")
    seed = inv.seed if inv.seed is not None else settings.seed
    rows = []
    worst = 0.0
    for i in range(settings.instances):
        g = rng(derive_seed(seed, i))
        n = int(g.integers(settings.n_range[0], settings.n_range[1] + 1))
        d = int(g.integers(1, 4))
        name = settings.kernels[i % len(settings.kernels)]
        spec = (KernelSpec(KernelFamily.RBF, sigma2=1.0) if name == "rbf"
                else KernelSpec(name))
        lo, hi = settings.lambda_range
        lam = float(np.exp(g.uniform(np.log(lo), np.log(hi))))
        K = gram_matrix(spec, g.standard_normal((n, d)))
        try:
            closed = s_kmse_loocv_score(K, lam)
            oracle = s_kmse_loocv_naive(K, lam)
            rel = abs(closed - oracle) / max(abs(oracle), 1e-300)
            worst = max(worst, rel)
            rows.append([i, n, name, lam, closed, oracle, rel])
        except KmshrinkError as exc:
            _LOG.warning("instance %d failed: %s", i, exc)
            rows.append([i, n, name, lam, None, None, None])
    _write_rows(inv.output_dir / "loocv_check.csv",
                ("instance", "n", "kernel", "lambda", "closed_form", "oracle",
                 "rel_err"),
                rows)
    _LOG.info("loocv-check worst relative error: %.3e", worst)


def _run_parzen(loaded: LoadedConfig, inv: Invocation) -> None:
    settings = _section_or_die(loaded, "parzen", "parzen")
    features, labels, _ = load_csv(settings.data, settings.label_column)
    if inv.seed is not None:
        master_seed = inv.seed
    elif loaded.experiment is not None:
        master_seed = loaded.experiment.master_seed
    else:
        master_seed = 0
    sigma_grid = np.linspace(settings.sigma_range[0], settings.sigma_range[1],
                             settings.sigma_grid_points)
    rows = compare_estimators(
        features, labels,
        estimators=settings.estimators,
        n_splits=settings.splits,
        test_fraction=settings.test_fraction,
        folds=settings.folds,
        sigma_grid=sigma_grid,
        share_bandwidth=settings.share_bandwidth,
        master_seed=master_seed,
    )
    write_parzen_csv(inv.output_dir / "parzen.csv", rows)


def _write_manifest(loaded: LoadedConfig, inv: Invocation, master_seed) -> None:
    manifest = {
        "subcommand": inv.subcommand,
        "config_sha256": hashlib.sha256(loaded.source.encode()).hexdigest(),
        "config_text": loaded.source,
        "master_seed": master_seed,
        "workers": inv.workers,
        "versions": {
            "package": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
    }
    with open(inv.output_dir / "run_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


_RUNNERS = {
    "risk-sweep": _run_risk_sweep,
    "tradeoff": _run_tradeoff,
    "improvement-grid": _run_improvement_grid,
    "loocv-check": _run_loocv_check,
    "parzen": _run_parzen,
}


def run(inv: Invocation) -> int:
    try:
        loaded = load_config(inv.config_path)
        if inv.seed is not None and loaded.experiment is not None:
            loaded = dataclasses.replace(
                loaded,
                experiment=dataclasses.replace(loaded.experiment,
                                               master_seed=inv.seed))
        inv.output_dir.mkdir(parents=True, exist_ok=True)
        _RUNNERS[inv.subcommand](loaded, inv)
        master_seed = None
        if inv.seed is not None:
            master_seed = inv.seed
        elif loaded.experiment is not None:
            master_seed = loaded.experiment.master_seed
        elif loaded.loocv_check is not None:
            master_seed = loaded.loocv_check.seed
        _write_manifest(loaded, inv, master_seed)
        return 0
    except ConfigError as exc:
        _LOG.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary maps failures to exit 2
        _LOG.debug("traceback", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kmshrink",
        description="Shrinkage estimation of kernel means: experiments and reports.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path,
                       help="TOML run configuration")
        p.add_argument("--out", required=True, type=Path,
                       help="output directory (created if absent)")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="replicate parallelism; never changes results")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
    return parser


def main(argv=None) -> int:
    level_name = os.environ.get("KMSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level_name, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    inv = Invocation(
        subcommand=args.subcommand,
        config_path=args.config,
        output_dir=args.out,
        workers=max(1, args.workers),
        seed=args.seed,
    )
    return run(inv)


if __name__ == "__main__":
    sys.exit(main())
