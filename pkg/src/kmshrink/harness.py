"""Experiment orchestration: risk estimation over replicates and sweeps.

One experiment draws m independent samples from a ground-truth mixture,
runs every configured estimator on each sample (all estimators see the
same sample and the same Gram matrix), scores each estimate against the
exact mean of the mixture, and aggregates.

Determinism contract: replicate r always uses seed derive_seed(master,
r), so serial and parallel runs produce identical records, and the CSV
output is byte-stable except for the runtime_ms column.
"""

from __future__ import annotations

import csv
import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, KmshrinkError
from .estimators import EstimatorSpec, run_estimator
from .kernels import KernelFamily, KernelSpec, gram_matrix, median_heuristic
from .moments import (
    GaussianMixture,
    expected_kernel_at,
    expected_kernel_double,
)
from .synthgen import GeneratorConfig, derive_seed, draw_mixture, sample

# Kernel placeholder: resolve an RBF bandwidth from each replicate's own
# sample via the median heuristic.
MEDIAN_RBF = "median-rbf"

RECORD_COLUMNS = ("replicate", "estimator", "alpha", "lambda", "loss", "runtime_ms")
SUMMARY_COLUMNS = ("estimator", "mean_loss", "se", "prob_improve", "pct_improve", "n_failed")

DEFAULT_ESTIMATORS = (
    EstimatorSpec("kme"),
    EstimatorSpec("b-kmse"),
    EstimatorSpec("r-kmse"),
    EstimatorSpec("s-kmse"),
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one risk experiment.

    kernel is either a concrete KernelSpec or the string "median-rbf",
    which resolves an RBF bandwidth per replicate from that replicate's
    sample. Exactly one of generator / mixture fixes the ground truth:
    a recipe to draw it from, or the distribution itself.
    """

    kernel: KernelSpec | str
    estimators: tuple[EstimatorSpec, ...] = DEFAULT_ESTIMATORS
    n: int = 10
    replicates: int = 100
    generator: GeneratorConfig | None = None
    mixture: GaussianMixture | None = None
    master_seed: int = 0
    baseline: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if isinstance(self.kernel, str):
            if self.kernel != MEDIAN_RBF:
                raise ConfigError(f"unknown kernel name {self.kernel!r}; "
                                  f"expected {MEDIAN_RBF!r} or a KernelSpec")
        elif not isinstance(self.kernel, KernelSpec):
            raise ConfigError(f"kernel must be a KernelSpec or {MEDIAN_RBF!r}")
        if not self.estimators:
            raise ConfigError("estimators must be non-empty")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        min_n = 2 if any(e.kind != "kme" for e in self.estimators) else 1
        if self.n < min_n:
            raise ConfigError(f"n must be >= {min_n} for this estimator set, got {self.n}")
        if (self.generator is None) == (self.mixture is None):
            raise ConfigError("exactly one of generator / mixture must be given")
        labels = [e.resolved_label for e in self.estimators]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"estimator labels must be unique, got {labels}")
        if self.baseline is not None and self.baseline not in labels:
            raise ConfigError(f"baseline {self.baseline!r} is not an estimator label")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(e.resolved_label for e in self.estimators)

    def baseline_label(self) -> str:
        if self.baseline is not None:
            return self.baseline
        for est in self.estimators:
            if est.kind == "kme":
                return est.resolved_label
        raise ConfigError("no baseline given and no plain mean estimator to default to")


@dataclass(frozen=True)
class ResultRecord:
    """One estimator's scored outcome on one replicate.

    loss is None when the estimator failed its preconditions on that
    sample; error then carries the reason (not written to CSV).
    """

    replicate: int
    estimator: str
    alpha: float | None
    lam: float | None
    loss: float | None
    runtime_ms: float
    error: str | None = None


@dataclass(frozen=True)
class EstimatorSummary:
    estimator: str
    mean_loss: float | None
    se: float | None
    n_ok: int
    n_failed: int


@dataclass(frozen=True)
class RiskResult:
    config: ExperimentConfig
    mixture: GaussianMixture
    records: tuple[ResultRecord, ...]

    def records_for(self, label: str) -> list[ResultRecord]:
        return [r for r in self.records if r.estimator == label]


def resolve_mixture(cfg: ExperimentConfig) -> GaussianMixture:
    return cfg.mixture if cfg.mixture is not None else draw_mixture(cfg.generator)


def _replicate_records(args) -> list[ResultRecord]:
    r, seed, kernel, estimators, mixture, n = args
    X = sample(mixture, n, seed)
    try:
        if isinstance(kernel, str):
            spec = KernelSpec(KernelFamily.RBF, sigma2=median_heuristic(X))
        else:
            spec = kernel
    except KmshrinkError as exc:
        # Bandwidth resolution failed: nothing downstream can run.
        return [ResultRecord(r, est.resolved_label, None, None, None, 0.0, str(exc))
                for est in estimators]
    K = gram_matrix(spec, X)
    mu_at_x = expected_kernel_at(spec, mixture, X)
    mu_sq = expected_kernel_double(spec, mixture)
    records = []
    for est in estimators:
        start = time.perf_counter()
        try:
            out = run_estimator(est, K, X)
            exp = out.expansion
            if exp.points is X:
                # Same points as the sample: reuse the replicate Gram.
                quad = float(exp.weights @ K.entries @ exp.weights)
                cross = float(exp.weights @ mu_at_x)
                loss = max(quad - 2.0 * cross + mu_sq, 0.0)
            else:
                from .moments import true_loss
                loss = true_loss(exp, spec, mixture)
            elapsed = (time.perf_counter() - start) * 1e3
            records.append(ResultRecord(r, est.resolved_label, out.alpha, out.lam,
                                        loss, elapsed))
        except KmshrinkError as exc:
            elapsed = (time.perf_counter() - start) * 1e3
            records.append(ResultRecord(r, est.resolved_label, None, None, None,
                                        elapsed, str(exc)))
    return records


def estimate_risk(cfg: ExperimentConfig, workers: int = 1) -> RiskResult:
    """Run the experiment: m replicates of sample -> Gram -> estimators -> loss.

    workers > 1 runs replicates in separate processes; the merge is in
    replicate order, so results are identical to a serial run.
    """
    mixture = resolve_mixture(cfg)
    payloads = [
        (r, derive_seed(cfg.master_seed, r), cfg.kernel, cfg.estimators, mixture, cfg.n)
        for r in range(cfg.replicates)
    ]
    if workers <= 1:
        chunks = [_replicate_records(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_replicate_records, payloads))
    records = tuple(rec for chunk in chunks for rec in chunk)
    return RiskResult(cfg, mixture, records)


def summarize(result: RiskResult) -> list[EstimatorSummary]:
    """Per-estimator mean loss and standard error over successful replicates."""
    out = []
    for label in result.config.labels:
        losses = np.array([r.loss for r in result.records_for(label) if r.loss is not None])
        n_ok = losses.size
        n_failed = len(result.records_for(label)) - n_ok
        mean = float(losses.mean()) if n_ok else None
        se = float(losses.std(ddof=1) / np.sqrt(n_ok)) if n_ok >= 2 else None
        out.append(EstimatorSummary(label, mean, se, n_ok, n_failed))
    return out


def _as_result(cfg_or_result, workers: int) -> RiskResult:
    if isinstance(cfg_or_result, RiskResult):
        return cfg_or_result
    return estimate_risk(cfg_or_result, workers=workers)


def _paired_losses(result: RiskResult, label: str, baseline: str):
    """Replicate-aligned (loss, baseline loss) over replicates where both ran."""
    base = {r.replicate: r.loss for r in result.records_for(baseline)}
    pairs = [(r.loss, base[r.replicate]) for r in result.records_for(label)
             if r.loss is not None and base.get(r.replicate) is not None]
    return pairs


def probability_of_improvement(cfg_or_result, baseline: str | None = None,
                               workers: int = 1) -> dict[str, float | None]:
    """Fraction of replicates where each estimator strictly beats the baseline.

    Paired per replicate; replicates where either side failed are
    excluded. An estimator with no successful paired replicate maps to
    None.
    """
    result = _as_result(cfg_or_result, workers)
    baseline = baseline or result.config.baseline_label()
    if baseline not in result.config.labels:
        raise ConfigError(f"baseline {baseline!r} is not an estimator label")
    out: dict[str, float | None] = {}
    for label in result.config.labels:
        pairs = _paired_losses(result, label, baseline)
        if not pairs:
            out[label] = None
            continue
        wins = sum(1 for loss, base in pairs if loss < base)
        out[label] = wins / len(pairs)
    return out


def percentage_improvement(cfg_or_result, baseline: str | None = None,
                           workers: int = 1) -> dict[str, float | None]:
    """100 * (baseline mean loss - estimator mean loss) / baseline mean loss.

    Means are over each estimator's own successful replicates. A zero
    (or absent) baseline mean makes the ratio meaningless.
    """
    result = _as_result(cfg_or_result, workers)
    baseline = baseline or result.config.baseline_label()
    summaries = {s.estimator: s for s in summarize(result)}
    if baseline not in summaries:
        raise ConfigError(f"baseline {baseline!r} is not an estimator label")
    base_mean = summaries[baseline].mean_loss
    if base_mean is None or base_mean <= 0.0:
        raise ValueError(f"baseline {baseline!r} mean loss is zero or undefined")
    out: dict[str, float | None] = {}
    for label in result.config.labels:
        mean = summaries[label].mean_loss
        out[label] = None if mean is None else 100.0 * (base_mean - mean) / base_mean
    return out


_SWEEP_AXES = ("alpha", "lambda", "n", "d")


def _with_axis_value(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "n":
        return dataclasses.replace(cfg, n=int(value))
    if axis == "d":
        if cfg.generator is None:
            raise ConfigError("a dimension sweep needs a generator, not a fixed mixture")
        return dataclasses.replace(cfg, generator=dataclasses.replace(cfg.generator,
                                                                      d=int(value)))
    estimators = []
    changed = 0
    for e in cfg.estimators:
        if axis == "alpha" and e.kind == "shrink":
            field = "bound_fraction" if e.bound_fraction is not None else "alpha"
            estimators.append(dataclasses.replace(e, **{field: float(value)}))
            changed += 1
        elif axis == "lambda" and e.kind in ("r-kmse", "s-kmse"):
            estimators.append(dataclasses.replace(e, lam=float(value), grid=None))
            changed += 1
        else:
            estimators.append(e)
    if not changed:
        needs = ("a shrink estimator" if axis == "alpha"
                 else "an r-kmse or s-kmse estimator")
        raise ConfigError(f"a {axis} sweep needs {needs}")
    return dataclasses.replace(cfg, estimators=tuple(estimators))


def sweep(cfg: ExperimentConfig, axis: str, values, workers: int = 1):
    """One estimate_risk per axis value, all under the same master seed.

    axis is one of alpha (shrink intensity, or its bound fraction when
    the estimator uses one), lambda (fixed ridge for r-kmse / s-kmse),
    n (sample size), d (generator dimension). Returns [(value, RiskResult)].
    """
    if axis not in _SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {_SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ConfigError("sweep values must be non-empty")
    return [(v, estimate_risk(_with_axis_value(cfg, axis, v), workers=workers))
            for v in values]


def improvement_over_distributions(cfg: ExperimentConfig, n_distributions: int,
                                   workers: int = 1) -> list[dict]:
    """Percentage improvement per estimator on freshly drawn ground truths.

    Distribution k redraws the mixture with generator seed
    derive_seed(generator.seed, k) and runs replicates under master seed
    derive_seed(master_seed, k). Rows: {distribution, estimator, pct_improve}.
    """
    if cfg.generator is None:
        raise ConfigError("improvement_over_distributions needs a generator config")
    if n_distributions < 1:
        raise ConfigError(f"n_distributions must be >= 1, got {n_distributions}")
    rows = []
    for k in range(n_distributions):
        gen_k = dataclasses.replace(cfg.generator, seed=derive_seed(cfg.generator.seed, k))
        cfg_k = dataclasses.replace(cfg, generator=gen_k,
                                    master_seed=derive_seed(cfg.master_seed, k))
        pct = percentage_improvement(estimate_risk(cfg_k, workers=workers))
        for label, value in pct.items():
            rows.append({"distribution": k, "estimator": label, "pct_improve": value})
    return rows


# ---------------------------------------------------------------------------
# CSV persistence. Floats are written with repr (shortest round trip), empty
# string for absent values; rows are already in deterministic order.
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_records_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow([_fmt(r.replicate), r.estimator, _fmt(r.alpha),
                             _fmt(r.lam), _fmt(r.loss), _fmt(r.runtime_ms)])


def write_summary_csv(path, summaries, prob=None, pct=None) -> None:
    prob = prob or {}
    pct = pct or {}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            writer.writerow([s.estimator, _fmt(s.mean_loss), _fmt(s.se),
                             _fmt(prob.get(s.estimator)), _fmt(pct.get(s.estimator)),
                             _fmt(s.n_failed)])


def write_sweep_records_csv(path, axis: str, items) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("axis", "value") + RECORD_COLUMNS)
        for value, result in items:
            for r in result.records:
                writer.writerow([axis, _fmt(value), _fmt(r.replicate), r.estimator,
                                 _fmt(r.alpha), _fmt(r.lam), _fmt(r.loss),
                                 _fmt(r.runtime_ms)])


def write_sweep_summary_csv(path, axis: str, items) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("axis", "value") + SUMMARY_COLUMNS)
        for value, result in items:
            prob = probability_of_improvement(result)
            pct = percentage_improvement(result)
            for s in summarize(result):
                writer.writerow([axis, _fmt(value), s.estimator, _fmt(s.mean_loss),
                                 _fmt(s.se), _fmt(prob.get(s.estimator)),
                                 _fmt(pct.get(s.estimator)), _fmt(s.n_failed)])
