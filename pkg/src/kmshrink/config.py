"""TOML experiment configuration: one file describes one CLI run.

Schema (all sections optional unless a subcommand needs them):

    [experiment]
    kernel = "median-rbf"        # or "linear" / "poly2" / "poly3" / "rbf"
    sigma2 = 1.0                 # required iff kernel = "rbf"
    n = 10
    replicates = 100
    master_seed = 0
    baseline = "KME"             # defaults to the first plain-mean estimator

    [experiment.generator]       # exactly one of generator / mixture
    d = 30
    # n_components, mean_range, wishart_scale, wishart_df, noise_var, pi, seed

    [experiment.mixture]
    noise_var = 0.0
    [[experiment.mixture.components]]
    pi = 1.0
    theta = [0.0]
    sigma = 1.0                  # scalar (isotropic) or full matrix

    [[experiment.estimators]]    # defaults to kme, b-kmse, r-kmse, s-kmse
    kind = "s-kmse"
    # label, lam, lam_scale_gamma0, grid, alpha, bound_fraction, positive_part

    [sweep]                      # risk-sweep subcommand
    axis = "n"
    values = [10, 40, 160]

    [tradeoff]                   # tradeoff subcommand
    fractions = [0.0, 0.5, 1.0]
    positive_part = false

    [improvement_grid]           # improvement-grid subcommand
    ns = [10]
    ds = [30]
    kernels = ["median-rbf"]
    n_distributions = 30

    [loocv_check]                # loocv-check subcommand
    instances = 20
    n_range = [4, 12]
    kernels = ["rbf"]
    lambda_range = [1e-3, 10.0]
    seed = 0

    [parzen]                     # parzen subcommand
    data = "dataset.csv"         # relative to the config file
    label_column = "label"
    # test_fraction, splits, folds, sigma_grid_points, sigma_range,
    # share_bandwidth, estimators (list of kind strings)

Unknown keys anywhere are rejected with a line-anchored message.
Shrink targets beyond the zero function are API-only; config files
cannot express an f_star expansion.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np

from .errors import ConfigError
from .estimators import EstimatorSpec
from .harness import DEFAULT_ESTIMATORS, MEDIAN_RBF, ExperimentConfig
from .kernels import KernelFamily, KernelSpec
from .moments import GaussianMixture
from .synthgen import GeneratorConfig

_TOP_KEYS = {"experiment", "sweep", "tradeoff", "improvement_grid", "loocv_check", "parzen"}
_EXPERIMENT_KEYS = {"kernel", "sigma2", "n", "replicates", "master_seed", "baseline",
                    "generator", "mixture", "estimators"}
_GENERATOR_KEYS = {"d", "n_components", "mean_range", "wishart_scale", "wishart_df",
                   "noise_var", "pi", "seed"}
_MIXTURE_KEYS = {"noise_var", "components"}
_COMPONENT_KEYS = {"pi", "theta", "sigma"}
_ESTIMATOR_KEYS = {"kind", "label", "lam", "lam_scale_gamma0", "grid", "alpha",
                   "bound_fraction", "positive_part"}
_SWEEP_KEYS = {"axis", "values"}
_TRADEOFF_KEYS = {"fractions", "positive_part"}
_GRID_KEYS = {"ns", "ds", "kernels", "n_distributions"}
_LOOCV_KEYS = {"instances", "n_range", "kernels", "lambda_range", "seed"}
_PARZEN_KEYS = {"data", "label_column", "test_fraction", "splits", "folds",
                "sigma_grid_points", "sigma_range", "share_bandwidth", "estimators"}

_PLAIN_KERNELS = {
    "linear": KernelFamily.LINEAR,
    "poly2": KernelFamily.POLY2,
    "poly3": KernelFamily.POLY3,
}


@dataclass(frozen=True)
class SweepSettings:
    axis: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class TradeoffSettings:
    fractions: tuple[float, ...]
    positive_part: bool = False


@dataclass(frozen=True)
class GridSettings:
    ns: tuple[int, ...]
    ds: tuple[int, ...]
    kernels: tuple
    n_distributions: int


@dataclass(frozen=True)
class LoocvCheckSettings:
    instances: int = 20
    n_range: tuple[int, int] = (4, 12)
    kernels: tuple = ("rbf",)
    lambda_range: tuple[float, float] = (1e-3, 10.0)
    seed: int = 0


@dataclass(frozen=True)
class ParzenSettings:
    data: Path
    label_column: str
    test_fraction: float = 0.3
    splits: int = 100
    folds: int = 5
    sigma_grid_points: int = 20
    sigma_range: tuple[float, float] = (0.1, 2.0)
    share_bandwidth: bool = False
    estimators: tuple[EstimatorSpec, ...] = DEFAULT_ESTIMATORS


@dataclass(frozen=True)
class LoadedConfig:
    path: Path
    source: str
    experiment: ExperimentConfig | None
    sweep: SweepSettings | None
    tradeoff: TradeoffSettings | None
    improvement_grid: GridSettings | None
    loocv_check: LoocvCheckSettings | None
    parzen: ParzenSettings | None


def _line_of(source: str, key: str) -> str:
    """Best-effort 1-based line anchor for a key in the TOML source."""
    pattern = re.compile(rf'^\s*(?:"{re.escape(key)}"|\'{re.escape(key)}\'|'
                         rf'{re.escape(key)})\s*[=.\]]', re.MULTILINE)
    match = pattern.search(source)
    if match is None:
        return ""
    return str(source.count("\n", 0, match.start()) + 1)


def _reject_unknown(table: dict, allowed: set, section: str, source: str, path) -> None:
    for key in table:
        if key not in allowed:
            line = _line_of(source, key)
            where = f"{path}:{line}" if line else str(path)
            raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")


def _require(table: dict, key: str, section: str, path) -> object:
    if key not in table:
        raise ConfigError(f"{path}: [{section}] is missing required key {key!r}")
    return table[key]


def _kernel_from_name(name, sigma2, where: str, path):
    if not isinstance(name, str):
        raise ConfigError(f"{path}: {where} must be a string kernel name")
    if name == MEDIAN_RBF:
        if sigma2 is not None:
            raise ConfigError(f"{path}: sigma2 is meaningless with kernel {MEDIAN_RBF!r}")
        return MEDIAN_RBF
    if name in _PLAIN_KERNELS:
        if sigma2 is not None:
            raise ConfigError(f"{path}: sigma2 is meaningless with kernel {name!r}")
        return KernelSpec(_PLAIN_KERNELS[name])
    if name == "rbf":
        if sigma2 is None:
            raise ConfigError(f"{path}: kernel 'rbf' needs sigma2")
        return KernelSpec(KernelFamily.RBF, sigma2=float(sigma2))
    raise ConfigError(f"{path}: {where} has unknown kernel {name!r}")


def _grid_kernel(value, source: str, path):
    """Kernel entry in a list: a name string or {family, sigma2} table."""
    if isinstance(value, str):
        return _kernel_from_name(value, None, "kernels entry", path)
    if isinstance(value, dict):
        _reject_unknown(value, {"family", "sigma2"}, "kernels entry", source, path)
        return _kernel_from_name(_require(value, "family", "kernels entry", path),
                                 value.get("sigma2"), "kernels entry", path)
    raise ConfigError(f"{path}: kernels entries must be names or family tables")


def _build_estimator(table: dict, source: str, path) -> EstimatorSpec:
    _reject_unknown(table, _ESTIMATOR_KEYS, "experiment.estimators", source, path)
    kind = _require(table, "kind", "experiment.estimators", path)
    try:
        return EstimatorSpec(
            kind=kind,
            label=table.get("label"),
            lam=None if "lam" not in table else float(table["lam"]),
            lam_scale_gamma0=bool(table.get("lam_scale_gamma0", False)),
            grid=None if "grid" not in table else tuple(float(v) for v in table["grid"]),
            alpha=None if "alpha" not in table else float(table["alpha"]),
            bound_fraction=(None if "bound_fraction" not in table
                            else float(table["bound_fraction"])),
            positive_part=bool(table.get("positive_part", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: bad estimator table: {exc}") from exc


def _build_mixture(table: dict, source: str, path) -> GaussianMixture:
    _reject_unknown(table, _MIXTURE_KEYS, "experiment.mixture", source, path)
    components = _require(table, "components", "experiment.mixture", path)
    if not components:
        raise ConfigError(f"{path}: experiment.mixture needs at least one component")
    weights, means, covs = [], [], []
    for comp in components:
        _reject_unknown(comp, _COMPONENT_KEYS, "experiment.mixture.components",
                        source, path)
        weights.append(float(_require(comp, "pi", "mixture component", path)))
        theta = np.atleast_1d(np.asarray(
            _require(comp, "theta", "mixture component", path), dtype=np.float64))
        means.append(theta)
        sigma = _require(comp, "sigma", "mixture component", path)
        if isinstance(sigma, (int, float)):
            covs.append(float(sigma) * np.eye(theta.shape[0]))
        else:
            covs.append(np.asarray(sigma, dtype=np.float64))
    try:
        return GaussianMixture(np.array(weights), np.array(means), np.array(covs),
                               noise_var=float(table.get("noise_var", 0.0)))
    except ValueError as exc:
        raise ConfigError(f"{path}: bad mixture: {exc}") from exc


def _build_generator(table: dict, source: str, path) -> GeneratorConfig:
    _reject_unknown(table, _GENERATOR_KEYS, "experiment.generator", source, path)
    kwargs = {"d": int(_require(table, "d", "experiment.generator", path))}
    if "n_components" in table:
        kwargs["n_components"] = int(table["n_components"])
    if "mean_range" in table:
        lo, hi = table["mean_range"]
        kwargs["mean_range"] = (float(lo), float(hi))
    if "wishart_scale" in table:
        kwargs["wishart_scale"] = float(table["wishart_scale"])
    if "wishart_df" in table:
        kwargs["wishart_df"] = int(table["wishart_df"])
    if "noise_var" in table:
        kwargs["noise_var"] = float(table["noise_var"])
    if "pi" in table:
        kwargs["pi"] = tuple(float(p) for p in table["pi"])
    if "seed" in table:
        kwargs["seed"] = int(table["seed"])
    try:
        return GeneratorConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: bad generator: {exc}") from exc


def _build_experiment(table: dict, source: str, path) -> ExperimentConfig:
    _reject_unknown(table, _EXPERIMENT_KEYS, "experiment", source, path)
    kernel = _kernel_from_name(table.get("kernel", MEDIAN_RBF), table.get("sigma2"),
                               "experiment.kernel", path)
    generator = None
    mixture = None
    if "generator" in table:
        generator = _build_generator(table["generator"], source, path)
    if "mixture" in table:
        mixture = _build_mixture(table["mixture"], source, path)
    estimators = DEFAULT_ESTIMATORS
    if "estimators" in table:
        estimators = tuple(_build_estimator(t, source, path)
                           for t in table["estimators"])
    try:
        return ExperimentConfig(
            kernel=kernel,
            estimators=estimators,
            n=int(table.get("n", 10)),
            replicates=int(table.get("replicates", 100)),
            generator=generator,
            mixture=mixture,
            master_seed=int(table.get("master_seed", 0)),
            baseline=table.get("baseline"),
        )
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _build_sweep(table: dict, source: str, path) -> SweepSettings:
    _reject_unknown(table, _SWEEP_KEYS, "sweep", source, path)
    axis = _require(table, "axis", "sweep", path)
    values = tuple(float(v) for v in _require(table, "values", "sweep", path))
    if not values:
        raise ConfigError(f"{path}: sweep.values must be non-empty")
    return SweepSettings(axis=axis, values=values)


def _build_tradeoff(table: dict, source: str, path) -> TradeoffSettings:
    _reject_unknown(table, _TRADEOFF_KEYS, "tradeoff", source, path)
    fractions = tuple(float(v) for v in _require(table, "fractions", "tradeoff", path))
    if not fractions:
        raise ConfigError(f"{path}: tradeoff.fractions must be non-empty")
    for f in fractions:
        if not (0.0 <= f <= 1.0):
            raise ConfigError(f"{path}: tradeoff fractions must be in [0, 1], got {f}")
    return TradeoffSettings(fractions, bool(table.get("positive_part", False)))


def _build_grid(table: dict, source: str, path) -> GridSettings:
    _reject_unknown(table, _GRID_KEYS, "improvement_grid", source, path)
    ns = tuple(int(v) for v in _require(table, "ns", "improvement_grid", path))
    ds = tuple(int(v) for v in _require(table, "ds", "improvement_grid", path))
    kernels = tuple(_grid_kernel(v, source, path)
                    for v in table.get("kernels", [MEDIAN_RBF]))
    n_distributions = int(table.get("n_distributions", 30))
    if not ns or not ds or not kernels:
        raise ConfigError(f"{path}: improvement_grid lists must be non-empty")
    if n_distributions < 1:
        raise ConfigError(f"{path}: n_distributions must be >= 1")
    return GridSettings(ns, ds, kernels, n_distributions)


def _build_loocv(table: dict, source: str, path) -> LoocvCheckSettings:
    _reject_unknown(table, _LOOCV_KEYS, "loocv_check", source, path)
    kwargs = {}
    if "instances" in table:
        kwargs["instances"] = int(table["instances"])
    if "n_range" in table:
        lo, hi = table["n_range"]
        kwargs["n_range"] = (int(lo), int(hi))
    if "kernels" in table:
        kwargs["kernels"] = tuple(table["kernels"])
    if "lambda_range" in table:
        lo, hi = table["lambda_range"]
        kwargs["lambda_range"] = (float(lo), float(hi))
    if "seed" in table:
        kwargs["seed"] = int(table["seed"])
    settings = LoocvCheckSettings(**kwargs)
    if settings.instances < 1:
        raise ConfigError(f"{path}: loocv_check.instances must be >= 1")
    if not (2 <= settings.n_range[0] <= settings.n_range[1]):
        raise ConfigError(f"{path}: loocv_check.n_range must be increasing with lo >= 2")
    if not (0 < settings.lambda_range[0] <= settings.lambda_range[1]):
        raise ConfigError(f"{path}: loocv_check.lambda_range must be positive increasing")
    for name in settings.kernels:
        if name != "rbf" and name not in _PLAIN_KERNELS:
            raise ConfigError(f"{path}: loocv_check kernel {name!r} unknown")
    return settings


def _build_parzen(table: dict, source: str, path, base_dir: Path) -> ParzenSettings:
    _reject_unknown(table, _PARZEN_KEYS, "parzen", source, path)
    data = Path(str(_require(table, "data", "parzen", path)))
    if not data.is_absolute():
        data = base_dir / data
    kwargs = {
        "data": data,
        "label_column": str(_require(table, "label_column", "parzen", path)),
    }
    if "test_fraction" in table:
        kwargs["test_fraction"] = float(table["test_fraction"])
    if "splits" in table:
        kwargs["splits"] = int(table["splits"])
    if "folds" in table:
        kwargs["folds"] = int(table["folds"])
    if "sigma_grid_points" in table:
        kwargs["sigma_grid_points"] = int(table["sigma_grid_points"])
    if "sigma_range" in table:
        lo, hi = table["sigma_range"]
        kwargs["sigma_range"] = (float(lo), float(hi))
    if "share_bandwidth" in table:
        kwargs["share_bandwidth"] = bool(table["share_bandwidth"])
    if "estimators" in table:
        kwargs["estimators"] = tuple(
            EstimatorSpec(kind=str(kind)) for kind in table["estimators"])
    settings = ParzenSettings(**kwargs)
    if not (0.0 < settings.test_fraction < 1.0):
        raise ConfigError(f"{path}: parzen.test_fraction must be in (0, 1)")
    if settings.splits < 1 or settings.folds < 2:
        raise ConfigError(f"{path}: parzen needs splits >= 1 and folds >= 2")
    if settings.sigma_grid_points < 1:
        raise ConfigError(f"{path}: parzen.sigma_grid_points must be >= 1")
    if not (0 < settings.sigma_range[0] <= settings.sigma_range[1]):
        raise ConfigError(f"{path}: parzen.sigma_range must be positive increasing")
    return settings


def load_config(path) -> LoadedConfig:
    """Parse and validate a TOML run configuration."""
    path = Path(path)
    try:
        source = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    try:
        data = tomllib.loads(source)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML syntax error: {exc}") from exc
    _reject_unknown(data, _TOP_KEYS, "top level", source, path)
    experiment = None
    if "experiment" in data:
        experiment = _build_experiment(data["experiment"], source, path)
    return LoadedConfig(
        path=path,
        source=source,
        experiment=experiment,
        sweep=_build_sweep(data["sweep"], source, path) if "sweep" in data else None,
        tradeoff=(_build_tradeoff(data["tradeoff"], source, path)
                  if "tradeoff" in data else None),
        improvement_grid=(_build_grid(data["improvement_grid"], source, path)
                          if "improvement_grid" in data else None),
        loocv_check=(_build_loocv(data["loocv_check"], source, path)
                     if "loocv_check" in data else None),
        parzen=(_build_parzen(data["parzen"], source, path, path.parent)
                if "parzen" in data else None),
    )
