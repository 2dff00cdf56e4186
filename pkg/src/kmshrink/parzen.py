"""Parzen window classification on top of shrinkage-estimated class means.

Each class is summarized by a kernel mean estimate (plain or shrunk);
a point is assigned by comparing mean-function values with a bias of
half the squared-norm difference, all pairs voting in the multiclass
case. Utilities cover CSV ingestion, feature normalization, stratified
bandwidth cross-validation, and paired train/test comparisons across
estimators.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ClassSizeError, DataError
from .estimators import EstimatorSpec, FunctionExpansion, run_estimator
from .kernels import Array, KernelFamily, KernelSpec, cross_gram, gram_matrix
from .synthgen import derive_seed, rng

PARZEN_COLUMNS = ("estimator", "error_rate", "n_test", "seed")

_DEFAULT_ESTIMATORS = (
    EstimatorSpec("kme"),
    EstimatorSpec("b-kmse"),
    EstimatorSpec("r-kmse"),
    EstimatorSpec("s-kmse"),
)


@dataclass(frozen=True)
class Normalization:
    """Per-feature affine transform fitted on training data.

    kept lists the retained column indices; constant columns (stddev
    below a relative floor) are recorded in dropped and removed.
    """

    mean: Array
    std: Array
    kept: tuple[int, ...]
    dropped: tuple[int, ...]

    @classmethod
    def fit(cls, features) -> "Normalization":
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got ndim={features.ndim}")
        mean = features.mean(axis=0)
        std = features.std(axis=0, ddof=0)
        keep = std > 1e-12 * np.maximum(1.0, np.abs(mean))
        kept = tuple(int(j) for j in np.flatnonzero(keep))
        dropped = tuple(int(j) for j in np.flatnonzero(~keep))
        return cls(mean[keep], std[keep], kept, dropped)

    def apply(self, features) -> Array:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return (features[:, list(self.kept)] - self.mean) / self.std


@dataclass(frozen=True)
class LabeledDataset:
    """Normalized features with class labels.

    Built through fit(), features are the normalized training matrix
    (zero mean, unit variance per kept column); subset() carries the
    same normalization so folds and splits stay consistent.
    """

    features: Array
    labels: Array
    normalization: Normalization

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got ndim={features.ndim}")
        if labels.shape != (features.shape[0],):
            raise ValueError(
                f"labels must be 1-D with one entry per row, "
                f"got {labels.shape} for {features.shape[0]} rows"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @classmethod
    def fit(cls, features, labels) -> "LabeledDataset":
        norm = Normalization.fit(features)
        return cls(norm.apply(features), np.asarray(labels), norm)

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices)
        return LabeledDataset(self.features[indices], self.labels[indices],
                              self.normalization)

    def classes(self) -> Array:
        return np.unique(self.labels)


@dataclass(frozen=True)
class ParzenModel:
    """Per-class kernel mean estimates with cached squared norms.

    classes are sorted; expansions[i] / sqnorms[i] belong to classes[i].
    Inputs to predict must already be normalized with `normalization`.
    """

    classes: tuple
    expansions: tuple[FunctionExpansion, ...]
    sqnorms: tuple[float, ...]
    spec: KernelSpec
    normalization: Normalization


def parzen_train(data: LabeledDataset, spec: KernelSpec,
                 estimator: EstimatorSpec | None = None) -> ParzenModel:
    """Estimate one kernel mean per class with the chosen estimator.

    Shrinkage estimators need at least 2 points per class; the plain
    mean accepts singletons. Fewer than 2 classes is always an error.
    """
    est = estimator if estimator is not None else EstimatorSpec("kme")
    classes = data.classes()
    if classes.shape[0] < 2:
        raise ClassSizeError(f"need at least 2 classes, got {classes.shape[0]}")
    expansions = []
    sqnorms = []
    for cls_id in classes:
        rows = data.features[data.labels == cls_id]
        if rows.shape[0] < 2 and est.kind != "kme":
            raise ClassSizeError(
                f"class {cls_id!r} has {rows.shape[0]} point(s); "
                f"{est.resolved_label} needs at least 2"
            )
        K = gram_matrix(spec, rows)
        out = run_estimator(est, K, rows)
        exp = out.expansion
        if exp.points is rows:
            sq = float(exp.weights @ K.entries @ exp.weights)
        else:
            sq = float(exp.weights @ gram_matrix(spec, exp.points).entries @ exp.weights)
        expansions.append(exp)
        sqnorms.append(sq)
    return ParzenModel(tuple(classes.tolist()), tuple(expansions), tuple(sqnorms),
                       spec, data.normalization)


def parzen_predict(model: ParzenModel, z):
    """Classify normalized point(s) by pairwise mean comparison.

    For classes (i, j), i before j in sorted order, the decision value
    is mu_i(z) - mu_j(z) + (|mu_j|^2 - |mu_i|^2) / 2; positive votes i,
    negative votes j, an exact tie votes the earlier class. The majority
    wins, ties again resolving to the earliest class. A single d-vector
    returns a scalar label, a q x d batch returns a length-q array.
    """
    z = np.asarray(z, dtype=np.float64)
    scalar = z.ndim == 1
    Z = np.atleast_2d(z)
    n_classes = len(model.classes)
    mean_values = np.empty((Z.shape[0], n_classes))
    for i, exp in enumerate(model.expansions):
        mean_values[:, i] = exp.weights @ cross_gram(model.spec, exp.points, Z)
    votes = np.zeros((Z.shape[0], n_classes), dtype=np.int64)
    for i in range(n_classes):
        for j in range(i + 1, n_classes):
            g = mean_values[:, i] - mean_values[:, j] \
                + 0.5 * (model.sqnorms[j] - model.sqnorms[i])
            votes[g >= 0.0, i] += 1
            votes[g < 0.0, j] += 1
    winners = np.argmax(votes, axis=1)
    labels = np.array(model.classes, dtype=object)[winners]
    return labels[0] if scalar else labels


def stratified_folds(labels, folds: int, seed: int) -> Array:
    """Fold index per row, class proportions preserved within one sample.

    Each class's rows are shuffled with a seed-derived stream, then
    dealt round-robin across folds.
    """
    labels = np.asarray(labels)
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    assignment = np.empty(labels.shape[0], dtype=np.int64)
    for c, cls_id in enumerate(np.unique(labels)):
        idx = np.flatnonzero(labels == cls_id)
        perm = rng(derive_seed(seed, c)).permutation(idx)
        assignment[perm] = np.arange(perm.shape[0]) % folds
    return assignment


def default_sigma_grid(num: int = 20) -> Array:
    """Uniform bandwidth (sigma, not sigma squared) grid on [0.1, 2]."""
    return np.linspace(0.1, 2.0, num)


def cv_bandwidth(data: LabeledDataset, grid=None, folds: int = 5,
                 estimator: EstimatorSpec | None = None, seed: int = 0) -> float:
    """Pick the RBF bandwidth sigma minimizing mean stratified-fold error.

    grid holds sigma values (the kernel uses sigma squared); ties go to
    the smaller sigma. Folds reuse the dataset's stored normalization.
    """
    grid = default_sigma_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("bandwidth grid is empty")
    if np.any(grid <= 0):
        raise ValueError("bandwidths must be positive")
    grid = np.sort(grid)
    assignment = stratified_folds(data.labels, folds, seed)
    best_sigma = None
    best_error = np.inf
    for sigma in grid:
        spec = KernelSpec(KernelFamily.RBF, sigma2=float(sigma) ** 2)
        fold_errors = []
        for f in range(folds):
            held = assignment == f
            if not np.any(held):
                continue
            model = parzen_train(data.subset(~held), spec, estimator)
            predicted = parzen_predict(model, data.features[held])
            fold_errors.append(float(np.mean(predicted != data.labels[held])))
        error = float(np.mean(fold_errors))
        if error < best_error:
            best_sigma = float(sigma)
            best_error = error
    return best_sigma


def load_csv(path, label_column: str):
    """Read a headered CSV into (features, labels, feature_names).

    Every column except label_column must be numeric; offending rows
    are reported with 1-based file line numbers.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataError(f"{path}: no column named {label_column!r} in header")
        label_idx = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_idx]
        rows = []
        labels = []
        bad_lines = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                bad_lines.append(line_no)
                continue
            try:
                rows.append([float(v) for i, v in enumerate(row) if i != label_idx])
            except ValueError:
                bad_lines.append(line_no)
                continue
            labels.append(row[label_idx])
    if bad_lines:
        shown = ", ".join(str(ln) for ln in bad_lines[:20])
        more = "" if len(bad_lines) <= 20 else f" (+{len(bad_lines) - 20} more)"
        raise DataError(f"{path}: non-numeric or malformed feature rows "
                        f"at line(s) {shown}{more}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), np.array(labels), feature_names


def train_test_split(n: int, test_fraction: float, seed: int):
    """Seeded shuffle split: (train indices, test indices)."""
    if not (0.0 < test_fraction < 1.0):
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    perm = rng(seed).permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    if n_test >= n:
        raise ValueError(f"test_fraction {test_fraction} leaves no training rows")
    return perm[n_test:], perm[:n_test]


def compare_estimators(features, labels, estimators=None, n_splits: int = 100,
                       test_fraction: float = 0.3, folds: int = 5, sigma_grid=None,
                       share_bandwidth: bool = False, master_seed: int = 0,
                       kernel: KernelSpec | None = None) -> list[dict]:
    """Paired error rates over repeated train/test splits.

    Every estimator sees the same splits and the same cross-validation
    folds. kernel = None cross-validates an RBF bandwidth on each
    training split, per estimator, or once with the plain mean when
    share_bandwidth is set; a concrete kernel skips tuning. Rows:
    {estimator, error_rate, n_test, seed}.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    ests = tuple(estimators) if estimators is not None else _DEFAULT_ESTIMATORS
    rows: list[dict] = []
    for split in range(n_splits):
        seed = derive_seed(master_seed, split)
        train_idx, test_idx = train_test_split(features.shape[0], test_fraction, seed)
        train = LabeledDataset.fit(features[train_idx], labels[train_idx])
        test_x = train.normalization.apply(features[test_idx])
        test_y = labels[test_idx]
        fold_seed = derive_seed(seed, 1)
        shared_sigma = None
        if kernel is None and share_bandwidth:
            shared_sigma = cv_bandwidth(train, sigma_grid, folds,
                                        EstimatorSpec("kme"), fold_seed)
        for est in ests:
            if kernel is not None:
                spec = kernel
            elif shared_sigma is not None:
                spec = KernelSpec(KernelFamily.RBF, sigma2=shared_sigma ** 2)
            else:
                sigma = cv_bandwidth(train, sigma_grid, folds, est, fold_seed)
                spec = KernelSpec(KernelFamily.RBF, sigma2=sigma ** 2)
            model = parzen_train(train, spec, est)
            predicted = parzen_predict(model, test_x)
            rows.append({
                "estimator": est.resolved_label,
                "error_rate": float(np.mean(predicted != test_y)),
                "n_test": int(test_idx.shape[0]),
                "seed": int(seed),
            })
    return rows


def write_parzen_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PARZEN_COLUMNS)
        for row in rows:
            writer.writerow([row["estimator"], repr(float(row["error_rate"])),
                             str(int(row["n_test"])), str(int(row["seed"]))])
