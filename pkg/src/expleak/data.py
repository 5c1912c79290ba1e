"""Datasets: synthetic blobs, CSV ingestion, and the four-way split protocol.

The split produces the four subsets a shadow-model membership attack needs:
target train/test and shadow train/test, with member/non-member roles.
Members of a model are the samples it was trained on; its test split are
non-members.  Non-member pools can optionally be drawn from a shifted
distribution (feature-mean offset plus additive Gaussian noise, both in
units of the per-feature standard deviation).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CsvFormatError, SplitError
from .seeding import derive_seed

Array = np.ndarray


@dataclass
class Dataset:
    """Feature matrix plus integer labels.

    ``X`` is (N, d) float64 for flat data or (N, C, H, W) for image-like
    data; ``y`` holds labels in [0, num_classes).  Instances are read-only
    after construction by convention and safe to share across threads.
    """

    X: Array
    y: Array
    num_classes: int
    name: str = "dataset"
    distribution: str = "source"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.X) != len(self.y):
            raise ValueError(f"{len(self.X)} rows but {len(self.y)} labels")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def feature_shape(self) -> tuple[int, ...]:
        return self.X.shape[1:]

    def subset(self, indices: Array, name: str | None = None, distribution: str | None = None) -> "Dataset":
        return Dataset(
            self.X[indices],
            self.y[indices],
            self.num_classes,
            name or self.name,
            distribution or self.distribution,
        )


def make_synthetic(
    num_classes: int,
    d: int,
    n: int,
    class_separation: float,
    seed: int,
    image_shape: tuple[int, int, int] | None = None,
) -> Dataset:
    """Gaussian class blobs with unit within-class variance.

    Class means sit at ``class_separation / sqrt(2)`` along distinct axes, so
    every pair of means is exactly ``class_separation`` apart (for up to
    ``d`` classes).  ``image_shape`` reshapes rows to (C, H, W) with
    C*H*W == d for image-style models.  Deterministic under ``seed``.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    if n < num_classes:
        raise ValueError("n must be at least num_classes")
    if num_classes < 1:
        raise ValueError("num_classes must be positive")
    rng = np.random.default_rng(seed)
    means = np.zeros((num_classes, d))
    if num_classes <= d:
        for k in range(num_classes):
            means[k, k] = class_separation / np.sqrt(2.0)
    else:
        dirs = rng.standard_normal((num_classes, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        means = dirs * class_separation / np.sqrt(2.0)
    y = np.arange(n) % num_classes
    rng.shuffle(y)
    X = means[y] + rng.standard_normal((n, d))
    if image_shape is not None:
        c, h, w = image_shape
        if c * h * w != d:
            raise ValueError(f"image_shape {image_shape} does not hold {d} features")
        X = X.reshape(n, c, h, w)
    return Dataset(X, y, num_classes, name=f"synthetic[{num_classes}x{d}]")


@dataclass(frozen=True)
class CsvSchema:
    """How to read a CSV of one label column plus feature columns."""

    has_header: bool = False
    label_column: int = 0
    scale_features: bool = False  # min-max scale each feature to [0, 1]
    num_classes: int | None = None  # validate labels if set, else max+1


def load_csv(path: str | Path, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Parse a CSV into a Dataset; errors name the offending row/column."""
    path = Path(path)
    rows: list[list[str]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if row:
                rows.append(row)
    if schema.has_header:
        rows = rows[1:]
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2:
        raise CsvFormatError(f"{path}: need a label column plus at least one feature")
    labels = []
    feats = []
    for r, row in enumerate(rows):
        if len(row) != width:
            raise CsvFormatError(f"{path}: row {r} has {len(row)} fields, expected {width}")
        vals = []
        for c, cell in enumerate(row):
            try:
                vals.append(float(cell))
            except ValueError:
                raise CsvFormatError(
                    f"{path}: row {r}, column {c}: could not parse {cell.strip()!r}"
                ) from None
        label = vals.pop(schema.label_column)
        if label != int(label):
            raise CsvFormatError(f"{path}: row {r}: non-integer label {label}")
        labels.append(int(label))
        feats.append(vals)
    X = np.array(feats, dtype=np.float64)
    y = np.array(labels, dtype=np.int64)
    num_classes = schema.num_classes if schema.num_classes is not None else int(y.max()) + 1
    if y.min() < 0 or y.max() >= num_classes:
        bad = int(np.argmax((y < 0) | (y >= num_classes)))
        raise CsvFormatError(f"{path}: row {bad}: label {y[bad]} outside [0, {num_classes})")
    if schema.scale_features:
        lo = X.min(axis=0)
        span = X.max(axis=0) - lo
        span[span == 0] = 1.0
        X = (X - lo) / span
    return Dataset(X, y, num_classes, name=path.stem)


def save_csv(dataset: Dataset, path: str | Path, header: bool = False) -> None:
    """Write label + features, full float precision (round-trips exactly)."""
    path = Path(path)
    X = dataset.X.reshape(len(dataset), -1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(["label"] + [f"f{i}" for i in range(X.shape[1])])
        for label, row in zip(dataset.y, X):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


@dataclass(frozen=True)
class SplitSpec:
    """Sizes and policy for the four-way split.

    ``mode="subset"`` draws the shadow training set from inside the target
    training set; ``"disjoint"`` forces an empty intersection.  With
    ``nonmember_source="shifted_distribution"`` the non-member pools (both
    test subsets) get a feature shift of ``shift_mean`` per-feature stds
    plus additive Gaussian noise of ``shift_noise`` per-feature stds.
    """

    n_train_target: int
    n_test_target: int
    n_train_shadow: int
    n_test_shadow: int
    mode: str = "subset"
    nonmember_source: str = "holdout_in_distribution"
    shift_mean: float = 0.5
    shift_noise: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("subset", "disjoint"):
            raise SplitError(f"unknown split mode {self.mode!r}")
        if self.nonmember_source not in ("holdout_in_distribution", "shifted_distribution"):
            raise SplitError(f"unknown nonmember source {self.nonmember_source!r}")
        if min(self.n_train_target, self.n_test_target, self.n_train_shadow, self.n_test_shadow) < 1:
            raise SplitError("all four split sizes must be positive")


@dataclass
class SplitBundle:
    """The four datasets with member/non-member roles.

    Members of the target model are ``train_target`` rows; ``test_target``
    rows are its non-members.  Likewise ``train_shadow``/``test_shadow`` for
    the shadow model.  ``indices`` records source-row indices per subset so
    a bundle can be rebuilt exactly.
    """

    train_target: Dataset
    test_target: Dataset
    train_shadow: Dataset
    test_shadow: Dataset
    indices: dict[str, Array] = field(default_factory=dict)
    spec: SplitSpec | None = None

    def subsets(self) -> dict[str, Dataset]:
        return {
            "train_target": self.train_target,
            "test_target": self.test_target,
            "train_shadow": self.train_shadow,
            "test_shadow": self.test_shadow,
        }


def _apply_shift(X: Array, source: Dataset, spec: SplitSpec, label: str) -> Array:
    """Mean offset + Gaussian noise, both scaled by per-feature std."""
    flat_std = source.X.reshape(len(source), -1).std(axis=0).reshape(source.feature_shape)
    rng = np.random.default_rng(derive_seed(spec.seed, "shift", label))
    noise = rng.standard_normal(X.shape)
    return X + spec.shift_mean * flat_std + spec.shift_noise * flat_std * noise


def split(dataset: Dataset, spec: SplitSpec) -> SplitBundle:
    """Partition ``dataset`` into the four subsets of the attack protocol.

    Draws are uniform without replacement under ``spec.seed``.  The shadow
    test pool prefers unused rows and, in subset mode, falls back to target
    training rows not used by the shadow; it never overlaps ``test_target``
    or ``train_shadow``.
    """
    n = len(dataset)
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    need_fresh = spec.n_train_target + spec.n_test_target
    if spec.mode == "disjoint":
        need_fresh += spec.n_train_shadow
    if need_fresh > n:
        raise SplitError(f"split sizes need {need_fresh} fresh rows but dataset has {n}")

    train_target = perm[: spec.n_train_target]
    cursor = spec.n_train_target
    test_target = perm[cursor : cursor + spec.n_test_target]
    cursor += spec.n_test_target

    if spec.mode == "subset":
        if spec.n_train_shadow > spec.n_train_target:
            raise SplitError("subset mode requires n_train_shadow <= n_train_target")
        train_shadow = rng.permutation(train_target)[: spec.n_train_shadow]
    else:
        train_shadow = perm[cursor : cursor + spec.n_train_shadow]
        cursor += spec.n_train_shadow

    unused = perm[cursor:]
    if len(unused) >= spec.n_test_shadow:
        test_shadow = unused[: spec.n_test_shadow]
    else:
        shadow_set = set(train_shadow.tolist())
        fallback = np.array([i for i in train_target if i not in shadow_set], dtype=int)
        shortfall = spec.n_test_shadow - len(unused)
        if shortfall > len(fallback):
            raise SplitError(
                f"cannot place {spec.n_test_shadow} shadow test rows: "
                f"{len(unused)} unused + {len(fallback)} fallback available"
            )
        extra = rng.permutation(fallback)[:shortfall]
        test_shadow = np.concatenate([unused, extra])

    if spec.mode == "disjoint" and set(train_target.tolist()) & set(train_shadow.tolist()):
        raise SplitError("disjoint mode produced overlapping training sets")

    subsets = {}
    for label, idx in (
        ("train_target", train_target),
        ("test_target", test_target),
        ("train_shadow", train_shadow),
        ("test_shadow", test_shadow),
    ):
        ds = dataset.subset(np.asarray(idx, dtype=int), name=label)
        if label.startswith("test_") and spec.nonmember_source == "shifted_distribution":
            ds = Dataset(
                _apply_shift(ds.X, dataset, spec, label),
                ds.y,
                ds.num_classes,
                name=label,
                distribution="shifted",
            )
        subsets[label] = ds

    return SplitBundle(
        subsets["train_target"],
        subsets["test_target"],
        subsets["train_shadow"],
        subsets["test_shadow"],
        indices={k: np.asarray(v, dtype=int) for k, v in (
            ("train_target", train_target),
            ("test_target", test_target),
            ("train_shadow", train_shadow),
            ("test_shadow", test_shadow),
        )},
        spec=spec,
    )


def save_bundle_manifest(bundle: SplitBundle, path: str | Path) -> None:
    """JSON manifest of per-subset source indices for exact re-runs."""
    payload = {
        "spec": None if bundle.spec is None else {
            "n_train_target": bundle.spec.n_train_target,
            "n_test_target": bundle.spec.n_test_target,
            "n_train_shadow": bundle.spec.n_train_shadow,
            "n_test_shadow": bundle.spec.n_test_shadow,
            "mode": bundle.spec.mode,
            "nonmember_source": bundle.spec.nonmember_source,
            "shift_mean": bundle.spec.shift_mean,
            "shift_noise": bundle.spec.shift_noise,
            "seed": bundle.spec.seed,
        },
        "indices": {k: v.tolist() for k, v in bundle.indices.items()},
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def bundle_from_manifest(dataset: Dataset, path: str | Path) -> SplitBundle:
    """Rebuild a bundle from a manifest written by :func:`save_bundle_manifest`."""
    payload = json.loads(Path(path).read_text())
    spec = SplitSpec(**payload["spec"]) if payload.get("spec") else None
    subsets = {}
    for label, idx in payload["indices"].items():
        ds = dataset.subset(np.asarray(idx, dtype=int), name=label)
        if (
            spec is not None
            and label.startswith("test_")
            and spec.nonmember_source == "shifted_distribution"
        ):
            ds = Dataset(
                _apply_shift(ds.X, dataset, spec, label),
                ds.y,
                ds.num_classes,
                name=label,
                distribution="shifted",
            )
        subsets[label] = ds
    return SplitBundle(
        subsets["train_target"],
        subsets["test_target"],
        subsets["train_shadow"],
        subsets["test_shadow"],
        indices={k: np.asarray(v, dtype=int) for k, v in payload["indices"].items()},
        spec=spec,
    )
