"""Explanation-only shadow-model membership inference.

The adversary trains a shadow model, labels its training rows' attribution
vectors as members and its held-out rows' as non-members, fits an attack
classifier on those vectors alone (no logits, labels, or confidences), and
is scored against the target model's members/non-members.  The headline
metric is the true-positive rate at a low false-positive-rate budget
("leakage score"), alongside AUC and balanced accuracy.  The whole protocol
is repeated over several attack seeds and the best seed is chosen on a
validation split of the attack data only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import nn, zoo
from .data import Dataset, SplitBundle
from .explain import Explainer
from .seeding import derive_seed

Array = np.ndarray


@dataclass
class AttackDataset:
    """Flattened attribution rows with membership labels (1 member, 0 not)."""

    X: Array
    y: Array
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.X) != len(self.y):
            raise ValueError("rows and labels differ in length")
        if len(self.y) and not set(np.unique(self.y)) <= {0, 1}:
            raise ValueError("membership labels must be 0/1")

    def __len__(self) -> int:
        return len(self.y)


def build_attack_dataset(
    shadow: nn.Model,
    explainer: Explainer,
    bundle: SplitBundle,
    seed: int = 0,
    max_per_class: int | None = None,
) -> AttackDataset:
    """Label shadow-member/non-member attribution vectors, balanced when possible."""
    members = bundle.train_shadow
    nonmembers = bundle.test_shadow
    n = min(len(members), len(nonmembers))
    if max_per_class is not None:
        n = min(n, max_per_class)
    rows_m = explainer.attribute_dataset(shadow, members.X[:n], seed=derive_seed(seed, "member"))
    rows_n = explainer.attribute_dataset(shadow, nonmembers.X[:n], seed=derive_seed(seed, "nonmember"))
    X = np.vstack([rows_m, rows_n])
    y = np.concatenate([np.ones(n, dtype=np.int64), np.zeros(n, dtype=np.int64)])
    return AttackDataset(
        X,
        y,
        provenance={
            "explainer": explainer.kind,
            "params": dict(explainer.params),
            "shadow": shadow.meta.get("architecture", "unknown"),
            "rows_per_class": n,
        },
    )


@dataclass(frozen=True)
class AttackModelSpec:
    """Attack classifier family: logistic regression or a small ReLU MLP."""

    kind: str = "logistic"  # or "mlp"
    hidden: tuple[int, ...] = (32,)
    epochs: int = 150
    learning_rate: float = 0.1
    batch_size: int = 32
    weight_decay: float = 1e-4


@dataclass
class AttackModel:
    """Classifier over attribution vectors with its feature standardization.

    Consumes only explanation vectors; ``n_features`` pins the expected
    attribution dimensionality so nothing else can sneak into the features.
    """

    model: nn.Model
    feature_mean: Array
    feature_std: Array
    spec: AttackModelSpec
    seed: int
    n_features: int

    def scores(self, rows: Array) -> Array:
        """Continuous membership score in [0, 1] per attribution row."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.n_features:
            raise ValueError(
                f"attack model expects {self.n_features}-dim attribution rows, got {rows.shape}"
            )
        z = (rows - self.feature_mean) / self.feature_std
        logits, _ = nn.forward_batch(self.model, z)
        return nn.softmax(logits)[:, 1]

    @classmethod
    def untrained(cls, n_features: int, seed: int = 0, spec: AttackModelSpec | None = None) -> "AttackModel":
        """Random-weight attack model; the null baseline for calibration."""
        spec = spec or AttackModelSpec()
        arch = _attack_arch(spec, n_features)
        model = nn.init_model(arch, (n_features,), seed=seed)
        return cls(model, np.zeros(n_features), np.ones(n_features), spec, seed, n_features)


def _attack_arch(spec: AttackModelSpec, d: int) -> list[nn.LayerSpec]:
    if spec.kind == "logistic":
        return [nn.dense(d, 2)]
    if spec.kind == "mlp":
        layers: list[nn.LayerSpec] = []
        prev = d
        for h in spec.hidden:
            layers += [nn.dense(prev, h), nn.relu()]
            prev = h
        layers.append(nn.dense(prev, 2))
        return layers
    raise ValueError(f"unknown attack model kind {spec.kind!r}")


def train_attack(
    ds: AttackDataset,
    spec: AttackModelSpec = AttackModelSpec(),
    seed: int = 0,
    validation_fraction: float = 0.25,
) -> tuple[AttackModel, dict[str, float]]:
    """Fit the attack classifier; returns it with its validation scores.

    Features are standardized with the training split's statistics (kept
    inside the returned model).  Deterministic under ``seed``.
    """
    if len(np.unique(ds.y)) < 2:
        raise ValueError("attack dataset has a single class")
    counts = np.bincount(ds.y, minlength=2)
    if counts.min() < 2:
        raise ValueError("need at least 2 examples per class")
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError("validation_fraction must be in (0, 1)")
    rng = np.random.default_rng(derive_seed(seed, "val-split"))
    order = rng.permutation(len(ds))
    n_val = max(2, int(round(validation_fraction * len(ds))))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(np.unique(ds.y[train_idx])) < 2 or len(np.unique(ds.y[val_idx])) < 2:
        # Rare with balanced data; rotate the split deterministically.
        val_idx, train_idx = order[-n_val:], order[:-n_val]
    if len(np.unique(ds.y[train_idx])) < 2:
        raise ValueError("could not form a two-class training split")

    mean = ds.X[train_idx].mean(axis=0)
    std = ds.X[train_idx].std(axis=0)
    std = np.where(std > 0, std, 1.0)
    z = (ds.X - mean) / std
    d = ds.X.shape[1]
    train_data = Dataset(z[train_idx], ds.y[train_idx], 2, name="attack-train")
    val_data = Dataset(z[val_idx], ds.y[val_idx], 2, name="attack-val")
    cfg = zoo.TrainConfig(
        epochs=spec.epochs,
        learning_rate=spec.learning_rate,
        weight_decay=spec.weight_decay,
        schedule="cosine_annealing",
        batch_size=spec.batch_size,
        seed=seed,
    )
    model = zoo.train(_attack_arch(spec, d), train_data, val_data, cfg, arch_name=f"attack-{spec.kind}")
    attack = AttackModel(model, mean, std, spec, seed, d)
    val_scores = attack.scores(ds.X[val_idx])
    val_curve = roc_curve(val_scores, ds.y[val_idx])
    validation = {
        "accuracy": balanced_accuracy(val_scores, ds.y[val_idx]),
        "auc": auc(val_curve),
        "curve": val_curve,
    }
    return attack, validation


@dataclass
class RocCurve:
    """Step-function ROC over the unique score thresholds.

    ``thresholds[0]`` is +inf (the (0, 0) endpoint); the final row is
    (1, 1).  Predicting "member" means score >= threshold; tied scores are
    grouped at one threshold, so FPR and TPR are non-decreasing.
    """

    thresholds: Array
    fpr: Array
    tpr: Array
    n_pos: int
    n_neg: int


def roc_curve(scores: Array, labels: Array) -> RocCurve:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(scores) == 0:
        raise ValueError("empty score set")
    if len(scores) != len(labels):
        raise ValueError("scores and labels differ in length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need both members and non-members to build a ROC curve")
    uniq = np.unique(scores)[::-1]
    thresholds = np.concatenate([[np.inf], uniq])
    pos_sorted = np.sort(scores[labels == 1])
    neg_sorted = np.sort(scores[labels == 0])
    # score >= t  <=>  count above insertion point from the left
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, thresholds, side="left")
    return RocCurve(thresholds, fp / n_neg, tp / n_pos, n_pos, n_neg)


def mls(roc: RocCurve, epsilon: float) -> float:
    """Max TPR among thresholds with empirical FPR <= epsilon (no interpolation)."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must be in [0, 1)")
    ok = roc.fpr <= epsilon
    return float(roc.tpr[ok].max())


def auc(roc: RocCurve) -> float:
    """Trapezoid area under the step curve; ties contribute half credit."""
    return float(np.trapezoid(roc.tpr, roc.fpr))


def balanced_accuracy(scores: Array, labels: Array, threshold: float = 0.5) -> float:
    """(TPR + TNR) / 2 with "member" predicted at score >= threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pred = scores >= threshold
    pos = labels == 1
    neg = labels == 0
    if not pos.any() or not neg.any():
        raise ValueError("need both classes for balanced accuracy")
    tpr = float(pred[pos].mean())
    tnr = float((~pred[neg]).mean())
    return 0.5 * (tpr + tnr)


def evaluate_attack(
    attack: AttackModel,
    target: nn.Model,
    explainer: Explainer,
    eval_members: Array,
    eval_nonmembers: Array,
    seed: int = 0,
) -> RocCurve:
    """Score the attack against the target; only explanation vectors are used."""
    if len(eval_members) == 0 or len(eval_nonmembers) == 0:
        raise ValueError("empty evaluation set")
    rows_m = explainer.attribute_dataset(target, eval_members, seed=derive_seed(seed, "eval-member"))
    rows_n = explainer.attribute_dataset(target, eval_nonmembers, seed=derive_seed(seed, "eval-nonmember"))
    return evaluate_attack_rows(attack, rows_m, rows_n)


def evaluate_attack_rows(attack: AttackModel, member_rows: Array, nonmember_rows: Array) -> RocCurve:
    scores = np.concatenate([attack.scores(member_rows), attack.scores(nonmember_rows)])
    labels = np.concatenate([np.ones(len(member_rows), dtype=int), np.zeros(len(nonmember_rows), dtype=int)])
    return roc_curve(scores, labels)


@dataclass
class SeedOutcome:
    seed_index: int
    validation_tpr_at_eps: float
    validation_accuracy: float
    target_mls: float
    target_auc: float
    target_balanced_accuracy: float


@dataclass
class AttackReport:
    """Per-seed outcomes plus the validation-selected headline numbers."""

    explainer: str
    params: dict[str, Any]
    epsilon: float
    best_seed: int
    mls: float
    auc: float
    balanced_accuracy: float
    per_seed: list[SeedOutcome]
    hindsight_better_seeds: list[int]  # target-eval beat the chosen seed (sanity only)

    def to_dict(self) -> dict[str, Any]:
        return {
            "explainer": self.explainer,
            "params": {k: _json_value(v) for k, v in self.params.items()},
            "epsilon": self.epsilon,
            "best_seed": self.best_seed,
            "mls": self.mls,
            "auc": self.auc,
            "balanced_accuracy": self.balanced_accuracy,
            "per_seed": [
                {
                    "seed_index": s.seed_index,
                    "validation_tpr_at_eps": s.validation_tpr_at_eps,
                    "validation_accuracy": s.validation_accuracy,
                    "target_mls": s.target_mls,
                    "target_auc": s.target_auc,
                    "target_balanced_accuracy": s.target_balanced_accuracy,
                }
                for s in self.per_seed
            ],
            "hindsight_better_seeds": self.hindsight_better_seeds,
        }


def _json_value(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (tuple, list)):
        return [_json_value(x) for x in v]
    return v


def save_attack_report(report: AttackReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))


def save_roc_csv(roc: RocCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for t, f, tp in zip(roc.thresholds, roc.fpr, roc.tpr):
            writer.writerow([repr(float(t)), repr(float(f)), repr(float(tp))])


@dataclass(frozen=True)
class AttackProtocol:
    """Settings for the repeated-seed attack: K seeds, FPR budget, model family."""

    k_seeds: int = 20
    epsilon: float = 0.001
    model: AttackModelSpec = AttackModelSpec()
    validation_fraction: float = 0.25
    eval_size_cap: int = 1000

    def __post_init__(self):
        if self.k_seeds < 1:
            raise ValueError("k_seeds must be >= 1")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must be in [0, 1)")


def run_attack_on_rows(
    attack_rows: AttackDataset,
    eval_member_rows: Array,
    eval_nonmember_rows: Array,
    protocol: AttackProtocol,
    master_seed: int = 0,
    explainer_name: str = "",
    explainer_params: dict[str, Any] | None = None,
) -> AttackReport:
    """Core of the protocol, starting from precomputed attribution rows.

    Trains ``k_seeds`` attack models, selects the best seed on validation
    data only (lexicographically: validation TPR at the FPR budget, then
    validation accuracy), and reports the chosen seed's target-side
    leakage.  Every seed's target-side numbers are recorded so hindsight
    winners can be flagged, but they never influence selection.
    """
    outcomes: list[SeedOutcome] = []
    for k in range(protocol.k_seeds):
        seed_k = derive_seed(master_seed, "attack-seed", k)
        model_k, validation = train_attack(
            attack_rows, protocol.model, seed=seed_k, validation_fraction=protocol.validation_fraction
        )
        val_tpr = mls(validation["curve"], protocol.epsilon)
        target_curve = evaluate_attack_rows(model_k, eval_member_rows, eval_nonmember_rows)
        scores = np.concatenate(
            [model_k.scores(eval_member_rows), model_k.scores(eval_nonmember_rows)]
        )
        labels = np.concatenate(
            [np.ones(len(eval_member_rows), dtype=int), np.zeros(len(eval_nonmember_rows), dtype=int)]
        )
        outcomes.append(
            SeedOutcome(
                seed_index=k,
                validation_tpr_at_eps=val_tpr,
                validation_accuracy=validation["accuracy"],
                target_mls=mls(target_curve, protocol.epsilon),
                target_auc=auc(target_curve),
                target_balanced_accuracy=balanced_accuracy(scores, labels),
            )
        )
    best = max(outcomes, key=lambda o: (o.validation_tpr_at_eps, o.validation_accuracy, -o.seed_index))
    hindsight = [o.seed_index for o in outcomes if o.target_mls > best.target_mls]
    return AttackReport(
        explainer=explainer_name,
        params=explainer_params or {},
        epsilon=protocol.epsilon,
        best_seed=best.seed_index,
        mls=best.target_mls,
        auc=best.target_auc,
        balanced_accuracy=best.target_balanced_accuracy,
        per_seed=outcomes,
        hindsight_better_seeds=hindsight,
    )


def evaluation_rows(
    target: nn.Model,
    explainer: Explainer,
    bundle: SplitBundle,
    protocol: AttackProtocol,
    master_seed: int = 0,
) -> tuple[Array, Array]:
    """Target-side attribution rows for members and non-members, balanced."""
    n = min(len(bundle.train_target), len(bundle.test_target), protocol.eval_size_cap)
    members = bundle.train_target.X[:n]
    nonmembers = bundle.test_target.X[:n]
    rows_m = explainer.attribute_dataset(target, members, seed=derive_seed(master_seed, "eval-member"))
    rows_n = explainer.attribute_dataset(target, nonmembers, seed=derive_seed(master_seed, "eval-nonmember"))
    return rows_m, rows_n


def run_attack_protocol(
    bundle: SplitBundle,
    target: nn.Model,
    shadow: nn.Model,
    explainer: Explainer,
    protocol: AttackProtocol = AttackProtocol(),
    master_seed: int = 0,
) -> AttackReport:
    """End-to-end protocol from a trained target/shadow pair."""
    attack_rows = build_attack_dataset(shadow, explainer, bundle, seed=derive_seed(master_seed, "attack-data"))
    rows_m, rows_n = evaluation_rows(target, explainer, bundle, protocol, master_seed)
    return run_attack_on_rows(
        attack_rows,
        rows_m,
        rows_n,
        protocol,
        master_seed=master_seed,
        explainer_name=explainer.kind,
        explainer_params=dict(explainer.params),
    )
