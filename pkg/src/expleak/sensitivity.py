"""Explanation utility as stability under bounded input perturbation.

The sensitivity of an explanation at x is the largest L2 change of the
attribution over perturbations within an L-infinity ball of radius r around
x.  The max is not computable exactly in general, so estimators provide
deterministic lower bounds: Monte-Carlo draws, a dense grid (d <= 2), or
greedy random ascent.  Lower sensitivity means higher utility -- the
explanation barely moves when the input wiggles.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import UndefinedBaselineError
from .seeding import derive_seed

Array = np.ndarray


class AttributesLike(Protocol):
    def attribute(self, model, x, class_index=None, seed=0): ...


@dataclass(frozen=True)
class EstimatorSpec:
    """How to search the perturbation ball.

    ``monte_carlo`` draws ``draws`` points uniformly from the ball;
    ``grid`` sweeps ``grid_points`` per axis (flat inputs, d <= 2 only);
    ``ascent`` runs ``draws`` steps of greedy random hill climbing.
    All give lower bounds on the true max and are deterministic under seed.
    """

    method: str = "monte_carlo"
    draws: int = 64
    grid_points: int = 33

    def __post_init__(self):
        if self.method not in ("monte_carlo", "grid", "ascent"):
            raise ValueError(f"unknown estimator {self.method!r}")
        if self.draws < 1 or self.grid_points < 2:
            raise ValueError("draws must be >= 1 and grid_points >= 2")


@dataclass
class SensitivityEstimate:
    value: float
    radius: float
    estimator: str
    draws: int
    seed: int
    perturbation_norm: str = "linf"
    output_norm: str = "l2"

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("sensitivity cannot be negative")


def _change(explainer: AttributesLike, model, x: Array, base: Array, delta: Array, seed: int) -> float:
    att = explainer.attribute(model, x + delta, seed=seed)
    return float(np.linalg.norm(att.flat - base))


def sensitivity(
    explainer: AttributesLike,
    model,
    x: Array,
    r: float,
    estimator: EstimatorSpec = EstimatorSpec(),
    seed: int = 0,
) -> SensitivityEstimate:
    """Lower-bound estimate of the max attribution change within the ball.

    The explainer is called with the *same* seed for every perturbed input,
    so stochastic methods measure input sensitivity rather than sampler
    variance.  ``r == 0`` is admitted and returns exactly 0.
    """
    if r < 0:
        raise ValueError("radius must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    inner_seed = derive_seed(seed, "explainer")
    base = explainer.attribute(model, x, seed=inner_seed).flat
    if r == 0:
        return SensitivityEstimate(0.0, r, estimator.method, estimator.draws, seed)
    rng = np.random.default_rng(derive_seed(seed, "perturb"))
    best = 0.0
    if estimator.method == "monte_carlo":
        directions = rng.uniform(-1.0, 1.0, size=(estimator.draws,) + x.shape)
        for u in directions:
            best = max(best, _change(explainer, model, x, base, r * u, inner_seed))
    elif estimator.method == "grid":
        if x.ndim != 1 or x.size > 2:
            raise ValueError("grid estimator supports flat inputs with d <= 2")
        axes = [np.linspace(-r, r, estimator.grid_points)] * x.size
        for point in itertools.product(*axes):
            best = max(best, _change(explainer, model, x, base, np.array(point), inner_seed))
    else:  # ascent
        delta = np.zeros_like(x)
        for _ in range(estimator.draws):
            proposal = np.clip(delta + rng.normal(0.0, r / 4.0, size=x.shape), -r, r)
            value = _change(explainer, model, x, base, proposal, inner_seed)
            if value > best:
                best, delta = value, proposal
    return SensitivityEstimate(best, r, estimator.method, estimator.draws, seed)


@dataclass
class DatasetSensitivity:
    mean: float
    per_sample: Array
    radius: float
    estimator: str


def dataset_sensitivity(
    explainer: AttributesLike,
    model,
    sample_set: Array,
    r: float,
    estimator: EstimatorSpec = EstimatorSpec(),
    seed: int = 0,
) -> DatasetSensitivity:
    """Mean per-sample sensitivity over a sample set (order-invariant)."""
    sample_set = np.asarray(sample_set, dtype=np.float64)
    if len(sample_set) == 0:
        raise ValueError("empty sample set")
    values = np.array(
        [
            sensitivity(explainer, model, x, r, estimator, seed=derive_seed(seed, "sample", _key(x))).value
            for x in sample_set
        ]
    )
    return DatasetSensitivity(float(values.mean()), values, r, estimator.method)


def _key(x: Array) -> str:
    # Per-sample seed keyed on content, so shuffling the set cannot change it.
    return np.asarray(x, dtype=np.float64).tobytes().hex()[:32]


@dataclass
class DeltaS:
    """Percentage change in sensitivity between two measurements."""

    percent: float
    direction: str  # "utility_gain" | "utility_loss" | "unchanged"


def delta_s(pre: float, post: float) -> DeltaS:
    """Percent change |pre - post| / pre * 100; a drop is a utility gain."""
    if pre == 0:
        raise UndefinedBaselineError("pre-hardening sensitivity is zero")
    if pre < 0 or post < 0:
        raise ValueError("sensitivities are nonnegative")
    percent = abs(pre - post) / pre * 100.0
    if post < pre:
        direction = "utility_gain"
    elif post > pre:
        direction = "utility_loss"
    else:
        direction = "unchanged"
    return DeltaS(percent, direction)


def save_sensitivity_csv(result: DatasetSensitivity, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "sensitivity"])
        for i, v in enumerate(result.per_sample):
            writer.writerow([i, repr(float(v))])


def save_sensitivity_summary(result: DatasetSensitivity, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "mean": result.mean,
                "radius": result.radius,
                "estimator": result.estimator,
                "n_samples": len(result.per_sample),
            },
            indent=2,
            sort_keys=True,
        )
    )
