"""Privacy hardening of explanations: transforms, parameter search, Pareto fronts.

Two routes, depending on whether a method has tunable parameters:

* parameterized methods are re-tuned directly -- the search samples their
  own parameter space;
* non-parameterized methods get post-hoc attribution transforms: Clip the
  values into [c_min, c_max], Mask weak attributions below tau to zero, add
  Gaussian Noise of scale sigma, applied in a configurable order (C -> M ->
  N by default).

Every trial re-measures leakage by retraining the attack on the hardened
shadow attributions (a defense-aware adversary) and re-measures utility as
dataset sensitivity of the hardened channel.  Trials are logged, the
non-dominated set in (leakage, utility-loss) space is extracted, and the
selected configuration minimizes leakage with utility as tie-break.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from . import nn
from .attack import AttackDataset, AttackProtocol, run_attack_on_rows
from .data import SplitBundle
from .errors import UndefinedBaselineError
from .explain import AttributionMap, Explainer
from .explain.params import ParamSpec, search_space
from .seeding import derive_seed
from .sensitivity import EstimatorSpec, dataset_sensitivity, delta_s

Array = np.ndarray

TRANSFORM_STEPS = ("C", "M", "N")
DEFAULT_ORDER = ("C", "M", "N")


@dataclass(frozen=True)
class TransformParams:
    """Clip/Mask/Noise settings applied to an attribution map.

    ``order`` is a nonempty subset-permutation of {C, M, N}.  Masking is
    ``signed`` (zero everything strictly below tau) or ``magnitude`` (zero
    where |value| < tau).  With sigma=0, clip bounds at +/-inf and
    tau=-inf the transform is the exact identity.
    """

    sigma: float = 0.0
    c_min: float = -np.inf
    c_max: float = np.inf
    tau: float = -np.inf
    order: tuple[str, ...] = DEFAULT_ORDER
    mask_mode: str = "signed"
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.c_min > self.c_max:
            raise ValueError("c_min must be <= c_max")
        order = tuple(self.order)
        if not order or len(set(order)) != len(order) or not set(order) <= set(TRANSFORM_STEPS):
            raise ValueError(f"order must be a nonempty subset-permutation of {TRANSFORM_STEPS}")
        if self.mask_mode not in ("signed", "magnitude"):
            raise ValueError(f"unknown mask mode {self.mask_mode!r}")
        object.__setattr__(self, "order", order)

    def as_dict(self) -> dict[str, Any]:
        return {
            "sigma": self.sigma,
            "c_min": self.c_min,
            "c_max": self.c_max,
            "tau": self.tau,
            "order": list(self.order),
            "mask_mode": self.mask_mode,
        }


def all_orders() -> list[tuple[str, ...]]:
    """All 15 nonempty orderings over subsets of {C, M, N}."""
    import itertools

    orders = []
    for r in (1, 2, 3):
        orders.extend(itertools.permutations(TRANSFORM_STEPS, r))
    return orders


def apply_transform_values(values: Array, params: TransformParams) -> Array:
    """Clip / mask / noise on a raw array, in ``params.order``."""
    out = np.asarray(values, dtype=np.float64).copy()
    rng = None
    for step in params.order:
        if step == "C":
            out = np.clip(out, params.c_min, params.c_max)
        elif step == "M":
            if params.mask_mode == "signed":
                out[out < params.tau] = 0.0
            else:
                out[np.abs(out) < params.tau] = 0.0
        elif step == "N":
            if params.sigma > 0:
                if rng is None:
                    rng = np.random.default_rng(params.seed)
                out = out + rng.normal(0.0, params.sigma, size=out.shape)
    return out


def apply_transforms(att: AttributionMap, params: TransformParams) -> AttributionMap:
    values = apply_transform_values(att.values, params)
    merged = dict(att.params)
    merged["transform"] = params.as_dict()
    return AttributionMap(
        values,
        att.method,
        params=merged,
        class_index=att.class_index,
        wall_time_seconds=att.wall_time_seconds,
    )


@dataclass
class HardenedExplainer:
    """An explainer with attribution transforms bolted on the output.

    Noise seeds derive from the transform seed and the call seed, so rows of
    a dataset get independent (but reproducible) noise.
    """

    base: Explainer
    transform: TransformParams

    @property
    def kind(self) -> str:
        return self.base.kind

    @property
    def params(self) -> dict[str, Any]:
        return {**self.base.params, "transform": self.transform.as_dict()}

    def attribute(self, model, x, class_index=None, seed: int = 0) -> AttributionMap:
        att = self.base.attribute(model, x, class_index=class_index, seed=seed)
        noisy = replace(self.transform, seed=derive_seed(self.transform.seed, seed))
        return apply_transforms(att, noisy)

    def attribute_dataset(self, model, X, seed: int = 0) -> Array:
        rows = self.base.attribute_dataset(model, X, seed=seed)
        return transform_rows(rows, seed, self.transform)


def transform_rows(rows: Array, base_seed: int, params: TransformParams) -> Array:
    """Transform precomputed attribution rows exactly like the hardened channel.

    Row ``i`` of a dataset attribution matrix was produced with call seed
    ``derive_seed(base_seed, i)``; the transform noise uses the same
    derivation so cached rows and per-sample calls agree bit for bit.
    """
    out = np.empty_like(rows)
    for i in range(len(rows)):
        noisy = replace(params, seed=derive_seed(params.seed, derive_seed(base_seed, i)))
        out[i] = apply_transform_values(rows[i], noisy)
    return out


@dataclass
class TrialRecord:
    """One hardening trial: configuration, leakage, utility, and cost."""

    index: int
    theta: dict[str, Any]
    mls: float
    utility: float  # dataset sensitivity of the hardened channel (lower = better)
    delta_s_percent: float  # signed: > 0 utility loss, < 0 gain
    wall_time_seconds: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.mls <= 1.0:
            raise ValueError("MLS must be in [0, 1]")
        if self.wall_time_seconds < 0:
            raise ValueError("wall time must be >= 0")


@dataclass
class ParetoFront:
    """Non-dominated trials in (minimize MLS, minimize utility-loss) space."""

    members: list[TrialRecord]
    ideal_point: tuple[float, float] = (0.0, 0.0)


def _dominates(a: TrialRecord, b: TrialRecord) -> bool:
    return (
        a.mls <= b.mls
        and a.delta_s_percent <= b.delta_s_percent
        and (a.mls < b.mls or a.delta_s_percent < b.delta_s_percent)
    )


def pareto_front(trials: list[TrialRecord]) -> ParetoFront:
    """Brute-force dominance filter; duplicate points keep their first index."""
    members = []
    seen: set[tuple[float, float]] = set()
    for t in trials:
        key = (t.mls, t.delta_s_percent)
        if key in seen:
            continue
        if any(_dominates(o, t) for o in trials if o is not t):
            continue
        seen.add(key)
        members.append(t)
    return ParetoFront(members)


def select_best(trials: list[TrialRecord], mls_slack: float = 0.001) -> TrialRecord:
    """Minimize MLS; near-ties (within the slack) resolve to max utility.

    Among trials within ``mls_slack`` of the minimum MLS, take minimal
    sensitivity, then minimal MLS, then lowest trial index.  The winner is
    always on the Pareto front.
    """
    if not trials:
        raise ValueError("no trials")
    best_mls = min(t.mls for t in trials)
    eligible = [t for t in trials if t.mls <= best_mls + mls_slack]
    return min(eligible, key=lambda t: (t.utility, t.mls, t.index))


def sample_params(space: dict[str, ParamSpec], rng: np.random.Generator) -> dict[str, Any]:
    theta = {}
    for name, spec in space.items():
        if spec.kind == "continuous":
            if spec.low == spec.high:
                theta[name] = float(spec.low)
            else:
                theta[name] = float(rng.uniform(spec.low, spec.high))
        elif spec.kind == "integer":
            theta[name] = int(rng.integers(spec.low, spec.high + 1))
        elif spec.kind == "boolean":
            theta[name] = bool(rng.integers(0, 2))
        else:
            theta[name] = spec.choices[rng.integers(0, len(spec.choices))]
    return theta


def mutate_params(space: dict[str, ParamSpec], theta: dict[str, Any], rng: np.random.Generator) -> dict[str, Any]:
    """Local move around a promising trial; never leaves the domains.

    Continuous parameters jitter by a Gaussian at 10% of their range,
    integers step by +/-1, categoricals/booleans resample with probability
    0.2.
    """
    out = {}
    for name, spec in space.items():
        value = theta[name]
        if spec.kind == "continuous":
            if spec.low == spec.high:
                out[name] = float(spec.low)
            else:
                out[name] = float(
                    np.clip(value + rng.normal(0.0, 0.1 * (spec.high - spec.low)), spec.low, spec.high)
                )
        elif spec.kind == "integer":
            out[name] = int(np.clip(value + rng.choice([-1, 1]), spec.low, spec.high))
        elif spec.kind == "boolean":
            out[name] = (not value) if rng.random() < 0.2 else value
        else:
            if rng.random() < 0.2:
                out[name] = spec.choices[rng.integers(0, len(spec.choices))]
            else:
                out[name] = value
    return out


def default_transform_space(baseline_rows: Array) -> dict[str, ParamSpec]:
    """Transform search ranges calibrated to the raw attribution statistics."""
    flat = np.asarray(baseline_rows, dtype=np.float64).reshape(-1)
    std = float(flat.std())
    lo = float(flat.min())
    hi = float(flat.max())
    q90 = float(np.quantile(np.abs(flat), 0.9))
    return {
        "sigma": ParamSpec("sigma", "continuous", 0.0, low=0.0, high=max(2.0 * std, 1e-12)),
        "c_min": ParamSpec("c_min", "continuous", min(lo, 0.0), low=min(lo, 0.0), high=0.0),
        "c_max": ParamSpec("c_max", "continuous", max(hi, 0.0), low=0.0, high=max(hi, 0.0)),
        "tau": ParamSpec("tau", "continuous", 0.0, low=0.0, high=max(q90, 1e-12)),
    }


@dataclass
class HardeningProblem:
    """Shared state for one hardening run: data, models, protocol, caches.

    The pre-hardening baseline (MLS0, U0) is measured once with the same
    seeds every trial reuses, so the identity configuration reproduces it
    exactly.  Raw attribution rows are cached; transform trials reuse them,
    parameter trials recompute attributions with the trial's parameters.
    """

    target: nn.Model
    shadow: nn.Model
    bundle: SplitBundle
    explainer: Explainer
    protocol: AttackProtocol = field(default_factory=AttackProtocol)
    sensitivity_radius: float = 0.25
    sensitivity_estimator: EstimatorSpec = field(default_factory=lambda: EstimatorSpec(draws=16))
    sensitivity_samples: int = 8
    master_seed: int = 0
    adaptive_attack: bool = True  # retrain the attack per trial (worst case)

    def __post_init__(self):
        self._raw: dict[str, Array] | None = None
        self._row_seeds: dict[str, int] = {
            "member": derive_seed(derive_seed(self.master_seed, "attack-data"), "member"),
            "nonmember": derive_seed(derive_seed(self.master_seed, "attack-data"), "nonmember"),
            "eval_member": derive_seed(self.master_seed, "eval-member"),
            "eval_nonmember": derive_seed(self.master_seed, "eval-nonmember"),
        }
        self._baseline: tuple[float, float] | None = None
        self._baseline_attack = None

    # -- raw attribution rows ------------------------------------------------
    def raw_rows(self) -> dict[str, Array]:
        if self._raw is None:
            n = min(len(self.bundle.train_shadow), len(self.bundle.test_shadow))
            n_eval = min(
                len(self.bundle.train_target), len(self.bundle.test_target), self.protocol.eval_size_cap
            )
            self._raw = {
                "member": self.explainer.attribute_dataset(
                    self.shadow, self.bundle.train_shadow.X[:n], seed=self._row_seeds["member"]
                ),
                "nonmember": self.explainer.attribute_dataset(
                    self.shadow, self.bundle.test_shadow.X[:n], seed=self._row_seeds["nonmember"]
                ),
                "eval_member": self.explainer.attribute_dataset(
                    self.target, self.bundle.train_target.X[:n_eval], seed=self._row_seeds["eval_member"]
                ),
                "eval_nonmember": self.explainer.attribute_dataset(
                    self.target, self.bundle.test_target.X[:n_eval], seed=self._row_seeds["eval_nonmember"]
                ),
            }
        return self._raw

    def _sensitivity_inputs(self) -> Array:
        n_eval = min(len(self.bundle.train_target), self.protocol.eval_size_cap)
        take = min(self.sensitivity_samples, n_eval)
        return self.bundle.train_target.X[:take]

    def _measure(self, channel, rows: dict[str, Array]) -> tuple[float, float]:
        """(MLS, sensitivity) of an explanation channel given its rows."""
        ds = AttackDataset(
            np.vstack([rows["member"], rows["nonmember"]]),
            np.concatenate(
                [np.ones(len(rows["member"]), dtype=int), np.zeros(len(rows["nonmember"]), dtype=int)]
            ),
        )
        report = run_attack_on_rows(
            ds,
            rows["eval_member"],
            rows["eval_nonmember"],
            self.protocol,
            master_seed=derive_seed(self.master_seed, "protocol"),
            explainer_name=self.explainer.kind,
        )
        sens = dataset_sensitivity(
            channel,
            self.target,
            self._sensitivity_inputs(),
            self.sensitivity_radius,
            self.sensitivity_estimator,
            seed=derive_seed(self.master_seed, "sensitivity"),
        )
        return report.mls, sens.mean

    def baseline(self) -> tuple[float, float]:
        """(MLS0, U0) of the raw explanation channel."""
        if self._baseline is None:
            self._baseline = self._measure(self.explainer, self.raw_rows())
        return self._baseline

    def _delta(self, utility: float) -> float:
        _, u0 = self.baseline()
        if u0 == 0:
            raise UndefinedBaselineError("baseline sensitivity is zero; delta-S undefined")
        return (utility - u0) / u0 * 100.0

    # -- trial evaluators ------------------------------------------------------
    def evaluate_transform(self, index: int, theta: dict[str, Any]) -> TrialRecord:
        t0 = time.perf_counter()
        clean = {k: v for k, v in theta.items() if not k.startswith("_")}
        mask_mode = theta.get("_mask_mode", "signed")
        order = tuple(theta.get("_order", DEFAULT_ORDER))
        params = TransformParams(
            sigma=clean.get("sigma", 0.0),
            c_min=clean.get("c_min", -np.inf),
            c_max=clean.get("c_max", np.inf),
            tau=clean.get("tau", -np.inf),
            order=order,
            mask_mode=mask_mode,
            seed=derive_seed(self.master_seed, "transform-noise"),
        )
        channel = HardenedExplainer(self.explainer, params)
        raw = self.raw_rows()
        rows = {key: transform_rows(raw[key], self._row_seeds[_seed_key(key)], params) for key in raw}
        mls_value, utility = self._measure(channel, rows)
        return TrialRecord(
            index=index,
            theta=params.as_dict(),
            mls=mls_value,
            utility=utility,
            delta_s_percent=self._delta(utility),
            wall_time_seconds=time.perf_counter() - t0,
            seed=self.master_seed,
        )

    def evaluate_explainer_params(self, index: int, theta: dict[str, Any]) -> TrialRecord:
        t0 = time.perf_counter()
        trial_explainer = Explainer(
            self.explainer.kind,
            params={**self.explainer.params, **theta},
            baseline=self.explainer.baseline,
            reference=self.explainer.reference,
            layer_index=self.explainer.layer_index,
            use_probabilities=self.explainer.use_probabilities,
        )
        n = min(len(self.bundle.train_shadow), len(self.bundle.test_shadow))
        n_eval = min(
            len(self.bundle.train_target), len(self.bundle.test_target), self.protocol.eval_size_cap
        )
        rows = {
            "member": trial_explainer.attribute_dataset(
                self.shadow, self.bundle.train_shadow.X[:n], seed=self._row_seeds["member"]
            ),
            "nonmember": trial_explainer.attribute_dataset(
                self.shadow, self.bundle.test_shadow.X[:n], seed=self._row_seeds["nonmember"]
            ),
            "eval_member": trial_explainer.attribute_dataset(
                self.target, self.bundle.train_target.X[:n_eval], seed=self._row_seeds["eval_member"]
            ),
            "eval_nonmember": trial_explainer.attribute_dataset(
                self.target, self.bundle.test_target.X[:n_eval], seed=self._row_seeds["eval_nonmember"]
            ),
        }
        mls_value, utility = self._measure(trial_explainer, rows)
        return TrialRecord(
            index=index,
            theta=dict(theta),
            mls=mls_value,
            utility=utility,
            delta_s_percent=self._delta(utility),
            wall_time_seconds=time.perf_counter() - t0,
            seed=self.master_seed,
        )


def _seed_key(rows_key: str) -> str:
    return {
        "member": "member",
        "nonmember": "nonmember",
        "eval_member": "eval_member",
        "eval_nonmember": "eval_nonmember",
    }[rows_key]


def optimize(
    evaluate: Callable[[int, dict[str, Any]], TrialRecord],
    space: dict[str, ParamSpec],
    trials: int = 20,
    n_explore: int = 5,
    seed: int = 0,
) -> tuple[TrialRecord, list[TrialRecord]]:
    """Explore-then-exploit search over a parameter space.

    The first ``n_explore`` trials sample uniformly; afterwards each trial
    mutates a uniformly chosen member of the current Pareto front.  Returns
    the selected best trial and the full log (length == ``trials``).
    """
    if not space:
        raise ValueError("empty search space")
    if not trials >= n_explore >= 1:
        raise ValueError("need trials >= n_explore >= 1")
    rng = np.random.default_rng(derive_seed(seed, "search"))
    records: list[TrialRecord] = []
    for t in range(trials):
        if t < n_explore:
            theta = sample_params(space, rng)
        else:
            front = pareto_front(records).members
            anchor = front[rng.integers(0, len(front))]
            theta = mutate_params(space, {k: anchor.theta[k] for k in space}, rng)
        records.append(evaluate(t, theta))
    return select_best(records), records


def optimize_parameterized(
    problem: HardeningProblem,
    space: dict[str, ParamSpec] | None = None,
    trials: int = 20,
    n_explore: int = 5,
) -> tuple[TrialRecord, list[TrialRecord]]:
    """Algorithmic re-tuning for methods with their own parameters."""
    if not problem.explainer.is_parameterized:
        raise ValueError(f"{problem.explainer.kind} has no tunable parameters; use the transform search")
    space = space or search_space(problem.explainer.kind)
    return optimize(
        problem.evaluate_explainer_params,
        space,
        trials=trials,
        n_explore=n_explore,
        seed=derive_seed(problem.master_seed, "optimize"),
    )


def optimize_nonparameterized(
    problem: HardeningProblem,
    space: dict[str, ParamSpec] | None = None,
    trials: int = 20,
    n_explore: int = 5,
    order: tuple[str, ...] = DEFAULT_ORDER,
    mask_mode: str = "signed",
) -> tuple[TrialRecord, list[TrialRecord]]:
    """Transform-parameter search over (sigma, c_min, c_max, tau)."""
    if space is None:
        space = default_transform_space(problem.raw_rows()["member"])

    def evaluate(index: int, theta: dict[str, Any]) -> TrialRecord:
        return problem.evaluate_transform(index, {**theta, "_order": order, "_mask_mode": mask_mode})

    return optimize(
        evaluate,
        space,
        trials=trials,
        n_explore=n_explore,
        seed=derive_seed(problem.master_seed, "optimize"),
    )


@dataclass
class OrderingRow:
    order: tuple[str, ...]
    pre_mls: float
    post_mls: float
    delta_s_percent: float
    utility: float
    recommended: bool


def ordering_ablation(
    problem: HardeningProblem,
    theta_grid: list[dict[str, Any]] | None = None,
    orders: list[tuple[str, ...]] | None = None,
) -> list[OrderingRow]:
    """Evaluate every transform ordering; one row per order.

    Each order is scored with every configuration in ``theta_grid`` (default:
    a single mid-range configuration from the calibrated space) and keeps its
    best post-hardening leakage.  The C->M->N row is flagged as the
    recommended default.
    """
    orders = orders or all_orders()
    if theta_grid is None:
        space = default_transform_space(problem.raw_rows()["member"])
        theta_grid = [
            {
                "sigma": 0.5 * space["sigma"].high,
                "c_min": 0.5 * space["c_min"].low,
                "c_max": 0.5 * space["c_max"].high,
                "tau": 0.5 * space["tau"].high,
            }
        ]
    pre_mls, _ = problem.baseline()
    rows = []
    index = 0
    for order in orders:
        best: TrialRecord | None = None
        for theta in theta_grid:
            rec = problem.evaluate_transform(index, {**theta, "_order": tuple(order), "_mask_mode": "signed"})
            index += 1
            if best is None or rec.mls < best.mls:
                best = rec
        rows.append(
            OrderingRow(
                order=tuple(order),
                pre_mls=pre_mls,
                post_mls=best.mls,
                delta_s_percent=best.delta_s_percent,
                utility=best.utility,
                recommended=tuple(order) == DEFAULT_ORDER,
            )
        )
    return rows
