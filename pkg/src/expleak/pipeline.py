"""End-to-end commands: audit, harden, ablate, report, train, explain.

Each command materializes a scenario from a :class:`~expleak.reporting.RunConfig`
(dataset -> split -> target/shadow training), runs its stage, writes CSV/JSON/
SVG outputs into a run directory, and finishes with a manifest that allows a
byte-identical replay.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

import numpy as np

from . import attack as atk
from . import nn, zoo
from .data import CsvSchema, Dataset, SplitBundle, SplitSpec, load_csv, make_synthetic, save_bundle_manifest, split
from .errors import ConfigError, ExpleakError, UnsupportedArchitectureError
from .explain import Explainer, attribution_to_csv, save_attribution
from .hardening import (
    DEFAULT_ORDER,
    HardeningProblem,
    ordering_ablation,
    optimize_nonparameterized,
    optimize_parameterized,
    pareto_front,
)
from .reporting import (
    RunConfig,
    bar_chart_svg,
    load_manifest,
    pareto_scatter_svg,
    write_csv,
    write_json,
    write_manifest,
)
from .seeding import derive_seed
from .sensitivity import EstimatorSpec


@dataclasses.dataclass
class Scenario:
    dataset: Dataset
    bundle: SplitBundle
    target: nn.Model
    shadow: nn.Model
    config: RunConfig

    @property
    def seeds(self) -> dict[str, int]:
        m = self.config.master_seed
        return {
            "master": m,
            "data": derive_seed(m, "data"),
            "split": derive_seed(m, "split"),
            "target_train": derive_seed(m, "target-train"),
            "shadow_train": derive_seed(m, "shadow-train"),
            "protocol": derive_seed(m, "protocol"),
        }


def _build_dataset(config: RunConfig) -> Dataset:
    spec = config.dataset
    if spec["kind"] == "synthetic":
        image_shape = spec.get("image_shape")
        return make_synthetic(
            spec["num_classes"],
            spec["d"],
            spec["n"],
            spec["class_separation"],
            derive_seed(config.master_seed, "data"),
            image_shape=None if image_shape is None else tuple(image_shape),
        )
    path = Path(spec["path"])
    if not path.exists():
        raise ConfigError(f"dataset file not found: {path}")
    schema = CsvSchema(
        has_header=spec.get("has_header", False),
        label_column=spec.get("label_column", 0),
        scale_features=spec.get("scale_features", False),
        num_classes=spec.get("num_classes"),
    )
    return load_csv(path, schema)


def _train_config(section: dict[str, Any], seed: int) -> zoo.TrainConfig:
    return zoo.TrainConfig(
        epochs=section.get("epochs", 100),
        learning_rate=section.get("learning_rate", 0.1),
        weight_decay=section.get("weight_decay", 1e-4),
        schedule=section.get("schedule", "cosine_annealing"),
        batch_size=section.get("batch_size", 32),
        seed=seed,
        target_test_accuracy=section.get("target_test_accuracy"),
    )


def build_scenario(config: RunConfig) -> Scenario:
    dataset = _build_dataset(config)
    split_spec = SplitSpec(seed=derive_seed(config.master_seed, "split"), **config.split)
    bundle = split(dataset, split_spec)
    target = zoo.train_named(
        config.target["architecture"],
        bundle.train_target,
        bundle.test_target,
        _train_config(config.target, derive_seed(config.master_seed, "target-train")),
    )
    shadow = zoo.train_named(
        config.shadow["architecture"],
        bundle.train_shadow,
        bundle.test_shadow,
        _train_config(config.shadow, derive_seed(config.master_seed, "shadow-train")),
    )
    return Scenario(dataset, bundle, target, shadow, config)


def _attack_protocol(config: RunConfig) -> atk.AttackProtocol:
    a = config.attack
    return atk.AttackProtocol(
        k_seeds=a.get("k_seeds", 20),
        epsilon=a.get("epsilon", 0.001),
        model=atk.AttackModelSpec(kind=a.get("model", "logistic"), hidden=tuple(a.get("hidden", [32]))),
        validation_fraction=a.get("validation_fraction", 0.25),
        eval_size_cap=a.get("eval_size_cap", 1000),
    )


def _make_explainer(config: RunConfig, spec: dict[str, Any], scenario: Scenario) -> Explainer:
    reference = scenario.bundle.train_shadow
    return Explainer(
        spec["kind"],
        params=spec.get("params", {}),
        reference=reference,
        use_probabilities=config.use_probability_gradients,
    )


def _estimator(config: RunConfig) -> EstimatorSpec:
    s = config.sensitivity
    return EstimatorSpec(method=s.get("estimator", "monte_carlo"), draws=s.get("draws", 16))


def _hardening_problem(config: RunConfig, scenario: Scenario, explainer: Explainer) -> HardeningProblem:
    return HardeningProblem(
        target=scenario.target,
        shadow=scenario.shadow,
        bundle=scenario.bundle,
        explainer=explainer,
        protocol=_attack_protocol(config),
        sensitivity_radius=config.sensitivity.get("radius", 0.25),
        sensitivity_estimator=_estimator(config),
        sensitivity_samples=config.sensitivity.get("samples", 8),
        master_seed=config.master_seed,
    )


def _prepare_dir(config: RunConfig, command: str, out_dir: str | Path | None) -> Path:
    path = Path(out_dir) if out_dir else config.resolve_output_dir(command)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_models(scenario: Scenario, out_dir: Path) -> None:
    nn.save_model(scenario.target, out_dir / "target.xlk")
    nn.save_model(scenario.shadow, out_dir / "shadow.xlk")
    zoo.save_training_log(scenario.target, out_dir / "target_log.csv")
    zoo.save_training_log(scenario.shadow, out_dir / "shadow_log.csv")
    save_bundle_manifest(scenario.bundle, out_dir / "bundle.json")


AUDIT_COLUMNS = ["explainer", "mls", "auc", "balanced_accuracy", "best_seed", "epsilon"]


def cmd_audit(config: RunConfig, out_dir: str | Path | None = None) -> Path:
    """Pre-hardening leakage profile: one row per configured explainer."""
    out = _prepare_dir(config, "audit", out_dir)
    scenario = build_scenario(config)
    protocol = _attack_protocol(config)
    rows = []
    for spec in config.explainer_specs():
        explainer = _make_explainer(config, spec, scenario)
        report = atk.run_attack_protocol(
            scenario.bundle, scenario.target, scenario.shadow, explainer, protocol, master_seed=config.master_seed
        )
        atk.save_attack_report(report, out / f"attack_report_{spec['kind']}.json")
        rows.append([spec["kind"], report.mls, report.auc, report.balanced_accuracy, report.best_seed, protocol.epsilon])
    write_csv(out / "audit_profile.csv", AUDIT_COLUMNS, rows)
    write_manifest(out, "audit", config, scenario.seeds)
    return out


TRIAL_COLUMNS = ["trial", "theta", "mls", "utility", "delta_s_percent"]
TIMING_COLUMNS = ["trial", "wall_time_seconds"]
SUMMARY_COLUMNS = [
    "explainer",
    "pre_mls",
    "post_mls",
    "pre_sensitivity",
    "post_sensitivity",
    "delta_s_percent",
    "delta_s_direction",
]


def cmd_harden(config: RunConfig, out_dir: str | Path | None = None) -> Path:
    """Hardening search for the configured explainer; emits trials + front + theta*."""
    out = _prepare_dir(config, "harden", out_dir)
    scenario = build_scenario(config)
    spec = config.hardening_explainer()
    explainer = _make_explainer(config, spec, scenario)
    problem = _hardening_problem(config, scenario, explainer)
    pre_mls, pre_u = problem.baseline()
    trials = config.hardening.get("trials", 20)
    n_explore = config.hardening.get("n_explore", 5)
    if explainer.is_parameterized:
        best, log = optimize_parameterized(problem, trials=trials, n_explore=n_explore)
    else:
        best, log = optimize_nonparameterized(
            problem,
            trials=trials,
            n_explore=n_explore,
            order=tuple(config.hardening.get("order", DEFAULT_ORDER)),
            mask_mode=config.hardening.get("mask_mode", "signed"),
        )
    front = pareto_front(log)
    write_csv(
        out / "trials.csv",
        TRIAL_COLUMNS,
        [[t.index, t.theta, t.mls, t.utility, t.delta_s_percent] for t in log],
    )
    write_csv(out / "trials_timing.csv", TIMING_COLUMNS, [[t.index, t.wall_time_seconds] for t in log])
    write_json(
        out / "pareto_front.json",
        {
            "ideal_point": [0.0, 0.0],
            "members": [
                {"trial": t.index, "theta": t.theta, "mls": t.mls, "utility": t.utility, "delta_s_percent": t.delta_s_percent}
                for t in front.members
            ],
        },
    )
    direction = "utility_gain" if best.utility < pre_u else ("unchanged" if best.utility == pre_u else "utility_loss")
    write_json(
        out / "best_config.json",
        {
            "explainer": explainer.kind,
            "theta": best.theta,
            "trial": best.index,
            "pre_mls": pre_mls,
            "post_mls": best.mls,
            "pre_sensitivity": pre_u,
            "post_sensitivity": best.utility,
            "delta_s_percent": abs(best.delta_s_percent),
            "delta_s_direction": direction,
        },
    )
    write_csv(
        out / "hardening_summary.csv",
        SUMMARY_COLUMNS,
        [[explainer.kind, pre_mls, best.mls, pre_u, best.utility, abs(best.delta_s_percent), direction]],
    )
    pareto_scatter_svg(
        out / "pareto_scatter.svg",
        [{"index": t.index, "x": t.mls, "y": t.delta_s_percent} for t in log],
        {t.index for t in front.members},
        title=f"Hardening trials: {explainer.kind}",
    )
    write_manifest(out, "harden", config, scenario.seeds, auxiliary=["trials_timing.csv"])
    return out


ORDERING_COLUMNS = ["order", "pre_mls", "post_mls", "delta_s_percent", "utility", "recommended"]
DISJOINT_COLUMNS = ["explainer", "mode", "mls", "auc", "balanced_accuracy"]
CROSS_ARCH_COLUMNS = ["explainer", "shadow_architecture", "mls", "auc", "balanced_accuracy"]
GAP_COLUMNS = ["explainer", "gap_label", "test_accuracy_target", "achieved_test_accuracy", "mls", "auc"]


def cmd_ablate(config: RunConfig, which: str, out_dir: str | Path | None = None) -> Path:
    """Ablations: ordering, disjoint, cross_architecture, generalization_gap."""
    out = _prepare_dir(config, f"ablate-{which}", out_dir)
    if which == "ordering":
        scenario = build_scenario(config)
        spec = config.hardening_explainer()
        explainer = _make_explainer(config, spec, scenario)
        problem = _hardening_problem(config, scenario, explainer)
        rows = ordering_ablation(problem)
        write_csv(
            out / "ordering.csv",
            ORDERING_COLUMNS,
            [["->".join(r.order), r.pre_mls, r.post_mls, r.delta_s_percent, r.utility, r.recommended] for r in rows],
        )
        seeds = scenario.seeds
    elif which == "disjoint":
        rows = []
        for mode in ("subset", "disjoint"):
            cfg = RunConfig.from_dict({**config.to_dict(), "split": {**config.split, "mode": mode}})
            scenario = build_scenario(cfg)
            protocol = _attack_protocol(cfg)
            for spec in cfg.explainer_specs():
                explainer = _make_explainer(cfg, spec, scenario)
                report = atk.run_attack_protocol(
                    scenario.bundle, scenario.target, scenario.shadow, explainer, protocol, master_seed=cfg.master_seed
                )
                rows.append([spec["kind"], mode, report.mls, report.auc, report.balanced_accuracy])
        write_csv(out / "disjoint.csv", DISJOINT_COLUMNS, rows)
        seeds = {"master": config.master_seed}
    elif which == "cross_architecture":
        scenario = build_scenario(config)
        protocol = _attack_protocol(config)
        rows = []
        for arch in config.ablation.get("architectures", ["mlp_a", "mlp_b"]):
            shadow_cfg = _train_config(config.shadow, derive_seed(config.master_seed, "shadow-train", arch))
            try:
                shadow = zoo.train_named(arch, scenario.bundle.train_shadow, scenario.bundle.test_shadow, shadow_cfg)
            except (ExpleakError, ValueError) as err:
                raise ConfigError(f"shadow architecture {arch!r} failed: {err}") from err
            for spec in config.explainer_specs():
                explainer = _make_explainer(config, spec, scenario)
                try:
                    report = atk.run_attack_protocol(
                        scenario.bundle, scenario.target, shadow, explainer, protocol, master_seed=config.master_seed
                    )
                except UnsupportedArchitectureError:
                    rows.append([spec["kind"], arch, float("nan"), float("nan"), float("nan")])
                    continue
                rows.append([spec["kind"], arch, report.mls, report.auc, report.balanced_accuracy])
        write_csv(out / "cross_architecture.csv", CROSS_ARCH_COLUMNS, rows)
        seeds = scenario.seeds
    elif which == "generalization_gap":
        # Early-stopping at a low test-accuracy target halts before the model
        # memorizes (small gap); a target of 1.0 is never reached, so the
        # model trains to completion and overfits (large gap).
        rows = []
        targets = sorted(config.ablation.get("generalization_gap_targets", [0.3, 1.0]))
        labels = [f"gap_{i}" for i in range(len(targets))]
        labels[0] = "low_gap"
        labels[-1] = "high_gap"
        for label, acc_target in zip(labels, targets):
            cfg = RunConfig.from_dict(
                {**config.to_dict(), "target": {**config.target, "target_test_accuracy": None if acc_target >= 1 else acc_target}}
            )
            scenario = build_scenario(cfg)
            protocol = _attack_protocol(cfg)
            for spec in cfg.explainer_specs():
                explainer = _make_explainer(cfg, spec, scenario)
                report = atk.run_attack_protocol(
                    scenario.bundle, scenario.target, scenario.shadow, explainer, protocol, master_seed=cfg.master_seed
                )
                rows.append(
                    [
                        spec["kind"],
                        label,
                        acc_target,
                        scenario.target.meta["test_accuracy"],
                        report.mls,
                        report.auc,
                    ]
                )
        write_csv(out / "generalization_gap.csv", GAP_COLUMNS, rows)
        seeds = {"master": config.master_seed}
    else:
        raise ConfigError(f"unknown ablation {which!r}")
    write_manifest(out, f"ablate-{which}", config, seeds)
    return out


def cmd_train(config: RunConfig, out_dir: str | Path | None = None) -> Path:
    """Train and persist the target/shadow pair with logs and the bundle."""
    out = _prepare_dir(config, "train", out_dir)
    scenario = build_scenario(config)
    _write_models(scenario, out)
    write_json(
        out / "accuracy.json",
        {
            "target": {
                "train_accuracy": scenario.target.meta["train_accuracy"],
                "test_accuracy": scenario.target.meta["test_accuracy"],
            },
            "shadow": {
                "train_accuracy": scenario.shadow.meta["train_accuracy"],
                "test_accuracy": scenario.shadow.meta["test_accuracy"],
            },
        },
    )
    write_manifest(out, "train", config, scenario.seeds)
    return out


def cmd_explain(
    config: RunConfig,
    sample_index: int = 0,
    explainer_kind: str | None = None,
    out_dir: str | Path | None = None,
) -> Path:
    """Dump one sample's attribution (binary XATT + CSV)."""
    out = _prepare_dir(config, "explain", out_dir)
    scenario = build_scenario(config)
    spec = {"kind": explainer_kind, "params": {}} if explainer_kind else config.explainer_specs()[0]
    explainer = _make_explainer(config, spec, scenario)
    pool = scenario.bundle.train_target
    if not 0 <= sample_index < len(pool):
        raise ConfigError(f"sample index {sample_index} outside the target training set (size {len(pool)})")
    att = explainer.attribute(
        scenario.target, pool.X[sample_index], seed=derive_seed(config.master_seed, "explain", sample_index)
    )
    save_attribution(att, out / "attribution.xatt")
    attribution_to_csv(att, out / "attribution.csv")
    write_manifest(out, "explain", config, scenario.seeds)
    return out


REPORT_RUNTIME_COLUMNS = ["explainer", "total_wall_time_seconds", "trials"]


def cmd_report(run_dirs: list[str | Path], out_dir: str | Path) -> Path:
    """Consolidate one or more run directories into a summary report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ConfigError("no run directories given")
    summary: dict[str, Any] = {"runs": []}
    runtime_rows: list[list[Any]] = []
    for run in run_dirs:
        manifest_path = run / "manifest.json"
        if not manifest_path.exists():
            raise ConfigError(f"{run} has no manifest.json; not a run directory")
        manifest = load_manifest(manifest_path)
        entry: dict[str, Any] = {"dir": str(run), "command": manifest["command"], "config_hash": manifest["config_hash"]}
        profile = run / "audit_profile.csv"
        if profile.exists():
            entry["audit_profile"] = profile.read_text().strip().splitlines()[1:]
        best = run / "best_config.json"
        if best.exists():
            entry["hardening"] = load_manifest(best)
        timing = run / "trials_timing.csv"
        if timing.exists():
            lines = timing.read_text().strip().splitlines()[1:]
            total = sum(float(line.split(",")[1]) for line in lines)
            kind = entry.get("hardening", {}).get("explainer", "unknown")
            runtime_rows.append([kind, total, len(lines)])
        summary["runs"].append(entry)
    write_json(out / "report.json", summary)
    write_csv(out / "runtime_overhead.csv", REPORT_RUNTIME_COLUMNS, runtime_rows)
    if runtime_rows:
        bar_chart_svg(
            out / "runtime_overhead.svg",
            [r[0] for r in runtime_rows],
            [r[1] for r in runtime_rows],
            title="Hardening runtime overhead",
            y_label="total wall time (s)",
        )
    return out


def replay(manifest_path: str | Path, out_dir: str | Path) -> Path:
    """Re-run a command from its manifest into a fresh directory."""
    manifest = load_manifest(manifest_path)
    config = RunConfig.from_dict(manifest["config"])
    command = manifest["command"]
    if command == "audit":
        return cmd_audit(config, out_dir)
    if command == "harden":
        return cmd_harden(config, out_dir)
    if command.startswith("ablate-"):
        return cmd_ablate(config, command.removeprefix("ablate-"), out_dir)
    if command == "train":
        return cmd_train(config, out_dir)
    if command == "explain":
        return cmd_explain(config, out_dir=out_dir)
    raise ConfigError(f"cannot replay command {command!r}")
