"""Run configuration, reproducibility manifests, and report emission.

A run directory is fully described by its ``manifest.json``: the resolved
configuration, the package version, the per-stage seeds, and a checksum
inventory of every deterministic output file.  Re-running a command from a
manifest reproduces those files byte for byte.  Wall-clock measurements
live in separate ``*_timing.csv`` files listed as auxiliary outputs, since
they legitimately differ between runs.

Plots are self-contained SVG written directly (scatter with the ideal-point
star, bar charts); no plotting dependency and no timestamps, so they
replay byte-identically too.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
from pathlib import Path
from typing import Any

from . import __version__
from .errors import ConfigError

OUTPUT_ROOT_ENV = "EXPLEAK_OUT"


# --------------------------------------------------------------------------
# run configuration


@dataclasses.dataclass
class RunConfig:
    """Everything a run needs; JSON round-trips losslessly.

    Flag-style overrides replace file values field by field (the CLI layer
    builds ``overrides`` from command-line options).
    """

    name: str = "run"
    master_seed: int = 7
    output_dir: str | None = None
    dataset: dict[str, Any] = dataclasses.field(
        default_factory=lambda: {
            "kind": "synthetic",
            "num_classes": 16,
            "d": 16,
            "n": 960,
            "class_separation": 2.0,
            "image_shape": None,
        }
    )
    split: dict[str, Any] = dataclasses.field(
        default_factory=lambda: {
            "n_train_target": 256,
            "n_test_target": 256,
            "n_train_shadow": 192,
            "n_test_shadow": 192,
            "mode": "subset",
            "nonmember_source": "holdout_in_distribution",
            "shift_mean": 0.5,
            "shift_noise": 0.25,
        }
    )
    target: dict[str, Any] = dataclasses.field(
        default_factory=lambda: {
            "architecture": "mlp_a",
            "epochs": 300,
            "learning_rate": 0.05,
            "weight_decay": 0.0,
            "schedule": "constant",
            "batch_size": 16,
            "target_test_accuracy": None,
        }
    )
    shadow: dict[str, Any] = dataclasses.field(
        default_factory=lambda: {
            "architecture": "mlp_a",
            "epochs": 300,
            "learning_rate": 0.05,
            "weight_decay": 0.0,
            "schedule": "constant",
            "batch_size": 16,
            "target_test_accuracy": None,
        }
    )
    explainers: list[Any] = dataclasses.field(default_factory=lambda: ["saliency"])
    use_probability_gradients: bool = True
    attack: dict[str, Any] = dataclasses.field(
        default_factory=lambda: {
            "k_seeds": 20,
            "epsilon": 0.001,
            "model": "logistic",
            "hidden": [32],
            "validation_fraction": 0.25,
            "eval_size_cap": 1000,
        }
    )
    hardening: dict[str, Any] = dataclasses.field(
        default_factory=lambda: {
            "trials": 20,
            "n_explore": 5,
            "order": ["C", "M", "N"],
            "mask_mode": "signed",
            "explainer": None,  # default: first configured explainer
        }
    )
    sensitivity: dict[str, Any] = dataclasses.field(
        default_factory=lambda: {"radius": 0.25, "estimator": "monte_carlo", "draws": 16, "samples": 8}
    )
    ablation: dict[str, Any] = dataclasses.field(
        default_factory=lambda: {
            "generalization_gap_targets": [0.3, 0.6],
            "architectures": ["mlp_a", "mlp_b"],
        }
    )

    def __post_init__(self):
        eps = self.attack.get("epsilon", 0.001)
        if not 0.0 <= eps < 1.0:
            raise ConfigError(f"attack.epsilon must be in [0, 1), got {eps}")
        if self.dataset.get("kind") not in ("synthetic", "csv"):
            raise ConfigError(f"unknown dataset kind {self.dataset.get('kind')!r}")
        for entry in self.explainer_specs():
            if not isinstance(entry, dict) or "kind" not in entry:
                raise ConfigError(f"bad explainer entry {entry!r}")

    def explainer_specs(self) -> list[dict[str, Any]]:
        out = []
        for e in self.explainers:
            out.append({"kind": e, "params": {}} if isinstance(e, str) else dict(e))
        return out

    def hardening_explainer(self) -> dict[str, Any]:
        kind = self.hardening.get("explainer")
        if kind is None:
            return self.explainer_specs()[0]
        for spec in self.explainer_specs():
            if spec["kind"] == kind:
                return spec
        return {"kind": kind, "params": {}}

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = cls()
        merged = {}
        for f in dataclasses.fields(cls):
            value = payload.get(f.name, getattr(base, f.name))
            default = getattr(base, f.name)
            if isinstance(default, dict) and isinstance(value, dict):
                value = {**default, **value}
            merged[f.name] = value
        return cls(**merged)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            payload = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {path} is not valid JSON: {err}") from None
        return cls.from_dict(payload)

    def resolve_output_dir(self, command: str) -> Path:
        if self.output_dir:
            root = Path(self.output_dir)
        else:
            root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        return root / f"{self.name}-{command}"


def config_hash(config: RunConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# --------------------------------------------------------------------------
# manifest


def file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(
    out_dir: Path,
    command: str,
    config: RunConfig,
    seeds: dict[str, int],
    auxiliary: list[str] = (),
) -> Path:
    """Checksum every deterministic output and record the resolved config."""
    inventory = {}
    aux = set(auxiliary) | {"manifest.json"}
    for path in sorted(out_dir.rglob("*")):
        if path.is_file() and path.name not in aux:
            inventory[str(path.relative_to(out_dir))] = file_sha256(path)
    manifest = {
        "command": command,
        "version": __version__,
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "seeds": seeds,
        "inventory": inventory,
        "auxiliary": sorted(set(auxiliary)),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_manifest(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def verify_replay(manifest_path: str | Path, replay_dir: str | Path) -> dict[str, Any]:
    """Compare a replayed run directory against a manifest's inventory."""
    manifest = load_manifest(manifest_path)
    replay_dir = Path(replay_dir)
    mismatches = []
    missing = []
    for rel, digest in manifest["inventory"].items():
        candidate = replay_dir / rel
        if not candidate.exists():
            missing.append(rel)
        elif file_sha256(candidate) != digest:
            mismatches.append(rel)
    return {"identical": not mismatches and not missing, "mismatched": mismatches, "missing": missing}


# --------------------------------------------------------------------------
# table writers (canonical float formatting via repr)


def write_csv(path: Path, header: list[str], rows: list[list[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(v: Any) -> Any:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(v, sort_keys=True)
    return v


def write_json(path: Path, payload: Any) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))


# --------------------------------------------------------------------------
# SVG plots (hand-rolled, no dependencies, no timestamps)


def _svg_header(width: int, height: int) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]


def _star_points(cx: float, cy: float, r: float) -> str:
    import math

    pts = []
    for i in range(10):
        radius = r if i % 2 == 0 else r * 0.4
        angle = -math.pi / 2 + i * math.pi / 5
        pts.append(f"{cx + radius * math.cos(angle):.2f},{cy + radius * math.sin(angle):.2f}")
    return " ".join(pts)


def pareto_scatter_svg(
    path: Path,
    points: list[dict[str, Any]],
    front_indices: set[int],
    x_label: str = "leakage (MLS)",
    y_label: str = "utility loss (delta-S %)",
    title: str = "Hardening trials",
) -> None:
    """Scatter of trials with the Pareto front highlighted and a red star at (0,0)."""
    width, height = 640, 480
    margin = 60
    xs = [p["x"] for p in points] + [0.0]
    ys = [p["y"] for p in points] + [0.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0
    x_lo -= 0.05 * x_span
    x_hi += 0.05 * x_span
    y_lo -= 0.05 * y_span
    y_hi += 0.05 * y_span

    def sx(v: float) -> float:
        return margin + (v - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(v: float) -> float:
        return height - margin - (v - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    parts = _svg_header(width, height)
    parts.append(f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-size="16">{title}</text>')
    # axes
    parts.append(
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>'
    )
    parts.append(f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>')
    parts.append(
        f'<text x="{width / 2:.0f}" y="{height - 16}" text-anchor="middle" font-size="12">{x_label}</text>'
    )
    parts.append(
        f'<text x="18" y="{height / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {height / 2:.0f})">{y_label}</text>'
    )
    for frac in (0.0, 0.5, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        parts.append(
            f'<text x="{sx(xv):.1f}" y="{height - margin + 16}" text-anchor="middle" font-size="10">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{sy(yv):.1f}" text-anchor="end" font-size="10">{yv:.3g}</text>'
        )
    for p in points:
        on_front = p["index"] in front_indices
        color = "#1f77b4" if not on_front else "#2ca02c"
        radius = 4 if not on_front else 6
        parts.append(
            f'<circle cx="{sx(p["x"]):.2f}" cy="{sy(p["y"]):.2f}" r="{radius}" fill="{color}" '
            f'fill-opacity="0.8"><title>trial {p["index"]}</title></circle>'
        )
    parts.append(f'<polygon points="{_star_points(sx(0.0), sy(0.0), 10)}" fill="red"/>')
    parts.append(
        f'<text x="{width - margin}" y="{margin - 8}" text-anchor="end" font-size="10">'
        f"green = Pareto front, red star = ideal (0,0)</text>"
    )
    parts.append("</svg>")
    path.write_text("\n".join(parts))


def bar_chart_svg(path: Path, labels: list[str], values: list[float], title: str, y_label: str) -> None:
    width, height = 640, 400
    margin = 60
    parts = _svg_header(width, height)
    parts.append(f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-size="16">{title}</text>')
    top = max(values) if values and max(values) > 0 else 1.0
    n = max(len(values), 1)
    slot = (width - 2 * margin) / n
    for i, (label, value) in enumerate(zip(labels, values)):
        bar_h = (value / top) * (height - 2 * margin)
        x = margin + i * slot + slot * 0.15
        y = height - margin - bar_h
        parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{slot * 0.7:.1f}" height="{bar_h:.1f}" fill="#1f77b4"/>')
        parts.append(
            f'<text x="{x + slot * 0.35:.1f}" y="{height - margin + 14}" text-anchor="middle" '
            f'font-size="9">{label}</text>'
        )
    parts.append(
        f'<text x="18" y="{height / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {height / 2:.0f})">{y_label}</text>'
    )
    parts.append(f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>')
    parts.append("</svg>")
    path.write_text("\n".join(parts))
