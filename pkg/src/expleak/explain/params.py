"""Parameter schemas for every explanation method.

Each method exposes its tunable parameters with a default and a search
domain, which is what the hardening optimizer samples from.  Methods with
an empty schema are the non-parameterized family; those are hardened via
attribution transforms instead of parameter search.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

EXPLAINER_KINDS = (
    "saliency",
    "deconvolution",
    "guided_backprop",
    "input_x_gradient",
    "smoothgrad",
    "vargrad",
    "integrated_gradients",
    "deeplift",
    "occlusion",
    "kernel_shap",
    "lime",
    "gradcam",
    "gradcam_pp",
    "anchors",
    "protodash",
)

GRADIENT_FAMILY = (
    "saliency",
    "deconvolution",
    "guided_backprop",
    "input_x_gradient",
    "smoothgrad",
    "vargrad",
    "integrated_gradients",
    "deeplift",
)
PERTURBATION_FAMILY = ("occlusion", "kernel_shap", "anchors")
REPRESENTATION_FAMILY = ("gradcam", "gradcam_pp")
APPROXIMATION_FAMILY = ("lime", "protodash")

# Methods without tunable parameters; hardened by attribution transforms.
NON_PARAMETERIZED = ("saliency", "deconvolution", "guided_backprop", "input_x_gradient", "deeplift")
PARAMETERIZED = tuple(k for k in EXPLAINER_KINDS if k not in NON_PARAMETERIZED)


@dataclass(frozen=True)
class ParamSpec:
    """One named parameter: type, default, and search domain."""

    name: str
    kind: str  # "continuous" | "integer" | "categorical" | "boolean"
    default: Any
    low: float | None = None
    high: float | None = None
    choices: tuple | None = None

    def contains(self, value) -> bool:
        if self.kind == "continuous":
            return isinstance(value, (int, float, np.floating, np.integer)) and (
                self.low <= float(value) <= self.high
            )
        if self.kind == "integer":
            return float(value) == int(value) and self.low <= int(value) <= self.high
        if self.kind == "boolean":
            return value in (True, False)
        if self.kind == "categorical":
            return value in self.choices
        raise ValueError(f"unknown param kind {self.kind!r}")


def _c(name, default, low, high):
    return ParamSpec(name, "continuous", default, low=float(low), high=float(high))


def _i(name, default, low, high):
    return ParamSpec(name, "integer", default, low=int(low), high=int(high))


def _b(name, default):
    return ParamSpec(name, "boolean", default)


def _cat(name, default, choices):
    return ParamSpec(name, "categorical", default, choices=tuple(choices))


IG_METHODS = ("gausslegendre", "riemann_right", "riemann_left", "riemann_middle", "riemann_trapezoid")

PARAM_SCHEMAS: dict[str, dict[str, ParamSpec]] = {
    "saliency": {},
    "deconvolution": {},
    "guided_backprop": {},
    "input_x_gradient": {},
    "deeplift": {},
    "smoothgrad": {
        "stdevs": _c("stdevs", 1.0, 1e-3, 4.0),
        "draw_baseline_from_distrib": _b("draw_baseline_from_distrib", False),
        "n_samples": _i("n_samples", 25, 1, 128),
    },
    "vargrad": {
        "stdevs": _c("stdevs", 1.0, 1e-3, 4.0),
        "draw_baseline_from_distrib": _b("draw_baseline_from_distrib", False),
        "n_samples": _i("n_samples", 25, 1, 128),
    },
    "integrated_gradients": {
        "multiply_by_inputs": _b("multiply_by_inputs", True),
        "method": _cat("method", "gausslegendre", IG_METHODS),
        "n_steps": _i("n_steps", 50, 1, 512),
    },
    "occlusion": {
        # Per spatial axis; channel axes are always fully covered.
        "sliding_window_shapes": _i("sliding_window_shapes", 1, 1, 8),
        "strides": _i("strides", 1, 1, 8),
        "baseline_value": _c("baseline_value", 0.0, -1.0, 1.0),
    },
    "kernel_shap": {
        "n_segments": _i("n_segments", 50, 2, 64),
        "compactness": _i("compactness", 20, 1, 100),
        "n_samples": _i("n_samples", 256, 16, 2048),
        "baseline_value": _c("baseline_value", 0.0, -1.0, 1.0),
    },
    "lime": {
        "n_segments": _i("n_segments", 50, 2, 64),
        "compactness": _i("compactness", 20, 1, 100),
        "n_samples": _i("n_samples", 256, 16, 2048),
        # Multiplies sqrt(n_segments) to give the locality kernel width.
        "kernel_width": _c("kernel_width", 0.75, 0.05, 4.0),
        "ridge_lambda": _c("ridge_lambda", 1e-3, 0.0, 1.0),
        "baseline_value": _c("baseline_value", 0.0, -1.0, 1.0),
    },
    "gradcam": {
        "interpolation_mode": _cat("interpolation_mode", "nearest", ("nearest", "bilinear")),
        "attr_to_layer_input": _b("attr_to_layer_input", False),
    },
    "gradcam_pp": {
        "interpolation_mode": _cat("interpolation_mode", "nearest", ("nearest", "bilinear")),
        "attr_to_layer_input": _b("attr_to_layer_input", False),
    },
    "anchors": {
        "threshold": _c("threshold", 0.95, 0.01, 0.99),
        "tau": _c("tau", 0.15, 0.01, 0.99),
        "delta": _c("delta", 0.1, 0.01, 0.99),
        "batch_size": _i("batch_size", 100, 10, 500),
        "coverage_samples": _i("coverage_samples", 10000, 100, 20000),
        "beam_size": _i("beam_size", 1, 1, 4),
        "p_sample": _c("p_sample", 0.5, 0.05, 0.95),
        "n_segments": _i("n_segments", 15, 2, 32),
        "compactness": _i("compactness", 20, 1, 100),
        "baseline_value": _c("baseline_value", 0.0, -1.0, 1.0),
    },
    "protodash": {
        "sigma": _c("sigma", 2.0, 1e-3, 10.0),
        "kernel": _cat("kernel", "linear", ("linear", "gaussian")),
        "n_prototypes": _i("n_prototypes", 10, 1, 32),
    },
}


def default_params(kind: str) -> dict[str, Any]:
    if kind not in PARAM_SCHEMAS:
        raise ValueError(f"unknown explainer kind {kind!r}")
    return {name: spec.default for name, spec in PARAM_SCHEMAS[kind].items()}


def validate_params(kind: str, params: dict[str, Any] | None) -> dict[str, Any]:
    """Fill defaults and check values against the schema domains."""
    schema = PARAM_SCHEMAS.get(kind)
    if schema is None:
        raise ValueError(f"unknown explainer kind {kind!r}")
    merged = default_params(kind)
    for name, value in (params or {}).items():
        if name not in schema:
            raise ValueError(f"{kind} has no parameter {name!r}")
        spec = schema[name]
        if not spec.contains(value):
            raise ValueError(f"{kind}.{name}={value!r} outside its domain")
        merged[name] = value
    return merged


def search_space(kind: str) -> dict[str, ParamSpec]:
    """Searchable parameters of a kind (copy of its schema)."""
    return dict(PARAM_SCHEMAS[kind])
