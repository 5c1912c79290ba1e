"""Explanation methods behind one dispatching interface.

Fifteen post-hoc methods across four families (gradient, perturbation,
representation, approximation).  Each is available as a plain function and
through :class:`Explainer`, which binds a method kind to validated
parameters and produces attribution vectors of a fixed dimensionality for
whole datasets -- the shape the membership attack consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import nn
from ..data import Dataset
from ..errors import UnsupportedArchitectureError
from ..seeding import derive_seed
from .anchors import AnchorResult, anchors
from .base import (
    AttributionMap,
    Segmentation,
    attribution_to_csv,
    load_attribution,
    masked_input,
    save_attribution,
    segment_grid,
)
from .cam import gradcam, gradcam_pp
from .gradients import (
    deconvolution,
    deeplift,
    grad_explain,
    guided_backprop,
    input_x_gradient,
    integrated_gradients,
    noise_aggregate_explain,
    saliency,
    smoothgrad,
    vargrad,
)
from .params import (
    EXPLAINER_KINDS,
    NON_PARAMETERIZED,
    PARAMETERIZED,
    PARAM_SCHEMAS,
    ParamSpec,
    default_params,
    search_space,
    validate_params,
)
from .perturbation import kernel_shap, lime_explain, occlusion
from .protodash import protodash, protodash_explain

__all__ = [
    "AnchorResult",
    "AttributionMap",
    "EXPLAINER_KINDS",
    "Explainer",
    "NON_PARAMETERIZED",
    "PARAMETERIZED",
    "PARAM_SCHEMAS",
    "ParamSpec",
    "Segmentation",
    "anchors",
    "attribution_to_csv",
    "deconvolution",
    "deeplift",
    "default_params",
    "grad_explain",
    "gradcam",
    "gradcam_pp",
    "guided_backprop",
    "input_x_gradient",
    "integrated_gradients",
    "kernel_shap",
    "lime_explain",
    "load_attribution",
    "masked_input",
    "noise_aggregate_explain",
    "occlusion",
    "protodash",
    "protodash_explain",
    "saliency",
    "save_attribution",
    "search_space",
    "segment_grid",
    "smoothgrad",
    "validate_params",
    "vargrad",
]


def _expand_per_axis(value: int, input_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Scalar window/stride -> full tuple; channel axes fully covered."""
    if len(input_shape) == 1:
        return (int(value),)
    c = input_shape[0]
    return (c,) + (int(value),) * (len(input_shape) - 1)


@dataclass
class Explainer:
    """A method kind bound to validated parameters and shared resources.

    ``reference`` supplies candidate/baseline data for methods that need it
    (prototype selection, noise centers drawn from a distribution).  The
    wrapper is a pure function of (model, x, params, seed): stochastic
    methods derive their randomness from the ``seed`` argument alone.
    """

    kind: str
    params: dict[str, Any] = field(default_factory=dict)
    baseline: np.ndarray | None = None
    reference: Dataset | None = None
    layer_index: int | None = None
    use_probabilities: bool = False

    def __post_init__(self):
        self.params = validate_params(self.kind, self.params)

    @property
    def is_parameterized(self) -> bool:
        return self.kind in PARAMETERIZED

    def _segmentation(self, input_shape: tuple[int, ...]) -> Segmentation:
        n_segments = min(self.params["n_segments"], int(np.prod(input_shape[-2:] if len(input_shape) == 3 else input_shape)))
        return segment_grid(input_shape, n_segments, float(self.params["compactness"]))

    def attribute(
        self,
        model: nn.Model,
        x: np.ndarray,
        class_index: int | None = None,
        seed: int = 0,
    ) -> AttributionMap:
        """Attribution for one input; ``class_index=None`` explains the prediction."""
        x = np.asarray(x, dtype=np.float64)
        if class_index is None:
            logits, _ = nn.forward_batch(model, x[None])
            class_index = int(logits[0].argmax())
        p = self.params
        kind = self.kind
        if kind == "saliency":
            return saliency(model, x, class_index, use_probabilities=self.use_probabilities)
        if kind == "deconvolution":
            return deconvolution(model, x, class_index, use_probabilities=self.use_probabilities)
        if kind == "guided_backprop":
            return guided_backprop(model, x, class_index, use_probabilities=self.use_probabilities)
        if kind == "input_x_gradient":
            return input_x_gradient(model, x, class_index, use_probabilities=self.use_probabilities)
        if kind in ("smoothgrad", "vargrad"):
            return noise_aggregate_explain(
                model,
                x,
                class_index,
                n=p["n_samples"],
                stdevs=p["stdevs"],
                aggregator="mean_abs_grad" if kind == "smoothgrad" else "variance_grad",
                draw_baseline_from_distrib=p["draw_baseline_from_distrib"],
                reference=None if self.reference is None else self.reference.X,
                seed=seed,
                use_probabilities=self.use_probabilities,
            )
        if kind == "integrated_gradients":
            return integrated_gradients(
                model,
                x,
                class_index,
                baseline=self.baseline,
                n_steps=p["n_steps"],
                method=p["method"],
                multiply_by_inputs=p["multiply_by_inputs"],
                use_probabilities=self.use_probabilities,
            )
        if kind == "deeplift":
            return deeplift(model, x, self.baseline, class_index)
        if kind == "occlusion":
            return occlusion(
                model,
                x,
                class_index,
                window=_expand_per_axis(p["sliding_window_shapes"], x.shape),
                strides=_expand_per_axis(p["strides"], x.shape),
                baseline_value=p["baseline_value"],
            )
        if kind == "kernel_shap":
            return kernel_shap(
                model,
                x,
                class_index,
                self._segmentation(x.shape),
                n_samples=p["n_samples"],
                baseline_value=p["baseline_value"],
                seed=seed,
            )
        if kind == "lime":
            return lime_explain(
                model,
                x,
                class_index,
                self._segmentation(x.shape),
                n_samples=p["n_samples"],
                kernel_width=p["kernel_width"],
                ridge_lambda=p["ridge_lambda"],
                seed=seed,
                baseline_value=p["baseline_value"],
            )
        if kind in ("gradcam", "gradcam_pp"):
            return gradcam(
                model,
                x,
                class_index,
                layer_index=self.layer_index,
                variant=kind,
                interpolation=p["interpolation_mode"],
                attr_to_layer_input=p["attr_to_layer_input"],
                use_probabilities=self.use_probabilities,
            )
        if kind == "anchors":
            result = anchors(
                model,
                x,
                self._segmentation(x.shape),
                precision_threshold=p["threshold"],
                tau=p["tau"],
                delta=p["delta"],
                beam_size=p["beam_size"],
                p_sample=p["p_sample"],
                coverage_samples=p["coverage_samples"],
                batch_size=p["batch_size"],
                seed=seed,
                baseline_value=p["baseline_value"],
            )
            return result.mask
        if kind == "protodash":
            if self.reference is None:
                raise UnsupportedArchitectureError("protodash needs a reference dataset")
            return protodash_explain(
                model,
                x,
                self.reference,
                n_prototypes=p["n_prototypes"],
                sigma=p["sigma"],
                kernel=p["kernel"],
            )
        raise ValueError(f"unknown explainer kind {kind!r}")

    def attribute_dataset(
        self,
        model: nn.Model,
        X: np.ndarray,
        seed: int = 0,
    ) -> np.ndarray:
        """Flattened attribution vectors, one row per sample.

        Per-sample seeds derive from ``seed`` and the row index, so the
        matrix is reproducible regardless of chunking or ordering.
        """
        X = np.asarray(X, dtype=np.float64)
        rows = [self.attribute(model, X[i], seed=derive_seed(seed, i)).flat for i in range(len(X))]
        return np.stack(rows) if rows else np.zeros((0, 0))

    def attribution_dim(self, model: nn.Model, input_shape: tuple[int, ...]) -> int:
        if self.kind == "protodash":
            if self.reference is None:
                raise UnsupportedArchitectureError("protodash needs a reference dataset")
            return len(self.reference)
        return int(np.prod(input_shape))
