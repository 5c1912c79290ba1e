"""Class activation maps from a convolutional layer's activations and gradients."""

from __future__ import annotations

import time

import numpy as np

from .. import nn
from ..errors import UnsupportedArchitectureError
from .base import AttributionMap

Array = np.ndarray


def _upsample_nearest(cam: Array, h: int, w: int) -> Array:
    src_h, src_w = cam.shape
    rows = np.minimum((np.arange(h) * src_h) // h, src_h - 1)
    cols = np.minimum((np.arange(w) * src_w) // w, src_w - 1)
    return cam[np.ix_(rows, cols)]


def _upsample_bilinear(cam: Array, h: int, w: int) -> Array:
    src_h, src_w = cam.shape
    if src_h == 1 and src_w == 1:
        return np.full((h, w), cam[0, 0])

    def axis_coords(n_out, n_in):
        if n_in == 1:
            return np.zeros(n_out), np.zeros(n_out, dtype=int), np.zeros(n_out, dtype=int)
        pos = np.linspace(0.0, n_in - 1.0, n_out)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return pos - lo, lo, hi

    fy, y0, y1 = axis_coords(h, src_h)
    fx, x0, x1 = axis_coords(w, src_w)
    top = cam[np.ix_(y0, x0)] * (1 - fx) + cam[np.ix_(y0, x1)] * fx
    bot = cam[np.ix_(y1, x0)] * (1 - fx) + cam[np.ix_(y1, x1)] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def gradcam(
    model: nn.Model,
    x: Array,
    class_index: int,
    layer_index: int | None = None,
    variant: str = "gradcam",
    interpolation: str = "nearest",
    attr_to_layer_input: bool = False,
    use_probabilities: bool = False,
) -> AttributionMap:
    """ReLU-rectified weighted sum of a conv layer's activation maps.

    The base variant weights each channel by its spatially averaged class
    gradient; ``gradcam_pp`` uses the closed-form second/third-power gradient
    weights, which sharpens maps when several regions contribute.  The map is
    upsampled to the input's spatial size and broadcast across channels, so
    the output matches the input shape.  Values are always >= 0.
    """
    if variant not in ("gradcam", "gradcam_pp"):
        raise ValueError(f"unknown variant {variant!r}")
    if interpolation not in ("nearest", "bilinear"):
        raise ValueError(f"unknown interpolation {interpolation!r}")
    x = np.asarray(x, dtype=np.float64)
    conv_layers = model.conv_layer_indices
    if not conv_layers:
        raise UnsupportedArchitectureError("model has no conv2d layer to explain")
    if layer_index is None:
        layer_index = conv_layers[-1]
    t0 = time.perf_counter()
    acts, grads = nn.layer_activations_and_gradient(
        model,
        x,
        class_index,
        layer_index,
        wrt="input" if attr_to_layer_input else "output",
        use_probabilities=use_probabilities,
    )
    if variant == "gradcam":
        alpha = grads.mean(axis=(1, 2))
    else:
        g2 = grads * grads
        g3 = g2 * grads
        denom = 2.0 * g2 + acts.sum(axis=(1, 2), keepdims=True) * g3
        w = np.divide(g2, denom, out=np.zeros_like(g2), where=denom != 0)
        alpha = (w * np.maximum(grads, 0.0)).sum(axis=(1, 2))
    cam = np.maximum(np.einsum("k,khw->hw", alpha, acts), 0.0)
    h, w_in = x.shape[-2], x.shape[-1]
    if interpolation == "nearest":
        plane = _upsample_nearest(cam, h, w_in)
    else:
        plane = _upsample_bilinear(cam, h, w_in)
    values = np.broadcast_to(plane, x.shape).copy()
    return AttributionMap(
        values,
        variant,
        params={
            "layer_index": layer_index,
            "interpolation_mode": interpolation,
            "attr_to_layer_input": attr_to_layer_input,
        },
        class_index=class_index,
        wall_time_seconds=time.perf_counter() - t0,
    )


def gradcam_pp(model, x, class_index, **kw) -> AttributionMap:
    return gradcam(model, x, class_index, variant="gradcam_pp", **kw)
