"""Gradient-family explanation methods.

All of these reduce to input gradients of the class score under one of the
three ReLU backward rules, optionally aggregated over noisy copies of the
input (SmoothGrad / VarGrad), integrated along a straight path from a
baseline (Integrated Gradients), or computed on finite differences from a
reference input (DeepLIFT, Rescale rule).
"""

from __future__ import annotations

import time
import warnings

import numpy as np

from .. import nn
from .base import AttributionMap

Array = np.ndarray

# Quadrature nodes/weights on [0, 1] for the fixed-node Gauss-Legendre
# variant; other step counts fall back to the trapezoid rule.
GAUSS_LEGENDRE_STEPS = (4, 8, 16, 32, 64)
_GL_TABLE = {}
for _n in GAUSS_LEGENDRE_STEPS:
    _x, _w = np.polynomial.legendre.leggauss(_n)
    _GL_TABLE[_n] = ((_x + 1.0) / 2.0, _w / 2.0)


def grad_explain(
    model: nn.Model,
    x: Array,
    class_index: int,
    rule: str = "standard",
    multiply_by_input: bool = False,
    absolute: bool = False,
    use_probabilities: bool = False,
) -> AttributionMap:
    """Single-backward-pass attribution; the flags select the named method.

    saliency          = (standard, absolute)
    deconvolution     = (deconv, raw)
    guided_backprop   = (guided, raw)
    input_x_gradient  = (standard, multiplied by the input)
    """
    x = np.asarray(x, dtype=np.float64)
    t0 = time.perf_counter()
    g = nn.input_gradient(model, x, class_index, rule=rule, use_probabilities=use_probabilities)
    if multiply_by_input:
        g = x * g
    if absolute:
        g = np.abs(g)
    method = {
        ("standard", False, True): "saliency",
        ("deconv", False, False): "deconvolution",
        ("guided", False, False): "guided_backprop",
        ("standard", True, False): "input_x_gradient",
    }.get((rule, multiply_by_input, absolute), "gradient")
    return AttributionMap(
        g,
        method,
        params={"rule": rule, "multiply_by_input": multiply_by_input, "absolute": absolute},
        class_index=class_index,
        wall_time_seconds=time.perf_counter() - t0,
    )


def saliency(model, x, class_index, use_probabilities=False) -> AttributionMap:
    return grad_explain(model, x, class_index, "standard", absolute=True, use_probabilities=use_probabilities)


def deconvolution(model, x, class_index, use_probabilities=False) -> AttributionMap:
    return grad_explain(model, x, class_index, "deconv", use_probabilities=use_probabilities)


def guided_backprop(model, x, class_index, use_probabilities=False) -> AttributionMap:
    return grad_explain(model, x, class_index, "guided", use_probabilities=use_probabilities)


def input_x_gradient(model, x, class_index, use_probabilities=False) -> AttributionMap:
    return grad_explain(
        model, x, class_index, "standard", multiply_by_input=True, use_probabilities=use_probabilities
    )


def noise_aggregate_explain(
    model: nn.Model,
    x: Array,
    class_index: int,
    n: int = 25,
    stdevs: float = 1.0,
    aggregator: str = "mean_abs_grad",
    draw_baseline_from_distrib: bool = False,
    reference: Array | None = None,
    seed: int = 0,
    use_probabilities: bool = False,
) -> AttributionMap:
    """Aggregate gradients over n Gaussian-noised copies of the input.

    ``mean_abs_grad`` averages absolute gradients (SmoothGrad); ``variance_grad``
    takes the elementwise variance of the signed gradients (VarGrad).
    ``stdevs`` is an absolute noise sigma in feature units.  With
    ``draw_baseline_from_distrib`` the noise centers are drawn uniformly from
    ``reference`` rows instead of sitting at ``x``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if stdevs < 0:
        raise ValueError("stdevs must be >= 0")
    if aggregator not in ("mean_abs_grad", "variance_grad"):
        raise ValueError(f"unknown aggregator {aggregator!r}")
    x = np.asarray(x, dtype=np.float64)
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    if draw_baseline_from_distrib:
        if reference is None:
            raise ValueError("draw_baseline_from_distrib requires a reference dataset")
        ref = np.asarray(reference, dtype=np.float64)
        centers = ref[rng.integers(0, len(ref), size=n)]
    else:
        centers = np.broadcast_to(x, (n,) + x.shape)
    noisy = centers + rng.standard_normal((n,) + x.shape) * stdevs
    grads = nn.input_gradient_batch(model, noisy, class_index, use_probabilities=use_probabilities)
    if aggregator == "mean_abs_grad":
        values = np.abs(grads).mean(axis=0)
        method = "smoothgrad"
    else:
        # Shifted variance: exact 0 for identical samples, better conditioned.
        shifted = grads - grads[0]
        values = np.maximum((shifted**2).mean(axis=0) - shifted.mean(axis=0) ** 2, 0.0)
        method = "vargrad"
    return AttributionMap(
        values,
        method,
        params={
            "n_samples": n,
            "stdevs": stdevs,
            "draw_baseline_from_distrib": draw_baseline_from_distrib,
            "seed": seed,
        },
        class_index=class_index,
        wall_time_seconds=time.perf_counter() - t0,
    )


def smoothgrad(model, x, class_index, n=25, stdevs=1.0, **kw) -> AttributionMap:
    return noise_aggregate_explain(model, x, class_index, n, stdevs, "mean_abs_grad", **kw)


def vargrad(model, x, class_index, n=25, stdevs=1.0, **kw) -> AttributionMap:
    return noise_aggregate_explain(model, x, class_index, n, stdevs, "variance_grad", **kw)


def path_quadrature(method: str, n_steps: int) -> tuple[Array, Array]:
    """Interpolation coefficients (alphas) and weights on [0, 1]."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if method == "gausslegendre":
        if n_steps in _GL_TABLE:
            return _GL_TABLE[n_steps]
        warnings.warn(
            f"gausslegendre supports n_steps in {GAUSS_LEGENDRE_STEPS}; "
            f"falling back to riemann_trapezoid for n_steps={n_steps}",
            stacklevel=2,
        )
        method = "riemann_trapezoid"
    n = n_steps
    if method == "riemann_left":
        return np.arange(n) / n, np.full(n, 1.0 / n)
    if method == "riemann_right":
        return (np.arange(n) + 1.0) / n, np.full(n, 1.0 / n)
    if method == "riemann_middle":
        return (np.arange(n) + 0.5) / n, np.full(n, 1.0 / n)
    if method == "riemann_trapezoid":
        if n == 1:
            return np.array([0.5]), np.array([1.0])
        alphas = np.linspace(0.0, 1.0, n)
        weights = np.full(n, 1.0 / (n - 1))
        weights[0] = weights[-1] = 0.5 / (n - 1)
        return alphas, weights
    raise ValueError(f"unknown integration method {method!r}")


def integrated_gradients(
    model: nn.Model,
    x: Array,
    class_index: int,
    baseline: Array | None = None,
    n_steps: int = 50,
    method: str = "gausslegendre",
    multiply_by_inputs: bool = True,
    use_probabilities: bool = False,
) -> AttributionMap:
    """Average the class-score gradient along the straight path baseline -> x.

    With ``multiply_by_inputs`` the averaged path gradient is scaled by
    (x - baseline), which makes the attributions sum to approximately
    f_c(x) - f_c(baseline) (exactly, in the quadrature limit).
    """
    x = np.asarray(x, dtype=np.float64)
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if baseline.shape != x.shape:
        raise ValueError(f"baseline shape {baseline.shape} != input shape {x.shape}")
    t0 = time.perf_counter()
    alphas, weights = path_quadrature(method, n_steps)
    diff = x - baseline
    points = baseline + alphas.reshape((-1,) + (1,) * x.ndim) * diff
    grads = nn.input_gradient_batch(model, points, class_index, use_probabilities=use_probabilities)
    avg = np.tensordot(weights, grads, axes=(0, 0))
    values = diff * avg if multiply_by_inputs else avg
    return AttributionMap(
        values,
        "integrated_gradients",
        params={"n_steps": n_steps, "method": method, "multiply_by_inputs": multiply_by_inputs},
        class_index=class_index,
        wall_time_seconds=time.perf_counter() - t0,
    )


def deeplift(
    model: nn.Model,
    x: Array,
    baseline: Array | None,
    class_index: int,
) -> AttributionMap:
    """Rescale-rule contributions against a reference input.

    At every ReLU the backward multiplier is the secant slope
    (relu(a) - relu(a')) / (a - a') instead of the local derivative, which
    makes the attributions satisfy summation-to-delta exactly:
    sum_i phi_i = f_c(x) - f_c(baseline) up to float rounding.
    """
    x = np.asarray(x, dtype=np.float64)
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if baseline.shape != x.shape:
        raise ValueError(f"baseline shape {baseline.shape} != input shape {x.shape}")
    t0 = time.perf_counter()
    _, trace_x = nn.forward_batch(model, x[None])
    _, trace_b = nn.forward_batch(model, baseline[None])
    num_classes = model.num_classes
    if not 0 <= class_index < num_classes:
        raise ValueError(f"class index {class_index} out of range [0, {num_classes})")
    g = np.zeros((1, num_classes))
    g[0, class_index] = 1.0
    for i in range(len(model.layers) - 1, -1, -1):
        spec, p = model.layers[i], model.params[i]
        if spec.kind == "relu":
            pre_x = trace_x.layer_inputs[i]
            pre_b = trace_b.layer_inputs[i]
            delta = pre_x - pre_b
            post_delta = np.maximum(pre_x, 0.0) - np.maximum(pre_b, 0.0)
            mult = np.where(delta != 0.0, np.divide(post_delta, np.where(delta != 0.0, delta, 1.0)), pre_x > 0)
            g = g * mult
        else:
            g = nn._layer_input_grad(spec, p, g, trace_x.layer_inputs[i], "standard")
    values = (x - baseline) * g[0]
    return AttributionMap(
        values,
        "deeplift",
        params={},
        class_index=class_index,
        wall_time_seconds=time.perf_counter() - t0,
    )
