"""Perturbation- and surrogate-based explanation methods.

Occlusion slides a baseline-filled window over the input; Kernel SHAP
estimates Shapley values of input segments through a constrained weighted
least squares on coalition games; LIME fits a locality-weighted ridge
regression on binary segment masks.
"""

from __future__ import annotations

import itertools
import math
import time

import numpy as np

from .. import nn
from ..errors import SingularDesignError
from .base import AttributionMap, Segmentation, masked_input

Array = np.ndarray


def _class_scores(model: nn.Model, batch: Array, class_index: int) -> Array:
    logits, _ = nn.forward_batch(model, batch)
    return logits[:, class_index]


def occlusion(
    model: nn.Model,
    x: Array,
    class_index: int,
    window: tuple[int, ...],
    strides: tuple[int, ...],
    baseline_value: float = 0.0,
) -> AttributionMap:
    """Mean prediction drop over every sliding window covering a coordinate.

    ``window``/``strides`` have one entry per input axis.  Coordinates no
    window covers get attribution 0.
    """
    x = np.asarray(x, dtype=np.float64)
    window = tuple(int(w) for w in window)
    strides = tuple(int(s) for s in strides)
    if len(window) != x.ndim or len(strides) != x.ndim:
        raise ValueError(f"window/strides must have {x.ndim} entries")
    if any(w < 1 for w in window) or any(s < 1 for s in strides):
        raise ValueError("window and stride entries must be >= 1")
    if any(w > s for w, s in zip(window, x.shape)):
        raise ValueError(f"window {window} larger than input {x.shape}")
    t0 = time.perf_counter()
    starts_per_axis = [list(range(0, size - w + 1, s)) for size, w, s in zip(x.shape, window, strides)]
    origins = list(itertools.product(*starts_per_axis))
    occluded = np.empty((len(origins),) + x.shape)
    for i, origin in enumerate(origins):
        sl = tuple(slice(o, o + w) for o, w in zip(origin, window))
        patch = x.copy()
        patch[sl] = baseline_value
        occluded[i] = patch
    base_score = _class_scores(model, x[None], class_index)[0]
    scores = _class_scores(model, occluded, class_index)
    drops = base_score - scores
    sums = np.zeros_like(x)
    counts = np.zeros_like(x)
    for origin, drop in zip(origins, drops):
        sl = tuple(slice(o, o + w) for o, w in zip(origin, window))
        sums[sl] += drop
        counts[sl] += 1.0
    values = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return AttributionMap(
        values,
        "occlusion",
        params={"sliding_window_shapes": window, "strides": strides, "baseline_value": baseline_value},
        class_index=class_index,
        wall_time_seconds=time.perf_counter() - t0,
    )


def _shapley_kernel_weight(k: int, s: int) -> float:
    return (k - 1.0) / (math.comb(k, s) * s * (k - s))


def _coalition_values(
    model: nn.Model, x: Array, class_index: int, segmentation: Segmentation, coalitions: Array, baseline_value: float
) -> Array:
    batch = np.empty((len(coalitions),) + x.shape)
    for i, keep in enumerate(coalitions):
        batch[i] = masked_input(x, segmentation, keep, baseline_value)
    return _class_scores(model, batch, class_index)


def _solve_constrained_wls(z: Array, y: Array, weights: Array, total: float) -> Array:
    """Least squares of y on binary rows z subject to sum(phi) == total.

    Standard Kernel SHAP reduction: eliminate the last coefficient through
    the efficiency constraint and solve the weighted normal equations.
    """
    n, k = z.shape
    if k == 1:
        return np.array([total])
    zk = z[:, -1]
    design = z[:, :-1] - zk[:, None]
    target = y - zk * total
    sw = np.sqrt(weights)
    a = design * sw[:, None]
    b = target * sw
    gram = a.T @ a
    if np.linalg.matrix_rank(gram) < k - 1:
        raise SingularDesignError("coalition design is rank deficient; draw more samples")
    phi_head = np.linalg.solve(gram, a.T @ b)
    return np.concatenate([phi_head, [total - phi_head.sum()]])


def kernel_shap(
    model: nn.Model,
    x: Array,
    class_index: int,
    segmentation: Segmentation,
    n_samples: int | None = None,
    baseline_value: float = 0.0,
    seed: int = 0,
    exact: bool | None = None,
) -> AttributionMap:
    """Shapley-value estimates per segment, broadcast to coordinates.

    ``exact=None`` auto-selects exact enumeration of all 2^k coalitions for
    k <= 12 segments and Monte-Carlo sampling otherwise.  The efficiency
    property sum(phi) == f_c(x) - f_c(all-masked) is enforced through the
    constrained weighted least squares, so it holds to float precision.
    """
    x = np.asarray(x, dtype=np.float64)
    k = segmentation.n_segments
    if exact is None:
        exact = k <= 12
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)

    empty = np.zeros(k, dtype=bool)
    full = np.ones(k, dtype=bool)
    v_empty, v_full = _coalition_values(
        model, x, class_index, segmentation, np.stack([empty, full]), baseline_value
    )
    total = v_full - v_empty

    if k == 1:
        phi = np.array([total])
    elif exact:
        coalitions = []
        weights = []
        for bits in itertools.product((False, True), repeat=k):
            s = sum(bits)
            if s == 0 or s == k:
                continue
            coalitions.append(bits)
            weights.append(_shapley_kernel_weight(k, s))
        z = np.array(coalitions, dtype=float)
        y = _coalition_values(
            model, x, class_index, segmentation, np.array(coalitions, dtype=bool), baseline_value
        )
        phi = _solve_constrained_wls(z, y - v_empty, np.array(weights), total)
    else:
        if n_samples is None or n_samples < k + 2:
            raise ValueError(f"need n_samples >= {k + 2} for {k} segments (or exact mode)")
        # Sample coalition sizes proportional to the Shapley kernel mass,
        # then uniform subsets of that size; uniform weights in the fit.
        sizes = np.arange(1, k)
        size_mass = (k - 1.0) / (sizes * (k - sizes))
        size_mass /= size_mass.sum()
        coalitions = np.zeros((n_samples, k), dtype=bool)
        for i in range(n_samples):
            s = rng.choice(sizes, p=size_mass)
            coalitions[i, rng.choice(k, size=s, replace=False)] = True
        y = _coalition_values(model, x, class_index, segmentation, coalitions, baseline_value)
        phi = _solve_constrained_wls(coalitions.astype(float), y - v_empty, np.ones(n_samples), total)

    values = segmentation.broadcast(phi)
    return AttributionMap(
        values,
        "kernel_shap",
        params={
            "n_segments": k,
            "n_samples": n_samples,
            "baseline_value": baseline_value,
            "exact": bool(exact),
            "seed": seed,
        },
        class_index=class_index,
        wall_time_seconds=time.perf_counter() - t0,
    )


def lime_explain(
    model: nn.Model,
    x: Array,
    class_index: int,
    segmentation: Segmentation,
    n_samples: int = 256,
    kernel_width: float | None = None,
    ridge_lambda: float = 1e-3,
    seed: int = 0,
    baseline_value: float = 0.0,
    enumerate_masks: bool = False,
) -> AttributionMap:
    """Locality-weighted ridge surrogate on binary segment masks.

    Perturbations keep each segment with probability 1/2 (masked segments
    are filled with the baseline value); sample i gets locality weight
    exp(-d_i^2 / width^2) where d_i^2 counts its masked segments.  The
    fitted coefficients, one per segment, are broadcast to coordinates.
    """
    x = np.asarray(x, dtype=np.float64)
    k = segmentation.n_segments
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    if enumerate_masks:
        masks = np.array(list(itertools.product((False, True), repeat=k)), dtype=bool)
    else:
        if n_samples < k + 2:
            raise ValueError(f"need n_samples >= {k + 2} for {k} segments")
        masks = rng.random((n_samples, k)) < 0.5
        masks[0] = True  # anchor the fit at the unperturbed input
    y = _coalition_values(model, x, class_index, segmentation, masks, baseline_value)
    width = (kernel_width if kernel_width is not None else 0.75) * np.sqrt(k)
    dist_sq = (~masks).sum(axis=1).astype(float)
    pi = np.exp(-dist_sq / width**2)

    design = np.column_stack([masks.astype(float), np.ones(len(masks))])
    wdesign = design * pi[:, None]
    gram = design.T @ wdesign
    penalty = np.eye(k + 1) * ridge_lambda
    penalty[-1, -1] = 0.0  # intercept unpenalized
    lhs = gram + penalty
    if ridge_lambda == 0.0 and np.linalg.matrix_rank(lhs) < k + 1:
        raise SingularDesignError("weighted design is singular; draw more samples")
    coef = np.linalg.solve(lhs, wdesign.T @ y)
    values = segmentation.broadcast(coef[:-1])
    return AttributionMap(
        values,
        "lime",
        params={
            "n_segments": k,
            "n_samples": len(masks),
            "kernel_width": kernel_width,
            "ridge_lambda": ridge_lambda,
            "baseline_value": baseline_value,
            "seed": seed,
        },
        class_index=class_index,
        wall_time_seconds=time.perf_counter() - t0,
    )
