"""Prototype selection: greedily pick weighted examples that match a target set.

The target distribution is summarized by its mean embedding in kernel space;
candidates are selected one at a time by the gradient of the match objective
J(w) = w.u - 0.5 w.K w (u = mean kernel similarity to the target set, K the
candidate kernel matrix), and nonnegative weights are refit after every pick
through nonnegative least squares on the Cholesky-factored system.  J never
decreases across steps.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.optimize

from .. import nn
from ..data import Dataset
from .base import AttributionMap

Array = np.ndarray


def _kernel_matrix(a: Array, b: Array, kernel: str, sigma: float) -> Array:
    if kernel == "linear":
        return a @ b.T
    if kernel == "gaussian":
        sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-sq / (2.0 * sigma * sigma))
    raise ValueError(f"unknown kernel {kernel!r}")


def _refit_weights(k_sub: Array, u_sub: Array) -> Array:
    """argmax_{w >= 0} w.u - 0.5 w.K w via NNLS on the Cholesky factor."""
    jitter = 1e-10 * max(float(np.trace(k_sub)) / len(k_sub), 1.0)
    chol = np.linalg.cholesky(k_sub + jitter * np.eye(len(k_sub)))
    rhs = np.linalg.solve(chol, u_sub)
    w, _ = scipy.optimize.nnls(chol.T, rhs)
    return w


def protodash(
    target_embeddings: Array,
    candidate_embeddings: Array,
    m: int,
    sigma: float = 2.0,
    kernel: str = "linear",
) -> tuple[tuple[int, ...], Array, AttributionMap]:
    """Select up to ``m`` prototypes from the candidates for the target set.

    Returns (selected indices, their weights, attribution over candidates
    with each candidate's weight and zeros elsewhere).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if kernel == "gaussian" and sigma <= 0:
        raise ValueError("sigma must be > 0 for the gaussian kernel")
    targets = np.asarray(target_embeddings, dtype=np.float64)
    candidates = np.asarray(candidate_embeddings, dtype=np.float64)
    if len(candidates) == 0:
        raise ValueError("candidate set is empty")
    if len(targets) == 0:
        raise ValueError("target set is empty")
    t0 = time.perf_counter()
    u = _kernel_matrix(candidates, targets, kernel, sigma).mean(axis=1)
    k_full = _kernel_matrix(candidates, candidates, kernel, sigma)

    selected: list[int] = []
    weights = np.zeros(0)
    objective = 0.0
    for _ in range(min(m, len(candidates))):
        grad = u.copy()
        if selected:
            grad -= k_full[:, selected] @ weights
        grad[selected] = -np.inf
        pick = int(np.argmax(grad))
        if grad[pick] <= 1e-12:
            break
        selected.append(pick)
        k_sub = k_full[np.ix_(selected, selected)]
        u_sub = u[selected]
        new_weights = _refit_weights(k_sub, u_sub)
        new_objective = float(new_weights @ u_sub - 0.5 * new_weights @ k_sub @ new_weights)
        if new_objective < objective - 1e-12:
            # Refit can only improve; a drop means numerical trouble, stop.
            selected.pop()
            break
        weights = new_weights
        objective = new_objective

    values = np.zeros(len(candidates))
    values[selected] = weights
    att = AttributionMap(
        values,
        "protodash",
        params={"n_prototypes": m, "sigma": sigma, "kernel": kernel},
        class_index=None,
        wall_time_seconds=time.perf_counter() - t0,
    )
    return tuple(selected), weights, att


def protodash_explain(
    model: nn.Model,
    x: Array,
    reference: Dataset,
    n_prototypes: int = 10,
    sigma: float = 2.0,
    kernel: str = "linear",
) -> AttributionMap:
    """Explain one prediction by prototypes drawn from a reference dataset.

    Embeddings are the model's penultimate-layer activations.  The target
    set holds the reference samples the model predicts into the same class
    as ``x`` (all of them, if no reference sample shares the prediction);
    every reference sample is a candidate, so the attribution vector has one
    weight per reference row.
    """
    x = np.asarray(x, dtype=np.float64)
    t0 = time.perf_counter()
    emb_ref = nn.penultimate_activations(model, reference.X)
    logits_ref, _ = nn.forward_batch(model, reference.X)
    pred_ref = logits_ref.argmax(axis=1)
    logits_x, _ = nn.forward_batch(model, x[None])
    pred_x = int(logits_x[0].argmax())
    same = pred_ref == pred_x
    targets = emb_ref[same] if same.any() else emb_ref
    _, _, att = protodash(targets, emb_ref, n_prototypes, sigma=sigma, kernel=kernel)
    att.class_index = pred_x
    att.wall_time_seconds = time.perf_counter() - t0
    return att
