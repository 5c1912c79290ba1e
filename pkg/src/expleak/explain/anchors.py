"""Anchor explanations: minimal segment sets that pin the prediction.

Greedy beam search over input segments.  A candidate anchor's precision is
the probability that the model keeps its original prediction when anchored
segments stay intact and every other segment is independently resampled to
the baseline with probability ``p_sample``.  Precision is estimated by
fixed-budget Monte Carlo with a Hoeffding confidence halfwidth; ``tau`` is
the halfwidth at which an estimate counts as settled and ``delta`` the
allowed failure probability of the bound.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .. import nn
from .base import AttributionMap, Segmentation

Array = np.ndarray


@dataclass
class AnchorResult:
    segments: tuple[int, ...]
    precision: float
    coverage: float
    mask: AttributionMap
    found: bool


def _halfwidth(n: int, delta: float) -> float:
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


class _PrecisionSampler:
    """Monte-Carlo precision estimates under a shared draw budget."""

    def __init__(self, model, x, segmentation, pred0, p_sample, baseline_value, rng, budget):
        self.model = model
        self.x = np.asarray(x, dtype=np.float64)
        self.seg = segmentation
        self.pred0 = pred0
        self.p_sample = p_sample
        self.baseline_value = baseline_value
        self.rng = rng
        self.budget = budget

    def draw_batch(self, anchor: frozenset[int], size: int) -> tuple[int, int]:
        size = min(size, max(self.budget, 1))
        k = self.seg.n_segments
        perturb = self.rng.random((size, k)) < self.p_sample
        if anchor:
            perturb[:, list(anchor)] = False
        batch = np.broadcast_to(self.x, (size,) + self.x.shape).copy()
        for i in range(size):
            drop = perturb[i][self.seg.ids]
            batch[i][drop] = self.baseline_value
        logits, _ = nn.forward_batch(self.model, batch)
        hits = int((logits.argmax(axis=1) == self.pred0).sum())
        self.budget -= size
        return hits, size

    def estimate(self, anchor: frozenset[int], threshold: float, tau: float, delta: float, batch_size: int) -> float:
        hits = n = 0
        while True:
            h, s = self.draw_batch(anchor, batch_size)
            hits += h
            n += s
            p = hits / n
            half = _halfwidth(n, delta)
            if half <= tau or self.budget <= 0:
                return p
            # Stop early once the bound settles the threshold either way.
            if p - half >= threshold or p + half < threshold:
                return p


def anchors(
    model: nn.Model,
    x: Array,
    segmentation: Segmentation,
    precision_threshold: float = 0.95,
    tau: float = 0.15,
    delta: float = 0.1,
    beam_size: int = 1,
    p_sample: float = 0.5,
    coverage_samples: int = 10000,
    batch_size: int = 100,
    seed: int = 0,
    baseline_value: float = 0.0,
) -> AnchorResult:
    """Grow the smallest anchor whose estimated precision clears the threshold.

    Returns the anchor segments, its precision and coverage estimates, and a
    binary attribution mask (1 on anchored coordinates).  If even the full
    segment set cannot be certified within the sampling budget the full
    anchor is returned with ``found=False``.
    """
    if not 0.0 <= precision_threshold <= 1.0:
        raise ValueError("precision_threshold must be in [0, 1]")
    for name, value in (("tau", tau), ("delta", delta), ("p_sample", p_sample)):
        if not 0.0 < value < 1.0:
            raise ValueError(f"{name} must be in (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    logits, _ = nn.forward_batch(model, x[None])
    pred0 = int(logits[0].argmax())
    k = segmentation.n_segments
    sampler = _PrecisionSampler(
        model, x, segmentation, pred0, p_sample, baseline_value, rng, budget=coverage_samples
    )

    def finish(anchor: frozenset[int], precision: float, found: bool) -> AnchorResult:
        cov_draws = max(coverage_samples, 1)
        perturb = rng.random((cov_draws, k)) < p_sample
        if anchor:
            holds = ~perturb[:, list(anchor)].any(axis=1)
            coverage = float(holds.mean())
        else:
            coverage = 1.0
        mask_values = np.zeros(k)
        mask_values[list(anchor)] = 1.0
        mask = AttributionMap(
            segmentation.broadcast(mask_values),
            "anchors",
            params={
                "threshold": precision_threshold,
                "tau": tau,
                "delta": delta,
                "beam_size": beam_size,
                "p_sample": p_sample,
                "coverage_samples": coverage_samples,
                "batch_size": batch_size,
                "seed": seed,
            },
            class_index=pred0,
            wall_time_seconds=time.perf_counter() - t0,
        )
        return AnchorResult(tuple(sorted(anchor)), precision, coverage, mask, found)

    empty = frozenset()
    p_empty = sampler.estimate(empty, precision_threshold, tau, delta, batch_size)
    if p_empty >= precision_threshold:
        return finish(empty, p_empty, True)

    beam: list[tuple[frozenset[int], float]] = [(empty, p_empty)]
    best_full: tuple[frozenset[int], float] | None = None
    for _ in range(k):
        candidates: dict[frozenset[int], float] = {}
        for anchor, _ in beam:
            for seg in range(k):
                if seg in anchor:
                    continue
                cand = anchor | {seg}
                if cand in candidates:
                    continue
                candidates[cand] = sampler.estimate(cand, precision_threshold, tau, delta, batch_size)
        if not candidates:
            break
        ranked = sorted(candidates.items(), key=lambda kv: (-kv[1], sorted(kv[0])))
        top_anchor, top_p = ranked[0]
        if top_p >= precision_threshold:
            return finish(top_anchor, top_p, True)
        beam = ranked[:beam_size]
        best_full = ranked[0]
        if sampler.budget <= 0:
            break

    full = frozenset(range(k))
    if best_full is not None and best_full[0] == full and best_full[1] >= precision_threshold:
        return finish(full, best_full[1], True)
    return finish(full, 1.0, False)
