"""Saliency generators: attention rollout, gradient-weighted relevance
rollout, and a LIME-style local surrogate. All emit an :class:`Attribution`
whose values live on the pixel grid, min-max normalized into [0, 1]; a
constant raw map normalizes to all zeros since it carries no information.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ForwardTrace
from .ops import ShapeMismatchError

# raw maps whose spread is below this (relative to magnitude) are constant
_CONSTANT_TOL = 1e-12
RIDGE_LAMBDA = 1e-3


class DegenerateDesignError(RuntimeError):
    """Raised when LIME mask sampling cannot produce a usable design."""


@dataclass
class Attribution:
    """A per-pixel saliency map in [0, 1].

    ``target_class`` is None for class-agnostic maps (attention rollout);
    ``binary`` marks maps whose values are only {0, 1} (LIME).
    """

    values: np.ndarray
    explainer: str
    target_class: int | None = None
    binary: bool = False


def normalize_attribution(raw: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant map becomes all zeros."""
    raw = np.asarray(raw, dtype=np.float64)
    lo = float(raw.min())
    hi = float(raw.max())
    if hi - lo <= _CONSTANT_TOL * max(1.0, abs(hi)):
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


def upsample_patch_map(patch_map: np.ndarray, image_size: int) -> np.ndarray:
    """Expand a g x g patch grid to pixels by nearest-neighbor blocks."""
    g = patch_map.shape[0]
    if patch_map.shape != (g, g):
        raise ShapeMismatchError(f"patch map must be square, got "
                                 f"{patch_map.shape}")
    if image_size % g != 0:
        raise ShapeMismatchError(f"image size {image_size} not divisible by "
                                 f"patch grid {g}")
    block = image_size // g
    return np.kron(patch_map, np.ones((block, block), dtype=patch_map.dtype))


# ---------------------------------------------------------------- heads


@dataclass(frozen=True)
class HeadAggregation:
    """How to reduce the head axis: average, minimum, or maximum followed by
    zeroing the lowest ``fraction`` of entries."""

    kind: str
    fraction: float | None = None

    def __post_init__(self):
        if self.kind not in ("average", "minimum", "max_discard"):
            raise ValueError(f"unknown aggregation kind {self.kind!r}")
        if self.kind == "max_discard":
            if self.fraction is None or not 0.0 < self.fraction < 1.0:
                raise ValueError("max_discard needs a fraction in (0, 1), "
                                 f"got {self.fraction}")
        elif self.fraction is not None:
            raise ValueError(f"{self.kind} takes no fraction")

    @property
    def tag(self) -> str:
        if self.kind == "max_discard":
            return f"max_discard:{self.fraction:g}"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "HeadAggregation":
        if text in ("average", "minimum"):
            return cls(text)
        if text == "max_discard":
            return cls("max_discard", 0.99)
        if text.startswith("max_discard:"):
            return cls("max_discard", float(text.split(":", 1)[1]))
        raise ValueError(f"cannot parse aggregation {text!r}; expected "
                         f"average, minimum, max_discard or max_discard:F")


AVERAGE = HeadAggregation("average")
MINIMUM = HeadAggregation("minimum")


def max_discard(fraction: float = 0.99) -> HeadAggregation:
    return HeadAggregation("max_discard", fraction)


def aggregate_heads(attn: np.ndarray,
                    method: HeadAggregation) -> np.ndarray:
    """Reduce (heads, n, n) to (n, n).

    The max_discard variant takes the elementwise maximum and then zeroes the
    lowest ``fraction`` of the n*n entries, keeping exactly
    ceil((1 - fraction) * n * n) survivors; ties at the cut keep the entry
    with the smaller row-major index.
    """
    if attn.ndim < 2 or attn.shape[0] < 1:
        raise ShapeMismatchError(f"need a stacked (heads, ...) array, got "
                                 f"{attn.shape}")
    if method.kind == "average":
        return attn.mean(axis=0)
    if method.kind == "minimum":
        return attn.min(axis=0)
    best = attn.max(axis=0)
    flat = best.reshape(-1)
    # keep ceil((1 - fraction) * size) entries; computed via the discard
    # count with a nudge so float noise cannot shift the integer boundary
    keep = flat.size - int(np.floor(method.fraction * flat.size + 1e-9))
    # stable sort on negated values: descending by value, ascending by index
    order = np.argsort(-flat, kind="stable")
    out = np.zeros_like(flat)
    out[order[:keep]] = flat[order[:keep]]
    return out.reshape(best.shape)


# ---------------------------------------------------------------- rollout


def rollout_matrix(attn_maps: list[np.ndarray],
                   method: HeadAggregation) -> np.ndarray:
    """Residual-adjusted product of aggregated attention, bottom to top.

    Per layer: aggregate heads, add the identity for the residual branch,
    renormalize rows to sum 1, then left-multiply into the running product.
    Identity attention at every layer yields the identity exactly.
    """
    n = attn_maps[0].shape[-1]
    result = np.eye(n, dtype=np.float64)
    eye = np.eye(n, dtype=np.float64)
    for attn in attn_maps:
        mixed = aggregate_heads(attn.astype(np.float64), method) + eye
        mixed = mixed / mixed.sum(axis=-1, keepdims=True)
        result = mixed @ result
    return result


def _cls_row_to_pixels(matrix: np.ndarray, image_size: int) -> np.ndarray:
    cls_row = matrix[0, 1:]
    g = int(round(np.sqrt(cls_row.size)))
    patch_map = cls_row.reshape(g, g)
    return normalize_attribution(upsample_patch_map(patch_map, image_size))


def attention_rollout(trace: ForwardTrace,
                      method: HeadAggregation = AVERAGE) -> Attribution:
    """Class-agnostic saliency from the rollout's classification-token row."""
    matrix = rollout_matrix(trace.attention_maps, method)
    values = _cls_row_to_pixels(matrix, trace.config.image_size)
    return Attribution(values=values, explainer="attention_rollout",
                       target_class=None, binary=False)


def translrp_matrix(grads: list[np.ndarray],
                    relevances: list[np.ndarray]) -> np.ndarray:
    """Rollout of head-averaged, positively-clamped gradient-times-relevance.

    Per layer the attention gradient and relevance are multiplied
    elementwise per head, averaged over heads, clamped at zero, combined
    with the identity, and multiplied into the running product. All entries
    of the result are non-negative by construction.
    """
    if len(grads) != len(relevances):
        raise ShapeMismatchError(f"{len(grads)} gradient layers vs "
                                 f"{len(relevances)} relevance layers")
    n = grads[0].shape[-1]
    eye = np.eye(n, dtype=np.float64)
    result = np.eye(n, dtype=np.float64)
    for grad, rel in zip(grads, relevances):
        if grad.shape != rel.shape:
            raise ShapeMismatchError(f"gradient {grad.shape} vs relevance "
                                     f"{rel.shape}")
        cam = (grad.astype(np.float64) * rel.astype(np.float64)).mean(axis=0)
        cam = np.maximum(cam, 0.0)
        result = (cam + eye) @ result
    return result


def translrp(trace: ForwardTrace, grads: list[np.ndarray],
             relevances: list[np.ndarray],
             target_class: int | None = None) -> Attribution:
    """Class-specific saliency combining attention gradients and relevance."""
    if len(grads) != len(trace.layers):
        raise ShapeMismatchError(f"{len(grads)} gradient layers for a "
                                 f"{len(trace.layers)}-layer trace")
    matrix = translrp_matrix(grads, relevances)
    values = _cls_row_to_pixels(matrix, trace.config.image_size)
    return Attribution(values=values, explainer="translrp",
                       target_class=target_class, binary=False)


# ---------------------------------------------------------------- lime


def grid_segments(image_size: int, n_segments: int) -> np.ndarray:
    """Label map of a regular s x s grid, s = sqrt(n_segments), row-major."""
    side = int(round(np.sqrt(n_segments)))
    if side * side != n_segments:
        raise ValueError(f"n_segments must be a perfect square for the grid "
                         f"segmenter, got {n_segments}")
    if image_size % side != 0:
        raise ValueError(f"image size {image_size} not divisible by segment "
                         f"grid side {side}")
    block = image_size // side
    rows = np.arange(image_size) // block
    return (rows[:, None] * side + rows[None, :]).astype(int)


def _mask_weights(masks: np.ndarray, kernel_width: float) -> np.ndarray:
    # cosine distance between a binary mask and the all-on mask is
    # 1 - sqrt(on_fraction); the empty mask gets the maximum distance 1
    on_frac = masks.mean(axis=1)
    dist = np.where(on_frac > 0, 1.0 - np.sqrt(on_frac), 1.0)
    return np.exp(-(dist ** 2) / kernel_width ** 2)


def lime_explain(predict_fn: Callable[[np.ndarray], np.ndarray],
                 image: np.ndarray, target_class: int,
                 n_segments: int = 16, n_samples: int = 500,
                 top_k: int = 2, seed=0,
                 kernel_width: float = 0.25,
                 baseline: float = 0.0) -> Attribution:
    """Binary saliency of the ``top_k`` grid segments with the largest
    positive surrogate coefficients.

    ``predict_fn`` maps an image batch (b, h, w) to logits (b, classes);
    ``seed`` is numpy seed material (an int or a sequence of ints).
    Random on/off masks (each segment kept with probability one half) are
    scored by the target-class logit; a ridge regression weighted by an
    exponential kernel on cosine distance to the unmasked image gives each
    segment a coefficient. A sampling attempt whose design matrix has a
    constant column is redrawn from a derived seed, at most three times.
    """
    if n_segments < top_k:
        raise ValueError(f"n_segments {n_segments} < top_k {top_k}")
    if n_samples < 10:
        raise ValueError(f"n_samples must be at least 10, got {n_samples}")
    segments = grid_segments(image.shape[0], n_segments)

    masks = None
    attempts = 3
    for attempt in range(attempts):
        rng = np.random.default_rng([seed, attempt])
        candidate = rng.integers(0, 2, size=(n_samples, n_segments))
        col_sums = candidate.sum(axis=0)
        if np.all((col_sums > 0) & (col_sums < n_samples)):
            masks = candidate
            break
    if masks is None:
        raise DegenerateDesignError(
            f"all {attempts} sampling attempts (seed {seed}) produced a "
            f"design matrix with a constant segment column")

    pixel_on = masks[:, segments]  # (n_samples, h, w)
    batch = np.where(pixel_on.astype(bool), image[None, :, :], baseline)
    targets = np.asarray(predict_fn(batch))[:, target_class]

    sample_w = _mask_weights(masks, kernel_width)
    design = np.concatenate([masks.astype(np.float64),
                             np.ones((n_samples, 1))], axis=1)
    weighted = design * sample_w[:, None]
    gram = weighted.T @ design
    penalty = np.eye(n_segments + 1) * RIDGE_LAMBDA
    penalty[-1, -1] = 0.0  # intercept unpenalized
    coef = np.linalg.solve(gram + penalty, weighted.T @ targets)[:n_segments]

    order = np.argsort(-coef, kind="stable")  # ties by lower segment index
    chosen = [int(i) for i in order if coef[i] > 0][:top_k]

    values = np.zeros(image.shape, dtype=np.float64)
    for seg_id in chosen:
        values[segments == seg_id] = 1.0
    return Attribution(values=values, explainer="lime",
                       target_class=target_class, binary=True)
