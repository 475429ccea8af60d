"""Explanation quality metrics: faithfulness correlation, average
sensitivity, effective complexity, and mean/std summaries.

Perturbation granularity for faithfulness is the patch, matching what the
classifier consumes. All metrics are pure functions of their seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DIV_EPS = 1e-12


def _values_of(attribution) -> np.ndarray:
    """Accept either a raw array or anything carrying ``.values``."""
    return np.asarray(getattr(attribution, "values", attribution),
                      dtype=np.float64)


@dataclass(frozen=True)
class FaithfulnessConfig:
    """Patch-removal correlation settings.

    ``patch_grid`` is (rows, cols) of the removal grid (an int means square);
    ``subset_size`` defaults to 10 percent of the patches, at least one.
    """

    patch_grid: int | tuple[int, int] = 4
    subset_size: int | None = None
    n_runs: int = 100
    baseline: float = 0.0
    use_absolute: bool = False
    seed: object = 0

    def grid(self) -> tuple[int, int]:
        if isinstance(self.patch_grid, int):
            return (self.patch_grid, self.patch_grid)
        return tuple(self.patch_grid)

    def resolved_subset_size(self) -> int:
        gh, gw = self.grid()
        n = gh * gw
        size = self.subset_size
        if size is None:
            size = max(1, round(0.1 * n))
        if not 1 <= size < n:
            raise ValueError(f"subset_size {size} out of range [1, {n})")
        return size

    def __post_init__(self):
        if self.n_runs < 2:
            raise ValueError("n_runs must be at least 2")


@dataclass(frozen=True)
class SensitivityConfig:
    radius: float = 0.1
    n_samples: int = 10
    norm: str = "fro"  # Frobenius is the only implemented choice
    normalize: bool = True
    seed: object = 0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.norm != "fro":
            raise ValueError(f"unsupported norm tag {self.norm!r}")


@dataclass(frozen=True)
class ComplexityConfig:
    threshold: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got "
                             f"{self.threshold}")


# ---------------------------------------------------------------- faithfulness


def _patch_slices(shape: tuple[int, int], grid: tuple[int, int]):
    h, w = shape
    gh, gw = grid
    if h % gh != 0 or w % gw != 0:
        raise ValueError(f"image {shape} not divisible by patch grid {grid}")
    ph, pw = h // gh, w // gw
    slices = []
    for r in range(gh):
        for c in range(gw):
            slices.append((slice(r * ph, (r + 1) * ph),
                           slice(c * pw, (c + 1) * pw)))
    return slices


def faithfulness_correlation(predict_fn: Callable[[np.ndarray], np.ndarray],
                             image: np.ndarray, attribution,
                             target_class: int,
                             cfg: FaithfulnessConfig) -> float:
    """Pearson correlation between logit drops under patch removal and the
    removed patches' summed attribution.

    ``predict_fn`` maps an image batch (b, h, w) to logits (b, classes).
    Each run blanks a uniformly drawn patch subset to the baseline value and
    records (logit(x) - logit(x_masked), attribution mass of the subset).
    Returns 0 when either sequence has zero variance; the absolute value is
    taken when the config asks for the class-agnostic variant.
    """
    values = _values_of(attribution)
    if values.shape != image.shape:
        raise ValueError(f"attribution {values.shape} does not match image "
                         f"{image.shape}")
    grid = cfg.grid()
    subset_size = cfg.resolved_subset_size()
    slices = _patch_slices(image.shape, grid)
    n_patches = len(slices)
    patch_mass = np.array([values[s].sum() for s in slices])

    rng = np.random.default_rng(cfg.seed)
    subsets = [rng.choice(n_patches, size=subset_size, replace=False)
               for _ in range(cfg.n_runs)]

    perturbed = np.repeat(image[None, :, :], cfg.n_runs, axis=0)
    for i, subset in enumerate(subsets):
        for pid in subset:
            perturbed[i][slices[pid]] = cfg.baseline

    base = float(np.asarray(predict_fn(image[None]))[0, target_class])
    masked = np.asarray(predict_fn(perturbed))[:, target_class]
    deltas = base - masked.astype(np.float64)
    masses = np.array([patch_mass[subset].sum() for subset in subsets])

    if np.ptp(deltas) == 0.0 or np.ptp(masses) == 0.0:
        return 0.0
    corr = float(np.corrcoef(masses, deltas)[0, 1])
    corr = min(1.0, max(-1.0, corr))
    return abs(corr) if cfg.use_absolute else corr


def exact_faithfulness_correlation(predict_fn, image: np.ndarray,
                                   attribution, target_class: int,
                                   cfg: FaithfulnessConfig) -> float:
    """Exhaustive variant: every subset of the configured size exactly once.

    Only sensible on tiny grids; the sampled estimator converges to this
    value as n_runs grows.
    """
    from itertools import combinations

    values = _values_of(attribution)
    slices = _patch_slices(image.shape, cfg.grid())
    subset_size = cfg.resolved_subset_size()
    patch_mass = np.array([values[s].sum() for s in slices])

    base = float(np.asarray(predict_fn(image[None]))[0, target_class])
    deltas, masses = [], []
    for subset in combinations(range(len(slices)), subset_size):
        x = image.copy()
        for pid in subset:
            x[slices[pid]] = cfg.baseline
        deltas.append(base
                      - float(np.asarray(predict_fn(x[None]))[0, target_class]))
        masses.append(patch_mass[list(subset)].sum())
    deltas = np.array(deltas)
    masses = np.array(masses)
    if np.ptp(deltas) == 0.0 or np.ptp(masses) == 0.0:
        return 0.0
    corr = float(np.corrcoef(masses, deltas)[0, 1])
    corr = min(1.0, max(-1.0, corr))
    return abs(corr) if cfg.use_absolute else corr


# ---------------------------------------------------------------- sensitivity


def avg_sensitivity(explain_fn: Callable[[np.ndarray], np.ndarray],
                    image: np.ndarray, cfg: SensitivityConfig) -> float:
    """Mean Frobenius distance between the explanation of the image and of
    uniformly perturbed copies, scaled by the original explanation's norm.

    ``explain_fn`` must be deterministic (hold any internal seed fixed);
    perturbed pixels are clipped back into [0, 1].
    """
    base = _values_of(explain_fn(image))
    denom = max(float(np.linalg.norm(base)), DIV_EPS) if cfg.normalize else 1.0
    rng = np.random.default_rng(cfg.seed)
    scores = []
    for _ in range(cfg.n_samples):
        noise = rng.uniform(-cfg.radius, cfg.radius, size=image.shape)
        perturbed = np.clip(image + noise, 0.0, 1.0)
        other = _values_of(explain_fn(perturbed))
        scores.append(float(np.linalg.norm(other - base)) / denom)
    return float(np.mean(scores))


# ---------------------------------------------------------------- complexity


def effective_complexity(attribution, cfg: ComplexityConfig) -> float:
    """Fraction of attribution values strictly above the threshold."""
    values = _values_of(attribution)
    return float(np.count_nonzero(values > cfg.threshold) / values.size)


# ---------------------------------------------------------------- summaries


@dataclass
class SummaryStats:
    mean: float
    std: float
    count: int
    per_class: dict[int, "SummaryStats"] | None = field(default=None)

    def format(self) -> str:
        return f"{self.mean:.2f} ± {self.std:.2f}"


def summarize(values, labels=None) -> SummaryStats:
    """Mean and population standard deviation, optionally split by label."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("summarize needs at least one value")
    stats = SummaryStats(mean=float(arr.mean()), std=float(arr.std(ddof=0)),
                         count=int(arr.size))
    if labels is not None:
        labels = np.asarray(list(labels))
        if labels.shape[0] != arr.shape[0]:
            raise ValueError(f"{arr.shape[0]} values vs {labels.shape[0]} "
                             f"labels")
        stats.per_class = {}
        for cls in sorted(set(int(l) for l in labels)):
            sub = arr[labels == cls]
            stats.per_class[cls] = SummaryStats(
                mean=float(sub.mean()), std=float(sub.std(ddof=0)),
                count=int(sub.size))
    return stats
