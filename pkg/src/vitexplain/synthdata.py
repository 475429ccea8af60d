"""Synthetic 3-class chest-phantom images and the manifest that indexes them.

Every image is a bright canvas with two dark "lung" ellipses. The classes
differ inside the lungs:

    0 diffuse-opacity: soft bright blobs scattered through both lungs
    1 clear:           nothing but the dark ellipses
    2 focal-opacity:   one compact bright disc inside one lung

Geometry is lightly jittered per image and uniform pixel noise is added, so
the classes stay separable by simple intensity statistics (a linear probe on
mean/variance clears 80 percent) while still giving the classifier something
to do. All randomness flows from per-image streams derived from
(seed, class, index), so a manifest is reproducible byte for byte.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .netpbm import read_pgm, write_pgm

CLASS_NAMES = ("diffuse-opacity", "clear", "focal-opacity")
N_CLASSES = 3
SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.csv"

# 65/15/20 split, at least one image per split for tiny datasets
SPLIT_FRACTIONS = (0.65, 0.15)


class ManifestError(ValueError):
    """Raised for malformed manifest files or missing images."""


@dataclass(frozen=True)
class SyntheticSpec:
    n_per_class: int = 100
    image_size: int = 32
    seed: int = 0
    noise: float = 0.02

    def __post_init__(self):
        if self.n_per_class < 3:
            raise ValueError("need n_per_class >= 3 to populate every split")
        if self.image_size < 16:
            raise ValueError("image_size below 16 leaves no room for lungs")
        if self.noise < 0:
            raise ValueError("noise amplitude must be non-negative")


@dataclass(frozen=True)
class ManifestRecord:
    path: str  # relative to the manifest's directory
    label: int
    split: str


@dataclass
class DatasetManifest:
    root: str
    records: list[ManifestRecord]

    def split(self, name: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == name]

    def load_image(self, record: ManifestRecord) -> np.ndarray:
        return read_pgm(os.path.join(self.root, record.path))


# ---------------------------------------------------------------- rendering


def _ellipse_mask(size: int, cy: float, cx: float, ay: float,
                  ax: float) -> np.ndarray:
    r = np.arange(size)[:, None] + 0.5
    c = np.arange(size)[None, :] + 0.5
    return ((r - cy) / ay) ** 2 + ((c - cx) / ax) ** 2 <= 1.0


def render_phantom(label: int, rng: np.random.Generator,
                   image_size: int = 32, noise: float = 0.02) -> np.ndarray:
    """Draw one phantom for ``label`` using ``rng`` for all stochastic parts."""
    if not 0 <= label < N_CLASSES:
        raise ValueError(f"label {label} out of range [0, {N_CLASSES})")
    s = float(image_size)
    img = np.full((image_size, image_size),
                  0.84 + rng.uniform(-0.01, 0.01))

    lung_value = 0.15 + rng.uniform(-0.015, 0.015)
    lungs = []
    for side in (0.30, 0.70):
        cy = s * (0.52 + rng.uniform(-0.01, 0.01))
        cx = s * (side + rng.uniform(-0.01, 0.01))
        ay = s * 0.30 * (1.0 + rng.uniform(-0.02, 0.02))
        ax = s * 0.15 * (1.0 + rng.uniform(-0.02, 0.02))
        mask = _ellipse_mask(image_size, cy, cx, ay, ax)
        img[mask] = lung_value
        lungs.append((mask, cy, cx, ay, ax))
    both_lungs = lungs[0][0] | lungs[1][0]

    if label == 0:
        # low-frequency bright blobs filling much of both lung fields
        r = np.arange(image_size)[:, None] + 0.5
        c = np.arange(image_size)[None, :] + 0.5
        for mask, cy, cx, ay, ax in lungs:
            for _ in range(3):
                by = cy + rng.uniform(-0.6, 0.6) * ay
                bx = cx + rng.uniform(-0.5, 0.5) * ax
                sigma = s * (0.11 + rng.uniform(0.0, 0.04))
                amp = 0.60 + rng.uniform(0.0, 0.15)
                blob = amp * np.exp(-((r - by) ** 2 + (c - bx) ** 2)
                                    / (2.0 * sigma ** 2))
                img += blob * both_lungs
    elif label == 2:
        # one compact bright disc in a randomly chosen lung
        mask, cy, cx, ay, ax = lungs[int(rng.integers(0, 2))]
        dy = cy + rng.uniform(-0.30, 0.30) * ay
        dx = cx + rng.uniform(-0.25, 0.25) * ax
        radius = s * (0.14 + rng.uniform(0.0, 0.03))
        disc = _ellipse_mask(image_size, dy, dx, radius, radius)
        img[disc & both_lungs] = 0.95 + rng.uniform(0.0, 0.03)

    if noise > 0:
        img += rng.uniform(-noise, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------- generation


def _split_sizes(n: int) -> tuple[int, int, int]:
    n_train = max(1, int(n * SPLIT_FRACTIONS[0]))
    n_val = max(1, int(n * SPLIT_FRACTIONS[1]))
    if n_train + n_val >= n:
        n_train = n - 2
        n_val = 1
    return n_train, n_val, n - n_train - n_val


def generate_dataset(spec: SyntheticSpec, out_dir: str) -> DatasetManifest:
    """Write phantom images plus manifest under ``out_dir``.

    Layout: ``images/c<label>_<index>.pgm`` and ``manifest.csv``. Every byte
    is a pure function of ``spec``.
    """
    image_dir = os.path.join(out_dir, "images")
    os.makedirs(image_dir, exist_ok=True)

    records: list[ManifestRecord] = []
    n_train, n_val, _ = _split_sizes(spec.n_per_class)
    for label in range(N_CLASSES):
        split_rng = np.random.default_rng([spec.seed, 1000 + label])
        order = split_rng.permutation(spec.n_per_class)
        split_of = {}
        for rank, idx in enumerate(order):
            if rank < n_train:
                split_of[idx] = "train"
            elif rank < n_train + n_val:
                split_of[idx] = "val"
            else:
                split_of[idx] = "test"

        for idx in range(spec.n_per_class):
            rng = np.random.default_rng([spec.seed, label, idx])
            img = render_phantom(label, rng, spec.image_size, spec.noise)
            rel = os.path.join("images", f"c{label}_{idx:04d}.pgm")
            write_pgm(os.path.join(out_dir, rel), img)
            records.append(ManifestRecord(rel, label, split_of[idx]))

    manifest = DatasetManifest(out_dir, records)
    save_manifest(manifest, os.path.join(out_dir, MANIFEST_NAME))
    return manifest


# ---------------------------------------------------------------- manifest io


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    lines = [f"{r.path},{r.label},{r.split}" for r in manifest.records]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_manifest(path: str) -> DatasetManifest:
    """Parse a manifest and verify labels and image files."""
    root = os.path.dirname(os.path.abspath(path))
    records: list[ManifestRecord] = []
    with open(path, "r", encoding="ascii") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ManifestError(f"{path}:{ln}: expected "
                                    f"'path,label,split', got {line!r}")
            rel, label_s, split = parts
            try:
                label = int(label_s)
            except ValueError:
                raise ManifestError(f"{path}:{ln}: non-integer label "
                                    f"{label_s!r}") from None
            if not 0 <= label < N_CLASSES:
                raise ManifestError(f"{path}:{ln}: label {label} out of "
                                    f"range [0, {N_CLASSES})")
            if split not in SPLITS:
                raise ManifestError(f"{path}:{ln}: unknown split {split!r}")
            if not os.path.exists(os.path.join(root, rel)):
                raise ManifestError(f"{path}:{ln}: image file missing: {rel}")
            records.append(ManifestRecord(rel, label, split))
    if not records:
        raise ManifestError(f"{path}: manifest is empty")
    return DatasetManifest(root, records)
