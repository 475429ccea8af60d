"""Minibatch Adam training of the small ViT on a phantom dataset.

The protocol: shuffle the train split each epoch, accumulate per-image
gradients into batch means, Adam updates (beta1 0.9, beta2 0.999), record
validation accuracy after every epoch, keep the weights of the best
validation epoch, stop early once no epoch has improved for ``patience``
epochs. Everything is derived from (seed, config): batch order from
(seed, epoch), augmentation from (seed, epoch, image index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ViTConfig, ViTWeights, backward_from_logits, forward, \
    init_weights, predict_logits
from .synthdata import DatasetManifest

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDivergedError(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 15
    patience: int = 5
    augment: bool = True
    crop_pad: int = 4
    rotate_degrees: float = 15.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        for name in ("batch_size", "max_epochs", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.crop_pad < 0 or self.rotate_degrees < 0:
            raise ValueError("augmentation parameters must be non-negative")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1

    def best_val_acc(self) -> float:
        return self.epochs[self.best_epoch].val_acc if self.epochs else 0.0


# ---------------------------------------------------------------- loss


def cross_entropy(logits: np.ndarray, label: int
                  ) -> tuple[float, np.ndarray]:
    """Negative log-softmax loss and its gradient w.r.t. the logits."""
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range [0, {logits.shape[0]})")
    shifted = logits - np.max(logits)
    logsumexp = math.log(float(np.sum(np.exp(shifted))))
    loss = logsumexp - float(shifted[label])
    grad = np.exp(shifted - logsumexp)
    grad[label] -= 1.0
    return loss, grad


# ---------------------------------------------------------------- augmentation


def augment(image: np.ndarray, rng: np.random.Generator,
            config: TrainConfig) -> np.ndarray:
    """Pad/random-crop then rotate; offset 0 and angle 0 reproduce the input.

    The pad uses edge replication; the crop offset is drawn from
    [-crop_pad, crop_pad] per axis relative to the centered window. Rotation
    resamples nearest-neighbor with out-of-range sources clamped to the edge,
    so values stay inside the input's [0, 1] range.
    """
    size = image.shape[0]
    out = image
    if config.crop_pad > 0:
        pad = config.crop_pad
        dr = int(rng.integers(-pad, pad + 1))
        dc = int(rng.integers(-pad, pad + 1))
        padded = np.pad(image, pad, mode="edge")
        out = padded[pad + dr:pad + dr + size, pad + dc:pad + dc + size]
    if config.rotate_degrees > 0:
        theta = math.radians(float(rng.uniform(-config.rotate_degrees,
                                               config.rotate_degrees)))
        center = (size - 1) / 2.0
        rr = np.arange(size)[:, None] - center
        cc = np.arange(size)[None, :] - center
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        src_r = cos_t * rr + sin_t * cc + center
        src_c = -sin_t * rr + cos_t * cc + center
        ir = np.clip(np.rint(src_r).astype(int), 0, size - 1)
        ic = np.clip(np.rint(src_c).astype(int), 0, size - 1)
        out = out[ir, ic]
    return out.copy()


# ---------------------------------------------------------------- optimizer


class Adam:
    """Adam with bias correction; state keyed like the parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1 ** self.t
        bc2 = 1.0 - ADAM_BETA2 ** self.t
        for key, g in grads.items():
            m = self.m[key]
            v = self.v[key]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            params[key] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


# ---------------------------------------------------------------- loop


def _load_split(manifest: DatasetManifest, split: str
                ) -> tuple[np.ndarray, np.ndarray]:
    records = manifest.split(split)
    if not records:
        raise ValueError(f"manifest has no {split!r} records")
    images = np.stack([manifest.load_image(r) for r in records])
    labels = np.array([r.label for r in records], dtype=int)
    return images, labels


def accuracy(weights: ViTWeights, images: np.ndarray,
             labels: np.ndarray) -> float:
    preds = np.argmax(predict_logits(weights, images), axis=1)
    return float(np.mean(preds == labels))


def train(config: TrainConfig, vit_config: ViTConfig,
          manifest: DatasetManifest, dtype=np.float32,
          init_seed: int | None = None) -> tuple[ViTWeights, TrainLog]:
    """Train from scratch and return the best-validation-epoch weights.

    ``init_seed`` defaults to ``config.seed``; it is split out so tests can
    vary initialization independently of the data order.
    """
    train_x, train_y = _load_split(manifest, "train")
    val_x, val_y = _load_split(manifest, "val")
    _load_split(manifest, "test")  # presence check only

    weights = init_weights(vit_config,
                           seed=config.seed if init_seed is None else init_seed,
                           dtype=dtype)
    optimizer = Adam(weights.params, config.learning_rate)
    log = TrainLog()
    best_weights = weights.copy()
    best_val = -1.0

    n_train = train_x.shape[0]
    for epoch in range(config.max_epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(n_train)
        losses: list[float] = []
        hits = 0
        for start in range(0, n_train, config.batch_size):
            batch = order[start:start + config.batch_size]
            grad_sum: dict[str, np.ndarray] | None = None
            for idx in batch:
                img = train_x[idx]
                if config.augment:
                    rng = np.random.default_rng([config.seed, epoch, int(idx)])
                    img = augment(img, rng, config)
                logits, trace = forward(weights, img.astype(dtype))
                loss, dlogits = cross_entropy(logits.astype(np.float64),
                                              int(train_y[idx]))
                if not math.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss {loss} at epoch {epoch}, "
                        f"image index {int(idx)}")
                losses.append(loss)
                hits += int(np.argmax(logits) == train_y[idx])
                grads, _ = backward_from_logits(
                    weights, trace, dlogits.astype(dtype),
                    want_param_grads=True)
                if grad_sum is None:
                    grad_sum = grads
                else:
                    for key in grad_sum:
                        grad_sum[key] += grads[key]
            for key in grad_sum:
                grad_sum[key] /= len(batch)
            optimizer.step(weights.params, grad_sum)

        val_acc = accuracy(weights, val_x, val_y)
        log.epochs.append(EpochStats(epoch=epoch,
                                     train_loss=float(np.mean(losses)),
                                     train_acc=hits / n_train,
                                     val_acc=val_acc))
        if val_acc > best_val:
            best_val = val_acc
            log.best_epoch = epoch
            best_weights = weights.copy()
        elif epoch - log.best_epoch >= config.patience:
            break

    return best_weights, log


# ---------------------------------------------------------------- log io


def save_train_log(log: TrainLog, path: str) -> None:
    """One line per epoch: epoch,train_loss,train_acc,val_acc."""
    with open(path, "w", encoding="ascii") as fh:
        for e in log.epochs:
            fh.write(f"{e.epoch},{e.train_loss:.6f},{e.train_acc:.4f},"
                     f"{e.val_acc:.4f}\n")


def load_train_log(path: str) -> TrainLog:
    log = TrainLog()
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            epoch_s, loss_s, acc_s, val_s = line.split(",")
            log.epochs.append(EpochStats(int(epoch_s), float(loss_s),
                                         float(acc_s), float(val_s)))
    if log.epochs:
        log.best_epoch = int(np.argmax([e.val_acc for e in log.epochs]))
    return log
