"""Small Vision Transformer with a recording forward pass and manual backward.

The forward pass keeps every intermediate needed to (a) backpropagate a logit
to all per-layer attention maps and (b) redistribute a logit's score backward
as relevance. Desk-scale default: 32x32 grayscale images, 8x8 patches,
2 layers, 2 heads, 32-dim embeddings, 3 classes.

Block layout (pre-norm):

    x_mid = x_in + Wo @ concat_heads( softmax(q k^T / sqrt(dh)) @ v ),
            with q,k,v projected from layernorm(x_in)
    x_out = x_mid + W2 @ gelu( W1 @ layernorm(x_mid) )

Token 0 is the classification token; its final embedding feeds the classifier
head. Gradients and relevances reported per layer are taken at the
post-softmax attention maps, shaped (n_heads, n_tokens, n_tokens).

Relevance propagation rules (epsilon-stabilized, ``eps`` default 1e-9):

  * linear maps (all projections, the classifier head):
      R_j = x_j * sum_k w_jk R_k / (z_k + eps*sign(z_k)),  z = x W + b;
    the bias term absorbs its share of z, so a little mass leaks per map.
  * residual additions: split elementwise in proportion to each branch's
    contribution (conserves exactly).
  * bilinear contractions (q k^T and attention-times-values): each operand
    receives the gradient-times-input epsilon share, halved so that the two
    shares together conserve the incoming mass.
  * softmax, gelu, layernorm: identity rule (relevance passes through).

The relevance recorded for a layer is the share assigned to the attention
matrix inside attention-times-values. Conservation is meaningful only on a
complete cut of the network; ``lrp_cut_totals`` reports the total mass at
each block input for that purpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ops import (
    ShapeMismatchError,
    gelu,
    gelu_backward,
    layernorm,
    layernorm_backward,
    softmax,
    softmax_backward,
)

LN_EPS = 1e-5
EMBED_INIT_STD = 0.02  # classification token and positional embeddings


@dataclass(frozen=True)
class ViTConfig:
    """Architecture hyperparameters. All divisibility rules checked eagerly."""

    image_size: int = 32
    patch_size: int = 8
    n_layers: int = 2
    n_heads: int = 2
    embed_dim: int = 32
    mlp_dim: int = 64
    n_classes: int = 3

    def __post_init__(self):
        for name in ("image_size", "patch_size", "n_layers", "n_heads",
                     "embed_dim", "mlp_dim", "n_classes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by "
                f"patch_size {self.patch_size}")
        if self.embed_dim % self.n_heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by "
                f"n_heads {self.n_heads}")

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid_size ** 2

    @property
    def n_tokens(self) -> int:
        return self.n_patches + 1

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads


def param_shapes(config: ViTConfig) -> dict[str, tuple[int, ...]]:
    """Canonical name -> shape table for every trainable tensor."""
    d, p2 = config.embed_dim, config.patch_size ** 2
    shapes: dict[str, tuple[int, ...]] = {
        "patch_proj": (p2, d),
        "patch_bias": (d,),
        "cls_token": (d,),
        "pos_embed": (config.n_tokens, d),
    }
    for l in range(config.n_layers):
        pre = f"layer{l}."
        shapes[pre + "ln1.gain"] = (d,)
        shapes[pre + "ln1.bias"] = (d,)
        for nm in ("wq", "wk", "wv", "wo"):
            shapes[pre + "attn." + nm] = (d, d)
        for nm in ("bq", "bk", "bv", "bo"):
            shapes[pre + "attn." + nm] = (d,)
        shapes[pre + "ln2.gain"] = (d,)
        shapes[pre + "ln2.bias"] = (d,)
        shapes[pre + "mlp.w1"] = (d, config.mlp_dim)
        shapes[pre + "mlp.b1"] = (config.mlp_dim,)
        shapes[pre + "mlp.w2"] = (config.mlp_dim, d)
        shapes[pre + "mlp.b2"] = (d,)
    shapes["final_ln.gain"] = (d,)
    shapes["final_ln.bias"] = (d,)
    shapes["head.w"] = (d, config.n_classes)
    shapes["head.b"] = (config.n_classes,)
    return shapes


@dataclass
class ViTWeights:
    """Named parameter tensors plus the config they belong to."""

    config: ViTConfig
    params: dict[str, np.ndarray]

    def __post_init__(self):
        expected = param_shapes(self.config)
        if set(self.params) != set(expected):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ValueError(f"parameter names do not match config: "
                             f"missing={missing} extra={extra}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ShapeMismatchError(
                    f"parameter {name!r} has shape {self.params[name].shape}, "
                    f"expected {shape}")

    def copy(self) -> "ViTWeights":
        return ViTWeights(self.config,
                          {k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype) -> "ViTWeights":
        return ViTWeights(self.config,
                          {k: v.astype(dtype) for k, v in self.params.items()})

    @property
    def dtype(self):
        return self.params["patch_proj"].dtype


def init_weights(config: ViTConfig, seed: int = 0,
                 dtype=np.float32) -> ViTWeights:
    """Seeded init: fan-in-scaled truncated normal for projection matrices
    (std 1/sqrt(fan_in), clipped at 2 std), std 0.02 for the classification
    token and positional embeddings, ones/zeros for norms, zeros for biases.

    Fan-in scaling matters here: this model trains from scratch on a handful
    of optimizer steps, and a flat tiny std leaves the classification token
    with almost no image-dependent variance to learn from.
    """
    rng = np.random.default_rng(seed)
    zero_leaves = {"bias", "b", "b1", "b2", "bq", "bk", "bv", "bo"}
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gain":
            params[name] = np.ones(shape, dtype=dtype)
        elif leaf in zero_leaves or name == "patch_bias":
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            if name in ("cls_token", "pos_embed"):
                std = EMBED_INIT_STD
            else:
                std = (1.0 / shape[0]) ** 0.5
            draw = rng.normal(0.0, std, size=shape)
            draw = np.clip(draw, -2 * std, 2 * std)
            params[name] = draw.astype(dtype)
    return ViTWeights(config, params)


# ---------------------------------------------------------------- patches


def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """Cut a square image into non-overlapping patches, row-major grid order.

    Returns (n_patches, patch_size**2); ``unpatchify`` inverts it exactly.
    """
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ShapeMismatchError(f"expected a square 2-D image, got "
                                 f"{image.shape}")
    side = image.shape[0]
    if side % patch_size != 0:
        raise ShapeMismatchError(f"image side {side} not divisible by "
                                 f"patch size {patch_size}")
    g = side // patch_size
    blocks = image.reshape(g, patch_size, g, patch_size)
    return blocks.transpose(0, 2, 1, 3).reshape(g * g, patch_size * patch_size)


def unpatchify(patches: np.ndarray, image_size: int) -> np.ndarray:
    """Inverse of :func:`patchify`."""
    n, p2 = patches.shape
    p = int(round(p2 ** 0.5))
    g = image_size // p
    if g * g != n or p * p != p2 or g * p != image_size:
        raise ShapeMismatchError(
            f"cannot assemble {patches.shape} into {image_size}x{image_size}")
    blocks = patches.reshape(g, g, p, p)
    return blocks.transpose(0, 2, 1, 3).reshape(image_size, image_size)


# ---------------------------------------------------------------- forward


@dataclass
class LayerTrace:
    """Everything one block computed, kept for backward and relevance."""

    x_in: np.ndarray        # (n, d) block input
    h1: np.ndarray          # (n, d) after first layernorm
    q: np.ndarray           # (heads, n, dh)
    k: np.ndarray           # (heads, n, dh)
    v: np.ndarray           # (heads, n, dh)
    attn: np.ndarray        # (heads, n, n) post-softmax
    ctx: np.ndarray         # (heads, n, dh) attention-weighted values
    ctx_flat: np.ndarray    # (n, d) heads merged
    attn_out: np.ndarray    # (n, d) after output projection
    x_mid: np.ndarray       # (n, d) after first residual
    h2: np.ndarray          # (n, d) after second layernorm
    u: np.ndarray           # (n, mlp) pre-activation
    g: np.ndarray           # (n, mlp) post-gelu
    mlp_out: np.ndarray     # (n, d)
    x_out: np.ndarray       # (n, d)


@dataclass
class ForwardTrace:
    """Recorded forward pass: attention maps, cached activations, logits."""

    config: ViTConfig
    image: np.ndarray
    patches: np.ndarray       # (n_patches, p*p)
    tokens: np.ndarray        # (n, d) embedded input incl. cls + positions
    layers: list[LayerTrace] = field(default_factory=list)
    final_input: np.ndarray = None   # (n, d) before final layernorm
    final_normed: np.ndarray = None  # (n, d)
    logits: np.ndarray = None        # (n_classes,)

    @property
    def attention_maps(self) -> list[np.ndarray]:
        return [layer.attn for layer in self.layers]


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    n, d = x.shape
    return x.reshape(n, n_heads, d // n_heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def forward(weights: ViTWeights, image: np.ndarray,
            attn_override: dict[int, np.ndarray] | None = None
            ) -> tuple[np.ndarray, ForwardTrace]:
    """Run the model on one image, recording a full trace.

    ``attn_override`` replaces the post-softmax attention of the given layers
    with fixed matrices; the rest of the network runs unchanged. This is a
    diagnostic hook (finite-difference probes of attention sensitivity), not
    part of normal inference.
    """
    cfg = weights.config
    p = weights.params
    if image.shape != (cfg.image_size, cfg.image_size):
        raise ShapeMismatchError(
            f"image shape {image.shape} does not match configured "
            f"{cfg.image_size}x{cfg.image_size}")
    image = np.asarray(image, dtype=weights.dtype)

    patches = patchify(image, cfg.patch_size)
    embedded = patches @ p["patch_proj"] + p["patch_bias"]
    tokens = np.concatenate([p["cls_token"][None, :], embedded], axis=0)
    tokens = tokens + p["pos_embed"]

    trace = ForwardTrace(config=cfg, image=image.copy(), patches=patches,
                         tokens=tokens)
    scale = 1.0 / np.sqrt(cfg.head_dim)

    x = tokens
    for l in range(cfg.n_layers):
        pre = f"layer{l}."
        h1 = layernorm(x, p[pre + "ln1.gain"], p[pre + "ln1.bias"], LN_EPS)
        q = _split_heads(h1 @ p[pre + "attn.wq"] + p[pre + "attn.bq"],
                         cfg.n_heads)
        k = _split_heads(h1 @ p[pre + "attn.wk"] + p[pre + "attn.bk"],
                         cfg.n_heads)
        v = _split_heads(h1 @ p[pre + "attn.wv"] + p[pre + "attn.bv"],
                         cfg.n_heads)
        scores = (q @ k.transpose(0, 2, 1)) * scale
        attn = softmax(scores, axis=-1)
        if attn_override is not None and l in attn_override:
            attn = np.asarray(attn_override[l], dtype=x.dtype)
            if attn.shape != (cfg.n_heads, cfg.n_tokens, cfg.n_tokens):
                raise ShapeMismatchError(
                    f"attention override for layer {l} has shape {attn.shape}, "
                    f"expected {(cfg.n_heads, cfg.n_tokens, cfg.n_tokens)}")
        ctx = attn @ v
        ctx_flat = _merge_heads(ctx)
        attn_out = ctx_flat @ p[pre + "attn.wo"] + p[pre + "attn.bo"]
        x_mid = x + attn_out
        h2 = layernorm(x_mid, p[pre + "ln2.gain"], p[pre + "ln2.bias"], LN_EPS)
        u = h2 @ p[pre + "mlp.w1"] + p[pre + "mlp.b1"]
        g = gelu(u)
        mlp_out = g @ p[pre + "mlp.w2"] + p[pre + "mlp.b2"]
        x_out = x_mid + mlp_out

        trace.layers.append(LayerTrace(
            x_in=x, h1=h1, q=q, k=k, v=v, attn=attn, ctx=ctx,
            ctx_flat=ctx_flat, attn_out=attn_out, x_mid=x_mid, h2=h2,
            u=u, g=g, mlp_out=mlp_out, x_out=x_out))
        x = x_out

    trace.final_input = x
    trace.final_normed = layernorm(x, p["final_ln.gain"], p["final_ln.bias"],
                                   LN_EPS)
    trace.logits = trace.final_normed[0] @ p["head.w"] + p["head.b"]
    return trace.logits, trace


def predict_logits(weights: ViTWeights, images: np.ndarray) -> np.ndarray:
    """Batched logits without tracing. (h, w) -> (classes,); a leading batch
    axis is carried through: (b, h, w) -> (b, classes)."""
    cfg = weights.config
    p = weights.params
    single = images.ndim == 2
    batch = images[None] if single else images
    if batch.shape[1:] != (cfg.image_size, cfg.image_size):
        raise ShapeMismatchError(
            f"image batch shape {images.shape} does not match configured "
            f"{cfg.image_size}x{cfg.image_size}")
    batch = np.asarray(batch, dtype=weights.dtype)

    b = batch.shape[0]
    g, ps = cfg.grid_size, cfg.patch_size
    patches = (batch.reshape(b, g, ps, g, ps)
                    .transpose(0, 1, 3, 2, 4)
                    .reshape(b, cfg.n_patches, ps * ps))
    tokens = patches @ p["patch_proj"] + p["patch_bias"]
    cls = np.broadcast_to(p["cls_token"], (b, 1, cfg.embed_dim))
    x = np.concatenate([cls, tokens], axis=1) + p["pos_embed"]

    scale = 1.0 / np.sqrt(cfg.head_dim)
    for l in range(cfg.n_layers):
        pre = f"layer{l}."
        h1 = layernorm(x, p[pre + "ln1.gain"], p[pre + "ln1.bias"], LN_EPS)

        def heads(t):
            return (t.reshape(b, cfg.n_tokens, cfg.n_heads, cfg.head_dim)
                     .transpose(0, 2, 1, 3))

        q = heads(h1 @ p[pre + "attn.wq"] + p[pre + "attn.bq"])
        k = heads(h1 @ p[pre + "attn.wk"] + p[pre + "attn.bk"])
        v = heads(h1 @ p[pre + "attn.wv"] + p[pre + "attn.bv"])
        attn = softmax((q @ k.transpose(0, 1, 3, 2)) * scale, axis=-1)
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(b, cfg.n_tokens,
                                                       cfg.embed_dim)
        x = x + (ctx @ p[pre + "attn.wo"] + p[pre + "attn.bo"])
        h2 = layernorm(x, p[pre + "ln2.gain"], p[pre + "ln2.bias"], LN_EPS)
        x = x + (gelu(h2 @ p[pre + "mlp.w1"] + p[pre + "mlp.b1"])
                 @ p[pre + "mlp.w2"] + p[pre + "mlp.b2"])

    normed = layernorm(x, p["final_ln.gain"], p["final_ln.bias"], LN_EPS)
    logits = normed[:, 0, :] @ p["head.w"] + p["head.b"]
    return logits[0] if single else logits


# ---------------------------------------------------------------- backward


def backward_from_logits(weights: ViTWeights, trace: ForwardTrace,
                         dlogits: np.ndarray, want_param_grads: bool = False
                         ) -> tuple[dict[str, np.ndarray] | None,
                                    list[np.ndarray]]:
    """Backpropagate an upstream logit gradient through the whole trace.

    Returns (param_grads or None, attention gradients per layer). The
    attention gradient of layer l is d(objective)/d(attn_l) with the
    post-softmax map treated as a free variable at its use site.
    """
    cfg = weights.config
    p = weights.params
    grads: dict[str, np.ndarray] | None = None
    if want_param_grads:
        grads = {name: np.zeros_like(arr) for name, arr in p.items()}

    scale = 1.0 / np.sqrt(cfg.head_dim)
    attn_grads: list[np.ndarray] = [None] * cfg.n_layers

    # classifier head: logits = final_normed[0] @ W + b
    cls_emb = trace.final_normed[0]
    d_normed = np.zeros_like(trace.final_normed)
    d_normed[0] = dlogits @ p["head.w"].T
    if want_param_grads:
        grads["head.w"] += np.outer(cls_emb, dlogits)
        grads["head.b"] += dlogits

    dx, dgain, dbias = layernorm_backward(trace.final_input,
                                          p["final_ln.gain"], LN_EPS, d_normed)
    if want_param_grads:
        grads["final_ln.gain"] += dgain
        grads["final_ln.bias"] += dbias

    for l in reversed(range(cfg.n_layers)):
        pre = f"layer{l}."
        t = trace.layers[l]

        # x_out = x_mid + mlp_out
        d_x_mid = dx.copy()
        d_mlp_out = dx
        # mlp_out = g @ w2 + b2
        d_g = d_mlp_out @ p[pre + "mlp.w2"].T
        if want_param_grads:
            grads[pre + "mlp.w2"] += t.g.T @ d_mlp_out
            grads[pre + "mlp.b2"] += d_mlp_out.sum(axis=0)
        d_u = gelu_backward(t.u, d_g)
        d_h2 = d_u @ p[pre + "mlp.w1"].T
        if want_param_grads:
            grads[pre + "mlp.w1"] += t.h2.T @ d_u
            grads[pre + "mlp.b1"] += d_u.sum(axis=0)
        d_from_ln2, dgain2, dbias2 = layernorm_backward(
            t.x_mid, p[pre + "ln2.gain"], LN_EPS, d_h2)
        d_x_mid += d_from_ln2
        if want_param_grads:
            grads[pre + "ln2.gain"] += dgain2
            grads[pre + "ln2.bias"] += dbias2

        # x_mid = x_in + attn_out
        d_x_in = d_x_mid.copy()
        d_attn_out = d_x_mid
        # attn_out = ctx_flat @ wo + bo
        d_ctx_flat = d_attn_out @ p[pre + "attn.wo"].T
        if want_param_grads:
            grads[pre + "attn.wo"] += t.ctx_flat.T @ d_attn_out
            grads[pre + "attn.bo"] += d_attn_out.sum(axis=0)
        d_ctx = _split_heads(d_ctx_flat, cfg.n_heads)

        # ctx = attn @ v (per head)
        d_attn = d_ctx @ t.v.transpose(0, 2, 1)
        attn_grads[l] = d_attn
        d_v = t.attn.transpose(0, 2, 1) @ d_ctx

        # attn = softmax(scores)
        d_scores = softmax_backward(t.attn, d_attn, axis=-1)
        # scores = (q @ k^T) * scale
        d_q = (d_scores @ t.k) * scale
        d_k = (d_scores.transpose(0, 2, 1) @ t.q) * scale

        d_h1 = np.zeros_like(t.h1)
        for name, dval, cached in (("wq", d_q, t.q), ("wk", d_k, t.k),
                                   ("wv", d_v, t.v)):
            flat = _merge_heads(dval)
            d_h1 += flat @ p[pre + "attn." + name].T
            if want_param_grads:
                grads[pre + "attn." + name] += t.h1.T @ flat
                grads[pre + "attn.b" + name[1]] += flat.sum(axis=0)

        d_from_ln1, dgain1, dbias1 = layernorm_backward(
            t.x_in, p[pre + "ln1.gain"], LN_EPS, d_h1)
        d_x_in += d_from_ln1
        if want_param_grads:
            grads[pre + "ln1.gain"] += dgain1
            grads[pre + "ln1.bias"] += dbias1
        dx = d_x_in

    if want_param_grads:
        # tokens = concat(cls, patches @ proj + bias) + pos
        grads["pos_embed"] += dx
        grads["cls_token"] += dx[0]
        grads["patch_proj"] += trace.patches.T @ dx[1:]
        grads["patch_bias"] += dx[1:].sum(axis=0)

    return grads, attn_grads


def attention_gradients(weights: ViTWeights, trace: ForwardTrace,
                        target_class: int) -> list[np.ndarray]:
    """d logit[target] / d attn_l for every layer, same shapes as the maps."""
    cfg = weights.config
    if not 0 <= target_class < cfg.n_classes:
        raise ValueError(f"target_class {target_class} out of range "
                         f"[0, {cfg.n_classes})")
    dlogits = np.zeros(cfg.n_classes, dtype=weights.dtype)
    dlogits[target_class] = 1.0
    _, attn_grads = backward_from_logits(weights, trace, dlogits,
                                         want_param_grads=False)
    return attn_grads


# ---------------------------------------------------------------- relevance


def _stabilize(z: np.ndarray, eps: float) -> np.ndarray:
    return z + eps * np.where(z >= 0, 1.0, -1.0)


def lrp_linear(x: np.ndarray, w: np.ndarray, b: np.ndarray,
               rel_out: np.ndarray, eps: float) -> np.ndarray:
    """Epsilon-rule relevance through ``z = x @ w + b``.

    The bias contributes to the stabilized denominator but receives no
    outgoing relevance, so its share of each z_k leaks out of the map.
    """
    z = x @ w + b
    s = rel_out / _stabilize(z, eps)
    return x * (s @ w.T)


def _lrp_bilinear(a: np.ndarray, b: np.ndarray, product: np.ndarray,
                  rel_out: np.ndarray, eps: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Split relevance of ``product = a @ b`` between the operands.

    Works on stacked (heads, n, m) operands. Each side gets half of the
    gradient-times-input share so the pair conserves the incoming mass.
    """
    s = rel_out / _stabilize(product, eps)
    rel_a = 0.5 * a * (s @ b.transpose(0, 2, 1))
    rel_b = 0.5 * b * (a.transpose(0, 2, 1) @ s)
    return rel_a, rel_b


def _lrp_add(x: np.ndarray, y: np.ndarray, rel_out: np.ndarray,
             eps: float) -> tuple[np.ndarray, np.ndarray]:
    s = rel_out / _stabilize(x + y, eps)
    return x * s, y * s


def _lrp_pass(weights: ViTWeights, trace: ForwardTrace, target_class: int,
              eps: float) -> tuple[list[np.ndarray], list[float]]:
    cfg = weights.config
    p = weights.params
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not 0 <= target_class < cfg.n_classes:
        raise ValueError(f"target_class {target_class} out of range "
                         f"[0, {cfg.n_classes})")

    # one-hot initialization at the target logit
    rel_logits = np.zeros(cfg.n_classes, dtype=np.float64)
    rel_logits[target_class] = 1.0

    cls_emb = trace.final_normed[0].astype(np.float64)
    rel_cls = lrp_linear(cls_emb[None, :], p["head.w"].astype(np.float64),
                         p["head.b"].astype(np.float64),
                         rel_logits[None, :], eps)[0]
    rel = np.zeros(trace.final_normed.shape, dtype=np.float64)
    rel[0] = rel_cls  # final layernorm: identity rule

    per_layer: list[np.ndarray] = [None] * cfg.n_layers
    cut_totals: list[float] = [0.0] * cfg.n_layers
    scale = 1.0 / np.sqrt(cfg.head_dim)

    for l in reversed(range(cfg.n_layers)):
        pre = f"layer{l}."
        t = trace.layers[l]
        f64 = lambda name: p[pre + name].astype(np.float64)

        # x_out = x_mid + mlp_out
        rel_x_mid, rel_mlp = _lrp_add(t.x_mid.astype(np.float64),
                                      t.mlp_out.astype(np.float64), rel, eps)
        rel_g = lrp_linear(t.g.astype(np.float64), f64("mlp.w2"),
                           f64("mlp.b2"), rel_mlp, eps)
        rel_u = rel_g  # gelu: identity rule
        rel_h2 = lrp_linear(t.h2.astype(np.float64), f64("mlp.w1"),
                            f64("mlp.b1"), rel_u, eps)
        rel_x_mid = rel_x_mid + rel_h2  # layernorm: identity rule

        # x_mid = x_in + attn_out
        rel_x_in, rel_attn_out = _lrp_add(t.x_in.astype(np.float64),
                                          t.attn_out.astype(np.float64),
                                          rel_x_mid, eps)
        rel_ctx_flat = lrp_linear(t.ctx_flat.astype(np.float64),
                                  f64("attn.wo"), f64("attn.bo"),
                                  rel_attn_out, eps)
        rel_ctx = _split_heads(rel_ctx_flat, cfg.n_heads)

        # ctx = attn @ v
        attn64 = t.attn.astype(np.float64)
        v64 = t.v.astype(np.float64)
        rel_attn, rel_v = _lrp_bilinear(attn64, v64, attn64 @ v64,
                                        rel_ctx, eps)
        per_layer[l] = rel_attn

        # softmax: identity; scores = (q @ k^T) * scale
        q64 = t.q.astype(np.float64)
        k64 = t.k.astype(np.float64)
        scores = (q64 @ k64.transpose(0, 2, 1)) * scale
        s = rel_attn / _stabilize(scores, eps)
        rel_q = 0.5 * q64 * ((s @ k64) * scale)
        rel_k = 0.5 * k64 * ((s.transpose(0, 2, 1) @ q64) * scale)

        h1_64 = t.h1.astype(np.float64)
        rel_h1 = np.zeros_like(h1_64)
        for name, rel_part in (("wq", rel_q), ("wk", rel_k), ("wv", rel_v)):
            flat = _merge_heads(rel_part)
            w64 = f64("attn." + name)
            b64 = f64("attn.b" + name[1])
            rel_h1 += lrp_linear(h1_64, w64, b64, flat, eps)

        rel = rel_x_in + rel_h1  # layernorm: identity rule
        cut_totals[l] = float(rel.sum())

    return per_layer, cut_totals


def lrp_relevances(weights: ViTWeights, trace: ForwardTrace,
                   target_class: int, eps: float = 1e-9) -> list[np.ndarray]:
    """Per-layer relevance at each attention map for ``target_class``.

    Shapes match the traced attention maps: (n_heads, n, n) per layer.
    """
    per_layer, _ = _lrp_pass(weights, trace, target_class, eps)
    return per_layer


def lrp_cut_totals(weights: ViTWeights, trace: ForwardTrace,
                   target_class: int, eps: float = 1e-9) -> list[float]:
    """Total relevance mass at each block's input cut (conservation probe).

    Index l is the cut just below block l; with perfectly conserving rules
    every entry would equal the initial mass of 1.
    """
    _, cut_totals = _lrp_pass(weights, trace, target_class, eps)
    return cut_totals
