"""Vision Transformer: patch embedding, positional embedding, class token,
pre-norm encoder blocks (multi-head self-attention + MLP), classification
head on the class-token representation.

Parameters live in a flat, ordered ``name -> Tensor`` mapping. Names are the
keys used by pruning masks, optimizer state and checkpoints.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from autodiff import Tensor, ops
from utils.errors import ConfigError, DimensionError

ViTParams = dict[str, Tensor]

INIT_STD = 0.02
ACTIVATIONS = {"gelu": ops.gelu, "relu": ops.relu}


@dataclass(frozen=True)
class ViTConfig:
    image_size: int = 32
    channels: int = 3
    patch_size: int = 4
    embed_dim: int = 64
    num_heads: int = 4
    depth: int = 4
    mlp_ratio: float = 2.0
    num_classes: int = 10
    activation: str = "gelu"
    norm_eps: float = 1e-5

    def __post_init__(self):
        for field_name in ("image_size", "channels", "patch_size", "embed_dim", "num_heads", "depth", "num_classes"):
            if getattr(self, field_name) < 1:
                raise ConfigError(f"model.{field_name} must be positive, got {getattr(self, field_name)}")
        if self.image_size % self.patch_size:
            raise ConfigError(f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.num_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} is not divisible by num_heads {self.num_heads}")
        if self.mlp_ratio <= 0:
            raise ConfigError(f"mlp_ratio must be positive, got {self.mlp_ratio}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {sorted(ACTIVATIONS)}, got {self.activation!r}")

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_size**2

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.mlp_ratio * self.embed_dim))

    def to_dict(self) -> dict:
        return asdict(self)


def parameter_shapes(config: ViTConfig) -> dict[str, tuple[int, ...]]:
    d, h = config.embed_dim, config.mlp_hidden
    shapes: dict[str, tuple[int, ...]] = {
        "patch_embed.weight": (config.patch_dim, d),
        "patch_embed.bias": (d,),
        "cls_token": (1, d),
        "pos_embed": (config.num_patches + 1, d),
    }
    for i in range(config.depth):
        p = f"blocks.{i}"
        shapes[f"{p}.norm1.gamma"] = (d,)
        shapes[f"{p}.norm1.beta"] = (d,)
        for proj in ("q", "k", "v", "o"):
            shapes[f"{p}.attn.{proj}.weight"] = (d, d)
            shapes[f"{p}.attn.{proj}.bias"] = (d,)
        shapes[f"{p}.norm2.gamma"] = (d,)
        shapes[f"{p}.norm2.beta"] = (d,)
        shapes[f"{p}.mlp.fc1.weight"] = (d, h)
        shapes[f"{p}.mlp.fc1.bias"] = (h,)
        shapes[f"{p}.mlp.fc2.weight"] = (h, d)
        shapes[f"{p}.mlp.fc2.bias"] = (d,)
    shapes["norm.gamma"] = (d,)
    shapes["norm.beta"] = (d,)
    shapes["head.weight"] = (d, config.num_classes)
    shapes["head.bias"] = (config.num_classes,)
    return shapes


def parameter_count(config: ViTConfig) -> int:
    """Closed-form number of scalar parameters."""
    d, h, k = config.embed_dim, config.mlp_hidden, config.num_classes
    block = 2 * d + 4 * (d * d + d) + 2 * d + (d * h + h) + (h * d + d)
    return (
        config.patch_dim * d + d
        + d
        + (config.num_patches + 1) * d
        + config.depth * block
        + 2 * d
        + d * k + k
    )


def is_prunable(name: str) -> bool:
    # weight matrices of patch projection, attention, MLP and head
    return name.endswith(".weight")


def prunable_names(params: ViTParams) -> list[str]:
    return [name for name in params if is_prunable(name)]


def _trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    z = rng.standard_normal(shape)
    bad = np.abs(z) > 2.0
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > 2.0
    return z * std


def init_params(config: ViTConfig, seed: int) -> ViTParams:
    """Truncated-normal projections/embeddings, zero biases, unit norm gains."""
    rng = np.random.default_rng(seed)
    params: ViTParams = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".bias") or name.endswith(".beta"):
            value = np.zeros(shape)
        elif name.endswith(".gamma"):
            value = np.ones(shape)
        else:
            value = _trunc_normal(rng, shape, INIT_STD)
        params[name] = Tensor(value, requires_grad=True, name=name)
    return params


# ----- forward pieces -----

def _patchify_array(images: np.ndarray, p: int) -> np.ndarray:
    *lead, c, h, w = images.shape
    if h % p or w % p:
        raise ConfigError(f"image extents {h}x{w} are not divisible by patch size {p}")
    x = images.reshape(*lead, c, h // p, p, w // p, p)
    n = len(lead)
    # [..., H/p, W/p, C, p, p]: patches row-major, each patch channel-major
    x = x.transpose(*range(n), n + 1, n + 3, n, n + 2, n + 4)
    return x.reshape(*lead, (h // p) * (w // p), c * p * p)


def patchify(image, patch_size: int) -> Tensor:
    """C x H x W image -> num_patches x (C * patch_size^2) rows."""
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    if data.ndim != 3:
        raise DimensionError(f"patchify expects a C x H x W image, got {data.shape}")
    return Tensor(_patchify_array(data, patch_size))


def patchify_batch(batch, patch_size: int) -> Tensor:
    data = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    if data.ndim != 4:
        raise DimensionError(f"patchify_batch expects B x C x H x W, got {data.shape}")
    return Tensor(_patchify_array(data, patch_size))


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d_h)) v over the two trailing axes."""
    if not (q.shape == k.shape and k.shape[:-1] == v.shape[:-1]):
        raise DimensionError(f"attention extents differ: q{q.shape} k{k.shape} v{v.shape}")
    scores = ops.matmul(q, ops.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    return ops.matmul(ops.softmax(scores, axis=-1), v)


def _linear(x: Tensor, params: ViTParams, prefix: str) -> Tensor:
    return ops.matmul(x, params[f"{prefix}.weight"]) + params[f"{prefix}.bias"]


def multi_head_attention(x: Tensor, params: ViTParams, prefix: str, num_heads: int) -> Tensor:
    b, t, d = x.shape
    dh = d // num_heads

    def heads(name):
        y = _linear(x, params, f"{prefix}.{name}").reshape(b, t, num_heads, dh)
        return ops.swapaxes(y, 1, 2)

    a = attention(heads("q"), heads("k"), heads("v"))
    a = ops.swapaxes(a, 1, 2).reshape(b, t, d)
    return _linear(a, params, f"{prefix}.o")


def mlp(x: Tensor, params: ViTParams, prefix: str, activation: str) -> Tensor:
    hidden = ACTIVATIONS[activation](_linear(x, params, f"{prefix}.fc1"))
    return _linear(hidden, params, f"{prefix}.fc2")


def encoder_block(x: Tensor, params: ViTParams, index: int, config: ViTConfig) -> Tensor:
    """Pre-norm residual block: x + MHSA(LN(x)), then + MLP(LN(.))."""
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    if x.ndim != 3 or x.shape[-1] != config.embed_dim:
        raise DimensionError(f"encoder_block expects [tokens x {config.embed_dim}], got {x.shape}")
    p = f"blocks.{index}"
    h = ops.layer_norm(x, params[f"{p}.norm1.gamma"], params[f"{p}.norm1.beta"], config.norm_eps)
    x = x + multi_head_attention(h, params, f"{p}.attn", config.num_heads)
    h = ops.layer_norm(x, params[f"{p}.norm2.gamma"], params[f"{p}.norm2.beta"], config.norm_eps)
    x = x + mlp(h, params, f"{p}.mlp", config.activation)
    return x.reshape(*x.shape[1:]) if squeeze else x


def vit_forward(config: ViTConfig, params: ViTParams, batch) -> Tensor:
    """B x C x H x W images -> B x K logits."""
    data = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    expected = (config.channels, config.image_size, config.image_size)
    if data.ndim != 4 or data.shape[1:] != expected:
        raise DimensionError(f"batch shape {data.shape} does not match model input [B, {expected}]")
    b, d = data.shape[0], config.embed_dim

    x = _linear(patchify_batch(data.astype(params["patch_embed.weight"].dtype, copy=False), config.patch_size),
                params, "patch_embed")
    cls = ops.broadcast_to(params["cls_token"].reshape(1, 1, d), (b, 1, d))
    x = ops.concat([cls, x], axis=1) + params["pos_embed"]
    for i in range(config.depth):
        x = encoder_block(x, params, i, config)
    x = ops.layer_norm(x, params["norm.gamma"], params["norm.beta"], config.norm_eps)
    return _linear(ops.take(x, 0, axis=1), params, "head")
