"""Vision Transformer pieces and the full forward pass."""

import math

import numpy as np
import pytest

from autodiff import Tensor, check_gradients, cross_entropy, precision
from model import (
    ViTConfig,
    attention,
    encoder_block,
    init_params,
    parameter_count,
    parameter_shapes,
    patchify,
    prunable_names,
    vit_forward,
)
from utils.errors import ConfigError


def _count_by_walking(config: ViTConfig) -> int:
    """Independent count: build every tensor and add up its size."""
    return sum(t.size for t in init_params(config, 0).values())


def test_patchify_examples() -> None:
    img = np.arange(16.0).reshape(1, 4, 4)
    rows = patchify(img, 2).data
    assert rows.shape == (4, 4)
    assert rows[0].tolist() == [0, 1, 4, 5]
    assert rows[3].tolist() == [10, 11, 14, 15]

    assert np.array_equal(patchify(img, 4).data, img.reshape(1, -1))

    rgb = np.arange(12.0).reshape(3, 2, 2)
    assert patchify(rgb, 2).data.tolist() == [list(range(12))]


def test_patchify_rejects_indivisible_extent() -> None:
    with pytest.raises(ConfigError):
        patchify(np.zeros((1, 5, 5)), 2)


def test_attention_examples() -> None:
    rng = np.random.default_rng(0)
    with precision("double"):
        v = Tensor(rng.standard_normal((1, 3)))
        assert np.allclose(attention(Tensor(rng.standard_normal((1, 3))), Tensor(rng.standard_normal((1, 3))), v).data, v.data)

        v = rng.standard_normal((4, 2))
        k = np.tile(rng.standard_normal((1, 2)), (4, 1))
        out = attention(Tensor(rng.standard_normal((4, 2))), Tensor(k), Tensor(v)).data
        assert np.allclose(out, np.tile(v.mean(axis=0), (4, 1)))

        # d_h = 1: scores are q*k, so q0*k1 = ln 3 and everything else 0
        q = Tensor([[1.0], [0.0]])
        k = Tensor([[0.0], [math.log(3.0)]])
        v = rng.standard_normal((2, 3))
        out = attention(q, k, Tensor(v)).data
        assert np.allclose(out[0], 0.25 * v[0] + 0.75 * v[1])
        assert np.allclose(out[1], v.mean(axis=0))


def test_attention_rows_are_convex_combinations() -> None:
    rng = np.random.default_rng(1)
    with precision("double"):
        q, k, v = (Tensor(rng.standard_normal((6, 4))) for _ in range(3))
        out = attention(q, k, v).data
    lo, hi = v.data.min(axis=0), v.data.max(axis=0)
    assert ((out >= lo - 1e-12) & (out <= hi + 1e-12)).all()


def test_encoder_block_identity_when_outputs_zeroed() -> None:
    config = ViTConfig(image_size=8, channels=1, patch_size=4, embed_dim=8, num_heads=2, depth=1, num_classes=3)
    with precision("double"):
        params = init_params(config, 1)
        for name in ("blocks.0.attn.o.weight", "blocks.0.mlp.fc2.weight"):
            params[name].data[...] = 0.0
        x = Tensor(np.random.default_rng(2).standard_normal((5, 8)))
        out = encoder_block(x, params, 0, config)
    assert out.shape == x.shape
    assert np.allclose(out.data, x.data)


def test_single_head_block_shape() -> None:
    config = ViTConfig(image_size=8, channels=1, patch_size=4, embed_dim=6, num_heads=1, depth=1, num_classes=2)
    params = init_params(config, 3)
    x = Tensor(np.random.default_rng(3).standard_normal((2, 5, 6)))
    assert encoder_block(x, params, 0, config).shape == (2, 5, 6)


def test_forward_shape_and_head_bias() -> None:
    config = ViTConfig(image_size=8, channels=3, patch_size=4, embed_dim=8, num_heads=2, depth=2, num_classes=5)
    params = init_params(config, 0)
    batch = np.random.default_rng(4).standard_normal((3, 3, 8, 8))
    assert vit_forward(config, params, batch).shape == (3, 5)

    for t in params.values():
        t.data[...] = 0.0
    params["head.bias"].data[...] = np.arange(5.0)
    logits = vit_forward(config, params, batch).data
    assert np.allclose(logits, np.tile(np.arange(5.0), (3, 1)))


def test_forward_sees_patch_positions() -> None:
    config = ViTConfig(image_size=8, channels=1, patch_size=4, embed_dim=8, num_heads=2, depth=1, num_classes=3)
    params = init_params(config, 5)
    img = np.random.default_rng(5).standard_normal((1, 1, 8, 8))
    swapped = img.copy()
    swapped[..., :4, :4], swapped[..., 4:, 4:] = img[..., 4:, 4:], img[..., :4, :4]
    a = vit_forward(config, params, img).data
    b = vit_forward(config, params, swapped).data
    assert not np.allclose(a, b)
    assert np.array_equal(a, vit_forward(config, params, img).data)


def test_parameter_count_matches_shape_walk() -> None:
    for config in [
        ViTConfig(),
        ViTConfig(image_size=8, channels=1, patch_size=2, embed_dim=12, num_heads=3, depth=3, mlp_ratio=1.5, num_classes=7),
        ViTConfig(embed_dim=512, num_heads=8, depth=1),
    ]:
        assert parameter_count(config) == _count_by_walking(config)
    assert len(parameter_shapes(ViTConfig(depth=2))) == len(set(parameter_shapes(ViTConfig(depth=2))))


def test_prunable_names_are_weight_matrices() -> None:
    params = init_params(ViTConfig(depth=1), 0)
    names = prunable_names(params)
    assert "head.weight" in names and "blocks.0.attn.q.weight" in names
    assert all(params[n].ndim == 2 for n in names)
    assert "pos_embed" not in names and "blocks.0.norm1.gamma" not in names


def test_invalid_configs() -> None:
    with pytest.raises(ConfigError):
        ViTConfig(image_size=30, patch_size=4)
    with pytest.raises(ConfigError):
        ViTConfig(embed_dim=10, num_heads=4)
    with pytest.raises(ConfigError):
        ViTConfig(activation="swish")


def test_full_vit_loss_gradient_check() -> None:
    config = ViTConfig(image_size=8, channels=3, patch_size=4, embed_dim=16, num_heads=2, depth=2, num_classes=3)
    rng = np.random.default_rng(6)
    with precision("double"):
        params = init_params(config, 6)
        # larger weights so every path carries signal
        for t in params.values():
            t.data += rng.normal(0.0, 0.1, size=t.shape)
        batch = rng.standard_normal((2, 3, 8, 8))
        labels = [0, 2]
        errors = check_gradients(lambda: cross_entropy(vit_forward(config, params, batch), labels), params)
    worst = max(errors, key=errors.get)
    assert errors[worst] <= 1e-4, f"{worst}: relative error {errors[worst]:.2e}"
