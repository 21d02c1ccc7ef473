"""Schedules, optimizer steps and training policies."""

import numpy as np
import pytest

from autodiff import Tensor, backward, cross_entropy, matmul
from optim import (
    PRESETS,
    Adam,
    LRSchedule,
    SGDMomentum,
    TrainPolicy,
    adam_step,
    build_optimizer,
    cosine_lr,
    multistep_lr,
    sgd_momentum_step,
)
from utils.errors import ConfigError, ContractError, DimensionError


def test_cosine_lr_endpoints() -> None:
    assert cosine_lr(0, 100, 0.1, 0.001) == pytest.approx(0.1)
    assert cosine_lr(100, 100, 0.1, 0.001) == pytest.approx(0.001)
    assert cosine_lr(50, 100, 0.1, 0.001) == pytest.approx(0.0505)


def test_cosine_lr_is_non_increasing() -> None:
    values = [cosine_lr(t, 37, 1.0, 0.0) for t in range(38)]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_cosine_lr_errors() -> None:
    with pytest.raises(ConfigError):
        cosine_lr(0, 0, 0.1)
    with pytest.raises(ContractError):
        cosine_lr(11, 10, 0.1)


def test_multistep_lr_resnet_policy() -> None:
    assert multistep_lr(0, [80, 120], 0.1, 0.1) == pytest.approx(0.1)
    assert multistep_lr(100, [80, 120], 0.1, 0.1) == pytest.approx(0.01)
    assert multistep_lr(150, [80, 120], 0.1, 0.1) == pytest.approx(0.001)
    assert multistep_lr(500, [], 0.1, 0.1) == 0.1
    with pytest.raises(ConfigError):
        multistep_lr(0, [1], 0.0, 0.1)


def test_lr_schedule_runs_cosine_over_the_round() -> None:
    policy = TrainPolicy(base_lr=1.0, lr_min=0.0, epochs=2, schedule="cosine")
    schedule = LRSchedule(policy, steps_per_epoch=5)
    assert schedule(0, 0) == pytest.approx(1.0)
    assert schedule(1, 0) == pytest.approx(0.5)
    assert LRSchedule(TrainPolicy(schedule="constant", base_lr=0.2), 3)(5, 2) == 0.2


def test_sgd_momentum_examples() -> None:
    w, g = np.array([1.0, -2.0]), np.array([0.5, 0.5])
    new_w, v = sgd_momentum_step(w, g, np.zeros(2), lr=0.1, beta=0.0, l2=0.0)
    assert np.allclose(new_w, w - 0.1 * g) and np.allclose(v, g)

    new_w, _ = sgd_momentum_step(w, np.zeros(2), np.zeros(2), lr=0.1, beta=0.9, l2=0.5)
    assert np.allclose(new_w, w - 0.1 * 0.5 * w)

    v = np.zeros(2)
    p = w.copy()
    for _ in range(2):
        p, v = sgd_momentum_step(p, g, v, lr=0.0, beta=0.9, l2=0.0)
    assert np.allclose(v, 1.9 * g)


def test_sgd_momentum_shape_mismatch() -> None:
    with pytest.raises(DimensionError):
        sgd_momentum_step(np.zeros(2), np.zeros(3), np.zeros(2), 0.1, 0.9, 0.0)


def test_adam_examples() -> None:
    w = np.array([0.3, -0.7, 2.0])
    g = np.array([1e-3, -5.0, 0.2])
    new_w, _, _ = adam_step(w, g, np.zeros(3), np.zeros(3), 1, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8, l2=0.0)
    assert np.allclose(np.abs(new_w - w), 0.01, rtol=1e-4)
    assert np.array_equal(np.sign(w - new_w), np.sign(g))

    same, _, _ = adam_step(w, np.zeros(3), np.zeros(3), np.zeros(3), 1, 0.01, 0.9, 0.999, 1e-8, 0.0)
    assert np.array_equal(same, w)

    decayed, _, _ = adam_step(w, np.zeros(3), np.zeros(3), np.zeros(3), 1, 0.01, 0.9, 0.999, 1e-8, 0.1)
    assert (np.abs(decayed) < np.abs(w)).all()

    with pytest.raises(ConfigError):
        adam_step(w, g, np.zeros(3), np.zeros(3), 0, 0.01, 0.9, 0.999, 1e-8, 0.0)


@pytest.mark.parametrize("policy", [TrainPolicy(optimizer="adam", l2=0.0), TrainPolicy(optimizer="sgd-momentum", l2=0.0)])
def test_zero_gradient_is_a_fixed_point(policy) -> None:
    params = {"w": Tensor(np.arange(4.0).reshape(2, 2), requires_grad=True)}
    before = params["w"].data.copy()
    opt = build_optimizer(policy, params)
    for _ in range(3):
        opt.step({"w": np.zeros((2, 2), dtype=np.float32)}, lr=0.1)
    assert np.array_equal(params["w"].data, before)


def test_masked_coordinates_stay_untouched() -> None:
    params = {"w": Tensor(np.array([[0.0, 1.0], [2.0, 0.0]]), requires_grad=True)}
    mask = {"w": np.array([[0, 1], [1, 0]], dtype=np.uint8)}
    for opt in (Adam(params, l2=0.1), SGDMomentum(params, l2=0.1)):
        for _ in range(5):
            grads = {"w": np.ones((2, 2), dtype=np.float32) * mask["w"]}
            opt.step(grads, lr=0.05)
            opt.apply_mask(mask)
        assert params["w"].data[0, 0] == 0.0 and params["w"].data[1, 1] == 0.0
        assert all(((slot["w"] * (1 - mask["w"])) == 0).all() for slot in opt.state().values())


def test_decay_exclude_patterns() -> None:
    params = {
        "blocks.0.norm1.gamma": Tensor(np.ones(2), requires_grad=True),
        "head.weight": Tensor(np.ones((2, 2)), requires_grad=True),
    }
    opt = SGDMomentum(params, l2=0.5, decay_exclude=["*.gamma"])
    assert opt.decay == {"blocks.0.norm1.gamma": 0.0, "head.weight": 0.5}


def test_policy_validation_and_presets() -> None:
    with pytest.raises(ConfigError):
        TrainPolicy(l2=-1.0)
    with pytest.raises(ConfigError):
        TrainPolicy(epochs=0)
    with pytest.raises(ConfigError):
        TrainPolicy(milestones=(120, 80))
    assert PRESETS["vit-cifar10"].base_lr == 1e-4 and PRESETS["vit-cifar10"].l2 == 0.03
    assert PRESETS["resnet-cifar10"].milestones == (80, 120)


def test_training_loss_halves_on_separable_task() -> None:
    rng = np.random.default_rng(0)
    x = rng.standard_normal((64, 5)).astype(np.float32)
    y = (x[:, 0] > 0).astype(np.int64)
    params = {"w": Tensor(rng.normal(0, 0.01, size=(5, 2)), requires_grad=True)}
    opt = Adam(params, l2=0.0)
    losses = []
    for _ in range(200):
        params["w"].zero_grad()
        loss = cross_entropy(matmul(Tensor(x), params["w"]), y)
        losses.append(loss.item())
        opt.step(backward(loss, params), lr=0.01)
    assert losses[-1] <= 0.5 * losses[0]
