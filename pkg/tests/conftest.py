"""Shared fixtures: tiny experiment configs that run in seconds."""

import pytest

from orchestrator.experiment import ExperimentConfig


def tiny_raw(**overrides) -> dict:
    raw = {
        "data": {"kind": "synthetic", "num_classes": 2, "n_train": 120, "n_test": 40,
                 "image_size": 8, "channels": 1, "class_signal": 1.0, "noise_std": 0.5},
        "noise": {"epsilon": 0.1},
        "model": {"patch_size": 4, "embed_dim": 8, "num_heads": 2, "depth": 1, "mlp_ratio": 2.0},
        "train": {"optimizer": "adam", "base_lr": 0.003, "epochs": 1, "batch_size": 32, "l2": 0.03},
        "prune": {"zeta_iter": 0.5, "zeta_end": 0.9},
        "seed": 7,
    }
    for key, value in overrides.items():
        if isinstance(value, dict):
            raw.setdefault(key, {}).update(value)
        else:
            raw[key] = value
    return raw


@pytest.fixture
def tiny_config(tmp_path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(tiny_raw(output_dir=str(tmp_path / "run")))
