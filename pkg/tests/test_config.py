"""Experiment configs, presets, overrides and the CLI entry points that need no training."""

import json

import pytest
from click.testing import CliRunner

from main import cli
from orchestrator.experiment import ExperimentConfig, apply_overrides, load_experiment, load_preset
from utils.errors import ConfigError

from tests.conftest import tiny_raw


def test_config_round_trip(tmp_path, tiny_config) -> None:
    path = tiny_config.save(tmp_path / "config.json")
    loaded = load_experiment(path)
    assert loaded == tiny_config
    assert loaded.to_json() == tiny_config.to_json() == path.read_text()
    assert loaded.model.num_classes == 2 and loaded.model.channels == 1 and loaded.model.image_size == 8


def test_config_hash_ignores_output_dir(tiny_config) -> None:
    moved = tiny_config.with_output_dir("/elsewhere")
    assert moved.config_hash == tiny_config.config_hash
    assert moved.run_id == f"run-{tiny_config.config_hash[:10]}"
    assert tiny_config.with_l2(1.0).config_hash != tiny_config.config_hash


def test_unknown_keys_are_rejected() -> None:
    with pytest.raises(ConfigError, match="train.lr"):
        ExperimentConfig.from_dict(tiny_raw(train={"lr": 0.1}))
    with pytest.raises(ConfigError, match="unknown key"):
        ExperimentConfig.from_dict(tiny_raw(extra=1))


def test_invalid_json(tmp_path) -> None:
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_experiment(path)


def test_model_must_match_data() -> None:
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(tiny_raw(model={"num_classes": 3}))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(tiny_raw(model={"image_size": 16}))


def test_overrides(tiny_config) -> None:
    cfg = apply_overrides(tiny_config, [
        "train.l2=1e-05", "prune.zeta_iter=0.3", "seed=3", "train.milestones=[1, 2]", "train.optimizer=sgd-momentum",
    ])
    assert cfg.train.l2 == 1e-05 and isinstance(cfg.train.l2, float)
    assert cfg.prune.zeta_iter == 0.3 and cfg.seed == 3
    assert cfg.train.milestones == (1, 2) and cfg.train.optimizer == "sgd-momentum"
    assert apply_overrides(tiny_config, []) is tiny_config

    for bad in (["train.l2"], ["foo.bar=1"], ["train.nope=1"], ["a.b.c=1"]):
        with pytest.raises(ConfigError):
            apply_overrides(tiny_config, bad)


def test_presets_load() -> None:
    desk = load_preset("desk")
    assert desk.data.kind == "synthetic" and desk.model.num_classes == 4
    vit = load_preset("vit_cifar10")
    assert vit.train.base_lr == 1e-4 and vit.model.embed_dim == 512 and vit.prune.planned_iterations() == 42
    resnet = load_preset("resnet_policy_cifar10")
    assert resnet.train.milestones == (80, 120) and resnet.train.l2 == 1e-4
    with pytest.raises(ConfigError, match="available"):
        load_preset("nope")


def test_cli_detect_exit_codes(tmp_path) -> None:
    curve = tmp_path / "curve.csv"
    curve.write_text("sparsity,val_acc\n" + "".join(
        f"{1 - 0.8 ** k},{v}\n" for k, v in enumerate([0.8, 0.8, 0.8, 0.7, 0.6, 0.7, 0.78, 0.5, 0.3, 0.25])
    ))
    result = CliRunner().invoke(cli, ["--no-deterministic", "detect", str(curve)])
    assert result.exit_code == 2, result.output
    payload = json.loads(result.output)
    assert payload["verdict"]["trigger_index"] == 7
    assert payload["phases"]["phases"]["2"] == [3, 5]

    flat = tmp_path / "flat.csv"
    flat.write_text("val_acc\n0.5\n0.5\n0.4\n")
    assert CliRunner().invoke(cli, ["--no-deterministic", "detect", str(flat)]).exit_code == 0


def test_cli_detect_missing_column(tmp_path) -> None:
    curve = tmp_path / "curve.csv"
    curve.write_text("sparsity,acc\n0,0.5\n")
    result = CliRunner().invoke(cli, ["--no-deterministic", "detect", str(curve)])
    assert result.exit_code == 4
