"""End-to-end runs on tiny synthetic experiments: loop, artifacts, resume and sweeps."""

import numpy as np
import pandas as pd
import pytest

from dataset import prepare_data
from model import init_params
from orchestrator.checkpoint import load_checkpoint
from orchestrator.experiment import ExperimentConfig
from orchestrator.pipeline import (
    METRICS_COLUMNS,
    STATUS_COMPLETED,
    STATUS_INTERRUPTED,
    RunDirectory,
    load_record,
    resume,
    run_experiment,
)
from orchestrator.sweep import sweep_lambda
from orchestrator.trainer import evaluate, train
from utils.errors import ConfigError, RunStateError
from utils.io import read_json

from tests.conftest import tiny_raw


def _config(path, **overrides) -> ExperimentConfig:
    return ExperimentConfig.from_dict(tiny_raw(output_dir=str(path), **overrides))


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    """One uninterrupted tiny run shared by the read-only checks below."""
    root = tmp_path_factory.mktemp("finished")
    return run_experiment(_config(root / "run"))


def test_run_completes_every_planned_iteration(finished) -> None:
    assert finished.status == STATUS_COMPLETED
    assert finished.manifest["planned_iterations"] == 4
    assert [pt.prune_iter for pt in finished.curve] == [0, 1, 2, 3, 4]

    df = pd.read_csv(RunDirectory(finished.run_dir).metrics)
    assert list(df.columns) == METRICS_COLUMNS
    assert df["sparsity"].iloc[0] == 0.0
    total = finished.manifest["iterations"][0]["survivors"]
    for k, s in enumerate(df["sparsity"]):
        assert abs(s - (1.0 - 0.5 ** k)) <= 1.0 / total
    assert df["sparsity"].is_monotonic_increasing
    assert (df["epochs_trained"] == 1).all()


def test_run_directory_layout(finished) -> None:
    paths = RunDirectory(finished.run_dir)
    for path in (paths.config, paths.manifest, paths.metrics, paths.epochs, paths.verdict, paths.flips,
                 paths.init_checkpoint):
        assert path.exists(), path
    flips = pd.read_csv(paths.flips)
    assert list(flips.columns) == ["index", "original", "new"]
    assert len(flips) == finished.manifest["noise"]["count"] == 11
    assert len(pd.read_csv(paths.epochs)) == 5


def test_labels_are_identical_across_iterations(finished) -> None:
    hashes = {it["train_labels_hash"] for it in finished.manifest["iterations"]}
    assert hashes == {finished.manifest["train_labels_hash"]}


def test_checkpoint_retention(finished) -> None:
    paths = RunDirectory(finished.run_dir)
    status = {it["prune_iter"]: it["checkpoint_status"] for it in finished.manifest["iterations"]}
    assert status == {0: "kept", 1: "retention-pruned", 2: "retention-pruned", 3: "kept", 4: "kept"}
    assert [paths.checkpoint(k).exists() for k in range(5)] == [True, False, False, True, True]


def test_pruned_weights_stay_zero_after_retraining(finished) -> None:
    paths = RunDirectory(finished.run_dir)
    earlier, later = load_checkpoint(paths.checkpoint(3)), load_checkpoint(paths.checkpoint(4))
    for name, m in later.mask.masks.items():
        assert (m <= earlier.mask.masks[name]).all()
        assert (later.params[name][m == 0] == 0).all()
        assert (earlier.params[name][earlier.mask.masks[name] == 0] == 0).all()
    assert later.mask.rounds == 4


def test_init_checkpoint_holds_initial_weights(finished) -> None:
    init = load_checkpoint(RunDirectory(finished.run_dir).init_checkpoint)
    fresh = init_params(finished.config.model, finished.config.seed)
    assert all(np.array_equal(init.params[n], t.data) for n, t in fresh.items())
    assert init.mask.survivors == init.mask.total


def test_runs_are_deterministic(tmp_path, finished) -> None:
    again = run_experiment(_config(tmp_path / "again"))
    a = RunDirectory(finished.run_dir).metrics.read_bytes()
    b = RunDirectory(again.run_dir).metrics.read_bytes()
    assert a == b


def test_stop_and_resume_matches_uninterrupted_run(tmp_path, finished) -> None:
    partial = run_experiment(_config(tmp_path / "partial"), stop_after=2)
    assert partial.status == STATUS_INTERRUPTED
    assert partial.manifest["completed_iterations"] == 2
    assert len(partial.curve) == 3

    resumed = resume(tmp_path / "partial")
    assert resumed.status == STATUS_COMPLETED
    a = RunDirectory(finished.run_dir).metrics.read_bytes()
    b = RunDirectory(resumed.run_dir).metrics.read_bytes()
    assert a == b
    assert load_record(resumed.run_dir).verdict == finished.verdict


def test_resume_of_completed_run_is_a_no_op(finished) -> None:
    manifest = RunDirectory(finished.run_dir).manifest
    before = manifest.read_bytes()
    record = resume(finished.run_dir)
    assert record.status == STATUS_COMPLETED
    assert manifest.read_bytes() == before


def test_run_state_errors(tmp_path, finished) -> None:
    with pytest.raises(RunStateError):
        resume(tmp_path)
    with pytest.raises(RunStateError):
        run_experiment(_config(finished.run_dir))


def test_resume_rejects_edited_config(tmp_path) -> None:
    run_experiment(_config(tmp_path / "edited"), stop_after=0)
    paths = RunDirectory(tmp_path / "edited")
    raw = read_json(paths.config)
    raw["train"]["l2"] = 0.5
    paths.config.write_text(ExperimentConfig.from_dict(raw).to_json())
    with pytest.raises(RunStateError):
        resume(paths.root)


def test_lambda_sweep(tmp_path) -> None:
    base = _config(tmp_path / "unused")
    result = sweep_lambda(base, [0.03, 1.0], workers=1, sweep_dir=tmp_path / "sweep")
    assert not result.failed
    assert len(result.surface) == 2 * 5
    assert sorted(result.surface["lambda"].unique().tolist()) == [0.03, 1.0]
    assert result.summary["flips_sha256"].nunique() == 1
    assert (tmp_path / "sweep" / "report" / "surface.csv").exists()
    assert (tmp_path / "sweep" / "lambda_0.03" / "manifest.json").exists()
    l2 = {read_json(tmp_path / "sweep" / c / "config.json")["train"]["l2"] for c in ("lambda_0.03", "lambda_1")}
    assert l2 == {0.03, 1.0}


def test_sweep_rejects_bad_lambdas(tmp_path) -> None:
    base = _config(tmp_path / "unused")
    for bad in ([], [0.03, -1.0], [1.0, 1.0], [1.0, 1.0000001]):
        with pytest.raises(ConfigError):
            sweep_lambda(base, bad, sweep_dir=tmp_path / "sweep")


def test_sweep_continues_same_config_and_refuses_another(tmp_path) -> None:
    sweep_dir = tmp_path / "sweep"
    base = _config(tmp_path / "unused", name="grid")
    first = sweep_lambda(base, [0.03], workers=1, sweep_dir=sweep_dir)
    again = sweep_lambda(base, [0.03], workers=1, sweep_dir=sweep_dir)
    assert not again.failed and again.surface.equals(first.surface)

    longer = _config(tmp_path / "unused", name="grid", train={"epochs": 2})
    with pytest.raises(RunStateError, match="different config"):
        sweep_lambda(longer, [0.03], workers=1, sweep_dir=sweep_dir)
    assert read_json(sweep_dir / "lambda_0.03" / "config.json")["train"]["epochs"] == 1


def test_dense_training_fits_clean_synthetic_data() -> None:
    config = ExperimentConfig.from_dict(tiny_raw(
        data={"n_train": 400, "n_test": 100},
        noise={"epsilon": 0.0},
        train={"base_lr": 0.01, "epochs": 20},
    ))
    data = prepare_data(config.data, config.noise, config.seed)
    params = init_params(config.model, config.seed)
    result = train(config.model, params, data.train, config.train, seed=config.seed)
    assert result.epochs_trained == 20
    acc, _ = evaluate(config.model, params, data.val)
    assert acc >= 0.95
