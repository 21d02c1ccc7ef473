from orchestrator.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from orchestrator.experiment import ExperimentConfig, apply_overrides, load_experiment, load_preset
from orchestrator.pipeline import RunDirectory, RunRecord, load_record, resume, run_experiment
from orchestrator.sweep import SweepResult, load_sweep, sweep_lambda
from orchestrator.trainer import evaluate, train
