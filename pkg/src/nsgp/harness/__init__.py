"""Experiment harness: data files, synthetic data, simulation, CLI."""

from .config import ExperimentConfig, load_config
from .dataio import Standardizer, load_csv, write_csv, write_latent_csv
from .experiment import (
    ExperimentResult,
    latent_recovery,
    load_dataset,
    run_experiment,
    stage_labels,
    write_rmse_csv,
)
from .simulate import SensingRound, SimulationReport, iter_sensing_rounds, simulate_sensing
from .snapshot import load_snapshot, save_snapshot
from .synth import SynthSpec, synth_generate

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "SensingRound",
    "SimulationReport",
    "Standardizer",
    "SynthSpec",
    "iter_sensing_rounds",
    "latent_recovery",
    "load_config",
    "load_csv",
    "load_dataset",
    "load_snapshot",
    "run_experiment",
    "save_snapshot",
    "simulate_sensing",
    "stage_labels",
    "synth_generate",
    "write_csv",
    "write_latent_csv",
    "write_rmse_csv",
]
