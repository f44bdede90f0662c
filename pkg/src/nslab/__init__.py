"""Negative-sampling lab for contrastive audio-text dual encoders."""
from nslab.data import Caption, Clip, PairedDataset, SynthConfig, generate_synthetic, load_features, split_dataset
from nslab.encoders import ModelParameters, init_parameters
from nslab.evaluation import RetrievalMetrics, evaluate_retrieval
from nslab.experiment import ExperimentConfig, RetrievalReport, emit_report, run_experiment
from nslab.kernels import BACKEND
from nslab.sampling import STRATEGIES, select_negatives
from nslab.training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "STRATEGIES",
    "Caption",
    "Clip",
    "ExperimentConfig",
    "ModelParameters",
    "PairedDataset",
    "RetrievalMetrics",
    "RetrievalReport",
    "SynthConfig",
    "TrainConfig",
    "emit_report",
    "evaluate_retrieval",
    "generate_synthetic",
    "init_parameters",
    "load_features",
    "run_experiment",
    "select_negatives",
    "split_dataset",
    "train",
]
