"""Substructure-aware CP tensor model for multi-type drug-drug interaction prediction."""
from .model import FactorModel, TrainConfig, init_model, load_model, save_model, score, train
from .data import Dataset, generate_planted, load_dataset, split

__all__ = [
    "Dataset",
    "FactorModel",
    "TrainConfig",
    "generate_planted",
    "init_model",
    "load_dataset",
    "load_model",
    "save_model",
    "score",
    "split",
    "train",
]
