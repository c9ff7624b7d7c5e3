from .config import VARIANTS, ConfigError, TrainConfig, load_config, parse_config
from .data import (
    Corpus,
    CorpusConfig,
    augment_clip,
    generate_synthetic_corpus,
    load_dataset,
    read_pgm,
    sample_clip,
    write_dataset,
    write_pgm,
)
from .evaluate import EvalResult, Retrieval, evaluate, predict_proba, retrieve_nearest_clip, retrieve_nearest_clips
from .train import TrainingData, TrainingDivergence, TrainResult, make_training_data, train, train_family

__all__ = [
    "VARIANTS",
    "ConfigError",
    "Corpus",
    "CorpusConfig",
    "EvalResult",
    "Retrieval",
    "TrainConfig",
    "TrainResult",
    "TrainingData",
    "TrainingDivergence",
    "augment_clip",
    "evaluate",
    "generate_synthetic_corpus",
    "load_config",
    "load_dataset",
    "make_training_data",
    "parse_config",
    "predict_proba",
    "read_pgm",
    "retrieve_nearest_clip",
    "retrieve_nearest_clips",
    "sample_clip",
    "train",
    "train_family",
    "write_dataset",
    "write_pgm",
]
