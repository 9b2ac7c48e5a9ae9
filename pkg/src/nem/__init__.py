"""Noise-aware EM training for multi-label relation classifiers over bags."""

from .channel import NoiseChannel, flip_noise
from .data import Bag, Dataset, Sentence
from .datagen import CorpusSpec, generate, load_dataset, save_dataset
from .encoder import EncoderConfig, EncoderParams, forward, init_params
from .labels import RelationCatalog, hamming, make_label_vector
from .training import Posterior, TrainConfig, e_step, lower_bound, train

__version__ = "0.1.0"

__all__ = [
    "Bag",
    "CorpusSpec",
    "Dataset",
    "EncoderConfig",
    "EncoderParams",
    "NoiseChannel",
    "Posterior",
    "RelationCatalog",
    "Sentence",
    "TrainConfig",
    "e_step",
    "flip_noise",
    "forward",
    "generate",
    "hamming",
    "init_params",
    "load_dataset",
    "lower_bound",
    "make_label_vector",
    "save_dataset",
    "train",
    "__version__",
]
