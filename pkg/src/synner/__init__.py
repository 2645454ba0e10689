"""Syntax-enhanced named entity recognition toolkit.

Sequence labeling with per-syntax-type key-value memories, attention over
syntax types, gated fusion with a context encoder, and linear-chain CRF
decoding, built on a small self-contained autodiff engine.
"""

from .corpus import (ColumnMap, EntitySpan, LabeledCorpus, Sentence, Token,
                     decode_spans, load_conll, to_bioes)
from .model import ModelConfig, NerModel
from .train import Dataset, TrainConfig, prepare_dataset, train_model

__version__ = "0.1.0"

__all__ = [
    "ColumnMap", "EntitySpan", "LabeledCorpus", "Sentence", "Token",
    "decode_spans", "load_conll", "to_bioes",
    "ModelConfig", "NerModel",
    "Dataset", "TrainConfig", "prepare_dataset", "train_model",
    "__version__",
]
