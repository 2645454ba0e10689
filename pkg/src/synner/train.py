"""Adam optimization loop, evaluation and prediction.

Training is deterministic given (config, seed, inputs): parameter init,
epoch shuffling and dropout masks all derive from the run seed. Sentences are
batched by count with per-sentence forward/backward passes and gradients
averaged over the batch. The checkpoint kept is the one with the best dev F1;
ties keep the earlier epoch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, fields
from typing import TextIO

import numpy as np

from . import encoder as enc_mod
from . import synextract
from .corpus import LabeledCorpus, convert_corpus_to_bioes
from .metrics import EvalReport, score_sequences
from .model import ModelConfig, NerModel, SentenceFeatures


@dataclass
class TrainConfig:
    # model
    encoder: str = "adapted"
    layers: int = 2
    hidden: int = 128
    heads: int = 8
    dropout: float = 0.2
    word_dim: int = 64
    syntax: tuple[str, ...] = ("pos", "con", "dep")
    fusion: str = "sa"
    gate: bool = True
    crf_mask: bool = False
    # optimization
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 100
    seed: int = 0
    min_count: int = 1
    window: int = 1
    embeddings_file: str | None = None
    stop_at_dev_f1: float | None = None  # optional early exit once dev F1 reaches it

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.encoder, self.layers, self.hidden, self.heads,
                           self.dropout, self.word_dim, tuple(self.syntax),
                           self.fusion, self.gate, self.crf_mask)

    def validate(self) -> None:
        self.model_config().validate()
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("lr, batch_size and max_epochs must be positive")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        kwargs = dict(d)
        if "syntax" in kwargs:
            kwargs["syntax"] = tuple(kwargs["syntax"])
        known = {f.name for f in fields(cls)}
        unknown = set(kwargs) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)


class Adam:
    """Bias-corrected Adam over a parameter registry."""

    def __init__(self, registry, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.99, epsilon: float = 1e-8):
        self.registry = registry
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in registry.trainable()}
        self.v = {name: np.zeros_like(t.data) for name, t in registry.trainable()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, tensor in self.registry.trainable():
            g = tensor.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            tensor.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    dev_p: float
    dev_r: float
    dev_f1: float

    def line(self) -> str:
        return (f"{self.epoch}\t{self.loss:.6f}\t{self.dev_p:.2f}\t"
                f"{self.dev_r:.2f}\t{self.dev_f1:.2f}")


@dataclass
class TrainResult:
    model: NerModel
    log: list[EpochLog]
    best_epoch: int
    best_f1: float
    seconds: float = 0.0

    def log_lines(self) -> list[str]:
        return ["epoch\tloss\tdev_P\tdev_R\tdev_F1"] + [e.line() for e in self.log]


@dataclass
class Dataset:
    """A corpus with its extracted syntax memories, ready to featurize."""

    corpus: LabeledCorpus
    memories: list[synextract.SentenceMemories] | None


def prepare_dataset(corpus: LabeledCorpus, trees, graphs,
                    types: tuple[str, ...], window: int = 1) -> Dataset:
    corpus, _ = convert_corpus_to_bioes(corpus)
    mems = None
    if types:
        mems = synextract.extract_corpus(corpus, trees, graphs, tuple(types), window)
    return Dataset(corpus, mems)


def build_model(config: TrainConfig, train_data: Dataset,
                static_vectors=None) -> NerModel:
    """Vocabularies come from the training split only."""
    config.validate()
    word_vocab = enc_mod.build_vocab(
        (t.surface for s in train_data.corpus.sentences for t in s.tokens),
        config.min_count)
    syntax_vocabs = {}
    for c in config.syntax:
        syntax_vocabs[c] = synextract.build_syntax_vocab(train_data.memories, c,
                                                         config.min_count)
    labels = train_data.corpus.label_set
    return NerModel(config.model_config(), word_vocab, syntax_vocabs, labels,
                    seed=config.seed, static_vectors=static_vectors)


def evaluate_model(model: NerModel, feats: list[SentenceFeatures]) -> EvalReport:
    gold = [f.sentence.labels for f in feats]
    pred = [model.decode_labels(f) for f in feats]
    return score_sequences(gold, pred)


def train_model(config: TrainConfig, train_data: Dataset, dev_data: Dataset,
                static_vectors=None,
                log_stream: TextIO | None = None) -> TrainResult:
    t0 = time.time()
    config.validate()
    model = build_model(config, train_data, static_vectors)
    train_feats = model.featurize_corpus(train_data.corpus, train_data.memories)
    dev_feats = model.featurize_corpus(dev_data.corpus, dev_data.memories)

    rng = np.random.default_rng(config.seed)
    adam = Adam(model.params, config.lr, config.beta1, config.beta2, config.epsilon)
    log: list[EpochLog] = []
    best_f1 = -1.0
    best_epoch = 0
    best_state: dict[str, np.ndarray] = {}

    n = len(train_feats)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            model.params.zero_grad()
            for idx in batch:
                loss = model.loss(train_feats[idx], train=True, rng=rng)
                loss.backward(seed=1.0 / len(batch))
                epoch_loss += loss.item()
            adam.step()
        report = evaluate_model(model, dev_feats)
        entry = EpochLog(epoch, epoch_loss / n, report.precision, report.recall,
                         report.f1)
        log.append(entry)
        if log_stream is not None:
            print(entry.line(), file=log_stream, flush=True)
        if report.f1 > best_f1:
            best_f1 = report.f1
            best_epoch = epoch
            best_state = {name: t.data.copy() for name, t in model.params.items()}
        if config.stop_at_dev_f1 is not None and report.f1 >= config.stop_at_dev_f1:
            break

    for name, data in best_state.items():
        model.params[name].data[...] = data
    return TrainResult(model, log, best_epoch, best_f1, time.time() - t0)


def predict_corpus(model: NerModel, data: Dataset, stream: TextIO,
                   gold: bool = True) -> None:
    """Write a CoNLL file with the predicted label column appended."""
    feats = model.featurize_corpus(data.corpus, data.memories, gold=gold)
    for f in feats:
        pred = model.decode_labels(f)
        for tok, g, p in zip(f.sentence.tokens, f.sentence.labels, pred):
            cols = [tok.surface, tok.pos]
            if gold:
                cols.append(g)
            cols.append(p)
            print(" ".join(cols), file=stream)
        print(file=stream)
