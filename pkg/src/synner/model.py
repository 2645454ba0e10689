"""Full sequence tagger: embeddings -> context encoder -> syntax ensemble -> CRF.

Fusion settings and their output dimension feeding the label projection:

* ``none``: no syntax; o_i = h_i, dim d (plain encoder-CRF baseline).
* ``dc``: o_i = h_i ++ concat of per-type memory summaries, dim d * (1 + |C|).
* ``sa`` without gate: o_i = h_i ++ attention-weighted summary, dim 2d.
* ``sa`` with gate: o_i = (r * h_i) ++ ((1 - r) * s_i), dim 2d.

The gate requires the syntax-attention path because its elementwise mix needs
dim(s) = dim(h).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from . import autodiff as ad
from . import crf as crf_mod
from . import encoder as enc_mod
from . import ensemble
from .autodiff import ParamRegistry, Tensor
from .corpus import LabeledCorpus, Sentence
from .encoder import EmbeddingBank, EncoderConfig, ConfigError
from .synextract import SentenceMemories, SyntaxVocab

FUSION_KINDS = ("none", "dc", "sa")


@dataclass
class ModelConfig:
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

    def validate(self) -> None:
        self.encoder_config().validate()
        if self.fusion not in FUSION_KINDS:
            raise ConfigError(f"unknown fusion kind {self.fusion!r}")
        for c in self.syntax:
            if c not in ensemble.TYPE_ORDER:
                raise ConfigError(f"unknown syntax type {c!r}")
        if self.fusion == "none" and (self.syntax or self.gate):
            raise ConfigError("fusion=none requires no syntax types and gate off")
        if self.fusion != "none" and not self.syntax:
            raise ConfigError(f"fusion={self.fusion} needs at least one syntax type")
        if self.gate and self.fusion != "sa":
            raise ConfigError("the gate composes with syntax attention only")
        if self.word_dim < 1:
            raise ConfigError("word_dim must be >= 1")

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.encoder, self.layers, self.hidden, self.heads,
                             self.dropout)

    def output_dim(self) -> int:
        if self.fusion == "none":
            return self.hidden
        if self.fusion == "dc":
            return self.hidden * (1 + len(self.syntax))
        return 2 * self.hidden


@dataclass
class SentenceFeatures:
    sentence: Sentence
    word_ids: dict[str, np.ndarray]
    mem_key_ids: dict[str, list[np.ndarray]]
    mem_value_ids: dict[str, list[np.ndarray]]
    mem_keys: dict[str, list[list[str]]]
    gold_ids: list[int] | None
    # flattened memory views for the batched forward pass
    flat_keys: dict[str, np.ndarray] | None = None
    flat_values: dict[str, np.ndarray] | None = None
    flat_seg: dict[str, np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.sentence)

    def flatten_memories(self) -> None:
        self.flat_keys, self.flat_values, self.flat_seg = {}, {}, {}
        for c, per_token in self.mem_key_ids.items():
            sizes = [len(ids) for ids in per_token]
            self.flat_keys[c] = np.concatenate(per_token) if per_token else np.array([], dtype=np.intp)
            self.flat_values[c] = np.concatenate(self.mem_value_ids[c])
            self.flat_seg[c] = np.repeat(np.arange(len(per_token), dtype=np.intp), sizes)


class NerModel:
    """Trainable tagger; all parameters live in a single named registry."""

    def __init__(self, config: ModelConfig, word_vocab: dict[str, int],
                 syntax_vocabs: dict[str, SyntaxVocab], labels: list[str],
                 seed: int = 0,
                 static_vectors: tuple[dict[str, int], np.ndarray] | None = None):
        config.validate()
        self.config = config
        self.labels = list(labels)
        self.label_index = {lab: i for i, lab in enumerate(self.labels)}
        self.word_vocab = word_vocab
        self.syntax_vocabs = syntax_vocabs
        self.params = ParamRegistry(seed)

        self.bank = EmbeddingBank()
        self.bank.add_table("word", word_vocab, config.word_dim, self.params)
        if static_vectors is not None:
            static_vocab, matrix = static_vectors
            self.bank.add_static_table("static", static_vocab, matrix, self.params)

        self.encoder = enc_mod.make_encoder(self.params, self.bank.dim,
                                            config.encoder_config())
        d = config.hidden
        self.kvmn: dict[str, ensemble.KvmnParams] = {}
        for c in config.syntax:
            vocab = syntax_vocabs[c]
            self.kvmn[c] = ensemble.make_kvmn_params(self.params, c, vocab.n_keys,
                                                     vocab.n_values, d)
        self.sa_params = (ensemble.make_syntax_attn_params(self.params, config.syntax, d)
                          if config.fusion == "sa" else None)
        self.gate_params = ensemble.make_gate_params(self.params, d) if config.gate else None
        self.w_out = self.params.matrix("out.w", (config.output_dim(), len(self.labels)))
        self.crf = crf_mod.make_crf_params(self.params, len(self.labels))
        self.mask = crf_mod.bioes_transition_mask(self.labels) if config.crf_mask else None

    # ------------------------------------------------------------------
    def featurize(self, sentence: Sentence, memories: SentenceMemories | None,
                  gold: bool = True) -> SentenceFeatures:
        surfaces = sentence.surfaces
        word_ids = self.bank.lookup_ids(surfaces)
        mem_key_ids: dict[str, list[np.ndarray]] = {}
        mem_value_ids: dict[str, list[np.ndarray]] = {}
        mem_keys: dict[str, list[list[str]]] = {}
        for c in self.config.syntax:
            if memories is None:
                raise ValueError(f"syntax type {c!r} active but no memories given")
            vocab = self.syntax_vocabs[c]
            mem_key_ids[c] = [
                np.array([vocab.key_id(k) for k in ks], dtype=np.intp)
                for ks in memories.keys[c]
            ]
            mem_value_ids[c] = [
                np.array([vocab.value_id(v) for v in vs], dtype=np.intp)
                for vs in memories.values[c]
            ]
            mem_keys[c] = memories.keys[c]
        gold_ids = None
        if gold:
            missing = [lab for lab in sentence.labels if lab not in self.label_index]
            if missing:
                raise ValueError(f"labels outside the model label set: {sorted(set(missing))}")
            gold_ids = [self.label_index[lab] for lab in sentence.labels]
        feats = SentenceFeatures(sentence, word_ids, mem_key_ids, mem_value_ids,
                                 mem_keys, gold_ids)
        feats.flatten_memories()
        return feats

    def featurize_corpus(self, corpus: LabeledCorpus,
                         memories: list[SentenceMemories] | None,
                         gold: bool = True) -> list[SentenceFeatures]:
        mems = memories if memories is not None else [None] * len(corpus)
        if len(mems) != len(corpus):
            raise ValueError(f"{len(mems)} memory records for {len(corpus)} sentences")
        return [self.featurize(s, m, gold) for s, m in zip(corpus.sentences, mems)]

    # ------------------------------------------------------------------
    def emissions(self, feats: SentenceFeatures, train: bool = False,
                  rng: np.random.Generator | None = None,
                  collect: bool = False) -> tuple[Tensor, list[dict[str, Any]]]:
        """Per-token label scores U [n, |T|]; optionally collect the
        inspection weights (KVMN p, attention a, gate r)."""
        config = self.config
        E = self.bank.embed(feats.word_ids)
        if train and config.dropout > 0:
            E = ad.dropout(E, config.dropout, rng, train)
        H = enc_mod.encode_context(E, self.encoder, train, rng)
        if collect:
            return self._emissions_per_token(feats, H)

        if config.fusion == "none":
            O = H
        else:
            summaries: dict[str, Tensor] = {}
            for c in config.syntax:
                s_c, _ = ensemble.kvmn_forward_batch(H, feats.flat_keys[c],
                                                     feats.flat_values[c],
                                                     feats.flat_seg[c], self.kvmn[c])
                summaries[c] = s_c
            if config.fusion == "dc":
                parts = [summaries[c] for c in ensemble.active_order(summaries)]
                O = ad.concat([H] + parts, axis=1)
            else:
                S, _ = ensemble.syntax_attention_batch(H, summaries, self.sa_params)
                if config.gate:
                    O, _ = ensemble.gate_fuse_batch(H, S, self.gate_params)
                else:
                    O = ad.concat([H, S], axis=1)
        return ad.matmul(O, self.w_out), []

    def _emissions_per_token(self, feats: SentenceFeatures,
                             H: Tensor) -> tuple[Tensor, list[dict[str, Any]]]:
        """Reference token-by-token forward; also gathers inspection records."""
        config = self.config
        records: list[dict[str, Any]] = []
        out_rows = []
        for i in range(len(feats)):
            h = ad.row(H, i)
            record: dict[str, Any] = {}
            if config.fusion == "none":
                o = h
            else:
                summaries: dict[str, Tensor] = {}
                p_by_type: dict[str, np.ndarray] = {}
                for c in config.syntax:
                    s_c, p = ensemble.kvmn_forward(h, feats.mem_key_ids[c][i],
                                                   feats.mem_value_ids[c][i],
                                                   self.kvmn[c])
                    summaries[c] = s_c
                    p_by_type[c] = p.data.copy()
                if config.fusion == "dc":
                    s = ensemble.direct_concat(summaries)
                    o = ad.concat([h, s], axis=0)
                else:
                    s, a = ensemble.syntax_attention(h, summaries, self.sa_params)
                    if config.gate:
                        o, r = ensemble.gate_fuse(h, s, self.gate_params)
                    else:
                        o = ad.concat([h, s], axis=0)
                        r = None
                    record["a"] = dict(zip(ensemble.active_order(summaries),
                                           a.data.tolist()))
                    record["gate_norm"] = (float(np.linalg.norm(r.data))
                                           if r is not None else None)
                record["p"] = p_by_type
            record["token"] = feats.sentence.tokens[i].surface
            record["keys"] = {c: feats.mem_keys[c][i] for c in config.syntax}
            records.append(record)
            out_rows.append(ensemble.project(o, self.w_out))
        return ad.stack_rows(out_rows), records

    def loss(self, feats: SentenceFeatures, train: bool = True,
             rng: np.random.Generator | None = None) -> Tensor:
        if feats.gold_ids is None:
            raise ValueError("loss needs gold labels")
        U, _ = self.emissions(feats, train, rng)
        return crf_mod.nll(U, self.crf, feats.gold_ids, self.mask)

    def decode(self, feats: SentenceFeatures) -> list[int]:
        with ad.no_grad():
            U, _ = self.emissions(feats, train=False)
        path, _ = crf_mod.viterbi(U.data, self.crf, self.mask)
        return path

    def decode_labels(self, feats: SentenceFeatures) -> list[str]:
        return [self.labels[i] for i in self.decode(feats)]

    def inspect(self, feats: SentenceFeatures) -> list[dict[str, Any]]:
        """Per-token inspection records (token, keys, p, a, gate norm)."""
        with ad.no_grad():
            _, records = self.emissions(feats, train=False, collect=True)
        return records


def format_inspection(records: list[dict[str, Any]], sent_index: int = 0) -> list[str]:
    """Tab-separated dump: one line per token with per-type key weights,
    type attention and the gate norm."""
    lines = []
    for i, rec in enumerate(records):
        parts = [str(sent_index), str(i), rec["token"]]
        for c, keys in rec.get("keys", {}).items():
            weights = rec.get("p", {}).get(c)
            if weights is None:
                continue
            kv = ",".join(f"{k}={w:.4f}" for k, w in zip(keys, weights))
            parts.append(f"{c}:{kv}")
        if "a" in rec:
            parts.append("a:" + ",".join(f"{c}={w:.4f}" for c, w in rec["a"].items()))
        if rec.get("gate_norm") is not None:
            parts.append(f"rnorm:{rec['gate_norm']:.4f}")
        lines.append("\t".join(parts))
    return lines
