"""Embedding layer and context encoders.

The embedding layer concatenates one row per named table (multiple embedding
types side by side). Three interchangeable encoders map the embedded matrix
E [n, D] to hidden states H [n, d]:

* ``bilstm``: stacked bidirectional LSTM, directions concatenated then
  projected to d.
* ``transformer``: multi-head scaled dot-product self-attention with
  sinusoidal absolute positions, residual + layer norm + feed-forward.
* ``adapted``: like ``transformer`` but attention logits are un-scaled and
  carry relative-position terms over the signed distance i-j (content-content,
  content-position, and learned per-head bias terms), so direction and
  distance are representable. No absolute positions are added.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import ParamRegistry, Tensor

ENCODER_KINDS = ("bilstm", "transformer", "adapted")


class ConfigError(ValueError):
    """Invalid encoder configuration."""


@dataclass
class EncoderConfig:
    kind: str = "adapted"
    layers: int = 2
    hidden: int = 128
    heads: int = 8
    dropout: float = 0.2

    def validate(self) -> None:
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}")
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        if self.hidden < 1:
            raise ConfigError("hidden size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.kind in ("transformer", "adapted") and self.hidden % self.heads != 0:
            raise ConfigError(
                f"hidden size must divide evenly into heads: {self.hidden} with "
                f"{self.heads} heads leaves a remainder (the reported best setting, "
                f"128 units with 12 heads, has this defect; use 8 heads instead)")


UNK_ID = 0


def build_vocab(surfaces: Iterable[str], min_count: int = 1) -> dict[str, int]:
    """First-seen-order vocabulary; id 0 is reserved for unknowns."""
    counts: dict[str, int] = {}
    order: list[str] = []
    for s in surfaces:
        if s not in counts:
            order.append(s)
        counts[s] = counts.get(s, 0) + 1
    vocab: dict[str, int] = {}
    nid = 1
    for s in order:
        if counts[s] >= min_count:
            vocab[s] = nid
            nid += 1
    return vocab


def load_word_vectors(stream) -> tuple[dict[str, int], np.ndarray]:
    """word2vec-text style file: ``surface v1 v2 ... vd`` per line.

    The dimension is inferred from the first line; row 0 of the returned
    matrix is an all-zero unknown row.
    """
    if isinstance(stream, str):
        with open(stream, "r", encoding="utf-8") as fh:
            return load_word_vectors(fh)
    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    dim = None
    for lineno, line in enumerate(stream, start=1):
        fields = line.split()
        if not fields:
            continue
        if dim is None:
            dim = len(fields) - 1
            if dim < 1:
                raise ValueError(f"line {lineno}: no vector components")
        if len(fields) - 1 != dim:
            raise ValueError(f"line {lineno}: expected {dim} components, got {len(fields) - 1}")
        if fields[0] in vocab:
            continue
        vocab[fields[0]] = len(rows) + 1
        rows.append(np.array([float(x) for x in fields[1:]]))
    if not rows:
        raise ValueError("empty vector file")
    matrix = np.vstack([np.zeros(dim)] + rows)
    return vocab, matrix


@dataclass
class EmbTable:
    name: str
    vocab: dict[str, int]
    tensor: Tensor
    trainable: bool

    @property
    def dim(self) -> int:
        return self.tensor.shape[1]

    def ids(self, surfaces: list[str]) -> np.ndarray:
        return np.array([self.vocab.get(s, UNK_ID) for s in surfaces], dtype=np.intp)


class EmbeddingBank:
    """Ordered set of named embedding tables; lookups concatenate per token."""

    def __init__(self) -> None:
        self.tables: list[EmbTable] = []

    def add_table(self, name: str, vocab: dict[str, int], dim: int,
                  registry: ParamRegistry) -> EmbTable:
        tensor = registry.table(f"emb.{name}", (len(vocab) + 1, dim))
        table = EmbTable(name, vocab, tensor, trainable=True)
        self.tables.append(table)
        return table

    def add_static_table(self, name: str, vocab: dict[str, int],
                         matrix: np.ndarray, registry: ParamRegistry) -> EmbTable:
        """Pre-trained vectors stay fixed during training."""
        tensor = registry.add(f"emb.{name}", Tensor(matrix, requires_grad=False))
        table = EmbTable(name, vocab, tensor, trainable=False)
        self.tables.append(table)
        return table

    @property
    def dim(self) -> int:
        return sum(t.dim for t in self.tables)

    def lookup_ids(self, surfaces: list[str]) -> dict[str, np.ndarray]:
        return {t.name: t.ids(surfaces) for t in self.tables}

    def embed(self, ids_by_table: dict[str, np.ndarray]) -> Tensor:
        if not self.tables:
            raise ConfigError("embedding bank has no tables")
        parts = [ad.gather_rows(t.tensor, ids_by_table[t.name]) for t in self.tables]
        return ad.concat(parts, axis=1)


def _sinusoid(values: np.ndarray, d: int) -> np.ndarray:
    out = np.zeros((len(values), d))
    for k in range(0, d, 2):
        w = 1.0 / (10000.0 ** (k / d))
        out[:, k] = np.sin(values * w)
        if k + 1 < d:
            out[:, k + 1] = np.cos(values * w)
    return out


@functools.lru_cache(maxsize=256)
def sinusoid_positions(n: int, d: int) -> np.ndarray:
    """Absolute sinusoidal position table [n, d]."""
    return _sinusoid(np.arange(n, dtype=np.float64), d)


@functools.lru_cache(maxsize=256)
def sinusoid_relative(n: int, d: int) -> np.ndarray:
    """Signed-distance table [2n-1, d]; row t+n-1 encodes distance t.

    sin components flip sign with the distance, so direction is recoverable.
    """
    return _sinusoid(np.arange(-(n - 1), n, dtype=np.float64), d)


@functools.lru_cache(maxsize=256)
def _distance_index(n: int) -> np.ndarray:
    """idx[i, j] = (i - j) + n - 1, the row of the signed distance in the
    relative table."""
    return np.arange(n)[:, None] - np.arange(n)[None, :] + (n - 1)


class _LstmDirection:
    def __init__(self, registry: ParamRegistry, prefix: str, in_dim: int, d: int):
        self.d = d
        self.wx = registry.matrix(f"{prefix}.wx", (in_dim, 4 * d))
        self.wh = registry.matrix(f"{prefix}.wh", (d, 4 * d))
        self.b = registry.bias(f"{prefix}.b", (4 * d,))

    def run(self, rows: list[Tensor]) -> list[Tensor]:
        d = self.d
        h = Tensor(np.zeros(d))
        c = Tensor(np.zeros(d))
        out = []
        for x in rows:
            z = ad.add(ad.add(ad.matmul(x, self.wx), ad.matmul(h, self.wh)), self.b)
            i = ad.sigmoid(ad.narrow(z, 0, d))
            f = ad.sigmoid(ad.narrow(z, d, d))
            g = ad.tanh(ad.narrow(z, 2 * d, d))
            o = ad.sigmoid(ad.narrow(z, 3 * d, d))
            c = ad.add(ad.mul(f, c), ad.mul(i, g))
            h = ad.mul(o, ad.tanh(c))
            out.append(h)
        return out


class BiLstmEncoder:
    def __init__(self, registry: ParamRegistry, in_dim: int, config: EncoderConfig,
                 prefix: str = "enc"):
        config.validate()
        self.config = config
        d = config.hidden
        self.layers = []
        dim = in_dim
        for l in range(config.layers):
            fwd = _LstmDirection(registry, f"{prefix}.l{l}.fwd", dim, d)
            bwd = _LstmDirection(registry, f"{prefix}.l{l}.bwd", dim, d)
            self.layers.append((fwd, bwd))
            dim = 2 * d
        self.wproj = registry.matrix(f"{prefix}.wproj", (2 * d, d))
        self.bproj = registry.bias(f"{prefix}.bproj", (d,))

    def direction_outputs(self, E: Tensor, layer: int = 0) -> tuple[Tensor, Tensor]:
        """Stacked per-direction states of one layer (testing hook)."""
        rows = [ad.row(E, t) for t in range(E.shape[0])]
        fwd, bwd = self.layers[layer]
        f_states = fwd.run(rows)
        b_states = bwd.run(rows[::-1])[::-1]
        return ad.stack_rows(f_states), ad.stack_rows(b_states)

    def __call__(self, E: Tensor, train: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        config = self.config
        X = E
        for l, (fwd, bwd) in enumerate(self.layers):
            rows = [ad.row(X, t) for t in range(X.shape[0])]
            f_states = fwd.run(rows)
            b_states = bwd.run(rows[::-1])[::-1]
            X = ad.concat([ad.stack_rows(f_states), ad.stack_rows(b_states)], axis=1)
            if train and config.dropout > 0:
                X = ad.dropout(X, config.dropout, rng, train)
        return ad.add(ad.matmul(X, self.wproj), self.bproj)


class _AttentionLayer:
    def __init__(self, registry: ParamRegistry, prefix: str, d: int, heads: int,
                 relative: bool):
        self.d = d
        self.heads = heads
        self.dh = d // heads
        self.use_relative = relative
        self.scale_logits = not relative  # the relative variant is un-scaled
        self.head_params = []
        for h in range(heads):
            wq = registry.matrix(f"{prefix}.h{h}.wq", (d, self.dh))
            wk = registry.matrix(f"{prefix}.h{h}.wk", (d, self.dh))
            wv = registry.matrix(f"{prefix}.h{h}.wv", (d, self.dh))
            if relative:
                u = registry.matrix(f"{prefix}.h{h}.u", (self.dh,))
                v = registry.matrix(f"{prefix}.h{h}.v", (self.dh,))
            else:
                u = v = None
            self.head_params.append((wq, wk, wv, u, v))
        self.wo = registry.matrix(f"{prefix}.wo", (d, d))
        self.bo = registry.bias(f"{prefix}.bo", (d,))
        self.ln1_g = registry.ones(f"{prefix}.ln1.g", (d,))
        self.ln1_b = registry.bias(f"{prefix}.ln1.b", (d,))
        self.ln2_g = registry.ones(f"{prefix}.ln2.g", (d,))
        self.ln2_b = registry.bias(f"{prefix}.ln2.b", (d,))
        self.w1 = registry.matrix(f"{prefix}.ff.w1", (d, 2 * d))
        self.b1 = registry.bias(f"{prefix}.ff.b1", (2 * d,))
        self.w2 = registry.matrix(f"{prefix}.ff.w2", (2 * d, d))
        self.b2 = registry.bias(f"{prefix}.ff.b2", (d,))

    def attention_logits(self, X: Tensor, head: int) -> Tensor:
        """Logits for one head (exposed for the directionality tests)."""
        n = X.shape[0]
        wq, wk, wv, u, v = self.head_params[head]
        Q = ad.matmul(X, wq)
        K = ad.matmul(X, wk)
        logits = ad.matmul(Q, ad.transpose(K))
        if self.use_relative:
            rel = Tensor(sinusoid_relative(n, self.dh))
            idx = _distance_index(n)
            qr = ad.gather_axis1(ad.matmul(Q, ad.transpose(rel)), idx)
            ku = ad.reshape(ad.matmul(K, u), (1, n))
            rv = ad.reshape(ad.gather_rows(ad.reshape(ad.matmul(rel, v), (2 * n - 1, 1)),
                                           idx.ravel()), (n, n))
            logits = ad.add(ad.add(logits, qr), ad.add(ku, rv))
        if self.scale_logits:
            logits = ad.scale(logits, 1.0 / np.sqrt(self.dh))
        return logits

    def __call__(self, X: Tensor, dropout: float, train: bool,
                 rng: np.random.Generator | None) -> Tensor:
        outs = []
        for h in range(self.heads):
            _, _, wv, _, _ = self.head_params[h]
            A = ad.softmax(self.attention_logits(X, h), axis=-1)
            outs.append(ad.matmul(A, ad.matmul(X, wv)))
        O = ad.add(ad.matmul(ad.concat(outs, axis=1), self.wo), self.bo)
        if train and dropout > 0:
            O = ad.dropout(O, dropout, rng, train)
        X = ad.layer_norm(ad.add(X, O), self.ln1_g, self.ln1_b)
        F = ad.add(ad.matmul(ad.relu(ad.add(ad.matmul(X, self.w1), self.b1)), self.w2),
                   self.b2)
        if train and dropout > 0:
            F = ad.dropout(F, dropout, rng, train)
        return ad.layer_norm(ad.add(X, F), self.ln2_g, self.ln2_b)


class SelfAttentionEncoder:
    def __init__(self, registry: ParamRegistry, in_dim: int, config: EncoderConfig,
                 prefix: str = "enc"):
        config.validate()
        self.config = config
        relative = config.kind == "adapted"
        self.use_abs_pos = config.kind == "transformer"
        self.win = registry.matrix(f"{prefix}.win", (in_dim, config.hidden))
        self.bin = registry.bias(f"{prefix}.bin", (config.hidden,))
        self.layers = [
            _AttentionLayer(registry, f"{prefix}.l{l}", config.hidden, config.heads,
                            relative)
            for l in range(config.layers)
        ]

    def __call__(self, E: Tensor, train: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        X = ad.add(ad.matmul(E, self.win), self.bin)
        if self.use_abs_pos:
            X = ad.add(X, Tensor(sinusoid_positions(X.shape[0], self.config.hidden)))
        for layer in self.layers:
            X = layer(X, self.config.dropout, train, rng)
        return X


def make_encoder(registry: ParamRegistry, in_dim: int, config: EncoderConfig,
                 prefix: str = "enc"):
    config.validate()
    if config.kind == "bilstm":
        return BiLstmEncoder(registry, in_dim, config, prefix)
    return SelfAttentionEncoder(registry, in_dim, config, prefix)


def encode_context(E: Tensor, encoder, train: bool = False,
                   rng: np.random.Generator | None = None) -> Tensor:
    """Run an encoder and verify the hidden-state contract."""
    H = encoder(E, train, rng)
    if H.shape[0] != E.shape[0]:
        raise ConfigError(f"encoder returned {H.shape[0]} rows for {E.shape[0]} tokens")
    if not H.is_finite():
        raise FloatingPointError("non-finite hidden states")
    return H
