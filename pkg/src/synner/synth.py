"""Synthetic corpus generator with planted syntactic cues.

Sentences mix filler words with 1-2 entity phrases of 1-3 name tokens. Name
surfaces are shared across entity types, so the type is NOT recoverable from
the words alone; it is planted redundantly in all three annotation channels:

* POS: entity tokens get a type-coded tag (NNPA, NNPB, ...).
* Constituents: each entity phrase sits under a type-coded accepted node
  (NP, PP, ADJP, ...).
* Dependencies: entity tokens carry a type-coded in-bound relation
  (nmoda, nmodb, ...) pointing at the sentence root.

A noise rate corrupts that fraction of annotations (independently per channel
and per annotation) by resampling them uniformly from the channel's alphabet:
at rate 0 every entity is recoverable from any single channel, at rate 1 the
syntax is uninformative. Generation is a pure function of the seed, so a
fixed seed reproduces byte-identical files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

ENTITY_TYPES = ("PER", "LOC", "ORG", "MISC", "GPE", "EVT")

POS_BY_TYPE = ("NNPA", "NNPB", "NNPC", "NNPD", "NNPE", "NNPF")
CON_BY_TYPE = ("NP", "PP", "ADJP", "ADVP", "SBAR", "PRT")
REL_BY_TYPE = ("nmoda", "nmodb", "nmodc", "nmodd", "nmode", "nmodf")

CON_ALPHABET = ("NP", "VP", "PP", "ADVP", "SBAR", "ADJP", "PRT", "INTJ", "CONJP", "LST")

NAME_POOL = (
    "Aldor", "Bremin", "Corvel", "Dastin", "Elvara", "Fenrik", "Galdor", "Harnel",
    "Ilvan", "Jorath", "Kelvin", "Lumara", "Mirell", "Norvan", "Ostrel", "Pervin",
    "Quorin", "Rastel", "Silvan", "Tormel", "Ulvera", "Vandor", "Welkin", "Yrsa",
)

FILLERS = (
    ("the", "DT"), ("a", "DT"), ("old", "JJ"), ("red", "JJ"), ("quiet", "JJ"),
    ("near", "IN"), ("from", "IN"), ("with", "IN"), ("town", "NN"), ("river", "NN"),
    ("market", "NN"), ("road", "NN"), ("visited", "VBD"), ("founded", "VBD"),
    ("joined", "VBD"), ("praised", "VBD"),
)

FILLER_REL = "fdep"
ROOT_REL = "root"


@dataclass
class SynthSpec:
    n_train: int = 500
    n_dev: int = 100
    n_test: int = 100
    n_types: int = 4
    noise: float = 0.1
    seed: int = 7

    def __post_init__(self) -> None:
        if not 1 <= self.n_types <= len(ENTITY_TYPES):
            raise ValueError(f"n_types must be in 1..{len(ENTITY_TYPES)}")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must be in [0, 1]")


@dataclass
class SynthSentence:
    surfaces: list[str]
    pos: list[str]
    labels: list[str]  # BIO
    tree: str
    dep_rows: list[tuple[int, str, int, str]]


def _pos_alphabet(n_types: int) -> list[str]:
    return sorted({t for _, t in FILLERS}) + list(POS_BY_TYPE[:n_types])


def _rel_alphabet(n_types: int) -> list[str]:
    return [ROOT_REL, FILLER_REL] + list(REL_BY_TYPE[:n_types])


def _make_sentence(rng: np.random.Generator, spec: SynthSpec) -> SynthSentence:
    n_entities = int(rng.integers(1, 3))
    chunks: list[tuple[str, int | None]] = []  # ("filler", None) or ("entity", type idx)

    def fillers(lo: int, hi: int) -> None:
        for _ in range(int(rng.integers(lo, hi + 1))):
            chunks.append(("filler", None))

    fillers(2, 4)
    for k in range(n_entities):
        chunks.append(("entity", int(rng.integers(0, spec.n_types))))
        if k + 1 < n_entities:
            fillers(1, 3)
    fillers(0, 2)

    surfaces: list[str] = []
    pos: list[str] = []
    labels: list[str] = []
    tree_parts: list[str] = []
    # (start index, length, type idx) per entity phrase for deps/labels
    phrases: list[tuple[int, int, int]] = []

    for kind, t in chunks:
        if kind == "filler":
            word, tag = FILLERS[int(rng.integers(0, len(FILLERS)))]
            surfaces.append(word)
            pos.append(tag)
            labels.append("O")
        else:
            length = int(rng.integers(1, 4))
            start = len(surfaces)
            for j in range(length):
                surfaces.append(NAME_POOL[int(rng.integers(0, len(NAME_POOL)))])
                pos.append(POS_BY_TYPE[t])
                labels.append(("B-" if j == 0 else "I-") + ENTITY_TYPES[t])
            phrases.append((start, length, t))

    # Noise on POS (per token).
    pos_alpha = _pos_alphabet(spec.n_types)
    noisy_pos = list(pos)
    for i in range(len(noisy_pos)):
        if rng.random() < spec.noise:
            noisy_pos[i] = pos_alpha[int(rng.integers(0, len(pos_alpha)))]

    # Constituency tree; each entity phrase is one type-coded node, with
    # per-phrase label noise.
    phrase_at = {start: (length, t) for start, length, t in phrases}
    i = 0
    while i < len(surfaces):
        if i in phrase_at:
            length, t = phrase_at[i]
            label = CON_BY_TYPE[t]
            if rng.random() < spec.noise:
                label = CON_ALPHABET[int(rng.integers(0, len(CON_ALPHABET)))]
            leaves = " ".join(f"({noisy_pos[j]} {surfaces[j]})"
                              for j in range(i, i + length))
            tree_parts.append(f"({label} {leaves})")
            i += length
        else:
            tree_parts.append(f"({noisy_pos[i]} {surfaces[i]})")
            i += 1
    tree = "(S " + " ".join(tree_parts) + ")"

    # Dependencies: first token is a filler (guaranteed by construction) and
    # becomes the root; entity tokens hang off their phrase head.
    root = 0
    head = [0] * len(surfaces)
    rel = [FILLER_REL] * len(surfaces)
    rel[root] = ROOT_REL
    for i in range(len(surfaces)):
        if i != root:
            head[i] = root + 1
    for start, length, t in phrases:
        phead = start + length - 1
        head[phead] = root + 1
        rel[phead] = REL_BY_TYPE[t]
        for j in range(start, phead):
            head[j] = phead + 1
            rel[j] = REL_BY_TYPE[t]
    rel_alpha = _rel_alphabet(spec.n_types)
    for i in range(len(rel)):
        if i != root and rng.random() < spec.noise:
            rel[i] = rel_alpha[int(rng.integers(0, len(rel_alpha)))]
    dep_rows = [(i + 1, surfaces[i], head[i], rel[i]) for i in range(len(surfaces))]

    return SynthSentence(surfaces, noisy_pos, labels, tree, dep_rows)


def generate_split(rng: np.random.Generator, spec: SynthSpec,
                   n_sentences: int) -> list[SynthSentence]:
    return [_make_sentence(rng, spec) for _ in range(n_sentences)]


def write_split(sentences: list[SynthSentence], out_dir: str, name: str) -> dict[str, str]:
    paths = {
        "conll": os.path.join(out_dir, f"{name}.conll"),
        "trees": os.path.join(out_dir, f"{name}.trees"),
        "deps": os.path.join(out_dir, f"{name}.deps"),
    }
    with open(paths["conll"], "w", encoding="utf-8") as fh:
        for s in sentences:
            for w, p, lab in zip(s.surfaces, s.pos, s.labels):
                fh.write(f"{w} {p} {lab}\n")
            fh.write("\n")
    with open(paths["trees"], "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(s.tree + "\n")
    with open(paths["deps"], "w", encoding="utf-8") as fh:
        for s in sentences:
            for idx, w, h, r in s.dep_rows:
                fh.write(f"{idx}\t{w}\t{h}\t{r}\n")
            fh.write("\n")
    return paths


def gen_synth(out_dir: str, spec: SynthSpec | None = None) -> dict[str, dict[str, str]]:
    """Generate train/dev/test splits plus parse files under ``out_dir``."""
    spec = spec or SynthSpec()
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    out = {}
    for name, count in (("train", spec.n_train), ("dev", spec.n_dev),
                        ("test", spec.n_test)):
        out[name] = write_split(generate_split(rng, spec, count), out_dir, name)
    return out
