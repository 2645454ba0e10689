"""CoNLL-column corpora, label schemes and entity spans.

Files are UTF-8, one token per line, whitespace-separated columns, sentences
separated by blank lines. Lines starting with ``-DOCSTART-`` are skipped.
Column positions are explicit configuration because different datasets use
different layouts.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, TextIO


class CorpusFormatError(ValueError):
    """Malformed corpus input (ragged row, empty file, unknown label)."""


_BIO_RE = re.compile(r"^(O|[BI]-\S+)$")
_BIOES_RE = re.compile(r"^(O|[BIES]-\S+)$")


@dataclass(frozen=True)
class Token:
    surface: str
    pos: str
    index: int


@dataclass
class Sentence:
    tokens: list[Token]
    labels: list[str]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.labels):
            raise CorpusFormatError(
                f"{len(self.tokens)} tokens vs {len(self.labels)} labels")
        if not self.tokens:
            raise CorpusFormatError("empty sentence")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def pos_tags(self) -> list[str]:
        return [t.pos for t in self.tokens]


@dataclass
class LabeledCorpus:
    sentences: list[Sentence]
    label_set: list[str]  # first-seen order
    scheme: str  # "BIO", "BIOES" or "raw"

    def __len__(self) -> int:
        return len(self.sentences)


class EntitySpan(NamedTuple):
    start: int
    end: int  # inclusive
    etype: str


@dataclass
class ColumnMap:
    token_col: int = 0
    pos_col: int | None = 1
    label_col: int | None = 2


def _detect_scheme(labels: Iterable[str]) -> str:
    labels = list(labels)
    if all(_BIO_RE.match(l) for l in labels):
        return "BIO"
    if all(_BIOES_RE.match(l) for l in labels):
        return "BIOES"
    return "raw"


def load_conll(stream: TextIO | str, columns: ColumnMap | None = None) -> LabeledCorpus:
    """Read a blank-line-separated CoNLL file into a corpus.

    ``stream`` may be an open text file or a path. Raises
    :class:`CorpusFormatError` with the offending line number for ragged rows
    and for files containing no sentences.
    """
    if isinstance(stream, str):
        with io.open(stream, "r", encoding="utf-8") as fh:
            return load_conll(fh, columns)
    cols = columns or ColumnMap()
    needed = max(c for c in (cols.token_col, cols.pos_col, cols.label_col) if c is not None)

    sentences: list[Sentence] = []
    label_set: list[str] = []
    seen_labels: set[str] = set()
    surfaces: list[str] = []
    poses: list[str] = []
    labels: list[str] = []

    def flush() -> None:
        if not surfaces:
            return
        tokens = [Token(s, p, i) for i, (s, p) in enumerate(zip(surfaces, poses))]
        sentences.append(Sentence(tokens, list(labels)))
        surfaces.clear()
        poses.clear()
        labels.clear()

    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            flush()
            continue
        if line.startswith("-DOCSTART-"):
            continue
        fields = line.split()
        if len(fields) <= needed:
            raise CorpusFormatError(
                f"line {lineno}: expected at least {needed + 1} columns, got {len(fields)}")
        surfaces.append(fields[cols.token_col])
        poses.append(fields[cols.pos_col] if cols.pos_col is not None else "")
        lab = fields[cols.label_col] if cols.label_col is not None else "O"
        labels.append(lab)
        if lab not in seen_labels:
            seen_labels.add(lab)
            label_set.append(lab)
    flush()

    if not sentences:
        raise CorpusFormatError("no sentences found")
    scheme = _detect_scheme(label_set)
    return LabeledCorpus(sentences, label_set, scheme)


def _split_label(label: str) -> tuple[str, str | None]:
    if label == "O":
        return "O", None
    prefix, _, etype = label.partition("-")
    if not etype:
        raise CorpusFormatError(f"unknown label {label!r}")
    return prefix, etype


def repair_bio(labels: list[str]) -> tuple[list[str], int]:
    """Promote orphan I-X to B-X (conlleval convention); count the repairs."""
    out: list[str] = []
    repairs = 0
    prev_type: str | None = None
    for lab in labels:
        prefix, etype = _split_label(lab)
        if prefix == "I" and etype != prev_type:
            out.append(f"B-{etype}")
            repairs += 1
        else:
            out.append(lab)
        prev_type = etype if prefix in ("B", "I") else None
    return out, repairs


def to_bioes(labels: list[str]) -> tuple[list[str], int]:
    """Convert a BIO sequence to BIOES; returns (converted, repair count).

    Single-token entities become S-X, longer entities B-X, I-X*, E-X.
    Orphan I-X inputs are repaired to B-X first.
    """
    fixed, repairs = repair_bio(labels)
    n = len(fixed)
    out: list[str] = []
    for i, lab in enumerate(fixed):
        prefix, etype = _split_label(lab)
        if prefix == "O":
            out.append("O")
            continue
        nxt = _split_label(fixed[i + 1])[0:2] if i + 1 < n else ("O", None)
        continues = nxt[0] == "I" and nxt[1] == etype
        if prefix == "B":
            out.append(f"B-{etype}" if continues else f"S-{etype}")
        else:  # I
            out.append(f"I-{etype}" if continues else f"E-{etype}")
    return out, repairs


def bioes_label_set(bio_labels: Iterable[str]) -> list[str]:
    """BIOES alphabet closure over the entity types of a BIO label set."""
    out = ["O"]
    seen = {"O"}
    for lab in bio_labels:
        prefix, etype = _split_label(lab)
        if prefix == "O":
            continue
        for p in ("B", "I", "E", "S"):
            full = f"{p}-{etype}"
            if full not in seen:
                seen.add(full)
                out.append(full)
    return out


def decode_spans(labels: list[str]) -> list[EntitySpan]:
    """Decode a BIOES sequence into non-overlapping spans sorted by start.

    Well-formed B..E runs and S singletons become spans; dangling fragments
    (a B or I not closed by an E of the same type) are dropped.
    """
    spans: list[EntitySpan] = []
    n = len(labels)
    start: int | None = None
    cur_type: str | None = None
    for i, lab in enumerate(labels):
        prefix, etype = _split_label(lab)
        if prefix not in ("O", "B", "I", "E", "S"):
            raise CorpusFormatError(f"unknown label {lab!r}")
        if prefix == "S":
            spans.append(EntitySpan(i, i, etype))
            start, cur_type = None, None
        elif prefix == "B":
            start, cur_type = i, etype
        elif prefix == "I":
            if cur_type != etype:
                start, cur_type = None, None  # broken run: drop
        elif prefix == "E":
            if cur_type == etype and start is not None:
                spans.append(EntitySpan(start, i, etype))
            start, cur_type = None, None
        else:  # O
            start, cur_type = None, None
    spans.sort(key=lambda s: s.start)
    for sp in spans:
        if sp.start > sp.end or sp.end >= n:
            raise CorpusFormatError(f"span {sp} exceeds sentence bounds")
    return spans


def convert_corpus_to_bioes(corpus: LabeledCorpus) -> tuple[LabeledCorpus, int]:
    """Corpus-wide BIO -> BIOES conversion; returns (new corpus, total repairs)."""
    if corpus.scheme == "BIOES":
        return corpus, 0
    if corpus.scheme != "BIO":
        raise CorpusFormatError(f"cannot convert scheme {corpus.scheme!r} to BIOES")
    total = 0
    new_sentences = []
    for sent in corpus.sentences:
        conv, repairs = to_bioes(sent.labels)
        total += repairs
        new_sentences.append(Sentence(sent.tokens, conv))
    labels = bioes_label_set(corpus.label_set)
    return LabeledCorpus(new_sentences, labels, "BIOES"), total
