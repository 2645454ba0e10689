"""Per-token context-feature / syntactic-information extraction.

For every token the three procedures produce parallel key and value string
lists. Keys are context-word surfaces; values pair each surface with a piece
of syntactic information:

* POS: tokens in a +-window around the center (center included), each valued
  as ``surface_POSTAG`` with the token's own tag.
* Constituents: walk up from the token's leaf to the first ancestor whose
  function-stripped label is in the accepted-node whitelist; keys are all
  leaves under it, valued ``surface_LABEL``. With no accepted ancestor the
  root node is used so the memory is never empty.
* Dependencies: the token itself, its dependents and its governor (when not
  the artificial root), in sentence order, each valued ``surface_REL`` with
  that token's own in-bound relation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import LabeledCorpus, Sentence
from .synparse import DependencyGraph, TreeNode, _iter_leaves, strip_function_tags

SYNTAX_TYPES = ("pos", "con", "dep")

CONSTITUENT_WHITELIST = frozenset(
    {"NP", "VP", "PP", "ADVP", "SBAR", "ADJP", "PRT", "INTJ", "CONJP", "LST"})


def extract_pos(surfaces: list[str], pos_tags: list[str], i: int,
                window: int = 1) -> tuple[list[str], list[str]]:
    """Window of +-``window`` tokens around ``i``, clipped to the sentence."""
    if not 0 <= i < len(surfaces):
        raise IndexError(f"token index {i} out of range")
    if window < 1:
        raise ValueError("window must be >= 1")
    lo = max(0, i - window)
    hi = min(len(surfaces), i + window + 1)
    keys = list(surfaces[lo:hi])
    values = [f"{surfaces[j]}_{pos_tags[j]}" for j in range(lo, hi)]
    return keys, values


def extract_constituent(tree: TreeNode, i: int) -> tuple[list[str], list[str]]:
    """All leaves under the first accepted ancestor of leaf ``i``."""
    leaf = None
    for lf in _iter_leaves(tree):
        if lf.index == i:
            leaf = lf
            break
    if leaf is None:
        raise IndexError(f"no leaf with index {i}")
    node = leaf.parent
    chosen = None
    while node is not None:
        if strip_function_tags(node.label) in CONSTITUENT_WHITELIST:
            chosen = node
            break
        node = node.parent
    if chosen is None:
        chosen = _root_of(leaf)
    label = strip_function_tags(chosen.label)
    keys = [lf.surface for lf in _iter_leaves(chosen)]
    values = [f"{k}_{label}" for k in keys]
    return keys, values


def _root_of(node: TreeNode) -> TreeNode:
    while node.parent is not None:
        node = node.parent
    return node


def extract_dependency(graph: DependencyGraph, surfaces: list[str],
                       i: int) -> tuple[list[str], list[str]]:
    """Token ``i`` with its dependents and governor, in sentence order."""
    context = set(graph.dependents(i))
    context.add(i)
    gov = graph.governor(i)
    if gov is not None:
        context.add(gov)
    ordered = sorted(context)
    keys = [surfaces[j] for j in ordered]
    values = [f"{surfaces[j]}_{graph.rel[j]}" for j in ordered]
    return keys, values


@dataclass
class SentenceMemories:
    """keys[c][i] / values[c][i]: parallel string lists for token i, type c."""

    keys: dict[str, list[list[str]]]
    values: dict[str, list[list[str]]]

    def size(self, c: str, i: int) -> int:
        return len(self.keys[c][i])


def extract_sentence(sentence: Sentence, tree: TreeNode | None,
                     graph: DependencyGraph | None,
                     types: tuple[str, ...] = SYNTAX_TYPES,
                     window: int = 1) -> SentenceMemories:
    surfaces = sentence.surfaces
    keys: dict[str, list[list[str]]] = {}
    values: dict[str, list[list[str]]] = {}
    for c in types:
        keys[c] = []
        values[c] = []
    for i in range(len(surfaces)):
        if "pos" in types:
            k, v = extract_pos(surfaces, sentence.pos_tags, i, window)
            keys["pos"].append(k)
            values["pos"].append(v)
        if "con" in types:
            if tree is None:
                raise ValueError("constituent extraction needs a tree")
            k, v = extract_constituent(tree, i)
            keys["con"].append(k)
            values["con"].append(v)
        if "dep" in types:
            if graph is None:
                raise ValueError("dependency extraction needs a parse")
            k, v = extract_dependency(graph, surfaces, i)
            keys["dep"].append(k)
            values["dep"].append(v)
    return SentenceMemories(keys, values)


def extract_corpus(corpus: LabeledCorpus, trees: list[TreeNode] | None,
                   graphs: list[DependencyGraph] | None,
                   types: tuple[str, ...] = SYNTAX_TYPES,
                   window: int = 1) -> list[SentenceMemories]:
    need_trees = "con" in types
    need_deps = "dep" in types
    if need_trees and (trees is None or len(trees) != len(corpus)):
        got = 0 if trees is None else len(trees)
        raise ValueError(f"need {len(corpus)} trees, got {got}")
    if need_deps and (graphs is None or len(graphs) != len(corpus)):
        got = 0 if graphs is None else len(graphs)
        raise ValueError(f"need {len(corpus)} dependency blocks, got {got}")
    out = []
    for k, sent in enumerate(corpus.sentences):
        tree = trees[k] if need_trees else None
        graph = graphs[k] if need_deps else None
        out.append(extract_sentence(sent, tree, graph, types, window))
    return out


UNK_ID = 0


@dataclass
class SyntaxVocab:
    """String -> id maps for one syntax type; id 0 is the unknown entry."""

    type_tag: str
    key_vocab: dict[str, int] = field(default_factory=dict)
    value_vocab: dict[str, int] = field(default_factory=dict)

    def key_id(self, key: str) -> int:
        return self.key_vocab.get(key, UNK_ID)

    def value_id(self, value: str) -> int:
        return self.value_vocab.get(value, UNK_ID)

    @property
    def n_keys(self) -> int:
        return len(self.key_vocab) + 1

    @property
    def n_values(self) -> int:
        return len(self.value_vocab) + 1


def build_syntax_vocab(memories: list[SentenceMemories], c: str,
                       min_count: int = 1) -> SyntaxVocab:
    """Ids in first-seen order for entries with frequency >= min_count.

    Build from the training split only; anything else maps to UNK at lookup.
    """
    if not memories:
        raise ValueError("empty training split")
    key_counts: dict[str, int] = {}
    value_counts: dict[str, int] = {}
    key_order: list[str] = []
    value_order: list[str] = []
    for mem in memories:
        for token_keys in mem.keys[c]:
            for k in token_keys:
                if k not in key_counts:
                    key_order.append(k)
                key_counts[k] = key_counts.get(k, 0) + 1
        for token_values in mem.values[c]:
            for v in token_values:
                if v not in value_counts:
                    value_order.append(v)
                value_counts[v] = value_counts.get(v, 0) + 1
    vocab = SyntaxVocab(c)
    nid = 1
    for k in key_order:
        if key_counts[k] >= min_count:
            vocab.key_vocab[k] = nid
            nid += 1
    nid = 1
    for v in value_order:
        if value_counts[v] >= min_count:
            vocab.value_vocab[v] = nid
            nid += 1
    return vocab


def resolve_pos(sentence: Sentence, tree: TreeNode | None) -> tuple[list[str], int]:
    """POS tags for extraction: the explicit column wins; constituency
    preterminals fill in when the column is empty. Returns (tags, conflicts)
    where conflicts counts column/preterminal disagreements."""
    column = sentence.pos_tags
    if tree is None:
        return list(column), 0
    pre = [p for _, _, p in ((lf.index, lf.surface, lf.label) for lf in _iter_leaves(tree))]
    conflicts = 0
    tags = []
    for col, pt in zip(column, pre):
        if col:
            if pt and col != pt:
                conflicts += 1
            tags.append(col)
        else:
            tags.append(pt)
    return tags, conflicts


def dump_memories(memories: list[SentenceMemories]) -> list[str]:
    """Debug/golden dump: one line per (sentence, token, type)."""
    lines = []
    for s, mem in enumerate(memories):
        for c in mem.keys:
            for i, (ks, vs) in enumerate(zip(mem.keys[c], mem.values[c])):
                lines.append(f"{s}\t{i}\t{c}\t{','.join(ks)}\t{','.join(vs)}")
    return lines
