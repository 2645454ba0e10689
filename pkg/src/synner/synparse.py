"""Readers for per-sentence syntactic annotation files.

Two formats: ``.trees`` holds one Penn-style bracketed constituency parse per
line; ``.deps`` holds CoNLL-like blocks of ``index surface head rel`` rows
(1-based indices, head 0 for the root), blank-line separated. Both are
line-aligned with the corpus: sentence k pairs with tree/block k, and any
mismatch is a hard error rather than a silent skip.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, TextIO


class ParseError(ValueError):
    """Malformed or misaligned syntactic annotation."""


@dataclass
class TreeNode:
    """Constituency tree node. Leaves are the preterminals: ``label`` is the
    POS tag and ``surface``/``index`` are set; internal nodes carry a
    constituent label and children."""

    label: str
    children: list["TreeNode"] = field(default_factory=list)
    surface: str | None = None
    index: int | None = None
    parent: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.surface is not None


def strip_function_tags(label: str) -> str:
    """NP-SBJ -> NP, S=2 -> S. Labels that would strip to nothing (-LRB-)
    are returned unchanged."""
    for sep in ("-", "="):
        cut = label.find(sep)
        if cut > 0:
            return label[:cut]
    return label


def parse_bracketed(line: str) -> TreeNode:
    """Parse one balanced-parenthesis tree; errors carry the char offset."""
    tokens: list[tuple[str, int]] = []
    i, n = 0, len(line)
    while i < n:
        ch = line[i]
        if ch in "()":
            tokens.append((ch, i))
            i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < n and not line[j].isspace() and line[j] not in "()":
                j += 1
            tokens.append((line[i:j], i))
            i = j
    if not tokens:
        raise ParseError("empty tree line")

    pos = 0

    def parse_node() -> TreeNode:
        nonlocal pos
        tok, off = tokens[pos]
        if tok != "(":
            raise ParseError(f"expected '(' at char {off}")
        pos += 1
        if pos >= len(tokens):
            raise ParseError(f"unbalanced parentheses at char {off}")
        label, _ = tokens[pos]
        if label in "()":
            raise ParseError(f"missing node label at char {tokens[pos][1]}")
        pos += 1
        node = TreeNode(label)
        words: list[str] = []
        while pos < len(tokens):
            tok, off2 = tokens[pos]
            if tok == ")":
                pos += 1
                if words:
                    if len(words) != 1 or node.children:
                        raise ParseError(f"mixed leaf/children node at char {off2}")
                    node.surface = words[0]
                elif not node.children:
                    raise ParseError(f"empty node at char {off2}")
                return node
            if tok == "(":
                child = parse_node()
                child.parent = node
                node.children.append(child)
            else:
                words.append(tok)
                pos += 1
        raise ParseError(f"unbalanced parentheses at char {off}")

    root = parse_node()
    if pos != len(tokens):
        raise ParseError(f"trailing content at char {tokens[pos][1]}")
    for idx, leaf in enumerate(_iter_leaves(root)):
        leaf.index = idx
    return root


def _iter_leaves(node: TreeNode) -> Iterable[TreeNode]:
    if node.is_leaf:
        yield node
    else:
        for child in node.children:
            yield from _iter_leaves(child)


def leaves(tree: TreeNode) -> list[tuple[int, str, str]]:
    """In-order (index, surface, preterminal POS) triples."""
    return [(leaf.index, leaf.surface, leaf.label) for leaf in _iter_leaves(tree)]


def serialize(tree: TreeNode) -> str:
    """Canonical one-line s-expression; parse(serialize(t)) reproduces t."""
    if tree.is_leaf:
        return f"({tree.label} {tree.surface})"
    return "(" + tree.label + " " + " ".join(serialize(c) for c in tree.children) + ")"


@dataclass
class DependencyGraph:
    head: list[int]  # head[i] in 0..n, 0 = artificial root
    rel: list[str]

    def __len__(self) -> int:
        return len(self.head)

    def dependents(self, i: int) -> list[int]:
        return [j for j, h in enumerate(self.head) if h == i + 1]

    def governor(self, i: int) -> int | None:
        h = self.head[i]
        return None if h == 0 else h - 1


def read_dependency_block(lines: list[str]) -> DependencyGraph:
    """Rows ``index surface head rel`` -> validated tree over the tokens."""
    rows: list[tuple[int, str, int, str]] = []
    for line in lines:
        fields = line.split()
        if len(fields) < 4:
            raise ParseError(f"dependency row needs 4 fields, got {line!r}")
        try:
            idx, head = int(fields[0]), int(fields[2])
        except ValueError as exc:
            raise ParseError(f"non-integer index/head in row {line!r}") from exc
        rows.append((idx, fields[1], head, fields[3]))
    if not rows:
        raise ParseError("empty dependency block")
    n = len(rows)
    head = [0] * n
    rel = [""] * n
    for k, (idx, _, h, r) in enumerate(rows):
        if idx != k + 1:
            raise ParseError(f"row indices must run 1..{n}, got {idx} at position {k + 1}")
        if h < 0 or h > n:
            raise ParseError(f"head {h} out of range for {n} tokens")
        if h == idx:
            raise ParseError(f"token {idx} is its own head")
        head[k] = h
        rel[k] = r
    roots = [i for i, h in enumerate(head) if h == 0]
    if len(roots) != 1:
        raise ParseError(f"expected exactly one root, found {len(roots)}")
    # Tree check: every token must reach the root in <= n steps.
    for i in range(n):
        cur, steps = i, 0
        while head[cur] != 0:
            cur = head[cur] - 1
            steps += 1
            if steps > n:
                raise ParseError(f"cycle detected involving token {i + 1}")
    return DependencyGraph(head, rel)


def load_trees(stream: TextIO | str) -> list[TreeNode]:
    """One tree per non-empty line, in file order."""
    if isinstance(stream, str):
        with io.open(stream, "r", encoding="utf-8") as fh:
            return load_trees(fh)
    trees = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            trees.append(parse_bracketed(line.rstrip("\n")))
        except ParseError as exc:
            raise ParseError(f"tree line {lineno}: {exc}") from exc
    return trees


def load_deps(stream: TextIO | str) -> list[DependencyGraph]:
    """Blank-line separated dependency blocks, in file order."""
    if isinstance(stream, str):
        with io.open(stream, "r", encoding="utf-8") as fh:
            return load_deps(fh)
    graphs = []
    block: list[str] = []
    start_line = 1
    for lineno, line in enumerate(stream, start=1):
        if line.strip():
            if not block:
                start_line = lineno
            block.append(line)
        elif block:
            try:
                graphs.append(read_dependency_block(block))
            except ParseError as exc:
                raise ParseError(f"dependency block at line {start_line}: {exc}") from exc
            block = []
    if block:
        try:
            graphs.append(read_dependency_block(block))
        except ParseError as exc:
            raise ParseError(f"dependency block at line {start_line}: {exc}") from exc
    return graphs


def check_alignment(tree: TreeNode, surfaces: list[str], where: str = "") -> None:
    """Leaf surfaces must equal the sentence surfaces position-wise."""
    got = [s for _, s, _ in leaves(tree)]
    if got != list(surfaces):
        raise ParseError(f"{where}tree leaves {got} do not match tokens {list(surfaces)}")


def check_dep_alignment(graph: DependencyGraph, n: int, where: str = "") -> None:
    if len(graph) != n:
        raise ParseError(f"{where}dependency block has {len(graph)} rows for {n} tokens")
