import io

import numpy as np
import pytest

from synner.corpus import load_conll
from synner.synextract import (CONSTITUENT_WHITELIST, SentenceMemories,
                               build_syntax_vocab, dump_memories, extract_constituent,
                               extract_corpus, extract_dependency, extract_pos,
                               extract_sentence, resolve_pos)
from synner.synparse import parse_bracketed, read_dependency_block

# Golden fixture: ".. city is Salt Lake City" with gold annotations; token 3
# ("Salt") reproduces all three extraction walk-throughs.
SENT = ["The", "city", "is", "Salt", "Lake", "City"]
POS = ["DT", "NN", "VBZ", "NNP", "NNP", "NNP"]
TREE = parse_bracketed(
    "(S (NP (DT The) (NN city)) (VP (VBZ is) (NP (NNP Salt) (NNP Lake) (NNP City))))")
DEPS = read_dependency_block([
    "1\tThe\t2\tdet",
    "2\tcity\t6\tnsubj",
    "3\tis\t6\tcop",
    "4\tSalt\t6\tcompound",
    "5\tLake\t6\tcompound",
    "6\tCity\t0\troot",
])


class TestGoldenFixtures:
    def test_pos_window(self):
        keys, values = extract_pos(SENT, POS, 3)
        assert keys == ["is", "Salt", "Lake"]
        assert values == ["is_VBZ", "Salt_NNP", "Lake_NNP"]

    def test_constituents(self):
        keys, values = extract_constituent(TREE, 3)
        assert keys == ["Salt", "Lake", "City"]
        assert values == ["Salt_NP", "Lake_NP", "City_NP"]

    def test_dependencies(self):
        keys, values = extract_dependency(DEPS, SENT, 3)
        assert keys == ["Salt", "City"]
        assert values == ["Salt_compound", "City_root"]


class TestPosWindow:
    def test_single_token(self):
        keys, values = extract_pos(["w0"], ["TAG"], 0)
        assert keys == ["w0"]
        assert values == ["w0_TAG"]

    def test_left_clipping(self):
        keys, _ = extract_pos(["w0", "w1", "w2"], ["A", "B", "C"], 0)
        assert keys == ["w0", "w1"]

    def test_right_clipping(self):
        keys, _ = extract_pos(["w0", "w1", "w2"], ["A", "B", "C"], 2)
        assert keys == ["w1", "w2"]

    def test_wider_window(self):
        keys, _ = extract_pos(["a", "b", "c", "d", "e"], list("ABCDE"), 2, window=2)
        assert keys == ["a", "b", "c", "d", "e"]

    def test_bad_index(self):
        with pytest.raises(IndexError):
            extract_pos(["a"], ["A"], 1)


class TestConstituents:
    def test_whitelist_is_ten_nodes(self):
        assert CONSTITUENT_WHITELIST == {"NP", "VP", "PP", "ADVP", "SBAR", "ADJP",
                                         "PRT", "INTJ", "CONJP", "LST"}

    def test_fallback_to_root(self):
        tree = parse_bracketed("(FRAG (NNP X))")
        keys, values = extract_constituent(tree, 0)
        assert keys == ["X"]
        assert values == ["X_FRAG"]

    def test_first_acceptable_ancestor(self):
        tree = parse_bracketed("(S (NP (NN a) (NN b)) (VP (VB c)))")
        keys, values = extract_constituent(tree, 2)
        assert keys == ["c"]
        assert values == ["c_VP"]

    def test_function_tags_stripped_for_match_and_value(self):
        tree = parse_bracketed("(S (NP-SBJ (NN a) (NN b)))")
        keys, values = extract_constituent(tree, 0)
        assert keys == ["a", "b"]
        assert values == ["a_NP", "b_NP"]

    def test_nested_picks_innermost(self):
        tree = parse_bracketed("(S (NP (NP (NN a)) (PP (IN of) (NN b))))")
        keys, values = extract_constituent(tree, 0)
        assert keys == ["a"]
        assert values == ["a_NP"]


class TestDependencies:
    def test_root_collects_dependents(self):
        keys, values = extract_dependency(DEPS, SENT, 5)
        assert keys == ["The", "city", "is", "Salt", "Lake", "City"][1:]  # det hangs off city
        assert values == ["city_nsubj", "is_cop", "Salt_compound", "Lake_compound",
                          "City_root"]

    def test_single_root_token(self):
        g = read_dependency_block(["1\tx\t0\troot"])
        keys, values = extract_dependency(g, ["x"], 0)
        assert keys == ["x"]
        assert values == ["x_root"]

    def test_three_token_example(self):
        g = read_dependency_block(["1\tSalt\t3\tcompound", "2\tLake\t3\tcompound",
                                   "3\tCity\t0\troot"])
        keys, values = extract_dependency(g, ["Salt", "Lake", "City"], 2)
        assert keys == ["Salt", "Lake", "City"]
        assert values == ["Salt_compound", "Lake_compound", "City_root"]


class TestInvariants:
    def test_own_surface_always_in_keys_and_parallel(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 8))
            surfaces = [f"w{i}" for i in range(n)]
            tags = [f"T{int(rng.integers(0, 3))}" for _ in range(n)]
            # random left-branching-ish tree over whitelisted/unwhitelisted labels
            parts = " ".join(f"(T{t} {s})" for s, t in zip(surfaces, tags))
            tree = parse_bracketed(f"(S (NP {parts}))")
            head = [0] * n
            for i in range(1, n):
                head[i] = int(rng.integers(0, i)) + 1
            rows = [f"{i + 1}\t{surfaces[i]}\t{head[i]}\tr{i % 3}" for i in range(n)]
            graph = read_dependency_block(rows)
            for i in range(n):
                for keys, values in (extract_pos(surfaces, tags, i),
                                     extract_constituent(tree, i),
                                     extract_dependency(graph, surfaces, i)):
                    assert surfaces[i] in keys
                    assert len(keys) == len(values) >= 1
                    for k, v in zip(keys, values):
                        assert v.startswith(f"{k}_")

    def test_extraction_pure(self):
        a = extract_dependency(DEPS, SENT, 3)
        b = extract_dependency(DEPS, SENT, 3)
        assert a == b


class TestVocab:
    def _memories(self):
        corpus = load_conll(io.StringIO(
            "Salt NNP B-LOC\nLake NNP I-LOC\n\nSalt NNP B-LOC\nFlats NNP I-LOC\n"))
        return extract_corpus(corpus, None, None, types=("pos",))

    def test_shared_value_one_id(self):
        mems = self._memories()
        vocab = build_syntax_vocab(mems, "pos", min_count=1)
        assert vocab.value_id("Salt_NNP") > 0
        ids = {vocab.value_id("Salt_NNP")}
        assert len(ids) == 1

    def test_unseen_maps_to_unk(self):
        vocab = build_syntax_vocab(self._memories(), "pos", min_count=1)
        assert vocab.value_id("Never_SEEN") == 0
        assert vocab.key_id("nothere") == 0

    def test_min_count_two_drops_singletons(self):
        # single-token sentences so each value string occurs exactly once per use
        corpus = load_conll(io.StringIO("Salt NNP B-LOC\n\nSalt NNP B-LOC\n\nFlats NNP B-LOC\n"))
        mems = extract_corpus(corpus, None, None, types=("pos",))
        vocab = build_syntax_vocab(mems, "pos", min_count=2)
        assert vocab.value_id("Salt_NNP") > 0  # two occurrences
        assert vocab.value_id("Flats_NNP") == 0  # singleton

    def test_ids_dense_and_stable(self):
        v1 = build_syntax_vocab(self._memories(), "pos")
        v2 = build_syntax_vocab(self._memories(), "pos")
        assert v1.key_vocab == v2.key_vocab
        assert sorted(v1.value_vocab.values()) == list(range(1, len(v1.value_vocab) + 1))

    def test_empty_split_rejected(self):
        with pytest.raises(ValueError):
            build_syntax_vocab([], "pos")


class TestSentenceLevel:
    def test_extract_sentence_all_types(self):
        corpus = load_conll(io.StringIO(
            "The DT O\ncity NN O\nis VBZ O\nSalt NNP B-LOC\nLake NNP I-LOC\nCity NNP I-LOC\n"))
        mems = extract_sentence(corpus.sentences[0], TREE, DEPS)
        assert mems.size("pos", 3) == 3
        assert mems.keys["con"][3] == ["Salt", "Lake", "City"]
        assert mems.values["dep"][3] == ["Salt_compound", "City_root"]

    def test_corpus_length_mismatch(self):
        corpus = load_conll(io.StringIO("a X O\n\nb X O\n"))
        with pytest.raises(ValueError):
            extract_corpus(corpus, [TREE], None, types=("con",))

    def test_dump_format(self):
        mems = [SentenceMemories({"pos": [["a", "b"]]}, {"pos": [["a_T", "b_T"]]})]
        lines = dump_memories(mems)
        assert lines == ["0\t0\tpos\ta,b\ta_T,b_T"]


class TestResolvePos:
    def test_column_wins_with_conflict_count(self):
        corpus = load_conll(io.StringIO(
            "The DT O\ncity NN O\nis XX O\nSalt NNP B-LOC\nLake NNP I-LOC\nCity NNP I-LOC\n"))
        tags, conflicts = resolve_pos(corpus.sentences[0], TREE)
        assert tags[2] == "XX"  # column wins over the tree's VBZ
        assert conflicts == 1

    def test_preterminals_fill_missing_column(self):
        from synner.corpus import ColumnMap
        corpus = load_conll(io.StringIO("The O\ncity O\nis O\nSalt O\nLake O\nCity O\n"),
                            ColumnMap(token_col=0, pos_col=None, label_col=1))
        tags, conflicts = resolve_pos(corpus.sentences[0], TREE)
        assert tags == ["DT", "NN", "VBZ", "NNP", "NNP", "NNP"]
        assert conflicts == 0
