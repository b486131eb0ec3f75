"""Tests for datasets, the mini-grammar, splits, vocabularies, and hashing."""

import pytest

from seqmix.data import (
    PAD_ID,
    RESERVED_TOKENS,
    UNK_ID,
    Dataset,
    GrammarSpec,
    Vocabulary,
    build_vocab,
    fnv1a64,
    gen_minigrammar,
    gen_reversal,
    load_scan_file,
    load_tsv,
    make_primitive_split,
    save_scan_file,
    save_tsv,
)
from seqmix.errors import ParameterError, ParseError

# frozen golden counts, cross-checked by hand below
TOTAL_EXAMPLES = 3570
JUMP_TRAIN, JUMP_TEST = 2212, 1358
TURN_LEFT_TRAIN, TURN_LEFT_TEST = 3082, 488


@pytest.fixture(scope="module")
def grammar():
    return gen_minigrammar()


def lookup(data, src):
    for s, t in data:
        if s == src:
            return t
    raise KeyError(src)


class TestMiniGrammar:
    def test_hand_interpreted_examples(self, grammar):
        assert lookup(grammar, ["jump"]) == ["JUMP"]
        assert lookup(grammar, ["walk", "left", "twice"]) == ["LTURN", "WALK", "LTURN", "WALK"]
        assert lookup(grammar, ["look", "after", "jump", "right"]) == ["RTURN", "JUMP", "LOOK"]
        assert lookup(grammar, ["turn", "left"]) == ["LTURN"]
        assert lookup(grammar, ["run", "thrice"]) == ["RUN", "RUN", "RUN"]
        assert lookup(grammar, ["jump", "and", "walk"]) == ["JUMP", "WALK"]

    def test_total_count_matches_combinatorics(self, grammar):
        # atoms: 4 primitives + 4*2 directed + 2 turns = 14
        # phrases: 14 * (1 + 2 repetitions) = 42
        # commands: 42 + 2 connectives * 42^2 = 3570
        atoms = 4 + 4 * 2 + 2
        phrases = atoms * 3
        assert len(grammar) == phrases + 2 * phrases**2 == TOTAL_EXAMPLES

    def test_no_duplicate_sources(self, grammar):
        sources = [tuple(src) for src, _ in grammar]
        assert len(set(sources)) == len(sources)

    def test_action_length_law(self, grammar):
        # target length is the sum over phrases of repetition * atom action count,
        # independently recomputed from the surface command
        spec = GrammarSpec()
        reps = dict(spec.repetitions)

        def phrase_len(words):
            k = reps.get(words[-1], 1)
            atom = words[: -1] if words[-1] in reps else words
            if atom[0] == "turn":
                n = 1
            elif len(atom) == 2:
                n = 2  # directed primitive: turn action + primitive action
            else:
                n = 1
            return k * n

        for src, tgt in grammar:
            for conn in spec.connectives:
                if conn in src:
                    i = src.index(conn)
                    want = phrase_len(src[:i]) + phrase_len(src[i + 1:])
                    break
            else:
                want = phrase_len(src)
            assert len(tgt) == want, src

    def test_generation_deterministic(self, grammar):
        again = gen_minigrammar()
        assert grammar.pairs == again.pairs
        assert grammar.content_hash == again.content_hash


class TestPrimitiveSplit:
    def test_jump_split_membership(self, grammar):
        train, test = make_primitive_split(grammar, "jump")
        train_srcs = {tuple(s) for s, _ in train}
        test_srcs = {tuple(s) for s, _ in test}
        assert ("jump",) in train_srcs
        assert ("jump", "twice") in test_srcs
        assert ("walk", "and", "look") in train_srcs
        assert ("walk", "and", "jump") in test_srcs

    def test_jump_split_counts(self, grammar):
        train, test = make_primitive_split(grammar, "jump")
        assert (len(train), len(test)) == (JUMP_TRAIN, JUMP_TEST)

    def test_split_partitions_dataset(self, grammar):
        train, test = make_primitive_split(grammar, "jump")
        assert len(train) + len(test) == len(grammar)
        overlap = {tuple(s) for s, _ in train} & {tuple(s) for s, _ in test}
        assert not overlap

    def test_turn_left_is_exact_phrase_match(self, grammar):
        train, test = make_primitive_split(grammar, "turn left")
        train_srcs = {tuple(s) for s, _ in train}
        test_srcs = {tuple(s) for s, _ in test}
        assert ("turn", "left") in train_srcs
        assert ("walk", "left") in train_srcs  # "left" alone is not the phrase
        assert ("turn", "left", "twice") in test_srcs
        assert (len(train), len(test)) == (TURN_LEFT_TRAIN, TURN_LEFT_TEST)

    def test_missing_phrase_rejected(self, grammar):
        with pytest.raises(ParameterError):
            make_primitive_split(grammar, "fly")


class TestVocabulary:
    def test_reserved_then_sorted(self):
        vocab = Vocabulary(["b", "a"])
        assert vocab.tokens == list(RESERVED_TOKENS) + ["a", "b"]
        assert vocab.encode(["a", "b"]) == [4, 5]

    def test_unknown_maps_to_unk(self):
        vocab = Vocabulary(["a"])
        assert vocab.encode(["zzz"]) == [UNK_ID]

    def test_roundtrip(self):
        vocab = Vocabulary(["jump", "JUMP"])
        ids = vocab.encode(["jump", "JUMP"])
        assert vocab.decode(ids) == ["jump", "JUMP"]

    def test_same_dataset_same_ids(self, grammar):
        v1 = build_vocab(grammar)
        v2 = build_vocab(grammar)
        assert v1.tokens == v2.tokens

    def test_from_ordered_tokens_requires_reserved_prefix(self):
        with pytest.raises(ParseError):
            Vocabulary.from_ordered_tokens(["a", "b"])
        v = Vocabulary.from_ordered_tokens(list(RESERVED_TOKENS) + ["x"])
        assert v.encode(["x"]) == [4]

    def test_unshared_vocabularies(self, grammar):
        src_v, tgt_v = build_vocab(grammar, shared=False)
        assert "jump" in src_v.index and "jump" not in tgt_v.index
        assert "JUMP" in tgt_v.index and "JUMP" not in src_v.index


class TestFilesAndHashing:
    def test_scan_roundtrip(self, tmp_path, grammar):
        path = tmp_path / "data.scan"
        save_scan_file(grammar, path)
        again = load_scan_file(path)
        assert again.pairs == grammar.pairs

    def test_scan_parse_error_names_line(self, tmp_path):
        path = tmp_path / "bad.scan"
        path.write_text("IN: jump OUT: JUMP\nIN: walk WITHOUT anything\n")
        with pytest.raises(ParseError, match=":2:"):
            load_scan_file(path)

    def test_scan_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.scan"
        path.write_text("\n\n")
        with pytest.raises(ParseError):
            load_scan_file(path)

    def test_tsv_roundtrip(self, tmp_path):
        data = Dataset("d", [(["a", "b"], ["c"]), (["x"], ["y", "z"])])
        path = tmp_path / "d.tsv"
        save_tsv(data, path)
        assert load_tsv(path).pairs == data.pairs

    def test_tsv_field_count_checked(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a\tb\tc\n")
        with pytest.raises(ParseError, match=":1:"):
            load_tsv(path)

    def test_fnv_hash_known_vector(self):
        # standard FNV-1a 64 test vectors
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C

    def test_content_hash_is_content_only(self):
        a = Dataset("one", [(["x"], ["y"])])
        b = Dataset("two", [(["x"], ["y"])])
        assert a.content_hash == b.content_hash
        c = Dataset("three", [(["x"], ["z"])])
        assert a.content_hash != c.content_hash


class TestReversalCorpus:
    def test_shapes_and_semantics(self):
        data = gen_reversal(n_pairs=50, vocab_size=7, min_len=3, max_len=8, seed=1)
        assert len(data) == 50
        for src, tgt in data:
            assert 3 <= len(src) <= 8
            assert tgt == list(reversed(src))

    def test_seed_determinism(self):
        a = gen_reversal(n_pairs=20, seed=5)
        b = gen_reversal(n_pairs=20, seed=5)
        c = gen_reversal(n_pairs=20, seed=6)
        assert a.pairs == b.pairs
        assert a.pairs != c.pairs

    def test_parameter_validation(self):
        with pytest.raises(ParameterError):
            gen_reversal(n_pairs=0)
        with pytest.raises(ParameterError):
            gen_reversal(min_len=5, max_len=3)


class TestDatasetContract:
    def test_empty_sides_rejected(self):
        with pytest.raises(ParseError):
            Dataset("bad", [([], ["y"])])

    def test_empty_dataset_vocab_rejected(self):
        with pytest.raises(ParameterError):
            build_vocab(Dataset("empty", []))
