"""Sentence splitting, tokenization and paragraph segmentation."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyrisk.textprep import (
    Paragraph,
    RawDocument,
    SourceKind,
    load_word_list,
    preprocess,
    segment_paragraphs,
    split_sentences,
    tokenize_sentence,
)


def test_split_sentences_on_terminal_punctuation():
    text = "We face risks. Attackers adapt!  Did controls hold? Yes."
    assert split_sentences(text) == [
        "We face risks", "Attackers adapt", "Did controls hold", "Yes",
    ]


def test_split_sentences_collapses_punctuation_runs():
    assert split_sentences("Wait... what? Done.") == ["Wait", "what", "Done"]


def test_split_sentences_empty_and_whitespace():
    assert split_sentences("") == []
    assert split_sentences("   \n\t ") == []


def test_tokenize_lowercases_and_drops_nonalphabetic():
    tokens = tokenize_sentence("The Firm's 10-K covers FY2023 losses")
    assert tokens == ["the", "firm", "s", "k", "covers", "fy", "losses"]


def test_tokenize_applies_both_word_lists():
    stop = frozenset({"the", "a"})
    common = frozenset({"company"})
    assert tokenize_sentence("The company faces a breach", stop, common) == [
        "faces", "breach",
    ]


def test_tokenize_splits_hyphenated_compounds():
    assert tokenize_sentence("state-of-the-art denial-of-service") == [
        "state", "of", "the", "art", "denial", "of", "service",
    ]


def test_preprocess_drops_empty_sentences():
    doc = RawDocument("d1", SourceKind.FILING, "The a. Breach hit us. 123.")
    stop = frozenset({"the", "a", "us"})
    assert preprocess(doc, stop) == [["breach", "hit"]]


def test_raw_document_validation():
    with pytest.raises(ValueError, match="doc_id"):
        RawDocument("", SourceKind.FILING, "text")
    with pytest.raises(ValueError, match="source_kind"):
        RawDocument("d1", "filing", "text")


def test_segment_closes_at_or_beyond_target():
    sentences = [["a"] * 3, ["b"] * 3, ["c"] * 3]
    paras = segment_paragraphs(sentences, 4, doc_id="d")
    # First paragraph takes two sentences (6 >= 4), second is the remainder.
    assert [p.word_count for p in paras] == [6, 3]
    assert [p.index for p in paras] == [0, 1]
    assert paras[0].ref == ("d", 0)


def test_segment_never_splits_a_sentence():
    sentences = [["w"] * 10]
    paras = segment_paragraphs(sentences, 3)
    assert len(paras) == 1
    assert paras[0].word_count == 10


def test_segment_trailing_partial_kept():
    paras = segment_paragraphs([["a", "b"], ["c"]], 100)
    assert len(paras) == 1
    assert paras[0].tokens == ("a", "b", "c")


def test_segment_rejects_bad_target():
    with pytest.raises(ValueError, match="target_words"):
        segment_paragraphs([["a"]], 0)


token_lists = st.lists(
    st.lists(st.sampled_from(["risk", "cyber", "loss", "data"]), min_size=1, max_size=8),
    max_size=30,
)


@given(sentences=token_lists, target=st.integers(1, 20))
@settings(max_examples=200)
def test_segment_partitions_token_stream(sentences, target):
    paras = segment_paragraphs(sentences, target)
    flat = [t for s in sentences for t in s]
    rebuilt = [t for p in paras for t in p.tokens]
    assert rebuilt == flat
    assert [p.index for p in paras] == list(range(len(paras)))
    # Every paragraph but the last reaches the target.
    for p in paras[:-1]:
        assert p.word_count >= target


@given(sentences=token_lists, target=st.integers(1, 20))
@settings(max_examples=100)
def test_segment_paragraph_bounded_by_target_plus_sentence(sentences, target):
    longest = max((len(s) for s in sentences), default=0)
    for p in segment_paragraphs(sentences, target):
        assert p.word_count <= target - 1 + max(longest, 1)


def test_load_word_list_comments_case_blanklines(tmp_path):
    path = tmp_path / "words.txt"
    path.write_text("# header\nRisk\n\nbreach  # inline\n  Threat\n", encoding="utf-8")
    assert load_word_list(path) == frozenset({"risk", "breach", "threat"})


def test_paragraph_tokens_are_immutable():
    p = Paragraph("d", 0, ["a", "b"])
    assert p.tokens == ("a", "b")
    with pytest.raises(Exception):
        p.tokens[0] = "z"
