"""Text preparation for filings and attack-description corpora.

Documents are split into sentences, tokenized to lowercase alphabetic
words, filtered against stop-word and common-word lists, and greedily
packed into paragraphs of roughly a target word count.  Paragraph
boundaries always coincide with sentence boundaries, so no sentence is
ever split across two paragraphs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

# A sentence ends at a run of ., ! or ? followed by whitespace or the end
# of the document.  Abbreviation handling is deliberately out of scope.
_SENTENCE_BREAK = re.compile(r"[.!?]+(?:\s+|$)")

# Alphabetic runs only: digits and underscores terminate a token, and the
# ASCII hyphen is a non-word character, so hyphenated compounds split.
_WORD = re.compile(r"[^\W\d_]+")


class SourceKind(Enum):
    FILING = "filing"
    KNOWLEDGEBASE = "knowledgebase"


@dataclass(frozen=True)
class RawDocument:
    """A document exactly as loaded, before any cleaning."""

    doc_id: str
    source_kind: SourceKind
    text: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be nonempty")
        if not isinstance(self.source_kind, SourceKind):
            raise ValueError("source_kind must be a SourceKind")


@dataclass(frozen=True)
class Paragraph:
    """A contiguous run of cleaned tokens from a single document."""

    doc_id: str
    index: int
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))

    @property
    def word_count(self) -> int:
        return len(self.tokens)

    @property
    def ref(self) -> tuple[str, int]:
        """Stable identifier used to key embedding vectors."""
        return (self.doc_id, self.index)


def load_word_list(path) -> frozenset[str]:
    """Read a word list: one token per line, UTF-8, ``#`` starts a comment.

    Blank lines are ignored and entries are lowercased so membership tests
    line up with the tokenizer output.
    """
    words = set()
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        entry = raw.split("#", 1)[0].strip()
        if entry:
            words.add(entry.lower())
    return frozenset(words)


def split_sentences(text: str) -> list[str]:
    """Split raw text on sentence-final punctuation followed by whitespace."""
    return [part.strip() for part in _SENTENCE_BREAK.split(text) if part.strip()]


def tokenize_sentence(
    sentence: str,
    stoplist: frozenset[str] = frozenset(),
    common_words: frozenset[str] = frozenset(),
) -> list[str]:
    """Lowercase alphabetic tokens of one sentence, filtered against both lists."""
    tokens = []
    for token in _WORD.findall(sentence.lower()):
        if token in stoplist or token in common_words:
            continue
        tokens.append(token)
    return tokens


def preprocess(
    doc: RawDocument,
    stoplist: frozenset[str] = frozenset(),
    common_words: frozenset[str] = frozenset(),
) -> list[list[str]]:
    """Clean one document into a list of sentences, each a token list.

    Parameters
    ----------
    doc : RawDocument
        Document to clean.
    stoplist, common_words : frozenset of str
        Tokens to drop.  The two lists play the same mechanical role; they
        are kept separate because they are maintained separately.

    Returns
    -------
    list of list of str
        Sentence token sequences in original order.  Sentences that end up
        empty after filtering are dropped.
    """
    sentences = []
    for sentence in split_sentences(doc.text):
        tokens = tokenize_sentence(sentence, stoplist, common_words)
        if tokens:
            sentences.append(tokens)
    return sentences


def segment_paragraphs(
    sentences: Sequence[Sequence[str]],
    target_words: int = 40,
    *,
    doc_id: str = "doc",
) -> list[Paragraph]:
    """Greedily pack sentences into paragraphs of roughly ``target_words``.

    Sentences are concatenated in order; a paragraph closes at the first
    sentence boundary at or beyond the target, so every paragraph except
    possibly the last holds at least ``target_words`` tokens.  A trailing
    partial paragraph is emitted as-is.
    """
    if target_words < 1:
        raise ValueError("target_words must be at least 1")
    paragraphs: list[Paragraph] = []
    buf: list[str] = []
    for sentence in sentences:
        buf.extend(sentence)
        if len(buf) >= target_words:
            paragraphs.append(Paragraph(doc_id, len(paragraphs), tuple(buf)))
            buf = []
    if buf:
        paragraphs.append(Paragraph(doc_id, len(paragraphs), tuple(buf)))
    return paragraphs
