"""Distributed bag-of-words paragraph embeddings with negative sampling.

Each paragraph owns a trainable vector that is pushed to predict the words
it contains; word vectors live in a separate output matrix.  Negatives are
drawn from the unigram distribution raised to the 0.75 power.  Training is
fully deterministic for a given seed: paragraphs are put into canonical
(doc_id, index) order before any random draw, so the caller's input order
never influences the result.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .textprep import Paragraph

# Learning rate decays linearly to this fraction of its starting value.
_MIN_LR_FRACTION = 1e-4


@dataclass(frozen=True)
class EmbeddingVector:
    """A dense vector tied to the paragraph it represents."""

    paragraph_ref: tuple[str, int]
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("vector values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite vector entries")
        object.__setattr__(self, "values", values)

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


class EmbeddingModel:
    """Frozen artifacts of one training run.

    Holds the vocabulary (token to dense id), the word output matrix, the
    noise distribution used for negative draws, and the per-epoch average
    training loss.  ``infer_vector`` consumes this to embed unseen
    paragraphs without touching the word matrix.
    """

    def __init__(
        self,
        vocabulary: Mapping[str, int],
        word_matrix: np.ndarray,
        noise_cdf: np.ndarray,
        dimension: int,
        negatives: int,
        learning_rate: float,
        seed: int,
        epoch_losses: list[float],
    ) -> None:
        self.vocabulary = dict(vocabulary)
        self.word_matrix = word_matrix
        self.noise_cdf = noise_cdf
        self.dimension = dimension
        self.negatives = negatives
        self.learning_rate = learning_rate
        self.seed = seed
        self.epoch_losses = list(epoch_losses)

    @property
    def vocabulary_size(self) -> int:
        return len(self.vocabulary)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def _canonical(paragraphs: Iterable[Paragraph]) -> list[Paragraph]:
    paras = sorted(paragraphs, key=lambda p: (p.doc_id, p.index))
    refs = [p.ref for p in paras]
    if len(set(refs)) != len(refs):
        raise ValueError("duplicate paragraph refs in corpus")
    return paras


def _build_vocabulary(paragraphs: Sequence[Paragraph]) -> tuple[dict[str, int], np.ndarray]:
    counts: Counter[str] = Counter()
    for para in paragraphs:
        counts.update(para.tokens)
    tokens = sorted(counts)
    vocabulary = {token: idx for idx, token in enumerate(tokens)}
    freq = np.array([counts[token] for token in tokens], dtype=float)
    return vocabulary, freq


def _noise_cdf(frequencies: np.ndarray) -> np.ndarray:
    weights = frequencies ** 0.75
    return np.cumsum(weights / weights.sum())


def _alias_tables(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Walker alias tables for O(1) categorical sampling."""
    n = probs.size
    accept = probs * n
    alias = np.zeros(n, dtype=np.intp)
    small = [i for i in range(n) if accept[i] < 1.0]
    large = [i for i in range(n) if accept[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        alias[s] = g
        accept[g] += accept[s] - 1.0
        (small if accept[g] < 1.0 else large).append(g)
    for i in small + large:
        accept[i] = 1.0
    return accept, alias


def _alias_draw(
    accept: np.ndarray, alias: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    u = rng.random((count, 2))
    idx = (u[:, 0] * accept.size).astype(np.intp)
    return np.where(u[:, 1] < accept[idx], idx, alias[idx])


def _paragraph_step(
    vector: np.ndarray,
    token_ids: np.ndarray,
    word_matrix: np.ndarray,
    neg_ids: np.ndarray,
    lr: float,
    update_words: bool,
) -> float:
    """One negative-sampling update for a paragraph; returns summed loss.

    All positions are batched into a single gradient step: positives are
    the paragraph's own tokens, ``neg_ids`` holds the pre-drawn noise ids
    (one row per token).  Negative draws that collide with their positive
    target are masked out.
    """
    n_tokens = token_ids.size
    targets = np.concatenate([token_ids, neg_ids.ravel()])
    sign = np.ones(targets.size)
    sign[n_tokens:] = -1.0
    mask = np.ones(targets.size)
    mask[n_tokens:] = (neg_ids != token_ids[:, None]).ravel()

    # Duplicate targets are aggregated so the scatter back into the word
    # matrix uses unique row indices only.
    unique, inverse = np.unique(targets, return_inverse=True)
    rows = word_matrix[unique]
    prob = _sigmoid(sign * (rows @ vector)[inverse])
    loss = float(-(np.log(np.maximum(prob, 1e-12)) * mask).sum())

    grad = (prob - 1.0) * sign * mask
    coef = np.bincount(inverse, weights=grad, minlength=unique.size)
    coef *= lr
    # Both gradients are evaluated at the pre-update parameters.
    delta_vector = coef @ rows
    if update_words:
        np.subtract(rows, coef[:, None] * vector, out=rows)
        word_matrix[unique] = rows
    vector -= delta_vector
    return loss


def train_dbow(
    paragraphs: Iterable[Paragraph],
    dimension: int = 64,
    epochs: int = 40,
    negatives: int = 5,
    learning_rate: float = 0.025,
    *,
    seed: int,
) -> tuple[EmbeddingModel, dict[tuple[str, int], EmbeddingVector]]:
    """Train paragraph vectors on a corpus.

    Parameters
    ----------
    paragraphs : iterable of Paragraph
        Training corpus.  Order does not matter; paragraphs are sorted by
        (doc_id, index) before the seeded shuffle.
    dimension : int
        Embedding width, at least 2.
    epochs, negatives, learning_rate : training hyperparameters
        The learning rate decays linearly across epochs.
    seed : int
        Drives initialisation, epoch shuffling and negative draws.

    Returns
    -------
    (EmbeddingModel, dict)
        The frozen model and one vector per paragraph keyed by ref.
    """
    if dimension < 2:
        raise ValueError("degenerate dimension: need at least 2")
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    paras = _canonical(paragraphs)
    if not paras:
        raise ValueError("empty corpus")
    vocabulary, freq = _build_vocabulary(paras)
    if not vocabulary:
        raise ValueError("empty corpus: no tokens survive")
    noise_cdf = _noise_cdf(freq)

    rng = np.random.default_rng(seed)
    n_paras = len(paras)
    doc_matrix = (rng.random((n_paras, dimension)) - 0.5) / dimension
    word_matrix = np.zeros((len(vocabulary), dimension))
    token_ids = [
        np.array([vocabulary[t] for t in p.tokens], dtype=np.intp) for p in paras
    ]

    min_lr = learning_rate * _MIN_LR_FRACTION
    lengths = np.array([ids.size for ids in token_ids], dtype=np.intp)
    accept, alias = _alias_tables(np.diff(noise_cdf, prepend=0.0))
    epoch_losses: list[float] = []
    for epoch in range(epochs):
        frac = epoch / max(epochs - 1, 1)
        lr = learning_rate + (min_lr - learning_rate) * frac
        order = rng.permutation(n_paras)
        # One noise draw for the whole epoch, laid out in visit order.
        neg_all = _alias_draw(accept, alias, int(lengths.sum()) * negatives, rng)
        pos = 0
        total_loss = 0.0
        total_tokens = 0
        for idx in order:
            ids = token_ids[idx]
            if ids.size == 0:
                continue
            block = pos + ids.size * negatives
            total_loss += _paragraph_step(
                doc_matrix[idx], ids, word_matrix,
                neg_all[pos:block].reshape(ids.size, negatives),
                lr, update_words=True,
            )
            pos = block
            total_tokens += ids.size
        epoch_losses.append(total_loss / max(total_tokens, 1))

    model = EmbeddingModel(
        vocabulary, word_matrix, noise_cdf, dimension,
        negatives, learning_rate, seed, epoch_losses,
    )
    vectors = {
        p.ref: EmbeddingVector(p.ref, doc_matrix[i].copy())
        for i, p in enumerate(paras)
    }
    return model, vectors


def infer_vector(
    model: EmbeddingModel,
    paragraph: Paragraph,
    steps: int = 50,
    *,
    seed: int,
) -> EmbeddingVector:
    """Embed an unseen paragraph against a frozen model.

    Runs ``steps`` gradient passes on a freshly initialised vector while
    the word matrix stays fixed.  Tokens outside the training vocabulary
    are ignored; if none remain the paragraph cannot be embedded.
    """
    ids = np.array(
        [model.vocabulary[t] for t in paragraph.tokens if t in model.vocabulary],
        dtype=np.intp,
    )
    if ids.size == 0:
        raise ValueError("out-of-vocabulary paragraph")
    rng = np.random.default_rng(seed)
    vector = (rng.random(model.dimension) - 0.5) / model.dimension
    min_lr = model.learning_rate * _MIN_LR_FRACTION
    accept, alias = _alias_tables(np.diff(model.noise_cdf, prepend=0.0))
    for step in range(steps):
        frac = step / max(steps - 1, 1)
        lr = model.learning_rate + (min_lr - model.learning_rate) * frac
        neg_ids = _alias_draw(
            accept, alias, ids.size * model.negatives, rng
        ).reshape(ids.size, model.negatives)
        _paragraph_step(
            vector, ids, model.word_matrix, neg_ids, lr, update_words=False,
        )
    return EmbeddingVector(paragraph.ref, vector)


def cosine(a, b) -> float:
    """Cosine similarity; rejects zero vectors rather than returning NaN."""
    va = _as_array(a)
    vb = _as_array(b)
    if va.shape != vb.shape:
        raise ValueError("dimension mismatch")
    norm_a = math.sqrt(float(va @ va))
    norm_b = math.sqrt(float(vb @ vb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("undefined angle: zero vector")
    return float(va @ vb) / (norm_a * norm_b)


def _as_array(v) -> np.ndarray:
    if isinstance(v, EmbeddingVector):
        return v.values
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError("vector must be one-dimensional")
    return arr


def save_vectors(vectors: Iterable[EmbeddingVector], path) -> None:
    """Write vectors as ``doc_id<TAB>index<TAB>v1,v2,...,vd`` lines."""
    lines = []
    for vec in sorted(vectors, key=lambda v: v.paragraph_ref):
        doc_id, index = vec.paragraph_ref
        if "\t" in doc_id or "\n" in doc_id:
            raise ValueError(f"doc_id {doc_id!r} contains a delimiter")
        values = ",".join(repr(float(x)) for x in vec.values)
        lines.append(f"{doc_id}\t{index}\t{values}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vectors(path) -> list[EmbeddingVector]:
    """Read a vector file written by :func:`save_vectors`.

    Raises on ragged dimensions or non-finite entries so a corrupted file
    never propagates silently into the scoring stage.
    """
    vectors: list[EmbeddingVector] = []
    dimension: int | None = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 tab-separated fields")
        doc_id, index_str, values_str = parts
        try:
            index = int(index_str)
            values = np.array([float(x) for x in values_str.split(",")])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
        if dimension is None:
            dimension = values.size
        elif values.size != dimension:
            raise ValueError(f"line {lineno}: ragged dimensions")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"line {lineno}: non-finite entries")
        vectors.append(EmbeddingVector((doc_id, index), values))
    return vectors
