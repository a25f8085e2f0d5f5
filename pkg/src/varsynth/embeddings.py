"""Dense word embeddings: loading, writing and vector arithmetic.

Tables hold raw vectors exactly as read. Normalization is left to the
similarity and search code.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class EmbeddingFormatError(ValueError):
    """Raised for malformed word2vec text files."""


class EmbeddingTable:
    """Immutable word -> vector map backed by a single float64 matrix.

    Parameters
    ----------
    words : sequence of str
        Unique vocabulary, in the order rows appear in ``vectors``.
    vectors : array of shape (n_words, dim)
    space_label : str
        Free-form name of the space ("E", "Fprime", "Mixed", ...).
    """

    def __init__(self, words: Sequence[str], vectors, space_label: str = ""):
        vectors = np.array(vectors, dtype=np.float64, copy=True)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D array")
        if len(words) != vectors.shape[0]:
            raise ValueError(
                f"{len(words)} words but {vectors.shape[0]} vector rows"
            )
        if vectors.shape[1] < 1:
            raise ValueError("dimension must be positive")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding vectors must be finite")
        self._words = tuple(words)
        self._index = {w: i for i, w in enumerate(self._words)}
        if len(self._index) != len(self._words):
            raise ValueError("duplicate words in embedding table")
        vectors.setflags(write=False)
        self._vectors = vectors
        self.space_label = space_label
        self.duplicate_count = 0
        self._ranks = None

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    @property
    def words(self) -> tuple[str, ...]:
        return self._words

    @property
    def vectors(self) -> np.ndarray:
        """Read-only (n_words, dim) matrix."""
        return self._vectors

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word) -> bool:
        return word in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self._words)

    def __getitem__(self, word: str) -> np.ndarray:
        try:
            return self._vectors[self._index[word]]
        except KeyError:
            raise KeyError(f"word {word!r} not in {self.space_label or 'table'}") from None

    @property
    def word_ranks(self) -> np.ndarray:
        """Lexicographic rank of each row's word, used for tie-breaking."""
        if self._ranks is None:
            order = sorted(range(len(self._words)), key=self._words.__getitem__)
            ranks = np.empty(len(order), dtype=np.int64)
            ranks[order] = np.arange(len(order))
            self._ranks = ranks
        return self._ranks

    def index_of(self, word: str) -> int:
        return self._index[word]

    def get(self, word: str, default=None):
        i = self._index.get(word)
        return default if i is None else self._vectors[i]

    def __repr__(self) -> str:
        return (
            f"EmbeddingTable(space_label={self.space_label!r}, "
            f"n_words={len(self)}, dim={self.dim})"
        )


def load_word2vec_text(path, space_label: str = "") -> EmbeddingTable:
    """Read a word2vec text-format file.

    The first line is ``<vocab_count> <dim>``; every following non-empty
    line is a word and ``dim`` numbers. Repeated words keep their last
    vector and are counted in ``table.duplicate_count``.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise EmbeddingFormatError(f"{path}:1: malformed header {header.strip()!r}")
        try:
            vocab_count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise EmbeddingFormatError(
                f"{path}:1: malformed header {header.strip()!r}"
            ) from None
        if vocab_count < 0 or dim < 1:
            raise EmbeddingFormatError(f"{path}:1: bad counts in header {header.strip()!r}")

        rows: dict[str, np.ndarray] = {}
        n_rows = 0
        duplicates = 0
        for lineno, line in enumerate(fh, start=2):
            fields = line.split()
            if not fields:
                continue
            n_rows += 1
            word, values = fields[0], fields[1:]
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: row has {len(values)} components, expected {dim}"
                )
            try:
                vec = np.array([float(x) for x in values], dtype=np.float64)
            except ValueError:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: non-numeric component in row for {word!r}"
                ) from None
            if not np.all(np.isfinite(vec)):
                raise EmbeddingFormatError(f"{path}:{lineno}: non-finite component")
            if word in rows:
                duplicates += 1
            # dict keeps the first-seen position and takes the last vector
            rows[word] = vec

    if n_rows != vocab_count:
        raise EmbeddingFormatError(
            f"{path}:{n_rows + 1}: header declares {vocab_count} rows, found {n_rows}"
        )
    if duplicates:
        logger.warning("%s: %d duplicate word(s); last occurrence kept", path, duplicates)

    words = list(rows)
    matrix = np.vstack([rows[w] for w in words]) if words else np.empty((0, dim))
    table = EmbeddingTable(words, matrix, space_label=space_label)
    table.duplicate_count = duplicates
    return table


def write_word2vec_text(table: EmbeddingTable, path) -> None:
    """Write ``table`` in word2vec text format.

    Components are printed with ``repr`` so reloading is bit-exact.
    """
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for word, vec in zip(table.words, table.vectors):
            fh.write(word + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between ``u`` and ``v``.

    Raises ``ValueError`` when either vector has zero norm.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    sim = float(np.dot(u, v) / (nu * nv))
    return min(1.0, max(-1.0, sim))


def compose_additive(words: Iterable[str], table: EmbeddingTable) -> np.ndarray:
    """Sum the vectors of ``words``; the representation used for multi-word units."""
    words = list(words)
    if not words:
        raise ValueError("cannot compose an empty word list")
    total = np.zeros(table.dim, dtype=np.float64)
    for w in words:
        if w not in table:
            raise KeyError(f"word {w!r} not in {table.space_label or 'table'}")
        total += table[w]
    return total
