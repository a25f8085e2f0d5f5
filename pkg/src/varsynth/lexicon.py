"""Seed bilingual lexicon between the target language and the variant.

Entries map a word to target-side word sequences with weights. A lexicon
can be read from TSV, induced from a word-aligned seed corpus, or looked
up in a joint bilingual embedding.
"""
from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping

from .alignment import AlignmentLinks, SentencePair, groups_for_source, groups_for_target
from .ann import MrptIndex, exact_knn
from .embeddings import EmbeddingTable, cosine_similarity

Translation = tuple[tuple[str, ...], float]


class LexiconFormatError(ValueError):
    pass


def _sort_key(item: Translation):
    seq, weight = item
    return (-weight, " ".join(seq))


class Lexicon:
    """Immutable ``word -> [(target sequence, weight), ...]`` map.

    Each list is sorted by descending weight, ties by the space-joined
    target string. Lookups are case-sensitive.
    """

    def __init__(self, entries: Mapping[str, Iterable[Translation]] | None = None,
                 direction_label: str = "E->Fprime"):
        self.direction_label = direction_label
        merged: dict[str, dict[tuple[str, ...], float]] = {}
        for src, translations in (entries or {}).items():
            if not src:
                raise ValueError("empty source word")
            slot = merged.setdefault(src, {})
            for seq, weight in translations:
                seq = tuple(seq)
                if not seq or any(not t for t in seq):
                    raise ValueError(f"empty target sequence for {src!r}")
                slot[seq] = slot.get(seq, 0.0) + float(weight)
        self._entries = {
            src: tuple(sorted(slot.items(), key=_sort_key)) for src, slot in merged.items()
        }

    def lookup(self, word: str) -> list[Translation]:
        return list(self._entries.get(word, ()))

    def __contains__(self, word) -> bool:
        return word in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def items(self):
        return self._entries.items()

    def __eq__(self, other):
        return isinstance(other, Lexicon) and self._entries == other._entries

    def __repr__(self):
        return f"Lexicon({self.direction_label!r}, {len(self)} entries)"


def lookup(lex: Lexicon, word: str) -> list[Translation]:
    return lex.lookup(word)


def load_lexicon_tsv(path, direction_label: str = "E->Fprime") -> Lexicon:
    """Read ``src<TAB>target sequence[<TAB>weight]`` lines.

    Repeated (src, target) lines add their weights. A missing weight is 1.0.
    """
    entries: dict[str, list[Translation]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 3):
                raise LexiconFormatError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
            src, tgt = cols[0].strip(), cols[1].split()
            if not src:
                raise LexiconFormatError(f"{path}:{lineno}: empty source word")
            if not tgt:
                raise LexiconFormatError(f"{path}:{lineno}: empty target")
            weight = 1.0
            if len(cols) == 3:
                if not cols[2].strip():
                    raise LexiconFormatError(f"{path}:{lineno}: empty weight")
                try:
                    weight = float(cols[2])
                except ValueError:
                    raise LexiconFormatError(
                        f"{path}:{lineno}: non-numeric weight {cols[2]!r}"
                    ) from None
            entries.setdefault(src, []).append((tuple(tgt), weight))
    return Lexicon(entries, direction_label)


def write_lexicon_tsv(lex: Lexicon, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for src in sorted(lex):
            for seq, weight in lex.lookup(src):
                fh.write(f"{src}\t{' '.join(seq)}\t{float(weight)!r}\n")


def _contiguous(positions: list[int]) -> bool:
    return bool(positions) and positions[-1] - positions[0] == len(positions) - 1


def count_alignment_pairs(
    pairs: Iterable[tuple[SentencePair, AlignmentLinks]], e_side: str = "tgt"
) -> Counter:
    """Count ``(E word, variant sequence)`` co-occurrences over an aligned corpus.

    ``e_side`` names which side of each pair holds the E sentence. For every
    E token the aligned variant positions form one group; groups that are not
    contiguous are dropped.
    """
    if e_side not in ("src", "tgt"):
        raise ValueError("e_side must be 'src' or 'tgt'")
    counts: Counter = Counter()
    for pair, links in pairs:
        if e_side == "tgt":
            e_tokens, other, group_of = pair.tgt_tokens, pair.src_tokens, groups_for_target
        else:
            e_tokens, other, group_of = pair.src_tokens, pair.tgt_tokens, groups_for_source
        for pos, e_word in enumerate(e_tokens):
            group = group_of(links, pos)
            if _contiguous(group):
                counts[(e_word, tuple(other[i] for i in group))] += 1
    return counts


def induce_from_alignments(
    pairs: Iterable[tuple[SentencePair, AlignmentLinks]],
    min_count: int = 2,
    e_side: str = "tgt",
    direction_label: str = "E->Fprime",
) -> Lexicon:
    """Build a lexicon from a word-aligned seed corpus, keeping pairs seen ``min_count`` times."""
    if min_count < 1:
        raise ValueError("min_count must be positive")
    counts = count_alignment_pairs(pairs, e_side)
    entries: dict[str, list[Translation]] = {}
    for (e_word, seq), c in counts.items():
        if c >= min_count:
            entries.setdefault(e_word, []).append((seq, float(c)))
    return Lexicon(entries, direction_label)


def map_via_bilingual_embedding(
    word: str,
    joint: EmbeddingTable,
    index: MrptIndex | None,
    source_prefix: str,
    target_prefix: str,
    k: int,
    v: int = 1,
) -> str | None:
    """Nearest ``target_prefix`` word to ``source_prefix + word`` among its k neighbors.

    Returns the neighbor with its prefix removed, or ``None``. ``index=None``
    searches exactly.
    """
    key = source_prefix + word
    if key not in joint:
        return None
    q = joint[key]
    result = exact_knn(joint, q, k) if index is None else index.query(q, k, v)
    for neighbor, _ in result.neighbors:
        if neighbor.startswith(target_prefix) and neighbor != key:
            return neighbor[len(target_prefix):]
    return None


def lexicon_from_bilingual_embedding(
    words: Iterable[str],
    joint: EmbeddingTable,
    index: MrptIndex | None,
    source_prefix: str,
    target_prefix: str,
    k: int,
    v: int = 1,
    direction_label: str = "E->Fprime",
) -> Lexicon:
    """Single-word lexicon from a joint embedding; weights are cosine similarities."""
    entries: dict[str, list[Translation]] = {}
    for word in words:
        mapped = map_via_bilingual_embedding(word, joint, index, source_prefix, target_prefix, k, v)
        if mapped is None:
            continue
        try:
            weight = cosine_similarity(joint[source_prefix + word], joint[target_prefix + mapped])
        except ValueError:
            weight = 0.0
        entries[word] = [((mapped,), weight)]
    return Lexicon(entries, direction_label)


def align_via_bilingual_embedding(
    pair: SentencePair,
    joint: EmbeddingTable,
    index: MrptIndex | None,
    e_prefix: str,
    f_prefix: str,
    k: int,
    v: int = 1,
) -> AlignmentLinks:
    """Link each E (target) token to the source tokens equal to its joint-space neighbor.

    The alternative to a word aligner when only a bilingual embedding is
    available.
    """
    links = set()
    for j, e_word in enumerate(pair.tgt_tokens):
        mapped = map_via_bilingual_embedding(e_word, joint, index, e_prefix, f_prefix, k, v)
        if mapped is None:
            continue
        for i, f_word in enumerate(pair.src_tokens):
            if f_word == mapped:
                links.add((i, j))
    return AlignmentLinks(frozenset(links))

