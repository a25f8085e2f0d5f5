"""Sentence pairs, Pharaoh word alignments and per-pair alignment statistics."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator


class AlignmentError(ValueError):
    pass


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class SentencePair:
    src_tokens: tuple[str, ...]
    tgt_tokens: tuple[str, ...]
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "src_tokens", tuple(self.src_tokens))
        object.__setattr__(self, "tgt_tokens", tuple(self.tgt_tokens))

    @classmethod
    def from_strings(cls, src: str, tgt: str, id: int = 0) -> "SentencePair":
        return cls(tuple(src.split()), tuple(tgt.split()), id)


@dataclass(frozen=True)
class AlignmentLinks:
    links: frozenset[tuple[int, int]]
    confidences: dict[tuple[int, int], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "links", frozenset(self.links))

    def __len__(self) -> int:
        return len(self.links)

    def __iter__(self):
        return iter(sorted(self.links))


def parse_pharaoh(line: str, pair: SentencePair) -> AlignmentLinks:
    """Parse ``"i-j"`` / ``"i-j/p"`` tokens and validate them against ``pair``."""
    links: set[tuple[int, int]] = set()
    conf: dict[tuple[int, int], float] = {}
    with_conf = 0
    tokens = line.split()
    for tok in tokens:
        body, sep, p = tok.partition("/")
        i_str, dash, j_str = body.partition("-")
        try:
            if not dash:
                raise ValueError
            i, j = int(i_str), int(j_str)
        except ValueError:
            raise AlignmentError(f"pair {pair.id}: malformed link {tok!r}") from None
        if i < 0 or j < 0:
            raise AlignmentError(f"pair {pair.id}: negative index in {tok!r}")
        if i >= len(pair.src_tokens):
            raise AlignmentError(
                f"pair {pair.id}: src index {i} >= {len(pair.src_tokens)}"
            )
        if j >= len(pair.tgt_tokens):
            raise AlignmentError(
                f"pair {pair.id}: tgt index {j} >= {len(pair.tgt_tokens)}"
            )
        if (i, j) in links:
            raise AlignmentError(f"pair {pair.id}: duplicate link {i}-{j}")
        links.add((i, j))
        if sep:
            try:
                value = float(p)
            except ValueError:
                raise AlignmentError(f"pair {pair.id}: bad confidence in {tok!r}") from None
            if not 0.0 <= value <= 1.0:
                raise AlignmentError(f"pair {pair.id}: confidence {value} outside [0, 1]")
            conf[(i, j)] = value
            with_conf += 1
    if with_conf and with_conf != len(tokens):
        raise AlignmentError(
            f"pair {pair.id}: confidences given on {with_conf} of {len(tokens)} links"
        )
    return AlignmentLinks(frozenset(links), conf if with_conf else None)


def format_pharaoh(links: AlignmentLinks) -> str:
    if links.confidences is None:
        return " ".join(f"{i}-{j}" for i, j in links)
    return " ".join(f"{i}-{j}/{links.confidences[(i, j)]!r}" for i, j in links)


def groups_for_target(links: AlignmentLinks, tgt_index: int) -> list[int]:
    """Source positions linked to ``tgt_index``, ascending."""
    return sorted(i for i, j in links.links if j == tgt_index)


def groups_for_source(links: AlignmentLinks, src_index: int) -> list[int]:
    """Target positions linked to ``src_index``, ascending."""
    return sorted(j for i, j in links.links if i == src_index)


def alignment_stats(pair: SentencePair, links: AlignmentLinks) -> tuple[float, float, float]:
    """Return ``(unaligned_fraction, one_to_one_fraction, mean_confidence)``.

    ``mean_confidence`` is the summed link confidence divided by the longer
    sentence length; without confidences the link count is used instead.
    """
    n_src, n_tgt = len(pair.src_tokens), len(pair.tgt_tokens)
    src_deg: dict[int, int] = {}
    tgt_deg: dict[int, int] = {}
    for i, j in links.links:
        src_deg[i] = src_deg.get(i, 0) + 1
        tgt_deg[j] = tgt_deg.get(j, 0) + 1

    total = n_src + n_tgt
    unaligned = (n_src - len(src_deg) + n_tgt - len(tgt_deg)) / total if total else 0.0

    if links.links:
        one_to_one = sum(
            1 for i, j in links.links if src_deg[i] == 1 and tgt_deg[j] == 1
        ) / len(links.links)
    else:
        one_to_one = 0.0

    longest = max(n_src, n_tgt)
    if not longest:
        mean_conf = 0.0
    elif links.confidences is not None:
        mean_conf = sum(links.confidences[l] for l in sorted(links.links)) / longest
    else:
        mean_conf = len(links.links) / longest
    return unaligned, one_to_one, mean_conf


# corpus I/O


def _read_lines(path) -> list[str]:
    with Path(path).open(encoding="utf-8") as fh:
        return [line.rstrip("\n").rstrip("\r") for line in fh]


def read_parallel(src_path, tgt_path=None) -> list[SentencePair]:
    """Read a corpus from two aligned text files, or one ``src<TAB>tgt`` file.

    Pair ids are zero-based line numbers.
    """
    if tgt_path is None:
        pairs = []
        for n, line in enumerate(_read_lines(src_path)):
            cols = line.split("\t")
            if len(cols) < 2:
                raise CorpusError(f"{src_path}:{n + 1}: expected src<TAB>tgt")
            pairs.append(SentencePair.from_strings(cols[0], cols[1], n))
        return pairs
    src = _read_lines(src_path)
    tgt = _read_lines(tgt_path)
    if len(src) != len(tgt):
        raise CorpusError(
            f"{src_path} has {len(src)} lines but {tgt_path} has {len(tgt)}"
        )
    return [SentencePair.from_strings(s, t, n) for n, (s, t) in enumerate(zip(src, tgt))]


def read_alignments(path, pairs) -> list[AlignmentLinks]:
    lines = _read_lines(path)
    pairs = list(pairs)
    if len(lines) != len(pairs):
        raise CorpusError(f"{path} has {len(lines)} lines for {len(pairs)} sentence pairs")
    out = []
    for n, (line, pair) in enumerate(zip(lines, pairs)):
        try:
            out.append(parse_pharaoh(line, pair))
        except AlignmentError as exc:
            raise AlignmentError(f"{path}:{n + 1}: {exc}") from None
    return out


def iter_aligned(pairs, alignments) -> Iterator[tuple[SentencePair, AlignmentLinks]]:
    pairs, alignments = list(pairs), list(alignments)
    if len(pairs) != len(alignments):
        raise CorpusError(f"{len(pairs)} sentence pairs but {len(alignments)} alignment lines")
    return iter(zip(pairs, alignments))
