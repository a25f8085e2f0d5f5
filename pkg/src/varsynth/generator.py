"""Synthetic variant-language data generation.

For each target-language (E) word of an F-E sentence pair the generator
finds E neighbors covered by the seed lexicon, fits a local projection from
E space to F' space on those anchors, projects the word, collects the
nearest F' words and picks the one most similar (in the mixed F/F' space)
to the aligned F words. The chosen F' word replaces the aligned F span.
"""
from __future__ import annotations

import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import lep
from .alignment import AlignmentLinks, CorpusError, SentencePair, groups_for_target
from .ann import KnnResult, MrptIndex, exact_knn
from .embeddings import EmbeddingTable, compose_additive, cosine_similarity
from .lexicon import Lexicon

logger = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


class Outcome(str, Enum):
    SUBSTITUTED = "substituted"
    SKIPPED_STOPWORD = "skipped_stopword"
    SKIPPED_NAMED_ENTITY = "skipped_named_entity"
    SKIPPED_UNALIGNED = "skipped_unaligned"
    SKIPPED_NO_COVERAGE = "skipped_no_coverage"
    SKIPPED_NO_CANDIDATES = "skipped_no_candidates"


@dataclass(frozen=True)
class GenerationConfig:
    k: int = 200
    n: int = 3
    m: int = 5
    max_retries: int = 1
    anchor_cap: int = 40
    stopwords: frozenset = frozenset()
    named_entities: frozenset = frozenset()
    seed: int = 0
    ridge: float | None = None  # None: lep.default_ridge
    phrase_delimiter: str | None = None  # split chosen F' tokens into several words

    def __post_init__(self):
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))
        object.__setattr__(self, "named_entities", frozenset(self.named_entities))
        if not self.k >= self.m >= 1:
            raise ConfigurationError(f"need k >= m >= 1 (k={self.k}, m={self.m})")
        if self.n < 1:
            raise ConfigurationError("n must be at least 1")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be nonnegative")
        if self.anchor_cap < 1:
            raise ConfigurationError("anchor_cap must be at least 1")
        if self.ridge is not None and self.ridge < 0:
            raise ConfigurationError("ridge must be nonnegative")


class EmbeddingSpace:
    """An embedding table plus the search used on it (MRPT when indexed, else exact)."""

    def __init__(self, table: EmbeddingTable, index: MrptIndex | None = None, votes: int = 2):
        if index is not None:
            if index.table is not table:
                raise ConfigurationError("index was built over a different table")
            if not 1 <= votes <= index.n_trees:
                raise ConfigurationError(f"votes={votes} must lie in [1, {index.n_trees}]")
        self.table = table
        self.index = index
        self.votes = votes

    def knn(self, q, k: int) -> KnnResult:
        if self.index is None:
            return exact_knn(self.table, q, k)
        return self.index.query(q, k, self.votes)


@dataclass(frozen=True)
class Spaces:
    e: EmbeddingSpace
    fprime: EmbeddingSpace
    mixed: EmbeddingTable

    def __post_init__(self):
        dims = {"E": self.e.table.dim, "Fprime": self.fprime.table.dim, "Mixed": self.mixed.dim}
        if len(set(dims.values())) != 1:
            raise ConfigurationError(f"embedding spaces disagree on dimension: {dims}")


@dataclass(frozen=True)
class SubstitutionRecord:
    tgt_index: int
    src_indices: tuple[int, ...]
    outcome: Outcome
    chosen: tuple[str, ...] | None = None
    candidate_scores: tuple[tuple[str, float], ...] = ()
    e_word: str = ""
    anchors: int = 0
    demoted: str | None = None  # why a substitution was dropped while splicing

    def __post_init__(self):
        if (self.chosen is not None) != (self.outcome is Outcome.SUBSTITUTED):
            raise ValueError("chosen must be set exactly when the outcome is substituted")


@dataclass(frozen=True)
class ThreeWayRecord:
    f_sentence: tuple[str, ...]
    f_prime_sentence: tuple[str, ...]
    e_sentence: tuple[str, ...]
    records: tuple[SubstitutionRecord, ...]
    id: int = 0


def _covered_neighbors(words: Sequence[str], lex: Lexicon, fprime: EmbeddingTable):
    """Neighbors with a lexicon translation fully present in F' space, in neighbor order."""
    out = []
    for w in words:
        for seq, _ in lex.lookup(w):
            if all(t in fprime for t in seq):
                out.append((w, seq))
                break
    return out


def substitute_word(
    e_index: int,
    pair: SentencePair,
    links: AlignmentLinks,
    spaces: Spaces,
    lex: Lexicon,
    cfg: GenerationConfig,
) -> SubstitutionRecord:
    """Decide the F' replacement for the F words aligned to E token ``e_index``."""
    e_word = pair.tgt_tokens[e_index]
    group = tuple(groups_for_target(links, e_index))

    def record(outcome, **kw):
        return SubstitutionRecord(e_index, group, outcome, e_word=e_word, **kw)

    if e_word in cfg.stopwords:
        return record(Outcome.SKIPPED_STOPWORD)
    if e_word in cfg.named_entities or any(
        pair.src_tokens[i] in cfg.named_entities for i in group
    ):
        return record(Outcome.SKIPPED_NAMED_ENTITY)
    if not group:
        return record(Outcome.SKIPPED_UNALIGNED)
    e_vec = spaces.e.table.get(e_word)
    if e_vec is None:
        # no E vector means no neighborhood to cover
        return record(Outcome.SKIPPED_NO_COVERAGE)

    k = cfg.k
    for _ in range(cfg.max_retries + 1):
        result = spaces.e.knn(e_vec, k)
        covered = _covered_neighbors(result.words, lex, spaces.fprime.table)
        if len(covered) >= cfg.m or result.exhausted:
            break
        k *= 2
    if len(covered) < cfg.m:
        return record(Outcome.SKIPPED_NO_COVERAGE)

    anchors = covered[: cfg.anchor_cap]
    source = np.vstack([spaces.e.table[w] for w, _ in anchors])
    target = np.vstack([compose_additive(seq, spaces.fprime.table) for _, seq in anchors])
    try:
        proj = lep.fit(lep.AnchorPairs(source, target), cfg.ridge)
    except lep.SingularSystemError as exc:
        logger.debug("pair %d, %r: %s", pair.id, e_word, exc)
        return record(Outcome.SKIPPED_NO_CANDIDATES, anchors=len(anchors))
    located = lep.project(e_vec, proj)

    candidates = spaces.fprime.knn(located, cfg.n).words
    if not candidates:
        return record(Outcome.SKIPPED_NO_CANDIDATES, anchors=len(anchors))

    f_words = [pair.src_tokens[i] for i in group if pair.src_tokens[i] in spaces.mixed]
    if not f_words:
        return record(Outcome.SKIPPED_NO_CANDIDATES, anchors=len(anchors))
    f_vec = compose_additive(f_words, spaces.mixed)
    if not np.any(f_vec):
        return record(Outcome.SKIPPED_NO_CANDIDATES, anchors=len(anchors))

    scores = []
    for c in candidates:
        vec = spaces.mixed.get(c)
        if vec is None or not np.any(vec):
            scores.append(float("-inf"))
        else:
            scores.append(cosine_similarity(vec, f_vec))
    # stable: equal scores keep F'-distance order
    order = sorted(range(len(candidates)), key=lambda i: -scores[i])
    ranked = tuple((candidates[i], scores[i]) for i in order)
    best = ranked[0][0]
    chosen = tuple(best.split(cfg.phrase_delimiter)) if cfg.phrase_delimiter else (best,)
    chosen = tuple(t for t in chosen if t) or (best,)
    return record(Outcome.SUBSTITUTED, chosen=chosen, candidate_scores=ranked, anchors=len(anchors))


def _demote(rec: SubstitutionRecord, reason: str) -> SubstitutionRecord:
    return dataclasses.replace(
        rec, outcome=Outcome.SKIPPED_NO_CANDIDATES, chosen=None, demoted=reason
    )


def splice(f_tokens: Sequence[str], records: Sequence[SubstitutionRecord]):
    """Apply substituted records to ``f_tokens``.

    Returns the F' token tuple and the records, where substitutions over a
    non-contiguous span or over positions already replaced by an earlier
    record are demoted.
    """
    consumed: set[int] = set()
    spans: dict[int, tuple[int, tuple[str, ...]]] = {}
    final = []
    for rec in records:
        if rec.outcome is Outcome.SUBSTITUTED:
            idx = sorted(rec.src_indices)
            if not idx or idx[-1] - idx[0] != len(idx) - 1:
                rec = _demote(rec, "noncontiguous")
            elif consumed.intersection(idx):
                rec = _demote(rec, "overlap")
            else:
                consumed.update(idx)
                spans[idx[0]] = (idx[-1], rec.chosen)
        final.append(rec)

    out: list[str] = []
    i = 0
    while i < len(f_tokens):
        if i in spans:
            end, chosen = spans[i]
            out.extend(chosen)
            i = end + 1
        else:
            out.append(f_tokens[i])
            i += 1
    return tuple(out), tuple(final)


def generate_sentence(
    pair: SentencePair,
    links: AlignmentLinks,
    spaces: Spaces,
    lex: Lexicon,
    cfg: GenerationConfig,
) -> ThreeWayRecord:
    records = [
        substitute_word(j, pair, links, spaces, lex, cfg) for j in range(len(pair.tgt_tokens))
    ]
    f_prime, records = splice(pair.src_tokens, records)
    return ThreeWayRecord(pair.src_tokens, f_prime, pair.tgt_tokens, records, pair.id)


# corpus level


@dataclass
class GenerationReport:
    sentences: int = 0
    records: int = 0
    outcomes: dict = field(default_factory=lambda: {o.value: 0 for o in Outcome})
    wall_time: float = 0.0

    @property
    def substituted(self) -> int:
        return self.outcomes[Outcome.SUBSTITUTED.value]

    @property
    def substitution_rate(self) -> float:
        return self.substituted / self.records if self.records else 0.0

    def add(self, row: ThreeWayRecord) -> None:
        self.sentences += 1
        for rec in row.records:
            self.records += 1
            self.outcomes[rec.outcome.value] += 1

    def to_dict(self) -> dict:
        return {
            "sentences": self.sentences,
            "records": self.records,
            "outcomes": dict(self.outcomes),
            "substitution_rate": self.substitution_rate,
            "wall_time": self.wall_time,
        }

    def format(self) -> str:
        rows = [("sentences", str(self.sentences)), ("records", str(self.records))]
        rows += [(name, str(count)) for name, count in self.outcomes.items()]
        rows += [
            ("substitution_rate", f"{self.substitution_rate:.4f}"),
            ("wall_time_s", f"{self.wall_time:.2f}"),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def format_record(sentence_id: int, rec: SubstitutionRecord) -> str:
    """One tab-separated ``key=value`` line of the records side file."""
    fields = [
        f"sent={sentence_id}",
        f"tgt={rec.tgt_index}",
        f"e={rec.e_word}",
        f"src={','.join(map(str, rec.src_indices))}",
        f"outcome={rec.outcome.value}",
        f"chosen={' '.join(rec.chosen) if rec.chosen else ''}",
        f"anchors={rec.anchors}",
        "candidates=" + ",".join(f"{w}:{s:.6f}" for w, s in rec.candidate_scores),
    ]
    if rec.demoted:
        fields.append(f"demoted={rec.demoted}")
    return "\t".join(fields)


def parse_record_line(line: str) -> dict[str, str]:
    return dict(part.split("=", 1) for part in line.rstrip("\n").split("\t"))


def format_three_way(row: ThreeWayRecord) -> str:
    return "\t".join(
        " ".join(toks) for toks in (row.f_sentence, row.f_prime_sentence, row.e_sentence)
    )


def records_path_for(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".records")


def generate_corpus(
    corpus: Iterable[SentencePair],
    alignments: Iterable[AlignmentLinks],
    spaces: Spaces,
    lex: Lexicon,
    cfg: GenerationConfig,
    out,
    records_out=None,
    workers: int = 1,
) -> GenerationReport:
    """Generate the three-way corpus into ``out`` (TSV) and a records side file.

    Sentences are processed independently; with ``workers > 1`` they run on a
    thread pool and are written back in input order, so output bytes do not
    depend on the worker count.
    """
    corpus, alignments = list(corpus), list(alignments)
    if len(corpus) != len(alignments):
        raise CorpusError(
            f"corpus has {len(corpus)} sentence pairs but {len(alignments)} alignment lines"
        )
    if workers < 1:
        raise ConfigurationError("workers must be at least 1")
    out = Path(out)
    records_out = records_path_for(out) if records_out is None else Path(records_out)
    report = GenerationReport()
    start = time.perf_counter()

    def work(item):
        pair, links = item
        return generate_sentence(pair, links, spaces, lex, cfg)

    items = list(zip(corpus, alignments))
    with out.open("w", encoding="utf-8") as tsv, records_out.open("w", encoding="utf-8") as side:
        if workers == 1:
            rows = map(work, items)
            _write_rows(rows, tsv, side, report)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                _write_rows(pool.map(work, items), tsv, side, report)
    report.wall_time = time.perf_counter() - start
    return report


def _write_rows(rows, tsv, side, report: GenerationReport) -> None:
    for row in rows:
        tsv.write(format_three_way(row) + "\n")
        for rec in row.records:
            side.write(format_record(row.id, rec) + "\n")
        report.add(row)


def read_word_list(path) -> frozenset:
    """One token per line; blank lines and ``#`` comments are ignored."""
    words = set()
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                words.add(line)
    return frozenset(words)
