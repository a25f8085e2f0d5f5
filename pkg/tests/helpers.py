"""Synthetic three-language worlds and a brute-force generation oracle for tests."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from varsynth.alignment import AlignmentLinks, SentencePair, format_pharaoh, groups_for_target
from varsynth.corpus_filter import KEEP, Split
from varsynth.embeddings import EmbeddingTable, write_word2vec_text
from varsynth.lexicon import Lexicon, write_lexicon_tsv


@dataclass
class World:
    e: EmbeddingTable
    fprime: EmbeddingTable
    mixed: EmbeddingTable
    lex: Lexicon
    pairs: list
    links: list
    rotation: np.ndarray


def random_rotation(dim: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def rotation_world(
    n_vocab=1000,
    dim=16,
    coverage=0.3,
    n_sentences=50,
    sent_len=(4, 10),
    synonym_noise=0.1,
    seed=0,
) -> World:
    """E words ``e{i}``, F' words ``p{i}`` (rotated E vectors), F words ``f{i}``.

    The mixed F/F' space places ``p{i}`` next to ``f{i}``; the lexicon maps
    ``e{i} -> p{i}`` for a ``coverage`` fraction of the vocabulary. Each
    sentence pair aligns ``f{i}`` to ``e{i}`` one-to-one, in shuffled order.
    """
    rng = np.random.default_rng(seed)
    E = rng.standard_normal((n_vocab, dim))
    R = random_rotation(dim, rng)
    P = E @ R
    base = rng.standard_normal((n_vocab, dim))
    syn = base + synonym_noise * rng.standard_normal((n_vocab, dim))

    e = EmbeddingTable([f"e{i}" for i in range(n_vocab)], E, "E")
    fp = EmbeddingTable([f"p{i}" for i in range(n_vocab)], P, "Fprime")
    mixed = EmbeddingTable(
        [f"f{i}" for i in range(n_vocab)] + [f"p{i}" for i in range(n_vocab)],
        np.vstack([base, syn]),
        "Mixed",
    )
    covered = rng.choice(n_vocab, size=int(round(coverage * n_vocab)), replace=False)
    lex = Lexicon({f"e{i}": [((f"p{i}",), 1.0)] for i in sorted(covered)})

    pairs, links = [], []
    for s in range(n_sentences):
        length = int(rng.integers(*sent_len))
        ids = rng.choice(n_vocab, size=length, replace=False)
        perm = rng.permutation(length)
        tgt = [f"e{i}" for i in ids]
        src = [f"f{ids[perm[j]]}" for j in range(length)]
        # src position j holds the word of tgt position perm[j]
        pairs.append(SentencePair(tuple(src), tuple(tgt), s))
        links.append(AlignmentLinks(frozenset((j, int(perm[j])) for j in range(length))))
    return World(e, fp, mixed, lex, pairs, links, R)


def write_world(world: World, root: Path) -> dict:
    root.mkdir(parents=True, exist_ok=True)
    paths = {
        "e": root / "e.vec",
        "fprime": root / "fprime.vec",
        "mixed": root / "mixed.vec",
        "lexicon": root / "lexicon.tsv",
        "src": root / "corpus.f",
        "tgt": root / "corpus.e",
        "align": root / "corpus.align",
    }
    write_word2vec_text(world.e, paths["e"])
    write_word2vec_text(world.fprime, paths["fprime"])
    write_word2vec_text(world.mixed, paths["mixed"])
    write_lexicon_tsv(world.lex, paths["lexicon"])
    paths["src"].write_text("".join(" ".join(p.src_tokens) + "\n" for p in world.pairs))
    paths["tgt"].write_text("".join(" ".join(p.tgt_tokens) + "\n" for p in world.pairs))
    paths["align"].write_text("".join(format_pharaoh(l) + "\n" for l in world.links))
    return paths


# brute-force oracle


def _brute_neighbors(table: EmbeddingTable, q, k):
    scored = []
    for word, vec in zip(table.words, table.vectors):
        scored.append((math.sqrt(sum((a - b) ** 2 for a, b in zip(vec, q))), word))
    scored.sort()
    return [w for _, w in scored[:k]]


def _cos(u, v):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return -math.inf
    return float(u @ v) / (nu * nv)


def oracle_choice(world_e, world_fp, mixed, lex, pair, links, e_index, k, n, m,
                  max_retries=1, anchor_cap=40, neighbors=None):
    """Expected chosen F' word for one E token, or ``None`` when it is skipped.

    Independent of the library path: exhaustive distance scans, a ridge fit
    through ``lstsq`` on the augmented system, and scoring of every F' word.
    ``neighbors`` may supply a precomputed E-neighbor ranking.
    """
    e_word = pair.tgt_tokens[e_index]
    group = groups_for_target(links, e_index)
    if not group or e_word not in world_e:
        return None
    q = world_e[e_word]
    ranking = neighbors if neighbors is not None else None
    kk = k
    covered = []
    for _ in range(max_retries + 1):
        near = ranking[:kk] if ranking is not None else _brute_neighbors(world_e, q, kk)
        covered = []
        for w in near:
            for seq, _ in lex.lookup(w):
                if all(t in world_fp for t in seq):
                    covered.append((w, seq))
                    break
        if len(covered) >= m or len(near) < kk:
            break
        kk *= 2
    if len(covered) < m:
        return None
    anchors = covered[:anchor_cap]
    F = np.array([world_e[w] for w, _ in anchors])
    T = np.array([sum(world_fp[t] for t in seq) for _, seq in anchors])
    d = F.shape[1]
    ridge = 1e-6 * float(np.trace(F.T @ F)) / d
    A = np.vstack([F, math.sqrt(ridge) * np.eye(d)])
    B = np.vstack([T, np.zeros((d, T.shape[1]))])
    W = np.linalg.lstsq(A, B, rcond=None)[0]
    target = q @ W

    dists = sorted(
        (float(np.linalg.norm(vec - target)), word) for word, vec in zip(world_fp.words, world_fp.vectors)
    )
    cands = [w for _, w in dists[:n]]
    f_words = [pair.src_tokens[i] for i in group if pair.src_tokens[i] in mixed]
    if not f_words:
        return None
    f_vec = sum(mixed[w] for w in f_words)
    best, best_score = None, -math.inf
    for c in cands:
        s = _cos(mixed[c], f_vec) if c in mixed else -math.inf
        if best is None or s > best_score:
            best, best_score = c, s
    return best


# decision tree oracle


def oracle_split(rows, labels, min_samples_leaf=1):
    """Brute force over all midpoints, exact weighted Gini, lowest (feature, threshold) on ties."""
    n = len(rows)

    def frac_gini(lbls):
        k = sum(1 for l in lbls if l == KEEP)
        return 1 - Fraction(k, len(lbls)) ** 2 - Fraction(len(lbls) - k, len(lbls)) ** 2

    parent = frac_gini(labels)
    best = None
    for f in range(len(rows[0])):
        vals = sorted({r[f] for r in rows})
        for a, b in zip(vals, vals[1:]):
            thr = (a + b) / 2
            left = [l for r, l in zip(rows, labels) if r[f] <= thr]
            right = [l for r, l in zip(rows, labels) if r[f] > thr]
            if len(left) < min_samples_leaf or len(right) < min_samples_leaf:
                continue
            w = Fraction(len(left), n) * frac_gini(left) + Fraction(len(right), n) * frac_gini(right)
            if w >= parent:
                continue
            if best is None or w < best[2]:
                best = (f, thr, w)
    return best


def internal_nodes_with_data(tree, examples):
    """(split, examples reaching it) for every internal node."""
    out = []

    def walk(node, subset):
        if isinstance(node, Split):
            out.append((node, subset))
            walk(node.left, [e for e in subset if e.features[node.feature] <= node.threshold])
            walk(node.right, [e for e in subset if e.features[node.feature] > node.threshold])

    walk(tree.root, list(examples))
    return out
