"""Noisy sentence-pair filtering with a CART decision tree.

Pairs are described by five alignment features and classified as ``keep``
or ``reject`` by a Gini-impurity tree trained on a small labeled set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

from .alignment import AlignmentLinks, SentencePair, alignment_stats

KEEP = "keep"
REJECT = "reject"
LABELS = (KEEP, REJECT)
FEATURE_NAMES = ("src_len", "tgt_len", "unaligned_fraction", "norm_confidence", "one_to_one_fraction")
TREE_FORMAT = "varsynth-cart-1"


class FilterFeatures(NamedTuple):
    src_len: int
    tgt_len: int
    unaligned_fraction: float
    norm_confidence: float
    one_to_one_fraction: float


class LabeledExample(NamedTuple):
    features: tuple
    label: str


def extract_features(pair: SentencePair, links: AlignmentLinks) -> FilterFeatures:
    unaligned, one_to_one, conf = alignment_stats(pair, links)
    return FilterFeatures(len(pair.src_tokens), len(pair.tgt_tokens), unaligned, conf, one_to_one)


def gini(counts: Sequence[int]) -> float:
    """Gini impurity ``1 - sum(p_i^2)`` of a class-count vector."""
    total = sum(counts)
    if total <= 0:
        raise ValueError("gini impurity of an empty node is undefined")
    return 1.0 - sum((c / total) ** 2 for c in counts)


@dataclass
class Leaf:
    label: str
    counts: tuple[int, int]  # (keep, reject)


@dataclass
class Split:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"
    counts: tuple[int, int]


Node = Union[Leaf, Split]


def _majority(counts: tuple[int, int]) -> str:
    return KEEP if counts[0] > counts[1] else REJECT


def _purity_score(keep: int, reject: int) -> Fraction:
    # n * (1 - gini) for one node; summing it over children and maximizing
    # is the same as minimizing weighted child impurity.
    return Fraction(keep * keep + reject * reject, keep + reject)


def candidate_thresholds(values: Iterable[float]) -> list[float]:
    """Midpoints between consecutive distinct sorted values."""
    distinct = sorted(set(values))
    out = []
    for a, b in zip(distinct, distinct[1:]):
        a, b = float(a), float(b)
        mid = (a + b) / 2
        if not a <= mid < b:  # adjacent floats
            mid = a
        out.append(mid)
    return out


def best_split(X: np.ndarray, y: np.ndarray, min_samples_leaf: int = 1):
    """Best ``(feature, threshold, score)`` by weighted child Gini, or ``None``.

    ``y`` holds 1 for keep, 0 for reject. Ties go to the lower feature index,
    then the lower threshold. Splits that do not reduce impurity are refused.
    """
    n = len(y)
    n_keep = int(y.sum())
    parent = _purity_score(n_keep, n - n_keep)
    best = None
    for f in range(X.shape[1]):
        col = X[:, f]
        for thr in candidate_thresholds(col):
            mask = col <= thr
            nl = int(mask.sum())
            nr = n - nl
            if nl < min_samples_leaf or nr < min_samples_leaf:
                continue
            kl = int(y[mask].sum())
            kr = n_keep - kl
            score = _purity_score(kl, nl - kl) + _purity_score(kr, nr - kr)
            if score <= parent:
                continue
            if best is None or score > best[2]:
                best = (f, thr, score)
    return best


class DecisionTree:
    def __init__(self, root: Node):
        self.root = root

    def classify(self, features) -> str:
        node = self.root
        while isinstance(node, Split):
            node = node.left if features[node.feature] <= node.threshold else node.right
        return node.label

    def splits(self) -> list[Split]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Split):
                out.append(node)
                stack.extend((node.right, node.left))
        return out

    @property
    def depth(self) -> int:
        def walk(node):
            return 0 if isinstance(node, Leaf) else 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    @property
    def n_leaves(self) -> int:
        return len(self.splits()) + 1

    def to_dict(self) -> dict:
        def enc(node):
            if isinstance(node, Leaf):
                return {"label": node.label, "counts": {KEEP: node.counts[0], REJECT: node.counts[1]}}
            return {
                "feature": node.feature,
                "feature_name": FEATURE_NAMES[node.feature],
                "threshold": node.threshold,
                "counts": {KEEP: node.counts[0], REJECT: node.counts[1]},
                "left": enc(node.left),
                "right": enc(node.right),
            }
        return {"format": TREE_FORMAT, "features": list(FEATURE_NAMES), "root": enc(self.root)}

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        if data.get("format") != TREE_FORMAT:
            raise ValueError(f"unsupported tree format {data.get('format')!r}")

        def dec(obj):
            counts = (int(obj["counts"][KEEP]), int(obj["counts"][REJECT]))
            if "label" in obj:
                if obj["label"] not in LABELS:
                    raise ValueError(f"bad leaf label {obj['label']!r}")
                return Leaf(obj["label"], counts)
            feature = int(obj["feature"])
            if not 0 <= feature < len(FEATURE_NAMES):
                raise ValueError(f"feature index {feature} out of range")
            return Split(feature, float(obj["threshold"]), dec(obj["left"]), dec(obj["right"]), counts)

        return cls(dec(data["root"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DecisionTree":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_tree(
    examples: Sequence[LabeledExample],
    min_samples_split: int = 2,
    min_samples_leaf: int = 1,
    max_depth: int | None = None,
) -> DecisionTree:
    """Grow an unpruned CART tree greedily on Gini impurity."""
    if not examples:
        raise ValueError("need at least one labeled example")
    X = np.array([tuple(ex.features) for ex in examples], dtype=np.float64)
    if X.shape[1] != len(FEATURE_NAMES):
        raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {X.shape[1]}")
    for ex in examples:
        if ex.label not in LABELS:
            raise ValueError(f"unknown label {ex.label!r}")
    y = np.array([ex.label == KEEP for ex in examples], dtype=np.int64)

    def grow(idx: np.ndarray, depth: int) -> Node:
        keep = int(y[idx].sum())
        counts = (keep, len(idx) - keep)
        if (
            keep == 0
            or keep == len(idx)
            or len(idx) < min_samples_split
            or (max_depth is not None and depth >= max_depth)
        ):
            return Leaf(_majority(counts), counts)
        found = best_split(X[idx], y[idx], min_samples_leaf)
        if found is None:
            return Leaf(_majority(counts), counts)
        f, thr, _ = found
        mask = X[idx, f] <= thr
        return Split(f, thr, grow(idx[mask], depth + 1), grow(idx[~mask], depth + 1), counts)

    return DecisionTree(grow(np.arange(len(examples)), 0))


def classify(tree: DecisionTree, features) -> str:
    return tree.classify(features)


def load_labeled_examples(path) -> list[LabeledExample]:
    """Read ``src_len tgt_len unaligned conf one2one label`` rows (tab or space separated).

    A first line starting with ``src_len`` is taken as a header.
    """
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            cols = line.split()
            if not cols or (lineno == 1 and cols[0] == "src_len"):
                continue
            if len(cols) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 columns, got {len(cols)}")
            label = cols[5].lower()
            if label not in LABELS:
                raise ValueError(f"{path}:{lineno}: label must be keep or reject, got {cols[5]!r}")
            try:
                feats = FilterFeatures(int(cols[0]), int(cols[1]), *(float(c) for c in cols[2:5]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric feature") from None
            out.append(LabeledExample(feats, label))
    return out


def write_labeled_examples(examples: Iterable[LabeledExample], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("\t".join(("src_len", "tgt_len", "unaligned", "conf", "one2one", "label")) + "\n")
        for ex in examples:
            f = ex.features
            fh.write(f"{int(f[0])}\t{int(f[1])}\t{float(f[2])!r}\t{float(f[3])!r}\t{float(f[4])!r}\t{ex.label}\n")


@dataclass
class FilterReport:
    kept: int = 0
    rejected: int = 0
    rejected_ids: list[int] = field(default_factory=list)
    feature_summary: dict = field(default_factory=dict)

    def format(self) -> str:
        total = self.kept + self.rejected
        lines = [f"pairs     {total}", f"kept      {self.kept}", f"rejected  {self.rejected}"]
        for group, stats in self.feature_summary.items():
            for name, (lo, mean, hi) in stats.items():
                lines.append(f"{group:<8}  {name:<20} min={lo:.4g} mean={mean:.4g} max={hi:.4g}")
        return "\n".join(lines)


def _summarize(rows: list) -> dict:
    if not rows:
        return {}
    arr = np.array(rows, dtype=np.float64)
    return {
        name: (float(arr[:, i].min()), float(arr[:, i].mean()), float(arr[:, i].max()))
        for i, name in enumerate(FEATURE_NAMES)
    }


def filter_corpus(
    pairs: Iterable[tuple[SentencePair, AlignmentLinks]], tree: DecisionTree
) -> tuple[list[tuple[SentencePair, AlignmentLinks]], FilterReport]:
    """Split a corpus into kept pairs (input order) and a rejection report."""
    kept, kept_feats, rej_feats = [], [], []
    report = FilterReport()
    for pair, links in pairs:
        feats = extract_features(pair, links)
        if tree.classify(feats) == KEEP:
            kept.append((pair, links))
            kept_feats.append(feats)
        else:
            report.rejected_ids.append(pair.id)
            rej_feats.append(feats)
    report.kept = len(kept)
    report.rejected = len(report.rejected_ids)
    report.feature_summary = {
        group: summary
        for group, summary in (("kept", _summarize(kept_feats)), ("rejected", _summarize(rej_feats)))
        if summary
    }
    return kept, report
