"""Command-line interface.

Every subcommand reads the shipped defaults, then an optional ``--config``
file, then ``--set key=value`` pairs and dedicated flags (flags win).
Exit status: 0 success, 1 invalid usage or configuration, 2 runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import alignment, corpus_filter, lexicon
from .ann import IndexFormatError, MrptIndex, exact_knn
from .config import Config, ConfigError
from .embeddings import EmbeddingFormatError, EmbeddingTable, load_word2vec_text
from .generator import (
    ConfigurationError,
    EmbeddingSpace,
    GenerationConfig,
    Spaces,
    generate_corpus,
    read_word_list,
    records_path_for,
)

logger = logging.getLogger("varsynth")

EXTRA_KEYS = {
    "embeddings.e", "embeddings.fprime", "embeddings.mixed", "embeddings.joint",
    "index.embeddings", "index.file", "index.e", "index.fprime",
    "corpus.src", "corpus.tgt", "corpus.tsv", "corpus.align",
    "seed.src", "seed.tgt", "seed.tsv", "seed.align",
    "lexicon.path", "lexicon.out",
    "lists.stopwords", "lists.named_entities",
    "filter.examples", "filter.tree", "filter.out_dir",
    "output.tsv", "output.records", "output.report_json",
    "knn.k", "knn.exact",
}


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _key_flag(parser, flag, key, **kw):
    parser.add_argument(flag, dest=key, default=None, metavar=kw.pop("metavar", "VALUE"), **kw)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="varsynth",
        description="Generate synthetic parallel data for a low-resource language variant.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any setting")
        p.add_argument("--dry-run", action="store_true",
                       help="validate and print the resolved plan without writing outputs")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = command("build-index", "build a random projection forest over embeddings")
    _key_flag(p, "--embeddings", "index.embeddings", metavar="PATH")
    _key_flag(p, "--out", "index.file", metavar="PATH")
    _key_flag(p, "--trees", "mrpt.trees")
    _key_flag(p, "--leaf-size", "mrpt.leaf_size")
    _key_flag(p, "--seed", "mrpt.seed")

    p = command("knn", "print the nearest neighbors of a word")
    p.add_argument("word")
    _key_flag(p, "--embeddings", "index.embeddings", metavar="PATH")
    _key_flag(p, "--index", "index.file", metavar="PATH")
    _key_flag(p, "--k", "knn.k")
    _key_flag(p, "--votes", "mrpt.votes")
    p.add_argument("--exact", dest="knn.exact", action="store_const", const="1", default=None)

    p = command("induce-lexicon", "induce a seed lexicon from a word-aligned corpus")
    _key_flag(p, "--seed-src", "seed.src", metavar="PATH")
    _key_flag(p, "--seed-tgt", "seed.tgt", metavar="PATH")
    _key_flag(p, "--seed-tsv", "seed.tsv", metavar="PATH")
    _key_flag(p, "--seed-align", "seed.align", metavar="PATH")
    _key_flag(p, "--min-count", "lexicon.min_count")
    _key_flag(p, "--e-side", "lexicon.e_side", choices=["src", "tgt"])
    _key_flag(p, "--out", "lexicon.out", metavar="PATH")

    p = command("train-filter", "train the noisy-pair decision tree")
    _key_flag(p, "--examples", "filter.examples", metavar="PATH")
    _key_flag(p, "--out", "filter.tree", metavar="PATH")
    _key_flag(p, "--min-samples-split", "filter.min_samples_split")
    _key_flag(p, "--min-samples-leaf", "filter.min_samples_leaf")
    _key_flag(p, "--max-depth", "filter.max_depth")

    p = command("filter", "drop noisy sentence pairs")
    _corpus_flags(p)
    _key_flag(p, "--tree", "filter.tree", metavar="PATH")
    _key_flag(p, "--out-dir", "filter.out_dir", metavar="DIR")

    p = command("generate", "generate the three-way synthetic corpus")
    _corpus_flags(p)
    _key_flag(p, "--e-emb", "embeddings.e", metavar="PATH")
    _key_flag(p, "--fprime-emb", "embeddings.fprime", metavar="PATH")
    _key_flag(p, "--mixed-emb", "embeddings.mixed", metavar="PATH")
    _key_flag(p, "--e-index", "index.e", metavar="PATH")
    _key_flag(p, "--fprime-index", "index.fprime", metavar="PATH")
    _key_flag(p, "--lexicon", "lexicon.path", metavar="PATH")
    _key_flag(p, "--stopwords", "lists.stopwords", metavar="PATH")
    _key_flag(p, "--named-entities", "lists.named_entities", metavar="PATH")
    _key_flag(p, "--out", "output.tsv", metavar="PATH")
    _key_flag(p, "--records", "output.records", metavar="PATH")
    _key_flag(p, "--report-json", "output.report_json", metavar="PATH")
    for flag in ("k", "n", "m", "max-retries", "anchor-cap", "workers", "seed"):
        _key_flag(p, f"--{flag}", f"gen.{flag.replace('-', '_')}")
    _key_flag(p, "--search", "gen.search", choices=["mrpt", "exact"])
    _key_flag(p, "--trees", "mrpt.trees")
    _key_flag(p, "--leaf-size", "mrpt.leaf_size")
    _key_flag(p, "--votes", "mrpt.votes")
    return parser


def _corpus_flags(p):
    _key_flag(p, "--corpus-src", "corpus.src", metavar="PATH")
    _key_flag(p, "--corpus-tgt", "corpus.tgt", metavar="PATH")
    _key_flag(p, "--corpus-tsv", "corpus.tsv", metavar="PATH")
    _key_flag(p, "--align", "corpus.align", metavar="PATH")


def _resolve(args) -> Config:
    overrides = {}
    for item in args.set:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    for key, value in vars(args).items():
        if "." in key and value is not None:
            overrides[key] = value
    return Config.resolve(args.config, overrides, known_keys=EXTRA_KEYS)


def _plan(args, cfg: Config, outputs) -> int:
    print(f"command: {args.command}")
    print(cfg.dump())
    for label, path in outputs:
        print(f"would write {label}: {path}")
    return 0


def _load_table(path, label: str, cfg: Config) -> EmbeddingTable:
    table = load_word2vec_text(path, space_label=label)
    expected = cfg.get_int("embeddings.expected_dim")
    if expected and table.dim != expected:
        logger.warning("%s: dimension %d differs from expected %d", path, table.dim, expected)
    logger.info("loaded %s: %d words, dim %d", path, len(table), table.dim)
    return table


def _read_corpus(cfg: Config, prefix: str):
    tsv = cfg.get_path(f"{prefix}.tsv", required=False)
    if tsv is not None:
        return alignment.read_parallel(tsv)
    src = cfg.get_path(f"{prefix}.src")
    tgt = cfg.get_path(f"{prefix}.tgt")
    return alignment.read_parallel(src, tgt)


def _check_corpus_paths(cfg: Config, prefix: str):
    if cfg.raw(f"{prefix}.tsv") is None:
        cfg.get_path(f"{prefix}.src")
        cfg.get_path(f"{prefix}.tgt")
    else:
        cfg.get_path(f"{prefix}.tsv")
    cfg.get_path(f"{prefix}.align")


def _mrpt_params(cfg: Config):
    trees = cfg.get_int("mrpt.trees", 1)
    votes = cfg.get_int("mrpt.votes", 1)
    if votes > trees:
        raise ConfigError(f"mrpt.votes={votes} exceeds mrpt.trees={trees}")
    return trees, cfg.get_int("mrpt.leaf_size", 1), cfg.get_int("mrpt.seed"), votes


def cmd_build_index(args, cfg: Config) -> int:
    emb = cfg.get_path("index.embeddings")
    out = Path(cfg.require("index.file"))
    trees, leaf_size, seed, _ = _mrpt_params(cfg)
    if args.dry_run:
        return _plan(args, cfg, [("index", out)])
    table = _load_table(emb, "index", cfg)
    index = MrptIndex.build(table, trees, leaf_size, seed)
    index.save(out)
    stats = index.stats()
    print(f"points      {stats['points']}")
    print(f"trees       {stats['trees']}")
    print(f"leaves      {stats['leaves']} (largest {stats['max_leaf']})")
    print("depths      " + " ".join(f"{d}:{c}" for d, c in stats["depth_histogram"].items()))
    print(f"sha256      {hashlib.sha256(out.read_bytes()).hexdigest()}")
    return 0


def cmd_knn(args, cfg: Config) -> int:
    emb = cfg.get_path("index.embeddings")
    k = cfg.get_int("knn.k", 1) or 10
    exact = cfg.raw("knn.exact") not in (None, "0", "false", "no")
    index_path = None if exact else cfg.get_path("index.file", required=False)
    votes = cfg.get_int("mrpt.votes", 1)
    if args.dry_run:
        return _plan(args, cfg, [])
    table = _load_table(emb, "knn", cfg)
    if args.word not in table:
        raise ConfigError(f"word {args.word!r} is not in {emb}")
    q = table[args.word]
    if index_path is None:
        result = exact_knn(table, q, k)
    else:
        index = MrptIndex.load(index_path, table)
        if votes > index.n_trees:
            raise ConfigError(f"mrpt.votes={votes} exceeds the index's {index.n_trees} trees")
        result = index.query(q, k, votes)
    sys.stdout.write(format_knn(result))
    return 0


def format_knn(result) -> str:
    return "".join(f"{w}\t{d!r}\n" for w, d in result.neighbors)


def cmd_induce_lexicon(args, cfg: Config) -> int:
    _check_corpus_paths(cfg, "seed")
    out = Path(cfg.require("lexicon.out"))
    min_count = cfg.get_int("lexicon.min_count", 1)
    e_side = cfg.get_str("lexicon.e_side", "tgt")
    if e_side not in ("src", "tgt"):
        raise ConfigError(f"lexicon.e_side must be src or tgt, got {e_side!r}")
    if args.dry_run:
        return _plan(args, cfg, [("lexicon", out)])
    pairs = _read_corpus(cfg, "seed")
    links = alignment.read_alignments(cfg.get_path("seed.align"), pairs)
    lex = lexicon.induce_from_alignments(zip(pairs, links), min_count, e_side)
    lexicon.write_lexicon_tsv(lex, out)
    print(f"entries     {len(lex)}")
    return 0


def cmd_train_filter(args, cfg: Config) -> int:
    examples_path = cfg.get_path("filter.examples")
    out = Path(cfg.require("filter.tree"))
    mss = cfg.get_int("filter.min_samples_split", 2)
    msl = cfg.get_int("filter.min_samples_leaf", 1)
    depth = cfg.get_int("filter.max_depth", 0)
    if args.dry_run:
        return _plan(args, cfg, [("tree", out)])
    examples = corpus_filter.load_labeled_examples(examples_path)
    tree = corpus_filter.train_tree(examples, mss, msl, depth)
    tree.save(out)
    correct = sum(tree.classify(ex.features) == ex.label for ex in examples)
    print(f"examples    {len(examples)}")
    print(f"leaves      {tree.n_leaves}")
    print(f"depth       {tree.depth}")
    print(f"train_acc   {correct / len(examples):.4f}")
    return 0


def cmd_filter(args, cfg: Config) -> int:
    _check_corpus_paths(cfg, "corpus")
    tree_path = cfg.get_path("filter.tree")
    out_dir = Path(cfg.require("filter.out_dir"))
    outputs = [(name, out_dir / name) for name in ("kept.src", "kept.tgt", "kept.align", "report.txt")]
    if args.dry_run:
        return _plan(args, cfg, outputs)
    tree = corpus_filter.DecisionTree.load(tree_path)
    pairs = _read_corpus(cfg, "corpus")
    links = alignment.read_alignments(cfg.get_path("corpus.align"), pairs)
    kept, report = corpus_filter.filter_corpus(zip(pairs, links), tree)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "kept.src").open("w", encoding="utf-8") as fs, \
            (out_dir / "kept.tgt").open("w", encoding="utf-8") as ft, \
            (out_dir / "kept.align").open("w", encoding="utf-8") as fa:
        for pair, link in kept:
            fs.write(" ".join(pair.src_tokens) + "\n")
            ft.write(" ".join(pair.tgt_tokens) + "\n")
            fa.write(alignment.format_pharaoh(link) + "\n")
    text = report.format()
    (out_dir / "report.txt").write_text(
        text + "\nrejected_ids " + " ".join(map(str, report.rejected_ids)) + "\n", encoding="utf-8"
    )
    print(text)
    return 0


def generation_config(cfg: Config) -> GenerationConfig:
    stop = cfg.get_path("lists.stopwords", required=False)
    ne = cfg.get_path("lists.named_entities", required=False)
    return GenerationConfig(
        k=cfg.get_int("gen.k", 1),
        n=cfg.get_int("gen.n", 1),
        m=cfg.get_int("gen.m", 1),
        max_retries=cfg.get_int("gen.max_retries", 0),
        anchor_cap=cfg.get_int("gen.anchor_cap", 1),
        stopwords=read_word_list(stop) if stop else frozenset(),
        named_entities=read_word_list(ne) if ne else frozenset(),
        seed=cfg.get_int("gen.seed") or 0,
        ridge=cfg.get_float("gen.ridge", 0.0),
        phrase_delimiter=cfg.get_str("gen.phrase_delimiter"),
    )


def _space(cfg: Config, table, index_key: str, search: str) -> EmbeddingSpace:
    if search == "exact":
        return EmbeddingSpace(table)
    trees, leaf_size, seed, votes = _mrpt_params(cfg)
    index_path = cfg.get_path(index_key, required=False)
    if index_path is not None:
        index = MrptIndex.load(index_path, table)
    else:
        index = MrptIndex.build(table, trees, leaf_size, seed)
    if votes > index.n_trees:
        raise ConfigError(f"mrpt.votes={votes} exceeds the index's {index.n_trees} trees")
    return EmbeddingSpace(table, index, votes)


def cmd_generate(args, cfg: Config) -> int:
    _check_corpus_paths(cfg, "corpus")
    paths = {key: cfg.get_path(key) for key in
             ("embeddings.e", "embeddings.fprime", "embeddings.mixed", "lexicon.path")}
    search = cfg.get_str("gen.search", "mrpt")
    if search not in ("mrpt", "exact"):
        raise ConfigError(f"gen.search must be mrpt or exact, got {search!r}")
    if search == "mrpt":
        _mrpt_params(cfg)
        cfg.get_path("index.e", required=False)
        cfg.get_path("index.fprime", required=False)
    workers = cfg.get_int("gen.workers", 1)
    gen_cfg = generation_config(cfg)
    out = Path(cfg.require("output.tsv"))
    records = Path(cfg.get_str("output.records") or records_path_for(out))
    report_json = cfg.get_str("output.report_json")
    if args.dry_run:
        outputs = [("corpus", out), ("records", records)]
        if report_json:
            outputs.append(("report", report_json))
        return _plan(args, cfg, outputs)

    e_table = _load_table(paths["embeddings.e"], "E", cfg)
    f_table = _load_table(paths["embeddings.fprime"], "Fprime", cfg)
    mixed = _load_table(paths["embeddings.mixed"], "Mixed", cfg)
    spaces = Spaces(
        _space(cfg, e_table, "index.e", search),
        _space(cfg, f_table, "index.fprime", search),
        mixed,
    )
    lex = lexicon.load_lexicon_tsv(paths["lexicon.path"])
    pairs = _read_corpus(cfg, "corpus")
    links = alignment.read_alignments(cfg.get_path("corpus.align"), pairs)
    report = generate_corpus(pairs, links, spaces, lex, gen_cfg, out, records, workers=workers)
    print(report.format())
    if report_json:
        Path(report_json).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return 0


COMMANDS = {
    "build-index": cmd_build_index,
    "knn": cmd_knn,
    "induce-lexicon": cmd_induce_lexicon,
    "train-filter": cmd_train_filter,
    "filter": cmd_filter,
    "generate": cmd_generate,
}

VALIDATION_ERRORS = (ConfigError, ConfigurationError)
RUNTIME_ERRORS = (
    EmbeddingFormatError,
    IndexFormatError,
    alignment.AlignmentError,
    alignment.CorpusError,
    lexicon.LexiconFormatError,
    ValueError,
    KeyError,
    OSError,
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](args, cfg)
    except VALIDATION_ERRORS as exc:
        print(f"varsynth {args.command}: {exc}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as exc:
        print(f"varsynth {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
