"""Command-line entry point: ``tunisent {stats,filter,train,evaluate,predict,report,translit}``.

Exit codes: 0 success, 2 input/schema error, 3 environment/provider error,
1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import corpus
from .corpus import CorpusError, SplitSpec
from .embeddings.contextual import ProviderUnavailable
from .embeddings.static import EmbeddingError
from .models import InvalidConfig
from .textproc import load_translit_table, translit_candidates

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_ENV = 0, 1, 2, 3

log = logging.getLogger("tunisent")


def _echo_config(target: Path, args: argparse.Namespace, **extra) -> None:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    config.update(extra)
    target.write_text(json.dumps(config, indent=2, ensure_ascii=False), encoding="utf-8")


def cmd_stats(args) -> int:
    dataset = corpus.load_dataset(args.path, args.format)
    stats = corpus.compute_stats(dataset, lowercase=args.lowercase)
    print(json.dumps(stats.to_dict(), indent=2))
    return EXIT_OK


def cmd_filter(args) -> int:
    dataset = corpus.load_dataset(args.input, args.format, allow_empty=True)
    kept = corpus.filter_romanized(dataset)
    out_format = args.out_format or args.format or corpus.detect_format(args.output)
    corpus.write_dataset(kept, args.output, out_format)
    log.info("kept %d of %d comments", len(kept), len(dataset))
    _echo_config(Path(str(args.output) + ".config.json"), args, kept=len(kept), total=len(dataset))
    return EXIT_OK


def _spec_from_args(args):
    from .training import TrainSpec

    spec = TrainSpec.from_file(args.config) if args.config else TrainSpec()
    overrides = {
        "seed": args.seed,
        "split": args.split,
        "split_seed": args.split_seed,
        "embedding": args.embedding,
        "classifier": args.classifier,
        "max_len": args.max_len,
        "dataset_path": args.dataset,
        "dataset_format": args.format,
        "epochs": args.epochs,
        "dev_fraction": args.dev_fraction,
        "lowercase": True if args.lowercase else None,
    }
    spec = replace(spec, **{k: v for k, v in overrides.items() if v is not None})
    if spec.dataset_path and args.config and not Path(spec.dataset_path).is_absolute():
        candidate = Path(args.config).parent / spec.dataset_path
        if candidate.exists():
            spec = replace(spec, dataset_path=str(candidate))
    return spec.resolved()


def cmd_train(args) -> int:
    from .training import run_experiment

    spec = _spec_from_args(args)
    out = Path(args.out)
    report = run_experiment(spec, out)
    summary = {k: getattr(report, k) for k in ("accuracy", "f1_micro", "f1_macro")}
    print(json.dumps({"dataset": report.dataset, **summary}, indent=2))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .training import SentimentModel, evaluate

    model = SentimentModel.load(args.checkpoint)
    dataset = corpus.load_dataset(args.dataset, args.format)
    spec = model.spec
    split_seed = args.split_seed if args.split_seed is not None else (spec.split_seed if spec else corpus.DEFAULT_SPLIT_SEED)
    split = args.split or (spec.split if spec else "fraction:0.2")
    dataset = corpus.split_dataset(dataset, SplitSpec.parse(split, split_seed))
    if spec is not None:
        spec = replace(spec, split=split, split_seed=split_seed)
    report = evaluate(model, dataset, spec)
    text = json.dumps(report.to_dict(), indent=2, ensure_ascii=False)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _echo_config(Path(str(args.out) + ".config.json"), args)
    else:
        print(text)
    return EXIT_OK


def cmd_predict(args) -> int:
    from .training import SentimentModel

    model = SentimentModel.load(args.checkpoint)
    dataset = corpus.load_dataset(args.input, args.format, require_labels=False, allow_empty=True)
    texts = [c.text for c in dataset.comments]
    probs = model.predict_proba(texts)
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["id", "label", "p_negative", "p_positive"])
        for c, (p_neg, p_pos) in zip(dataset.comments, probs):
            label = corpus.Label.POSITIVE if p_pos > p_neg else corpus.Label.NEGATIVE
            writer.writerow([c.id, label.value, f"{p_neg:.6f}", f"{p_pos:.6f}"])
    finally:
        if args.out:
            out.close()
    if args.out:
        _echo_config(Path(str(args.out) + ".config.json"), args)
    return EXIT_OK


def cmd_report(args) -> int:
    from .training import collect_reports, write_aggregate

    directory = Path(args.reports_dir)
    if not directory.is_dir():
        raise CorpusError(f"reports directory not found: {directory}")
    rows = collect_reports(directory)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_aggregate(rows, fh)
        _echo_config(Path(str(args.out) + ".config.json"), args, n_reports=len(rows))
    else:
        write_aggregate(rows, sys.stdout)
    return EXIT_OK


def cmd_translit(args) -> int:
    table = load_translit_table(args.table)
    for token in args.tokens:
        print(token, " ".join(sorted(translit_candidates(token, table))), sep="\t")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tunisent", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = dict(choices=corpus.FORMATS, default=None, help="dataset format (default: from file suffix)")

    p = sub.add_parser("stats", help="corpus statistics as JSON")
    p.add_argument("path")
    p.add_argument("--format", **fmt)
    p.add_argument("--lowercase", action="store_true", help="count unique words case-insensitively")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("filter", help="keep only comments without Arabic-script characters")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--format", **fmt)
    p.add_argument("--out-format", choices=corpus.FORMATS, default=None)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("train", help="train and evaluate one grid cell")
    p.add_argument("config", nargs="?", help="TOML or JSON file with TrainSpec fields")
    p.add_argument("--dataset", help="dataset file (overrides dataset_path)")
    p.add_argument("--format", **fmt)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", help="preset-tunizi | preset-tsac-tunizi | fraction:F | counts:TRAIN,TEST")
    p.add_argument("--split-seed", type=int)
    p.add_argument("--embedding", choices=("word2vec_self", "pretrained_static", "contextual"))
    p.add_argument("--classifier", choices=("cnn", "bilstm"))
    p.add_argument("--max-len", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--dev-fraction", type=float, help="hold out this share of Train for per-epoch scoring")
    p.add_argument("--lowercase", action="store_true", help="lowercase text before featurizing")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a dataset's Test split")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--format", **fmt)
    p.add_argument("--split")
    p.add_argument("--split-seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="per-comment polarity and probabilities as CSV")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("--format", **fmt)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="aggregate report JSONs into a results table")
    p.add_argument("reports_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("translit", help="map TUNIZI numerals/multigraphs to Arabic letters")
    p.add_argument("tokens", nargs="+")
    p.add_argument("--table", help="alternative character table (TSV)")
    p.set_defaults(func=cmd_translit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ProviderUnavailable as exc:
        print(f"error: ProviderUnavailable: {exc}", file=sys.stderr)
        return EXIT_ENV
    except (CorpusError, EmbeddingError, InvalidConfig, FileNotFoundError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
