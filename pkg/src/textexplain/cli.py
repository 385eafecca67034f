"""Command-line entry point: ``textexplain <subcommand> ...``.

Exit codes: 0 success, 1 partial failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import OUTPUT_DIR_ENV, ConfigError, load_config
from .evaluation import PairConfigError
from .models.external import AdapterProtocolError, check_adapter
from .synthetic import synthetic_corpus, train_test_split
from .text import CorpusFormatError, write_corpus

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

logger = logging.getLogger("textexplain")


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", type=Path, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    p.add_argument("--out", type=Path, default=None, help=f"output directory (default: config, then ${OUTPUT_DIR_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textexplain", description="Explanation quality metrics for text classifiers.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit vectorizer, embeddings and models; print test AUC")
    _config_args(p)

    p = sub.add_parser("evaluate", help="Lipschitz and infidelity for every (model, attribution) pair")
    _config_args(p)
    p.add_argument("--workers", type=int, default=1, help="worker processes; never changes numeric output")

    p = sub.add_parser("frontier", help="Pareto frontier and weighted ranking")
    p.add_argument("config", type=Path, nargs="?", default=None)
    p.add_argument("--candidates", type=Path, default=None, help="candidates CSV (model,method,auc,infidelity,lipschitz)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("perturb", help="dump n perturbations of one document as TSV")
    _config_args(p)
    p.add_argument("doc_id", help="document id, e.g. test:3")
    p.add_argument("-n", type=int, default=15)

    p = sub.add_parser("adapter-check", help="handshake an external model and validate the protocol")
    p.add_argument("adapter_command", help="command line that starts the adapter")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--dim", type=int, default=1, help="dimension of the sparse probe vector")

    p = sub.add_parser("synth", help="write a synthetic labeled corpus as train/test TSV files")
    p.add_argument("outdir", type=Path)
    p.add_argument("--n-docs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    return parser


def _load(args):
    return load_config(args.config, seed=args.seed, output_dir=args.out)


def _run(args) -> int:
    if args.command == "train":
        cfg = _load(args)
        res = pipeline.train(cfg)
        return EXIT_PARTIAL if res.partial else EXIT_OK
    if args.command == "evaluate":
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = _load(args)
        res = pipeline.evaluate(cfg, workers=args.workers)
        for k, v in sorted(res.failures.items()):
            logger.error("%s: %s", k, v)
        return EXIT_PARTIAL if res.partial else EXIT_OK
    if args.command == "frontier":
        cfg = _load(args) if args.config is not None else None
        if cfg is None and args.candidates is None:
            raise ConfigError("frontier needs a config or --candidates")
        try:
            pipeline.frontier(cfg, candidates_path=args.candidates, outdir=args.out)
        except ValueError as exc:
            logger.error("%s", exc)
            return EXIT_PARTIAL
        return EXIT_OK
    if args.command == "perturb":
        cfg = _load(args)
        try:
            lines = pipeline.perturb_dump(cfg, args.doc_id, args.n)
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
        sys.stdout.write("".join(line + "\n" for line in lines))
        return EXIT_OK
    if args.command == "adapter-check":
        try:
            report = check_adapter(args.adapter_command, timeout=args.timeout, probe_dim=args.dim)
        except (AdapterProtocolError, OSError) as exc:
            print(json.dumps({"command": args.adapter_command, "ok": False, "error": str(exc)}, indent=2))
            return EXIT_PARTIAL
        print(json.dumps(report, indent=2, sort_keys=True))
        return EXIT_OK
    if args.command == "synth":
        args.outdir.mkdir(parents=True, exist_ok=True)
        train, test = train_test_split(synthetic_corpus(args.n_docs, seed=args.seed), args.test_fraction, args.seed)
        write_corpus(args.outdir / "train.tsv", train)
        write_corpus(args.outdir / "test.tsv", test)
        print(f"wrote {len(train)} train and {len(test)} test documents to {args.outdir}")
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, PairConfigError, CorpusFormatError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
