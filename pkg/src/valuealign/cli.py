"""Command-line entry point: ``valuealign <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import RunConfig, merge_overrides
from .stats import CulturePairSets

log = logging.getLogger("valuealign")

# flag dest -> dotted RunConfig key
_FLAG_KEYS = {
    "seed": "seed", "output_dir": "output_dir", "topic_fraction": "topic_fraction",
    "docs_per_topic": "docs_per_topic", "method_name": "method_name",
    "N1": "optimizer.N1", "N2": "optimizer.N2", "M": "optimizer.M", "T": "optimizer.T",
    "beta1": "optimizer.beta1", "beta2": "optimizer.beta2", "tau1": "optimizer.tau1",
    "tau2": "optimizer.tau2", "global_entropy_sign": "optimizer.global_entropy_sign",
    "epsilon": "metric.epsilon", "gamma": "metric.gamma",
    "sinkhorn_max_iters": "metric.sinkhorn_max_iters",
    "topic_weighted": "recognizer.topic_weighted",
}


def _pairs(values: Optional[Sequence[str]]) -> dict:
    out = {}
    for v in values or []:
        if "=" not in v:
            raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {v!r}")
        k, p = v.split("=", 1)
        out[k] = p
    return out


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON or YAML run configuration")
    p.add_argument("--corpus", action="append", metavar="GROUP=PATH",
                   help="reference corpus for a group (repeatable)")
    p.add_argument("--examinee-corpus", action="append", metavar="NAME=PATH",
                   help="pre-generated examinee corpus (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--topic-fraction", dest="topic_fraction", type=float)
    p.add_argument("--docs-per-topic", dest="docs_per_topic", type=int)
    p.add_argument("--method-name", dest="method_name")
    opt = p.add_argument_group("optimizer")
    for name in ("N1", "N2", "M", "T"):
        opt.add_argument(f"--{name}", type=int)
    for name in ("beta1", "beta2", "tau1", "tau2"):
        opt.add_argument(f"--{name}", type=float)
    opt.add_argument("--global-entropy-sign", dest="global_entropy_sign", type=int, choices=(1, -1))
    met = p.add_argument_group("metric")
    met.add_argument("--epsilon", type=float)
    met.add_argument("--gamma", type=float)
    met.add_argument("--sinkhorn-max-iters", dest="sinkhorn_max_iters", type=int)
    p.add_argument("--topic-weighted", dest="topic_weighted", action="store_true", default=None)


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Flags override the config file, which overrides built-in defaults."""
    overrides = {key: getattr(args, dest, None) for dest, key in _FLAG_KEYS.items()}
    corpora = _pairs(args.corpus)
    if corpora:
        overrides["corpora"] = corpora
    examinees = _pairs(args.examinee_corpus)
    if examinees:
        overrides["examinee_corpora"] = examinees
    if args.config is not None:
        return RunConfig.load(args.config, overrides)
    data = merge_overrides({}, overrides)
    if "corpora" not in data:
        raise SystemExit("error: give --config or at least one --corpus GROUP=PATH")
    return RunConfig.from_dict(data, base_dir=str(Path.cwd()))


def _group_pairs(values: Optional[Sequence[str]]) -> list:
    out = []
    for v in values or []:
        parts = [x.strip() for x in v.split(",") if x.strip()]
        if len(parts) != 2:
            raise SystemExit(f"error: a pair is two comma-separated groups, got {v!r}")
        out.append(parts)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="valuealign",
                                     description="Value codebooks and transport-based alignment scores.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract value expressions from the reference corpora")
    _add_run_flags(p)
    p = sub.add_parser("build-codebook", help="extract, embed and optimize a value codebook")
    _add_run_flags(p)
    p.add_argument("--no-resume", action="store_true", help="ignore existing checkpoints")
    p = sub.add_parser("evaluate", help="score examinee corpora against the reference groups")
    _add_run_flags(p)
    p.add_argument("--codebook", type=Path, help="checkpoint (default: <output>/codebook/final.json)")

    p = sub.add_parser("validate", help="validity statistics over a score cube")
    p.add_argument("--cube", type=Path, required=True, help="line-delimited score records")
    p.add_argument("--similar", action="append", metavar="G1,G2", help="related group pair (repeatable)")
    p.add_argument("--distinct", action="append", metavar="G1,G2", help="distinct group pair (repeatable)")
    p.add_argument("--fisher", action="store_true", help="average correlations on the Fisher z scale")
    p.add_argument("--outcome-method", help="method whose scores are downstream outcomes")
    p.add_argument("--out", type=Path, help="directory for validity.json / validity.txt")

    p = sub.add_parser("report", help="collect every table under an output directory")
    p.add_argument("output_dir", type=Path)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    from . import pipeline

    try:
        if args.command == "validate":
            similar, distinct = _group_pairs(args.similar), _group_pairs(args.distinct)
            pairs = CulturePairSets(similar, distinct) if (similar or distinct) else None
            report = pipeline.cmd_validate(args.cube, pairs, args.fisher, args.outcome_method, args.out)
            from .report import validity_table
            sys.stdout.write(validity_table(report))
            return 0
        if args.command == "report":
            sys.stdout.write(pipeline.cmd_report(args.output_dir))
            return 0
        cfg = load_run_config(args)
        if args.command == "extract":
            for group, path in pipeline.cmd_extract(cfg).items():
                print(f"{group}\t{path}")
        elif args.command == "build-codebook":
            print(pipeline.cmd_build_codebook(cfg, resume=not args.no_resume))
        elif args.command == "evaluate":
            report = pipeline.cmd_evaluate(cfg, args.codebook)
            from .report import evaluation_table
            sys.stdout.write(evaluation_table(report.to_dict()))
        return 0
    except (ValueError, FileNotFoundError, RuntimeError, KeyError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
