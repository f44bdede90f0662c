"""Command-line entry point: ``nslab run``, ``nslab generate``, ``nslab scores``.

Exit codes: 0 success, 1 configuration or usage error, 2 I/O or parse error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from nslab.data import SynthConfig, generate_synthetic, load_features, save_features, split_dataset
from nslab.encoders import load_checkpoint
from nslab.errors import ConfigError, FeatureParseError
from nslab.evaluation import score_all
from nslab.experiment import DEFAULT_SEEDS, FORMATS, ExperimentConfig, emit_report, report_markdown, run_experiment
from nslab.relevance import SCORE_FNS
from nslab.sampling import STRATEGIES, check_strategy
from nslab.training import TrainConfig

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; route them to the config exit code
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be a comma-separated list of integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _add_data_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", metavar="PATH", help="NSLAB-JL feature file")
    src.add_argument("--synthetic-clips", type=int, metavar="N", help="generate N synthetic clips (default 200)")
    p.add_argument("--topics", type=int, help="latent topics of the synthetic generator")


def _synth_config(args) -> SynthConfig:
    cfg = SynthConfig()
    if args.synthetic_clips is not None:
        cfg = replace(cfg, n_clips=args.synthetic_clips)
    if args.topics is not None:
        cfg = replace(cfg, n_topics=args.topics)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nslab", description="Negative-sampling strategy comparison for audio-text retrieval.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="train and evaluate the strategy x seed grid")
    run.add_argument(
        "--strategy", action="append", dest="strategies", metavar="NAME",
        help=f"repeatable; default all of: {', '.join(STRATEGIES)}",
    )
    run.add_argument("--seeds", type=_seeds, default=DEFAULT_SEEDS, help="comma-separated (default 0,1,2,3,4)")
    run.add_argument("--epochs", type=int, default=TrainConfig.max_epochs)
    run.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    run.add_argument("--margin", type=float, default=TrainConfig.margin)
    run.add_argument("--score-fn", default=TrainConfig.score_fn, help=f"one of {', '.join(SCORE_FNS)}")
    run.add_argument("--lr", type=float, default=TrainConfig.lr)
    run.add_argument("--dim", type=int, default=TrainConfig.dim)
    run.add_argument("--relu", action="store_true", help="ReLU on projected audio frames")
    _add_data_args(run)
    run.add_argument("--out", metavar="DIR", help="directory for reports, logs and checkpoints")
    run.add_argument("--format", choices=(*FORMATS, "all"), default="all", help="report files written under --out")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    gen = sub.add_parser("generate", help="write a synthetic dataset as NSLAB-JL")
    gen.add_argument("--clips", type=int, default=SynthConfig.n_clips)
    gen.add_argument("--topics", type=int, default=SynthConfig.n_topics)
    gen.add_argument("--captions-per-clip", type=int, default=SynthConfig.captions_per_clip)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, metavar="PATH")

    sc = sub.add_parser("scores", help="dump a checkpoint's clip x caption scores as CSV")
    sc.add_argument("--checkpoint", required=True, metavar="PATH")
    _add_data_args(sc)
    sc.add_argument("--seed", type=int, default=0, help="data seed; also selects the split")
    sc.add_argument("--split", choices=("dev", "val", "eval", "all"), default="eval")
    sc.add_argument("--score-fn", default=None, help="defaults to the checkpoint's training score function")
    sc.add_argument("--out", metavar="PATH", help="CSV path (default stdout)")
    return parser


def _cmd_run(args) -> int:
    strategies = tuple(args.strategies) if args.strategies else STRATEGIES
    for s in strategies:
        check_strategy(s)
    tcfg = replace(
        TrainConfig(),
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        margin=args.margin,
        score_fn=args.score_fn,
        lr=args.lr,
        dim=args.dim,
        relu=args.relu,
    )
    cfg = ExperimentConfig(
        strategies=strategies,
        seeds=args.seeds,
        train=tcfg,
        synth=_synth_config(args),
        data_path=args.data,
        out_dir=args.out,
        jobs=args.jobs,
    )
    cfg.validate()
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    report = run_experiment(cfg)
    if args.out:
        fmts = FORMATS if args.format == "all" else (args.format,)
        for fmt in fmts:
            emit_report(report, fmt, Path(args.out) / FORMATS[fmt][1])
    sys.stdout.write(report_markdown(report))
    return EXIT_OK


def _cmd_generate(args) -> int:
    cfg = replace(SynthConfig(), n_clips=args.clips, n_topics=args.topics, captions_per_clip=args.captions_per_clip)
    ds = generate_synthetic(cfg, args.seed)
    save_features(ds, args.out)
    print(f"wrote {len(ds.clips)} clips and {len(ds.captions)} captions to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_scores(args) -> int:
    try:
        params, header = load_checkpoint(args.checkpoint)
    except (ValueError, KeyError, IndexError) as exc:
        print(f"nslab: I/O error: unreadable checkpoint {args.checkpoint}: {exc}", file=sys.stderr)
        return EXIT_IO
    fn = args.score_fn or header.get("config", {}).get("score_fn", "dot")
    ds = load_features(args.data) if args.data else generate_synthetic(_synth_config(args), args.seed)
    if args.split != "all":
        ds = dict(zip(("dev", "val", "eval"), split_dataset(ds, seed=args.seed)))[args.split]
    s = score_all(params, ds, fn)
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\r\n")
        writer.writerow(("clip_id", "caption_id", "paired", "score"))
        for r, clip in enumerate(ds.clips):
            for c, cap in enumerate(ds.captions):
                writer.writerow((clip.clip_id, cap.caption_id, int(cap.clip_id == clip.clip_id), repr(float(s[r, c]))))
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "generate": _cmd_generate, "scores": _cmd_scores}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (FeatureParseError, OSError) as exc:
        print(f"nslab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"nslab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
