"""Strategy x seed experiment grid and report writers."""
from __future__ import annotations

import csv
import io
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

from nslab.data import CLOTHO_FRACTIONS, PairedDataset, SynthConfig, generate_synthetic, load_features, split_dataset
from nslab.encoders import save_checkpoint
from nslab.errors import ConfigError
from nslab.evaluation import DIRECTIONS, evaluate_retrieval
from nslab.sampling import STRATEGIES, check_strategy
from nslab.training import TrainConfig, train

# report row order and category grouping
CATEGORIES = (
    ("Basic", ("random", "full_mini_batch")),
    ("Score-based", ("cross_semi_hard", "cross_hard", "text_hard", "text_easy", "audio_hard", "audio_easy")),
)
DISPLAY_NAMES = {
    "random": "Random NS",
    "full_mini_batch": "Full-mini-batch NS",
    "cross_semi_hard": "Cross-modality Semi-hard NS",
    "cross_hard": "Cross-modality Hard NS",
    "text_hard": "Text-based NS (hard)",
    "text_easy": "Text-based NS (easy)",
    "audio_hard": "Audio-based NS (hard)",
    "audio_easy": "Audio-based NS (easy)",
}
CSV_COLUMNS = ("strategy", "seed", "direction", "mAP", "R@5", "R@10", "R@5_query", "R@10_query", "collapsed")
JSON_KEYS = ("strategy", "seed", "direction", "map", "r_at_5", "r_at_10", "r_at_5_query", "r_at_10_query", "collapsed")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class ExperimentConfig:
    strategies: tuple[str, ...] = STRATEGIES
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    train: TrainConfig = TrainConfig()
    synth: SynthConfig = SynthConfig()
    data_path: str | None = None
    split_fractions: tuple[float, float, float] = CLOTHO_FRACTIONS
    out_dir: str | None = None
    jobs: int = 1

    def validate(self) -> None:
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for s in self.strategies:
            check_strategy(s)
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        replace(self.train, strategy=self.strategies[0]).validate()
        if self.data_path is None:
            self.synth.validate()


@dataclass(frozen=True)
class ReportRow:
    strategy: str
    seed: int | str  # "median" on aggregate rows
    direction: str
    map: float
    r_at_5: float
    r_at_10: float
    r_at_5_query: float
    r_at_10_query: float
    collapsed: bool


@dataclass
class RetrievalReport:
    rows: list[ReportRow] = field(default_factory=list)
    aggregates: list[ReportRow] = field(default_factory=list)

    def all_rows(self) -> list[ReportRow]:
        return self.rows + self.aggregates

    def aggregate(self, strategy: str, direction: str) -> ReportRow:
        for row in self.aggregates:
            if row.strategy == strategy and row.direction == direction:
                return row
        raise KeyError((strategy, direction))


@dataclass(frozen=True)
class RunResult:
    strategy: str
    seed: int
    metrics: dict  # direction -> RetrievalMetrics
    collapsed: bool
    history_jsonl: str
    best_epoch: int
    stopped_epoch: int


def load_splits(cfg: ExperimentConfig, seed: int) -> tuple[PairedDataset, PairedDataset, PairedDataset]:
    ds = load_features(cfg.data_path) if cfg.data_path else generate_synthetic(cfg.synth, seed)
    return split_dataset(ds, cfg.split_fractions, seed)


def run_single(cfg: ExperimentConfig, strategy: str, seed: int) -> RunResult:
    dev, val, ev = load_splits(cfg, seed)
    tcfg = replace(cfg.train, strategy=strategy, seed=seed)
    params, history = train(tcfg, dev, val)
    metrics = {d: evaluate_retrieval(params, ev, tcfg.score_fn, d) for d in DIRECTIONS}
    if cfg.out_dir:
        ckpt_dir = Path(cfg.out_dir) / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(params, ckpt_dir / f"{strategy}_seed{seed}.jl", seed=seed, config=asdict(tcfg))
    return RunResult(
        strategy, seed, metrics, history.collapsed, history.to_jsonl(), history.best_epoch, history.stopped_epoch
    )


def _run_job(args):
    return run_single(*args)


def _row(strategy, seed, direction, m, collapsed) -> ReportRow:
    return ReportRow(strategy, seed, direction, m.map, m.r_at[5], m.r_at[10], m.r_at_query[5], m.r_at_query[10], collapsed)


def _median_row(strategy: str, direction: str, rows: Sequence[ReportRow]) -> ReportRow:
    def med(name):
        return statistics.median(getattr(r, name) for r in rows)

    collapsed = sum(r.collapsed for r in rows) * 2 > len(rows)
    return ReportRow(
        strategy, "median", direction, med("map"), med("r_at_5"), med("r_at_10"),
        med("r_at_5_query"), med("r_at_10_query"), collapsed,
    )


def run_experiment(cfg: ExperimentConfig) -> RetrievalReport:
    """Train and evaluate every (strategy, seed); per-run logs go under ``out_dir/logs``."""
    cfg.validate()
    jobs = [(cfg, s, seed) for s in cfg.strategies for seed in cfg.seeds]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]

    if cfg.out_dir:
        log_dir = Path(cfg.out_dir) / "logs"
        log_dir.mkdir(parents=True, exist_ok=True)
        for r in results:
            (log_dir / f"{r.strategy}_seed{r.seed}.jsonl").write_text(r.history_jsonl, encoding="utf-8")

    report = RetrievalReport()
    for r in results:
        for d in DIRECTIONS:
            report.rows.append(_row(r.strategy, r.seed, d, r.metrics[d], r.collapsed))
    for s in cfg.strategies:
        for d in DIRECTIONS:
            group = [row for row in report.rows if row.strategy == s and row.direction == d]
            report.aggregates.append(_median_row(s, d, group))
    return report


# ---------------------------------------------------------------------------
# report formats


def report_csv(report: RetrievalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.all_rows():
        writer.writerow(
            [r.strategy, r.seed, r.direction, repr(r.map), repr(r.r_at_5), repr(r.r_at_10),
             repr(r.r_at_5_query), repr(r.r_at_10_query), "true" if r.collapsed else "false"]
        )
    return buf.getvalue()


def report_json(report: RetrievalReport) -> str:
    rows = [dict(zip(JSON_KEYS, (getattr(r, k) for k in JSON_KEYS))) for r in report.all_rows()]
    return json.dumps(rows, indent=2) + "\n"


def report_markdown(report: RetrievalReport) -> str:
    lines = [
        "| Category | Strategy | T2A mAP | T2A R@5 | T2A R@10 | A2T mAP | A2T R@5 | A2T R@10 |",
        "|---|---|---|---|---|---|---|---|",
    ]
    present = {r.strategy for r in report.aggregates}
    collapsed = []
    for category, members in CATEGORIES:
        first = True
        for s in members:
            if s not in present:
                continue
            t2a, a2t = report.aggregate(s, "text_to_audio"), report.aggregate(s, "audio_to_text")
            cells = [f"{x:.3f}" for x in (t2a.map, t2a.r_at_5, t2a.r_at_10, a2t.map, a2t.r_at_5, a2t.r_at_10)]
            lines.append(f"| {category if first else ''} | {DISPLAY_NAMES[s]} | " + " | ".join(cells) + " |")
            first = False
            runs = sorted({r.seed for r in report.rows if r.strategy == s and r.collapsed})
            if runs:
                collapsed.append(f"{DISPLAY_NAMES[s]} (seeds {', '.join(map(str, runs))})")
    lines.append("")
    lines.append("Medians over seeds; R@k counts the share of each query's relevant items in the top k.")
    if collapsed:
        lines.append("Feature collapse flagged: " + "; ".join(collapsed) + ".")
    return "\n".join(lines) + "\n"


FORMATS = {"csv": (report_csv, "report.csv"), "json": (report_json, "report.json"), "markdown": (report_markdown, "report.md")}


def emit_report(report: RetrievalReport, fmt: str, path: str | Path) -> Path:
    if not report.rows:
        raise ValueError("report is empty")
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")
    path = Path(path)
    path.write_text(FORMATS[fmt][0](report), encoding="utf-8", newline="")
    return path
