"""Batch runner and report builder: executes a manifest under a pipeline
configuration, aggregates per-chart-type metrics, and renders report tables
plus the failure histogram."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .client import DecodeParams, ModelEndpoint
from .core import (
    CHART_TYPE_ORDER,
    ChartPotError,
    InputComposition,
    RunRecord,
    Strategy,
    load_manifest,
    persist_run,
    read_runs,
)
from .interpreter import SandboxLimits
from .metrics import (
    CorpusTooSmall,
    MetricReport,
    ScoredPair,
    cider,
    corpus_bleu,
    rouge_scores,
)
from .pipeline import ConfigError, Pipeline, PipelineConfig
from .prompts import PromptSet

TYPE_COLUMNS = tuple(ct.label for ct in CHART_TYPE_ORDER) + ("All",)


class OrphanRun(ChartPotError):
    def __init__(self, chart_id: str):
        super().__init__(f"run references unknown chart id: {chart_id!r}")
        self.chart_id = chart_id


@dataclass
class EvalReport:
    rows: dict = field(default_factory=dict)  # (group, type_label) -> MetricReport
    failure_histogram: dict = field(default_factory=dict)  # (stage, category) -> int
    runtime_ms: float = 0.0
    groups: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Batch running
# ---------------------------------------------------------------------------

def _existing_ids(out_path: Path) -> set:
    if not out_path.exists():
        return set()
    done = set()
    with open(out_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                done.add(json.loads(line)["chart_id"])
    return done


def run_batch(
    manifest: str,
    cfg: PipelineConfig,
    out: str,
    transport=None,
    clock=time.monotonic,
    sleep=time.sleep,
    image_loader=None,
    limit: Optional[int] = None,
) -> dict:
    """Stream one RunRecord per chart to `out`; charts already present are
    skipped, so re-running resumes where the previous run stopped."""
    records = load_manifest(manifest)
    if limit is not None:
        records = records[:limit]
    out_path = Path(out)
    done = _existing_ids(out_path)
    todo = [rec for rec in records if rec.id not in done]

    kwargs = {"transport": transport, "clock": clock, "sleep": sleep}
    if image_loader is not None:
        kwargs["image_loader"] = image_loader
    pipeline = Pipeline(cfg, **kwargs)

    failures = 0
    written = 0
    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        futures = [pool.submit(pipeline.run_chart, rec) for rec in todo]
        with open(out_path, "a", encoding="utf-8") as sink:
            for future in futures:  # submission order keeps output deterministic
                run = future.result()
                persist_run(run, sink)
                written += 1
                if run.failure is not None:
                    failures += 1
    return {"written": written, "skipped": len(records) - len(todo), "failures": failures}


# ---------------------------------------------------------------------------
# Report building
# ---------------------------------------------------------------------------

def _group_label(run: RunRecord) -> str:
    return f"{run.strategy.value}/{run.input_composition.value}"


def _metrics_for(pairs: list) -> MetricReport:
    if not pairs:
        return MetricReport(bleu=0.0, cider=0.0, rouge1_f1=0.0, rougeL_f1=0.0, n=0)
    bleu = corpus_bleu(pairs)
    try:
        cider_score = cider(pairs)
    except CorpusTooSmall:
        cider_score = 0.0
    r1_total = 0.0
    rl_total = 0.0
    for pair in pairs:
        r1, rl = rouge_scores(pair)
        r1_total += r1
        rl_total += rl
    n = len(pairs)
    return MetricReport(
        bleu=bleu, cider=cider_score, rouge1_f1=r1_total / n, rougeL_f1=rl_total / n, n=n
    )


def build_report(runs: str, manifest: str) -> EvalReport:
    """Group runs by chart type, compute corpus metrics per group and per All,
    and count failures by (stage, category)."""
    chart_index = {rec.id: rec for rec in load_manifest(manifest)}
    report = EvalReport()
    by_group: dict = {}
    for run in read_runs(runs):
        chart = chart_index.get(run.chart_id)
        if chart is None:
            raise OrphanRun(run.chart_id)
        label = _group_label(run)
        by_group.setdefault(label, []).append((chart, run))
        report.runtime_ms += sum(run.timings_ms.values())
        if run.failure is not None:
            key = (run.failure.stage.value, run.failure.category.value)
            report.failure_histogram[key] = report.failure_histogram.get(key, 0) + 1

    for label in sorted(by_group):
        report.groups.append(label)
        items = by_group[label]
        pairs_by_type: dict = {col: [] for col in TYPE_COLUMNS}
        for chart, run in items:
            if run.summary and chart.gold_summary:
                pair = ScoredPair(candidate=run.summary, references=[chart.gold_summary])
                pairs_by_type[chart.chart_type.label].append(pair)
                pairs_by_type["All"].append(pair)
        for col in TYPE_COLUMNS:
            report.rows[(label, col)] = _metrics_for(pairs_by_type[col])
    return report


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_METRIC_FIELDS = (
    ("BLEU", lambda m: f"{m.bleu:.4f}"),
    ("CIDEr", lambda m: f"{m.cider:.4f}"),
    ("ROUGE-1", lambda m: f"{m.rouge1_f1:.4f}"),
    ("ROUGE-L", lambda m: f"{m.rougeL_f1:.4f}"),
    ("n", lambda m: str(m.n)),
)


def render_tables(report: EvalReport, format: str = "markdown") -> str:
    if format not in ("markdown", "tsv"):
        raise ValueError(f"unknown format: {format!r}")
    header = ["Method", "Metric", *TYPE_COLUMNS]
    rows = []
    for label in report.groups:
        for metric_name, fmt in _METRIC_FIELDS:
            row = [label, metric_name]
            for col in TYPE_COLUMNS:
                row.append(fmt(report.rows[(label, col)]))
            rows.append(row)

    if format == "tsv":
        lines = ["\t".join(header)]
        lines.extend("\t".join(row) for row in rows)
        return "\n".join(lines) + "\n"

    lines = ["| " + " | ".join(header) + " |"]
    lines.append("|" + "|".join("---" for _ in header) + "|")
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    if report.failure_histogram:
        lines.append("")
        lines.append("| Stage | Category | Count |")
        lines.append("|---|---|---|")
        for (stage, category) in sorted(report.failure_histogram):
            count = report.failure_histogram[(stage, category)]
            lines.append(f"| {stage} | {category} | {count} |")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

def _endpoint_from_dict(d: dict) -> ModelEndpoint:
    return ModelEndpoint(
        base_url=d["base_url"],
        model_id=d["model_id"],
        api_key_ref=d.get("api_key_env"),
        supports_images=bool(d.get("supports_images", False)),
        request_timeout_ms=float(d.get("request_timeout_ms", 60_000)),
        max_retries=int(d.get("max_retries", 2)),
        max_concurrency=int(d.get("max_concurrency", 4)),
    )


def config_from_dict(data: dict) -> PipelineConfig:
    try:
        vlm = _endpoint_from_dict(data["vlm"])
    except KeyError as exc:
        raise ConfigError(f"config missing key: {exc}") from None
    coder = _endpoint_from_dict(data["coder"]) if "coder" in data else None
    repair = _endpoint_from_dict(data["repair"]) if "repair" in data else None
    try:
        strategy = Strategy(data.get("strategy", "PoT"))
        composition = InputComposition(data.get("composition", "DictStatsTitle"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    decode_cfg = data.get("decode", {})
    decode = DecodeParams(
        temperature=float(decode_cfg.get("temperature", 0.2)),
        repetition_penalty=float(decode_cfg.get("repetition_penalty", 1.2)),
        max_new_tokens=int(decode_cfg.get("max_new_tokens", 1024)),
        stop_sequences=tuple(decode_cfg.get("stop_sequences", ())),
        banned_substrings=tuple(decode_cfg.get("banned_substrings", ())),
    )
    limits_cfg = data.get("limits", {})
    limits = SandboxLimits(
        max_steps=int(limits_cfg.get("max_steps", 1_000_000)),
        max_depth=int(limits_cfg.get("max_depth", 64)),
        max_nodes=int(limits_cfg.get("max_nodes", 200_000)),
        wall_timeout_ms=float(limits_cfg.get("wall_timeout_ms", 2_000)),
    )
    prompts = PromptSet.from_overrides(data.get("prompt_overrides", {}))
    cfg = PipelineConfig(
        vlm_endpoint=vlm,
        coder_endpoint=coder,
        repair_endpoint=repair,
        strategy=strategy,
        input_composition=composition,
        decode=decode,
        limits=limits,
        max_code_retries=int(data.get("max_code_retries", 1)),
        prompts=prompts,
        workers=int(data.get("workers", 4)),
    )
    cfg.validate()
    return cfg


def load_config(path: str) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(data)
