"""End-to-end strategies: Direct, MCoT, PoT and PoTTemplate, with the
repair-model fallback for dictionaries and the template fallback for code."""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

from .client import (
    CODE_STAGE_PARAMS,
    DecodeParams,
    ModelEndpoint,
    assistant_prefill,
    complete,
    system,
    user,
)
from .core import (
    ChartPotError,
    ChartRecord,
    FailureCategory,
    FailureClass,
    InputComposition,
    RunRecord,
    Stage,
    StageOutput,
    StatsMap,
    Strategy,
    ValueTree,
    tree_to_literal,
)
from .interpreter import (
    DEFAULT_LIMITS,
    SandboxLimits,
    check_builtin_policy,
    check_comment_policy,
    execute,
    parse_program,
)
from .literal import parse_model_text, validate_executable
from .prompts import (
    IMG_PLACEHOLDER,
    SUMMARY_BASE,
    SUMMARY_DICT_SLOT,
    SUMMARY_STATS_SLOT,
    PromptSet,
    fill,
)
from .template import template_statistics


class MissingRepairEndpoint(ChartPotError):
    pass


class MissingSlot(ChartPotError):
    def __init__(self, composition: InputComposition, slot: str):
        super().__init__(f"composition {composition.value} requires {slot}")
        self.composition = composition
        self.slot = slot


class ConfigError(ChartPotError):
    pass


@dataclass
class PipelineConfig:
    vlm_endpoint: ModelEndpoint
    coder_endpoint: Optional[ModelEndpoint] = None
    repair_endpoint: Optional[ModelEndpoint] = None
    strategy: Strategy = Strategy.POT
    input_composition: InputComposition = InputComposition.DICT_STATS_TITLE
    decode: DecodeParams = DecodeParams()
    limits: SandboxLimits = DEFAULT_LIMITS
    max_code_retries: int = 1
    prompts: PromptSet = field(default_factory=PromptSet)
    workers: int = 4
    summary_max_new_tokens: int = 512  # dict/code stages use decode.max_new_tokens

    def summary_decode(self) -> DecodeParams:
        return replace(self.decode, max_new_tokens=self.summary_max_new_tokens)

    def validate(self) -> None:
        if self.strategy is Strategy.POT and self.coder_endpoint is None:
            raise ConfigError("strategy PoT requires a coder endpoint")
        if self.max_code_retries < 0:
            raise ConfigError("max_code_retries must be >= 0")


_NEEDS_TREE = {
    InputComposition.DICT_TITLE,
    InputComposition.DICT_STATS_TITLE,
    InputComposition.DICT_STATST_TITLE,
}
_NEEDS_STATS = {
    InputComposition.STATS_TITLE,
    InputComposition.DICT_STATS_TITLE,
    InputComposition.DICT_STATST_TITLE,
}

_SCAFFOLD_RE = re.compile(
    r"^\s*(let'?s think step by step.*?:?\s*$|step\s*\d+\b.*$|\d+\s*[.)\]:-].*$)",
    re.IGNORECASE,
)


def strip_summary_scaffold(text: str, prefill: str) -> str:
    """Drop the prefill echo and leading enumerated reasoning lines."""
    out = text
    if out.startswith(prefill):
        out = out[len(prefill):]
    elif out.lstrip().startswith(prefill.strip()):
        out = out.lstrip()[len(prefill.strip()):]
    lines = out.splitlines()
    start = 0
    for idx, line in enumerate(lines):
        if not line.strip():
            start = idx + 1
            continue
        if _SCAFFOLD_RE.match(line):
            start = idx + 1
            continue
        break
    return "\n".join(lines[start:]).strip()


def render_summary_prompt(
    prompts: PromptSet,
    composition: InputComposition,
    title: str,
    tree_literal: Optional[str],
    stats_literal: Optional[str],
) -> str:
    if composition in _NEEDS_TREE and tree_literal is None:
        raise MissingSlot(composition, "dictionary")
    if composition in _NEEDS_STATS and stats_literal is None:
        raise MissingSlot(composition, "summary_statistics")
    if composition in (InputComposition.DICT_STATS_TITLE, InputComposition.DICT_STATST_TITLE):
        return fill(
            prompts.summary_user,
            title=title,
            dictionary_str=tree_literal,
            summary_dict=stats_literal,
        )
    base = fill(SUMMARY_BASE, title=title)
    if composition is InputComposition.DICT_TITLE:
        return base + fill(SUMMARY_DICT_SLOT, dictionary_str=tree_literal)
    if composition is InputComposition.STATS_TITLE:
        return base + fill(SUMMARY_STATS_SLOT, summary_dict=stats_literal)
    return base


def load_image_bytes(image_path: str) -> bytes:
    path = Path(image_path)
    return path.read_bytes()


class Pipeline:
    """Executes the configured strategy chart by chart.

    transport / clock / sleep are injectable so scripted runs are
    deterministic byte for byte.
    """

    def __init__(
        self,
        cfg: PipelineConfig,
        transport=None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        image_loader: Callable[[str], bytes] = load_image_bytes,
    ):
        cfg.validate()
        self.cfg = cfg
        self.transport = transport
        self.clock = clock
        self.sleep = sleep
        self.image_loader = image_loader

    # -- model calls -------------------------------------------------------

    def _call(self, endpoint: ModelEndpoint, turns, params: DecodeParams):
        return complete(
            endpoint, turns, params, transport=self.transport, sleep=self.sleep
        )

    # -- stage 1: chart -> dictionary ---------------------------------------

    def stage_chart_to_dict(self, chart: ChartRecord, record: RunRecord):
        """Returns the parsed tree or None; failures land in the record."""
        cfg = self.cfg
        try:
            image = self.image_loader(chart.image_path)
        except OSError as exc:
            record.failure = FailureClass(
                Stage.DICT_GEN, FailureCategory.OTHER, f"chart image not loadable: {exc}"
            )
            record.stage_outputs[Stage.DICT_GEN.value] = StageOutput(status="failed")
            return None

        turns = [
            user(cfg.prompts.dict_gen, image=image),
            assistant_prefill(cfg.prompts.dict_prefill),
        ]
        completion = self._call(cfg.vlm_endpoint, turns, cfg.decode)
        raw = cfg.prompts.dict_prefill + completion
        record.stage_outputs[Stage.DICT_GEN.value] = StageOutput(
            raw=raw, status="ok", model_id=cfg.vlm_endpoint.model_id
        )
        record.model_ids[Stage.DICT_GEN.value] = cfg.vlm_endpoint.model_id

        outcome = parse_model_text(raw, max_depth=cfg.limits.max_depth)
        if outcome.ok:
            bad = validate_executable(outcome.result, cfg.limits)
            if bad is None:
                record.stage_outputs[Stage.DICT_PARSE.value] = StageOutput(
                    raw=raw,
                    parsed=tree_to_literal(outcome.result),
                    status="ok",
                )
                return outcome.result
            outcome.failure = bad

        if cfg.repair_endpoint is None:
            record.failure = outcome.failure
            record.stage_outputs[Stage.DICT_PARSE.value] = StageOutput(
                raw=raw, status="failed"
            )
            return None

        repair_turns = [user(cfg.prompts.dict_repair + "\n" + raw,
                             image=image if cfg.repair_endpoint.supports_images else None)]
        repaired = self._call(cfg.repair_endpoint, repair_turns, cfg.decode)
        record.model_ids[Stage.DICT_PARSE.value] = cfg.repair_endpoint.model_id
        second = parse_model_text(repaired, max_depth=cfg.limits.max_depth)
        if second.ok:
            bad = validate_executable(second.result, cfg.limits)
            if bad is None:
                record.stage_outputs[Stage.DICT_PARSE.value] = StageOutput(
                    raw=repaired,
                    parsed=tree_to_literal(second.result),
                    status="repaired",
                    model_id=cfg.repair_endpoint.model_id,
                )
                return second.result
            second.failure = bad
        record.failure = second.failure
        record.stage_outputs[Stage.DICT_PARSE.value] = StageOutput(
            raw=repaired, status="failed", model_id=cfg.repair_endpoint.model_id
        )
        return None

    # -- stage 2: dictionary -> statistics ----------------------------------

    def stage_dict_to_stats(self, tree: ValueTree, record: RunRecord):
        """Returns (stats, provenance) or (None, None); failures recorded."""
        cfg = self.cfg
        wants_template = (
            cfg.strategy is Strategy.POT_TEMPLATE
            or cfg.input_composition is InputComposition.DICT_STATST_TITLE
        )
        if wants_template:
            stats = template_statistics(tree)
            record.stage_outputs[Stage.CODE_EXEC.value] = StageOutput(
                parsed=tree_to_literal(stats), status="ok", model_id="template"
            )
            return stats, "Template"

        last_failure: Optional[FailureClass] = None
        attempts = 1 + cfg.max_code_retries
        tree_literal = tree_to_literal(tree)
        code_params = DecodeParams(
            temperature=cfg.decode.temperature,
            repetition_penalty=cfg.decode.repetition_penalty,
            max_new_tokens=cfg.decode.max_new_tokens,
            stop_sequences=cfg.decode.stop_sequences,
            banned_substrings=CODE_STAGE_PARAMS.banned_substrings,
        )
        for attempt in range(attempts):
            turns = [
                system(cfg.prompts.pot_system),
                user(fill(cfg.prompts.pot_user, chart_dict=tree_literal)),
                assistant_prefill(cfg.prompts.pot_prefill),
            ]
            completion = self._call(cfg.coder_endpoint, turns, code_params)
            source = cfg.prompts.pot_prefill + completion
            record.stage_outputs[Stage.CODE_GEN.value] = StageOutput(
                raw=source, status="ok", model_id=cfg.coder_endpoint.model_id
            )
            record.model_ids[Stage.CODE_GEN.value] = cfg.coder_endpoint.model_id

            if completion.flagged:
                last_failure = FailureClass(
                    Stage.CODE_GEN,
                    FailureCategory.EMPTY_OUTPUT,
                    "banned substring dominates generation",
                )
                continue
            bad = check_comment_policy(source)
            if bad is not None:
                last_failure = bad
                continue
            program = parse_program(source)
            if isinstance(program, FailureClass):
                last_failure = program
                continue
            bad = check_builtin_policy(program)
            if bad is not None:
                last_failure = bad
                continue
            outcome = execute(program, tree, cfg.limits, clock=self.clock)
            if outcome.failure is not None:
                last_failure = outcome.failure
                continue
            record.stage_outputs[Stage.CODE_EXEC.value] = StageOutput(
                parsed=tree_to_literal(outcome.stats), status="ok"
            )
            return outcome.stats, "PoT"

        # all code attempts failed: template fallback
        record.failure = last_failure
        stats = template_statistics(tree)
        if not stats and cfg.strategy is Strategy.POT:
            record.stage_outputs[Stage.CODE_EXEC.value] = StageOutput(status="failed")
            record.failure = FailureClass(
                Stage.CODE_EXEC, FailureCategory.EMPTY_OUTPUT, "empty statistics after template fallback"
            )
            return None, None
        record.stage_outputs[Stage.CODE_EXEC.value] = StageOutput(
            parsed=tree_to_literal(stats), status="fallback", model_id="template"
        )
        return stats, "Template"

    # -- stage 3: summarize --------------------------------------------------

    def stage_summarize(
        self,
        chart: ChartRecord,
        tree: Optional[ValueTree],
        stats: Optional[StatsMap],
        record: RunRecord,
    ) -> Optional[str]:
        cfg = self.cfg
        prompt = render_summary_prompt(
            cfg.prompts,
            cfg.input_composition,
            chart.title,
            tree_to_literal(tree) if tree is not None else None,
            tree_to_literal(stats) if stats is not None else None,
        )
        try:
            image = self.image_loader(chart.image_path)
        except OSError as exc:
            record.failure = FailureClass(
                Stage.SUMMARIZE, FailureCategory.OTHER, f"chart image not loadable: {exc}"
            )
            record.stage_outputs[Stage.SUMMARIZE.value] = StageOutput(status="failed")
            return None
        turns = [
            user(IMG_PLACEHOLDER + "\n" + prompt, image=image),
            assistant_prefill(cfg.prompts.summary_prefill),
        ]
        completion = self._call(cfg.vlm_endpoint, turns, cfg.summary_decode())
        raw = cfg.prompts.summary_prefill + completion
        summary = strip_summary_scaffold(raw, cfg.prompts.summary_prefill)
        # stages downstream of a recorded failure are fallback-produced
        status = "fallback" if record.failure is not None else "ok"
        record.stage_outputs[Stage.SUMMARIZE.value] = StageOutput(
            raw=raw, parsed=summary, status=status, model_id=cfg.vlm_endpoint.model_id
        )
        record.model_ids[Stage.SUMMARIZE.value] = cfg.vlm_endpoint.model_id
        return summary

    # -- single-call strategies ----------------------------------------------

    def _single_prompt_summary(self, chart: ChartRecord, record: RunRecord) -> Optional[str]:
        cfg = self.cfg
        template = cfg.prompts.direct if cfg.strategy is Strategy.DIRECT else cfg.prompts.mcot
        prompt = fill(template, title=chart.title)
        try:
            image = self.image_loader(chart.image_path)
        except OSError as exc:
            record.failure = FailureClass(
                Stage.SUMMARIZE, FailureCategory.OTHER, f"chart image not loadable: {exc}"
            )
            record.stage_outputs[Stage.SUMMARIZE.value] = StageOutput(status="failed")
            return None
        completion = self._call(cfg.vlm_endpoint, [user(prompt, image=image)], cfg.summary_decode())
        summary = completion.strip()
        record.stage_outputs[Stage.SUMMARIZE.value] = StageOutput(
            raw=str(completion), parsed=summary, status="ok",
            model_id=cfg.vlm_endpoint.model_id,
        )
        record.model_ids[Stage.SUMMARIZE.value] = cfg.vlm_endpoint.model_id
        return summary

    # -- orchestration --------------------------------------------------------

    def run_chart(self, chart: ChartRecord) -> RunRecord:
        cfg = self.cfg
        record = RunRecord(
            chart_id=chart.id,
            strategy=cfg.strategy,
            input_composition=cfg.input_composition,
        )
        try:
            if cfg.strategy in (Strategy.DIRECT, Strategy.MCOT):
                started = self.clock()
                summary = self._single_prompt_summary(chart, record)
                record.timings_ms[Stage.SUMMARIZE.value] = (self.clock() - started) * 1000.0
                record.summary = summary
                return record

            started = self.clock()
            tree = self.stage_chart_to_dict(chart, record)
            record.timings_ms[Stage.DICT_GEN.value] = (self.clock() - started) * 1000.0
            stats = None
            if tree is not None:
                started = self.clock()
                stats, _provenance = self.stage_dict_to_stats(tree, record)
                record.timings_ms[Stage.CODE_GEN.value] = (self.clock() - started) * 1000.0

            needs_tree = cfg.input_composition in _NEEDS_TREE
            needs_stats = cfg.input_composition in _NEEDS_STATS
            if (needs_tree and tree is None) or (needs_stats and stats is None):
                record.stage_outputs[Stage.SUMMARIZE.value] = StageOutput(status="skipped")
                return record

            started = self.clock()
            record.summary = self.stage_summarize(chart, tree, stats, record)
            record.timings_ms[Stage.SUMMARIZE.value] = (self.clock() - started) * 1000.0
            return record
        except ChartPotError as exc:
            record.failure = record.failure or FailureClass(
                Stage.SUMMARIZE, FailureCategory.OTHER, str(exc)
            )
            record.summary = None
            return record
