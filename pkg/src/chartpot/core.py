"""Domain types for charts, value trees, statistics maps and run artifacts.

A ValueTree is represented with plain Python objects: ``dict`` for mapping
nodes (ordered, unique keys), ``list`` for sequence nodes, and
str/int/float/bool/None scalars at the leaves.  ``PercentScalar`` is a float
subclass carrying the original ``45%``-style surface text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Mapping, Optional, Union


class ChartPotError(Exception):
    """Base class for errors raised by this package."""


class MalformedLine(ChartPotError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(ChartPotError):
    def __init__(self, chart_id: str):
        super().__init__(f"duplicate chart id: {chart_id!r}")
        self.chart_id = chart_id


class UnknownChartType(ChartPotError):
    def __init__(self, value: object):
        super().__init__(f"unknown chart type: {value!r}")
        self.value = value


class EmptyCandidateList(ChartPotError):
    pass


class SerializationError(ChartPotError):
    pass


class ChartType(str, Enum):
    AREA = "area"
    BAR = "bar"
    LINE = "line"
    PIE = "pie"
    SCATTER = "scatter"

    @property
    def label(self) -> str:
        """Row label used in reports (Area, Bar, ...)."""
        return self.value.capitalize()


# Report column order; "All" is appended by the report builder.
CHART_TYPE_ORDER = (
    ChartType.AREA,
    ChartType.BAR,
    ChartType.LINE,
    ChartType.PIE,
    ChartType.SCATTER,
)


class Complexity(str, Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"


class Dataset(str, Enum):
    PEW = "pew"
    VISTEXT = "vistext"
    CUSTOM = "custom"


class Strategy(str, Enum):
    DIRECT = "Direct"
    MCOT = "MCoT"
    POT = "PoT"
    POT_TEMPLATE = "PoTTemplate"


class InputComposition(str, Enum):
    TITLE = "Title"
    DICT_TITLE = "DictTitle"
    STATS_TITLE = "StatsTitle"
    DICT_STATS_TITLE = "DictStatsTitle"
    DICT_STATST_TITLE = "DictStatsTTitle"


class Stage(str, Enum):
    DICT_GEN = "DictGen"
    DICT_PARSE = "DictParse"
    CODE_GEN = "CodeGen"
    CODE_PARSE = "CodeParse"
    CODE_EXEC = "CodeExec"
    SUMMARIZE = "Summarize"


class FailureCategory(str, Enum):
    TRUNCATED = "Truncated"
    TYPE_MISMATCH = "TypeMismatch"
    ATTRIBUTE_ERROR = "AttributeError"
    VALUE_ERROR = "ValueError"
    SYNTAX_ERROR = "SyntaxError"
    BUDGET_EXCEEDED = "BudgetExceeded"
    EMPTY_OUTPUT = "EmptyOutput"
    OTHER = "Other"


@dataclass(frozen=True)
class FailureClass:
    stage: Stage
    category: FailureCategory
    message: str

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "category": self.category.value,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FailureClass":
        return cls(Stage(d["stage"]), FailureCategory(d["category"]), d["message"])


@dataclass(frozen=True)
class ChartRecord:
    id: str
    image_path: str
    title: str
    chart_type: ChartType
    complexity: Complexity = Complexity.SIMPLE
    gold_summary: str = ""
    dataset: Dataset = Dataset.CUSTOM

    def __post_init__(self):
        if not self.id:
            raise ValueError("chart id must be non-empty")


Scalar = Union[str, int, float, bool, None]
ValueTree = Union[dict, list, Scalar]
# StatsMap values: scalar, sequence of scalars, or a flat string->scalar mapping.
StatsMap = dict


class PercentScalar(float):
    """Numeric value parsed from a '%'-suffixed numeral, keeping its text.

    text is optional so numeric machinery that rebuilds the operand type from
    a plain value (statistics.mean does) keeps working.
    """

    text: str

    def __new__(cls, value: float, text: Optional[str] = None) -> "PercentScalar":
        obj = super().__new__(cls, value)
        obj.text = text if text is not None else f"{float(value):g}%"
        return obj

    def __str__(self) -> str:
        return self.text

    def __repr__(self) -> str:
        return f"PercentScalar({float(self)!r}, {self.text!r})"


def is_scalar(value: object) -> bool:
    return value is None or isinstance(value, (str, int, float, bool))


def tree_depth(tree: ValueTree) -> int:
    """Depth of a value tree; scalars have depth 1."""
    if isinstance(tree, dict):
        return 1 + max((tree_depth(v) for v in tree.values()), default=0)
    if isinstance(tree, (list, tuple)):
        return 1 + max((tree_depth(v) for v in tree), default=0)
    return 1


def tree_node_count(tree: ValueTree) -> int:
    if isinstance(tree, dict):
        return 1 + sum(tree_node_count(v) for v in tree.values())
    if isinstance(tree, (list, tuple)):
        return 1 + sum(tree_node_count(v) for v in tree)
    return 1


def tree_to_literal(tree: ValueTree) -> str:
    """Serialize a value tree in the single-quoted literal style the models see."""
    if isinstance(tree, dict):
        items = ", ".join(
            f"{tree_to_literal(k)}: {tree_to_literal(v)}" for k, v in tree.items()
        )
        return "{" + items + "}"
    if isinstance(tree, (list, tuple)):
        return "[" + ", ".join(tree_to_literal(v) for v in tree) + "]"
    if isinstance(tree, PercentScalar):
        return f"'{tree.text}'"
    if isinstance(tree, str):
        escaped = tree.replace("\\", "\\\\").replace("'", "\\'")
        return f"'{escaped}'"
    if tree is True:
        return "True"
    if tree is False:
        return "False"
    if tree is None:
        return "None"
    return repr(tree)


def _jsonable_scalar(value: Scalar) -> Scalar:
    if isinstance(value, PercentScalar):
        return float(value)
    return value


def stats_to_jsonable(stats: StatsMap) -> dict:
    out: dict = {}
    for key, value in stats.items():
        if isinstance(value, dict):
            out[key] = {str(k): _jsonable_scalar(v) for k, v in value.items()}
        elif isinstance(value, (list, tuple)):
            out[key] = [_jsonable_scalar(v) for v in value]
        else:
            out[key] = _jsonable_scalar(value)
    return out


@dataclass
class StageOutput:
    raw: str = ""
    parsed: Optional[str] = None
    status: str = "ok"  # ok | failed | fallback | skipped
    model_id: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "parsed": self.parsed,
            "status": self.status,
            "model_id": self.model_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StageOutput":
        return cls(
            raw=d.get("raw", ""),
            parsed=d.get("parsed"),
            status=d.get("status", "ok"),
            model_id=d.get("model_id"),
        )


@dataclass
class RunRecord:
    chart_id: str
    strategy: Strategy
    input_composition: InputComposition
    stage_outputs: dict = field(default_factory=dict)  # stage token -> StageOutput
    failure: Optional[FailureClass] = None
    summary: Optional[str] = None
    timings_ms: dict = field(default_factory=dict)  # stage token -> float
    model_ids: dict = field(default_factory=dict)  # stage token -> model id

    def to_dict(self) -> dict:
        return {
            "chart_id": self.chart_id,
            "strategy": self.strategy.value,
            "input_composition": self.input_composition.value,
            "stage_outputs": {k: v.to_dict() for k, v in self.stage_outputs.items()},
            "failure": self.failure.to_dict() if self.failure else None,
            "summary": self.summary,
            "timings_ms": self.timings_ms,
            "model_ids": self.model_ids,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunRecord":
        return cls(
            chart_id=d["chart_id"],
            strategy=Strategy(d["strategy"]),
            input_composition=InputComposition(d["input_composition"]),
            stage_outputs={
                k: StageOutput.from_dict(v) for k, v in d.get("stage_outputs", {}).items()
            },
            failure=FailureClass.from_dict(d["failure"]) if d.get("failure") else None,
            summary=d.get("summary"),
            timings_ms=dict(d.get("timings_ms", {})),
            model_ids=dict(d.get("model_ids", {})),
        )


def select_gold_caption(candidates: list) -> str:
    """Longest candidate wins; ties break to the earliest occurrence."""
    if not candidates:
        raise EmptyCandidateList("no candidate captions")
    best = candidates[0]
    for cand in candidates[1:]:
        if len(cand) > len(best):
            best = cand
    return best


_MANIFEST_FIELDS = ("id", "image_path", "title", "chart_type")


def _record_from_manifest_obj(obj: Mapping, line_no: int) -> ChartRecord:
    for name in _MANIFEST_FIELDS:
        if name not in obj:
            raise MalformedLine(line_no, f"missing field {name!r}")
    raw_type = obj["chart_type"]
    try:
        chart_type = ChartType(str(raw_type).lower())
    except ValueError:
        raise UnknownChartType(raw_type) from None
    raw_complexity = obj.get("complexity")
    complexity = Complexity(str(raw_complexity).lower()) if raw_complexity else Complexity.SIMPLE
    gold = obj.get("gold_summary", "")
    if isinstance(gold, list):
        gold = select_gold_caption(gold)
    raw_dataset = obj.get("dataset", "custom")
    try:
        dataset = Dataset(str(raw_dataset).lower())
    except ValueError:
        dataset = Dataset.CUSTOM
    return ChartRecord(
        id=str(obj["id"]),
        image_path=str(obj["image_path"]),
        title=str(obj["title"]),
        chart_type=chart_type,
        complexity=complexity,
        gold_summary=str(gold),
        dataset=dataset,
    )


def load_manifest(path) -> list:
    """Load a line-delimited JSON manifest into ChartRecords, in file order."""
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise MalformedLine(line_no, "expected a JSON object")
            record = _record_from_manifest_obj(obj, line_no)
            if record.id in seen:
                raise DuplicateId(record.id)
            seen.add(record.id)
            records.append(record)
    return records


def manifest_counts(records: Iterable[ChartRecord]) -> dict:
    """Per-chart-type counts plus an 'All' total."""
    counts = {ct.label: 0 for ct in CHART_TYPE_ORDER}
    total = 0
    for rec in records:
        counts[rec.chart_type.label] += 1
        total += 1
    counts["All"] = total
    return counts


def write_manifest(records: Iterable[ChartRecord], sink: IO[str]) -> None:
    for rec in records:
        obj = {
            "id": rec.id,
            "image_path": rec.image_path,
            "title": rec.title,
            "chart_type": rec.chart_type.value,
            "complexity": rec.complexity.value,
            "gold_summary": rec.gold_summary,
            "dataset": rec.dataset.value,
        }
        sink.write(json.dumps(obj, ensure_ascii=False) + "\n")


def persist_run(record: RunRecord, sink: IO[str]) -> None:
    """Append one run record as a single JSON line."""
    try:
        line = json.dumps(record.to_dict(), ensure_ascii=False)
    except (TypeError, ValueError) as exc:
        raise SerializationError(str(exc)) from exc
    sink.write(line + "\n")


def read_runs(source) -> list:
    """Read run records from a path or open text stream."""
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    records = []
    for line in lines:
        line = line.strip()
        if line:
            records.append(RunRecord.from_dict(json.loads(line)))
    return records
