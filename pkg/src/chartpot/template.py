"""Rule-based statistics extraction: the PoTTemplate strategy and the
fallback when generated code cannot be parsed or executed.

Two implementations of the same rules live here.  ``template_statistics`` is
the native engine; ``CANONICAL_TEMPLATE_SOURCE`` is the same rule set written
in the restricted program language so the sandbox interpreter can be checked
against the native engine field for field.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Union

from .core import StatsMap, ValueTree
from .interpreter import flatten_stats

Number = Union[int, float]


@dataclass(frozen=True)
class TemplateRecord:
    category: str
    total: int
    sum: Number
    average: float
    minimum: Number
    maximum: Number
    range: Number
    synthesized: bool = False  # True when grouped from sibling scalars

    def to_mapping(self) -> dict:
        return {
            "Category": self.category,
            "Total": self.total,
            "Sum": self.sum,
            "Average": self.average,
            "Minimum": self.minimum,
            "Maximum": self.maximum,
            "Range": self.range,
        }


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _category(path: list) -> str:
    return ".".join(path) if path else "series"


def _make_record(path: list, values: list, synthesized: bool) -> TemplateRecord:
    smallest = min(values)
    largest = max(values)
    return TemplateRecord(
        category=_category(path),
        total=len(values),
        sum=sum(values),
        average=float(statistics.mean(values)),
        minimum=smallest,
        maximum=largest,
        range=largest - smallest,
        synthesized=synthesized,
    )


def template_records(chart: ValueTree) -> list:
    """Depth-first record extraction; pre-order, stable."""
    records: list = []

    def walk(node, path):
        if isinstance(node, dict):
            siblings = [v for v in node.values() if _is_number(v)]
            if len(siblings) >= 2:
                records.append(_make_record(path, siblings, synthesized=True))
            for key, child in node.items():
                if isinstance(child, (dict, list, tuple)):
                    walk(child, path + [str(key)])
        elif isinstance(node, (list, tuple)):
            items = list(node)
            if items and all(_is_number(v) for v in items):
                records.append(_make_record(path, items, synthesized=False))
            else:
                for idx, child in enumerate(items):
                    if isinstance(child, (dict, list, tuple)):
                        walk(child, path + [str(idx)])

    walk(chart, [])
    return records


def template_statistics(chart: ValueTree) -> StatsMap:
    """Six exemplar statistics for every numeric series found in the tree."""
    records = template_records(chart)
    if not records:
        return {}
    return flatten_stats([rec.to_mapping() for rec in records])


# The identical rules in the restricted program language.  The interpreter
# must execute this to exactly the StatsMap template_statistics produces;
# recursion is unavailable there, so the walk runs on an explicit stack.
CANONICAL_TEMPLATE_SOURCE = '''
import statistics

def get_summary_statistics(chart_dict):
    # Define output dictionary `summary_dict` to store the summary statistics
    records = []
    stack = [("", chart_dict)]
    while len(stack) > 0:
        prefix, node = stack.pop()
        children = []
        if isinstance(node, dict):
            values = []
            for key in node.keys():
                child = node[key]
                if isinstance(child, (int, float)) and not isinstance(child, bool):
                    values.append(child)
            if len(values) >= 2:
                category = prefix
                if len(category) == 0:
                    category = "series"
                records.append({
                    "Category": category,
                    "Total": len(values),
                    "Sum": sum(values),
                    "Average": statistics.mean(values),
                    "Minimum": min(values),
                    "Maximum": max(values),
                    "Range": max(values) - min(values),
                })
            for key in node.keys():
                child = node[key]
                if isinstance(child, (dict, list, tuple)):
                    joined = str(key)
                    if len(prefix) > 0:
                        joined = prefix + "." + str(key)
                    children.append((joined, child))
        if isinstance(node, (list, tuple)):
            values = [x for x in node if isinstance(x, (int, float)) and not isinstance(x, bool)]
            if len(node) > 0 and len(values) == len(node):
                category = prefix
                if len(category) == 0:
                    category = "series"
                records.append({
                    "Category": category,
                    "Total": len(values),
                    "Sum": sum(values),
                    "Average": statistics.mean(values),
                    "Minimum": min(values),
                    "Maximum": max(values),
                    "Range": max(values) - min(values),
                })
            if len(values) < len(node) or len(node) == 0:
                index = 0
                for child in node:
                    if isinstance(child, (dict, list, tuple)):
                        joined = str(index)
                        if len(prefix) > 0:
                            joined = prefix + "." + str(index)
                        children.append((joined, child))
                    index = index + 1
        for entry in reversed(children):
            stack.append(entry)
    return records
'''.strip()
