"""Default prompt texts for every pipeline stage.

The dictionary, statistics and summary prompts are fixed strings the models
were given; do not edit casually — tests hash them.  The Direct and MCoT
prompts are reconstructions (the originals are described, not printed) and
are marked as such.  Slot markers ({title}, {chart_dict}, {dictionary_str},
{summary_dict}) are substituted with str.replace, never str.format, because
serialized trees contain braces.
"""

from __future__ import annotations

from dataclasses import dataclass

IMG_PLACEHOLDER = "<img_placeholder>"

DICT_GEN_USER = (
    "<img_placeholder>\nConvert the chart into a python dictionary `chart_dict`. "
    "Only consider the chart's data when summarizing."
)

DICT_GEN_PREFILL = "```python\n chart_dict ="

DICT_REPAIR_USER = (
    "<img_placeholder>\nConvert the chart into a python dictionary `chart_dict`. "
    "Check json syntax errors. Only consider the chart's data when summarizing, "
    "no punctuations. Only return the valid version."
)

POT_SYSTEM = (
    "You are a data analyst. You are given a dictionary that represents a chart "
    "called `chart_dict`. You need to implement the function "
    "`get_summary_statistics(chart_dict)` that takes the dictionary as input and "
    "returns a dictionary with the relevant statistics that can be used to "
    "summarize the chart. Avoid sorting dictionary objects directly and USE ONLY "
    "PYTHON BUILT-IN FUNCTIONS. Name the keys of the dictionary to elaborate how "
    "it is a descriptive statistic. When writing Python, follow the PEP style "
    "guide. Return ONLY the code of the function that will run without any "
    "errors and can work using `eval()`."
)

POT_USER = (
    "Implement the function `get_summary_statistics` that takes a dictionary as "
    "input and returns a dictionary with the relevant statistics that can be "
    "used to summarize the chart using only built-in Python functions. Make "
    "sure to label the keys of the `summary_dict` to be descriptive The input "
    "dictionary is defined as {chart_dict}."
)

POT_PREFILL = (
    "```python\ndef get_summary_statistics(chart_dict):\n"
    "    # Define output dictionary `summary_dict` to store the summary statistics\n"
)

SUMMARY_USER = (
    "Summarize the insights of the chart with title: '{title}'. The summary use "
    "language similar to the chart. Don't explicitly describe chart elements "
    "such as chart type. NEVER START A SENTENCE WITH A NUMBER. The chart has "
    "the dictionary: {dictionary_str} and the summary_statistics: {summary_dict}."
)

SUMMARY_PREFILL = (
    "Let's think step by step to with as few steps as possible to summarize the chart: "
)

# Shared lead-in of the summary prompt, used to build the reduced-slot
# variants for the Title / DictTitle / StatsTitle compositions.
SUMMARY_BASE = (
    "Summarize the insights of the chart with title: '{title}'. The summary use "
    "language similar to the chart. Don't explicitly describe chart elements "
    "such as chart type. NEVER START A SENTENCE WITH A NUMBER."
)

SUMMARY_DICT_SLOT = " The chart has the dictionary: {dictionary_str}."
SUMMARY_STATS_SLOT = " The chart has the summary_statistics: {summary_dict}."

# Reconstructions: the originals are only described as a plain summarization
# request and an outline-then-summary request.
DIRECT_USER = "<img_placeholder>\nSummarize the insights of the chart with title: '{title}'."

MCOT_USER = (
    "<img_placeholder>\nReturn an outline of all key information and trends "
    "derived from the chart with title: '{title}'. Then summarize the insights "
    "of the chart."
)


@dataclass
class PromptSet:
    dict_gen: str = DICT_GEN_USER
    dict_prefill: str = DICT_GEN_PREFILL
    dict_repair: str = DICT_REPAIR_USER
    pot_system: str = POT_SYSTEM
    pot_user: str = POT_USER
    pot_prefill: str = POT_PREFILL
    summary_user: str = SUMMARY_USER
    summary_prefill: str = SUMMARY_PREFILL
    direct: str = DIRECT_USER
    mcot: str = MCOT_USER

    @classmethod
    def from_overrides(cls, overrides: dict) -> "PromptSet":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown prompt keys: {sorted(unknown)}")
        return cls(**overrides)


def fill(template: str, **slots: str) -> str:
    out = template
    for name, value in slots.items():
        out = out.replace("{" + name + "}", value)
    return out
