import statistics

import pytest
from hypothesis import given, settings, strategies as st

from chartpot import (
    CANONICAL_TEMPLATE_SOURCE,
    ProgramAst,
    check_builtin_policy,
    execute,
    parse_program,
    parse_value_tree,
    template_statistics,
)
from chartpot.template import template_records


class TestTemplateStatistics:
    def test_exemplar_sequence(self):
        stats = template_statistics({"values": [1, 2, 3]})
        assert stats == {
            "values": {
                "Total": 3,
                "Sum": 6,
                "Average": 2.0,
                "Minimum": 1,
                "Maximum": 3,
                "Range": 2,
            }
        }

    def test_nothing_numeric(self):
        assert template_statistics({"a": "text"}) == {}

    def test_sibling_grouping(self):
        # brute-force recomputation of the grouping rule over the fixture tree
        tree = {"2019": {"Rep": 45, "Dem": 38}}
        values = [45, 38]
        expected = {
            "2019": {
                "Total": len(values),
                "Sum": sum(values),
                "Average": float(statistics.mean(values)),
                "Minimum": min(values),
                "Maximum": max(values),
                "Range": max(values) - min(values),
            }
        }
        assert template_statistics(tree) == expected
        assert expected["2019"]["Total"] == 2
        assert expected["2019"]["Sum"] == 83
        assert expected["2019"]["Average"] == 41.5
        assert expected["2019"]["Minimum"] == 38
        assert expected["2019"]["Maximum"] == 45
        assert expected["2019"]["Range"] == 7

    def test_single_numeric_child_not_grouped(self):
        assert template_statistics({"year": {"only": 5}}) == {}

    def test_booleans_excluded(self):
        assert template_statistics({"flags": [True, False, True]}) == {}
        stats = template_statistics({"mixed": {"a": True, "b": 1, "c": 2}})
        assert stats["mixed"]["Total"] == 2

    def test_empty_sequence_skipped(self):
        assert template_statistics({"empty": []}) == {}

    def test_nested_paths_joined(self):
        stats = template_statistics({"a": {"b": {"deep": [4, 6]}}})
        assert list(stats) == ["a.b.deep"]

    def test_record_invariants(self):
        tree = {"xs": [3, 1, 4, 1, 5], "group": {"m": 2, "n": 8}}
        for record in template_records(tree):
            assert record.total >= 1
            assert record.range == record.maximum - record.minimum
            assert record.minimum <= record.average <= record.maximum


def _sandbox_template(tree):
    program = parse_program(CANONICAL_TEMPLATE_SOURCE)
    assert isinstance(program, ProgramAst)
    assert check_builtin_policy(program) is None
    outcome = execute(program, tree)
    assert outcome.failure is None, outcome.failure
    return outcome.stats


FIXTURE_TREES = [
    {"values": [1, 2, 3]},
    {"2019": {"Rep": 45, "Dem": 38}},
    {"a": "text"},
    {"coal": [40, 35, 28], "gas": [25, 30, 33]},
    {"share": {"Wood": 52.5, "Gas": 30, "Electric": 17.5}, "years": [2010, 2020]},
    {"nested": {"x": {"deep": [4.5, 6.25, 10]}}, "note": None},
    {"records": [{"a": 1, "b": 2}, {"a": 3, "b": 4}]},
    {"mixed": [1, "two", 3], "pure": [7, 8]},
    [5, 10, 15],
    {"empty": [], "single": {"only": 1}},
]


@pytest.mark.parametrize("tree", FIXTURE_TREES)
def test_interpreter_equivalence_fixtures(tree):
    assert template_statistics(tree) == _sandbox_template(tree)


def test_interpreter_equivalence_percent_values():
    tree = parse_value_tree("{'share': {'Rep': 45%, 'Dem': '38%'}}").result
    assert template_statistics(tree) == _sandbox_template(tree)


_numeric_lists = st.lists(
    st.one_of(
        st.integers(min_value=-10**4, max_value=10**4),
        st.floats(min_value=-10**4, max_value=10**4, allow_nan=False, allow_infinity=False),
    ),
    min_size=1,
    max_size=8,
)


@settings(max_examples=50, deadline=None)
@given(_numeric_lists, st.floats(min_value=0.25, max_value=8, allow_nan=False))
def test_scaling_property(values, factor):
    base = template_statistics({"xs": values})["xs"]
    scaled = template_statistics({"xs": [v * factor for v in values]})["xs"]
    assert scaled["Total"] == base["Total"]
    for name in ("Sum", "Average", "Minimum", "Maximum", "Range"):
        assert scaled[name] == pytest.approx(base[name] * factor, rel=1e-9, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(_numeric_lists, st.randoms(use_true_random=False))
def test_permutation_invariance(values, rng):
    shuffled = list(values)
    rng.shuffle(shuffled)
    base = template_statistics({"xs": values})["xs"]
    perm = template_statistics({"xs": shuffled})["xs"]
    for name in ("Total", "Minimum", "Maximum", "Range"):
        assert perm[name] == base[name]
    assert perm["Sum"] == pytest.approx(base["Sum"], rel=1e-9, abs=1e-9)
    assert perm["Average"] == pytest.approx(base["Average"], rel=1e-9, abs=1e-9)
