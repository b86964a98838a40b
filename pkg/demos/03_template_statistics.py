# Rule-based template statistics and the interpreter differential.
#
# The template engine extracts the six exemplar statistics (Total, Sum,
# Average, Minimum, Maximum, Range) from every numeric series in a value
# tree.  The same rules exist as a program in the restricted language, so
# the sandbox interpreter can be cross-checked against the native engine.

from chartpot import (
    CANONICAL_TEMPLATE_SOURCE,
    execute,
    parse_program,
    template_statistics,
)

# (1) A flat numeric sequence.
print(template_statistics({"values": [1, 2, 3]}))

# (2) Sibling numeric scalars group into one synthetic series per mapping.
print(template_statistics({"2019": {"Rep": 45, "Dem": 38}}))

# (3) Nested paths join with dots; non-numeric content is skipped.
tree = {
    "coal": [40, 35, 28],
    "gas": [25, 30, 33],
    "meta": {"source": "survey", "regions": {"north": 12, "south": 19}},
}
for category, stats in template_statistics(tree).items():
    print(f"{category:14s} -> {stats}")

# (4) The canonical template program computes the identical StatsMap inside
#     the sandbox - a standing differential test of the interpreter.
program = parse_program(CANONICAL_TEMPLATE_SOURCE)
outcome = execute(program, tree)
assert outcome.stats == template_statistics(tree)
print("interpreter and native engine agree on", len(outcome.stats), "series")
