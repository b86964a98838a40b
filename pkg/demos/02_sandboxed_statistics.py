# Running generated statistics programs safely.
#
# Generated code is parsed into a restricted subset, checked against a
# builtin whitelist, and executed by a budgeted tree-walking evaluator.
# Nothing in the evaluation environment can reach the filesystem, network,
# clock, or randomness.

from chartpot import (
    SandboxLimits,
    check_builtin_policy,
    check_comment_policy,
    execute,
    parse_program,
)

chart = {"2019": {"Rep": 45, "Dem": 38}, "years": [2018, 2019, 2020]}

# (1) A typical generated program: dict iteration, comprehensions, builtins.
source = """
import statistics

def get_summary_statistics(chart_dict):
    summary_dict = {}
    for key, value in chart_dict.items():
        if isinstance(value, dict):
            numbers = [v for v in value.values() if isinstance(v, (int, float))]
            if len(numbers) >= 2:
                summary_dict['Average of ' + str(key)] = statistics.mean(numbers)
                summary_dict['Maximum of ' + str(key)] = max(numbers)
        if isinstance(value, list):
            summary_dict['Total of ' + str(key)] = len(value)
    return summary_dict
"""
program = parse_program(source)
assert check_comment_policy(source) is None
assert check_builtin_policy(program) is None
outcome = execute(program, chart)
print("stats  :", outcome.stats)
print("steps  :", outcome.steps_used)

# (2) Forbidden names are rejected statically, before anything runs.
hostile = "def get_summary_statistics(chart_dict):\n    return open('/etc/passwd').read()"
print("policy :", check_builtin_policy(parse_program(hostile)).message)

# (3) Infinite loops terminate by budget, not by luck.
spin = "def get_summary_statistics(chart_dict):\n    while True:\n        pass"
outcome = execute(parse_program(spin), chart, SandboxLimits(max_steps=100_000))
print("budget :", outcome.failure.category.value, "after", outcome.steps_used, "steps")

# (4) Runtime faults carry the interpreter's own diagnostics.
broken = "def get_summary_statistics(chart_dict):\n    return 1 + 'a'"
print("fault  :", execute(parse_program(broken), chart).failure.message)
