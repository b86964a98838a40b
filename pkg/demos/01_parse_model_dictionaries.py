# Parsing model-emitted chart dictionaries.
#
# Vision models asked to produce a `chart_dict` reply with markdown fences,
# prose, trailing commas, percent tokens, or cut-off output.  The literal
# parser extracts the payload, repairs what it safely can, and classifies
# what it cannot.

from chartpot import extract_payload, parse_model_text, parse_value_tree

# (1) A well-behaved reply: fence + `chart_dict =` prefix are stripped.
raw = "```python\nchart_dict = {'2019': {'Rep': 45, 'Dem': 38}, 'years': [2018, 2019],}\n```"
outcome = parse_model_text(raw)
print("tree    :", outcome.result)
print("repairs :", [r.value for r in outcome.repairs_applied])

# (2) Prose around the literal: extraction trims to the balanced span.
print("payload :", extract_payload("Sure! Here you go: {'a': [1, 2]} Hope this helps."))

# (3) Percent tokens become numeric scalars that remember their surface text.
tree = parse_value_tree("{'share': 45%, 'other': '38%', 'income': '$30K-$99999'}").result
print("percent :", tree["share"], "=", float(tree["share"]), "| string kept:", tree["income"])

# (4) Truncated output (the model ran out of tokens) classifies as Truncated
#     with the interpreter-style diagnostic.
bad = parse_value_tree("{'years': {'2019': 10, '2020': ")
print("failure :", bad.failure.category.value, "|", bad.failure.message)

# (5) An unterminated string is a SyntaxError-class failure.
bad = parse_value_tree("{'a': 'unclosed}")
print("failure :", bad.failure.category.value, "|", bad.failure.message)
