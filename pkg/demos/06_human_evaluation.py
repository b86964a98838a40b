# Blinded pairwise human evaluation, end to end.
#
# Two systems' run files are sampled into blinded pairs, served over HTTP,
# and evaluator choices aggregate into preference scores: total selections
# of a system divided by the number of evaluators.

import httpx

from chartpot import ChoiceRecord, HumanEvalService, aggregate_scores
from chartpot.humaneval import PreferencePair, serve_in_background

pairs = [
    PreferencePair(
        pair_id=f"pair-{i}", chart_id=f"chart-{i}", image_path="chart.png",
        system_a="template", summary_a=f"Template summary {i}.",
        system_b="pot", summary_b=f"Program-of-thought summary {i}.",
        presentation_seed=i,
    )
    for i in range(4)
]

service = HumanEvalService(pairs, admin_token="demo-token")
server, port = serve_in_background(service)
base = f"http://127.0.0.1:{port}"

# (1) An evaluator session: responses never name the systems.
session = httpx.post(f"{base}/session").json()["session_id"]
while True:
    view = httpx.get(f"{base}/session/{session}/next").json()
    if view["done"]:
        break
    print("progress", view["progress"], "| left:", view["left"][:30], "| right:", view["right"][:30])
    httpx.post(f"{base}/session/{session}/choice",
               json={"pair_id": view["pair_id"], "side": "right"})

# (2) Scores are admin-only and follow the selections/evaluators rule.
print(httpx.get(f"{base}/scores", params={"token": "demo-token"}).json())
server.shutdown()

# (3) The published aggregation identity: 3 evaluators, 50 pairs, selections
#     56 vs 94 give scores 18.67 vs 31.33 that sum to the pair count.
choices = [ChoiceRecord(f"p{i}", f"ev{i % 3}", "template", 0.0) for i in range(56)]
choices += [ChoiceRecord(f"q{i}", f"ev{i % 3}", "pot", 0.0) for i in range(94)]
scores = aggregate_scores(choices, evaluators=3)
print({k: round(v, 2) for k, v in scores.items()}, "sum:", round(sum(scores.values()), 2))
