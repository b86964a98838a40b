"""Start a live 4-pair evaluation backend for the frontend tests.

Prints one line: PORT=<port> TOKEN=<admin token> then serves until stdin
closes.
"""

import sys
import tempfile
from pathlib import Path

from chartpot.humaneval import HumanEvalService, PreferencePair, serve_in_background

images = Path(tempfile.mkdtemp())
(images / "chart.png").write_bytes(b"\x89PNG fixture")

pairs = [
    PreferencePair(
        pair_id=f"pair-{i}",
        chart_id=f"chart-{i}",
        image_path=str(images / "chart.png"),
        system_a="template",
        summary_a=f"Template-derived summary number {i}.",
        system_b="pot",
        summary_b=f"Program-derived summary number {i}.",
        presentation_seed=i,
    )
    for i in range(4)
]

service = HumanEvalService(pairs, images_dir=str(images), admin_token="test-admin")
server, port = serve_in_background(service)
print(f"PORT={port} TOKEN={service.admin_token}", flush=True)

sys.stdin.read()  # exit when the parent closes our stdin
server.shutdown()
