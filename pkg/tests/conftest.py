import json
from pathlib import Path

import pytest

from chartpot import InputComposition, ModelEndpoint, PipelineConfig, Strategy
from chartpot.client import completion_body


@pytest.fixture
def chart_images(tmp_path):
    """Five tiny distinct fake chart images keyed by chart id."""
    images = {}
    for i in range(1, 6):
        path = tmp_path / f"chart{i}.png"
        path.write_bytes(b"\x89PNG" + bytes([i]) * 4)
        images[f"c{i}"] = str(path)
    return images


@pytest.fixture
def fixture_manifest(tmp_path, chart_images):
    """Five charts covering every chart type, with gold summaries."""
    rows = [
        {"id": "c1", "chart_type": "bar", "title": "Party support over time",
         "gold_summary": "Republicans lead Democrats 45 to 38 in the survey."},
        {"id": "c2", "chart_type": "line", "title": "Broadband adoption",
         "gold_summary": "Broadband adoption plateaued near 72% in rural counties."},
        {"id": "c3", "chart_type": "pie", "title": "Main cooking fuel",
         "gold_summary": "Wood remains the main cooking fuel for most households."},
        {"id": "c4", "chart_type": "area", "title": "Coal versus gas",
         "gold_summary": "Coal consumption fell below natural gas in 2015."},
        {"id": "c5", "chart_type": "scatter", "title": "Latitude and daylight",
         "gold_summary": "Daylight hours vary more at higher latitudes."},
    ]
    path = tmp_path / "manifest.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            row = dict(row)
            row["image_path"] = chart_images[row["id"]]
            row["dataset"] = "custom"
            fh.write(json.dumps(row) + "\n")
    return str(path)


SCRIPTED_DICTS = {
    "c1": "{'2019': {'Rep': 45, 'Dem': 38}, 'years': [2018, 2019, 2020]}",
    "c2": "{'adoption': {'2015': 65, '2020': 70, '2023': 72}}",
    "c3": "{'fuel': {'Wood': 52, 'Gas': 30, 'Electric': 18}}",
    "c4": "{'coal': [40, 35, 28], 'gas': [25, 30, 33]}",
    "c5": "{'points': [[10, 2.5], [45, 6.1], [60, 9.0]]}",
}

SCRIPTED_PROGRAM = (
    "    summary_dict = {}\n"
    "    for key in chart_dict.keys():\n"
    "        value = chart_dict[key]\n"
    "        if isinstance(value, list) and len(value) > 0:\n"
    "            numeric = [x for x in value if isinstance(x, (int, float))]\n"
    "            if len(numeric) == len(value):\n"
    "                summary_dict['Total of ' + str(key)] = len(value)\n"
    "                summary_dict['Maximum of ' + str(key)] = max(value)\n"
    "        if isinstance(value, dict):\n"
    "            numbers = [value[k] for k in value.keys() if isinstance(value[k], (int, float))]\n"
    "            if len(numbers) > 0:\n"
    "                summary_dict['Sum of ' + str(key)] = sum(numbers)\n"
    "    return summary_dict\n"
    "```"
)


def scripted_model(image_to_chart_id):
    """A deterministic mock model: responds per stage and per chart image."""

    def _chart_id(body):
        for message in body.get("messages", []):
            content = message.get("content")
            if isinstance(content, list):
                for part in content:
                    if part.get("type") == "image_url":
                        url = part["image_url"]["url"]
                        key = url.rsplit(",", 1)[-1]
                        if key in image_to_chart_id:
                            return image_to_chart_id[key]
        return None

    def script(url, body):
        text = json.dumps(body)
        chart_id = _chart_id(body)
        if "Convert the chart into a python dictionary" in text:
            literal = SCRIPTED_DICTS.get(chart_id, "{'values': [1, 2, 3]}")
            return completion_body(" " + literal + "\n```")
        if "Implement the function" in text:
            return completion_body(SCRIPTED_PROGRAM)
        if "outline of all key information" in text:
            return completion_body(
                f"Key points for {chart_id}. The trend is upward overall."
            )
        if "Summarize the insights" in text:
            return completion_body(
                f"1. Read the data.\nThe chart for {chart_id} shows a clear lead for the first series."
            )
        return completion_body("The chart shows steady change.")

    return script


@pytest.fixture
def image_key_map(chart_images):
    """base64 image payload -> chart id, for scripted dispatch."""
    import base64

    mapping = {}
    for chart_id, path in chart_images.items():
        encoded = base64.b64encode(Path(path).read_bytes()).decode("ascii")
        mapping[encoded] = chart_id
    return mapping


@pytest.fixture
def mock_script(image_key_map):
    return scripted_model(image_key_map)


@pytest.fixture
def vlm_endpoint():
    return ModelEndpoint(base_url="mock://vlm", model_id="test-vlm", supports_images=True)


@pytest.fixture
def coder_endpoint():
    return ModelEndpoint(base_url="mock://coder", model_id="test-coder")


@pytest.fixture
def base_config(vlm_endpoint, coder_endpoint):
    return PipelineConfig(
        vlm_endpoint=vlm_endpoint,
        coder_endpoint=coder_endpoint,
        repair_endpoint=None,
        strategy=Strategy.POT,
        input_composition=InputComposition.DICT_STATS_TITLE,
        workers=1,
    )


class FakeClock:
    """Monotonic fake clock advancing a fixed step per call."""

    def __init__(self, step=0.001):
        self.now = 0.0
        self.step = step

    def __call__(self):
        self.now += self.step
        return self.now


@pytest.fixture
def fake_clock():
    return FakeClock()


@pytest.fixture
def chat_completions_server(mock_script):
    """Loopback HTTP server speaking the chat-completions wire format."""
    import threading
    from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def do_POST(self):
            length = int(self.headers.get("Content-Length") or 0)
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            reply = mock_script(self.path, body)
            payload = json.dumps(reply).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
