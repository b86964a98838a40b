# The full pipeline against a scripted mock model server.
#
# One chart flows through: chart -> generated dictionary -> generated
# statistics program -> sandboxed execution -> summary.  The mock transport
# stands in for the VLM and coder endpoints, so this runs offline and
# deterministically.

import json
import pathlib
import tempfile

from chartpot import (
    ChartRecord,
    ChartType,
    InputComposition,
    MockTransport,
    ModelEndpoint,
    Pipeline,
    PipelineConfig,
    Strategy,
)
from chartpot.client import completion_body


def mock_model(url, body):
    text = json.dumps(body)
    if "Convert the chart into a python dictionary" in text:
        return completion_body(" {'2019': {'Rep': 45, 'Dem': 38}, 'years': [2018, 2019, 2020]}\n```")
    if "Implement the function" in text:
        return completion_body(
            "    summary_dict = {}\n"
            "    for key in chart_dict.keys():\n"
            "        value = chart_dict[key]\n"
            "        if isinstance(value, dict):\n"
            "            numbers = [value[k] for k in value.keys()]\n"
            "            summary_dict['Sum of ' + str(key)] = sum(numbers)\n"
            "    return summary_dict\n```"
        )
    return completion_body("Let's look.\nRepublicans lead Democrats 45 to 38 in 2019.")


image = pathlib.Path(tempfile.mkdtemp()) / "chart.png"
image.write_bytes(b"\x89PNG fake chart bytes")
chart = ChartRecord(
    id="pew-0001",
    image_path=str(image),
    title="Partisan views of economic conditions",
    chart_type=ChartType.BAR,
)

vlm = ModelEndpoint(base_url="mock://vlm", model_id="demo-vlm", supports_images=True)
coder = ModelEndpoint(base_url="mock://coder", model_id="demo-coder")

# (1) PoT: three model calls, statistics computed by the sandbox.
cfg = PipelineConfig(vlm_endpoint=vlm, coder_endpoint=coder,
                     strategy=Strategy.POT,
                     input_composition=InputComposition.DICT_STATS_TITLE)
pipeline = Pipeline(cfg, transport=MockTransport(mock_model), sleep=lambda s: None)
record = pipeline.run_chart(chart)
print("strategy:", record.strategy.value)
print("summary :", record.summary)
print("stats   :", record.stage_outputs["CodeExec"].parsed)

# (2) The other strategies reuse the same machinery.
for strategy, composition in [
    (Strategy.DIRECT, InputComposition.TITLE),
    (Strategy.MCOT, InputComposition.TITLE),
    (Strategy.POT_TEMPLATE, InputComposition.DICT_STATST_TITLE),
]:
    cfg = PipelineConfig(vlm_endpoint=vlm, coder_endpoint=coder,
                         strategy=strategy, input_composition=composition)
    pipeline = Pipeline(cfg, transport=MockTransport(mock_model), sleep=lambda s: None)
    record = pipeline.run_chart(chart)
    print(f"{strategy.value:12s} -> {record.summary!r}")
