import json

import pytest
from hypothesis import given, strategies as st

from chartpot import (
    DecodeParams,
    MockTransport,
    ModelEndpoint,
    complete,
    completion_body,
    render_chat,
)
from chartpot.client import (
    AuthMissing,
    ImageOnNonUserTurn,
    ImageUnsupported,
    TransportError,
    UnknownTemplate,
    assistant_prefill,
    build_request_body,
    system,
    user,
)


class TestRenderChat:
    def test_user_turn_im_start(self):
        rendered = render_chat("im_start", [user("hi")])
        assert rendered == "<|im_start|>user\nhi<|im_end|>\n<|im_start|>assistant\n"

    def test_assistant_prefill_leaves_no_end_marker(self):
        rendered = render_chat(
            "im_start", [user("q"), assistant_prefill("```python\n chart_dict =")]
        )
        assert rendered.endswith("assistant\n```python\n chart_dict =")
        assert not rendered.endswith("<|im_end|>\n")

    def test_passthrough_identity(self):
        assert render_chat("passthrough", [user("x")]) == "x"

    def test_system_turn_wrapped(self):
        rendered = render_chat("im_start", [system("be brief"), user("q")])
        assert rendered.startswith("<|im_start|>system\nbe brief<|im_end|>\n")

    def test_unknown_template(self):
        with pytest.raises(UnknownTemplate):
            render_chat("nope", [user("x")])

    def test_image_restricted_to_user_turns(self):
        with pytest.raises(ImageOnNonUserTurn):
            from chartpot.client import ChatTurn, Role

            ChatTurn(Role.ASSISTANT, "x", image_ref=b"png")

    @given(st.lists(st.text(min_size=1, max_size=20), min_size=1, max_size=4, unique=True))
    def test_injective_over_turn_text(self, texts):
        convs = [[user(t)] for t in texts]
        rendered = [render_chat("im_start", c) for c in convs]
        assert len(set(rendered)) == len(rendered)


@pytest.fixture
def endpoint():
    return ModelEndpoint(base_url="mock://svc", model_id="m1", supports_images=True)


class TestComplete:
    def test_mock_echo(self, endpoint):
        transport = MockTransport(["{'a': 1}"])
        out = complete(endpoint, [user("x")], DecodeParams(), transport=transport,
                       sleep=lambda s: None)
        assert out == "{'a': 1}"

    def test_missing_env_var(self, endpoint, monkeypatch):
        monkeypatch.delenv("CHARTPOT_API_KEY", raising=False)
        locked = ModelEndpoint(base_url="mock://svc", model_id="m1",
                               api_key_ref="CHARTPOT_API_KEY")
        with pytest.raises(AuthMissing) as err:
            complete(locked, [user("x")], DecodeParams(), transport=MockTransport(["y"]))
        assert err.value.env_var == "CHARTPOT_API_KEY"

    def test_retry_contract(self):
        transport = MockTransport([500, 500, completion_body("ok")])
        endpoint = ModelEndpoint(base_url="mock://svc", model_id="m1", max_retries=3)
        out = complete(endpoint, [user("y")], DecodeParams(), transport=transport,
                       sleep=lambda s: None)
        assert out == "ok"
        assert len(transport.requests) == 3

    def test_retries_exhausted(self):
        transport = MockTransport([500, 500, 500])
        endpoint = ModelEndpoint(base_url="mock://svc", model_id="m1", max_retries=2)
        with pytest.raises(TransportError):
            complete(endpoint, [user("y")], DecodeParams(), transport=transport,
                     sleep=lambda s: None)
        assert len(transport.requests) == 3  # initial + 2 retries

    def test_4xx_not_retried(self):
        transport = MockTransport([404])
        endpoint = ModelEndpoint(base_url="mock://svc", model_id="m1", max_retries=3)
        with pytest.raises(TransportError):
            complete(endpoint, [user("y")], DecodeParams(), transport=transport,
                     sleep=lambda s: None)
        assert len(transport.requests) == 1

    def test_image_on_text_only_endpoint(self):
        endpoint = ModelEndpoint(base_url="mock://svc", model_id="m1", supports_images=False)
        with pytest.raises(ImageUnsupported):
            complete(endpoint, [user("x", image=b"png")], DecodeParams(),
                     transport=MockTransport(["y"]))

    def test_params_not_mutated(self, endpoint):
        params = DecodeParams(temperature=0.7, banned_substrings=("#",))
        before = (params.temperature, params.banned_substrings)
        complete(endpoint, [user("x")], params, transport=MockTransport(["ok"]),
                 sleep=lambda s: None)
        assert (params.temperature, params.banned_substrings) == before

    def test_identical_scripts_identical_outputs(self, endpoint):
        outs = [
            complete(endpoint, [user("x")], DecodeParams(),
                     transport=MockTransport(["same"]), sleep=lambda s: None)
            for _ in range(2)
        ]
        assert outs[0] == outs[1]

    def test_banned_substring_flagged_not_rewritten(self, endpoint):
        noisy = "#### # ###"
        params = DecodeParams(banned_substrings=("#",))
        out = complete(endpoint, [user("x")], params,
                       transport=MockTransport([noisy]), sleep=lambda s: None)
        assert out == noisy
        assert out.flagged

    def test_clean_response_not_flagged(self, endpoint):
        params = DecodeParams(banned_substrings=("#",))
        out = complete(endpoint, [user("x")], params,
                       transport=MockTransport(["def f(): pass"]), sleep=lambda s: None)
        assert not out.flagged


class TestRequestBody:
    def test_golden_defaults(self, endpoint):
        body = build_request_body(endpoint, [user("hello")], DecodeParams())
        assert body == {
            "model": "m1",
            "messages": [{"role": "user", "content": "hello"}],
            "temperature": 0.2,
            "repetition_penalty": 1.2,
            "max_tokens": 1024,
        }

    def test_image_becomes_data_url_part(self, endpoint):
        body = build_request_body(
            endpoint, [user("<img_placeholder>\nlook", image=b"PNGDATA")], DecodeParams()
        )
        content = body["messages"][0]["content"]
        assert content[0]["type"] == "image_url"
        assert content[0]["image_url"]["url"].startswith("data:image/png;base64,")
        assert content[1] == {"type": "text", "text": "look"}

    def test_wire_values_survive_serialization(self, endpoint):
        transport = MockTransport(["ok"])
        complete(endpoint, [user("x")], DecodeParams(), transport=transport,
                 sleep=lambda s: None)
        sent = transport.requests[0]["body"]
        parsed = json.loads(json.dumps(sent))
        assert parsed["temperature"] == 0.2
        assert parsed["repetition_penalty"] == 1.2
