"""Chat-completion client: template rendering, decode parameters, retries,
and a scripted transport for tests.

The wire format is OpenAI-compatible chat completions; images travel as
base64 data URLs inside user-message content parts.
"""

from __future__ import annotations

import base64
import json
import os
import random
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import httpx

from .core import ChartPotError
from .prompts import IMG_PLACEHOLDER

DEFAULT_API_KEY_ENV = "CHARTPOT_API_KEY"
BACKOFF_BASE_S = 0.25


class UnknownTemplate(ChartPotError):
    pass


class ImageOnNonUserTurn(ChartPotError):
    pass


class ImageUnsupported(ChartPotError):
    pass


class AuthMissing(ChartPotError):
    def __init__(self, env_var: str):
        super().__init__(env_var)
        self.env_var = env_var


class TransportError(ChartPotError):
    def __init__(self, status: Optional[int], detail: str):
        super().__init__(f"transport failure ({status}): {detail}")
        self.status = status
        self.detail = detail


class RequestTimeout(TransportError):
    def __init__(self, detail: str):
        super().__init__(None, detail)


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatTurn:
    role: Role
    text: str
    image_ref: Optional[bytes] = None  # raw PNG bytes
    prefill: bool = False  # assistant turn continued by the model

    def __post_init__(self):
        if self.image_ref is not None and self.role is not Role.USER:
            raise ImageOnNonUserTurn(f"image attached to {self.role.value} turn")


def system(text: str) -> ChatTurn:
    return ChatTurn(Role.SYSTEM, text)


def user(text: str, image: Optional[bytes] = None) -> ChatTurn:
    return ChatTurn(Role.USER, text, image_ref=image)


def assistant_prefill(text: str) -> ChatTurn:
    return ChatTurn(Role.ASSISTANT, text, prefill=True)


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.2
    repetition_penalty: float = 1.2
    max_new_tokens: int = 1024
    stop_sequences: tuple = ()
    banned_substrings: tuple = ()

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.repetition_penalty <= 0:
            raise ValueError("repetition_penalty must be > 0")


DICT_STAGE_PARAMS = DecodeParams(max_new_tokens=1024)
CODE_STAGE_PARAMS = DecodeParams(max_new_tokens=1024, banned_substrings=("#",))
SUMMARY_STAGE_PARAMS = DecodeParams(max_new_tokens=512)


@dataclass(frozen=True)
class ModelEndpoint:
    base_url: str
    model_id: str
    api_key_ref: Optional[str] = None  # env var holding the bearer token
    supports_images: bool = False
    request_timeout_ms: float = 60_000.0
    max_retries: int = 2
    max_concurrency: int = 4

    def __post_init__(self):
        if not (self.base_url.startswith("http://") or self.base_url.startswith("https://")
                or self.base_url.startswith("mock://")):
            raise ValueError(f"base_url looks invalid: {self.base_url!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


# ---------------------------------------------------------------------------
# Chat templates
# ---------------------------------------------------------------------------

def _render_im_start(turns: list, bos_token: str = "") -> str:
    parts = [bos_token]
    ends_with_prefill = False
    for turn in turns:
        if turn.role is Role.ASSISTANT and turn.prefill:
            parts.append(f"<|im_start|>assistant\n{turn.text}")
            ends_with_prefill = True
        else:
            parts.append(f"<|im_start|>{turn.role.value}\n{turn.text}<|im_end|>\n")
            ends_with_prefill = False
    if not ends_with_prefill:
        parts.append("<|im_start|>assistant\n")
    return "".join(parts)


def _render_passthrough(turns: list) -> str:
    return "".join(turn.text for turn in turns)


_TEMPLATES: dict = {
    "im_start": _render_im_start,
    "passthrough": _render_passthrough,
}


def render_chat(template_id: str, turns: list) -> str:
    """Render turns into the exact token-text sequence for a given template."""
    try:
        renderer = _TEMPLATES[template_id]
    except KeyError:
        raise UnknownTemplate(template_id) from None
    for turn in turns:
        if turn.image_ref is not None and turn.role is not Role.USER:
            raise ImageOnNonUserTurn(turn.role.value)
    return renderer(turns)


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------

@dataclass
class TransportResponse:
    status: int
    body: dict


class HttpTransport:
    """Real HTTP POST via httpx."""

    def post(self, url: str, body: dict, headers: dict, timeout_s: float) -> TransportResponse:
        try:
            resp = httpx.post(url, json=body, headers=headers, timeout=timeout_s)
        except httpx.TimeoutException as exc:
            raise RequestTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise TransportError(None, str(exc)) from exc
        try:
            payload = resp.json()
        except ValueError:
            payload = {"raw": resp.text}
        return TransportResponse(resp.status_code, payload)


class MockTransport:
    """Deterministic scripted transport; records every request it sees.

    ``script`` is either a callable (url, body) -> str | dict | TransportResponse,
    or a list of such entries consumed in order.  Strings become a single
    chat-completion choice.
    """

    def __init__(self, script):
        self.script = script
        self.requests: list = []
        self._lock = threading.Lock()

    def post(self, url: str, body: dict, headers: dict, timeout_s: float) -> TransportResponse:
        with self._lock:
            self.requests.append({"url": url, "body": body, "headers": headers})
            if callable(self.script):
                entry = self.script(url, body)
            else:
                if not self.script:
                    raise TransportError(None, "mock script exhausted")
                entry = self.script.pop(0)
        if callable(entry):
            entry = entry(url, body)
        if isinstance(entry, TransportResponse):
            return entry
        if isinstance(entry, int):
            return TransportResponse(entry, {"error": "scripted failure"})
        if isinstance(entry, dict):
            return TransportResponse(200, entry)
        return TransportResponse(
            200, {"choices": [{"message": {"role": "assistant", "content": str(entry)}}]}
        )


def completion_body(text: str) -> dict:
    """Shape a plain string like a chat-completions response (for scripts)."""
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


# ---------------------------------------------------------------------------
# Completion call
# ---------------------------------------------------------------------------

class Completion(str):
    """The first choice's text; `flagged` is set when banned substrings
    dominate the response (detect-and-flag, never rewritten)."""

    flagged: bool = False
    requests_made: int = 1

    def __new__(cls, text: str, flagged: bool = False, requests_made: int = 1):
        obj = super().__new__(cls, text)
        obj.flagged = flagged
        obj.requests_made = requests_made
        return obj


def _message_content(turn: ChatTurn):
    if turn.image_ref is None:
        return turn.text
    data_url = "data:image/png;base64," + base64.b64encode(turn.image_ref).decode("ascii")
    text = turn.text.replace(IMG_PLACEHOLDER + "\n", "", 1).replace(IMG_PLACEHOLDER, "", 1)
    return [
        {"type": "image_url", "image_url": {"url": data_url}},
        {"type": "text", "text": text},
    ]


def build_request_body(endpoint: ModelEndpoint, turns: list, params: DecodeParams) -> dict:
    messages = []
    for turn in turns:
        messages.append({"role": turn.role.value, "content": _message_content(turn)})
    body = {
        "model": endpoint.model_id,
        "messages": messages,
        "temperature": params.temperature,
        "repetition_penalty": params.repetition_penalty,
        "max_tokens": params.max_new_tokens,
    }
    if params.stop_sequences:
        body["stop"] = list(params.stop_sequences)
    return body


class _Gate:
    """Per-endpoint admission gate bounding concurrent requests."""

    def __init__(self):
        self._semaphores: dict = {}
        self._lock = threading.Lock()

    def acquire(self, endpoint: ModelEndpoint) -> threading.Semaphore:
        with self._lock:
            key = (endpoint.base_url, endpoint.model_id)
            sem = self._semaphores.get(key)
            if sem is None:
                sem = threading.Semaphore(endpoint.max_concurrency)
                self._semaphores[key] = sem
            return sem


_GATE = _Gate()


def _banned_fraction(text: str, banned: tuple) -> float:
    if not text or not banned:
        return 0.0
    hits = sum(text.count(sub) * len(sub) for sub in banned)
    return hits / len(text)


def complete(
    endpoint: ModelEndpoint,
    turns: list,
    params: DecodeParams,
    transport=None,
    sleep: Callable[[float], None] = time.sleep,
    rng: Optional[random.Random] = None,
    banned_flag_fraction: float = 0.5,
) -> Completion:
    """One chat-completion request with retry on transport errors and 5xx."""
    for turn in turns:
        if turn.image_ref is not None and not endpoint.supports_images:
            raise ImageUnsupported(endpoint.model_id)

    headers = {"Content-Type": "application/json"}
    if endpoint.api_key_ref:
        token = os.environ.get(endpoint.api_key_ref)
        if not token:
            raise AuthMissing(endpoint.api_key_ref)
        headers["Authorization"] = f"Bearer {token}"

    transport = transport if transport is not None else HttpTransport()
    rng = rng if rng is not None else random.Random()
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    body = build_request_body(endpoint, turns, params)
    timeout_s = endpoint.request_timeout_ms / 1000.0

    sem = _GATE.acquire(endpoint)
    attempts = 0
    last_error: Optional[Exception] = None
    with sem:
        while attempts <= endpoint.max_retries:
            attempts += 1
            try:
                response = transport.post(url, body, headers, timeout_s)
            except TransportError as exc:
                last_error = exc
                response = None
            if response is not None:
                if response.status >= 500:
                    last_error = TransportError(response.status, "server error")
                elif response.status >= 400:
                    raise TransportError(response.status, json.dumps(response.body)[:500])
                else:
                    text = _first_choice_text(response.body)
                    flagged = (
                        _banned_fraction(text, params.banned_substrings)
                        > banned_flag_fraction if params.banned_substrings else False
                    )
                    return Completion(text, flagged=flagged, requests_made=attempts)
            if attempts > endpoint.max_retries:
                break
            backoff = BACKOFF_BASE_S * (2 ** (attempts - 1)) * rng.random()
            sleep(backoff)
    raise last_error if last_error else TransportError(None, "request failed")


def _first_choice_text(body: dict) -> str:
    choices = body.get("choices") or []
    if not choices:
        return ""
    message = choices[0].get("message") or {}
    return str(message.get("content") or "")
