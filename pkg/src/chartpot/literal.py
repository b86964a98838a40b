"""Fault-tolerant parser for model-emitted dictionary text.

The object language is the Python-literal surface syntax the models were
asked to produce: single- or double-quoted strings, True/False/None, trailing
commas, numeric keys, tuples, and '%'-suffixed numerals.  Strict JSON is a
subset and parses with no repairs recorded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .core import (
    ChartPotError,
    FailureCategory,
    FailureClass,
    PercentScalar,
    Stage,
    ValueTree,
    is_scalar,
    tree_depth,
    tree_node_count,
)
from .interpreter import SandboxLimits, DEFAULT_LIMITS

MAX_PAYLOAD_BYTES = 1 << 20  # defends the repair loop against runaway output


class NoPayloadFound(ChartPotError):
    pass


class Repair(str, Enum):
    FENCE_STRIPPED = "FenceStripped"
    PREFIX_STRIPPED = "PrefixStripped"
    TRAILING_TRIMMED = "TrailingTrimmed"
    QUOTE_NORMALIZED = "QuoteNormalized"
    TRAILING_COMMA_DROPPED = "TrailingCommaDropped"
    DUPLICATE_KEY_DROPPED = "DuplicateKeyDropped"


@dataclass
class ParseOutcome:
    result: Optional[ValueTree] = None
    repairs_applied: list = field(default_factory=list)
    failure: Optional[FailureClass] = None

    @property
    def ok(self) -> bool:
        return self.failure is None


_FENCE_RE = re.compile(r"```[a-zA-Z]*\n?")
_PREFIX_RE = re.compile(r"^\s*chart_dict\s*=\s*")
_SMART_QUOTES = {"‘": "'", "’": "'", "“": '"', "”": '"'}
_PERCENT_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)%$")


def _extract(raw: str):
    """Locate the literal payload; returns (payload, repairs)."""
    repairs = []
    text = raw
    if _FENCE_RE.search(text):
        text = _FENCE_RE.sub("", text)
        repairs.append(Repair.FENCE_STRIPPED)
    stripped = _PREFIX_RE.sub("", text.strip(), count=1)
    if len(stripped) != len(text.strip()):
        repairs.append(Repair.PREFIX_STRIPPED)
    text = stripped

    starts = [i for i in (text.find("{"), text.find("[")) if i != -1]
    if not starts:
        raise NoPayloadFound("no opening '{' or '[' in model output")
    start = min(starts)
    if start > 0 and text[:start].strip():
        repairs.append(Repair.PREFIX_STRIPPED)
    candidate = text[start:]

    end = _balanced_span_end(candidate)
    if end is not None and candidate[end:].strip():
        candidate = candidate[:end]
        repairs.append(Repair.TRAILING_TRIMMED)
    # de-duplicate while preserving order
    seen = set()
    uniq = [r for r in repairs if not (r in seen or seen.add(r))]
    return candidate.strip(), uniq


def _balanced_span_end(text: str):
    """Offset one past the span balancing text[0], or None if never balanced."""
    depth = 0
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c in "\"'":
            quote = c
            i += 1
            while i < n:
                if text[i] == "\\":
                    i += 2
                    continue
                if text[i] == quote:
                    break
                i += 1
            i += 1
            continue
        if c in "{[(":
            depth += 1
        elif c in "}])":
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    return None


def extract_payload(raw_model_text: str) -> str:
    """Strip fences, the chart_dict= prefix, and surrounding prose."""
    payload, _ = _extract(raw_model_text)
    return payload


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_PUNCT = "{}[](),:"


@dataclass
class _Token:
    kind: str  # punct | string | number | percent | name | end
    value: object
    line: int


class _LiteralSyntaxError(Exception):
    def __init__(self, category: FailureCategory, message: str):
        super().__init__(message)
        self.category = category


def _fail(category: FailureCategory, message: str):
    raise _LiteralSyntaxError(category, message)


_NUMBER_RE = re.compile(
    r"[+-]?(?:\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
)


def _tokenize(text: str):
    tokens = []
    i = 0
    line = 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            i += 1
            continue
        if c.isspace():
            i += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c in _PUNCT:
            tokens.append(_Token("punct", c, line))
            i += 1
            continue
        if c in "\"'":
            start_line = line
            quote = c
            i += 1
            chunks = []
            closed = False
            while i < n:
                ch = text[i]
                if ch == "\\":
                    if i + 1 >= n:
                        break
                    nxt = text[i + 1]
                    if nxt == "u" and i + 6 <= n and _is_hex(text[i + 2 : i + 6]):
                        code = int(text[i + 2 : i + 6], 16)
                        i += 6
                        # JSON encodes astral characters as UTF-16 pairs
                        if (
                            0xD800 <= code <= 0xDBFF
                            and text.startswith("\\u", i)
                            and i + 6 <= n
                            and _is_hex(text[i + 2 : i + 6])
                        ):
                            low = int(text[i + 2 : i + 6], 16)
                            if 0xDC00 <= low <= 0xDFFF:
                                code = 0x10000 + ((code - 0xD800) << 10) + (low - 0xDC00)
                                i += 6
                        chunks.append(chr(code))
                        continue
                    chunks.append(_unescape(nxt))
                    if nxt == "\n":
                        line += 1
                    i += 2
                    continue
                if ch == "\n":
                    break
                if ch == quote:
                    closed = True
                    i += 1
                    break
                chunks.append(ch)
                i += 1
            if not closed:
                _fail(
                    FailureCategory.SYNTAX_ERROR,
                    f"unterminated string literal (detected at line {start_line})"
                    f" (<string>, line {start_line})",
                )
            tokens.append(_Token("string", "".join(chunks), start_line))
            continue
        m = _NUMBER_RE.match(text, i)
        if m and (c.isdigit() or c in "+-." ):
            num_text = m.group(0)
            i = m.end()
            if i < n and text[i] == "%":
                i += 1
                tokens.append(_Token("percent", num_text + "%", line))
            else:
                value = float(num_text) if any(x in num_text for x in ".eE") else int(num_text)
                tokens.append(_Token("number", value, line))
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("name", text[i:j], line))
            i = j
            continue
        _fail(
            FailureCategory.SYNTAX_ERROR,
            f"invalid syntax: unexpected character {c!r} (<string>, line {line})",
        )
    tokens.append(_Token("end", None, line))
    return tokens


def _unescape(ch: str) -> str:
    table = {
        "n": "\n", "t": "\t", "r": "\r", "b": "\b", "f": "\f",
        "\\": "\\", "'": "'", '"': '"', "/": "/", "\n": "",
    }
    return table.get(ch, "\\" + ch)


def _is_hex(text: str) -> bool:
    return len(text) == 4 and all(c in "0123456789abcdefABCDEF" for c in text)


# ---------------------------------------------------------------------------
# Recursive-descent parser
# ---------------------------------------------------------------------------

_NAMES = {"True": True, "False": False, "None": None, "true": True, "false": False, "null": None}
_OPENERS = {"{": "}", "[": "]", "(": ")"}


class _Parser:
    def __init__(self, tokens, max_depth: int):
        self.tokens = tokens
        self.pos = 0
        self.max_depth = max_depth
        self.repairs: set = set()

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def parse_document(self):
        value = self.parse_value(depth=1)
        tok = self.peek()
        if tok.kind != "end":
            _fail(
                FailureCategory.SYNTAX_ERROR,
                f"invalid syntax: unexpected trailing content (<string>, line {tok.line})",
            )
        return value

    def parse_value(self, depth: int):
        if depth > self.max_depth:
            _fail(FailureCategory.BUDGET_EXCEEDED, "nesting depth exhausted")
        tok = self.take()
        if tok.kind == "punct" and tok.value == "{":
            return self.parse_mapping(tok, depth)
        if tok.kind == "punct" and tok.value in "[(":
            return self.parse_sequence(tok, depth)
        if tok.kind == "string":
            return _coerce_percent_string(tok.value)
        if tok.kind == "number":
            return tok.value
        if tok.kind == "percent":
            return PercentScalar(float(tok.value[:-1]), tok.value)
        if tok.kind == "name":
            if tok.value in _NAMES:
                return _NAMES[tok.value]
            _fail(
                FailureCategory.SYNTAX_ERROR,
                f"invalid syntax: bare name {tok.value!r} (<string>, line {tok.line})",
            )
        if tok.kind == "end":
            _fail(
                FailureCategory.TRUNCATED,
                f"unexpected end of input (<string>, line {tok.line})",
            )
        _fail(
            FailureCategory.SYNTAX_ERROR,
            f"invalid syntax near {tok.value!r} (<string>, line {tok.line})",
        )

    def _truncated(self, opener: _Token):
        _fail(
            FailureCategory.TRUNCATED,
            f"'{opener.value}' was never closed (<string>, line {opener.line})",
        )

    def parse_mapping(self, opener: _Token, depth: int) -> dict:
        out: dict = {}
        first = True
        while True:
            tok = self.peek()
            if tok.kind == "end":
                self._truncated(opener)
            if tok.kind == "punct" and tok.value == "}":
                self.take()
                return out
            if not first:
                if not (tok.kind == "punct" and tok.value == ","):
                    _fail(
                        FailureCategory.SYNTAX_ERROR,
                        f"expected ',' (<string>, line {tok.line})",
                    )
                self.take()
                tok = self.peek()
                if tok.kind == "punct" and tok.value == "}":
                    self.repairs.add(Repair.TRAILING_COMMA_DROPPED)
                    self.take()
                    return out
                if tok.kind == "end":
                    self._truncated(opener)
            key = self.parse_key(depth)
            tok = self.peek()
            if tok.kind == "end":
                self._truncated(opener)
            if tok.kind == "punct" and tok.value in (",", "}"):
                # brace display without ':' separators is a set, not a mapping
                _fail(
                    FailureCategory.OTHER,
                    f"set displays are not supported (<string>, line {tok.line})",
                )
            if not (tok.kind == "punct" and tok.value == ":"):
                _fail(
                    FailureCategory.SYNTAX_ERROR,
                    f"expected ':' (<string>, line {tok.line})",
                )
            self.take()
            if self.peek().kind == "end":
                self._truncated(opener)
            value = self.parse_value(depth + 1)
            if key in out:
                self.repairs.add(Repair.DUPLICATE_KEY_DROPPED)
            out[key] = value
            first = False

    def parse_key(self, depth: int):
        tok = self.peek()
        if tok.kind == "punct" and tok.value in "{[(":
            _fail(
                FailureCategory.OTHER,
                f"unhashable mapping key (<string>, line {tok.line})",
            )
        key = self.parse_value(depth + 1)
        if not is_scalar(key):
            _fail(FailureCategory.OTHER, "unhashable mapping key")
        if isinstance(key, PercentScalar):
            key = key.text
        return key

    def parse_sequence(self, opener: _Token, depth: int) -> list:
        closer = _OPENERS[opener.value]
        out: list = []
        first = True
        while True:
            tok = self.peek()
            if tok.kind == "end":
                self._truncated(opener)
            if tok.kind == "punct" and tok.value == closer:
                self.take()
                return out
            if not first:
                if not (tok.kind == "punct" and tok.value == ","):
                    _fail(
                        FailureCategory.SYNTAX_ERROR,
                        f"expected ',' (<string>, line {tok.line})",
                    )
                self.take()
                tok = self.peek()
                if tok.kind == "punct" and tok.value == closer:
                    self.repairs.add(Repair.TRAILING_COMMA_DROPPED)
                    self.take()
                    return out
                if tok.kind == "end":
                    self._truncated(opener)
            out.append(self.parse_value(depth + 1))
            first = False


def _coerce_percent_string(text: str):
    if _PERCENT_RE.match(text.strip()):
        return PercentScalar(float(text.strip()[:-1]), text.strip())
    return text


def _parse_failure(category: FailureCategory, message: str) -> ParseOutcome:
    return ParseOutcome(failure=FailureClass(Stage.DICT_PARSE, category, message))


def parse_value_tree(payload: str, max_depth: int = DEFAULT_LIMITS.max_depth) -> ParseOutcome:
    """Parse a literal payload into a value tree; failures are returned, not raised."""
    if len(payload.encode("utf-8", errors="replace")) > MAX_PAYLOAD_BYTES:
        return _parse_failure(
            FailureCategory.TRUNCATED,
            f"payload exceeds {MAX_PAYLOAD_BYTES} bytes",
        )
    repairs = []
    normalized = payload
    if any(q in payload for q in _SMART_QUOTES):
        for smart, plain in _SMART_QUOTES.items():
            normalized = normalized.replace(smart, plain)
        repairs.append(Repair.QUOTE_NORMALIZED)
    try:
        tokens = _tokenize(normalized)
        parser = _Parser(tokens, max_depth)
        tree = parser.parse_document()
    except _LiteralSyntaxError as exc:
        return _parse_failure(exc.category, str(exc))
    ordered = repairs + [r for r in Repair if r in parser.repairs]
    return ParseOutcome(result=tree, repairs_applied=ordered)


def parse_model_text(raw: str, max_depth: int = DEFAULT_LIMITS.max_depth) -> ParseOutcome:
    """extract_payload + parse_value_tree, with extraction repairs folded in."""
    try:
        payload, extraction_repairs = _extract(raw)
    except NoPayloadFound as exc:
        return _parse_failure(FailureCategory.EMPTY_OUTPUT, str(exc))
    outcome = parse_value_tree(payload, max_depth=max_depth)
    if outcome.ok:
        outcome.repairs_applied = extraction_repairs + outcome.repairs_applied
    return outcome


def validate_executable(tree: ValueTree, limits: SandboxLimits = DEFAULT_LIMITS):
    """Check a parsed tree is admissible as chart_dict input to the interpreter.

    Returns None when admissible, FailureClass otherwise.
    """
    if tree_depth(tree) > limits.max_depth:
        return FailureClass(
            Stage.DICT_PARSE, FailureCategory.BUDGET_EXCEEDED, "tree depth exhausted"
        )
    if tree_node_count(tree) > limits.max_nodes:
        return FailureClass(
            Stage.DICT_PARSE, FailureCategory.BUDGET_EXCEEDED, "tree node budget exhausted"
        )
    bad = _find_bad_key(tree)
    if bad is not None:
        return FailureClass(
            Stage.DICT_PARSE,
            FailureCategory.OTHER,
            f"mapping key is not a hashable scalar: {bad!r}",
        )
    return None


def _find_bad_key(tree: ValueTree):
    if isinstance(tree, dict):
        for key, value in tree.items():
            if not is_scalar(key):
                return key
            found = _find_bad_key(value)
            if found is not None:
                return found
    elif isinstance(tree, (list, tuple)):
        for value in tree:
            found = _find_bad_key(value)
            if found is not None:
                return found
    return None
