"""Pairwise human-evaluation backend: sample blinded summary pairs from two
run files, serve them over a small HTTP JSON API, record evaluator choices,
and aggregate preference scores (total selections per system divided by the
number of evaluators)."""

from __future__ import annotations

import json
import random
import secrets
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from .core import CHART_TYPE_ORDER, ChartPotError, load_manifest, read_runs


class DuplicateChoice(ChartPotError):
    pass


class UnknownPair(ChartPotError):
    pass


@dataclass(frozen=True)
class PreferencePair:
    pair_id: str
    chart_id: str
    image_path: str
    system_a: str
    summary_a: str
    system_b: str
    summary_b: str
    presentation_seed: int

    @property
    def left_system(self) -> str:
        return self.system_a if self.presentation_seed % 2 == 0 else self.system_b

    @property
    def right_system(self) -> str:
        return self.system_b if self.presentation_seed % 2 == 0 else self.system_a

    @property
    def left_summary(self) -> str:
        return self.summary_a if self.presentation_seed % 2 == 0 else self.summary_b

    @property
    def right_summary(self) -> str:
        return self.summary_b if self.presentation_seed % 2 == 0 else self.summary_a

    def system_for_side(self, side: str) -> str:
        if side == "left":
            return self.left_system
        if side == "right":
            return self.right_system
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")


@dataclass(frozen=True)
class ChoiceRecord:
    pair_id: str
    evaluator_id: str
    chosen_system: str
    timestamp: float

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "evaluator_id": self.evaluator_id,
            "chosen_system": self.chosen_system,
            "timestamp": self.timestamp,
        }


@dataclass
class SampleResult:
    pairs: list
    warnings: list = field(default_factory=list)


def _summaries_by_chart(runs_path: str) -> dict:
    out = {}
    for run in read_runs(runs_path):
        if run.summary:
            out[run.chart_id] = run.summary
    return out


def sample_pairs(
    runs_a: str,
    runs_b: str,
    manifest: str,
    per_type: int,
    seed: int,
    system_a: str = "a",
    system_b: str = "b",
) -> SampleResult:
    """Seeded uniform sampling of per_type charts per available chart type."""
    records = load_manifest(manifest)
    sums_a = _summaries_by_chart(runs_a)
    sums_b = _summaries_by_chart(runs_b)
    eligible = [
        rec for rec in records if rec.id in sums_a and rec.id in sums_b
    ]
    by_type: dict = {ct: [] for ct in CHART_TYPE_ORDER}
    for rec in eligible:
        by_type[rec.chart_type].append(rec)

    rng = random.Random(seed)
    side_offset = rng.randint(0, 1)
    warnings = []
    chosen = []
    for ct in CHART_TYPE_ORDER:
        bucket = sorted(by_type[ct], key=lambda r: r.id)
        if not bucket:
            continue
        if len(bucket) < per_type:
            warnings.append(
                f"InsufficientCharts({ct.label}, have={len(bucket)}, want={per_type})"
            )
            picked = bucket
        else:
            picked = rng.sample(bucket, per_type)
        chosen.extend(picked)

    pairs = []
    for idx, rec in enumerate(chosen):
        pairs.append(
            PreferencePair(
                pair_id=f"pair-{idx:04d}-{rec.id}",
                chart_id=rec.id,
                image_path=rec.image_path,
                system_a=system_a,
                summary_a=sums_a[rec.id],
                system_b=system_b,
                summary_b=sums_b[rec.id],
                presentation_seed=idx + side_offset,
            )
        )
    return SampleResult(pairs=pairs, warnings=warnings)


class ChoiceLog:
    """Append-only choice store with an in-memory duplicate index."""

    def __init__(self, pairs: list, log_path: Optional[str] = None):
        self.pairs = {p.pair_id: p for p in pairs}
        self.log_path = Path(log_path) if log_path else None
        self._lock = threading.Lock()
        self.choices: list = []
        self._seen: dict = {}  # (pair_id, evaluator_id) -> chosen_system
        if self.log_path and self.log_path.exists():
            with open(self.log_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        d = json.loads(line)
                        rec = ChoiceRecord(
                            d["pair_id"], d["evaluator_id"],
                            d["chosen_system"], d["timestamp"],
                        )
                        self.choices.append(rec)
                        self._seen[(rec.pair_id, rec.evaluator_id)] = rec.chosen_system

    def prior_choice(self, pair_id: str, evaluator_id: str) -> Optional[str]:
        with self._lock:
            return self._seen.get((pair_id, evaluator_id))

    def record_choice(self, choice: ChoiceRecord) -> None:
        pair = self.pairs.get(choice.pair_id)
        if pair is None:
            raise UnknownPair(choice.pair_id)
        if choice.chosen_system not in (pair.system_a, pair.system_b):
            raise ValueError(
                f"chosen_system {choice.chosen_system!r} is not in this pair"
            )
        with self._lock:
            key = (choice.pair_id, choice.evaluator_id)
            if key in self._seen:
                raise DuplicateChoice(f"{choice.evaluator_id} already chose for {choice.pair_id}")
            self._seen[key] = choice.chosen_system
            self.choices.append(choice)
            if self.log_path:
                with open(self.log_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(choice.to_dict(), ensure_ascii=False) + "\n")

    def done_count(self, evaluator_id: str) -> int:
        with self._lock:
            return sum(1 for (_, ev) in self._seen if ev == evaluator_id)


def aggregate_scores(choices: list, evaluators: int) -> dict:
    """score(system) = total selections of that system / evaluator count."""
    if evaluators < 1:
        raise ValueError("evaluators must be >= 1")
    totals: dict = {}
    for choice in choices:
        totals[choice.chosen_system] = totals.get(choice.chosen_system, 0) + 1
    return {system: count / evaluators for system, count in totals.items()}


# ---------------------------------------------------------------------------
# HTTP service
# ---------------------------------------------------------------------------

class HumanEvalService:
    def __init__(
        self,
        pairs: list,
        images_dir: Optional[str] = None,
        choices_log: Optional[str] = None,
        admin_token: Optional[str] = None,
        clock=time.time,
    ):
        self.ordered_pairs = list(pairs)
        self.log = ChoiceLog(pairs, choices_log)
        self.images_dir = Path(images_dir) if images_dir else None
        self.admin_token = admin_token or secrets.token_hex(8)
        self.clock = clock
        self._sessions: dict = {}
        self._lock = threading.Lock()

    # -- session flow ------------------------------------------------------

    def open_session(self) -> str:
        session_id = secrets.token_hex(12)
        with self._lock:
            self._sessions[session_id] = {"done": 0}
        return session_id

    def _session(self, session_id: str) -> dict:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        return session

    def next_view(self, session_id: str) -> dict:
        session = self._session(session_id)
        done = session["done"]
        total = len(self.ordered_pairs)
        if done >= total:
            return {"done": True, "progress": {"done": done, "total": total}}
        pair = self.ordered_pairs[done]
        image_name = Path(pair.image_path).name
        return {
            "done": False,
            "pair_id": pair.pair_id,
            "chart_image_url": f"/images/{image_name}",
            "left": pair.left_summary,
            "right": pair.right_summary,
            "progress": {"done": done, "total": total},
        }

    def submit_choice(self, session_id: str, pair_id: str, side: str) -> dict:
        session = self._session(session_id)
        pair = self.log.pairs.get(pair_id)
        if pair is None:
            raise UnknownPair(pair_id)
        chosen = pair.system_for_side(side)
        prior = self.log.prior_choice(pair_id, session_id)
        if prior is not None:
            # retried/double-clicked submission: keep exactly one record
            return {"status": "already-recorded", "progress": self._progress(session)}
        self.log.record_choice(
            ChoiceRecord(pair_id, session_id, chosen, self.clock())
        )
        with self._lock:
            session["done"] = self.log.done_count(session_id)
        return {"status": "recorded", "progress": self._progress(session)}

    def _progress(self, session: dict) -> dict:
        return {"done": session["done"], "total": len(self.ordered_pairs)}

    def scores(self) -> dict:
        with self._lock:
            evaluators = max(1, len(self._sessions))
        agg = aggregate_scores(self.log.choices, evaluators)
        return {
            "scores": {system: round(score, 2) for system, score in agg.items()},
            "pair_count": len(self.ordered_pairs),
            "evaluators": evaluators,
        }


def _make_handler(service: HumanEvalService):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # quiet test output
            pass

        def _send_json(self, payload: dict, status: int = 200):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.end_headers()
            self.wfile.write(body)

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.end_headers()

        def do_POST(self):
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b"{}"
            try:
                payload = json.loads(raw.decode("utf-8") or "{}")
            except json.JSONDecodeError:
                self._send_json({"error": "invalid JSON"}, 400)
                return
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            if parts == ["session"]:
                self._send_json({"session_id": service.open_session()})
                return
            if len(parts) == 3 and parts[0] == "session" and parts[2] == "choice":
                session_id = parts[1]
                try:
                    result = service.submit_choice(
                        session_id, payload.get("pair_id", ""), payload.get("side", "")
                    )
                except KeyError:
                    self._send_json({"error": "unknown session"}, 404)
                    return
                except UnknownPair:
                    self._send_json({"error": "unknown pair"}, 404)
                    return
                except (DuplicateChoice, ValueError) as exc:
                    self._send_json({"error": str(exc)}, 409)
                    return
                self._send_json(result)
                return
            self._send_json({"error": "not found"}, 404)

        def do_GET(self):
            path, _, query = self.path.partition("?")
            parts = [p for p in path.split("/") if p]
            if len(parts) == 3 and parts[0] == "session" and parts[2] == "next":
                try:
                    view = service.next_view(parts[1])
                except KeyError:
                    self._send_json({"error": "unknown session"}, 404)
                    return
                self._send_json(view)
                return
            if parts == ["scores"]:
                params = dict(
                    kv.split("=", 1) for kv in query.split("&") if "=" in kv
                )
                if params.get("token") != service.admin_token:
                    self._send_json({"error": "admin token required"}, 403)
                    return
                self._send_json(service.scores())
                return
            if len(parts) == 2 and parts[0] == "images" and service.images_dir:
                target = (service.images_dir / parts[1]).resolve()
                if (
                    service.images_dir.resolve() in target.parents
                    and target.is_file()
                ):
                    data = target.read_bytes()
                    self.send_response(200)
                    self.send_header("Content-Type", "image/png")
                    self.send_header("Content-Length", str(len(data)))
                    self.send_header("Access-Control-Allow-Origin", "*")
                    self.end_headers()
                    self.wfile.write(data)
                    return
                self._send_json({"error": "image not found"}, 404)
                return
            self._send_json({"error": "not found"}, 404)

    return Handler


def serve(service: HumanEvalService, host: str = "127.0.0.1", port: int = 8808):
    """Blocking HTTP server; returns the server object when used with
    serve_in_background."""
    server = ThreadingHTTPServer((host, port), _make_handler(service))
    server.serve_forever()
    return server


def serve_in_background(service: HumanEvalService, host: str = "127.0.0.1", port: int = 0):
    """Start the service on a daemon thread; returns (server, actual_port)."""
    server = ThreadingHTTPServer((host, port), _make_handler(service))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, server.server_address[1]
