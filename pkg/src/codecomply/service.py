"""HTTP review service: immutable model/index snapshots plus a durable judgment log.

Read endpoints (health, search, classify, snippets, metrics) are pure over
state loaded at startup. Judgment writes funnel through a single writer
thread and are flushed and fsynced before the response commits, so an
acknowledged judgment survives a crash. Several models can be served side by
side; each gets an opaque tag derived from its content hash, and tag order is
shuffled per request so reviewers cannot infer which training produced which
results.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import queue
import threading
import time
import urllib.parse
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Sequence

import numpy as np

from . import assessor as asr
from . import encoder as enc
from .corpus import io as cio
from .corpus.types import Facet
from .errors import CodecomplyError

log = logging.getLogger(__name__)

DECISIONS = ("accept", "reject")


class ServiceError(CodecomplyError):
    pass


class JudgmentConflict(ServiceError):
    """Same judgment id resubmitted with a different payload."""


@dataclass(frozen=True)
class JudgmentRecord:
    """One reviewer decision about one (policy, snippet, facet) detection."""

    id: str
    policy_text: str
    snippet_id: str
    facet: Facet
    model_tag: str
    decision: str
    timestamp: float
    reviewer: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise ServiceError("judgment id must be non-empty")
        if not isinstance(self.facet, Facet):
            raise ServiceError("facet must be compliant or noncompliant")
        if self.decision not in DECISIONS:
            raise ServiceError(f"decision must be accept or reject, got {self.decision!r}")

    def payload_key(self) -> tuple:
        # idempotency ignores the timestamp: a client retry of the same
        # judgment must not read as a conflict
        return (self.id, self.policy_text, self.snippet_id, self.facet,
                self.model_tag, self.decision, self.reviewer)

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "policy_text": self.policy_text,
            "snippet_id": self.snippet_id,
            "facet": self.facet.value,
            "model_tag": self.model_tag,
            "decision": self.decision,
            "timestamp": self.timestamp,
            "reviewer": self.reviewer,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "JudgmentRecord":
        try:
            return cls(
                id=str(raw["id"]),
                policy_text=str(raw["policy_text"]),
                snippet_id=str(raw["snippet_id"]),
                facet=Facet(raw["facet"]),
                model_tag=str(raw["model_tag"]),
                decision=str(raw["decision"]),
                timestamp=float(raw["timestamp"]),
                reviewer=str(raw.get("reviewer", "")),
            )
        except KeyError as exc:
            raise ServiceError(f"judgment missing field {exc.args[0]!r}") from exc
        except ValueError as exc:
            raise ServiceError(f"invalid judgment field: {exc}") from exc


class JudgmentStore:
    """Append-only JSONL log, one writer thread, durable before acknowledge.

    Submissions are idempotent on the client-supplied id: replaying an
    identical record returns the stored one, a different payload under the
    same id raises ``JudgmentConflict``. Readers see a consistent prefix of
    the log.
    """

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.Lock()
        self._records: dict[str, JudgmentRecord] = {}
        self._order: list[str] = []
        if self._path.exists():
            with open(self._path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = JudgmentRecord.from_json_dict(json.loads(line))
                    except (json.JSONDecodeError, ServiceError) as exc:
                        raise ServiceError(f"{self._path}:{lineno}: {exc}") from exc
                    self._records[record.id] = record
                    self._order.append(record.id)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self._path, "a", encoding="utf-8")
        self._queue: queue.Queue = queue.Queue()
        self._writer = threading.Thread(
            target=self._writer_loop, name="judgment-writer", daemon=True
        )
        self._writer.start()

    def submit(self, record: JudgmentRecord) -> tuple[JudgmentRecord, bool]:
        """Store one record; blocks until it is on disk. Returns (stored, created)."""
        done = threading.Event()
        box: dict = {}
        self._queue.put((record, done, box))
        done.wait()
        if "error" in box:
            raise box["error"]
        return box["record"], box["created"]

    def _writer_loop(self) -> None:
        while True:
            item = self._queue.get()
            if item is None:
                return
            record, done, box = item
            try:
                existing = self._records.get(record.id)
                if existing is not None:
                    if existing.payload_key() != record.payload_key():
                        raise JudgmentConflict(
                            f"judgment {record.id!r} already stored with a different payload"
                        )
                    box["record"], box["created"] = existing, False
                else:
                    self._fh.write(json.dumps(record.to_json_dict()) + "\n")
                    self._fh.flush()
                    os.fsync(self._fh.fileno())
                    with self._lock:
                        self._records[record.id] = record
                        self._order.append(record.id)
                    box["record"], box["created"] = record, True
            except Exception as exc:  # surfaced to the submitting thread
                box["error"] = exc
            finally:
                done.set()

    def judgments(self, model_tag: str | None = None) -> list[JudgmentRecord]:
        with self._lock:
            records = [self._records[i] for i in self._order]
        if model_tag is None:
            return records
        return [r for r in records if r.model_tag == model_tag]

    def __len__(self) -> int:
        with self._lock:
            return len(self._order)

    def close(self) -> None:
        self._queue.put(None)
        self._writer.join(timeout=5.0)
        self._fh.close()


@dataclass(frozen=True)
class ServedModel:
    tag: str
    model: enc.Model
    index: asr.EmbeddingIndex


def model_tag_for(model_hash: str) -> str:
    # content-derived: opaque to reviewers, stable across restarts so
    # acceptance metrics keep accumulating under one tag
    return f"m-{model_hash[:10]}"


class ServiceState:
    """Everything the handlers read: served models, snippet codes, judgment store."""

    def __init__(
        self,
        served: Sequence[ServedModel],
        snippet_codes: dict[str, str],
        store: JudgmentStore,
        alpha: float = 0.2,
        seed: int = 0,
    ):
        if not served:
            raise ServiceError("no models to serve")
        tags = [m.tag for m in served]
        if len(set(tags)) != len(tags):
            raise ServiceError(f"duplicate model tags: {tags}")
        for m in served:
            if m.index.model_hash != m.model.model_hash:
                raise asr.StaleIndexError(
                    f"index for tag {m.tag} was built by a different model"
                )
            missing = [i for i in m.index.snippet_ids if i not in snippet_codes]
            if missing:
                raise ServiceError(
                    f"index ids missing from the snippet corpus: {missing[:3]}"
                    f"{' ...' if len(missing) > 3 else ''}"
                )
        if alpha <= 0:
            raise ServiceError(f"alpha must be positive, got {alpha}")
        self.served = {m.tag: m for m in served}
        self.default = served[0]
        self.snippet_codes = snippet_codes
        self.store = store
        self.alpha = alpha
        self._known_ids = {i for m in served for i in m.index.snippet_ids}
        self._rng_lock = threading.Lock()
        self._rng = np.random.default_rng(seed)

    def pick(self, model_tag: str | None) -> ServedModel:
        if model_tag is not None:
            try:
                return self.served[model_tag]
            except KeyError:
                raise ServiceError(f"unknown model_tag {model_tag!r}") from None
        if len(self.served) == 1:
            return self.default
        with self._rng_lock:
            i = int(self._rng.integers(len(self.served)))
        return list(self.served.values())[i]

    def shuffled_tags(self) -> list[str]:
        tags = sorted(self.served)
        with self._rng_lock:
            self._rng.shuffle(tags)
        return tags

    def knows_snippet(self, snippet_id: str) -> bool:
        return snippet_id in self._known_ids


def load_state(
    model_paths: Sequence[str | Path],
    index_paths: Sequence[str | Path],
    snippet_paths: Sequence[str | Path],
    judgments_path: str | Path,
    alpha: float = 0.2,
    seed: int = 0,
) -> ServiceState:
    if len(model_paths) != len(index_paths):
        raise ServiceError(
            f"{len(model_paths)} models but {len(index_paths)} indexes; need one index per model"
        )
    if not snippet_paths:
        raise ServiceError("search responses carry snippet code; a snippet corpus is required")
    served = []
    for mp, ip in zip(model_paths, index_paths):
        model = enc.load_model(mp)
        index = asr.load_index(ip)
        served.append(ServedModel(tag=model_tag_for(model.model_hash), model=model, index=index))
    snippet_codes: dict[str, str] = {}
    for sp in snippet_paths:
        for snippet in cio.read_snippets(sp):
            snippet_codes[snippet.id] = snippet.code
    return ServiceState(
        served=served,
        snippet_codes=snippet_codes,
        store=JudgmentStore(judgments_path),
        alpha=alpha,
        seed=seed,
    )


def _acceptance_payload(state: ServiceState, model_tag: str | None) -> dict:
    records = state.store.judgments(model_tag)
    payload = {
        "model_tag": model_tag,
        "compliant": None,
        "noncompliant": None,
        "overall": None,
        "n_judgments": len(records),
    }
    if records:
        rates = asr.acceptance_rate([r.to_json_dict() for r in records])
        payload.update(
            compliant=rates.compliant,
            noncompliant=rates.noncompliant,
            overall=rates.overall,
        )
    return payload


def build_handler(state: ServiceState, static_dir: str | Path | None = None):
    static_root = Path(static_dir).resolve() if static_dir is not None else None

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt: str, *args) -> None:
            log.debug("%s %s", self.address_string(), fmt % args)

        def _send(self, status: int, obj: dict) -> None:
            body = json.dumps(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _error(self, status: int, message: str) -> None:
            self._send(status, {"error": message})

        def _read_json(self) -> dict | None:
            length = self.headers.get("Content-Length")
            if length is None:
                self._error(400, "missing Content-Length")
                return None
            try:
                raw = self.rfile.read(int(length))
                obj = json.loads(raw)
            except (ValueError, json.JSONDecodeError):
                self._error(400, "body must be a JSON object")
                return None
            if not isinstance(obj, dict):
                self._error(400, "body must be a JSON object")
                return None
            return obj

        # --- reads ------------------------------------------------------

        def do_GET(self) -> None:  # noqa: N802 (http.server API)
            parsed = urllib.parse.urlparse(self.path)
            path = parsed.path
            try:
                if path == "/health":
                    self._send(
                        200,
                        {"status": "ok", "model_hash": state.default.model.model_hash},
                    )
                elif path == "/models":
                    self._send(200, {"model_tags": state.shuffled_tags()})
                elif path == "/metrics/acceptance":
                    params = urllib.parse.parse_qs(parsed.query)
                    tag = params.get("model_tag", [None])[0]
                    if tag is not None and tag not in state.served and not any(
                        r.model_tag == tag for r in state.store.judgments()
                    ):
                        self._error(404, f"unknown model_tag {tag!r}")
                        return
                    self._send(200, _acceptance_payload(state, tag))
                elif path.startswith("/snippets/"):
                    snippet_id = urllib.parse.unquote(path[len("/snippets/") :])
                    code = state.snippet_codes.get(snippet_id)
                    if code is None:
                        self._error(404, f"unknown snippet {snippet_id!r}")
                        return
                    self._send(200, {"id": snippet_id, "code": code})
                elif static_root is not None:
                    self._serve_static(path)
                else:
                    self._error(404, f"no route for {path}")
            except Exception as exc:
                log.exception("GET %s failed", path)
                self._error(500, f"internal error: {exc}")

        def _serve_static(self, path: str) -> None:
            rel = urllib.parse.unquote(path).lstrip("/") or "index.html"
            target = (static_root / rel).resolve()
            if not str(target).startswith(str(static_root)) or not target.is_file():
                self._error(404, f"no route for {path}")
                return
            ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
            body = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        # --- writes -----------------------------------------------------

        def do_POST(self) -> None:  # noqa: N802
            path = urllib.parse.urlparse(self.path).path
            body = self._read_json()
            if body is None:
                return
            try:
                if path == "/search":
                    self._post_search(body)
                elif path == "/classify":
                    self._post_classify(body)
                elif path == "/judgments":
                    self._post_judgment(body)
                else:
                    self._error(404, f"no route for {path}")
            except (ServiceError, asr.AssessError) as exc:
                status = 409 if isinstance(exc, JudgmentConflict) else 400
                self._error(status, str(exc))
            except Exception as exc:
                log.exception("POST %s failed", path)
                self._error(500, f"internal error: {exc}")

        def _post_search(self, body: dict) -> None:
            text = body.get("policy_text")
            if not isinstance(text, str) or not text.strip():
                self._error(400, "policy_text must be a non-empty string")
                return
            try:
                facet = Facet(body.get("facet"))
            except ValueError:
                self._error(400, "facet must be compliant or noncompliant")
                return
            k = body.get("k", 5)
            if not isinstance(k, int) or isinstance(k, bool) or k < 1:
                self._error(400, "k must be a positive integer")
                return
            served = state.pick(body.get("model_tag"))
            results = asr.search(text, facet, served.index, k, served.model)
            self._send(
                200,
                {
                    "results": [
                        {
                            "snippet_id": r.snippet_id,
                            "code": state.snippet_codes[r.snippet_id],
                            "distance": r.distance,
                            "rank": r.rank,
                        }
                        for r in results
                    ],
                    "model_hash": served.model.model_hash,
                    "model_tag": served.tag,
                },
            )

        def _post_classify(self, body: dict) -> None:
            text = body.get("policy_text")
            code = body.get("code")
            if not isinstance(text, str) or not text.strip():
                self._error(400, "policy_text must be a non-empty string")
                return
            if not isinstance(code, str) or not code.strip():
                self._error(400, "code must be a non-empty string")
                return
            served = state.pick(body.get("model_tag"))
            verdict = asr.classify(text, code, served.model, alpha=state.alpha)
            payload = {
                "label": verdict.label.value,
                "d_avg": verdict.d_avg,
                "p_compliant": verdict.p_compliant,
                "p_noncompliant": verdict.p_noncompliant,
                "model_hash": served.model.model_hash,
                "model_tag": served.tag,
            }
            self._send(200, payload)

        def _post_judgment(self, body: dict) -> None:
            raw = dict(body)
            raw.setdefault("timestamp", time.time())
            record = JudgmentRecord.from_json_dict(raw)
            if not state.knows_snippet(record.snippet_id):
                self._error(404, f"unknown snippet {record.snippet_id!r}")
                return
            stored, created = state.store.submit(record)
            self._send(201 if created else 200, {"id": stored.id})

    return Handler


class Service:
    """ThreadingHTTPServer wrapper owning the state's lifecycle."""

    def __init__(
        self,
        state: ServiceState,
        host: str = "127.0.0.1",
        port: int = 0,
        static_dir: str | Path | None = None,
    ):
        self.state = state
        self._server = ThreadingHTTPServer((host, port), build_handler(state, static_dir))
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="codecomply-http", daemon=True
        )
        self._thread.start()
        log.info("serving on port %d", self.port)

    def serve_forever(self) -> None:
        log.info("serving on port %d", self.port)
        try:
            self._server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None
        self.state.store.close()
