"""HTTP facade over the engine: ask, moderation queue, corpus import,
health, and metrics.

Every non-2xx response body has exactly one shape: {code, message, trace_id}.
Request bodies are parsed by hand so malformed input maps to 400 rather than
framework-specific validation errors.
"""
from __future__ import annotations

import logging
import threading
import uuid
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from .config import ServiceConfig, load_config
from .errors import CorpusError, ModerationError, SafeqaError
from .langbridge import AudioRef
from .pipeline import AskRequest, Engine

log = logging.getLogger("safeqa.service")


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class Metrics:
    """Line-oriented counters: requests by route, rail triggers by rule,
    provider latency. Never sees raw query text."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counters: dict[str, float] = {}
        self._latency_sum = 0.0
        self._latency_count = 0

    def bump(self, name: str, amount: float = 1.0) -> None:
        with self._lock:
            self._counters[name] = self._counters.get(name, 0) + amount

    def record_ask(self, envelope) -> None:
        self.bump("requests_total")
        self.bump(f"requests_route_{envelope.route_taken}")
        report = envelope.rail_report
        verdicts = [report.input_verdict]
        if report.output_verdict:
            verdicts.append(report.output_verdict)
        for verdict in verdicts:
            for rule_id in verdict.triggered:
                self.bump(f"rail_trigger_{rule_id}")
        latency = (envelope.provenance or {}).get("latency") \
            if envelope.route_taken == "generation" else None
        if latency is not None:
            with self._lock:
                self._latency_sum += latency * 1000.0
                self._latency_count += 1

    def render(self) -> str:
        with self._lock:
            lines = [f"{name} {value:g}" for name, value
                     in sorted(self._counters.items())]
            if self._latency_count:
                lines.append(
                    f"generation_latency_ms_avg "
                    f"{self._latency_sum / self._latency_count:.3f}")
        return "\n".join(lines) + "\n"


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"code": code, "message": message,
                                 "trace_id": uuid.uuid4().hex[:12]})


def create_app(config: Optional[ServiceConfig] = None,
               engine: Optional[Engine] = None) -> FastAPI:
    """App factory. Passing neither config nor engine yields a service that
    answers health checks but 503s on everything else."""
    app = FastAPI(title="safeqa", docs_url=None, redoc_url=None)
    if engine is None and config is not None:
        from .bootstrap import build_engine

        engine = build_engine(config)
    app.state.engine = engine
    app.state.config = config or ServiceConfig()
    app.state.metrics = Metrics()

    def get_engine() -> Engine:
        if app.state.engine is None:
            raise ApiError(503, "not_initialized", "engine not initialized")
        return app.state.engine

    def require_token(request: Request, *allowed: str) -> None:
        header = request.headers.get("authorization", "")
        token = header.removeprefix("Bearer ").strip() if header else ""
        if token not in allowed:
            raise ApiError(401, "unauthorized", "missing or invalid bearer token")

    def user_auth(request: Request) -> None:
        cfg = app.state.config
        require_token(request, cfg.user_token, cfg.moderator_token)

    def moderator_auth(request: Request) -> None:
        require_token(request, app.state.config.moderator_token)

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return _error_response(exc.status, exc.code, exc.message)

    @app.exception_handler(Exception)
    async def handle_unexpected(request: Request, exc: Exception):
        log.exception("unhandled error")
        return _error_response(500, "internal", "internal error")

    async def read_json_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise ApiError(400, "malformed_body", "body must be valid JSON")
        if not isinstance(body, dict):
            raise ApiError(400, "malformed_body", "body must be a JSON object")
        return body

    @app.post("/v1/ask")
    async def ask(request: Request):
        user_auth(request)
        eng = get_engine()
        body = await read_json_body(request)
        text = body.get("text")
        audio_uri = body.get("audio_uri")
        if (text is None) == (audio_uri is None):
            raise ApiError(400, "malformed_body",
                           "exactly one of text/audio_uri is required")
        if text is not None and not isinstance(text, str):
            raise ApiError(400, "malformed_body", "text must be a string")
        try:
            ask_request = AskRequest(
                query_text=text,
                audio=AudioRef(uri=audio_uri) if audio_uri else None,
                language=body.get("lang", app.state.config.pipeline_lang),
                session_id=str(body.get("session_id", "")))
        except ValueError as exc:
            raise ApiError(400, "malformed_body", str(exc))
        envelope = eng.answer(ask_request)
        app.state.metrics.record_ask(envelope)
        return JSONResponse(envelope.to_dict())

    @app.get("/v1/moderation/queue")
    async def moderation_queue(request: Request, status: str = "open",
                               cursor: Optional[str] = None, limit: int = 50):
        moderator_auth(request)
        eng = get_engine()
        try:
            items, next_cursor = eng.moderation.list_items(
                status=status or None, cursor=cursor, limit=limit)
        except ModerationError as exc:
            raise ApiError(400, "bad_cursor", str(exc))
        return JSONResponse({"items": [i.to_dict() for i in items],
                             "next_cursor": next_cursor})

    @app.post("/v1/moderation/{item_id}/resolve")
    async def resolve(item_id: str, request: Request):
        moderator_auth(request)
        eng = get_engine()
        body = await read_json_body(request)
        answer = body.get("answer")
        theme = body.get("theme", "")
        if not isinstance(answer, str) or not answer.strip():
            raise ApiError(422, "rail_rejected", "answer must be a non-empty string")
        try:
            record, corpus_version, index_version = eng.resolve_moderation(
                item_id, answer, theme, body.get("sub_theme", ""))
        except ModerationError as exc:
            if exc.code == "not_found":
                raise ApiError(404, "not_found", str(exc))
            if exc.code == "not_open":
                raise ApiError(409, "not_open", str(exc))
            raise ApiError(422, "rail_rejected", str(exc))
        except CorpusError as exc:
            raise ApiError(422, "rejected", str(exc))
        app.state.metrics.bump("moderation_resolved_total")
        return JSONResponse({"record_id": record.id,
                             "corpus_version": corpus_version,
                             "index_version": index_version})

    @app.post("/v1/corpus/import")
    async def corpus_import(request: Request):
        moderator_auth(request)
        eng = get_engine()
        raw = await request.body()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ApiError(400, "malformed_body", "body must be UTF-8 JSONL")
        if not text.strip():
            raise ApiError(400, "malformed_body", "empty import body")
        report = eng.corpus.ingest_text(text)
        app.state.metrics.bump("records_imported_total", report.accepted)
        return JSONResponse(report.to_dict())

    @app.get("/v1/health")
    async def health():
        eng = app.state.engine
        return JSONResponse({
            "status": "ok" if eng is not None else "initializing",
            "corpus_version": eng.corpus.version if eng else 0,
            "index_version": eng.retriever.version if eng else 0,
        })

    @app.get("/v1/metrics")
    async def metrics():
        return PlainTextResponse(app.state.metrics.render())

    return app


def run(config_path: Optional[str] = None) -> None:
    """Blocking server entry point used by the CLI."""
    import uvicorn

    config = load_config(config_path)
    app = create_app(config=config)
    uvicorn.run(app, host=config.listen_host, port=config.listen_port,
                log_level="info", timeout_graceful_shutdown=10)
