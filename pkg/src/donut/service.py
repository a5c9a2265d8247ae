"""HTTP JSON API over an index snapshot.

Privacy posture: no cookies, no user identifiers; request logs are
encrypted at rest (Fernet, key file required at startup — the service
fails closed without it), client addresses appear only as salted hashes
whose salt lives in memory and rotates daily, and whole day-files are
purged once they fall outside the retention window.

Reads are served from one immutable snapshot; /admin/reload swaps in a
newer index file atomically while in-flight requests finish on the old
one. Every snapshot-backed response carries an X-Index-Generation
header. Errors use one envelope: {"error": {"code", "message"}}.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

from cryptography.fernet import Fernet, InvalidToken
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from .bibtex import serialize_bibtex
from .index import IndexFormatError, load_index
from .query import QueryParseError, run_query
from .taxonomy import corpus_statistics, tag_tree

_ENV_KEYS = {
    "DONUT_LISTEN": "listen",
    "DONUT_INDEX_PATH": "index_path",
    "DONUT_RETENTION_DAYS": "retention_days",
    "DONUT_ADMIN_TOKEN": "admin_token",
    "DONUT_LOG_KEY_PATH": "log_key_path",
    "DONUT_LOG_DIR": "log_dir",
    "DONUT_CORS_ORIGIN": "cors_origin",
}

_INT_FIELDS = {"retention_days", "max_page_size", "default_page_size"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ServiceConfig:
    listen: str = "127.0.0.1:8080"
    index_path: str = "index.donut"
    retention_days: int = 30
    max_page_size: int = 100
    default_page_size: int = 10
    admin_token: str = ""
    log_key_path: str = ""
    log_dir: str = ""
    cors_origin: str = "*"

    def __post_init__(self):
        if self.retention_days < 1:
            raise ConfigError("retention_days must be >= 1")
        if not 1 <= self.max_page_size <= 100:
            raise ConfigError("max_page_size must be in [1, 100]")
        if not 1 <= self.default_page_size <= self.max_page_size:
            raise ConfigError("default_page_size must be in [1, max_page_size]")

    @property
    def effective_log_dir(self) -> str:
        return self.log_dir or os.path.join(
            os.path.dirname(os.path.abspath(self.index_path)), "logs"
        )


def _parse_config_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in ServiceConfig.__dataclass_fields__:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def load_config(config_file: str | None = None, env=None) -> ServiceConfig:
    """Defaults, overridden by the config file, overridden by environment."""
    env = os.environ if env is None else env
    values: dict = {}
    if config_file:
        values.update(_parse_config_file(config_file))
    for env_key, field_name in _ENV_KEYS.items():
        if env_key in env:
            values[field_name] = env[env_key]
    for name in list(values):
        if name in _INT_FIELDS:
            try:
                values[name] = int(values[name])
            except ValueError:
                raise ConfigError(f"{name} must be an integer, got {values[name]!r}") from None
    return ServiceConfig(**values)


# ---------------------------------------------------------------------------
# Encrypted, anonymized request logging
# ---------------------------------------------------------------------------

_DAY_FILE_RE = re.compile(r"\d{4}-\d{2}-\d{2}\.log\Z")


class LogKeyError(RuntimeError):
    """Log encryption key missing or unreadable; the service must not start."""


def generate_log_key(path: str) -> None:
    key = Fernet.generate_key()
    fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o600)
    with os.fdopen(fd, "wb") as handle:
        handle.write(key + b"\n")


class LogStore:
    """Append-only encrypted day-files with daily salt rotation and purging.

    The clock is injectable so retention and salt rotation are testable;
    it must return an aware UTC datetime.
    """

    def __init__(self, key_path: str, log_dir: str, retention_days: int, clock=None):
        if not key_path:
            raise LogKeyError("no log encryption key configured (log_key_path)")
        try:
            with open(key_path, "rb") as handle:
                key = handle.read().strip()
            self.fernet = Fernet(key)
        except (OSError, ValueError) as exc:
            raise LogKeyError(f"cannot load log encryption key from {key_path}: {exc}") from exc
        self.log_dir = log_dir
        self.retention_days = retention_days
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._lock = threading.Lock()
        self._salt_day = None
        self._salt = b""
        self._purged_day = None
        os.makedirs(log_dir, exist_ok=True)
        self.purge()

    def _today(self):
        return self._clock().date()

    def _day_salt(self) -> bytes:
        # rotated per UTC day, held only in memory, never persisted
        today = self._today()
        if self._salt_day != today:
            self._salt_day = today
            self._salt = os.urandom(16)
        return self._salt

    def anonymize_client(self, client_address: str) -> str:
        digest = hashlib.sha256(self._day_salt() + client_address.encode("utf-8"))
        return digest.hexdigest()[:16]

    def log_request(self, client_address: str, route: str, query: str,
                    status: int, elapsed_ms: float) -> None:
        now = self._clock()
        record = {
            "timestamp": now.replace(microsecond=0).isoformat(),
            "anonymized_client": self.anonymize_client(client_address),
            "route": route,
            "query": query,
            "status": status,
            "elapsed_ms": round(elapsed_ms, 3),
        }
        line = self.fernet.encrypt(json.dumps(record, sort_keys=True).encode("utf-8"))
        day_path = os.path.join(self.log_dir, f"{now.date().isoformat()}.log")
        with self._lock:
            with open(day_path, "ab") as handle:
                handle.write(line + b"\n")
        if self._purged_day != now.date():
            self.purge()

    def purge(self) -> int:
        """Remove day-files older than retention_days; returns count removed."""
        today = self._today()
        removed = 0
        cutoff = today - timedelta(days=self.retention_days)
        for name in sorted(os.listdir(self.log_dir)):
            if not _DAY_FILE_RE.fullmatch(name):
                continue
            try:
                day = datetime.strptime(name[:-4], "%Y-%m-%d").date()
            except ValueError:
                continue
            if day < cutoff:
                os.unlink(os.path.join(self.log_dir, name))
                removed += 1
        self._purged_day = today
        return removed

    def read_day(self, day) -> list:
        """Decrypt one day-file (operator tooling and tests)."""
        path = os.path.join(self.log_dir, f"{day.isoformat()}.log")
        records = []
        with open(path, "rb") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(self.fernet.decrypt(line)))
                except InvalidToken:
                    records.append({"error": "undecryptable line"})
        return records


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------

def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"error": {"code": code, "message": message}}, status_code=status)


def _hit_json(snapshot, hit) -> dict:
    entry = snapshot.entries[hit.doc_id]
    return {
        "citation_key": hit.citation_key,
        "title": entry.fields.get("title", ""),
        "authors": [a.strip() for a in entry.fields.get("author", "").split(" and ") if a.strip()],
        "year": entry.fields.get("year", ""),
        "tags": sorted(t.canonical for t in entry.tags),
        "score": hit.score,
        "highlights": hit.highlights,
    }


def create_app(config: ServiceConfig, clock=None) -> FastAPI:
    """Build the FastAPI app. Fails closed when the log key is missing."""
    logstore = LogStore(
        config.log_key_path, config.effective_log_dir, config.retention_days, clock=clock
    )

    app = FastAPI(docs_url=None, redoc_url=None, openapi_url=None)
    app.state.config = config
    app.state.logstore = logstore
    app.state.snapshot = None
    app.state.reload_lock = threading.Lock()
    if os.path.exists(config.index_path):
        app.state.snapshot = load_index(config.index_path)

    if config.cors_origin:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[config.cors_origin],
            allow_methods=["GET", "POST"],
            allow_headers=["Authorization"],
            allow_credentials=False,
        )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc):
        return _error(400, "invalid_parameter", str(exc.errors()[:1]))

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc):
        detail = exc.detail
        if isinstance(detail, dict) and "code" in detail:
            return _error(exc.status_code, detail["code"], detail.get("message", ""))
        return _error(exc.status_code, "http_error", str(detail))

    @app.middleware("http")
    async def log_and_stamp(request: Request, call_next):
        import time as _time

        started = _time.perf_counter()
        response = await call_next(request)
        elapsed_ms = (_time.perf_counter() - started) * 1000.0
        client = request.client.host if request.client else "unknown"
        logstore.log_request(
            client, request.url.path, request.url.query, response.status_code, elapsed_ms
        )
        snapshot = app.state.snapshot
        if snapshot is not None and response.status_code < 500:
            response.headers["X-Index-Generation"] = str(snapshot.generation)
        return response

    def current_snapshot():
        return app.state.snapshot

    @app.get("/search")
    async def search(q: str = "", offset: int = 0, limit: int | None = None):
        snapshot = current_snapshot()
        if snapshot is None:
            return _error(503, "no_index", "no index snapshot is loaded")
        if not q.strip():
            return _error(400, "empty_query", "query parameter q is empty")
        if offset < 0:
            return _error(400, "invalid_parameter", "offset must be >= 0")
        config: ServiceConfig = app.state.config
        if limit is None:
            limit = config.default_page_size
        if not 1 <= limit <= config.max_page_size:
            return _error(
                400, "invalid_parameter", f"limit must be in [1, {config.max_page_size}]"
            )
        try:
            response = run_query(snapshot, q, offset=offset, limit=limit)
        except QueryParseError as exc:
            return _error(400, "bad_query", str(exc))
        body = {
            "hits": [_hit_json(snapshot, h) for h in response.hits],
            "total": response.total,
            "suggestions": [
                {
                    "kind": s.kind,
                    "original_term": s.original_term,
                    "suggested_term": s.suggested_term,
                    "score": s.score,
                }
                for s in response.suggestions
            ],
            "elapsed_ms": response.elapsed_ms,
            "generation": snapshot.generation,
        }
        return JSONResponse(body, headers={"X-Index-Generation": str(snapshot.generation)})

    @app.get("/entry/{citation_key}")
    async def entry(citation_key: str):
        snapshot = current_snapshot()
        if snapshot is None:
            return _error(503, "no_index", "no index snapshot is loaded")
        found = snapshot.by_key(citation_key)
        if found is None:
            return _error(404, "unknown_key", f"no entry with citation key {citation_key!r}")
        return {
            "citation_key": found.citation_key,
            "entry_type": found.entry_type,
            "fields": dict(found.fields),
            "tags": sorted(t.canonical for t in found.tags),
            "flavors": sorted(f.value for f in found.flavors),
            "bibtex": serialize_bibtex([found]),
        }

    @app.get("/tags/tree")
    async def tags_tree():
        snapshot = current_snapshot()
        if snapshot is None:
            return _error(503, "no_index", "no index snapshot is loaded")
        tree = tag_tree(snapshot.entries)
        return {
            tag_class.value: [node.as_dict() for node in nodes]
            for tag_class, nodes in tree.items()
        }

    @app.get("/stats")
    async def stats():
        snapshot = current_snapshot()
        if snapshot is None:
            return _error(503, "no_index", "no index snapshot is loaded")
        body = corpus_statistics(list(snapshot.entries)).as_dict()
        body["generation"] = snapshot.generation
        body["doc_count"] = snapshot.doc_count
        return body

    @app.post("/admin/reload")
    async def admin_reload(request: Request):
        config: ServiceConfig = app.state.config
        header = request.headers.get("authorization", "")
        token = header[7:] if header.lower().startswith("bearer ") else ""
        if not config.admin_token or not hmac.compare_digest(token, config.admin_token):
            return _error(401, "unauthorized", "missing or invalid admin token")
        if not app.state.reload_lock.acquire(blocking=False):
            return _error(409, "reload_in_progress", "another reload is already running")
        try:
            try:
                snapshot = load_index(config.index_path)
            except FileNotFoundError:
                return _error(503, "index_unavailable", f"no index file at {config.index_path}")
            except IndexFormatError as exc:
                return _error(503, "index_unavailable", str(exc))
            app.state.snapshot = snapshot  # atomic swap; readers keep old refs
            return {"status": "reloaded", "generation": snapshot.generation,
                    "doc_count": snapshot.doc_count}
        finally:
            app.state.reload_lock.release()

    return app


def run(config: ServiceConfig) -> None:
    """Blocking server start (the `serve` CLI subcommand)."""
    import uvicorn

    host, _, port = config.listen.rpartition(":")
    app = create_app(config)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080), log_level="warning")
