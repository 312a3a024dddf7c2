"""Client for an external chat-completion corrector, plus a local mock server.

The client speaks the common ``/v1/chat/completions`` JSON shape so any
compatible provider (or the bundled mock) can stand in as the language-model
baseline.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path
from typing import Sequence

import requests

from .corpus import CorrectionPair
from .errors import (
    AllRequestsFailedError,
    EmptyInputError,
    FormatError,
    LMAuthError,
    LMError,
    LMHTTPError,
    LMSchemaError,
    LMTimeoutError,
)
from .metrics import MetricReport, evaluate_corpus
from .text import normalize

logger = logging.getLogger(__name__)

DEFAULT_PROMPT = "Correct the OCR errors in the following text. Output only the corrected text.\n{input}"
_QUOTES = "\"'`“”‘’"


@dataclass(frozen=True)
class CorrectorEndpointConfig:
    base_url: str = "http://127.0.0.1:8000"
    model_name: str = "gpt-3.5-turbo"
    auth_token_env_var: str = "POSTOCR_LM_TOKEN"
    timeout: float = 30.0
    max_retries: int = 3
    prompt_template: str = DEFAULT_PROMPT
    concurrency: int = 4
    backoff_base: float = 1.0

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.prompt_template.count("{input}") != 1:
            raise ValueError("prompt_template must contain exactly one {input} placeholder")
        if self.max_retries < 0 or self.concurrency < 1:
            raise ValueError("max_retries must be >= 0 and concurrency >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "CorrectorEndpointConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown baseline keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def render(self, text: str) -> str:
        # str.replace rather than format(): the template may contain other braces
        return self.prompt_template.replace("{input}", text)


def _token(config: CorrectorEndpointConfig) -> str:
    token = os.environ.get(config.auth_token_env_var)
    if not token:
        raise LMAuthError(f"environment variable {config.auth_token_env_var} is not set")
    return token


def _clean(content: str) -> str:
    return normalize(content.strip().strip(_QUOTES))


def lm_correct(text: str, config: CorrectorEndpointConfig, session: requests.Session | None = None) -> str:
    """Send one correction request and return the normalized reply.

    Timeouts, connection failures and 5xx replies are retried with exponential
    backoff; other HTTP errors and malformed replies fail immediately.
    """
    if not text:
        raise EmptyInputError("text must be non-empty")
    headers = {"Authorization": f"Bearer {_token(config)}", "Content-Type": "application/json"}
    body = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": config.render(text)}],
        "temperature": 0,
    }
    url = config.base_url.rstrip("/") + "/v1/chat/completions"
    post = session.post if session is not None else requests.post
    last: LMError | None = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            time.sleep(config.backoff_base * 2 ** (attempt - 1))
        try:
            resp = post(url, json=body, headers=headers, timeout=config.timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last = LMTimeoutError(f"request to {url} failed: {type(exc).__name__}")
            logger.warning("attempt %d: %s", attempt + 1, last)
            continue
        if resp.status_code >= 500:
            last = LMHTTPError(resp.status_code, resp.text)
            logger.warning("attempt %d: HTTP %d", attempt + 1, resp.status_code)
            continue
        if resp.status_code != 200:
            raise LMHTTPError(resp.status_code, resp.text)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise LMSchemaError(f"response lacks choices[0].message.content: {exc!r}") from exc
        if not isinstance(content, str):
            raise LMSchemaError("choices[0].message.content is not a string")
        return _clean(content)
    assert last is not None
    raise last


def run_baseline_eval(pairs: Sequence[CorrectionPair], config: CorrectorEndpointConfig) -> MetricReport:
    """Correct every ``ocr_text`` via the endpoint and score against ``gt_text``.

    Failed requests are excluded from scoring and counted in ``failure_count``.
    """
    if not pairs:
        raise EmptyInputError("no pairs to evaluate")
    _token(config)  # fail fast before spawning workers

    def work(pair: CorrectionPair):
        if not pair.ocr_text:
            return ""
        try:
            return lm_correct(pair.ocr_text, config)
        except LMAuthError:
            raise
        except LMError as exc:
            logger.warning("request failed for %s: %s", pair.source_id or "pair", exc)
            return exc

    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        results = list(pool.map(work, pairs))
    scored = [(r, p.gt_text) for r, p in zip(results, pairs) if isinstance(r, str)]
    failures = len(pairs) - len(scored)
    if not scored:
        raise AllRequestsFailedError(f"all {len(pairs)} requests failed")
    return replace(evaluate_corpus(scored, word_level=True), failure_count=failures)


@dataclass
class MockConfig:
    """``identity`` echoes the input; ``mapping`` looks the whole input up, then word by word."""

    mode: str = "identity"
    map: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("identity", "mapping"):
            raise FormatError(f"mock mode must be identity or mapping, got {self.mode!r}")

    @classmethod
    def load(cls, path: str | Path) -> "MockConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(mode=data.get("mode", "identity"), map=dict(data.get("map", {})))
        except (OSError, ValueError, AttributeError, TypeError) as exc:
            raise FormatError(f"bad mock config {path}: {exc}") from exc

    def reply(self, text: str) -> str:
        if self.mode == "identity":
            return text
        if text in self.map:
            return self.map[text]
        return " ".join(self.map.get(w, w) for w in text.split(" "))


class MockLMServer:
    """Deterministic chat-completion server on a local port, run in a background thread.

    The prompt template is stripped from incoming messages to recover the input
    text. ``fail_status`` makes every request for the listed inputs answer
    with that status, which is handy for exercising retries.

    >>> with MockLMServer(MockConfig()) as server:
    ...     url = server.base_url
    """

    def __init__(self, config: MockConfig, prompt_template: str = DEFAULT_PROMPT, fail_status: dict | None = None):
        self.config = config
        self.prefix, self.suffix = prompt_template.split("{input}")
        self.fail_status = dict(fail_status or {})
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._server: HTTPServer | None = None
        self._thread: threading.Thread | None = None

    def _extract(self, content: str) -> str:
        if content.startswith(self.prefix) and content.endswith(self.suffix):
            return content[len(self.prefix) : len(content) - len(self.suffix)]
        return content

    def _handler(self):
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status: int, payload: dict):
                raw = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with mock._lock:
                    mock.requests.append({"path": self.path, "body": body, "auth": self.headers.get("Authorization")})
                if self.path != "/v1/chat/completions":
                    return self._send(404, {"error": "not found"})
                text = mock._extract(body["messages"][0]["content"])
                if text in mock.fail_status:
                    return self._send(mock.fail_status[text], {"error": "injected failure"})
                reply = mock.config.reply(text)
                self._send(200, {"choices": [{"index": 0, "message": {"role": "assistant", "content": reply}}]})

        return Handler

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockLMServer":
        self._server = HTTPServer(("127.0.0.1", 0), self._handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
