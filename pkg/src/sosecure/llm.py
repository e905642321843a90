"""Chat-completion clients: an HTTP client for completions-style APIs and a file-driven mock."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol

import requests

logger = logging.getLogger(__name__)

API_KEY_ENV = "SOSECURE_API_KEY"
API_BASE_ENV = "SOSECURE_API_BASE"
DEFAULT_BASE_URL = "https://api.openai.com/v1"


class RevisionError(Exception):
    """The model could not be reached after the retry budget was spent."""

    def __init__(self, message: str, cause: Optional[BaseException] = None):
        super().__init__(message)
        self.cause = cause


@dataclass(frozen=True)
class LlmConfig:
    base_url: Optional[str] = None
    model: str = "gpt-4o-mini"
    temperature: float = 0.0
    max_tokens: Optional[int] = None
    timeout: float = 60.0
    retries: int = 2
    auth_header: str = "Authorization"
    max_concurrency: int = 4
    max_context_tokens: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")

    def resolved_base_url(self) -> str:
        return (os.environ.get(API_BASE_ENV) or self.base_url or DEFAULT_BASE_URL).rstrip("/")


class ChatClient(Protocol):
    def complete(self, messages: list[dict], cfg: LlmConfig) -> str: ...


class _Retryable(Exception):
    pass


class HttpChatClient:
    """POSTs ``{model, temperature, messages}`` to ``<base>/chat/completions``.

    The bearer token is read from ``SOSECURE_API_KEY``; it is never taken
    from a config file.
    """

    def __init__(self, session: Optional[requests.Session] = None, backoff: float = 1.0):
        self.session = session or requests.Session()
        self.backoff = backoff

    def _headers(self, cfg: LlmConfig) -> dict:
        key = os.environ.get(API_KEY_ENV, "").strip()
        headers = {"Content-Type": "application/json"}
        if key:
            headers[cfg.auth_header] = f"Bearer {key}" if cfg.auth_header.lower() == "authorization" else key
        return headers

    def complete(self, messages: list[dict], cfg: LlmConfig) -> str:
        payload = {"model": cfg.model, "temperature": cfg.temperature, "messages": messages}
        if cfg.max_tokens:
            payload["max_tokens"] = cfg.max_tokens
        url = cfg.resolved_base_url() + "/chat/completions"
        attempts = cfg.retries + 1
        last: Optional[BaseException] = None
        for attempt in range(attempts):
            try:
                resp = self.session.post(url, json=payload, headers=self._headers(cfg), timeout=cfg.timeout)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise _Retryable(f"HTTP {resp.status_code}")
                resp.raise_for_status()
                return _reply_text(resp.json())
            except (requests.ConnectionError, requests.Timeout, _Retryable) as exc:
                last = exc
                logger.warning("chat request attempt %d/%d failed: %s", attempt + 1, attempts, exc)
                if attempt + 1 < attempts:
                    time.sleep(self.backoff * 2**attempt)
            except (requests.RequestException, ValueError) as exc:
                raise RevisionError(f"chat request failed: {exc}", exc) from exc
        raise RevisionError(f"chat request failed after {attempts} attempts: {last}", last)


def _reply_text(body: dict) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ValueError(f"unexpected reply shape: {str(body)[:200]}") from exc
    return content or ""


def code_sha256(code: str) -> str:
    return hashlib.sha256(code.encode("utf-8")).hexdigest()


class MockChatClient:
    """Deterministic stand-in driven by a JSON rule file.

    ``{"default": "echo", "rules": [{"code_sha256" | "code" | "code_contains" |
    "prompt_contains": ..., "reply": "..."}]}``.  Rules are tried in order
    against the first fenced block of the prompt (the code under review);
    ``"echo"`` answers with that block re-fenced, ``"decline"`` with prose.
    """

    def __init__(self, rules: Optional[list[dict]] = None, default: str = "echo"):
        self.rules = rules or []
        self.default = default
        self.calls: list[list[dict]] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "MockChatClient":
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(spec.get("rules", []), spec.get("default", "echo"))

    def _matches(self, rule: dict, code: str, prompt: str) -> bool:
        checks = []
        if "code_sha256" in rule:
            checks.append(rule["code_sha256"] == code_sha256(code))
        if "code" in rule:
            checks.append(rule["code"] == code)
        if "code_contains" in rule:
            checks.append(rule["code_contains"] in code)
        if "prompt_contains" in rule:
            checks.append(rule["prompt_contains"] in prompt)
        return bool(checks) and all(checks)

    def complete(self, messages: list[dict], cfg: LlmConfig) -> str:
        from .revision import _fence, extract_code_block

        self.calls.append(messages)
        prompt = messages[-1]["content"]
        code = extract_code_block(prompt) or ""
        reply = self.default
        for rule in self.rules:
            if self._matches(rule, code, prompt):
                reply = rule["reply"]
                break
        if reply == "echo":
            return _fence(code)
        if reply == "decline":
            return "The code has no security issues that need changing."
        return reply
