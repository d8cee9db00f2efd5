"""Text-generation backends: a generic HTTP completion client and deterministic doubles."""

from __future__ import annotations

import json
import logging
import os
import random
import re
import socket
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Protocol

from dimsum.errors import (
    BackendConfigError,
    BackendError,
    BackendUnavailable,
    EchoError,
    RequestRejected,
)
from dimsum.prompting import format_number

log = logging.getLogger(__name__)

DEFAULT_MAX_TOKENS = 512


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    model: str = ""
    api_key_env: str = "LLM_API_KEY"
    timeout: float = 30.0
    max_retries: int = 3
    backoff_ms: float = 500.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.timeout <= 0:
            raise BackendConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise BackendConfigError("max_retries must be >= 0")

    @classmethod
    def from_env(cls, **overrides) -> "BackendConfig":
        values = {
            "endpoint": os.environ.get("LLM_ENDPOINT", ""),
            "model": os.environ.get("LLM_MODEL", ""),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_tokens: int = DEFAULT_MAX_TOKENS


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    latency: float = 0.0
    attempts: int = 1


class Backend(Protocol):
    def generate(self, request: GenerationRequest) -> GenerationResponse: ...


def _extract_text(payload) -> str:
    if isinstance(payload, str):
        return payload
    for key in ("text", "completion", "output", "generated_text", "summary"):
        if isinstance(payload.get(key), str):
            return payload[key]
    choices = payload.get("choices")
    if choices:
        first = choices[0]
        if isinstance(first.get("text"), str):
            return first["text"]
        message = first.get("message") or {}
        if isinstance(message.get("content"), str):
            return message["content"]
    raise BackendError("response JSON carries no recognizable text field")


def generate(config: BackendConfig, request: GenerationRequest, sleep=time.sleep) -> GenerationResponse:
    """POST ``{model, prompt, max_tokens}`` to the endpoint, retrying timeouts and 5xx."""
    if not request.prompt:
        raise ValueError("prompt is empty")
    if not config.endpoint:
        raise BackendConfigError("no endpoint configured (set LLM_ENDPOINT or --endpoint)")
    token = os.environ.get(config.api_key_env)
    if token is None:
        raise BackendConfigError(f"auth variable {config.api_key_env} is not set")

    body = {"model": config.model, "prompt": request.prompt, "max_tokens": request.max_tokens}
    body.update(config.params)
    data = json.dumps(body).encode("utf-8")
    headers = {"Content-Type": "application/json", "Authorization": f"Bearer {token}"}

    total = config.max_retries + 1
    last_error = None
    start = time.perf_counter()
    for attempt in range(1, total + 1):
        req = urllib.request.Request(config.endpoint, data=data, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=config.timeout) as resp:
                raw = resp.read().decode("utf-8")
        except urllib.error.HTTPError as exc:
            if 400 <= exc.code < 500:
                raise RequestRejected(f"HTTP {exc.code} from {config.endpoint}", attempts=attempt) from None
            last_error = f"HTTP {exc.code}"
        except (urllib.error.URLError, socket.timeout, TimeoutError, ConnectionError) as exc:
            last_error = f"{type(exc).__name__}: {getattr(exc, 'reason', exc)}"
        else:
            try:
                payload = json.loads(raw)
            except json.JSONDecodeError:
                payload = raw
            text = _extract_text(payload).strip()
            if not text:
                raise BackendError("backend returned empty text", attempts=attempt)
            return GenerationResponse(text, time.perf_counter() - start, attempt)
        log.warning("attempt %d/%d failed: %s", attempt, total, last_error)
        if attempt < total:
            sleep(config.backoff_ms / 1000.0 * 2 ** (attempt - 1))
    raise BackendUnavailable(f"gave up after {total} attempts: {last_error}", attempts=total)


class HTTPBackend:
    def __init__(self, config: BackendConfig, sleep=time.sleep):
        self.config = config
        self._sleep = sleep

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        return generate(self.config, request, sleep=self._sleep)


# -- deterministic doubles ---------------------------------------------------

_FLAT_ROW = re.compile(r"^(?P<region>.+?) \| (?P<when>\d{2}/\d{4}) \| (?P<cells>.+)$")
_FLAT_CELL = re.compile(r"(?P<label>[^:,]+): (?P<value>-?\d+(?:\.\d+)?)")


class _Num:
    __slots__ = ("value", "percent")

    def __init__(self, value, percent=False):
        self.value = value
        self.percent = percent

    def render(self, scale=1.0) -> str:
        v = self.value * scale
        if self.percent:
            v = round(v, 6)
            text = format_number(float(v))
            return ("+" + text if v > 0 else text) + "%"
        if isinstance(v, float):
            v = round(v, 6)
        return format_number(v)


def _echo_sentences(prompt: str) -> list:
    try:
        payload = json.loads(prompt)
    except json.JSONDecodeError:
        payload = None
    if isinstance(payload, dict):
        metrics = payload.get("metrics")
        if not isinstance(metrics, dict):
            raise EchoError("prompt JSON has no metrics block")
        out = []
        for name, entry in metrics.items():
            try:
                parts = [f"{name}: current ", _Num(entry["current"]), ", previous ", _Num(entry["previous"])]
            except (KeyError, TypeError):
                raise EchoError(f"metric {name!r} lacks current/previous") from None
            if "delta_percent" in entry:
                parts += [", change ", _Num(entry["delta_percent"] * 100, percent=True)]
            out.append(parts + ["."])
        return out
    rows = [m for m in (_FLAT_ROW.match(line) for line in prompt.splitlines()) if m]
    if not rows:
        raise EchoError("prompt is neither a structured envelope nor a flat table")
    out = []
    for m in rows:
        parts = [f"{m['region']} {m['when']}: "]
        for j, cell in enumerate(_FLAT_CELL.finditer(m["cells"])):
            value = float(cell["value"]) if "." in cell["value"] else int(cell["value"])
            parts += [(", " if j else "") + f"{cell['label'].strip()} ", _Num(value)]
        out.append(parts + ["."])
    return out


def _render(sentences, perturb=None) -> str:
    k = 0
    texts = []
    for parts in sentences:
        buf = []
        for part in parts:
            if isinstance(part, _Num):
                buf.append(part.render(1.5 if k == perturb else 1.0))
                k += 1
            else:
                buf.append(part)
        texts.append("".join(buf))
    return " ".join(texts)


def _count_numbers(sentences) -> int:
    return sum(isinstance(p, _Num) for parts in sentences for p in parts)


def echo_metrics(prompt: str) -> str:
    """One sentence per metric restating current, previous and (when given) the change."""
    return _render(_echo_sentences(prompt))


def corrupt_metrics(prompt: str, seed: int) -> tuple:
    """Echo output with exactly one number scaled by 1.5; returns ``(text, perturbed_index)``."""
    sentences = _echo_sentences(prompt)
    k = _count_numbers(sentences)
    if k == 0:
        raise EchoError("no numbers to corrupt")
    index = random.Random(seed).randrange(k)
    return _render(sentences, perturb=index), index


class EchoBackend:
    name = "echo"

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        return GenerationResponse(echo_metrics(request.prompt))


class CorruptingBackend:
    name = "corrupt"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        text, _ = corrupt_metrics(request.prompt, self.seed)
        return GenerationResponse(text)


class ConstantJudge:
    """Judge double that always answers with the same score."""

    def __init__(self, score: int = 3):
        self.score = score

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        return GenerationResponse(str(self.score))


def make_backend(kind: str, seed: int = 0, config: BackendConfig | None = None):
    if kind == "echo":
        return EchoBackend()
    if kind == "corrupt":
        return CorruptingBackend(seed)
    if kind == "http":
        return HTTPBackend(config or BackendConfig.from_env())
    raise ValueError(f"unknown backend {kind!r}")
