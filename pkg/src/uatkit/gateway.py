"""Provider-agnostic chat-completion gateway with record/replay support.

The gateway speaks the common OpenAI-style wire format (a ``messages`` array
in, ``choices`` + ``usage`` out) against a configurable endpoint.  Three
backends share one call path:

* ``live`` — POST to the endpoint, retrying transport failures.
* ``record`` — live, then persist ``(request digest, response)`` to a cassette.
* ``replay`` — look the digest up in a cassette; never touches the network.

The digest covers exactly the request fields that shape the completion
(system text, user text, temperature, max output tokens, model id) with
newlines normalized to LF first.  Any prompt drift — even whitespace — is a
replay miss by design, because a silently stale cassette is worse than a
loud one.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import requests

from .errors import UatkitError
from .prompts import PromptBundle

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_OUTPUT_TOKENS = 2048


class GatewayError(UatkitError):
    """Base class for completion failures."""


class TransportError(GatewayError):
    """The endpoint could not be reached (after retries)."""


class ProviderError(GatewayError):
    """The provider answered with an error status or error payload."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ReplayMissError(GatewayError):
    """Replay backend: no cassette entry matches the request digest."""


@dataclass
class Usage:
    input_tokens: int
    output_tokens: int


@dataclass
class ModelResponse:
    text: str
    usage: Usage
    model_id: str
    latency_ms: float


@dataclass
class CostRates:
    """Prices per 1000 input/output tokens, in ``currency``."""

    per_1k_input: Decimal
    per_1k_output: Decimal
    currency: str = "EUR"

    def __post_init__(self) -> None:
        self.per_1k_input = Decimal(str(self.per_1k_input))
        self.per_1k_output = Decimal(str(self.per_1k_output))


def cost_of(usage: Usage, rates: CostRates) -> Decimal:
    """Cost of one completion, rounded half-up to 4 decimal places.

    Zero usage costs zero; the arithmetic is exact Decimal until the final
    rounding step.
    """
    exact = (Decimal(usage.input_tokens) / 1000 * rates.per_1k_input
             + Decimal(usage.output_tokens) / 1000 * rates.per_1k_output)
    return exact.quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP)


def _normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def request_digest(bundle: PromptBundle, temperature: float,
                   max_output_tokens: int, model_id: str) -> str:
    """SHA-256 over the canonical request payload."""
    payload = json.dumps(
        {
            "system": _normalize_newlines(bundle.system),
            "user": _normalize_newlines(bundle.user),
            "temperature": temperature,
            "max_output_tokens": max_output_tokens,
            "model_id": model_id,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CassetteError(UatkitError):
    """Cassette file is missing, malformed, or has duplicate digests."""


class Cassette:
    """A JSON file of recorded exchanges, keyed by request digest."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path.is_file():
            self._load()

    def _load(self) -> None:
        try:
            raw = json.loads(self.path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CassetteError(f"cannot read cassette {self.path}: {exc}") from exc
        if not isinstance(raw, list):
            raise CassetteError(f"cassette {self.path} must be a JSON array")
        for entry in raw:
            digest = entry.get("digest")
            if not digest:
                raise CassetteError(f"cassette {self.path}: entry without digest")
            if digest in self._entries:
                raise CassetteError(f"cassette {self.path}: duplicate digest {digest}")
            self._entries[digest] = entry["response"]

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, digest: str) -> ModelResponse | None:
        entry = self._entries.get(digest)
        if entry is None:
            return None
        return ModelResponse(
            text=entry["text"],
            usage=Usage(entry["usage"]["input_tokens"], entry["usage"]["output_tokens"]),
            model_id=entry["model_id"],
            latency_ms=entry.get("latency_ms", 0.0),
        )

    def record(self, digest: str, response: ModelResponse) -> None:
        """Store an exchange and rewrite the file (last write wins per digest)."""
        with self._lock:
            self._entries[digest] = {
                "text": response.text,
                "usage": {"input_tokens": response.usage.input_tokens,
                          "output_tokens": response.usage.output_tokens},
                "model_id": response.model_id,
                "latency_ms": response.latency_ms,
            }
            self.path.parent.mkdir(parents=True, exist_ok=True)
            data = [{"digest": d, "response": r} for d, r in sorted(self._entries.items())]
            self.path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n",
                                 encoding="utf-8")


@dataclass
class GatewayConfig:
    endpoint: str = ""
    model_id: str = "gpt-4-turbo"
    api_key: str | None = None
    timeout: float = 120.0
    retries: int = 3
    backoff_s: float = 1.0
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS


class ModelGateway:
    """Issues chat completions through one of the three backends."""

    def __init__(self, config: GatewayConfig, backend: str = "replay",
                 cassette: Cassette | None = None,
                 session: requests.Session | None = None,
                 sleeper=time.sleep):
        if backend not in ("live", "replay", "record"):
            raise GatewayError(f"unknown backend {backend!r}")
        if backend in ("replay", "record") and cassette is None:
            raise GatewayError(f"backend {backend!r} requires a cassette")
        self.config = config
        self.backend = backend
        self.cassette = cassette
        self._session = session or requests.Session()
        self._sleep = sleeper

    def complete(self, bundle: PromptBundle,
                 temperature: float | None = None,
                 max_output_tokens: int | None = None) -> ModelResponse:
        if temperature is None:
            temperature = self.config.temperature
        if max_output_tokens is None:
            max_output_tokens = self.config.max_output_tokens
        digest = request_digest(bundle, temperature, max_output_tokens,
                                self.config.model_id)
        if self.backend == "replay":
            assert self.cassette is not None
            response = self.cassette.lookup(digest)
            if response is None:
                raise ReplayMissError(
                    f"no recorded response for digest {digest[:12]}… "
                    f"(stage={bundle.stage.value}); re-record the cassette")
            return response
        response = self._complete_live(bundle, temperature, max_output_tokens)
        if self.backend == "record":
            assert self.cassette is not None
            self.cassette.record(digest, response)
        return response

    def _complete_live(self, bundle: PromptBundle, temperature: float,
                       max_output_tokens: int) -> ModelResponse:
        if not self.config.endpoint:
            raise TransportError("no endpoint configured for live completions")
        payload = {
            "model": self.config.model_id,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user},
            ],
            "temperature": temperature,
            "max_tokens": max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"

        last_exc: Exception | None = None
        delay = self.config.backoff_s
        started = time.perf_counter()
        for attempt in range(self.config.retries):
            try:
                resp = self._session.post(self.config.endpoint, json=payload,
                                          headers=headers, timeout=self.config.timeout)
                break
            except requests.RequestException as exc:
                last_exc = exc
                if attempt + 1 < self.config.retries:
                    self._sleep(delay)
                    delay *= 2
        else:
            raise TransportError(
                f"endpoint unreachable after {self.config.retries} attempts: {last_exc}"
            ) from last_exc
        latency_ms = (time.perf_counter() - started) * 1000.0

        if not 200 <= resp.status_code < 300:
            raise ProviderError(f"provider returned HTTP {resp.status_code}: {resp.text[:200]}",
                                status=resp.status_code)
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProviderError(f"provider returned non-JSON body: {resp.text[:200]}") from exc
        if "error" in body:
            raise ProviderError(f"provider error: {body['error']}")
        try:
            text = body["choices"][0]["message"]["content"]
            usage = Usage(int(body["usage"]["prompt_tokens"]),
                          int(body["usage"]["completion_tokens"]))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from exc
        return ModelResponse(text=text, usage=usage,
                             model_id=body.get("model", self.config.model_id),
                             latency_ms=latency_ms)
