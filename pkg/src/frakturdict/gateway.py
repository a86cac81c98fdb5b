"""Provider-agnostic client for vision-model requests.

Requests are content-addressed: the request id is a hash of the image,
prompt and parameters, which makes retries idempotent and lets a response
store replay completed work without a second provider charge. A mock
provider keyed by those ids runs the whole pipeline offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Optional, Protocol

import httpx

from .errors import AuthError, MissingPromptAsset, ProviderError, UnknownModel

log = logging.getLogger(__name__)

PROMPTS_DIR = Path(__file__).parent / "prompts"

KEY_ENV_TEMPLATE = "FRAKTUR_{provider}_KEY"
ENDPOINT_ENV_TEMPLATE = "FRAKTUR_{provider}_ENDPOINT"

# Seeded from the refusal wording observed in practice; extend per job config.
DEFAULT_REFUSAL_PHRASES = (
    "too detailed and contains too much information",
    "i'm sorry - the image",
    "i'm sorry – the image",
    "i am unable to transcribe",
    "i cannot transcribe",
)


class TransientProviderFailure(Exception):
    """Retryable provider failure (rate limit, 5xx, network)."""


@dataclass(frozen=True)
class ModelParams:
    provider_id: str = "mock"
    model_id: str = "mock-vision"
    temperature: float = 0.0
    max_output_tokens: int = 8192
    reasoning_enabled: bool = False
    reasoning_budget_tokens: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError("temperature must be within [0, 1]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if not self.reasoning_enabled and self.reasoning_budget_tokens != 0:
            raise ValueError("reasoning budget requires reasoning_enabled")
        if self.reasoning_budget_tokens < 0:
            raise ValueError("reasoning budget must be >= 0")

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass(frozen=True)
class VisionRequest:
    image_b64: str
    media_type: str
    prompt: str
    params: ModelParams
    request_id: str


@dataclass(frozen=True)
class TextRequest:
    """Image-free request; used for reassembly and enrichment steps."""

    prompt: str
    params: ModelParams
    request_id: str

    image_b64 = ""
    media_type = ""


@dataclass(frozen=True)
class UsageRecord:
    request_id: str
    provider_id: str
    model_id: str
    input_tokens: int = 0
    output_tokens: int = 0
    latency_ms: int = 0
    attempt_count: int = 1
    outcome: str = "ok"  # ok | refusal | error

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "UsageRecord":
        return UsageRecord(**data)


@dataclass(frozen=True)
class Response:
    body: str
    usage: UsageRecord
    from_cache: bool = False


def load_prompt_asset(asset_id: str, assets_dir: Path | None = None) -> str:
    """Load a prompt by id; explicit directory overrides the packaged set."""
    candidates = []
    if assets_dir is not None:
        candidates.append(Path(assets_dir) / f"{asset_id}.txt")
    candidates.append(PROMPTS_DIR / f"{asset_id}.txt")
    for path in candidates:
        if path.is_file():
            text = path.read_text(encoding="utf-8")
            if not text.strip():
                raise MissingPromptAsset(f"prompt asset {asset_id!r} is empty", asset=asset_id)
            return text
    raise MissingPromptAsset(f"prompt asset {asset_id!r} not found", asset=asset_id)


def _content_hash(*parts: str) -> str:
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


def build_vision_request(
    tile_image,
    prompt_asset_id: str,
    params: ModelParams,
    assets_dir: Path | None = None,
) -> VisionRequest:
    """Pair a tile image with a prompt asset; id is a hash of the content."""
    prompt = load_prompt_asset(prompt_asset_id, assets_dir)
    image_b64 = tile_image.b64
    request_id = _content_hash("vision", "image/png", image_b64, prompt, params.canonical())
    return VisionRequest(
        image_b64=image_b64,
        media_type="image/png",
        prompt=prompt,
        params=params,
        request_id=request_id,
    )


def build_text_request(
    body: str,
    prompt_asset_id: str,
    params: ModelParams,
    assets_dir: Path | None = None,
) -> TextRequest:
    """Instructions from the prompt asset followed by the payload body."""
    instructions = load_prompt_asset(prompt_asset_id, assets_dir)
    prompt = instructions.rstrip() + "\n\n" + body
    request_id = _content_hash("text", prompt, params.canonical())
    return TextRequest(prompt=prompt, params=params, request_id=request_id)


class Provider(Protocol):
    def complete(self, request) -> tuple[str, int, int]:
        """Return (body, input_tokens, output_tokens); may raise
        TransientProviderFailure, AuthError or ProviderError."""


class UsageLedger:
    """Append-only usage log, one record per finished request id."""

    def __init__(self, path: Path | None = None) -> None:
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        self._records: list[UsageRecord] = []
        self._ids: set[str] = set()
        if self._path and self._path.exists():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._remember(UsageRecord.from_dict(json.loads(line)))

    def _remember(self, record: UsageRecord) -> None:
        if record.request_id not in self._ids:
            self._records.append(record)
            self._ids.add(record.request_id)

    def append(self, record: UsageRecord) -> None:
        """Record usage; a request id already present is left untouched."""
        with self._lock:
            if record.request_id in self._ids:
                return
            self._remember(record)
            if self._path:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with self._path.open("a", encoding="utf-8") as handle:
                    handle.write(json.dumps(record.to_dict()) + "\n")

    def has(self, request_id: str) -> bool:
        with self._lock:
            return request_id in self._ids

    def records(self) -> tuple[UsageRecord, ...]:
        with self._lock:
            return tuple(self._records)


class PriceTable:
    """Per-model token rates in currency units per million tokens."""

    def __init__(self, rates: dict[str, tuple[float | str, float | str]]) -> None:
        self._micro: dict[str, tuple[int, int]] = {}
        for model_id, (input_rate, output_rate) in rates.items():
            in_micro = int(Decimal(str(input_rate)) * 1_000_000)
            out_micro = int(Decimal(str(output_rate)) * 1_000_000)
            if in_micro < 0 or out_micro < 0:
                raise ValueError("price rates must be non-negative")
            self._micro[model_id] = (in_micro, out_micro)

    def micro_rates(self, model_id: str) -> tuple[int, int]:
        try:
            return self._micro[model_id]
        except KeyError:
            raise UnknownModel(f"no price for model {model_id!r}", model=model_id) from None


def record_usage(ledger: UsageLedger, usage: UsageRecord) -> None:
    ledger.append(usage)


def estimate_cost(ledger: UsageLedger, prices: PriceTable) -> Decimal:
    """Total ledger cost, exact integer arithmetic, rendered to 3 decimals."""
    pico = 0
    for record in ledger.records():
        in_micro, out_micro = prices.micro_rates(record.model_id)
        pico += record.input_tokens * in_micro + record.output_tokens * out_micro
    return (Decimal(pico) / Decimal(10**12)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP)


class MockProvider:
    """Deterministic offline provider.

    Replies come from an in-memory mapping or a fixtures directory holding
    ``{request_id}.txt`` (plain body) or ``{request_id}.json`` (body plus
    token counts). Per-request failure scripts exercise the retry contract,
    and every call is counted for duplicate-charge audits.
    """

    def __init__(
        self,
        replies: dict[str, str] | None = None,
        fixtures_dir: Path | None = None,
        fail_times: dict[str, int] | None = None,
    ) -> None:
        self.replies = dict(replies or {})
        self.fixtures_dir = Path(fixtures_dir) if fixtures_dir else None
        self.fail_times = dict(fail_times or {})
        self.call_counts: dict[str, int] = {}
        self._lock = threading.Lock()

    def _lookup(self, request_id: str) -> tuple[str, int | None, int | None]:
        if request_id in self.replies:
            return self.replies[request_id], None, None
        if self.fixtures_dir:
            structured = self.fixtures_dir / f"{request_id}.json"
            if structured.is_file():
                data = json.loads(structured.read_text(encoding="utf-8"))
                return data["body"], data.get("input_tokens"), data.get("output_tokens")
            plain = self.fixtures_dir / f"{request_id}.txt"
            if plain.is_file():
                return plain.read_text(encoding="utf-8"), None, None
        raise ProviderError(f"mock provider has no fixture for {request_id}", request=request_id)

    def complete(self, request) -> tuple[str, int, int]:
        with self._lock:
            self.call_counts[request.request_id] = self.call_counts.get(request.request_id, 0) + 1
            remaining = self.fail_times.get(request.request_id, 0)
            if remaining > 0:
                self.fail_times[request.request_id] = remaining - 1
                raise TransientProviderFailure("scripted transient failure")
        body, input_tokens, output_tokens = self._lookup(request.request_id)
        if input_tokens is None:
            input_tokens = (len(request.prompt) + len(request.image_b64)) // 4
        if output_tokens is None:
            output_tokens = max(1, len(body) // 4)
        return body, input_tokens, output_tokens


class HttpProvider:
    """Chat-completion style HTTP provider with an image content part.

    Credentials come from ``FRAKTUR_<PROVIDER>_KEY`` and the endpoint from
    ``FRAKTUR_<PROVIDER>_ENDPOINT``; both resolve at call time so a job can
    switch providers via its model parameters alone.
    """

    def __init__(self, timeout: float = 120.0, client: httpx.Client | None = None) -> None:
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, request) -> tuple[str, int, int]:
        provider = request.params.provider_id.upper().replace("-", "_")
        key = os.environ.get(KEY_ENV_TEMPLATE.format(provider=provider), "")
        if not key:
            raise AuthError(
                f"no credential in ${KEY_ENV_TEMPLATE.format(provider=provider)}",
                provider=request.params.provider_id,
            )
        endpoint = os.environ.get(ENDPOINT_ENV_TEMPLATE.format(provider=provider), "")
        if not endpoint:
            raise ProviderError(
                f"no endpoint in ${ENDPOINT_ENV_TEMPLATE.format(provider=provider)}",
                provider=request.params.provider_id,
            )
        content: list[dict] = [{"type": "text", "text": request.prompt}]
        if request.image_b64:
            content.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:{request.media_type};base64,{request.image_b64}"},
                }
            )
        payload = {
            "model": request.params.model_id,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_output_tokens,
        }
        try:
            reply = self._client.post(
                endpoint, json=payload, headers={"Authorization": f"Bearer {key}"}
            )
        except httpx.HTTPError as exc:
            raise TransientProviderFailure(str(exc)) from exc
        if reply.status_code in (401, 403):
            raise AuthError(f"provider rejected the credential ({reply.status_code})")
        if reply.status_code == 429 or reply.status_code >= 500:
            raise TransientProviderFailure(f"HTTP {reply.status_code}")
        if reply.status_code != 200:
            raise ProviderError(f"HTTP {reply.status_code}: {reply.text[:200]}")
        data = reply.json()
        try:
            body = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected reply shape: {exc}") from exc
        usage = data.get("usage") or {}
        input_tokens = int(usage.get("prompt_tokens", 0))
        output_tokens = int(usage.get("completion_tokens", 0))
        if not usage:
            log.warning("provider reported no token usage; recording zeros")
        return body, input_tokens, output_tokens


class Gateway:
    """Submits requests with retry, refusal detection and usage accounting.

    A response store directory makes completed requests replayable: the
    stored body is returned without touching the provider again.
    """

    def __init__(
        self,
        provider: Provider,
        ledger: UsageLedger | None = None,
        response_store: Path | None = None,
        refusal_phrases: tuple[str, ...] = DEFAULT_REFUSAL_PHRASES,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        backoff_factor: float = 2.0,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.provider = provider
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.response_store = Path(response_store) if response_store else None
        self.refusal_phrases = tuple(phrase.lower() for phrase in refusal_phrases)
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self._sleep = sleep
        self._slots = threading.Semaphore(max_in_flight)

    # -- response store -----------------------------------------------------

    def _store_path(self, request_id: str) -> Optional[Path]:
        if self.response_store is None:
            return None
        return self.response_store / f"{request_id}.json"

    def _load_stored(self, request_id: str) -> Optional[Response]:
        path = self._store_path(request_id)
        if path is None or not path.is_file():
            return None
        data = json.loads(path.read_text(encoding="utf-8"))
        usage = UsageRecord.from_dict(data["usage"])
        return Response(body=data["body"], usage=usage, from_cache=True)

    def _store(self, response: Response, request) -> None:
        path = self._store_path(response.usage.request_id)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        # The image rides along as its content hash only: the PNG itself is
        # already an immutable artifact next door in tiles/.
        record = {
            "request": {
                "prompt": request.prompt,
                "media_type": request.media_type,
                "image_sha256": hashlib.sha256(request.image_b64.encode("ascii")).hexdigest()
                if request.image_b64
                else "",
                "params": json.loads(request.params.canonical()),
            },
            "body": response.body,
            "usage": response.usage.to_dict(),
        }
        tmp.write_text(json.dumps(record, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)

    # -- submission ----------------------------------------------------------

    def _classify(self, body: str) -> str:
        lowered = body.lower()
        if any(phrase in lowered for phrase in self.refusal_phrases):
            return "refusal"
        return "ok"

    def submit(self, request) -> Response:
        """Send one request; replays a stored response for a known id."""
        stored = self._load_stored(request.request_id)
        if stored is not None:
            # Crash between store and ledger append is healed on replay.
            self.ledger.append(stored.usage)
            return stored

        attempts = 0
        started = time.monotonic()
        while True:
            attempts += 1
            try:
                with self._slots:
                    body, input_tokens, output_tokens = self.provider.complete(request)
                break
            except TransientProviderFailure as exc:
                if attempts > self.max_retries:
                    usage = UsageRecord(
                        request_id=request.request_id,
                        provider_id=request.params.provider_id,
                        model_id=request.params.model_id,
                        latency_ms=int((time.monotonic() - started) * 1000),
                        attempt_count=attempts,
                        outcome="error",
                    )
                    self.ledger.append(usage)
                    raise ProviderError(
                        f"provider failed after {attempts} attempts: {exc}",
                        request=request.request_id,
                    ) from exc
                delay = self.backoff_base * (self.backoff_factor ** (attempts - 1))
                log.info("transient provider failure, retrying in %.1fs: %s", delay, exc)
                self._sleep(delay)

        usage = UsageRecord(
            request_id=request.request_id,
            provider_id=request.params.provider_id,
            model_id=request.params.model_id,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            latency_ms=int((time.monotonic() - started) * 1000),
            attempt_count=attempts,
            outcome=self._classify(body),
        )
        response = Response(body=body, usage=usage)
        self._store(response, request)
        self.ledger.append(usage)
        return response
