"""Vision-chat model access: one surface over live HTTP and record/replay.

A request is digested over everything that determines the model's input
(role, prompts, image bytes, sampling params). Cassettes map digests to
recorded responses so a full pipeline run can be replayed offline,
byte-identically, with a loud failure on any unrecorded request.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import requests

from .config import PipelineConfig
from .errors import BackendUnavailableError, CassetteMissError, ParseFailureError
from .parsing import parse_structured

logger = logging.getLogger(__name__)

JSON_ONLY_NUDGE = (
    "\n\nYour previous reply could not be parsed. "
    "Respond with JSON only, matching the requested output format exactly."
)


@dataclass(frozen=True)
class ModelRequest:
    role_id: str
    system_prompt: str
    user_text: str
    images: tuple[bytes, ...] = ()
    temperature: float = 0.5
    max_tokens: int = 512


@dataclass(frozen=True)
class ModelResponse:
    text: str
    latency: float = 0.0
    backend_id: str = ""


def request_digest(req: ModelRequest) -> str:
    """Stable SHA-256 digest of everything that shapes the model's reply."""
    payload = {
        "role_id": req.role_id,
        "system_prompt": req.system_prompt,
        "user_text": req.user_text,
        "images": [hashlib.sha256(img).hexdigest() for img in req.images],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class HttpBackend:
    """Live chat-completions endpoint with interleaved text and base64 images."""

    def __init__(
        self,
        endpoint_url: str,
        api_key: str = "",
        model_for_role=None,
        retry_attempts: int = 3,
        retry_backoff: float = 1.0,
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ):
        if not endpoint_url:
            raise ValueError("live backend needs an endpoint URL")
        self.endpoint_url = endpoint_url.rstrip("/")
        self.api_key = api_key
        self.model_for_role = model_for_role or (lambda role: "default-model")
        self.retry_attempts = retry_attempts
        self.retry_backoff = retry_backoff
        self.timeout = timeout
        self.session = session or requests.Session()

    def _payload(self, req: ModelRequest) -> dict:
        content: list[dict] = [{"type": "text", "text": req.user_text}]
        for img in req.images:
            b64 = base64.b64encode(img).decode("ascii")
            content.append(
                {"type": "image_url", "image_url": {"url": f"data:image/jpeg;base64,{b64}"}}
            )
        messages = []
        if req.system_prompt:
            messages.append({"role": "system", "content": req.system_prompt})
        messages.append({"role": "user", "content": content})
        return {
            "model": self.model_for_role(req.role_id),
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }

    def complete(self, req: ModelRequest) -> ModelResponse:
        url = f"{self.endpoint_url}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = self._payload(req)
        last_error: Exception | None = None
        for attempt in range(self.retry_attempts):
            start = time.monotonic()
            try:
                resp = self.session.post(url, json=payload, headers=headers, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise requests.RequestException(f"server error {resp.status_code}")
                resp.raise_for_status()
                data = resp.json()
                text = data["choices"][0]["message"]["content"]
                return ModelResponse(
                    text=text,
                    latency=time.monotonic() - start,
                    backend_id=f"http:{self.model_for_role(req.role_id)}",
                )
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < self.retry_attempts:
                    delay = self.retry_backoff * (2**attempt)
                    logger.warning(
                        "model call failed (attempt %d/%d): %s; retrying in %.1fs",
                        attempt + 1,
                        self.retry_attempts,
                        exc,
                        delay,
                    )
                    time.sleep(delay)
        raise BackendUnavailableError(
            f"backend unreachable after {self.retry_attempts} attempts: {last_error}"
        )


class ReplayBackend:
    """Deterministic playback of a recorded cassette.

    Entries with the same digest are consumed in recording order. A lookup
    miss raises; replay never falls back to a live call.
    """

    def __init__(self, cassette_path: str | Path):
        self.cassette_path = str(cassette_path)
        self._lock = threading.Lock()
        self._entries: dict[str, deque[ModelResponse]] = {}
        for digest, response in read_cassette(cassette_path):
            self._entries.setdefault(digest, deque()).append(response)

    def complete(self, req: ModelRequest) -> ModelResponse:
        digest = request_digest(req)
        with self._lock:
            bucket = self._entries.get(digest)
            if not bucket:
                raise CassetteMissError(
                    f"no recorded response for digest {digest} "
                    f"(role={req.role_id}) in {self.cassette_path}"
                )
            return bucket.popleft()


class RecordingBackend:
    """Wraps any backend and appends every (digest, response) to a cassette."""

    def __init__(self, inner, cassette_path: str | Path):
        self.inner = inner
        self.cassette_path = str(cassette_path)
        self._lock = threading.Lock()
        Path(self.cassette_path).parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.cassette_path, "a", encoding="utf-8")

    def complete(self, req: ModelRequest) -> ModelResponse:
        response = self.inner.complete(req)
        record = {
            "digest": request_digest(req),
            "text": response.text,
            "latency": response.latency,
            "backend_id": response.backend_id,
            "role_id": req.role_id,
        }
        with self._lock:
            self._fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            self._fh.flush()
        return response

    def close(self) -> None:
        with self._lock:
            self._fh.close()


def read_cassette(path: str | Path) -> list[tuple[str, ModelResponse]]:
    """Load cassette entries: one JSON object per line, in recording order."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: corrupt cassette line: {exc}") from exc
            entries.append(
                (
                    record["digest"],
                    ModelResponse(
                        text=record["text"],
                        latency=float(record.get("latency", 0.0)),
                        backend_id=str(record.get("backend_id", "")),
                    ),
                )
            )
    return entries


def versioned_path(path: str | Path) -> Path:
    """Next free cassette path: the name itself, else name.1, name.2, ..."""
    base = Path(path)
    if not base.exists():
        return base
    n = 1
    while True:
        candidate = base.with_name(f"{base.name}.{n}")
        if not candidate.exists():
            return candidate
        n += 1


class ModelGateway:
    """Role-aware entry point used by every pipeline stage.

    Applies each role's configured sampling parameters, bounds in-flight
    concurrency, and centralizes the parse-retry policy.
    """

    def __init__(self, backend, config: PipelineConfig):
        self.backend = backend
        self.config = config
        self._slots = threading.Semaphore(max(config.max_in_flight, 1))

    def build_request(
        self, role_id: str, system_prompt: str, user_text: str, images: tuple[bytes, ...] = ()
    ) -> ModelRequest:
        params = self.config.params_for(role_id)
        return ModelRequest(
            role_id=role_id,
            system_prompt=system_prompt,
            user_text=user_text,
            images=tuple(images),
            temperature=params.temperature,
            max_tokens=params.max_tokens,
        )

    def complete(self, req: ModelRequest) -> ModelResponse:
        with self._slots:
            return self.backend.complete(req)

    def call(
        self, role_id: str, system_prompt: str, user_text: str, images: tuple[bytes, ...] = ()
    ) -> ModelResponse:
        return self.complete(self.build_request(role_id, system_prompt, user_text, images))

    def call_parsed(
        self,
        role_id: str,
        system_prompt: str,
        user_text: str,
        schema_id: str,
        images: tuple[bytes, ...] = (),
    ) -> dict:
        """Call and parse; on a parse failure, retry once with a JSON-only nudge."""
        response = self.call(role_id, system_prompt, user_text, images)
        try:
            return parse_structured(response.text, schema_id)
        except ParseFailureError as exc:
            logger.warning("parse failure for role %s (%s); retrying once", role_id, exc)
        retry = self.call(role_id, system_prompt, user_text + JSON_ONLY_NUDGE, images)
        return parse_structured(retry.text, schema_id)


def build_backend(config: PipelineConfig):
    """Construct the backend named by the config (live, replay or record)."""
    if config.backend_mode == "replay":
        if not config.cassette_path:
            raise ValueError("replay mode needs a cassette path")
        return ReplayBackend(config.cassette_path)
    live = HttpBackend(
        endpoint_url=config.endpoint_url,
        api_key=config.api_key,
        model_for_role=config.model_for,
        retry_attempts=config.retry_attempts,
        retry_backoff=config.retry_backoff,
        timeout=config.request_timeout,
    )
    if config.backend_mode == "live":
        return live
    if not config.cassette_path:
        raise ValueError("record mode needs a cassette path")
    return RecordingBackend(live, versioned_path(config.cassette_path))
