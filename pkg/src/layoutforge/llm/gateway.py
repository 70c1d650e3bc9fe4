"""Oracle access: request contract, cassette store, and live/record/replay backends.

Anything with a ``complete(OracleRequest) -> str`` method can serve as an
oracle for the pipeline; :class:`Gateway` is the production one.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import logging
import os
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx

from layoutforge.config import MODEL_ROLES, Config
from layoutforge.errors import (
    CassetteMiss,
    CorruptCassette,
    LayoutForgeError,
    RateLimited,
    TransportError,
)
from layoutforge.llm import wire

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.0
    max_tokens: int = 4096
    seed: int = 0

    def canonical(self) -> str:
        return json.dumps({"max_tokens": self.max_tokens, "seed": self.seed,
                           "temperature": float(self.temperature)}, sort_keys=True)


@dataclass(frozen=True)
class OracleRequest:
    model_role: str
    prompt: str
    image: bytes | None = None
    decode: DecodeParams = field(default_factory=DecodeParams)

    def __post_init__(self):
        if self.model_role not in MODEL_ROLES:
            raise ValueError(f"unknown model role {self.model_role!r}")
        if (self.image is not None) != (self.model_role == "spatial_evaluator"):
            raise ValueError("an image is required for the spatial evaluator and only for it")

    def digest(self) -> str:
        h = hashlib.sha256(b"layoutforge-request-v1")
        for part in (self.model_role.encode(), self.prompt.encode("utf-8"),
                     b"\x01" + self.image if self.image is not None else b"\x00",
                     self.decode.canonical().encode()):
            h.update(len(part).to_bytes(8, "big"))
            h.update(part)
        return h.hexdigest()


class Oracle(Protocol):
    def complete(self, request: OracleRequest) -> str: ...


class Cassette:
    """Append-only map from request digest to response text."""

    def __init__(self, entries: dict[str, str] | None = None):
        self._entries: dict[str, str] = dict(entries or {})
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, digest: str) -> bool:
        return digest in self._entries

    def __eq__(self, other) -> bool:
        return isinstance(other, Cassette) and self._entries == other._entries

    @property
    def entries(self) -> dict[str, str]:
        return dict(self._entries)

    def get(self, digest: str) -> str | None:
        return self._entries.get(digest)

    def put(self, digest: str, response: str) -> None:
        with self._lock:
            old = self._entries.get(digest)
            if old is not None and old != response:
                raise LayoutForgeError(f"cassette entry {digest} already holds a different response")
            self._entries[digest] = response

    def dumps(self) -> bytes:
        with self._lock:
            items = sorted(self._entries.items())
        return b"".join(
            d.encode("ascii") + b"\t" + base64.b64encode(r.encode("utf-8")) + b"\n" for d, r in items)

    def persist(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(self.dumps())
        os.replace(tmp, path)

    @classmethod
    def loads(cls, data: bytes) -> "Cassette":
        entries: dict[str, str] = {}
        offset = 0
        for line in data.splitlines(keepends=True):
            if not line.endswith(b"\n"):
                raise CorruptCassette(offset, "truncated record")
            digest, tab, payload = line[:-1].partition(b"\t")
            if not tab or len(digest) != 64 or any(c not in b"0123456789abcdef" for c in digest):
                raise CorruptCassette(offset, "bad digest field")
            try:
                text = base64.b64decode(payload, validate=True).decode("utf-8")
            except (binascii.Error, UnicodeDecodeError) as exc:
                raise CorruptCassette(offset, str(exc)) from None
            key = digest.decode("ascii")
            if key in entries:
                raise CorruptCassette(offset, "duplicate digest")
            entries[key] = text
            offset += len(line)
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path) -> "Cassette":
        return cls.loads(Path(path).read_bytes())


def cassette_persist(cassette: Cassette, path: str | Path) -> None:
    cassette.persist(path)


def cassette_load(path: str | Path) -> Cassette:
    return Cassette.load(path)


# -- backends -------------------------------------------------------------------

class ReplayBackend:
    network = False

    def __init__(self, cassette: Cassette):
        self.cassette = cassette

    def complete(self, request: OracleRequest) -> str:
        digest = request.digest()
        response = self.cassette.get(digest)
        if response is None:
            raise CassetteMiss(digest)
        return response


class LiveBackend:
    """Chat-completion over HTTP with bounded retries and an in-flight cap."""

    network = True

    def __init__(self, config: Config, client: httpx.Client | None = None, sleep=time.sleep):
        self.config = config
        self.client = client or httpx.Client(timeout=config.retry.timeout)
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, request: OracleRequest) -> str:
        role = self.config.role(request.model_role)
        body = wire.chat_request(role.model, request.prompt, request.image, request.decode)
        policy = self.config.retry
        last: Exception | None = None
        with self._slots:
            for attempt in range(policy.max_retries + 1):
                if attempt:
                    self.sleep(policy.backoff_base * 2 ** (attempt - 1))
                try:
                    resp = self.client.post(role.endpoint, json=body, headers=self._headers(),
                                            timeout=policy.timeout)
                except httpx.HTTPError as exc:
                    last = TransportError(f"{type(exc).__name__}: {exc}")
                    continue
                if resp.status_code == 429:
                    last = RateLimited(f"rate limited by {role.endpoint}")
                    continue
                if resp.status_code >= 500:
                    last = TransportError(f"server error {resp.status_code} from {role.endpoint}")
                    continue
                if resp.status_code >= 400:
                    raise TransportError(f"request rejected with {resp.status_code}: {resp.text[:200]}")
                try:
                    return wire.chat_response_text(resp.json())
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise TransportError(f"unexpected response body: {exc}") from None
        assert last is not None
        raise last


class RecordBackend:
    """Serve from the cassette when possible; otherwise call live and store."""

    network = True

    def __init__(self, live: LiveBackend, cassette: Cassette, path: str | Path | None = None):
        self.live = live
        self.cassette = cassette
        self.path = path
        self._write_lock = threading.Lock()

    def complete(self, request: OracleRequest) -> str:
        digest = request.digest()
        cached = self.cassette.get(digest)
        if cached is not None:
            return cached
        response = self.live.complete(request)
        self.cassette.put(digest, response)
        if self.path is not None:
            with self._write_lock:
                self.cassette.persist(self.path)
        return response


def complete(request: OracleRequest, backend) -> str:
    return backend.complete(request)


class Gateway:
    """Oracle front-end that counts calls per role."""

    def __init__(self, backend, config: Config | None = None):
        self.backend = backend
        self.config = config or Config()
        self.calls: Counter = Counter()
        self._lock = threading.Lock()

    def decode(self, role: str, seed: int | None = None) -> DecodeParams:
        rc = self.config.role(role)
        return DecodeParams(rc.temperature, rc.max_tokens, self.config.seed if seed is None else seed)

    def complete(self, request: OracleRequest) -> str:
        with self._lock:
            self.calls[request.model_role] += 1
        return self.backend.complete(request)


def make_gateway(mode: str, config: Config, cassette_path: str | Path | None = None,
                 client: httpx.Client | None = None) -> Gateway:
    if mode == "replay":
        if cassette_path is None:
            raise ValueError("replay mode needs a cassette")
        return Gateway(ReplayBackend(Cassette.load(cassette_path)), config)
    live = LiveBackend(config, client)
    if mode == "live":
        return Gateway(live, config)
    if mode == "record":
        if cassette_path is None:
            raise ValueError("record mode needs a cassette path")
        path = Path(cassette_path)
        cassette = Cassette.load(path) if path.exists() else Cassette()
        return Gateway(RecordBackend(live, cassette, path), config)
    raise ValueError(f"unknown mode {mode!r}")
