"""Text-generation backends: scripted rules, recorded replay, and an HTTP client."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Protocol, Sequence, Union

import httpx
import yaml

log = logging.getLogger(__name__)

API_KEY_ENV = "LTLPROMPT_API_KEY"
DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 2048


class BackendError(RuntimeError):
    pass


class NoRuleMatches(BackendError):
    pass


class ReplayMiss(BackendError):
    def __init__(self, digest: str, tag: str = ""):
        self.digest = digest
        where = f" ({tag})" if tag else ""
        super().__init__(f"no recorded response for request digest {digest}{where}")


class HttpStatusError(BackendError):
    def __init__(self, status: Optional[int], body: str):
        self.status, self.body = status, body
        super().__init__(f"HTTP {status}: {body[:200]}")


class IntegrityError(BackendError):
    pass


@dataclass(frozen=True)
class GenRequest:
    system_text: str
    user_text: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    tag: str = ""

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")

    def canonical(self) -> str:
        """Decode parameters are part of the key; the tag is not."""
        temp = Fraction(str(self.temperature))
        return json.dumps({"system_text": self.system_text, "user_text": self.user_text,
                           "temperature": f"{temp.numerator}/{temp.denominator}",
                           "max_tokens": self.max_tokens},
                          sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GenResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    backend_id: str = ""
    latency_ms: float = 0.0
    truncated: bool = False


class Backend(Protocol):
    backend_id: str

    def generate(self, req: GenRequest) -> GenResponse: ...


def _count_tokens(text: str) -> int:
    return len(text.split())


# -- scripted ----------------------------------------------------------------


@dataclass(frozen=True)
class Rule:
    """Matches when ``contains`` is a substring of, or ``pattern`` is found in, the user text.

    The reply is ``respond`` verbatim, or ``expand`` filled from the pattern's
    groups via ``re.Match.expand``. Patterns use DOTALL.
    """

    contains: Optional[str] = None
    pattern: Optional[str] = None
    respond: Optional[str] = None
    expand: Optional[str] = None
    name: str = ""

    def __post_init__(self):
        if (self.contains is None) == (self.pattern is None):
            raise ValueError("a rule needs exactly one of 'contains' or 'pattern'")
        if (self.respond is None) == (self.expand is None):
            raise ValueError("a rule needs exactly one of 'respond' or 'expand'")
        if self.expand is not None and self.pattern is None:
            raise ValueError("'expand' requires 'pattern'")

    def apply(self, text: str) -> Optional[str]:
        if self.contains is not None:
            return self.respond if self.contains in text else None
        m = re.search(self.pattern, text, re.DOTALL)
        if m is None:
            return None
        return m.expand(self.expand) if self.expand is not None else self.respond


class ScriptedBackend:
    def __init__(self, rules: Sequence[Rule], backend_id: str = "scripted"):
        self.rules = list(rules)
        self.backend_id = backend_id
        self.calls: List[GenRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_dicts(cls, items: Iterable[Mapping], backend_id: str = "scripted") -> "ScriptedBackend":
        return cls([Rule(**dict(i)) for i in items], backend_id)

    @classmethod
    def from_file(cls, path: Union[str, Path], backend_id: Optional[str] = None) -> "ScriptedBackend":
        """Rule table as a YAML list; ``respond_file`` entries are read relative to the table."""
        path = Path(path)
        items = yaml.safe_load(path.read_text(encoding="utf-8")) or []
        rules = []
        for item in items:
            item = dict(item)
            if "respond_file" in item:
                item["respond"] = (path.parent / item.pop("respond_file")).read_text(encoding="utf-8")
            rules.append(Rule(**item))
        return cls(rules, backend_id or f"scripted:{path.stem}")

    def generate(self, req: GenRequest) -> GenResponse:
        with self._lock:
            self.calls.append(req)
        for rule in self.rules:
            out = rule.apply(req.user_text)
            if out is not None:
                return GenResponse(out, _count_tokens(req.system_text + " " + req.user_text),
                                   _count_tokens(out), self.backend_id)
        raise NoRuleMatches(f"no scripted rule matches request {req.tag or req.digest()[:12]}")


# -- fixture store, replay, recording -----------------------------------------


class FixtureStore:
    """Append-only JSON-lines file: one ``{digest, request, response}`` record per line."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: Dict[str, dict] = {}
        if self.path.exists():
            for n, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                old = self._entries.get(rec["digest"])
                if old is not None and old["response"]["text"] != rec["response"]["text"]:
                    raise IntegrityError(f"{self.path}:{n}: conflicting responses for {rec['digest']}")
                self._entries[rec["digest"]] = rec

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, digest: str) -> bool:
        return digest in self._entries

    def get(self, digest: str) -> Optional[dict]:
        return self._entries.get(digest)

    def put(self, req: GenRequest, resp: GenResponse) -> bool:
        """Persist one pair; returns False if an identical entry already exists."""
        digest = req.digest()
        with self._lock:
            old = self._entries.get(digest)
            if old is not None:
                if old["response"]["text"] != resp.text:
                    raise IntegrityError(f"digest {digest} already recorded with a different response")
                return False
            rec = {"digest": digest,
                   "request": {"system_text": req.system_text, "user_text": req.user_text,
                               "temperature": req.temperature, "max_tokens": req.max_tokens,
                               "tag": req.tag},
                   "response": {"text": resp.text, "prompt_tokens": resp.prompt_tokens,
                                "completion_tokens": resp.completion_tokens,
                                "truncated": resp.truncated}}
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
            self._entries[digest] = rec
            return True


class ReplayBackend:
    def __init__(self, store: Union[FixtureStore, str, Path], backend_id: str = "replay"):
        self.store = store if isinstance(store, FixtureStore) else FixtureStore(store)
        self.backend_id = backend_id

    def generate(self, req: GenRequest) -> GenResponse:
        digest = req.digest()
        rec = self.store.get(digest)
        if rec is None:
            raise ReplayMiss(digest, req.tag)
        r = rec["response"]
        return GenResponse(r["text"], r.get("prompt_tokens", 0), r.get("completion_tokens", 0),
                           self.backend_id, 0.0, r.get("truncated", False))


class RecordingBackend:
    """Wraps another backend and persists each request/response pair."""

    def __init__(self, inner: Backend, store: Union[FixtureStore, str, Path]):
        self.inner = inner
        self.store = store if isinstance(store, FixtureStore) else FixtureStore(store)
        self.backend_id = f"recording:{inner.backend_id}"

    def generate(self, req: GenRequest) -> GenResponse:
        resp = self.inner.generate(req)
        self.store.put(req, resp)
        return resp


# -- HTTP --------------------------------------------------------------------


def redact(text: str, secret: Optional[str]) -> str:
    if secret:
        text = text.replace(secret, "***")
    return text


@dataclass
class HttpBackend:
    """Chat-completions client.

    Request body: ``{"model", "messages": [system, user], "temperature",
    "max_tokens"}``; reply read from ``choices[0].message.content`` with token
    counts from ``usage``. A ``finish_reason`` of ``length`` marks truncation.
    """

    endpoint: str
    model: str
    api_key_env: str = API_KEY_ENV
    timeout_s: float = 60.0
    max_in_flight: int = 4
    attempts: int = 3
    backoff_s: float = 1.0
    transport: Optional[httpx.BaseTransport] = None
    sleep: Callable[[float], None] = time.sleep
    backend_id: str = field(default="")

    def __post_init__(self):
        if not self.backend_id:
            self.backend_id = f"http:{self.model}"
        self._sem = threading.BoundedSemaphore(self.max_in_flight)
        self._client = httpx.Client(timeout=self.timeout_s, transport=self.transport)

    def _key(self) -> Optional[str]:
        return os.environ.get(self.api_key_env)

    def generate(self, req: GenRequest) -> GenResponse:
        key = self._key()
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {"model": self.model,
                "messages": [{"role": "system", "content": req.system_text},
                             {"role": "user", "content": req.user_text}],
                "temperature": req.temperature, "max_tokens": req.max_tokens}
        last: Optional[BackendError] = None
        for attempt in range(self.attempts):
            if attempt:
                self.sleep(self.backoff_s * 2 ** (attempt - 1))
            t0 = time.perf_counter()
            try:
                with self._sem:
                    r = self._client.post(self.endpoint, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = BackendError(redact(f"transport error: {exc}", key))
                log.warning("attempt %d failed: %s", attempt + 1, last)
                continue
            latency = (time.perf_counter() - t0) * 1000
            if r.status_code == 429 or r.status_code >= 500:
                last = HttpStatusError(r.status_code, redact(r.text, key))
                log.warning("attempt %d failed: HTTP %d", attempt + 1, r.status_code)
                continue
            if r.status_code >= 400:
                raise HttpStatusError(r.status_code, redact(r.text, key))
            data = r.json()
            choice = data["choices"][0]
            usage = data.get("usage") or {}
            resp = GenResponse(choice["message"].get("content") or "",
                               usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0),
                               self.backend_id, latency, choice.get("finish_reason") == "length")
            log.info("%s %s: %d+%d tokens in %.0f ms", self.backend_id, req.tag,
                     resp.prompt_tokens, resp.completion_tokens, latency)
            return resp
        assert last is not None
        raise last

    def close(self) -> None:
        self._client.close()
