"""Commonsense object-receptacle priors from a language model, with a cache and an offline stub."""

from __future__ import annotations

import json
import logging
import os
import re
import stat
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol

import httpx

from .constructs import CommonsensePriorTable
from .errors import CoverageError, OracleParseError, PreconditionError, TransportError
from .priors import commonsense_from_entries
from .scene import SceneDescription, read_json

logger = logging.getLogger(__name__)

PROMPT_VERSION = "v1"
ENV_URL = "PREFARRANGE_ORACLE_URL"
ENV_KEY = "PREFARRANGE_ORACLE_KEY"
ENV_MODEL = "PREFARRANGE_ORACLE_MODEL"
DEFAULT_MODEL = "gpt-4"

_SCORE_LINE = re.compile(r"score\s*[:=]\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)", re.IGNORECASE)
_DECIMAL = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_RATIONALE_LINE = re.compile(r"rationale\s*:\s*(.*)", re.IGNORECASE)


def scene_graph(scene: SceneDescription, object_id: str, receptacle_id: str) -> dict[str, Any]:
    """JSON-ready graph of the scene plus the queried pair."""
    obj = scene.object(object_id)
    rec = scene.receptacle(receptacle_id)
    return {
        "room": scene.room or scene.id,
        "objects": [{"id": o.id, "name": o.name} for o in scene.objects],
        "receptacles": [{"id": r.id, "name": r.name} for r in scene.receptacles],
        "query": {"object_id": obj.id, "object_name": obj.name, "receptacle_id": rec.id, "receptacle_name": rec.name},
    }


def build_prompt(scene: SceneDescription, object_id: str, receptacle_id: str) -> str:
    graph = scene_graph(scene, object_id, receptacle_id)
    q = graph["query"]
    return (
        "You are judging how appropriate household object placements are.\n"
        "Scene (JSON graph):\n"
        f"{json.dumps(graph, indent=2, sort_keys=True)}\n\n"
        f"How appropriate is it to place \"{q['object_name']}\" on or in \"{q['receptacle_name']}\" "
        "in this room, by common sense?\n"
        "Answer with exactly two lines:\n"
        "score: <a decimal number between 0 and 1, where 1 is perfectly appropriate>\n"
        "rationale: <one short sentence>\n"
    )


def parse_reply(text: str) -> tuple[float, str]:
    """Return ``(score, rationale)`` from a model reply.

    A ``score:`` line wins; otherwise the first decimal anywhere in the reply
    is used. The value is clamped to [0, 1].
    """
    m = _SCORE_LINE.search(text)
    raw = m.group(1) if m else None
    if raw is None:
        m2 = _DECIMAL.search(text)
        if m2 is None:
            raise OracleParseError(f"no score in model reply: {text[:80]!r}")
        raw = m2.group(0)
    value = float(raw)
    r = _RATIONALE_LINE.search(text)
    return min(1.0, max(0.0, value)), (r.group(1).strip() if r else "")


@dataclass(frozen=True)
class OracleResponse:
    object_id: str
    receptacle_id: str
    score: float
    rationale: str = ""
    raw: str = ""


class PriorCache:
    """Persistent map ``(scene, object, receptacle, prompt version) -> OracleResponse``.

    Entries are write-once. With ``path=None`` the cache lives in memory.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries: dict[str, dict[str, Any]] = {}
        if self.path is not None and self.path.exists():
            doc = read_json(self.path)
            self._entries = dict(doc.get("entries", {}))

    @staticmethod
    def key(scene_id: str, object_id: str, receptacle_id: str, prompt_version: str) -> str:
        return json.dumps([scene_id, object_id, receptacle_id, prompt_version])

    def get(self, scene_id: str, object_id: str, receptacle_id: str, prompt_version: str) -> OracleResponse | None:
        entry = self._entries.get(self.key(scene_id, object_id, receptacle_id, prompt_version))
        return OracleResponse(**entry) if entry is not None else None

    def put(self, scene_id: str, response: OracleResponse, prompt_version: str) -> None:
        k = self.key(scene_id, response.object_id, response.receptacle_id, prompt_version)
        with self._lock:
            if k in self._entries:
                return
            self._entries[k] = asdict(response)
            self._flush()

    def __len__(self) -> int:
        return len(self._entries)

    def _flush(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump({"entries": dict(sorted(self._entries.items()))}, fh, indent=1)
        os.replace(tmp, self.path)


class Backend(Protocol):
    name: str
    prompt_version: str
    calls: int

    def query(self, scene: SceneDescription, object_id: str, receptacle_id: str) -> OracleResponse: ...


class StubBackend:
    """Serves scores from a fixture table; never touches the network."""

    prompt_version = "stub"

    def __init__(self, table: CommonsensePriorTable) -> None:
        self.table = table
        self.name = table.provenance or "stub"
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> StubBackend:
        doc = read_json(path)
        entries = doc["commonsense"] if isinstance(doc, Mapping) else doc
        return cls(commonsense_from_entries(entries, default_provenance="stub"))

    def query(self, scene: SceneDescription, object_id: str, receptacle_id: str) -> OracleResponse:
        self.calls += 1
        key = (object_id, receptacle_id)
        if key not in self.table.score:
            raise CoverageError(f"stub fixture has no entry for ({object_id!r}, {receptacle_id!r})")
        return OracleResponse(object_id, receptacle_id, self.table.score[key], rationale="fixture", raw="")


@dataclass
class RemoteConfig:
    url: str
    api_key: str
    model: str = DEFAULT_MODEL
    max_retries: int = 3
    backoff: float = 0.5
    timeout: float = 30.0
    debug: bool = False

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> RemoteConfig:
        env = os.environ if environ is None else environ
        url, key = env.get(ENV_URL), env.get(ENV_KEY)
        if not url or not key:
            raise PreconditionError(f"remote oracle needs {ENV_URL} and {ENV_KEY} to be set")
        return cls(url=url, api_key=key, model=env.get(ENV_MODEL, DEFAULT_MODEL))

    @classmethod
    def from_file(cls, path: str | Path, environ: Mapping[str, str] | None = None) -> RemoteConfig:
        """Read ``url``/``model`` from a JSON file; the key comes from the file only if it is private."""
        path = Path(path)
        doc = read_json(path)
        env = os.environ if environ is None else environ
        key = env.get(ENV_KEY)
        if "api_key" in doc:
            mode = stat.S_IMODE(path.stat().st_mode)
            if mode & 0o077:
                raise PreconditionError(f"{path} holds a credential but is readable by others (mode {mode:o})")
            key = doc["api_key"]
        url = doc.get("url") or env.get(ENV_URL)
        if not url or not key:
            raise PreconditionError("remote oracle config needs a url and a credential")
        return cls(
            url=url,
            api_key=key,
            model=doc.get("model", env.get(ENV_MODEL, DEFAULT_MODEL)),
            max_retries=int(doc.get("max_retries", 3)),
            backoff=float(doc.get("backoff", 0.5)),
            timeout=float(doc.get("timeout", 30.0)),
            debug=bool(doc.get("debug", False)),
        )


class RemoteBackend:
    """Chat-completion style HTTP endpoint, one request per (object, receptacle) pair."""

    prompt_version = PROMPT_VERSION

    def __init__(
        self,
        config: RemoteConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config
        self.name = config.model
        self.calls = 0
        self._sleep = sleep
        self._lock = threading.Lock()
        self._client = httpx.Client(transport=transport, timeout=config.timeout)

    def _redact(self, text: str) -> str:
        return text.replace(self.config.api_key, "***") if self.config.api_key else text

    def _post(self, prompt: str) -> str:
        body = {"model": self.config.model, "temperature": 0, "messages": [{"role": "user", "content": prompt}]}
        headers = {"Authorization": f"Bearer {self.config.api_key}", "Content-Type": "application/json"}
        if self.config.debug:
            logger.debug("oracle request %s", self._redact(json.dumps({"url": self.config.url, "body": body})))
        with self._lock:
            self.calls += 1
        resp = self._client.post(self.config.url, json=body, headers=headers)
        if resp.status_code == 429 or resp.status_code >= 500:
            raise httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request, response=resp)
        resp.raise_for_status()
        data = resp.json()
        if self.config.debug:
            logger.debug("oracle response %s", self._redact(json.dumps(data)))
        return data["choices"][0]["message"]["content"]

    def query(self, scene: SceneDescription, object_id: str, receptacle_id: str) -> OracleResponse:
        prompt = build_prompt(scene, object_id, receptacle_id)
        attempts = max(1, self.config.max_retries)
        last_reply = None
        last_exc: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                self._sleep(self.config.backoff * 2 ** (attempt - 1))
            try:
                reply = self._post(prompt)
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_exc = exc
                logger.warning("oracle call for (%s, %s) failed: %s", object_id, receptacle_id, self._redact(str(exc)))
                continue
            last_reply = reply
            try:
                score, rationale = parse_reply(reply)
            except OracleParseError:
                continue
            return OracleResponse(object_id, receptacle_id, score, rationale, reply)
        if last_reply is not None:
            raise OracleParseError(
                f"could not parse a score for ({object_id!r}, {receptacle_id!r}) after {attempts} attempts"
            )
        raise TransportError(
            f"oracle unreachable for ({object_id!r}, {receptacle_id!r}) after {attempts} attempts: {last_exc}"
        )

    def close(self) -> None:
        self._client.close()


def fetch_table(
    scene: SceneDescription,
    backend: Backend,
    cache: PriorCache | None = None,
    max_workers: int = 4,
) -> CommonsensePriorTable:
    """Query every object x receptacle pair and return a total table.

    Stub backends bypass the cache. Remote results are cached per prompt
    version; the table is assembled in (object, receptacle) order whatever
    order the concurrent fetches finish in.
    """
    pairs = [(o.id, r.id) for o in scene.objects for r in scene.receptacles]
    use_cache = cache is not None and not isinstance(backend, StubBackend)
    results: dict[tuple[str, str], OracleResponse] = {}
    todo = []
    for oid, rid in pairs:
        hit = cache.get(scene.id, oid, rid, backend.prompt_version) if use_cache else None
        if hit is not None:
            results[(oid, rid)] = hit
        else:
            todo.append((oid, rid))

    def run(pair: tuple[str, str]) -> OracleResponse:
        resp = backend.query(scene, *pair)
        if use_cache:
            cache.put(scene.id, resp, backend.prompt_version)
        return resp

    if max_workers <= 1 or len(todo) <= 1 or isinstance(backend, StubBackend):
        fetched = [run(p) for p in todo]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            fetched = list(pool.map(run, todo))
    for pair, resp in zip(todo, fetched):
        results[pair] = resp

    table = CommonsensePriorTable({p: results[p].score for p in pairs}, provenance=backend.name)
    table.require_total(scene)
    return table


def remote_from_environment(config_path: str | Path | None = None) -> RemoteBackend:
    cfg = RemoteConfig.from_file(config_path) if config_path else RemoteConfig.from_env()
    return RemoteBackend(cfg)

