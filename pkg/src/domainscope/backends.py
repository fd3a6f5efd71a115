import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .cache import CacheRecord, read_records
from .errors import (
    BackendUnavailable,
    ConfigError,
    MalformedHost,
    QueryRejected,
    QuotaExhausted,
    ValidationError,
)
from .hosts import normalize_host
from .throttle import RateLimiter, utc_now

INDICATORS = ("page_count", "sites_linking_in", "root_domains_linking", "authority")

FIXTURE_EPOCH = "1970-01-01T00:00:00+00:00"


@dataclass(frozen=True)
class HitCountQuery:
    phrase: str | None = None
    site: str | None = None

    def __post_init__(self):
        if self.phrase is None and self.site is None:
            raise QueryRejected("query needs a phrase, a site restriction or both")
        if self.phrase is not None and (not self.phrase or '"' in self.phrase):
            raise QueryRejected(f"phrase must be non-empty and unquoted: {self.phrase!r}")


def render_query(query):
    parts = []
    if query.phrase is not None:
        parts.append(f'"{query.phrase}"')
    if query.site is not None:
        parts.append(f"site:{query.site}")
    return " ".join(parts)


@dataclass(frozen=True)
class HitCount:
    query: str
    value: int | None
    rounded: bool = False
    backend_id: str = ""
    captured_at: str = ""

    @property
    def missing(self):
        return self.value is None


@dataclass(frozen=True)
class ImpactSnapshot:
    host: str
    page_count: int | None
    sites_linking_in: int | None
    root_domains_linking: int | None
    authority: float | None
    captured_at: str
    backend_id: str

    def __post_init__(self):
        for name in INDICATORS[:3]:
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValidationError(f"{self.host}: {name} must be nonnegative, got {value}")
        if self.authority is not None and not 0.0 <= self.authority <= 100.0:
            raise ValidationError(f"{self.host}: authority {self.authority} outside [0, 100]")

    def value(self, indicator):
        return getattr(self, indicator)

    def to_value(self):
        return {name: getattr(self, name) for name in INDICATORS}

    @classmethod
    def from_value(cls, host, value, captured_at, backend_id):
        value = value if isinstance(value, dict) else {}
        counts = {}
        for name in INDICATORS[:3]:
            raw = value.get(name)
            counts[name] = None if raw is None else int(raw)
        authority = value.get("authority")
        return cls(
            host=host,
            authority=None if authority is None else float(authority),
            captured_at=captured_at,
            backend_id=backend_id,
            **counts,
        )

    @property
    def missing(self):
        return all(getattr(self, name) is None for name in INDICATORS)


def hce_key(rendered):
    return f"hce:{rendered}"


def impact_key(host):
    return f"impact:{host}"


class BackendBase:
    backend_id = "base"
    rounds_counts = False
    max_query_length = 2048

    def hit_count(self, rendered):
        raise NotImplementedError

    def impact(self, host):
        raise NotImplementedError

    def close(self):
        pass


class FixtureBackend(BackendBase):
    def __init__(self, root, backend_id="fixture", rounded=False):
        path = Path(root)
        if path.is_dir():
            files = sorted(path.glob("*.jsonl"))
        elif path.is_file():
            files = [path]
        else:
            raise BackendUnavailable(f"fixture backend directory not found: {path}")
        self.backend_id = backend_id
        self.rounds_counts = rounded
        self.calls = 0
        self._lock = threading.Lock()
        self._records = {}
        for file_path in files:
            for record in read_records(file_path):
                self._records[record.key] = record
        stamps = [r.captured_at for r in self._records.values() if r.captured_at]
        self.captured_at = max(stamps) if stamps else FIXTURE_EPOCH
        logging.info("Fixture backend %s: %d records", path, len(self._records))

    def _count(self):
        with self._lock:
            self.calls += 1

    def hit_count(self, rendered):
        self._count()
        record = self._records.get(hce_key(rendered))
        if record is None or record.value is None:
            return HitCount(rendered, None, self.rounds_counts, self.backend_id, self.captured_at)
        return HitCount(
            rendered, int(record.value), self.rounds_counts, self.backend_id, record.captured_at
        )

    def impact(self, host):
        self._count()
        record = self._records.get(impact_key(host))
        if record is None:
            return ImpactSnapshot.from_value(host, {}, self.captured_at, self.backend_id)
        return ImpactSnapshot.from_value(host, record.value, record.captured_at, self.backend_id)


def _dig(data, dotted):
    current = data
    for part in dotted.split("."):
        if isinstance(current, dict) and part in current:
            current = current[part]
        else:
            return None
    return current


class HttpJsonBackend(BackendBase):
    def __init__(self, name, settings, seed=0, session=None, limiter=None, sleep=time.sleep):
        self.backend_id = f"live:{name}"
        self.settings = settings
        self.rounds_counts = bool(settings.get("rounded", True))
        self.max_query_length = int(settings.get("max_query_length", 2048))
        self.session = session or requests.Session()
        self.limiter = limiter or RateLimiter(settings.get("rate_per_sec", 1.0))
        self._sleep = sleep
        self._rng = random.Random(seed)
        self._rng_lock = threading.Lock()
        self._warned_impact = False
        key_env = settings.get("api_key_env")
        self._api_key = os.environ.get(key_env, "") if key_env else ""
        if key_env and not self._api_key:
            logging.warning("%s: %s is not set; requests go out without an API key", self.backend_id, key_env)

    def _backoff(self, attempt):
        with self._rng_lock:
            jitter = self._rng.uniform(0.0, 1.0)
        return float(self.settings.get("backoff_sec", 2.0)) * (2**attempt + jitter)

    def _get_json(self, url, params):
        retries = int(self.settings.get("retries", 3))
        timeout = float(self.settings.get("timeout", 10.0))
        last_error = None
        for attempt in range(retries + 1):
            self.limiter.acquire()
            try:
                response = self.session.get(url, params=params, timeout=timeout)
            except requests.RequestException as exc:
                last_error = f"{url}: {exc}"
            else:
                status = response.status_code
                if status == 429:
                    raise QuotaExhausted(f"{self.backend_id}: quota exhausted (HTTP 429)")
                if status in (400, 414):
                    raise QueryRejected(f"{self.backend_id}: query rejected (HTTP {status})")
                if status < 400:
                    try:
                        return response.json()
                    except ValueError as exc:
                        raise BackendUnavailable(f"{self.backend_id}: invalid JSON: {exc}") from exc
                last_error = f"{url}: HTTP {status}"
                if status < 500:
                    raise BackendUnavailable(f"{self.backend_id}: {last_error}")
            if attempt < retries:
                delay = self._backoff(attempt)
                logging.warning("%s: %s, retrying in %.1fs", self.backend_id, last_error, delay)
                self._sleep(delay)
        raise BackendUnavailable(f"{self.backend_id}: giving up after {retries + 1} attempts ({last_error})")

    def hit_count(self, rendered):
        params = dict(self.settings.get("params", {}))
        params[self.settings.get("query_param", "q")] = rendered
        if self._api_key:
            params[self.settings.get("api_key_param", "key")] = self._api_key
        data = self._get_json(self.settings["endpoint"], params)
        raw = _dig(data, self.settings.get("count_path", "searchInformation.totalResults"))
        value = None
        if raw is not None:
            try:
                value = max(0, int(str(raw).replace(",", "")))
            except ValueError:
                logging.warning("%s: non-numeric count %r for %s", self.backend_id, raw, rendered)
        logging.debug("%s: %s -> %s", self.backend_id, rendered, value)
        return HitCount(rendered, value, self.rounds_counts, self.backend_id, utc_now())

    def impact(self, host):
        endpoint = self.settings.get("impact_endpoint")
        if not endpoint:
            if not self._warned_impact:
                logging.warning("%s has no impact endpoint; impact indicators are missing", self.backend_id)
                self._warned_impact = True
            return ImpactSnapshot.from_value(host, {}, utc_now(), self.backend_id)
        params = dict(self.settings.get("params", {}))
        params[self.settings.get("impact_host_param", "site")] = host
        if self._api_key:
            params[self.settings.get("api_key_param", "key")] = self._api_key
        data = self._get_json(endpoint, params)
        fields = self.settings.get("impact_fields", {})
        value = {name: _dig(data, fields.get(name, name)) for name in INDICATORS}
        return ImpactSnapshot.from_value(host, value, utc_now(), self.backend_id)

    def close(self):
        self.session.close()


class CachedBackend(BackendBase):
    def __init__(self, inner, cache):
        self.inner = inner
        self.cache = cache
        self.backend_id = inner.backend_id
        self.rounds_counts = inner.rounds_counts
        self.max_query_length = inner.max_query_length
        self.backend_calls = 0
        self._lock = threading.Lock()

    def _called(self):
        with self._lock:
            self.backend_calls += 1

    def hit_count(self, rendered):
        key = hce_key(rendered)
        record = self.cache.get(self.backend_id, key)
        if record is not None:
            value = None if record.value is None else int(record.value)
            return HitCount(rendered, value, self.rounds_counts, self.backend_id, record.captured_at)
        result = self.inner.hit_count(rendered)
        self._called()
        self.cache.put(CacheRecord(self.backend_id, key, result.value, result.captured_at))
        return result

    def impact(self, host):
        key = impact_key(host)
        record = self.cache.get(self.backend_id, key)
        if record is not None:
            return ImpactSnapshot.from_value(host, record.value, record.captured_at, self.backend_id)
        snapshot = self.inner.impact(host)
        self._called()
        self.cache.put(CacheRecord(self.backend_id, key, snapshot.to_value(), snapshot.captured_at))
        return snapshot

    def close(self):
        self.inner.close()


def fetch_impact(host, backend):
    normalized = normalize_host(host)
    if normalized != host:
        raise MalformedHost(f"{host!r} is not normalized; use {normalized!r}")
    return backend.impact(host)


def hit_count_estimate(query, backend):
    rendered = render_query(query)
    if len(rendered) > backend.max_query_length:
        raise QueryRejected(
            f"query of {len(rendered)} characters exceeds {backend.backend_id} limit {backend.max_query_length}"
        )
    return backend.hit_count(rendered)


def create_backend(config, cache=None, selection=None):
    backends_cfg = config["backends"]
    selection = selection or backends_cfg["selected"]
    if selection == "fixture":
        fixture_cfg = backends_cfg["fixture"]
        inner = FixtureBackend(fixture_cfg["path"], rounded=fixture_cfg.get("rounded", False))
    elif selection.startswith("live:"):
        name = selection[len("live:"):]
        settings = backends_cfg.get("live", {}).get(name)
        if settings is None:
            raise ConfigError(f"no backends.live.{name} section for backend {selection}")
        inner = HttpJsonBackend(name, settings, seed=config["runtime"].get("seed", 0))
    else:
        raise ConfigError(f"unknown backend {selection!r}; use fixture or live:<name>")
    logging.info("Backend: %s", inner.backend_id)
    if cache is None:
        return inner
    return CachedBackend(inner, cache)
