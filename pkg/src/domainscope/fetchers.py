import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urldefrag, urlsplit

import requests

from .errors import ConfigError, FetcherUnavailable, PageFetchFailed
from .throttle import RateLimiter, utc_now

FIXTURE_MANIFEST = "pages.json"


@dataclass(frozen=True)
class FetchResponse:
    url: str
    status: int
    body: bytes
    content_type: str = ""
    fetched_at: str = ""

    @property
    def ok(self):
        return 200 <= self.status < 300

    @property
    def is_html(self):
        return not self.content_type or "html" in self.content_type.lower()


class FetcherBase:
    def fetch(self, url):
        raise NotImplementedError

    def close(self):
        pass


class FixtureFetcher(FetcherBase):
    def __init__(self, root):
        self.root = Path(root)
        manifest = self.root / FIXTURE_MANIFEST
        if not manifest.is_file():
            raise FetcherUnavailable(f"fixture pages manifest not found: {manifest}")
        try:
            with manifest.open("r", encoding="utf-8") as handle:
                data = json.load(handle)
        except (OSError, ValueError) as exc:
            raise FetcherUnavailable(f"fixture pages manifest {manifest} is unreadable: {exc}") from exc
        if not isinstance(data, dict):
            raise FetcherUnavailable(f"fixture pages manifest {manifest} must be a JSON object")
        self.captured_at = str(data.get("captured_at", "1970-01-01T00:00:00+00:00"))
        self.pages = dict(data.get("pages", {}))
        self.fetched = []
        self._lock = threading.Lock()

    def fetch(self, url):
        url, _ = urldefrag(url)
        with self._lock:
            self.fetched.append(url)
        entry = self.pages.get(url)
        if entry is None:
            return FetchResponse(url, 404, b"", "", self.captured_at)
        if entry.get("error"):
            raise PageFetchFailed(f"{url}: {entry['error']}")
        if "file" in entry:
            try:
                body = (self.root / entry["file"]).read_bytes()
            except OSError as exc:
                raise PageFetchFailed(f"{url}: {exc}") from exc
        else:
            body = str(entry.get("body", "")).encode("utf-8")
        return FetchResponse(
            url=url,
            status=int(entry.get("status", 200)),
            body=body,
            content_type=str(entry.get("content_type", "text/html")),
            fetched_at=str(entry.get("fetched_at", self.captured_at)),
        )


class LiveFetcher(FetcherBase):
    def __init__(self, user_agent, timeout=10.0, request_delay=1.0, session=None):
        self.session = session or requests.Session()
        self.session.headers["User-Agent"] = user_agent
        self.timeout = timeout
        self.request_delay = request_delay
        self._limiters = {}
        self._lock = threading.Lock()

    def _limiter(self, host):
        with self._lock:
            if host not in self._limiters:
                rate = 1.0 / self.request_delay if self.request_delay > 0 else 0.0
                self._limiters[host] = RateLimiter(rate)
            return self._limiters[host]

    def fetch(self, url):
        host = (urlsplit(url).hostname or "").lower()
        self._limiter(host).acquire()
        try:
            response = self.session.get(url, timeout=self.timeout, allow_redirects=True)
        except requests.RequestException as exc:
            raise PageFetchFailed(f"{url}: {exc}") from exc
        return FetchResponse(
            url=response.url or url,
            status=response.status_code,
            body=response.content,
            content_type=response.headers.get("Content-Type", ""),
            fetched_at=utc_now(),
        )

    def close(self):
        self.session.close()


def create_fetcher(config):
    crawl = config["crawl"]
    mode = crawl.get("fetcher", "fixture")
    if mode == "fixture":
        fetcher = FixtureFetcher(crawl["fixture_path"])
        logging.info("Fetcher: fixture pages from %s", crawl["fixture_path"])
        return fetcher
    if mode == "live":
        logging.info("Fetcher: live HTTP as %r", crawl["user_agent"])
        return LiveFetcher(
            crawl["user_agent"],
            timeout=crawl["fetch_timeout"],
            request_delay=crawl["request_delay"],
        )
    if mode == "none":
        return None
    raise ConfigError(f"unknown crawl.fetcher {mode!r}")
