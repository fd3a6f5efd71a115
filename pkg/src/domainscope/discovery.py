import gzip
import json
import logging
import xml.etree.ElementTree as ET
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urldefrag, urljoin, urlsplit
from urllib.robotparser import RobotFileParser

from bs4 import BeautifulSoup, UnicodeDammit

from .errors import ConfigError, DecodeError, MalformedHost, PageFetchFailed
from .hosts import normalize_host
from .registry import suggest_category

DEFAULT_MAX_DEPTH = 2
DEFAULT_MAX_PAGES = 200

_LINK_RELS = {"alternate", "canonical", "home", "related", "author", "me", "next", "prev"}


@dataclass(frozen=True)
class CrawlPolicy:
    max_pages_per_domain: int = DEFAULT_MAX_PAGES
    max_depth: int = DEFAULT_MAX_DEPTH
    fetch_timeout: float = 10.0
    obey_robots: bool = True
    include_sitemaps: bool = True
    max_sitemaps: int = 20
    user_agent: str = "domainscope"
    seed_scheme: str = "https"

    def __post_init__(self):
        if self.max_pages_per_domain < 1:
            raise ConfigError("max_pages_per_domain must be >= 1")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")

    @classmethod
    def from_config(cls, crawl):
        return cls(
            max_pages_per_domain=crawl["max_pages_per_domain"],
            max_depth=crawl["max_depth"],
            fetch_timeout=crawl["fetch_timeout"],
            obey_robots=crawl["obey_robots"],
            include_sitemaps=crawl["include_sitemaps"],
            max_sitemaps=crawl["max_sitemaps"],
            user_agent=crawl["user_agent"],
            seed_scheme=crawl["seed_scheme"],
        )


@dataclass(frozen=True)
class Evidence:
    source_page: str
    anchor_text: str


@dataclass(frozen=True)
class CandidateDomain:
    host: str
    evidence: tuple
    first_seen: str


@dataclass(frozen=True)
class CrawlDiagnostic:
    url: str
    kind: str
    detail: str


@dataclass(frozen=True)
class OutlinkResult:
    external: dict
    frontier: tuple

    @property
    def hosts(self):
        return frozenset(self.external)


def _anchor_text(tag):
    text = " ".join(tag.get_text(" ", strip=True).split())
    if not text:
        text = str(tag.get("title") or tag.get("alt") or "").strip()
    return text


def _followable(tag):
    if tag.name != "link":
        return True
    rel = tag.get("rel") or []
    if isinstance(rel, str):
        rel = rel.split()
    return any(value.lower() in _LINK_RELS for value in rel)


def extract_outlink_hosts(html, base):
    if isinstance(html, str):
        markup = html
    else:
        markup = UnicodeDammit(html, user_encodings=["utf-8"], is_html=True).unicode_markup
        if markup is None:
            raise DecodeError(f"{base}: no recoverable text in document")
    soup = BeautifulSoup(markup, "html.parser")

    base_tag = soup.find("base", href=True)
    if base_tag is not None:
        base = urljoin(base, base_tag["href"].strip())
    try:
        own_domain = normalize_host(base)
    except MalformedHost:
        own_domain = None

    external = {}
    frontier = []
    seen = set()
    for tag in soup.find_all(["a", "area", "link"]):
        href = tag.get("href")
        if not href or not _followable(tag):
            continue
        url, _ = urldefrag(urljoin(base, href.strip()))
        if urlsplit(url).scheme.lower() not in ("http", "https"):
            continue
        try:
            host = normalize_host(url)
        except MalformedHost:
            continue
        if host == own_domain:
            if url not in seen:
                seen.add(url)
                frontier.append(url)
            continue
        anchors = external.setdefault(host, [])
        text = _anchor_text(tag)
        if text not in anchors:
            anchors.append(text)
    return OutlinkResult({host: tuple(texts) for host, texts in external.items()}, tuple(frontier))


def parse_sitemap(body):
    if body[:2] == b"\x1f\x8b":
        try:
            body = gzip.decompress(body)
        except OSError as exc:
            logging.warning("Unreadable gzip sitemap: %s", exc)
            return [], []
    try:
        root = ET.fromstring(body)
    except ET.ParseError as exc:
        logging.warning("Unparseable sitemap: %s", exc)
        return [], []
    kind = root.tag.rsplit("}", 1)[-1].lower()
    locs = [
        element.text.strip()
        for element in root.iter()
        if element.tag.rsplit("}", 1)[-1] == "loc" and element.text and element.text.strip()
    ]
    if kind == "sitemapindex":
        return [], locs
    if kind == "urlset":
        return locs, []
    return [], []


class _DomainCrawl:
    def __init__(self, domain, seed):
        self.domain = domain
        self.seed = seed
        self.fetched = 0
        self.found = {}
        self.diagnostics = []

    def record(self, host, page, anchors, fetched_at):
        entry = self.found.setdefault(host, {"evidence": [], "first_seen": fetched_at})
        for text in anchors or ("",):
            evidence = Evidence(page, text)
            if evidence not in entry["evidence"]:
                entry["evidence"].append(evidence)

    def fail(self, url, kind, detail):
        logging.warning("Crawl %s: %s %s", kind, url, detail)
        self.diagnostics.append(CrawlDiagnostic(url, kind, detail))


class OrganizationCrawler:
    def __init__(self, fetcher, policy, jobs=1):
        self.fetcher = fetcher
        self.policy = policy
        self.jobs = max(1, int(jobs))
        self.diagnostics = []
        self.fetch_counts = {}

    def _robots(self, crawl):
        url = f"{self.policy.seed_scheme}://{crawl.domain}/robots.txt"
        try:
            response = self.fetcher.fetch(url)
        except PageFetchFailed as exc:
            crawl.fail(url, "robots", str(exc))
            return None, []
        parser = RobotFileParser(url)
        if response.ok:
            parser.parse(response.body.decode("utf-8", "replace").splitlines())
        elif 400 <= response.status < 500:
            parser.parse([])
        else:
            crawl.fail(url, "robots", f"HTTP {response.status}, crawling without rules")
            return None, []
        return parser, list(parser.site_maps() or [])

    def _crawl_domain(self, domain):
        policy = self.policy
        seed = f"{policy.seed_scheme}://{domain}/"
        crawl = _DomainCrawl(domain, seed)
        robots, declared = (None, [])
        if policy.obey_robots:
            robots, declared = self._robots(crawl)

        queue = deque([(seed, 0, "page")])
        seen = {seed}
        if policy.include_sitemaps and policy.max_depth >= 1:
            for url in declared + [f"{policy.seed_scheme}://{domain}/sitemap.xml"]:
                if url not in seen and len(seen) - 1 < policy.max_sitemaps:
                    seen.add(url)
                    queue.append((url, 1, "sitemap"))
        sitemaps_read = 0

        while queue and crawl.fetched < policy.max_pages_per_domain:
            url, depth, kind = queue.popleft()
            if robots is not None and not robots.can_fetch(policy.user_agent, url):
                crawl.diagnostics.append(CrawlDiagnostic(url, "robots", "disallowed"))
                continue
            crawl.fetched += 1
            try:
                response = self.fetcher.fetch(url)
            except PageFetchFailed as exc:
                crawl.fail(url, "fetch", str(exc))
                continue
            if not response.ok:
                crawl.fail(url, "fetch", f"HTTP {response.status}")
                continue

            if kind == "sitemap":
                sitemaps_read += 1
                pages, nested = parse_sitemap(response.body)
                for page in pages:
                    try:
                        host = normalize_host(page)
                    except MalformedHost:
                        continue
                    if host != domain:
                        crawl.record(host, url, ("",), response.fetched_at)
                    elif page not in seen:
                        seen.add(page)
                        queue.append((page, depth, "page"))
                for child in nested:
                    if child not in seen and sitemaps_read < policy.max_sitemaps:
                        seen.add(child)
                        queue.append((child, depth, "sitemap"))
                continue

            if not response.is_html:
                continue
            try:
                links = extract_outlink_hosts(response.body, response.url)
            except DecodeError as exc:
                crawl.fail(url, "decode", str(exc))
                continue
            for host, anchors in links.external.items():
                crawl.record(host, url, anchors, response.fetched_at)
            if depth < policy.max_depth:
                for next_url in links.frontier:
                    if next_url not in seen:
                        seen.add(next_url)
                        queue.append((next_url, depth + 1, "page"))

        logging.info("Crawled %s: %d fetches, %d external hosts", domain, crawl.fetched, len(crawl.found))
        return crawl

    def crawl(self, org):
        registered = set(org.hosts)
        domains = list(org.hosts)
        if self.jobs > 1 and len(domains) > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                crawls = list(pool.map(self._crawl_domain, domains))
        else:
            crawls = [self._crawl_domain(domain) for domain in domains]

        merged = {}
        for crawl in crawls:
            self.fetch_counts[crawl.domain] = crawl.fetched
            self.diagnostics.extend(crawl.diagnostics)
            for host, entry in crawl.found.items():
                if host in registered:
                    continue
                target = merged.setdefault(host, {"evidence": [], "first_seen": entry["first_seen"]})
                target["first_seen"] = min(target["first_seen"], entry["first_seen"])
                for evidence in entry["evidence"]:
                    if evidence not in target["evidence"]:
                        target["evidence"].append(evidence)

        candidates = [
            CandidateDomain(host, tuple(entry["evidence"]), entry["first_seen"])
            for host, entry in merged.items()
        ]
        candidates.sort(key=lambda c: (c.host, c.first_seen))
        return candidates


def crawl_organization(org, policy, fetcher, jobs=1):
    return OrganizationCrawler(fetcher, policy, jobs=jobs).crawl(org)


def review_entries(org, candidates, hints=None):
    entries = []
    for candidate in candidates:
        suggestion = suggest_category(candidate.host, org.corporate_hosts, hints)
        entries.append(
            {
                "organization": org.id,
                "host": candidate.host,
                "suggested_category": suggestion.category.value,
                "confidence": suggestion.confidence,
                "needs_confirmation": suggestion.needs_confirmation,
                "reason": suggestion.reason,
                "first_seen": candidate.first_seen,
                "evidence": [
                    {"source_page": e.source_page, "anchor_text": e.anchor_text}
                    for e in candidate.evidence
                ],
            }
        )
    return entries


def write_review_queue(path, entries, diagnostics=()):
    queue_path = Path(path)
    queue_path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "candidates": entries,
        "diagnostics": [
            {"url": d.url, "kind": d.kind, "detail": d.detail} for d in diagnostics
        ],
    }
    with queue_path.open("w", encoding="utf-8", newline="\n") as handle:
        json.dump(document, handle, indent=2, sort_keys=True, ensure_ascii=False)
        handle.write("\n")
