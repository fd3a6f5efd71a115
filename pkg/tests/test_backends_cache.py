import copy
import sys
import tempfile
import unittest
from datetime import datetime, timezone
from pathlib import Path
from types import SimpleNamespace

import requests

# Keep tests runnable without editable install.
ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from domainscope.backends import (
    CachedBackend,
    FixtureBackend,
    HitCountQuery,
    HttpJsonBackend,
    ImpactSnapshot,
    create_backend,
    fetch_impact,
    hce_key,
    hit_count_estimate,
    render_query,
)
from domainscope.cache import CacheRecord, ResultCache, read_records, record_to_line
from domainscope.config import DEFAULT_CONFIG, load_config
from domainscope.errors import (
    BackendUnavailable,
    ConfigError,
    MalformedHost,
    QueryRejected,
    QuotaExhausted,
    ValidationError,
)
from domainscope.throttle import RateLimiter

FIXTURE_BACKEND = ROOT / "fixtures" / "backend"
CAPTURED = "2014-06-15T00:00:00+00:00"


def write_fixture(directory, records):
    path = Path(directory) / "records.jsonl"
    with path.open("w", encoding="utf-8") as handle:
        for key, value in records.items():
            handle.write(record_to_line(CacheRecord("fixture", key, value, CAPTURED)))
    return path


class VirtualClock:
    def __init__(self):
        self.now = 0.0
        self.sleeps = []

    def __call__(self):
        return self.now

    def sleep(self, seconds):
        self.sleeps.append(seconds)
        self.now += seconds


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []
        self.closed = False

    def get(self, url, params=None, timeout=None):
        self.calls.append((url, dict(params or {})))
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item

    def close(self):
        self.closed = True


def response(status, payload=None):
    return SimpleNamespace(status_code=status, json=lambda: payload)


def live_settings(**overrides):
    settings = copy.deepcopy(DEFAULT_CONFIG["backends"]["live"]["google"])
    settings["api_key_env"] = ""
    settings.update(overrides)
    return settings


class QueryRenderingTests(unittest.TestCase):
    def test_rendered_forms(self):
        self.assertEqual(
            render_query(HitCountQuery("acciona.com", "acciona-engineering.com")),
            '"acciona.com" site:acciona-engineering.com',
        )
        self.assertEqual(render_query(HitCountQuery(site="abc.com")), "site:abc.com")
        self.assertEqual(render_query(HitCountQuery(phrase="a b")), '"a b"')

    def test_invalid_queries(self):
        for kwargs in ({}, {"phrase": ""}, {"phrase": 'say "hi"', "site": "a.com"}):
            with self.subTest(kwargs=kwargs):
                with self.assertRaises(QueryRejected):
                    HitCountQuery(**kwargs)


class FixtureBackendTests(unittest.TestCase):
    def test_hit_counts_missing_and_zero(self):
        with tempfile.TemporaryDirectory() as tmp:
            write_fixture(
                tmp,
                {
                    hce_key('"terra.com" site:terra.com.br'): 11_800_000,
                    hce_key('"terra.es" site:terra.com.br'): 0,
                },
            )
            backend = FixtureBackend(tmp)

        big = hit_count_estimate(HitCountQuery("terra.com", "terra.com.br"), backend)
        zero = hit_count_estimate(HitCountQuery("terra.es", "terra.com.br"), backend)
        absent = hit_count_estimate(HitCountQuery("terra.cl", "terra.com.br"), backend)

        self.assertEqual(big.value, 11_800_000)
        self.assertEqual(big.captured_at, CAPTURED)
        self.assertEqual(zero.value, 0)
        self.assertFalse(zero.missing)
        self.assertTrue(absent.missing)
        self.assertEqual(backend.calls, 3)

    def test_empty_fixture_is_all_missing(self):
        with tempfile.TemporaryDirectory() as tmp:
            backend = FixtureBackend(tmp)
        self.assertTrue(backend.hit_count("site:abc.com").missing)
        self.assertTrue(backend.impact("abc.com").missing)

    def test_missing_directory_is_unavailable(self):
        with self.assertRaises(BackendUnavailable):
            FixtureBackend("/nonexistent/fixture")

    def test_bundled_impact_snapshot(self):
        backend = FixtureBackend(FIXTURE_BACKEND)

        snapshot = fetch_impact("ree.es", backend)
        unknown = fetch_impact("unknown-company.com", backend)

        self.assertEqual(snapshot.page_count, 6790)
        self.assertEqual(snapshot.authority, 62.0)
        self.assertTrue(unknown.missing)
        self.assertIsNone(unknown.page_count)

    def test_partial_snapshot_keeps_missing_marker(self):
        backend = FixtureBackend(FIXTURE_BACKEND)
        snapshot = backend.impact("acciona.com.au")
        self.assertEqual(snapshot.page_count, 3100)
        self.assertIsNone(snapshot.root_domains_linking)
        self.assertFalse(snapshot.missing)

    def test_results_do_not_depend_on_order(self):
        hosts = ["acciona.com", "indra.cl", "ree.es", "nowhere.org"]
        first = [FixtureBackend(FIXTURE_BACKEND).impact(h) for h in hosts]
        backend = FixtureBackend(FIXTURE_BACKEND)
        second = [backend.impact(h) for h in reversed(hosts)]
        self.assertEqual(first, list(reversed(second)))

    def test_unnormalized_host_is_rejected(self):
        backend = FixtureBackend(FIXTURE_BACKEND)
        with self.assertRaises(MalformedHost):
            fetch_impact("www.ree.es", backend)
        self.assertEqual(backend.calls, 0)

    def test_query_length_limit(self):
        backend = FixtureBackend(FIXTURE_BACKEND)
        backend.max_query_length = 20
        with self.assertRaises(QueryRejected):
            hit_count_estimate(HitCountQuery("acciona.com", "acciona-engineering.com"), backend)

    def test_snapshot_validation(self):
        with self.assertRaises(ValidationError):
            ImpactSnapshot("a.com", -1, None, None, None, CAPTURED, "fixture")
        with self.assertRaises(ValidationError):
            ImpactSnapshot("a.com", None, None, None, 101.0, CAPTURED, "fixture")


class CacheTests(unittest.TestCase):
    def test_snapshot_round_trip_through_disk(self):
        backend = FixtureBackend(FIXTURE_BACKEND)
        snapshots = [backend.impact("acciona.com"), backend.impact("acciona.com.au"), backend.impact("nowhere.org")]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cache.jsonl"
            cache = ResultCache(path)
            for snapshot in snapshots:
                cache.put(CacheRecord("fixture", f"impact:{snapshot.host}", snapshot.to_value(), snapshot.captured_at))
            reloaded = ResultCache(path)

        restored = [
            ImpactSnapshot.from_value(s.host, reloaded.get("fixture", f"impact:{s.host}").value, s.captured_at, "fixture")
            for s in snapshots
        ]
        self.assertEqual(restored, snapshots)
        self.assertEqual(len(reloaded), 3)

    def test_second_run_makes_no_backend_calls(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cache.jsonl"
            first = CachedBackend(FixtureBackend(FIXTURE_BACKEND), ResultCache(path))
            before = [first.impact("acciona.com"), first.hit_count('"acciona.com" site:acciona.es')]
            first.impact("nowhere.org")

            inner = FixtureBackend(FIXTURE_BACKEND)
            second = CachedBackend(inner, ResultCache(path))
            after = [second.impact("acciona.com"), second.hit_count('"acciona.com" site:acciona.es')]
            missing = second.impact("nowhere.org")

        self.assertEqual(first.backend_calls, 3)
        self.assertEqual(second.backend_calls, 0)
        self.assertEqual(inner.calls, 0)
        self.assertEqual(after, before)
        self.assertTrue(missing.missing)

    def test_malformed_lines_are_skipped(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cache.jsonl"
            path.write_text(
                "{not json\n\n" + record_to_line(CacheRecord("fixture", "hce:site:a.com", 5, CAPTURED)),
                encoding="utf-8",
            )
            with self.assertLogs(level="WARNING"):
                records = read_records(path)

        self.assertEqual([r.value for r in records], [5])

    def test_undecodable_lines_are_skipped(self):
        good = record_to_line(CacheRecord("fixture", "hce:site:a.com", 7, CAPTURED)).encode("utf-8")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cache.jsonl"
            path.write_bytes(b'{"key": "\xff\xfe"}\n' + good)
            with self.assertLogs(level="WARNING"):
                cache = ResultCache(path)

        self.assertEqual(len(cache), 1)
        self.assertEqual(cache.get("fixture", "hce:site:a.com").value, 7)

    def test_stale_records(self):
        cache = ResultCache()
        cache.put(CacheRecord("fixture", "old", 1, "2014-06-15T00:00:00+00:00"))
        cache.put(CacheRecord("fixture", "new", 1, "2014-07-10T00:00:00+00:00"))

        stale = cache.stale_records(30, now=datetime(2014, 7, 20, tzinfo=timezone.utc))

        self.assertEqual([r.key for r in stale], ["old"])


class RateLimiterTests(unittest.TestCase):
    def test_requests_are_spaced_on_virtual_clock(self):
        clock = VirtualClock()
        limiter = RateLimiter(2.0, clock=clock, sleep=clock.sleep)

        for _ in range(5):
            limiter.acquire()

        self.assertGreaterEqual(clock.now, (5 - 1) / 2.0)

    def test_zero_rate_is_unlimited(self):
        clock = VirtualClock()
        limiter = RateLimiter(0, clock=clock, sleep=clock.sleep)
        for _ in range(3):
            limiter.acquire()
        self.assertEqual(clock.sleeps, [])


class HttpBackendTests(unittest.TestCase):
    def make(self, responses, **overrides):
        session = FakeSession(responses)
        sleeps = []
        backend = HttpJsonBackend(
            "test",
            live_settings(**overrides),
            seed=7,
            session=session,
            limiter=RateLimiter(0),
            sleep=sleeps.append,
        )
        return backend, session, sleeps

    def test_count_is_read_from_count_path(self):
        backend, session, _ = self.make([response(200, {"searchInformation": {"totalResults": "11800000"}})])

        result = backend.hit_count('"terra.com" site:terra.com.br')

        self.assertEqual(result.value, 11_800_000)
        self.assertTrue(result.rounded)
        self.assertEqual(result.backend_id, "live:test")
        self.assertEqual(session.calls[0][1]["q"], '"terra.com" site:terra.com.br')

    def test_absent_count_is_missing(self):
        backend, _, _ = self.make([response(200, {"items": []})])
        self.assertTrue(backend.hit_count("site:abc.com").missing)

    def test_quota_and_rejection(self):
        backend, _, _ = self.make([response(429)])
        with self.assertRaises(QuotaExhausted):
            backend.hit_count("site:abc.com")
        backend, _, _ = self.make([response(400)])
        with self.assertRaises(QueryRejected):
            backend.hit_count("site:abc.com")

    def test_server_errors_are_retried(self):
        ok = response(200, {"searchInformation": {"totalResults": "12"}})
        backend, session, sleeps = self.make([response(503), response(502), ok])

        result = backend.hit_count("site:abc.com")

        self.assertEqual(result.value, 12)
        self.assertEqual(len(session.calls), 3)
        self.assertEqual(len(sleeps), 2)

    def test_gives_up_after_retries(self):
        errors = [requests.ConnectionError("down")] * 3
        backend, session, sleeps = self.make(errors, retries=2)

        with self.assertRaises(BackendUnavailable):
            backend.hit_count("site:abc.com")
        self.assertEqual(len(session.calls), 3)
        self.assertEqual(len(sleeps), 2)

    def test_backoff_jitter_is_seeded(self):
        backend_a, _, sleeps_a = self.make([response(503), response(200, {})])
        backend_b, _, sleeps_b = self.make([response(503), response(200, {})])
        backend_a.hit_count("site:abc.com")
        backend_b.hit_count("site:abc.com")
        self.assertEqual(len(sleeps_a), 1)
        self.assertEqual(sleeps_a, sleeps_b)
        self.assertGreaterEqual(sleeps_a[0], 2.0)

    def test_impact_without_endpoint_is_missing(self):
        backend, session, _ = self.make([])
        with self.assertLogs(level="WARNING"):
            snapshot = backend.impact("acciona.com")
        self.assertTrue(snapshot.missing)
        self.assertEqual(session.calls, [])

    def test_impact_fields(self):
        payload = {"stats": {"pages": 40, "links": 7}}
        backend, _, _ = self.make(
            [response(200, payload)],
            impact_endpoint="https://example.invalid/impact",
            impact_fields={"page_count": "stats.pages", "sites_linking_in": "stats.links"},
        )
        snapshot = backend.impact("acciona.com")
        self.assertEqual(snapshot.page_count, 40)
        self.assertEqual(snapshot.sites_linking_in, 7)
        self.assertIsNone(snapshot.authority)


class BackendFactoryTests(unittest.TestCase):
    def config(self):
        config = load_config(None)
        config["backends"]["fixture"]["path"] = str(FIXTURE_BACKEND)
        return config

    def test_fixture_with_cache(self):
        backend = create_backend(self.config(), ResultCache())
        self.assertIsInstance(backend, CachedBackend)
        self.assertEqual(backend.backend_id, "fixture")

    def test_unknown_selections(self):
        with self.assertRaises(ConfigError):
            create_backend(self.config(), selection="live:nowhere")
        with self.assertRaises(ConfigError):
            create_backend(self.config(), selection="bing")


if __name__ == "__main__":
    unittest.main()
