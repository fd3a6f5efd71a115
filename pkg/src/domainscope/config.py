import copy
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError


CACHE_ENV = "DOMAINSCOPE_CACHE"

DEFAULT_CONFIG = {
    "paths": {
        "registry": "fixtures/ibex.toml",
        "cache": "workspace/cache.jsonl",
        "out": "workspace",
    },
    "backends": {
        "selected": "fixture",
        "fixture": {
            "path": "fixtures/backend",
            "rounded": False,
        },
        "live": {
            "google": {
                "endpoint": "https://www.googleapis.com/customsearch/v1",
                "query_param": "q",
                "params": {"cx": ""},
                "api_key_param": "key",
                "api_key_env": "DOMAINSCOPE_GOOGLE_KEY",
                "count_path": "searchInformation.totalResults",
                "impact_endpoint": "",
                "impact_host_param": "site",
                "impact_fields": {},
                "rounded": True,
                "rate_per_sec": 1.0,
                "timeout": 10.0,
                "retries": 3,
                "backoff_sec": 2.0,
                "max_query_length": 2048,
            },
        },
    },
    "crawl": {
        "fetcher": "fixture",
        "fixture_path": "fixtures/pages",
        "max_pages_per_domain": 200,
        "max_depth": 2,
        "fetch_timeout": 10.0,
        "obey_robots": True,
        "include_sitemaps": True,
        "max_sitemaps": 20,
        "request_delay": 1.0,
        "user_agent": "domainscope/0.1 (webometrics research crawler)",
        "seed_scheme": "https",
    },
    "network": {
        "min_domains": 10,
        "asymmetry_threshold": 10,
    },
    "stats": {
        "alpha": 0.01,
        "pca_components": 2,
        "kaiser": False,
    },
    "report": {
        "formats": ["text", "csv", "json"],
        "stale_after_days": 30,
        "top_n": 10,
        "top_domains": 50,
    },
    "categories": {
        "hints": {},
    },
    "runtime": {
        "jobs": 1,
        "log_level": "INFO",
        "seed": 0,
    },
}

_LIVE_DEFAULTS = DEFAULT_CONFIG["backends"]["live"]["google"]
_REPORT_FORMATS = ("text", "csv", "json")


@dataclass(frozen=True)
class WorkspaceConfig:
    registry: Path
    cache: Path
    out: Path
    backend: str
    min_domains: int
    jobs: int


def _deep_update(base, updates):
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value


def _section(config, name):
    section = config.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    config[name] = section
    return section


def _number(section, key, default, cast, name):
    try:
        return cast(section.get(key, default))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}.{key} must be a number, got {section.get(key)!r}") from exc


def normalize_config(config):
    paths = _section(config, "paths")
    for key in ("registry", "cache", "out"):
        paths[key] = str(paths.get(key) or DEFAULT_CONFIG["paths"][key])

    backends = _section(config, "backends")
    selected = str(backends.get("selected", "fixture")).strip().lower()
    if selected != "fixture" and not selected.startswith("live:"):
        raise ConfigError(f"backends.selected must be 'fixture' or 'live:<name>', got {selected!r}")
    backends["selected"] = selected
    fixture_cfg = backends.get("fixture", {})
    if not isinstance(fixture_cfg, dict):
        fixture_cfg = {}
    fixture_cfg["path"] = str(fixture_cfg.get("path", "fixtures/backend"))
    fixture_cfg["rounded"] = bool(fixture_cfg.get("rounded", False))
    backends["fixture"] = fixture_cfg
    live = backends.get("live", {})
    if not isinstance(live, dict):
        live = {}
    for name, settings in live.items():
        if not isinstance(settings, dict):
            raise ConfigError(f"backends.live.{name} must be an object")
        merged = copy.deepcopy(_LIVE_DEFAULTS)
        _deep_update(merged, settings)
        label = f"backends.live.{name}"
        merged["rate_per_sec"] = _number(merged, "rate_per_sec", 1.0, float, label)
        merged["timeout"] = _number(merged, "timeout", 10.0, float, label)
        merged["retries"] = max(0, _number(merged, "retries", 3, int, label))
        merged["backoff_sec"] = max(0.0, _number(merged, "backoff_sec", 2.0, float, label))
        merged["max_query_length"] = max(1, _number(merged, "max_query_length", 2048, int, label))
        merged["rounded"] = bool(merged.get("rounded", True))
        live[name] = merged
    backends["live"] = live

    crawl = _section(config, "crawl")
    fetcher = str(crawl.get("fetcher", "fixture")).lower()
    if fetcher not in ("fixture", "live", "none"):
        raise ConfigError(f"crawl.fetcher must be fixture, live or none, got {fetcher!r}")
    crawl["fetcher"] = fetcher
    crawl["fixture_path"] = str(crawl.get("fixture_path", "fixtures/pages"))
    crawl["max_pages_per_domain"] = _number(crawl, "max_pages_per_domain", 200, int, "crawl")
    if crawl["max_pages_per_domain"] < 1:
        raise ConfigError("crawl.max_pages_per_domain must be >= 1")
    crawl["max_depth"] = _number(crawl, "max_depth", 2, int, "crawl")
    if crawl["max_depth"] < 0:
        raise ConfigError("crawl.max_depth must be >= 0")
    crawl["fetch_timeout"] = _number(crawl, "fetch_timeout", 10.0, float, "crawl")
    crawl["obey_robots"] = bool(crawl.get("obey_robots", True))
    crawl["include_sitemaps"] = bool(crawl.get("include_sitemaps", True))
    crawl["max_sitemaps"] = max(0, _number(crawl, "max_sitemaps", 20, int, "crawl"))
    crawl["request_delay"] = max(0.0, _number(crawl, "request_delay", 1.0, float, "crawl"))
    crawl["user_agent"] = str(crawl.get("user_agent") or DEFAULT_CONFIG["crawl"]["user_agent"])
    scheme = str(crawl.get("seed_scheme", "https")).lower()
    if scheme not in ("http", "https"):
        raise ConfigError(f"crawl.seed_scheme must be http or https, got {scheme!r}")
    crawl["seed_scheme"] = scheme

    network = _section(config, "network")
    network["min_domains"] = _number(network, "min_domains", 10, int, "network")
    if network["min_domains"] < 2:
        raise ConfigError("network.min_domains must be >= 2")
    network["asymmetry_threshold"] = _number(network, "asymmetry_threshold", 10, int, "network")
    if network["asymmetry_threshold"] < 0:
        raise ConfigError("network.asymmetry_threshold must be >= 0")

    stats = _section(config, "stats")
    stats["alpha"] = _number(stats, "alpha", 0.01, float, "stats")
    if not 0.0 < stats["alpha"] < 1.0:
        raise ConfigError("stats.alpha must lie strictly between 0 and 1")
    stats["pca_components"] = max(1, _number(stats, "pca_components", 2, int, "stats"))
    stats["kaiser"] = bool(stats.get("kaiser", False))

    report = _section(config, "report")
    formats = report.get("formats", list(_REPORT_FORMATS))
    if isinstance(formats, str):
        formats = [formats]
    formats = [str(f).lower() for f in formats]
    unknown = [f for f in formats if f not in _REPORT_FORMATS]
    if unknown:
        raise ConfigError(f"report.formats has unknown entries: {', '.join(unknown)}")
    report["formats"] = [f for f in _REPORT_FORMATS if f in formats]
    report["stale_after_days"] = max(0, _number(report, "stale_after_days", 30, int, "report"))
    report["top_n"] = max(1, _number(report, "top_n", 10, int, "report"))
    report["top_domains"] = max(1, _number(report, "top_domains", 50, int, "report"))

    categories = _section(config, "categories")
    hints = categories.get("hints", {})
    if not isinstance(hints, dict):
        raise ConfigError("categories.hints must map category names to keyword lists")
    categories["hints"] = {str(k): [str(w).lower() for w in v] for k, v in hints.items()}

    runtime = _section(config, "runtime")
    runtime["jobs"] = _number(runtime, "jobs", 1, int, "runtime")
    if runtime["jobs"] < 1:
        raise ConfigError("runtime.jobs must be >= 1")
    runtime["log_level"] = str(runtime.get("log_level", "INFO")).upper()
    runtime["seed"] = _number(runtime, "seed", 0, int, "runtime")


def load_config(path):
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        config_path = Path(path)
        if config_path.exists():
            try:
                with config_path.open("r", encoding="utf-8") as handle:
                    data = json.load(handle)
            except ValueError as exc:
                raise ConfigError(f"config {config_path} is not valid JSON: {exc}") from exc
            _deep_update(config, data)
        else:
            logging.info("Config %s not found, using defaults", config_path)
    normalize_config(config)
    return config


def save_config(path, config):
    config_path = Path(path)
    config_path.parent.mkdir(parents=True, exist_ok=True)
    with config_path.open("w", encoding="utf-8") as handle:
        json.dump(config, handle, indent=2, sort_keys=True)
        handle.write("\n")


def default_config_path():
    return str(Path("config") / "config.json")


def apply_overrides(config, args, environ):
    paths = config["paths"]
    if getattr(args, "registry", None):
        paths["registry"] = args.registry
    if getattr(args, "cache", None):
        paths["cache"] = args.cache
    elif environ.get(CACHE_ENV):
        paths["cache"] = environ[CACHE_ENV]
    if getattr(args, "out", None):
        paths["out"] = args.out
    if getattr(args, "backend", None):
        config["backends"]["selected"] = args.backend
    if getattr(args, "min_domains", None) is not None:
        config["network"]["min_domains"] = args.min_domains
    if getattr(args, "jobs", None) is not None:
        config["runtime"]["jobs"] = args.jobs
    if getattr(args, "log_level", None):
        config["runtime"]["log_level"] = args.log_level
    normalize_config(config)
    return config


def workspace_config(config):
    paths = config["paths"]
    registry = Path(paths["registry"]).resolve()
    if not registry.exists():
        raise ConfigError(f"registry not found: {registry}")
    selected = config["backends"]["selected"]
    if selected.startswith("live:") and selected[5:] not in config["backends"]["live"]:
        raise ConfigError(f"no backends.live.{selected[5:]} section for --backend {selected}")
    return WorkspaceConfig(
        registry=registry,
        cache=Path(paths["cache"]).resolve(),
        out=Path(paths["out"]).resolve(),
        backend=selected,
        min_domains=config["network"]["min_domains"],
        jobs=config["runtime"]["jobs"],
    )


def config_hash(config):
    payload = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()
