import ipaddress
import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import metadata
from urllib.parse import urlsplit

import tldextract

from .errors import MalformedHost

# Offline extractor: no suffix-list download, only the snapshot bundled with tldextract.
_EXTRACT = tldextract.TLDExtract(
    suffix_list_urls=(),
    cache_dir=None,
    include_psl_private_domains=False,
)

_LABEL = re.compile(r"^[a-z0-9_](?:[a-z0-9_-]{0,61}[a-z0-9_])?$")


def _suffix_list_version():
    try:
        version = metadata.version("tldextract")
    except metadata.PackageNotFoundError:
        version = getattr(tldextract, "__version__", "unknown")
    return f"tldextract-{version}-bundled-psl"


SUFFIX_LIST_VERSION = _suffix_list_version()


@dataclass(frozen=True)
class NormalizedHost:
    host: str
    fallback: bool = False


def _hostname(raw):
    text = str(raw if raw is not None else "").strip()
    if not text:
        raise MalformedHost("empty host")
    if "://" not in text and not text.startswith("//"):
        text = "//" + text
    try:
        host = urlsplit(text).hostname
    except ValueError as exc:
        raise MalformedHost(f"cannot parse host from {raw!r}: {exc}") from exc
    if not host:
        raise MalformedHost(f"no host part in {raw!r}")
    host = host.strip(".").lower()
    try:
        host = host.encode("idna").decode("ascii")
    except UnicodeError as exc:
        raise MalformedHost(f"invalid internationalized host {raw!r}: {exc}") from exc
    try:
        ipaddress.ip_address(host)
    except ValueError:
        pass
    else:
        raise MalformedHost(f"IP address {host!r} is not a registrable domain")
    labels = host.split(".")
    if len(labels) < 2 or not all(_LABEL.match(label) for label in labels):
        raise MalformedHost(f"{raw!r} does not contain a registrable domain")
    return host


@lru_cache(maxsize=65536)
def normalize_host_detail(raw):
    host = _hostname(raw)
    extracted = _EXTRACT(host)
    if extracted.suffix and extracted.domain:
        return NormalizedHost(f"{extracted.domain}.{extracted.suffix}")
    if extracted.suffix:
        raise MalformedHost(f"{host!r} is a public suffix, not a registrable domain")
    fallback = ".".join(host.split(".")[-2:])
    logging.warning("Unknown public suffix for %s, using last two labels: %s", host, fallback)
    return NormalizedHost(fallback, fallback=True)


def normalize_host(raw):
    return normalize_host_detail(raw).host


def split_registrable(host):
    """Return (label, suffix) of a registrable domain, e.g. ("terra", "com.br")."""
    extracted = _EXTRACT(host)
    if extracted.suffix and extracted.domain:
        return extracted.domain, extracted.suffix
    label, _, suffix = host.partition(".")
    return label, suffix


def is_label_prefix(short, long):
    return len(long) > len(short) and long.startswith(short) and long[len(short)] == "."
