import json
import logging
import tomllib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import MalformedHost, RegistryError
from .hosts import SUFFIX_LIST_VERSION, normalize_host, split_registrable


class Category(str, Enum):
    CORPORATE = "CORPORATE"
    DELEGATION = "DELEGATION"
    RELATED = "RELATED"
    BRAND_PRODUCT = "BRAND_PRODUCT"
    DIVISION = "DIVISION"
    SERVICE = "SERVICE"
    FOUNDATION = "FOUNDATION"
    OTHER = "OTHER"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = " ".join(str(value).replace("_", " ").replace("-", " ").split()).upper()
        key = key.replace(" AND ", " & ").replace("&", " & ")
        key = " ".join(key.split())
        if key in _ALIASES:
            return _ALIASES[key]
        raise RegistryError(
            f"unknown category {value!r}; expected one of {', '.join(c.value for c in cls)}"
        )

    @property
    def abbreviation(self):
        return _ABBREVIATIONS[self]


_ABBREVIATIONS = {
    Category.CORPORATE: "COR",
    Category.DELEGATION: "DEL",
    Category.RELATED: "REL",
    Category.BRAND_PRODUCT: "BRA",
    Category.DIVISION: "DIV",
    Category.SERVICE: "SER",
    Category.FOUNDATION: "FOU",
    Category.OTHER: "OTH",
}

_ALIASES = {category.value.replace("_", " "): category for category in Category}
_ALIASES.update({abbr: category for category, abbr in _ABBREVIATIONS.items()})
_ALIASES.update(
    {
        "CORPORATIVE": Category.CORPORATE,
        "BRAND & PRODUCT": Category.BRAND_PRODUCT,
        "BRAND": Category.BRAND_PRODUCT,
        "VINCULATED": Category.RELATED,
        "OTHERS": Category.OTHER,
    }
)

# Confusable in practice; merged into one coarse group.
COMMERCIAL_CATEGORIES = (Category.RELATED, Category.BRAND_PRODUCT, Category.SERVICE)

FOUNDATION_KEYWORDS = (
    "fundacion",
    "fundacio",
    "fundacao",
    "foundation",
    "fondation",
    "fondazione",
    "stiftung",
)

REVIEW_CONFIDENCE = 0.5


@dataclass(frozen=True)
class WebDomainRecord:
    host: str
    category: Category
    label: str = ""
    discovered_from: str = "manual"
    confirmed: bool = True

    def __post_init__(self):
        host = str(self.host)
        if "/" in host or "." not in host or host.startswith("www."):
            raise RegistryError(f"host {host!r} must be a bare registrable domain")
        try:
            normalized = normalize_host(host)
        except MalformedHost as exc:
            raise RegistryError(f"host {host!r}: {exc}") from exc
        if normalized != host:
            raise RegistryError(f"host {host!r} is not normalized; use {normalized!r}")
        object.__setattr__(self, "category", Category.parse(self.category))


@dataclass(frozen=True)
class OrganizationRecord:
    id: str
    name: str
    sector: str
    domains: tuple

    def __post_init__(self):
        if not str(self.id).strip():
            raise RegistryError("organization id must not be empty")
        domains = tuple(self.domains)
        object.__setattr__(self, "domains", domains)
        if not any(d.category is Category.CORPORATE for d in domains):
            raise RegistryError(f"organization {self.id} has no CORPORATE domain")
        seen = set()
        for domain in domains:
            if domain.host in seen:
                raise RegistryError(f"organization {self.id} lists {domain.host} twice")
            seen.add(domain.host)

    @property
    def hosts(self):
        return tuple(domain.host for domain in self.domains)

    @property
    def corporate_hosts(self):
        return frozenset(d.host for d in self.domains if d.category is Category.CORPORATE)

    @property
    def primary_corporate(self):
        return next(d for d in self.domains if d.category is Category.CORPORATE)

    @property
    def awd_count(self):
        return len(self.domains)

    def category_of(self, host):
        for domain in self.domains:
            if domain.host == host:
                return domain.category
        return None


@dataclass(frozen=True)
class RegistrySummary:
    per_organization: dict
    totals: dict
    grand_total: int
    mean: float
    std: float
    sample_std: float
    coverage: dict = field(default_factory=dict)
    coarse_totals: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CategorySuggestion:
    category: Category
    confidence: float
    reason: str

    @property
    def needs_confirmation(self):
        return self.confidence < REVIEW_CONFIDENCE


def _domain_from_document(data, org_id):
    if not isinstance(data, dict) or "host" not in data:
        raise RegistryError(f"organization {org_id}: domain entries need a 'host' key")
    if "category" not in data:
        raise RegistryError(f"organization {org_id}: domain {data['host']} has no category")
    return WebDomainRecord(
        host=str(data["host"]),
        category=Category.parse(data["category"]),
        label=str(data.get("label", "")),
        discovered_from=str(data.get("discovered_from", "manual")),
        confirmed=bool(data.get("confirmed", True)),
    )


def _organization_from_document(data, source):
    if not isinstance(data, dict):
        raise RegistryError(f"{source}: organization entry must be a table")
    for key in ("id", "name"):
        if key not in data:
            raise RegistryError(f"{source}: organization entry missing {key!r}")
    org_id = str(data["id"])
    domains = data.get("domains", data.get("domain", []))
    if not isinstance(domains, list):
        raise RegistryError(f"{source}: organization {org_id} domains must be a list")
    return OrganizationRecord(
        id=org_id,
        name=str(data["name"]),
        sector=str(data.get("sector", "")),
        domains=tuple(_domain_from_document(item, org_id) for item in domains),
    )


def _read_documents(path):
    try:
        if path.suffix == ".toml":
            with path.open("rb") as handle:
                data = tomllib.load(handle)
        else:
            with path.open("r", encoding="utf-8") as handle:
                data = json.load(handle)
    except (OSError, ValueError) as exc:
        raise RegistryError(f"cannot read registry {path}: {exc}") from exc
    if isinstance(data, list):
        return data
    for key in ("organizations", "organization"):
        if key in data:
            return list(data[key])
    return [data]


def load_registry(path):
    registry_path = Path(path)
    if registry_path.is_dir():
        files = sorted(p for p in registry_path.iterdir() if p.suffix in (".toml", ".json"))
    elif registry_path.exists():
        files = [registry_path]
    else:
        raise RegistryError(f"registry not found: {registry_path}")

    orgs = []
    seen = set()
    for file_path in files:
        for document in _read_documents(file_path):
            org = _organization_from_document(document, file_path)
            if org.id in seen:
                raise RegistryError(f"organization id {org.id} defined twice ({file_path})")
            seen.add(org.id)
            orgs.append(org)

    pending = [f"{o.id}:{d.host}" for o in orgs for d in o.domains if not d.confirmed]
    if pending:
        raise RegistryError(
            "unconfirmed registry entries must be reviewed first: " + ", ".join(pending)
        )
    logging.info("Loaded registry %s: %d organizations", registry_path, len(orgs))
    return orgs


def registry_to_document(orgs):
    return {
        "organizations": [
            {
                "id": org.id,
                "name": org.name,
                "sector": org.sector,
                "domains": [
                    {
                        "host": d.host,
                        "category": d.category.value,
                        "label": d.label,
                        "discovered_from": d.discovered_from,
                        "confirmed": d.confirmed,
                    }
                    for d in org.domains
                ],
            }
            for org in orgs
        ],
        "suffix_list": SUFFIX_LIST_VERSION,
    }


def registry_to_json(orgs):
    return json.dumps(registry_to_document(orgs), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def save_registry(path, orgs):
    registry_path = Path(path)
    registry_path.parent.mkdir(parents=True, exist_ok=True)
    with registry_path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(registry_to_json(orgs))


def summarize_registry(orgs):
    per_org = {}
    totals = {category: 0 for category in Category}
    for org in orgs:
        counts = {category: 0 for category in Category}
        for domain in org.domains:
            counts[domain.category] += 1
        per_org[org.id] = counts
        for category, count in counts.items():
            totals[category] += count

    sizes = np.array([org.awd_count for org in orgs], dtype=float)
    mean = float(sizes.mean()) if sizes.size else 0.0
    std = float(sizes.std()) if sizes.size else 0.0
    sample_std = float(sizes.std(ddof=1)) if sizes.size > 1 else 0.0

    coverage = {}
    for category in Category:
        holders = sum(1 for counts in per_org.values() if counts[category] > 0)
        coverage[category] = holders / len(orgs) if orgs else 0.0

    coarse = {
        "CORPORATE": totals[Category.CORPORATE],
        "DELEGATION": totals[Category.DELEGATION],
        "COMMERCIAL": sum(totals[c] for c in COMMERCIAL_CATEGORIES),
        "DIVISION": totals[Category.DIVISION],
        "FOUNDATION": totals[Category.FOUNDATION],
        "OTHER": totals[Category.OTHER],
    }

    return RegistrySummary(
        per_organization=per_org,
        totals=totals,
        grand_total=sum(totals.values()),
        mean=mean,
        std=std,
        sample_std=sample_std,
        coverage=coverage,
        coarse_totals=coarse,
    )


def suggest_category(host, corporate_hosts, hints=None):
    label, suffix = split_registrable(host)
    for corporate in sorted(corporate_hosts):
        corporate_label, corporate_suffix = split_registrable(corporate)
        if corporate_label == label and corporate_suffix != suffix:
            return CategorySuggestion(
                Category.DELEGATION, 0.8, f"shares label {label!r} with {corporate}"
            )

    table = {Category.FOUNDATION.value: FOUNDATION_KEYWORDS}
    for name, keywords in (hints or {}).items():
        key = Category.parse(name).value
        table[key] = table.get(key, ()) + tuple(keywords)

    for category in Category:
        if category is Category.CORPORATE:
            continue
        keywords = table.get(category.value, ())
        matched = next((k for k in keywords if k and k.lower() in label), None)
        if matched is None:
            continue
        confidence = 0.7 if category is Category.FOUNDATION else 0.6
        return CategorySuggestion(category, confidence, f"label contains {matched!r}")

    return CategorySuggestion(Category.OTHER, 0.2, "no signal")
