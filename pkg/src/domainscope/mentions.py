import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import networkx as nx

from .backends import HitCountQuery, hit_count_estimate
from .errors import BackendUnavailable, DuplicateEdge, ValidationError
from .hosts import is_label_prefix

DEFAULT_MIN_DOMAINS = 10


class Collision(str, Enum):
    NONE = "NONE"
    SELF_PREFIX = "SELF_PREFIX"
    SIBLING_PREFIX = "SIBLING_PREFIX"


@dataclass(frozen=True)
class MentionEdge:
    """A count of `"target" site:source`; arcs run source -> target."""

    source: str
    target: str
    raw_hce: int
    sibling_overcount: int
    corrected_hce: int
    collision_kind: Collision = Collision.NONE
    reliable: bool = True
    rounded: bool = False

    def __post_init__(self):
        if self.source == self.target:
            raise ValidationError(f"self-mention edge for {self.source}")
        if self.corrected_hce != max(0, self.raw_hce - self.sibling_overcount):
            raise ValidationError(f"{self.target}<-{self.source}: corrected count is inconsistent")

    @property
    def collision(self):
        return self.collision_kind is not Collision.NONE


@dataclass(frozen=True)
class QueryPlan:
    org_id: str
    hosts: tuple
    pairs: tuple

    @property
    def total_queries(self):
        return len(self.pairs)


@dataclass(frozen=True)
class Skipped:
    org_id: str
    domain_count: int
    min_domains: int

    @property
    def reason(self):
        return f"{self.domain_count} domains < minimum {self.min_domains}"


@dataclass(frozen=True)
class Arc:
    source: str
    target: str
    weight: int
    reliable: bool = True


@dataclass(frozen=True)
class DomainGraph:
    hosts: tuple
    arcs: tuple
    org_id: str = ""

    def __post_init__(self):
        hosts = tuple(sorted(set(self.hosts)))
        object.__setattr__(self, "hosts", hosts)
        arcs = tuple(sorted(self.arcs, key=lambda a: (a.source, a.target)))
        object.__setattr__(self, "arcs", arcs)
        known = set(hosts)
        pairs = set()
        for arc in arcs:
            if arc.source not in known or arc.target not in known:
                raise ValidationError(f"arc {arc.source}->{arc.target} references an unknown node")
            if arc.source == arc.target:
                raise ValidationError(f"self-loop on {arc.source}")
            if (arc.source, arc.target) in pairs:
                raise DuplicateEdge(f"arc {arc.source}->{arc.target} appears twice")
            if arc.weight <= 0:
                raise ValidationError(f"arc {arc.source}->{arc.target} has weight {arc.weight}")
            pairs.add((arc.source, arc.target))

    @property
    def n(self):
        return len(self.hosts)

    @property
    def m(self):
        return len(self.arcs)

    @cached_property
    def digraph(self):
        graph = nx.DiGraph()
        graph.add_nodes_from(self.hosts)
        for arc in self.arcs:
            graph.add_edge(arc.source, arc.target, weight=arc.weight, reliable=arc.reliable)
        return nx.freeze(graph)


def build_query_plan(org, min_domains=DEFAULT_MIN_DOMAINS):
    hosts = tuple(sorted(org.hosts))
    if len(hosts) < min_domains:
        return Skipped(org.id, len(hosts), min_domains)
    pairs = tuple((target, source) for target in hosts for source in hosts if target != source)
    logging.info("Query plan %s: %d domains, %d pairs", org.id, len(hosts), len(pairs))
    return QueryPlan(org.id, hosts, pairs)


def detect_collision(target, source, siblings):
    if is_label_prefix(target, source):
        return Collision.SELF_PREFIX
    for sibling in siblings:
        if sibling not in (source, target) and is_label_prefix(target, sibling):
            return Collision.SIBLING_PREFIX
    return Collision.NONE


def corrected_mention_count(target, source, siblings, backend):
    kind = detect_collision(target, source, siblings)
    raw = hit_count_estimate(HitCountQuery(phrase=target, site=source), backend)
    reliable = not raw.missing
    raw_value = raw.value or 0

    overcount = 0
    for sibling in sorted(siblings):
        if sibling in (source, target) or not is_label_prefix(target, sibling):
            continue
        try:
            result = hit_count_estimate(HitCountQuery(phrase=sibling, site=source), backend)
        except BackendUnavailable as exc:
            logging.warning("Sibling query %s in %s failed: %s", sibling, source, exc)
            reliable = False
            continue
        if result.missing:
            reliable = False
            continue
        overcount += result.value

    if kind is Collision.SELF_PREFIX:
        reliable = False
    edge = MentionEdge(
        source=source,
        target=target,
        raw_hce=raw_value,
        sibling_overcount=overcount,
        corrected_hce=max(0, raw_value - overcount),
        collision_kind=kind,
        reliable=reliable,
        rounded=raw.rounded,
    )
    logging.debug("%s <- %s: raw %d, overcount %d, %s", target, source, raw_value, overcount, kind.value)
    return edge


def measure_mentions(plan, backend, jobs=1):
    siblings = frozenset(plan.hosts)

    def measure(pair):
        target, source = pair
        return corrected_mention_count(target, source, siblings, backend)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(measure, plan.pairs))
    return [measure(pair) for pair in plan.pairs]


def build_domain_graph(edges, hosts=(), org_id=""):
    nodes = set(hosts)
    seen = set()
    arcs = []
    for edge in edges:
        key = (edge.source, edge.target)
        if key in seen:
            raise DuplicateEdge(f"edge {edge.target}<-{edge.source} measured twice")
        seen.add(key)
        nodes.update(key)
        if edge.corrected_hce > 0:
            arcs.append(Arc(edge.source, edge.target, edge.corrected_hce, edge.reliable))
    return DomainGraph(tuple(nodes), tuple(arcs), org_id)
