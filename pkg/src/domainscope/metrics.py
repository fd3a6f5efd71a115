from dataclasses import dataclass

import networkx as nx
import numpy as np

from .errors import HostNotInGraph

EIGENVECTOR_MAX_ITER = 100
EIGENVECTOR_TOL = 1e-9


@dataclass(frozen=True)
class NodeMetrics:
    host: str
    in_degree: int
    out_degree: int
    degree: int
    asymmetry: int
    betweenness: float
    closeness: float | None
    eigenvector: float
    clustering_coefficient: float | None


@dataclass(frozen=True)
class NetworkMetrics:
    n: int
    m: int
    average_degree: float
    diameter: int | None
    density: float
    average_clustering: float | None
    average_path_length: float | None


@dataclass(frozen=True)
class AsymmetryReport:
    threshold: int
    authorities: tuple
    hubs: tuple
    exceedance_fraction: float
    total_nodes: int


@dataclass(frozen=True)
class IntensityTotals:
    host: str
    as_target_total: int
    as_source_total: int
    top_pair: tuple | None


def eigenvector_scores(graph, max_iter=EIGENVECTOR_MAX_ITER, tol=EIGENVECTOR_TOL):
    # x <- x + A^T x; the identity shift keeps cycles convergent.
    if graph.n == 0:
        return {}
    adjacency = nx.to_numpy_array(graph.digraph, nodelist=list(graph.hosts), weight=None)
    scores = np.ones(graph.n)
    for _ in range(max_iter):
        updated = scores + adjacency.T @ scores
        updated /= updated.max()
        delta = float(np.abs(updated - scores).max())
        scores = updated
        if delta < tol:
            break
    return dict(zip(graph.hosts, (float(v) for v in scores)))


def _distances(graph):
    return {source: lengths for source, lengths in nx.all_pairs_shortest_path_length(graph.digraph)}


def node_metrics(graph):
    digraph = graph.digraph
    undirected = digraph.to_undirected(as_view=True)
    betweenness = nx.betweenness_centrality(digraph, normalized=False)
    clustering = nx.clustering(undirected)
    eigenvector = eigenvector_scores(graph)
    distances = _distances(graph)

    results = []
    for host in graph.hosts:
        reach = [d for target, d in distances[host].items() if target != host]
        in_degree = digraph.in_degree(host)
        out_degree = digraph.out_degree(host)
        results.append(
            NodeMetrics(
                host=host,
                in_degree=in_degree,
                out_degree=out_degree,
                degree=in_degree + out_degree,
                asymmetry=in_degree - out_degree,
                betweenness=float(betweenness[host]),
                closeness=sum(reach) / len(reach) if reach else None,
                eigenvector=eigenvector[host],
                clustering_coefficient=(
                    float(clustering[host]) if undirected.degree(host) >= 2 else None
                ),
            )
        )
    return results


def network_metrics(graph, nodes=None):
    n, m = graph.n, graph.m
    if n == 0:
        return NetworkMetrics(0, 0, 0.0, None, 0.0, None, None)
    nodes = nodes if nodes is not None else node_metrics(graph)
    lengths = [
        d
        for source, row in _distances(graph).items()
        for target, d in row.items()
        if target != source
    ]
    clustered = [node.clustering_coefficient for node in nodes if node.clustering_coefficient is not None]
    return NetworkMetrics(
        n=n,
        m=m,
        average_degree=m / n,
        diameter=max(lengths) if lengths else None,
        density=m / (n * (n - 1)) if n >= 2 else 0.0,
        average_clustering=sum(clustered) / len(clustered) if clustered else None,
        average_path_length=sum(lengths) / len(lengths) if lengths else None,
    )


def asymmetry_report(metrics, threshold=10):
    metrics = list(metrics)

    def order(node):
        return (-abs(node.asymmetry), node.host)

    authorities = tuple(sorted((m for m in metrics if m.asymmetry > threshold), key=order))
    hubs = tuple(sorted((m for m in metrics if m.asymmetry < -threshold), key=order))
    exceeding = len(authorities) + len(hubs)
    return AsymmetryReport(
        threshold=threshold,
        authorities=authorities,
        hubs=hubs,
        exceedance_fraction=exceeding / len(metrics) if metrics else 0.0,
        total_nodes=len(metrics),
    )


def intensity_totals(graph, focus):
    if focus not in graph.hosts:
        raise HostNotInGraph(f"{focus} is not a node of graph {graph.org_id or '(unnamed)'}")
    reliable = [arc for arc in graph.arcs if arc.reliable]
    top = min(reliable, key=lambda a: (-a.weight, a.source, a.target)) if reliable else None
    return IntensityTotals(
        host=focus,
        as_target_total=sum(a.weight for a in reliable if a.target == focus),
        as_source_total=sum(a.weight for a in reliable if a.source == focus),
        top_pair=(top.target, top.source, top.weight) if top else None,
    )
