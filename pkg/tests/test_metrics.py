import itertools
import math
import random
import sys
import unittest
from collections import deque
from pathlib import Path

import numpy as np

# Keep tests runnable without editable install.
ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from domainscope.backends import FixtureBackend
from domainscope.errors import HostNotInGraph
from domainscope.mentions import Arc, DomainGraph, build_domain_graph, build_query_plan, measure_mentions
from domainscope.metrics import (
    EIGENVECTOR_MAX_ITER,
    EIGENVECTOR_TOL,
    NodeMetrics,
    asymmetry_report,
    eigenvector_scores,
    intensity_totals,
    network_metrics,
    node_metrics,
)
from domainscope.registry import load_registry


def graph_of(pairs, hosts=None):
    nodes = set(hosts or ())
    for source, target in pairs:
        nodes.update((source, target))
    return DomainGraph(tuple(nodes), tuple(Arc(s, t, 1) for s, t in pairs))


def by_host(graph):
    return {node.host: node for node in node_metrics(graph)}


def bfs(adjacency, start):
    dist = {start: 0}
    sigma = {start: 1}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in adjacency[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                sigma[w] = 0
                queue.append(w)
            if dist[w] == dist[v] + 1:
                sigma[w] += sigma[v]
    return dist, sigma


def dense_eigenvector(graph):
    index = {host: i for i, host in enumerate(graph.hosts)}
    adjacency = np.zeros((graph.n, graph.n))
    for arc in graph.arcs:
        adjacency[index[arc.source], index[arc.target]] = 1.0
    scores = np.ones(graph.n)
    for _ in range(EIGENVECTOR_MAX_ITER):
        updated = scores + adjacency.T @ scores
        updated = updated / np.max(updated)
        delta = np.max(np.abs(updated - scores))
        scores = updated
        if delta < EIGENVECTOR_TOL:
            break
    return dict(zip(graph.hosts, scores))


def brute_force(graph):
    adjacency = {h: [] for h in graph.hosts}
    neighbours = {h: set() for h in graph.hosts}
    for arc in graph.arcs:
        adjacency[arc.source].append(arc.target)
        neighbours[arc.source].add(arc.target)
        neighbours[arc.target].add(arc.source)
    paths = {h: bfs(adjacency, h) for h in graph.hosts}

    expected = {}
    for v in graph.hosts:
        betweenness = 0.0
        for s in graph.hosts:
            if s == v:
                continue
            dist_s, sigma_s = paths[s]
            dist_v, sigma_v = paths[v]
            if v not in dist_s:
                continue
            for t in graph.hosts:
                if t in (s, v) or t not in dist_s or t not in dist_v:
                    continue
                if dist_s[v] + dist_v[t] == dist_s[t]:
                    betweenness += sigma_s[v] * sigma_v[t] / sigma_s[t]
        reach = [d for t, d in paths[v][0].items() if t != v]
        closeness = sum(reach) / len(reach) if reach else None
        k = len(neighbours[v])
        clustering = None
        if k >= 2:
            links = sum(1 for a, b in itertools.combinations(sorted(neighbours[v]), 2) if b in neighbours[a])
            clustering = links / (k * (k - 1) / 2)
        expected[v] = (betweenness, closeness, clustering)
    return expected


class SmallGraphTests(unittest.TestCase):
    def test_directed_path(self):
        graph = graph_of([("a", "b"), ("b", "c")])

        nodes = by_host(graph)
        network = network_metrics(graph)

        self.assertEqual((nodes["a"].out_degree, nodes["a"].in_degree), (1, 0))
        self.assertEqual(nodes["b"].betweenness, 1.0)
        self.assertEqual(nodes["a"].betweenness, 0.0)
        self.assertEqual(nodes["a"].closeness, 1.5)
        self.assertIsNone(nodes["c"].closeness)
        self.assertIsNone(nodes["a"].clustering_coefficient)
        self.assertEqual(nodes["b"].clustering_coefficient, 0.0)
        self.assertEqual(network.diameter, 2)
        self.assertAlmostEqual(network.average_path_length, 4 / 3)
        self.assertAlmostEqual(network.density, 2 / 6)
        self.assertAlmostEqual(network.average_degree, 2 / 3)
        self.assertEqual(network.average_clustering, 0.0)

    def test_directed_triangle(self):
        graph = graph_of([("a", "b"), ("b", "c"), ("c", "a")])

        nodes = by_host(graph)

        for node in nodes.values():
            self.assertEqual(node.clustering_coefficient, 1.0)
            self.assertEqual(node.betweenness, 1.0)
            self.assertEqual(node.closeness, 1.5)
            self.assertAlmostEqual(node.eigenvector, 1.0)
        self.assertEqual(network_metrics(graph).average_clustering, 1.0)

    def test_complete_graph(self):
        hosts = ["a", "b", "c", "d"]
        graph = graph_of([(s, t) for s in hosts for t in hosts if s != t])

        network = network_metrics(graph)

        self.assertEqual(network.density, 1.0)
        self.assertEqual(network.diameter, 1)
        for node in node_metrics(graph):
            self.assertEqual((node.in_degree, node.out_degree, node.asymmetry), (3, 3, 0))
            self.assertEqual(node.betweenness, 0.0)
            self.assertAlmostEqual(node.eigenvector, 1.0)

    def test_eigenvector_of_symmetric_star(self):
        graph = graph_of([("a", "b"), ("b", "a"), ("a", "c"), ("c", "a")])

        scores = eigenvector_scores(graph)

        self.assertAlmostEqual(scores["a"], 1.0, places=6)
        self.assertAlmostEqual(scores["b"], 1 / math.sqrt(2), places=6)
        self.assertAlmostEqual(scores["c"], 1 / math.sqrt(2), places=6)

    def test_isolated_and_empty(self):
        single = by_host(DomainGraph(("a",), ()))["a"]
        self.assertIsNone(single.closeness)
        self.assertIsNone(single.clustering_coefficient)
        self.assertEqual(single.eigenvector, 1.0)

        empty = network_metrics(DomainGraph((), ()))
        self.assertEqual((empty.n, empty.m, empty.density), (0, 0, 0.0))
        self.assertIsNone(empty.diameter)


class RandomGraphOracleTests(unittest.TestCase):
    def test_against_brute_force(self):
        rng = random.Random(42)
        for number in range(200):
            n = rng.randint(1, 9)
            p = rng.random() * 0.6
            hosts = [f"h{i}.com" for i in range(n)]
            pairs = [(s, t) for s in hosts for t in hosts if s != t and rng.random() < p]
            graph = graph_of(pairs, hosts)
            expected = brute_force(graph)
            eigenvector = dense_eigenvector(graph)
            for node in node_metrics(graph):
                betweenness, closeness, clustering = expected[node.host]
                with self.subTest(number=number, host=node.host):
                    self.assertAlmostEqual(node.eigenvector, eigenvector[node.host], places=6)
                    self.assertAlmostEqual(node.betweenness, betweenness, places=9)
                    if closeness is None:
                        self.assertIsNone(node.closeness)
                    else:
                        self.assertAlmostEqual(node.closeness, closeness, places=9)
                    if clustering is None:
                        self.assertIsNone(node.clustering_coefficient)
                    else:
                        self.assertAlmostEqual(node.clustering_coefficient, clustering, places=9)
                    self.assertEqual(node.degree, node.in_degree + node.out_degree)
                    self.assertGreaterEqual(node.eigenvector, 0.0)
                    self.assertLessEqual(node.eigenvector, 1.0 + 1e-12)

    def test_relabelling_permutes_metrics(self):
        rng = random.Random(7)
        for number in range(50):
            n = rng.randint(2, 9)
            hosts = [f"h{i}.com" for i in range(n)]
            pairs = [(s, t) for s in hosts for t in hosts if s != t and rng.random() < 0.35]
            shuffled = hosts[:]
            rng.shuffle(shuffled)
            rename = {host: f"x{shuffled.index(host)}.org" for host in hosts}
            original = by_host(graph_of(pairs, hosts))
            renamed = by_host(graph_of([(rename[s], rename[t]) for s, t in pairs], rename.values()))
            for host in hosts:
                before, after = original[host], renamed[rename[host]]
                with self.subTest(number=number, host=host):
                    self.assertEqual((before.in_degree, before.out_degree), (after.in_degree, after.out_degree))
                    self.assertAlmostEqual(before.betweenness, after.betweenness, places=9)
                    self.assertAlmostEqual(before.eigenvector, after.eigenvector, places=9)
                    self.assertEqual(before.closeness is None, after.closeness is None)
                    if before.closeness is not None:
                        self.assertAlmostEqual(before.closeness, after.closeness, places=9)
                    self.assertEqual(before.clustering_coefficient, after.clustering_coefficient)

    def test_eigenvector_ignores_uniform_weight_scaling(self):
        rng = random.Random(11)
        for number in range(50):
            hosts = [f"h{i}.com" for i in range(rng.randint(2, 8))]
            pairs = [(s, t) for s in hosts for t in hosts if s != t and rng.random() < 0.4]
            unit = eigenvector_scores(graph_of(pairs, hosts))
            scaled = eigenvector_scores(DomainGraph(tuple(hosts), tuple(Arc(s, t, 7) for s, t in pairs)))
            with self.subTest(number=number):
                self.assertEqual(unit.keys(), scaled.keys())
                for host in hosts:
                    self.assertAlmostEqual(unit[host], scaled[host], places=12)


class DensityTests(unittest.TestCase):
    def random_graph(self, n, m, seed):
        hosts = [f"d{i:02d}.com" for i in range(n)]
        pairs = [(s, t) for s in hosts for t in hosts if s != t]
        chosen = random.Random(seed).sample(pairs, m)
        return graph_of(chosen, hosts)

    def test_reported_network_densities(self):
        telefonica = network_metrics(self.random_graph(70, 1172, 1))
        sabadell = network_metrics(self.random_graph(36, 334, 2))

        self.assertAlmostEqual(telefonica.density, 0.24265, places=5)
        self.assertAlmostEqual(sabadell.density, 0.265079, places=6)
        self.assertAlmostEqual(sabadell.average_degree, 334 / 36)


class AsymmetryTests(unittest.TestCase):
    def node(self, host, asymmetry):
        in_degree = max(asymmetry, 0)
        out_degree = max(-asymmetry, 0)
        return NodeMetrics(host, in_degree, out_degree, in_degree + out_degree, asymmetry, 0.0, None, 1.0, None)

    def test_census_fraction(self):
        nodes = [self.node(f"a{i}.com", 11 + i) for i in range(30)]
        nodes += [self.node(f"h{i}.com", -11 - i) for i in range(26)]
        nodes += [self.node(f"z{i}.com", (i % 21) - 10) for i in range(772 - 56)]

        report = asymmetry_report(nodes, 10)

        self.assertEqual(len(report.authorities), 30)
        self.assertEqual(len(report.hubs), 26)
        self.assertEqual(report.total_nodes, 772)
        self.assertAlmostEqual(report.exceedance_fraction, 56 / 772)
        self.assertAlmostEqual(100 * report.exceedance_fraction, 7.25, places=2)
        self.assertEqual(report.authorities[0].host, "a29.com")

    def test_threshold_is_strict(self):
        report = asymmetry_report([self.node("a.com", 10), self.node("b.com", -10)], 10)
        self.assertEqual((report.authorities, report.hubs), ((), ()))

    def test_empty(self):
        self.assertEqual(asymmetry_report([], 10).exceedance_fraction, 0.0)


class BundledNetworkTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        org = load_registry(ROOT / "fixtures" / "ibex.toml")[0]
        plan = build_query_plan(org)
        edges = measure_mentions(plan, FixtureBackend(ROOT / "fixtures" / "backend"))
        cls.graph = build_domain_graph(edges, plan.hosts, org.id)

    def test_network_indicators(self):
        network = network_metrics(self.graph)
        self.assertEqual((network.n, network.m), (10, 17))
        self.assertAlmostEqual(network.average_degree, 1.7)
        self.assertAlmostEqual(network.density, 17 / 90)

    def test_corporate_node(self):
        corporate = by_host(self.graph)["acciona.com"]
        self.assertEqual((corporate.in_degree, corporate.out_degree, corporate.asymmetry), (8, 3, 5))
        self.assertEqual(corporate.eigenvector, max(n.eigenvector for n in node_metrics(self.graph)))

    def test_intensity_uses_reliable_arcs(self):
        totals = intensity_totals(self.graph, "acciona.com")

        self.assertEqual(totals.as_target_total, 262)
        self.assertEqual(totals.as_source_total, 280)
        self.assertEqual(totals.top_pair, ("acciona.es", "acciona.com", 200))

    def test_intensity_unknown_host(self):
        with self.assertRaises(HostNotInGraph):
            intensity_totals(self.graph, "indra.es")


if __name__ == "__main__":
    unittest.main()
