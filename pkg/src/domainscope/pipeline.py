import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .backends import create_backend, fetch_impact
from .cache import ResultCache
from .discovery import CrawlPolicy, OrganizationCrawler, review_entries, write_review_queue
from .errors import StatsError
from .fetchers import create_fetcher
from .graphio import edges_to_csv, export_graph
from .hosts import SUFFIX_LIST_VERSION
from .mentions import QueryPlan, build_domain_graph, build_query_plan, measure_mentions
from .metrics import intensity_totals, network_metrics, node_metrics
from .registry import load_registry, summarize_registry
from .reporting import AnalysisResults, OrganizationNetwork, render_report
from .stats import INDICATOR_COLUMNS, IndicatorMatrix, pca_varimax, spearman

STAGES = ("discover", "measure", "mentions", "graph", "stats", "report")


def indicator_matrix(networks, snapshots):
    records = []
    for item in sorted(networks, key=lambda item: item.org.id):
        for node in item.nodes:
            snapshot = snapshots.get(node.host)
            values = {
                "Pco": None if snapshot is None else snapshot.page_count,
                "Alexa": None if snapshot is None else snapshot.sites_linking_in,
                "OSE": None if snapshot is None else snapshot.root_domains_linking,
                "Aut": None if snapshot is None else snapshot.authority,
                "InD": node.in_degree,
                "OutD": node.out_degree,
                "Clo": node.closeness,
                "Bet": node.betweenness,
                "Cco": node.clustering_coefficient,
                "Eve": node.eigenvector,
            }
            records.append((node.host, values))
    return IndicatorMatrix.from_records(records, INDICATOR_COLUMNS)


class Workspace:
    def __init__(self, config, backend=None, fetcher=None):
        self.config = config
        self.out_dir = Path(config["paths"]["out"])
        self.jobs = config["runtime"]["jobs"]
        self.min_domains = config["network"]["min_domains"]
        self.cache = ResultCache(config["paths"]["cache"])
        self.backend = backend if backend is not None else create_backend(config, self.cache)
        self._fetcher = fetcher
        self.orgs = load_registry(config["paths"]["registry"])
        self.summary = summarize_registry(self.orgs)
        self.notes = []
        self._snapshots = None
        self._mentions = None
        self._networks = None
        self._stats = None

    @property
    def backend_calls(self):
        return getattr(self.backend, "backend_calls", getattr(self.backend, "calls", 0))

    def discover(self):
        fetcher = self._fetcher if self._fetcher is not None else create_fetcher(self.config)
        if fetcher is None:
            logging.info("Discovery disabled (crawl.fetcher = none)")
            return []
        policy = CrawlPolicy.from_config(self.config["crawl"])
        crawler = OrganizationCrawler(fetcher, policy, jobs=self.jobs)
        hints = self.config["categories"]["hints"]
        entries = []
        try:
            for org in self.orgs:
                candidates = crawler.crawl(org)
                entries.extend(review_entries(org, candidates, hints))
                logging.info("Discovery %s: %d candidates", org.id, len(candidates))
        finally:
            if self._fetcher is None:
                fetcher.close()
        write_review_queue(self.out_dir / "discovery" / "review_queue.json", entries, crawler.diagnostics)
        return entries

    def measure(self):
        if self._snapshots is None:
            hosts = sorted({host for org in self.orgs for host in org.hosts})
            if self.jobs > 1:
                with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                    snapshots = list(pool.map(lambda h: fetch_impact(h, self.backend), hosts))
            else:
                snapshots = [fetch_impact(host, self.backend) for host in hosts]
            self._snapshots = dict(zip(hosts, snapshots))
            logging.info("Measured %d domains", len(hosts))
        return self._snapshots

    def mentions(self):
        if self._mentions is None:
            measured = []
            skipped = []
            for org in sorted(self.orgs, key=lambda o: o.id):
                plan = build_query_plan(org, self.min_domains)
                if not isinstance(plan, QueryPlan):
                    logging.info("Skipping %s: %s", org.id, plan.reason)
                    skipped.append(plan)
                    continue
                measured.append((org, plan, measure_mentions(plan, self.backend, self.jobs)))
            self._mentions = (measured, skipped)
        return self._mentions

    def graph(self):
        if self._networks is None:
            measured, skipped = self.mentions()
            networks = []
            for org, plan, edges in measured:
                graph = build_domain_graph(edges, plan.hosts, org.id)
                nodes = node_metrics(graph)
                networks.append(
                    OrganizationNetwork(
                        org=org,
                        plan=plan,
                        edges=edges,
                        graph=graph,
                        nodes=nodes,
                        network=network_metrics(graph, nodes),
                        intensity=intensity_totals(graph, org.primary_corporate.host),
                    )
                )
            self._networks = (networks, skipped)
        return self._networks

    def stats(self):
        if self._stats is None:
            networks, _ = self.graph()
            matrix = indicator_matrix(networks, self.measure())
            stats_cfg = self.config["stats"]
            correlation = None
            pca = None
            try:
                correlation = spearman(matrix, stats_cfg["alpha"])
            except StatsError as exc:
                logging.warning("Correlations not computable: %s", exc)
                self.notes.append(f"correlations not computable: {exc}")
            k = min(stats_cfg["pca_components"], len(matrix.columns))
            try:
                pca = pca_varimax(matrix, k, kaiser=stats_cfg["kaiser"])
            except StatsError as exc:
                logging.warning("PCA not computable: %s", exc)
                self.notes.append(f"PCA not computable: {exc}")
            self._stats = (matrix, correlation, pca)
        return self._stats

    def results(self):
        snapshots = self.measure()
        networks, skipped = self.graph()
        matrix, correlation, pca = self.stats()
        report_cfg = self.config["report"]
        return AnalysisResults(
            organizations=list(self.orgs),
            summary=self.summary,
            snapshots=snapshots,
            networks=networks,
            skipped=skipped,
            indicator_matrix=matrix,
            correlation=correlation,
            pca=pca,
            notes=list(self.notes),
            suffix_list=SUFFIX_LIST_VERSION,
            backend_id=self.backend.backend_id,
            asymmetry_threshold=self.config["network"]["asymmetry_threshold"],
            top_n=report_cfg["top_n"],
            top_domains=report_cfg["top_domains"],
        )

    def write_graphs(self):
        networks, skipped = self.graph()
        graphs_dir = self.out_dir / "report" / "graphs"
        tables_dir = self.out_dir / "report" / "tables"
        graphs_dir.mkdir(parents=True, exist_ok=True)
        tables_dir.mkdir(parents=True, exist_ok=True)
        for item in networks:
            for fmt in ("net", "gexf"):
                (graphs_dir / f"{item.org.id}.{fmt}").write_bytes(export_graph(item.graph, fmt))
            (tables_dir / f"edges_{item.org.id}.csv").write_bytes(edges_to_csv(item.edges))
        return networks, skipped

    def report(self):
        stale = self.cache.stale_records(self.config["report"]["stale_after_days"])
        if stale:
            logging.warning(
                "%d cached results are older than %d days; counts may have drifted",
                len(stale),
                self.config["report"]["stale_after_days"],
            )
        return render_report(self.results(), self.out_dir, self.config["report"]["formats"])

    def close(self):
        self.backend.close()
