import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import INDICATORS
from .errors import MissingCorporateSnapshot, StatsError
from .graphio import edges_to_csv, export_graph
from .metrics import asymmetry_report
from .registry import Category
from .stats import PCA_POLICY, SPEARMAN_POLICY, spearman_pair

MISSING = "—"
TIE_POLICY = "ties go to the CORPORATE domain, then to the lexicographically first host"
REPORT_DIR = "report"

# Closeness is better when lower.
NODE_RANKINGS = (
    ("in_degree", True),
    ("out_degree", True),
    ("betweenness", True),
    ("closeness", False),
)


@dataclass(frozen=True)
class ContributionRow:
    org_id: str
    corporate_host: str
    corporate_page_count: int | None
    total_page_count: int
    percentage: float | None
    missing_values: int = 0


@dataclass(frozen=True)
class BestPerformerTally:
    counts: dict
    denominators: dict
    winners: dict
    tie_policy: str = TIE_POLICY


@dataclass
class OrganizationNetwork:
    org: object
    plan: object
    edges: list
    graph: object
    nodes: list
    network: object
    intensity: object


@dataclass
class AnalysisResults:
    organizations: list
    summary: object
    snapshots: dict
    networks: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    indicator_matrix: object = None
    correlation: object = None
    pca: object = None
    notes: list = field(default_factory=list)
    suffix_list: str = ""
    backend_id: str = ""
    asymmetry_threshold: int = 10
    top_n: int = 10
    top_domains: int = 50


def format_count(value):
    return MISSING if value is None else str(int(value))


def format_percentage(value):
    return MISSING if value is None else f"{value:.3f}"


def format_metric(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return MISSING
    return f"{value:.3f}"


def format_score(value):
    return MISSING if value is None else f"{value:.1f}"


def format_correlation(value, significant=False):
    if value is None or math.isnan(value):
        return MISSING
    return f"{'**' if significant else ''}{value:.2f}"


def format_indicator(name, value):
    return format_score(value) if name == "authority" else format_count(value)


def contribution_table(orgs, snapshots):
    rows = []
    for org in orgs:
        corporate = org.primary_corporate.host
        if corporate not in snapshots:
            raise MissingCorporateSnapshot(f"no impact snapshot for {org.id} corporate domain {corporate}")
        total = 0
        missing = 0
        for domain in org.domains:
            snapshot = snapshots.get(domain.host)
            value = None if snapshot is None else snapshot.page_count
            if value is None:
                missing += 1
                continue
            total += value
        corporate_count = snapshots[corporate].page_count
        rows.append(
            ContributionRow(
                org_id=org.id,
                corporate_host=corporate,
                corporate_page_count=corporate_count,
                total_page_count=total,
                percentage=(
                    100.0 * corporate_count / total if corporate_count is not None and total > 0 else None
                ),
                missing_values=missing,
            )
        )
    rows.sort(key=lambda r: (r.percentage is None, r.percentage or 0.0, r.org_id))
    return rows


def best_performers(orgs, snapshots):
    counts = {name: {category: 0 for category in Category} for name in INDICATORS}
    denominators = {name: 0 for name in INDICATORS}
    winners = {}
    for org in orgs:
        for name in INDICATORS:
            scored = []
            for domain in org.domains:
                snapshot = snapshots.get(domain.host)
                value = None if snapshot is None else snapshot.value(name)
                if value is not None:
                    scored.append((value, domain))
            if not scored:
                continue
            best = max(value for value, _ in scored)
            tied = [domain for value, domain in scored if value == best]
            winner = min(tied, key=lambda d: (d.category is not Category.CORPORATE, d.host))
            winners[(org.id, name)] = winner.host
            counts[name][winner.category] += 1
            denominators[name] += 1
    return BestPerformerTally(counts, denominators, winners)


def top_domains(orgs, snapshots, limit=50, indicator="page_count"):
    ranked = []
    for org in orgs:
        for domain in org.domains:
            snapshot = snapshots.get(domain.host)
            value = None if snapshot is None else snapshot.value(indicator)
            if value is not None:
                ranked.append((value, org.id, domain))
    ranked.sort(key=lambda item: (-item[0], item[2].host, item[1]))
    return [(org_id, domain.host, domain.category, value) for value, org_id, domain in ranked[:limit]]


def visibility_coverage(orgs, snapshots):
    coverage = {name: {"present": 0, "zero": 0, "missing": 0} for name in INDICATORS}
    for org in orgs:
        for domain in org.domains:
            snapshot = snapshots.get(domain.host)
            for name in INDICATORS:
                value = None if snapshot is None else snapshot.value(name)
                if value is None:
                    coverage[name]["missing"] += 1
                elif value == 0:
                    coverage[name]["zero"] += 1
                else:
                    coverage[name]["present"] += 1
    return coverage


def best_nodes(networks, limit=10):
    ranking = {}
    for name, descending in NODE_RANKINGS:
        entries = [
            (getattr(node, name), item.org.id, node.host)
            for item in networks
            for node in item.nodes
            if getattr(node, name) is not None
        ]
        sign = -1 if descending else 1
        entries.sort(key=lambda e: (sign * e[0], e[1], e[2]))
        ranking[name] = entries[:limit]
    return ranking


def contribution_correlation(rows):
    usable = [r for r in rows if r.percentage is not None]
    corporate = [r.corporate_page_count for r in usable]
    totals = [r.total_page_count for r in usable]
    try:
        return spearman_pair(corporate, totals, ("corporate", "total"))
    except StatsError as exc:
        logging.info("Corporate/total correlation not computable: %s", exc)
        return None


def _csv_bytes(header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue().encode("utf-8")


def _text_table(title, header, rows):
    table = [list(map(str, header))] + [list(map(str, row)) for row in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = [title, "=" * len(title)]
    for number, row in enumerate(table):
        cells = [row[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if number == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _json_number(value):
    if value is None:
        return None
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) else value
    if isinstance(value, np.integer):
        return int(value)
    return value


def _json_matrix(matrix):
    return [[_json_number(v) for v in row] for row in np.asarray(matrix).tolist()]


class _ReportBuilder:
    def __init__(self, results):
        self.results = results
        self.contribution = contribution_table(results.organizations, results.snapshots)
        self.best = best_performers(results.organizations, results.snapshots)
        self.top = top_domains(results.organizations, results.snapshots, results.top_domains)
        self.coverage = visibility_coverage(results.organizations, results.snapshots)
        self.nodes_ranked = best_nodes(results.networks, results.top_n)
        self.host_org = {}
        all_nodes = []
        for item in results.networks:
            for node in item.nodes:
                self.host_org.setdefault(node.host, item.org.id)
                all_nodes.append(node)
        self.asymmetry = asymmetry_report(all_nodes, results.asymmetry_threshold)
        self.contribution_rho = contribution_correlation(self.contribution)

    def tables(self):
        r = self.results
        tables = {}
        abbreviations = [c.abbreviation for c in Category]

        summary_rows = []
        orgs = sorted(
            r.organizations, key=lambda o: (-sum(r.summary.per_organization[o.id].values()), o.id)
        )
        for org in orgs:
            counts = r.summary.per_organization[org.id]
            summary_rows.append(
                [org.id, org.name, org.sector]
                + [counts[c] for c in Category]
                + [sum(counts.values())]
            )
        if r.organizations:
            summary_rows.append(
                ["TOTAL", "", ""] + [r.summary.totals[c] for c in Category] + [r.summary.grand_total]
            )
        tables["registry_summary"] = (["org_id", "name", "sector"] + abbreviations + ["total"], summary_rows)

        impact_rows = []
        for org in sorted(r.organizations, key=lambda o: o.id):
            for domain in sorted(org.domains, key=lambda d: d.host):
                snapshot = r.snapshots.get(domain.host)
                impact_rows.append(
                    [org.id, domain.host, domain.category.value]
                    + [format_indicator(n, None if snapshot is None else snapshot.value(n)) for n in INDICATORS]
                )
        tables["impact"] = (["org_id", "host", "category"] + list(INDICATORS), impact_rows)

        tables["contribution"] = (
            ["org_id", "corporate_host", "corporate_page_count", "total_page_count", "percentage", "missing_values"],
            [
                [
                    row.org_id,
                    row.corporate_host,
                    format_count(row.corporate_page_count),
                    row.total_page_count,
                    format_percentage(row.percentage),
                    row.missing_values,
                ]
                for row in self.contribution
            ],
        )

        best_rows = [[c.value] + [self.best.counts[n][c] for n in INDICATORS] for c in Category]
        best_rows.append(["ORGANIZATIONS"] + [self.best.denominators[n] for n in INDICATORS])
        tables["best_performers"] = (["category"] + list(INDICATORS), best_rows)

        tables["top_domains"] = (
            ["rank", "org_id", "host", "category", "page_count"],
            [
                [rank, org_id, host, category.value, format_count(value)]
                for rank, (org_id, host, category, value) in enumerate(self.top, start=1)
            ],
        )

        tables["coverage"] = (
            ["indicator", "present", "zero", "missing"],
            [[n, self.coverage[n]["present"], self.coverage[n]["zero"], self.coverage[n]["missing"]] for n in INDICATORS],
        )

        networks = sorted(r.networks, key=lambda item: item.org.id)
        tables["network_metrics"] = (
            ["org_id", "n", "m", "average_degree", "diameter", "density", "average_clustering", "average_path_length"],
            [
                [
                    item.org.id,
                    item.network.n,
                    item.network.m,
                    format_metric(item.network.average_degree),
                    format_count(item.network.diameter),
                    format_metric(item.network.density),
                    format_metric(item.network.average_clustering),
                    format_metric(item.network.average_path_length),
                ]
                for item in networks
            ],
        )

        tables["node_metrics"] = (
            [
                "org_id", "host", "in_degree", "out_degree", "degree", "asymmetry",
                "betweenness", "closeness", "eigenvector", "clustering_coefficient",
            ],
            [
                [
                    item.org.id,
                    node.host,
                    node.in_degree,
                    node.out_degree,
                    node.degree,
                    node.asymmetry,
                    format_metric(node.betweenness),
                    format_metric(node.closeness),
                    format_metric(node.eigenvector),
                    format_metric(node.clustering_coefficient),
                ]
                for item in networks
                for node in item.nodes
            ],
        )

        best_node_rows = []
        for name, _ in NODE_RANKINGS:
            for rank, (value, org_id, host) in enumerate(self.nodes_ranked[name], start=1):
                shown = format_metric(value) if isinstance(value, float) else str(value)
                best_node_rows.append([name, rank, org_id, host, shown])
        tables["best_nodes"] = (["indicator", "rank", "org_id", "host", "value"], best_node_rows)

        asymmetry_rows = []
        for role, nodes in (("authority", self.asymmetry.authorities), ("hub", self.asymmetry.hubs)):
            for node in nodes:
                asymmetry_rows.append(
                    [role, self.host_org.get(node.host, ""), node.host, node.in_degree, node.out_degree, node.asymmetry]
                )
        tables["asymmetry"] = (["role", "org_id", "host", "in_degree", "out_degree", "asymmetry"], asymmetry_rows)

        intensity_rows = []
        for item in networks:
            totals = item.intensity
            top = totals.top_pair or ("", "", None)
            intensity_rows.append(
                [item.org.id, totals.host, totals.as_target_total, totals.as_source_total, top[0], top[1], format_count(top[2])]
            )
        tables["intensity"] = (
            ["org_id", "host", "as_target_total", "as_source_total", "top_target", "top_source", "top_count"],
            intensity_rows,
        )

        tables["skipped"] = (
            ["org_id", "domains", "min_domains"],
            [[s.org_id, s.domain_count, s.min_domains] for s in sorted(r.skipped, key=lambda s: s.org_id)],
        )

        if r.correlation is not None:
            corr = r.correlation
            rows = []
            for i, name in enumerate(corr.columns):
                cells = []
                for j in range(len(corr.columns)):
                    value = float(corr.coefficients[i, j])
                    cells.append(format_correlation(value, bool(corr.significant[i, j]) and i != j))
                rows.append([name] + cells)
            tables["correlations"] = (["indicator"] + list(corr.columns), rows)
        else:
            tables["correlations"] = (["indicator"], [])

        if r.pca is not None:
            pca = r.pca
            k = pca.loadings.shape[1]
            header = ["indicator"] + [f"PC{i + 1}" for i in range(k)] + [f"RC{i + 1}" for i in range(k)]
            rows = [
                [name] + [format_metric(v) for v in pca.loadings[i]] + [format_metric(v) for v in pca.rotated[i]]
                for i, name in enumerate(pca.columns)
            ]
            rows.append(["eigenvalue"] + [format_metric(v) for v in pca.eigenvalues[:k]] + [""] * k)
            rows.append(["explained"] + [format_metric(v) for v in pca.explained] + [""] * k)
            tables["pca"] = (header, rows)
        else:
            tables["pca"] = (["indicator"], [])

        return tables

    def summary_text(self, tables):
        r = self.results
        parts = [
            "domainscope report\n",
            f"suffix list: {r.suffix_list}\n",
            f"backend: {r.backend_id}\n",
            f"missing values: Spearman {SPEARMAN_POLICY}, PCA {PCA_POLICY}\n",
            f"best performer ties: {TIE_POLICY}\n",
            "missing measurements are shown as " + MISSING + ", never as 0\n",
        ]
        summary = r.summary
        parts.append(
            f"\norganizations: {len(r.organizations)}  domains: {summary.grand_total}  "
            f"mean: {summary.mean:.3f}  sd: {summary.std:.3f}  sample sd: {summary.sample_std:.3f}\n"
        )
        titles = {
            "registry_summary": "Domains by category",
            "contribution": "Corporate share of page count (%)",
            "best_performers": "Top domain per indicator by category",
            "top_domains": "Largest domains by page count",
            "coverage": "Visibility coverage",
            "network_metrics": "Network indicators",
            "best_nodes": "Best nodes",
            "asymmetry": f"Degree asymmetry beyond {r.asymmetry_threshold}",
            "intensity": "Mention intensity of corporate domains (reliable arcs)",
            "skipped": "Organizations below the network minimum",
            "correlations": f"Spearman correlations (** significant at alpha={_alpha(r)}, two-tailed)",
            "pca": "Principal components (PC) and varimax rotation (RC)",
        }
        for name, title in titles.items():
            header, rows = tables[name]
            parts.append("\n")
            parts.append(_text_table(title, header, rows))
            if name == "contribution":
                missing = sum(row.missing_values for row in self.contribution)
                if missing:
                    parts.append(f"* {missing} page counts missing, counted as 0 in totals\n")
                if self.contribution_rho is not None:
                    rho, p_value, n = self.contribution_rho
                    parts.append(f"corporate vs total page count: rho {rho:.2f} (p {p_value:.3f}, n {n})\n")
            if name == "asymmetry":
                parts.append(
                    f"nodes beyond threshold: {format_percentage(100.0 * self.asymmetry.exceedance_fraction)}% "
                    f"of {self.asymmetry.total_nodes}\n"
                )
        if r.notes:
            parts.append("\nNotes\n=====\n")
            parts.extend(f"- {note}\n" for note in r.notes)
        return "".join(parts)

    def document(self):
        r = self.results
        correlation = None
        if r.correlation is not None:
            correlation = {
                "columns": list(r.correlation.columns),
                "coefficients": _json_matrix(r.correlation.coefficients),
                "p_values": _json_matrix(r.correlation.p_values),
                "significant": np.asarray(r.correlation.significant).tolist(),
                "n": np.asarray(r.correlation.n).tolist(),
                "alpha": r.correlation.alpha,
                "degenerate": list(r.correlation.degenerate),
                "missing_policy": r.correlation.missing_policy,
            }
        pca = None
        if r.pca is not None:
            pca = {
                "columns": list(r.pca.columns),
                "eigenvalues": _json_matrix([r.pca.eigenvalues])[0],
                "explained": _json_matrix([r.pca.explained])[0],
                "loadings": _json_matrix(r.pca.loadings),
                "rotated": _json_matrix(r.pca.rotated),
                "rotation": _json_matrix(r.pca.rotation),
                "n_rows": r.pca.n_rows,
                "missing_policy": r.pca.missing_policy,
            }
        return {
            "suffix_list": r.suffix_list,
            "backend": r.backend_id,
            "tie_policy": TIE_POLICY,
            "registry": {
                "organizations": len(r.organizations),
                "grand_total": r.summary.grand_total,
                "totals": {c.value: r.summary.totals[c] for c in Category},
                "coarse_totals": dict(r.summary.coarse_totals),
                "coverage": {c.value: r.summary.coverage[c] for c in Category},
                "mean": r.summary.mean,
                "std": r.summary.std,
                "sample_std": r.summary.sample_std,
            },
            "contribution": [
                {
                    "org_id": row.org_id,
                    "corporate_host": row.corporate_host,
                    "corporate_page_count": row.corporate_page_count,
                    "total_page_count": row.total_page_count,
                    "percentage": row.percentage,
                    "missing_values": row.missing_values,
                }
                for row in self.contribution
            ],
            "best_performers": {
                name: {c.value: self.best.counts[name][c] for c in Category} for name in INDICATORS
            },
            "networks": [
                {
                    "org_id": item.org.id,
                    "queries": item.plan.total_queries,
                    "n": item.network.n,
                    "m": item.network.m,
                    "average_degree": item.network.average_degree,
                    "diameter": item.network.diameter,
                    "density": item.network.density,
                    "average_clustering": item.network.average_clustering,
                    "average_path_length": item.network.average_path_length,
                    "intensity": {
                        "host": item.intensity.host,
                        "as_target_total": item.intensity.as_target_total,
                        "as_source_total": item.intensity.as_source_total,
                        "top_pair": list(item.intensity.top_pair) if item.intensity.top_pair else None,
                    },
                }
                for item in sorted(r.networks, key=lambda item: item.org.id)
            ],
            "skipped": [
                {"org_id": s.org_id, "domains": s.domain_count, "min_domains": s.min_domains}
                for s in sorted(r.skipped, key=lambda s: s.org_id)
            ],
            "asymmetry": {
                "threshold": self.asymmetry.threshold,
                "authorities": [n.host for n in self.asymmetry.authorities],
                "hubs": [n.host for n in self.asymmetry.hubs],
                "exceedance_fraction": self.asymmetry.exceedance_fraction,
            },
            "correlation": correlation,
            "pca": pca,
            "notes": list(r.notes),
        }


def _alpha(results):
    return results.correlation.alpha if results.correlation is not None else "n/a"


def _write(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.write_bytes(data)
    return path


def render_report(results, out_dir, formats=("text", "csv", "json")):
    report_dir = Path(out_dir) / REPORT_DIR
    builder = _ReportBuilder(results)
    tables = builder.tables()
    written = []

    if "csv" in formats:
        for name, (header, rows) in tables.items():
            written.append(_write(report_dir / "tables" / f"{name}.csv", _csv_bytes(header, rows)))
        for item in sorted(results.networks, key=lambda item: item.org.id):
            written.append(_write(report_dir / "tables" / f"edges_{item.org.id}.csv", edges_to_csv(item.edges)))
        if results.indicator_matrix is not None:
            written.append(_write(report_dir / "tables" / "indicators.csv", results.indicator_matrix.to_csv()))

    for item in sorted(results.networks, key=lambda item: item.org.id):
        for fmt in ("net", "gexf"):
            written.append(_write(report_dir / "graphs" / f"{item.org.id}.{fmt}", export_graph(item.graph, fmt)))

    if "text" in formats:
        written.append(_write(report_dir / "summary.txt", builder.summary_text(tables)))

    if "json" in formats:
        text = json.dumps(builder.document(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        written.append(_write(report_dir / "report.json", text))

    logging.info("Report written to %s (%d files)", report_dir, len(written))
    return written
