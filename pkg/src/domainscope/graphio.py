import csv
import io
import re
import xml.etree.ElementTree as ET

from .errors import DecodeError, UsageError
from .mentions import Arc, DomainGraph

GEXF_NS = "http://www.gexf.net/1.2draft"
EDGE_CSV_HEADER = ("source", "target", "raw", "sibling_overcount", "corrected", "collision", "reliable")

_NET_VERTEX = re.compile(r'^(\d+)\s+"([^"]*)"')


def export_graph(graph, fmt):
    fmt = str(fmt).lower()
    if fmt == "net":
        return graph_to_net(graph)
    if fmt == "gexf":
        return graph_to_gexf(graph)
    raise UsageError(f"unknown graph format {fmt!r}; use net or gexf")


def import_graph(data, fmt, org_id=""):
    fmt = str(fmt).lower()
    if fmt == "net":
        return graph_from_net(data, org_id)
    if fmt == "gexf":
        return graph_from_gexf(data, org_id)
    raise UsageError(f"unknown graph format {fmt!r}; use net or gexf")


def graph_to_net(graph):
    index = {host: i for i, host in enumerate(graph.hosts, start=1)}
    lines = [f"*Vertices {graph.n}"]
    lines.extend(f'{i} "{host}"' for host, i in index.items())
    lines.append("*Arcs")
    lines.extend(f"{index[a.source]} {index[a.target]} {a.weight}" for a in graph.arcs)
    return ("\n".join(lines) + "\n").encode("utf-8")


def graph_from_net(data, org_id=""):
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    labels = {}
    arcs = []
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("*"):
            section = line.split()[0].lower()
            continue
        if section == "*vertices":
            match = _NET_VERTEX.match(line)
            if match is None:
                raise DecodeError(f"NET line {number}: bad vertex {line!r}")
            labels[int(match.group(1))] = match.group(2)
        elif section in ("*arcs", "*edges"):
            fields = line.split()
            if len(fields) < 2:
                raise DecodeError(f"NET line {number}: bad arc {line!r}")
            try:
                weight = int(float(fields[2])) if len(fields) > 2 else 1
                source, target = labels[int(fields[0])], labels[int(fields[1])]
            except (KeyError, ValueError) as exc:
                raise DecodeError(f"NET line {number}: bad arc {line!r} ({exc})") from exc
            arcs.append(Arc(source, target, weight))
            if section == "*edges":
                arcs.append(Arc(target, source, weight))
        else:
            raise DecodeError(f"NET line {number}: data outside a section")
    return DomainGraph(tuple(labels.values()), tuple(arcs), org_id)


def graph_to_gexf(graph):
    index = {host: str(i) for i, host in enumerate(graph.hosts)}
    root = ET.Element("gexf", {"xmlns": GEXF_NS, "version": "1.2"})
    meta = ET.SubElement(root, "meta")
    ET.SubElement(meta, "description").text = graph.org_id
    body = ET.SubElement(root, "graph", {"mode": "static", "defaultedgetype": "directed"})
    attributes = ET.SubElement(body, "attributes", {"class": "edge"})
    ET.SubElement(attributes, "attribute", {"id": "0", "title": "reliable", "type": "boolean"})
    nodes = ET.SubElement(body, "nodes")
    for host in graph.hosts:
        ET.SubElement(nodes, "node", {"id": index[host], "label": host})
    edges = ET.SubElement(body, "edges")
    for number, arc in enumerate(graph.arcs):
        edge = ET.SubElement(
            edges,
            "edge",
            {
                "id": str(number),
                "source": index[arc.source],
                "target": index[arc.target],
                "weight": str(arc.weight),
            },
        )
        values = ET.SubElement(edge, "attvalues")
        ET.SubElement(values, "attvalue", {"for": "0", "value": "true" if arc.reliable else "false"})
    ET.indent(root, space="  ")
    document = ET.tostring(root, encoding="unicode")
    return ('<?xml version="1.0" encoding="UTF-8"?>\n' + document + "\n").encode("utf-8")


def _local(tag):
    return tag.rsplit("}", 1)[-1]


def _children(element, name):
    return [child for child in element if _local(child.tag) == name]


def graph_from_gexf(data, org_id=""):
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise DecodeError(f"invalid GEXF: {exc}") from exc
    description = ""
    for meta in _children(root, "meta"):
        for node in _children(meta, "description"):
            description = node.text or ""
    graph = next(iter(_children(root, "graph")), None)
    if graph is None:
        raise DecodeError("GEXF document has no graph element")

    reliable_id = None
    for attributes in _children(graph, "attributes"):
        for attribute in _children(attributes, "attribute"):
            if attribute.get("title") == "reliable":
                reliable_id = attribute.get("id")

    labels = {}
    for nodes in _children(graph, "nodes"):
        for node in _children(nodes, "node"):
            labels[node.get("id")] = node.get("label") or node.get("id")
    arcs = []
    for edges in _children(graph, "edges"):
        for edge in _children(edges, "edge"):
            reliable = True
            for values in _children(edge, "attvalues"):
                for value in _children(values, "attvalue"):
                    if value.get("for") == reliable_id:
                        reliable = value.get("value", "true").lower() == "true"
            arcs.append(
                Arc(
                    labels[edge.get("source")],
                    labels[edge.get("target")],
                    int(float(edge.get("weight", "1"))),
                    reliable,
                )
            )
    return DomainGraph(tuple(labels.values()), tuple(arcs), org_id or description)


def edges_to_csv(edges):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(EDGE_CSV_HEADER)
    for edge in sorted(edges, key=lambda e: (e.source, e.target)):
        writer.writerow(
            (
                edge.source,
                edge.target,
                edge.raw_hce,
                edge.sibling_overcount,
                edge.corrected_hce,
                edge.collision_kind.value,
                "true" if edge.reliable else "false",
            )
        )
    return buffer.getvalue().encode("utf-8")
