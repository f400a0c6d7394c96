"""Road graph structures, polyline codec, and delimited-text IO.

Edges are directed; a two-way street is stored as two edges. Node and
edge files are tab-separated with headers so they stay greppable and
diff-friendly.
"""

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from ..geo import haversine_m

LatLon = Tuple[float, float]


@dataclass(frozen=True)
class Edge:
    id: str
    src: str
    dst: str
    cost: float  # base traversal cost in seconds
    geometry: Tuple[LatLon, ...] = ()


class RoadGraph:
    """Immutable directed graph with per-edge geometry."""

    def __init__(self, nodes: Dict[str, LatLon], edges: Dict[str, Edge]):
        for edge in edges.values():
            if edge.src not in nodes or edge.dst not in nodes:
                raise ValueError(f"edge {edge.id} references unknown node")
            if not edge.cost > 0:
                raise ValueError(f"edge {edge.id} must have positive cost")
        self.nodes = dict(nodes)
        self.edges = dict(edges)
        self.outgoing: Dict[str, List[Edge]] = {n: [] for n in nodes}
        for edge in edges.values():
            self.outgoing[edge.src].append(edge)
        for lst in self.outgoing.values():
            lst.sort(key=lambda e: (e.dst, e.id))

    def edge_geometry(self, edge_id: str) -> Tuple[LatLon, ...]:
        """Polyline coordinates; straight segment when none were stored."""
        edge = self.edges[edge_id]
        if edge.geometry:
            return edge.geometry
        return (self.nodes[edge.src], self.nodes[edge.dst])

    def nearest_node(self, lat: float, lon: float) -> str:
        if not self.nodes:
            raise ValueError("graph has no nodes")
        return min(self.nodes,
                   key=lambda n: (haversine_m(lat, lon, *self.nodes[n]), n))

    def bounding_box(self) -> Dict[str, float]:
        lats = [p[0] for p in self.nodes.values()]
        lons = [p[1] for p in self.nodes.values()]
        for edge in self.edges.values():
            for la, lo in edge.geometry:
                lats.append(la)
                lons.append(lo)
        return {"min_lat": min(lats), "min_lon": min(lons),
                "max_lat": max(lats), "max_lon": max(lons)}


# -- encoded polylines ------------------------------------------------------

def encode_polyline(points: Sequence[LatLon], precision: int = 5) -> str:
    """Delta-encode coordinates into the compact ASCII polyline form."""
    factor = 10 ** precision
    chunks = []
    prev_lat = prev_lon = 0
    for lat, lon in points:
        ilat, ilon = int(round(lat * factor)), int(round(lon * factor))
        for delta in (ilat - prev_lat, ilon - prev_lon):
            value = ~(delta << 1) if delta < 0 else delta << 1
            while value >= 0x20:
                chunks.append(chr((0x20 | (value & 0x1F)) + 63))
                value >>= 5
            chunks.append(chr(value + 63))
        prev_lat, prev_lon = ilat, ilon
    return "".join(chunks)


def decode_polyline(text: str, precision: int = 5) -> Tuple[LatLon, ...]:
    factor = 10 ** precision
    points = []
    index = lat = lon = 0
    while index < len(text):
        for which in (0, 1):
            shift = result = 0
            while True:
                byte = ord(text[index]) - 63
                index += 1
                result |= (byte & 0x1F) << shift
                shift += 5
                if byte < 0x20:
                    break
            delta = ~(result >> 1) if result & 1 else result >> 1
            if which == 0:
                lat += delta
            else:
                lon += delta
        points.append((lat / factor, lon / factor))
    return tuple(points)


# -- file IO ----------------------------------------------------------------

NODE_HEADER = ["id", "lat", "lon"]
EDGE_HEADER = ["id", "from", "to", "cost_s", "polyline"]


def _read_rows(path: str, header: List[str]) -> List[List[str]]:
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or lines[0].split("\t") != header:
        raise ValueError(f"{path}: expected header {chr(9).join(header)!r}")
    return [line.split("\t") for line in lines[1:]]


def load_graph(nodes_path: str, edges_path: str) -> RoadGraph:
    nodes: Dict[str, LatLon] = {}
    for row in _read_rows(nodes_path, NODE_HEADER):
        if len(row) != 3:
            raise ValueError(f"{nodes_path}: bad row {row!r}")
        node_id, lat, lon = row
        if node_id in nodes:
            raise ValueError(f"duplicate node id {node_id!r}")
        nodes[node_id] = (float(lat), float(lon))
    edges: Dict[str, Edge] = {}
    for row in _read_rows(edges_path, EDGE_HEADER):
        if len(row) != 5:
            raise ValueError(f"{edges_path}: bad row {row!r}")
        edge_id, src, dst, cost, poly = row
        if edge_id in edges:
            raise ValueError(f"duplicate edge id {edge_id!r}")
        geometry = decode_polyline(poly) if poly else ()
        edges[edge_id] = Edge(edge_id, src, dst, float(cost), geometry)
    return RoadGraph(nodes, edges)


def save_graph(graph: RoadGraph, nodes_path: str, edges_path: str):
    node_lines = ["\t".join(NODE_HEADER)]
    for node_id in sorted(graph.nodes):
        lat, lon = graph.nodes[node_id]
        node_lines.append(f"{node_id}\t{lat!r}\t{lon!r}")
    edge_lines = ["\t".join(EDGE_HEADER)]
    for edge_id in sorted(graph.edges):
        e = graph.edges[edge_id]
        poly = encode_polyline(e.geometry) if e.geometry else ""
        edge_lines.append(f"{e.id}\t{e.src}\t{e.dst}\t{e.cost!r}\t{poly}")
    _atomic_write(nodes_path, "\n".join(node_lines) + "\n")
    _atomic_write(edges_path, "\n".join(edge_lines) + "\n")


def _atomic_write(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
