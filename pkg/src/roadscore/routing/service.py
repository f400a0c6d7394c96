"""Read-only HTTP query service over a scored road graph.

Endpoints:
  GET /health            -> liveness plus graph size
  GET /graph/bbox        -> bounding box, nodes, and styled edges
  GET /route?from=&to=&alpha=  -> default and safety-weighted routes

`from`/`to` accept either node ids or "lat,lon" pairs, which snap to the
nearest node. Responses are JSON; errors carry {"error": reason} with a
4xx status. The graph and factor map never change after startup, so
concurrent requests share state safely.
"""

import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Tuple
from urllib.parse import parse_qs, urlparse

from .factors import SafetyFactorMap, factor_to_star
from .graph import RoadGraph
from .search import RouteResult, compare_routes


class QueryError(Exception):
    def __init__(self, status: int, reason: str):
        super().__init__(reason)
        self.status = status
        self.reason = reason


def _route_payload(graph: RoadGraph, factors: SafetyFactorMap,
                   result: RouteResult, alpha: float) -> dict:
    if not result.found:
        return {"found": False}
    edges = []
    for i, edge_id in enumerate(result.edges):
        edge = graph.edges[edge_id]
        f1 = factors.get(edge_id)
        edges.append({
            "id": edge_id,
            "from": edge.src,
            "to": edge.dst,
            "base_cost": edge.cost,
            "factor": 1.0 + alpha * (f1 - 1.0),
            "star": result.stars[i] if result.stars else None,
            "geometry": [list(p) for p in graph.edge_geometry(edge_id)],
        })
    return {
        "found": True,
        "nodes": result.nodes,
        "edges": edges,
        "base_cost": result.base_cost,
        "augmented_cost": result.augmented_cost,
        "mean_star": result.mean_star(),
    }


def _resolve_node(graph: RoadGraph, text: str, param: str) -> str:
    if "," in text:
        parts = text.split(",")
        try:
            lat, lon = float(parts[0]), float(parts[1])
        except (ValueError, IndexError):
            raise QueryError(400, f"{param} must be a node id or lat,lon")
        return graph.nearest_node(lat, lon)
    if text not in graph.nodes:
        raise QueryError(404, f"unknown node {text!r} for {param}")
    return text


def handle_route_query(graph: RoadGraph, factors: SafetyFactorMap,
                       query: dict) -> dict:
    missing = [p for p in ("from", "to") if p not in query]
    if missing:
        raise QueryError(400, f"missing query parameter(s): {', '.join(missing)}")
    origin = _resolve_node(graph, query["from"][0], "from")
    destination = _resolve_node(graph, query["to"][0], "to")
    raw_alpha = query.get("alpha", ["1.0"])[0]
    try:
        alpha = float(raw_alpha)
    except ValueError:
        raise QueryError(400, f"alpha must be a number, got {raw_alpha!r}")
    if alpha < 0:
        raise QueryError(400, "alpha must be >= 0")
    compared = compare_routes(graph, factors, origin, destination, alpha=alpha)
    return {
        "from": origin,
        "to": destination,
        "alpha": alpha,
        "default": _route_payload(graph, factors, compared.default, 0.0),
        "safe": _route_payload(graph, factors, compared.safe, alpha),
        "deltas": {
            "time_s": compared.time_delta_s(),
            "mean_star_default": compared.default.mean_star(),
            "mean_star_safe": compared.safe.mean_star(),
        },
    }


def graph_payload(graph: RoadGraph, factors: SafetyFactorMap) -> dict:
    nodes = [{"id": n, "lat": graph.nodes[n][0], "lon": graph.nodes[n][1]}
             for n in sorted(graph.nodes)]
    edges = []
    for edge_id in sorted(graph.edges):
        edge = graph.edges[edge_id]
        scored = edge_id in factors.factors
        edges.append({
            "id": edge_id,
            "from": edge.src,
            "to": edge.dst,
            "base_cost": edge.cost,
            "factor": factors.get(edge_id),
            "star": factor_to_star(factors.factors[edge_id]) if scored else None,
            "geometry": [list(p) for p in graph.edge_geometry(edge_id)],
        })
    return {"bbox": graph.bounding_box(), "nodes": nodes, "edges": edges}


def make_server(graph: RoadGraph, factors: SafetyFactorMap,
                host: str = "127.0.0.1", port: int = 8000,
                quiet: bool = True,
                ui_dir: Optional[str] = None) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; caller runs serve_forever.

    With `ui_dir` set, paths outside the API are served as static files
    from that directory ("/" maps to index.html), so a built frontend
    bundle and the API share one origin.
    """

    class Handler(BaseHTTPRequestHandler):
        def _send(self, status: int, payload: dict):
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _send_file(self, path: str):
            ctype = mimetypes.guess_type(path)[0] or "application/octet-stream"
            with open(path, "rb") as fh:
                body = fh.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _try_static(self, path: str) -> bool:
            if ui_dir is None:
                return False
            rel = "index.html" if path in ("", "/") else path.lstrip("/")
            full = os.path.realpath(os.path.join(ui_dir, rel))
            root = os.path.realpath(ui_dir)
            if not full.startswith(root + os.sep) and full != root:
                return False
            if not os.path.isfile(full):
                return False
            self._send_file(full)
            return True

        def do_GET(self):
            parsed = urlparse(self.path)
            query = parse_qs(parsed.query)
            try:
                if parsed.path == "/health":
                    self._send(200, {"status": "ok",
                                     "nodes": len(graph.nodes),
                                     "edges": len(graph.edges)})
                elif parsed.path == "/graph/bbox":
                    self._send(200, graph_payload(graph, factors))
                elif parsed.path == "/route":
                    self._send(200, handle_route_query(graph, factors, query))
                elif not self._try_static(parsed.path):
                    self._send(404, {"error": f"unknown path {parsed.path!r}"})
            except QueryError as exc:
                self._send(exc.status, {"error": exc.reason})

        def log_message(self, fmt, *args):
            if not quiet:
                super().log_message(fmt, *args)

    return ThreadingHTTPServer((host, port), Handler)


def serve(graph: RoadGraph, factors: SafetyFactorMap,
          host: str = "127.0.0.1", port: int = 8000,
          ui_dir: Optional[str] = None):
    """Run the query service until interrupted."""
    server = make_server(graph, factors, host=host, port=port, ui_dir=ui_dir)
    try:
        server.serve_forever()
    finally:
        server.server_close()
