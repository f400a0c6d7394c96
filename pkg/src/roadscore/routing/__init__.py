"""Safety-weighted routing over road graphs."""

from .factors import (
    PanoramaPrediction,
    SafetyFactorMap,
    SNAP_RADIUS_M,
    edge_expected_stars,
    factor_to_star,
    factors_from_predictions,
    load_factors,
    load_predictions,
    nearest_edge,
    rescale_factor,
    save_factors,
    save_predictions,
    star_to_factor,
)
from .graph import (
    Edge,
    RoadGraph,
    decode_polyline,
    encode_polyline,
    load_graph,
    save_graph,
)
from .search import ComparedRoutes, RouteResult, annotate_stars, compare_routes, shortest_path
from .service import graph_payload, handle_route_query, make_server, serve

__all__ = [
    "ComparedRoutes",
    "Edge",
    "PanoramaPrediction",
    "RoadGraph",
    "RouteResult",
    "SNAP_RADIUS_M",
    "SafetyFactorMap",
    "annotate_stars",
    "compare_routes",
    "decode_polyline",
    "edge_expected_stars",
    "encode_polyline",
    "factor_to_star",
    "factors_from_predictions",
    "graph_payload",
    "handle_route_query",
    "load_factors",
    "load_graph",
    "load_predictions",
    "make_server",
    "nearest_edge",
    "rescale_factor",
    "save_factors",
    "save_graph",
    "save_predictions",
    "serve",
    "shortest_path",
    "star_to_factor",
]
