"""Safety-weighted shortest paths.

Label-setting search over augmented costs c_o * factor. Ties are broken
by the lexicographically smallest node path (then edge path), so results
are fully deterministic and easy to test against exhaustive enumeration.
"""

import heapq
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .factors import SafetyFactorMap, factor_to_star
from .graph import RoadGraph


@dataclass
class RouteResult:
    found: bool
    nodes: List[str] = field(default_factory=list)
    edges: List[str] = field(default_factory=list)
    base_cost: float = 0.0
    augmented_cost: float = 0.0
    stars: Optional[List[Optional[float]]] = None

    @classmethod
    def no_route(cls) -> "RouteResult":
        return cls(found=False)

    def mean_star(self) -> Optional[float]:
        """Average per-edge expected star where annotations exist."""
        if not self.stars:
            return None
        known = [s for s in self.stars if s is not None]
        if not known:
            return None
        return sum(known) / len(known)


def shortest_path(graph: RoadGraph, factors: SafetyFactorMap,
                  origin: str, destination: str) -> RouteResult:
    """Minimum augmented-cost simple path, or an explicit no-route result."""
    for node in (origin, destination):
        if node not in graph.nodes:
            raise ValueError(f"unknown node {node!r}")
    start: Tuple = (0.0, (origin,), (), 0.0)
    heap = [start]
    visited = set()
    while heap:
        aug, node_path, edge_path, base = heapq.heappop(heap)
        node = node_path[-1]
        if node in visited:
            continue
        visited.add(node)
        if node == destination:
            return RouteResult(found=True, nodes=list(node_path),
                               edges=list(edge_path), base_cost=base,
                               augmented_cost=aug)
        for edge in graph.outgoing[node]:
            if edge.dst in visited:
                continue
            step = edge.cost * factors.get(edge.id)
            heapq.heappush(heap, (aug + step, node_path + (edge.dst,),
                                  edge_path + (edge.id,), base + edge.cost))
    return RouteResult.no_route()


def annotate_stars(result: RouteResult, factors: SafetyFactorMap) -> RouteResult:
    """Attach per-edge expected stars derived from the alpha=1 factors."""
    if result.found:
        result.stars = [
            factor_to_star(factors.factors[e]) if e in factors.factors else None
            for e in result.edges
        ]
    return result


@dataclass
class ComparedRoutes:
    """Default routing next to safety-weighted routing on the same graph."""

    alpha: float
    default: RouteResult
    safe: RouteResult

    def time_delta_s(self) -> Optional[float]:
        if not (self.default.found and self.safe.found):
            return None
        return self.safe.base_cost - self.default.base_cost


def compare_routes(graph: RoadGraph, factors: SafetyFactorMap,
                   origin: str, destination: str,
                   alpha: float = 1.0) -> ComparedRoutes:
    """Route twice: ignoring safety, then with factors scaled by alpha.

    `factors` holds the stored alpha=1 values.
    """
    default = shortest_path(graph, SafetyFactorMap({}), origin, destination)
    safe = shortest_path(graph, factors.rescaled(alpha), origin, destination)
    annotate_stars(default, factors)
    annotate_stars(safe, factors)
    return ComparedRoutes(alpha=alpha, default=default, safe=safe)
