/** Typed client for the routing HTTP service. All endpoints are read-only. */

export interface BBox {
  min_lat: number;
  min_lon: number;
  max_lat: number;
  max_lon: number;
}

export interface GraphNode {
  id: string;
  lat: number;
  lon: number;
}

export interface GraphEdge {
  id: string;
  from: string;
  to: string;
  base_cost: number;
  factor: number;
  star: number | null;
  geometry: [number, number][];
}

export interface GraphPayload {
  bbox: BBox;
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface RouteLeg {
  found: boolean;
  nodes?: string[];
  edges?: GraphEdge[];
  base_cost?: number;
  augmented_cost?: number;
  mean_star?: number | null;
}

export interface RouteResponse {
  from: string;
  to: string;
  alpha: number;
  default: RouteLeg;
  safe: RouteLeg;
  deltas: {
    time_s: number | null;
    mean_star_default: number | null;
    mean_star_safe: number | null;
  };
}

/** A 4xx/5xx reply; carries the service's own error text. */
export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function getJson<T>(url: string, signal?: AbortSignal): Promise<T> {
  const resp = await fetch(url, { signal });
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    const reason = typeof body?.error === "string" ? body.error : resp.statusText;
    throw new ApiError(resp.status, reason);
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  health(signal?: AbortSignal): Promise<{ status: string; nodes: number; edges: number }> {
    return getJson(`${this.baseUrl}/health`, signal);
  }

  graph(signal?: AbortSignal): Promise<GraphPayload> {
    return getJson(`${this.baseUrl}/graph/bbox`, signal);
  }

  route(
    from: string,
    to: string,
    alpha: number,
    signal?: AbortSignal,
  ): Promise<RouteResponse> {
    const q = new URLSearchParams({ from, to, alpha: String(alpha) });
    return getJson(`${this.baseUrl}/route?${q}`, signal);
  }
}

/** The one cost formatter the UI uses, so labels and tests stay in lockstep. */
export function fmtCost(seconds: number): string {
  return seconds.toFixed(2);
}

export function fmtStar(star: number | null | undefined): string {
  return star == null ? "–" : star.toFixed(2);
}
