/** Route explorer: pick two nodes on the rendered graph, sweep the safety
 * weight, and compare the fastest route against the safety-weighted one.
 * The app only ever reads from the service; all state lives client-side. */

import {
  ApiError,
  fmtCost,
  fmtStar,
  type GraphPayload,
  type RouteLeg,
  type RouteResponse,
} from "./api.js";

/** What the app needs from the service; ApiClient satisfies it. */
export interface RouteApi {
  graph(signal?: AbortSignal): Promise<GraphPayload>;
  route(
    from: string,
    to: string,
    alpha: number,
    signal?: AbortSignal,
  ): Promise<RouteResponse>;
}
import { debounce } from "./debounce.js";
import {
  clientToViewBox,
  makeProjection,
  nearestNode,
  type Project,
  type Viewport,
} from "./geometry.js";
import { el, marker, nodeLabel, renderBaseGraph, routeLine, svgEl } from "./render.js";

export interface AppOptions {
  /** Slider re-query debounce window; clicks query immediately. */
  debounceMs?: number;
  viewport?: Viewport;
}

export interface AppState {
  origin: string | null;
  destination: string | null;
  alpha: number;
}

export interface AppHandles {
  root: HTMLElement;
  svg: SVGSVGElement;
  slider: HTMLInputElement;
  state(): AppState;
  /** Resolves once no query is pending or in flight. */
  whenIdle(): Promise<void>;
  lastResponse(): RouteResponse | null;
}

const DEFAULT_VIEWPORT: Viewport = { width: 800, height: 500, pad: 40 };

function sameNodes(a?: string[], b?: string[]): boolean {
  if (!a || !b || a.length !== b.length) return false;
  return a.every((v, i) => v === b[i]);
}

export async function initApp(
  root: HTMLElement,
  api: RouteApi,
  opts: AppOptions = {},
): Promise<AppHandles> {
  const vp = opts.viewport ?? DEFAULT_VIEWPORT;
  const waitMs = opts.debounceMs ?? 300;

  // -- static skeleton -----------------------------------------------------
  const alphaValue = el("span", { class: "alpha-value" }, "1.00");
  const slider = el("input", {
    type: "range",
    min: "0",
    max: "2",
    step: "0.05",
    value: "1",
    "aria-label": "safety weight",
  });
  const hint = el("span", { class: "hint" }, "Click a node to set the origin.");
  const banner = el("div", { class: "banner", hidden: "" });
  const svg = svgEl("svg", {
    viewBox: `0 0 ${vp.width} ${vp.height}`,
    class: "map",
    role: "img",
  });
  const panel = el("div", { class: "routes-panel" });
  root.append(
    el(
      "div",
      { class: "toolbar" },
      el("label", {}, "safety weight α ", slider),
      alphaValue,
      hint,
    ),
    banner,
    el("div", { class: "map-wrap" }, svg),
    panel,
  );

  // -- state ---------------------------------------------------------------
  let graph: GraphPayload | null = null;
  let project: Project | null = null;
  let origin: string | null = null;
  let destination: string | null = null;
  let seq = 0;
  let inflight = 0;
  let controller: AbortController | null = null;
  let lastResponse: RouteResponse | null = null;
  const routesLayer = svgEl("g", { "data-layer": "routes" });
  const markerLayer = svgEl("g", { "data-layer": "markers" });

  const alpha = () => Number(slider.value);

  function showBanner(message: string, retry: () => void) {
    banner.replaceChildren(
      el("span", {}, message + " "),
      el("button", { type: "button", class: "retry" }, "Retry"),
    );
    banner.querySelector("button")!.addEventListener("click", () => {
      banner.hidden = true;
      retry();
    });
    banner.hidden = false;
  }

  // -- route querying -------------------------------------------------------
  function legCard(
    title: string,
    leg: RouteLeg,
    role: "default" | "safe",
  ): HTMLElement {
    return el(
      "div",
      { class: `route-card route-card-${role}`, "data-role": `${role}-card` },
      el("h3", {}, title),
      el(
        "dl",
        {},
        el("dt", {}, "cost"),
        el(
          "dd",
          { "data-role": `${role}-cost` },
          `${fmtCost(leg.augmented_cost!)} s`,
        ),
        el("dt", {}, "base time"),
        el("dd", { "data-role": `${role}-base` }, `${fmtCost(leg.base_cost!)} s`),
        el("dt", {}, "mean star"),
        el("dd", { "data-role": `${role}-star` }, fmtStar(leg.mean_star)),
      ),
    );
  }

  function showRoutes(resp: RouteResponse) {
    lastResponse = resp;
    routesLayer.replaceChildren();
    panel.replaceChildren();
    if (!resp.default.found || !resp.safe.found) {
      panel.append(
        el(
          "p",
          { class: "no-route", "data-role": "no-route" },
          `No route from ${resp.from} to ${resp.to}.`,
        ),
      );
      return;
    }
    const coincide = sameNodes(resp.default.nodes, resp.safe.nodes);
    if (coincide) {
      routesLayer.append(routeLine(resp.safe.edges!, project!, "safe"));
      panel.append(
        legCard(`Route (α = ${resp.alpha})`, resp.safe, "safe"),
        el(
          "p",
          { class: "coincide-note", "data-role": "coincide" },
          "Fastest and safety-weighted routes coincide.",
        ),
      );
      return;
    }
    routesLayer.append(
      routeLine(resp.default.edges!, project!, "default"),
      routeLine(resp.safe.edges!, project!, "safe"),
    );
    const dt = resp.deltas.time_s;
    panel.append(
      legCard("Fastest (α = 0)", resp.default, "default"),
      legCard(`Safety-weighted (α = ${resp.alpha})`, resp.safe, "safe"),
      el(
        "p",
        { class: "delta-note", "data-role": "delta" },
        dt == null
          ? ""
          : `Safer route costs ${fmtCost(dt)} s extra at the service's base speeds.`,
      ),
    );
  }

  function runQuery() {
    if (!origin || !destination) return;
    const mySeq = ++seq;
    controller?.abort();
    controller = new AbortController();
    inflight += 1;
    api
      .route(origin, destination, alpha(), controller.signal)
      .then((resp) => {
        if (mySeq === seq) showRoutes(resp);
      })
      .catch((err: unknown) => {
        if (mySeq !== seq) return;
        if (err instanceof DOMException && err.name === "AbortError") return;
        if (err instanceof ApiError) {
          panel.replaceChildren(
            el("p", { class: "no-route", "data-role": "error" }, err.message),
          );
        } else {
          showBanner("The routing service is unreachable.", runQuery);
        }
      })
      .finally(() => {
        inflight -= 1;
      });
  }

  const debouncedQuery = debounce(runQuery, waitMs);

  function scheduleQuery(immediate: boolean) {
    if (!origin || !destination) {
      routesLayer.replaceChildren();
      panel.replaceChildren();
      lastResponse = null;
      return;
    }
    debouncedQuery.call();
    if (immediate) debouncedQuery.flush();
  }

  // -- interactions ----------------------------------------------------------
  function redrawMarkers() {
    markerLayer.replaceChildren();
    if (!graph || !project) return;
    const byId = new Map(graph.nodes.map((n) => [n.id, n]));
    for (const [id, role, label] of [
      [origin, "origin", "A"],
      [destination, "destination", "B"],
    ] as const) {
      if (!id) continue;
      const node = byId.get(id);
      if (!node) continue;
      const [x, y] = project(node.lat, node.lon);
      markerLayer.append(marker(x, y, label, role));
    }
    hint.textContent = !origin
      ? "Click a node to set the origin."
      : !destination
        ? "Click another node to set the destination."
        : `${origin} → ${destination}`;
  }

  svg.addEventListener("click", (ev) => {
    if (!graph || !project) return;
    const [x, y] = clientToViewBox(svg, ev.clientX, ev.clientY, vp);
    const node = nearestNode(graph.nodes, x, y, project);
    if (!node) return;
    if (!origin || (origin && destination)) {
      origin = node.id;
      destination = null;
    } else if (node.id !== origin) {
      destination = node.id;
    }
    redrawMarkers();
    scheduleQuery(true);
  });

  slider.addEventListener("input", () => {
    alphaValue.textContent = alpha().toFixed(2);
    scheduleQuery(false);
  });

  // -- initial load ------------------------------------------------------------
  async function loadGraph() {
    try {
      graph = await api.graph();
      project = makeProjection(graph.bbox, vp);
      svg.replaceChildren();
      renderBaseGraph(svg, graph, project);
      for (const node of graph.nodes) svg.append(nodeLabel(node, project));
      svg.append(routesLayer, markerLayer);
    } catch {
      showBanner("Could not load the road graph.", () => void loadGraph());
    }
  }
  await loadGraph();

  return {
    root,
    svg,
    slider,
    state: () => ({ origin, destination, alpha: alpha() }),
    whenIdle: () =>
      new Promise<void>((resolve) => {
        const check = () => {
          if (!debouncedQuery.pending && inflight === 0) resolve();
          else setTimeout(check, 5);
        };
        check();
      }),
    lastResponse: () => lastResponse,
  };
}
