/** DOM and SVG construction helpers; no state, no fetches. */

import type { GraphEdge, GraphNode, GraphPayload } from "./api.js";
import { starColor } from "./color.js";
import type { Project } from "./geometry.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Array<Node | string>
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  node.append(...children);
  return node;
}

export function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

function pointString(geometry: [number, number][], project: Project): string {
  return geometry
    .map(([lat, lon]) => project(lat, lon).map((v) => v.toFixed(1)).join(","))
    .join(" ");
}

/** Base map: every edge as a star-colored polyline plus small node dots. */
export function renderBaseGraph(
  svg: SVGSVGElement,
  graph: GraphPayload,
  project: Project,
): void {
  const edgeLayer = svgEl("g", { "data-layer": "edges" });
  for (const edge of graph.edges) {
    const line = svgEl("polyline", {
      points: pointString(edge.geometry, project),
      fill: "none",
      stroke: starColor(edge.star),
      "stroke-width": "3",
      "stroke-linecap": "round",
      "data-edge": edge.id,
    });
    line.append(svgEl("title"));
    line.querySelector("title")!.textContent =
      `${edge.id}: ${edge.base_cost.toFixed(1)}s` +
      (edge.star == null ? "" : `, star ${edge.star.toFixed(1)}`);
    edgeLayer.append(line);
  }
  const nodeLayer = svgEl("g", { "data-layer": "nodes" });
  for (const node of graph.nodes) {
    const [x, y] = project(node.lat, node.lon);
    nodeLayer.append(
      svgEl("circle", {
        cx: x.toFixed(1),
        cy: y.toFixed(1),
        r: "4",
        class: "node-dot",
        "data-node": node.id,
      }),
    );
  }
  svg.append(edgeLayer, nodeLayer);
}

/** One route overlay polyline through the legs' edge geometries. */
export function routeLine(
  edges: GraphEdge[],
  project: Project,
  kind: "default" | "safe",
): SVGPolylineElement {
  const pts: [number, number][] = [];
  for (const edge of edges) {
    for (const p of edge.geometry) {
      const last = pts[pts.length - 1];
      if (!last || last[0] !== p[0] || last[1] !== p[1]) pts.push(p);
    }
  }
  return svgEl("polyline", {
    points: pointString(pts, project),
    fill: "none",
    class: `route-line route-${kind}`,
    "data-route": kind,
  });
}

export function marker(
  x: number,
  y: number,
  label: string,
  role: string,
): SVGGElement {
  const g = svgEl("g", { class: "endpoint", "data-endpoint": role });
  g.append(svgEl("circle", { cx: String(x), cy: String(y), r: "9" }));
  const text = svgEl("text", {
    x: String(x),
    y: String(y + 4),
    "text-anchor": "middle",
  });
  text.textContent = label;
  g.append(text);
  return g;
}

export function nodeLabel(node: GraphNode, project: Project): SVGTextElement {
  const [x, y] = project(node.lat, node.lon);
  const text = svgEl("text", {
    x: (x + 7).toFixed(1),
    y: (y - 7).toFixed(1),
    class: "node-name",
  });
  text.textContent = node.id;
  return text;
}
