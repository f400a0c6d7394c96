/** Flat projection from the graph's bounding box into SVG pixel space. */

import type { BBox, GraphNode } from "./api.js";

export interface Viewport {
  width: number;
  height: number;
  pad: number;
}

export type Project = (lat: number, lon: number) => [number, number];

/**
 * Equirectangular fit: one uniform scale for both axes (so shapes keep
 * their aspect), centered inside the padded viewport, y growing downward.
 * Longitudes are compressed by cos(midLat) the way locally flat maps do.
 */
export function makeProjection(bbox: BBox, vp: Viewport): Project {
  const midLat = (bbox.min_lat + bbox.max_lat) / 2;
  const kx = Math.cos((midLat * Math.PI) / 180);
  const spanX = (bbox.max_lon - bbox.min_lon) * kx;
  const spanY = bbox.max_lat - bbox.min_lat;
  const innerW = vp.width - 2 * vp.pad;
  const innerH = vp.height - 2 * vp.pad;
  const scale = Math.min(
    spanX > 0 ? innerW / spanX : Infinity,
    spanY > 0 ? innerH / spanY : Infinity,
  );
  const s = Number.isFinite(scale) ? scale : 1;
  const cx = vp.width / 2;
  const cy = vp.height / 2;
  const midLon = (bbox.min_lon + bbox.max_lon) / 2;
  return (lat, lon) => [
    cx + (lon - midLon) * kx * s,
    cy - (lat - midLat) * s,
  ];
}

/** Closest node to a click, measured in projected (screen) pixels. */
export function nearestNode(
  nodes: readonly GraphNode[],
  x: number,
  y: number,
  project: Project,
): GraphNode | null {
  let best: GraphNode | null = null;
  let bestD = Infinity;
  for (const node of nodes) {
    const [px, py] = project(node.lat, node.lon);
    const d = (px - x) ** 2 + (py - y) ** 2;
    if (d < bestD || (d === bestD && best !== null && node.id < best.id)) {
      bestD = d;
      best = node;
    }
  }
  return best;
}

/** Map a mouse event to viewBox coordinates, tolerating unstyled tests
 * where the element has no layout box. */
export function clientToViewBox(
  svg: SVGSVGElement,
  clientX: number,
  clientY: number,
  vp: Viewport,
): [number, number] {
  const rect = svg.getBoundingClientRect();
  const sx = rect.width > 0 ? vp.width / rect.width : 1;
  const sy = rect.height > 0 ? vp.height / rect.height : 1;
  return [(clientX - rect.left) * sx, (clientY - rect.top) * sy];
}
