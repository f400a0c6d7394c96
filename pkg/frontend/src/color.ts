/** Star-to-color ramp: red is highest risk, yellow average, green least. */

type RGB = [number, number, number];

const STOPS: Array<[number, RGB]> = [
  [1, [215, 48, 39]],   // red
  [3, [254, 224, 139]], // yellow
  [5, [26, 152, 80]],   // green
];

export const UNSCORED_COLOR = "#9aa0a6";

export function starColor(star: number | null | undefined): string {
  if (star == null || Number.isNaN(star)) return UNSCORED_COLOR;
  const s = Math.min(5, Math.max(1, star));
  for (let i = 0; i < STOPS.length - 1; i++) {
    const [s0, c0] = STOPS[i]!;
    const [s1, c1] = STOPS[i + 1]!;
    if (s <= s1) {
      const t = (s - s0) / (s1 - s0);
      const mix = c0.map((v, k) => Math.round(v + t * (c1[k]! - v))) as RGB;
      return `rgb(${mix[0]}, ${mix[1]}, ${mix[2]})`;
    }
  }
  const last = STOPS[STOPS.length - 1]![1];
  return `rgb(${last[0]}, ${last[1]}, ${last[2]})`;
}
