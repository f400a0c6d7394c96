import { describe, expect, it } from "vitest";

import { starColor, UNSCORED_COLOR } from "../src/color.js";

describe("starColor", () => {
  it("maps the anchor stars to red, yellow, green", () => {
    expect(starColor(1)).toBe("rgb(215, 48, 39)");
    expect(starColor(3)).toBe("rgb(254, 224, 139)");
    expect(starColor(5)).toBe("rgb(26, 152, 80)");
  });

  it("interpolates between stops", () => {
    expect(starColor(2)).toBe("rgb(235, 136, 89)");
    expect(starColor(4)).toBe("rgb(140, 188, 110)");
  });

  it("clamps out-of-range values", () => {
    expect(starColor(0.2)).toBe(starColor(1));
    expect(starColor(7)).toBe(starColor(5));
  });

  it("renders unscored edges gray", () => {
    expect(starColor(null)).toBe(UNSCORED_COLOR);
    expect(starColor(undefined)).toBe(UNSCORED_COLOR);
    expect(starColor(Number.NaN)).toBe(UNSCORED_COLOR);
  });
});
