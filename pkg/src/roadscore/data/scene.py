"""Procedural panorama renderer.

Each roadway attribute drives one visual element, so every label is
recoverable from pixels. The driver side of the road is the left half of
the frame; driver-side roadside objects in particular are drawn only in
the left third, which lets experiments check that the matching task's
attention lands there. Rendering is deterministic given the labels, the
nuisance RNG, and the optional bend/phase arguments.
"""

from __future__ import annotations

from typing import Dict, Mapping, Optional, Tuple

import numpy as np

SKY_COLORS = {1: (0.45, 0.62, 0.85), 2: (0.55, 0.60, 0.68)}      # rural / urban
GROUND_COLORS = {1: (0.35, 0.50, 0.30), 2: (0.45, 0.45, 0.45)}
LAND_USE_COLORS = ((0.30, 0.55, 0.25), (0.75, 0.70, 0.30),
                   (0.60, 0.35, 0.30), (0.40, 0.40, 0.60))
ROAD_GRAYS = {1: 0.32, 2: 0.42, 3: 0.52}
ROAD_NOISE = {1: 0.07, 2: 0.04, 3: 0.015}
CROSS_MARK_BRIGHTNESS = {1: 0.12, 2: 0.72, 3: 0.95}
UPGRADE_TINTS = ((0.30, 0.30, 0.30), (0.50, 0.45, 0.30), (0.70, 0.60, 0.40))
BEND_MAGNITUDE = {1: 0.6, 2: 0.3, 3: 0.0}


def _fill(img: np.ndarray, r0: float, r1: float, c0: float, c1: float, color) -> None:
    h, w = img.shape[:2]
    rr0, rr1 = max(0, int(r0)), min(h, int(r1))
    cc0, cc1 = max(0, int(c0)), min(w, int(c1))
    if rr0 < rr1 and cc0 < cc1:
        img[rr0:rr1, cc0:cc1] = color


def render_scene(aux: Mapping[str, int], height: int, width: int,
                 rng: np.random.Generator, bend_sign: Optional[int] = None,
                 phase: Optional[float] = None) -> np.ndarray:
    """Draw one (H, W, 3) float32 panorama in [0, 1] from attribute labels."""
    H, W = height, width
    img = np.zeros((H, W, 3), dtype=np.float64)

    # Nuisance draws happen in a fixed order and a fixed count so that
    # changing any label perturbs only that label's own visual element.
    if bend_sign is None:
        bend_sign = 1 if rng.random() < 0.5 else -1
    if phase is None:
        phase = float(rng.random())
    sky_jit, ground_jit = rng.uniform(-0.02, 0.02, size=2)
    driver_obj_pos = rng.random((6, 2))
    passenger_obj_pos = rng.random((6, 2))
    parking_pos = rng.random(4)
    pothole_pos = rng.random(6)

    horizon = int(0.35 * H)
    road_top = int(0.45 * H)

    # Backdrop: sky, ground, land-use band per side.
    img[:horizon] = np.clip(np.array(SKY_COLORS[aux["area_type"]]) + sky_jit, 0, 1)
    img[horizon:] = np.clip(np.array(GROUND_COLORS[aux["area_type"]]) + ground_jit, 0, 1)
    band0, band1 = int(0.22 * H), horizon
    _fill(img, band0, band1, 0, W // 2, LAND_USE_COLORS[aux["land_use_driver"] - 1])
    _fill(img, band0, band1, W // 2, W, LAND_USE_COLORS[aux["land_use_passenger"] - 1])

    # Road trapezoid, widening toward the viewer; curvature bends the far end.
    half_bot = (0.10 + 0.04 * (aux["num_lanes"] - 1) + 0.025 * (aux["lane_width"] - 1)) * W
    half_top = 0.03 * W
    bend = bend_sign * BEND_MAGNITUDE[aux["curvature"]]
    road_gray = ROAD_GRAYS[aux["road_condition"]]
    dash = max(2, H // 16)
    dash_off = int(phase * 2 * dash)

    lefts = np.full(H, W, dtype=np.int64)
    rights = np.zeros(H, dtype=np.int64)
    for r in range(road_top, H):
        t = (r - road_top) / max(1, H - road_top)
        half = half_top + (half_bot - half_top) * t
        cx = 0.5 * W + bend * 0.22 * W * (1.0 - t) ** 2
        lo, hi = int(cx - half), int(cx + half)
        lefts[r], rights[r] = max(0, lo), min(W, hi)
        _fill(img, r, r + 1, lo, hi, road_gray)

        on = ((r + dash_off) // dash) % 2 == 0
        lw = max(1, round(0.01 * W))
        # Edge lines: curve quality 1 = unmarked, 2 = dashed, 3 = solid.
        if aux["curve_quality"] == 3 or (aux["curve_quality"] == 2 and on):
            _fill(img, r, r + 1, lo, lo + lw, 0.92)
            _fill(img, r, r + 1, hi - lw, hi, 0.92)
        # Bicycle lane: green strip inside each edge.
        if aux["bicycle_facilities"] == 2:
            bw = max(1, int(0.012 * W))
            _fill(img, r, r + 1, lo + lw, lo + lw + bw, (0.10, 0.60, 0.25))
            _fill(img, r, r + 1, hi - lw - bw, hi - lw, (0.10, 0.60, 0.25))
        # Median: a solid paint stripe or a wider physical barrier. Both are
        # drawn on every road row; a dashed paint stripe would make the
        # visual mass of this scored element depend on the phase nuisance.
        if aux["median_type"] == 2:
            mw = max(1, int(0.008 * W))
            _fill(img, r, r + 1, cx - mw, cx + mw, (0.85, 0.75, 0.20))
        elif aux["median_type"] == 3:
            mw = max(2, int(0.016 * W))
            _fill(img, r, r + 1, cx - mw, cx + mw, (0.45, 0.15, 0.12))
        # Lane dividers.
        for k in range(1, aux["num_lanes"]):
            if on:
                x = lo + (hi - lo) * k / aux["num_lanes"]
                _fill(img, r, r + 1, x, x + max(1, lw // 2), 0.88)
        # Shoulders and sidewalks hug the trapezoid edges. Shoulders get a
        # warm tan no other element uses, so they stay readable even though
        # their position tracks the road edge.
        shw = max(1, int(0.03 * W))
        sww = max(1, int(0.022 * W))
        if aux["shoulder_driver"] == 2:
            _fill(img, r, r + 1, lo - shw, lo, (0.75, 0.55, 0.30))
        if aux["shoulder_passenger"] == 2:
            _fill(img, r, r + 1, hi, hi + shw, (0.75, 0.55, 0.30))
        if aux["sidewalk_driver"] == 2:
            _fill(img, r, r + 1, lo - shw - sww, lo - shw, 0.85)
        if aux["sidewalk_passenger"] == 2:
            _fill(img, r, r + 1, hi + shw, hi + shw + sww, 0.85)

    # Potholes: dark blemishes whose count encodes pavement condition,
    # placed in a central wedge that is road surface for every geometry.
    # They make the condition legible even where markings and parked
    # vehicles dilute the gray-level cue.
    n_holes = {1: 6, 2: 2, 3: 0}[aux["road_condition"]]
    hz_r0, hz_r1 = 0.56 * H, 0.78 * H
    hz_c0, hz_c1 = 0.46 * W, 0.54 * W
    hole_h, hole_w = max(2, int(0.045 * H)), max(2, int(0.022 * W))
    hcell_h = (hz_r1 - hz_r0) / 2.0
    hcell_w = (hz_c1 - hz_c0) / 3.0
    for i in range(n_holes):
        f = pothole_pos[i]
        r0 = hz_r0 + (i // 3) * hcell_h + f * max(0.0, hcell_h - hole_h)
        c0 = hz_c0 + (i % 3) * hcell_w + (1 - f) * max(0.0, hcell_w - hole_w)
        _fill(img, r0, r0 + hole_h, c0, c0 + hole_w, 0.08)

    # Intersecting road: a horizontal band whose length encodes crossing
    # volume, centered on the frame. It sits between the horizon and the
    # top of the roadway so it never covers the far road tip, where the
    # curvature code is most visible.
    bt = max(2, round(0.06 * H))
    cross0 = int(0.37 * H)
    cross1 = cross0 + bt
    half_len = (0.09 + 0.065 * (aux["intersecting_volume"] - 1)) * W
    band_lo, band_hi = int(0.5 * W - half_len), int(0.5 * W + half_len)
    _fill(img, cross0, cross1, band_lo, band_hi, 0.50)
    mark = CROSS_MARK_BRIGHTNESS[aux["intersection_quality"]]
    step = max(4, W // 24)
    for c in range(band_lo, band_hi, step):
        _fill(img, cross0, cross0 + max(1, bt // 2), c, min(c + step // 2, band_hi), mark)
    if aux["intersection_channelization"] == 2:
        for c in range(band_lo + step // 2, band_hi, step):
            _fill(img, cross1 - max(1, bt // 3), cross1, c, min(c + step // 3, band_hi), 0.95)

    # Roadside clutter: severity sets the count and size of near-black
    # blocks, setback sets the fence line. Blocks land in jittered grid
    # cells rather than uniformly, so they never merge into one blob and
    # the total dark mass stays a reliable severity cue. The zone stops at
    # 0.26 W so the blocks clear the sidewalk strip even on the widest
    # road, and stays inside the driver-side third of the frame.
    def clutter(side: str, positions: np.ndarray) -> None:
        sev = aux[f"roadside_obj_{side}"]
        dist = aux[f"roadside_dist_{side}"]
        if side == "driver":
            x0, x1 = 0.04 * W, 0.26 * W
            fence_x = (0.05 + 0.05 * (dist - 1)) * W
        else:
            x0, x1 = 0.74 * W, 0.96 * W
            fence_x = W - (0.05 + 0.05 * (dist - 1)) * W
        _fill(img, 0.55 * H, 0.90 * H, fence_x, fence_x + max(1, int(0.004 * W)),
              (0.35, 0.25, 0.15))
        if sev == 3:
            return
        count = 6 if sev == 1 else 3
        rh = (0.09 if sev == 1 else 0.05) * H
        rw = (0.040 if sev == 1 else 0.022) * W
        cell_w = (x1 - x0) / 3.0
        cell_h = 0.14 * H
        for i in range(count):
            fr, fc = positions[i]
            r0 = (0.48 + 0.14 * (i // 3)) * H + fr * max(0.0, cell_h - rh)
            c0 = x0 + (i % 3) * cell_w + fc * max(0.0, cell_w - rw)
            _fill(img, r0, r0 + rh, c0, c0 + rw, 0.08)

    clutter("driver", driver_obj_pos)
    clutter("passenger", passenger_obj_pos)

    # Stop bar ahead of the viewer: thickness encodes lane width, which the
    # trapezoid alone leaves tangled with lane count and curvature. Anchored
    # at its bottom edge so thicker bars grow upward, clear of the tint strip.
    bar = max(2, round(0.04 * H)) * aux["lane_width"]
    bar1 = int(0.94 * H)
    _fill(img, bar1 - bar, bar1, 0.38 * W, 0.62 * W, 0.95)

    # Parked vehicles along the near road edges, drawn over the stop bar so
    # narrow roads cannot hide them under it.
    n_park = 2 * (aux["vehicle_parking"] - 1)
    car_h, car_w = max(2, int(0.05 * H)), max(2, int(0.04 * W))
    for i in range(n_park):
        f = parking_pos[i % 4]
        r = int((0.80 + 0.10 * f) * H)
        lo, hi = lefts[min(r, H - 1)], rights[min(r, H - 1)]
        side = -1 if i % 2 == 0 else 1
        c0 = lo + 2 if side < 0 else hi - 2 - car_w
        _fill(img, r, r + car_h, c0, c0 + car_w, (0.10, 0.10, 0.35))

    # Upgrade-cost tint strip at the very bottom.
    _fill(img, 0.97 * H, H, 0, W, UPGRADE_TINTS[aux["upgrade_cost"] - 1])

    # Pavement speckle, stronger on worse pavement, confined to the road.
    noise = rng.normal(0.0, ROAD_NOISE[aux["road_condition"]], size=(H, W))
    cols = np.arange(W)[None, :]
    road_mask = (cols >= lefts[:, None]) & (cols < rights[:, None])
    img[road_mask] = img[road_mask] + noise[road_mask, None]

    return np.clip(img, 0.0, 1.0).astype(np.float32)
