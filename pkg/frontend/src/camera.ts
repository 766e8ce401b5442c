/**
 * World (m, z up) to canvas (px, y down) mapping with pan and zoom. The
 * default places the ground line near the bottom of a 960x540 canvas with
 * the robot roughly centered; the golden-frame test pins this transform,
 * so changing the defaults invalidates the checked-in snapshot.
 */

import type { Vec2 } from "./wire.js";

export interface Camera {
  pixelsPerMeter: number;
  centerX: number; // world x at the canvas horizontal center, m
  centerZ: number; // world z at the canvas vertical center, m
  width: number; // px
  height: number; // px
}

export const DEFAULT_CAMERA: Camera = {
  pixelsPerMeter: 220,
  centerX: 0,
  centerZ: 0.7,
  width: 960,
  height: 540,
};

export function worldToScreen(cam: Camera, p: Vec2): Vec2 {
  return [
    cam.width / 2 + (p[0] - cam.centerX) * cam.pixelsPerMeter,
    cam.height / 2 - (p[1] - cam.centerZ) * cam.pixelsPerMeter,
  ];
}

export function screenToWorld(cam: Camera, p: Vec2): Vec2 {
  return [
    (p[0] - cam.width / 2) / cam.pixelsPerMeter + cam.centerX,
    (cam.height / 2 - p[1]) / cam.pixelsPerMeter + cam.centerZ,
  ];
}

export function panBy(cam: Camera, dxPx: number, dyPx: number): Camera {
  return {
    ...cam,
    centerX: cam.centerX - dxPx / cam.pixelsPerMeter,
    centerZ: cam.centerZ + dyPx / cam.pixelsPerMeter,
  };
}

/** Zoom about a fixed screen point so it stays under the cursor. */
export function zoomAt(cam: Camera, factor: number, at: Vec2): Camera {
  const clamped = Math.min(2000, Math.max(20, cam.pixelsPerMeter * factor));
  const before = screenToWorld(cam, at);
  const next = { ...cam, pixelsPerMeter: clamped };
  const after = screenToWorld(next, at);
  return {
    ...next,
    centerX: next.centerX + (before[0] - after[0]),
    centerZ: next.centerZ + (before[1] - after[1]),
  };
}
