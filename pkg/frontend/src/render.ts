/**
 * Scene construction and canvas drawing. `buildScene` is pure (geometry ->
 * screen-space primitives) so tests — including the golden-frame pin
 * against server-side kinematics — run without a canvas; `drawScene` is
 * the thin painting layer.
 */

import { Camera, worldToScreen } from "./camera.js";
import {
  contactMarkers,
  forwardKinematics,
  linkSegments,
} from "./fk.js";
import type { Geometry, Vec2 } from "./wire.js";
import type { RenderPose } from "./view.js";

export interface ScreenSegment {
  a: Vec2; // px
  b: Vec2; // px
  name: string;
}

export interface ScreenMarker {
  pos: Vec2; // px
  active: boolean;
}

export interface Scene {
  groundY: number; // px
  segments: ScreenSegment[];
  markers: ScreenMarker[];
  rootPx: Vec2;
}

export function buildScene(
  geometry: Geometry,
  pose: RenderPose,
  cam: Camera,
): Scene {
  const poses = forwardKinematics(geometry, pose.root, pose.q);
  return {
    groundY: worldToScreen(cam, [0, 0])[1],
    segments: linkSegments(geometry, poses).map((s, i) => ({
      a: worldToScreen(cam, s.a),
      b: worldToScreen(cam, s.b),
      name: geometry.links[i]!.name,
    })),
    markers: contactMarkers(geometry, poses, pose.contacts).map((m) => ({
      pos: worldToScreen(cam, m.pos),
      active: m.active,
    })),
    rootPx: worldToScreen(cam, [pose.root.x, pose.root.z]),
  };
}

export function drawScene(ctx: CanvasRenderingContext2D, scene: Scene): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, width, height);

  if (scene.groundY >= 0 && scene.groundY <= height) {
    ctx.strokeStyle = "#3c4654";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(0, scene.groundY);
    ctx.lineTo(width, scene.groundY);
    ctx.stroke();
    ctx.fillStyle = "#1a2029";
    ctx.fillRect(0, scene.groundY, width, height - scene.groundY);
  }

  ctx.strokeStyle = "#d8dee9";
  ctx.lineWidth = 4;
  ctx.lineCap = "round";
  for (const seg of scene.segments) {
    ctx.beginPath();
    ctx.moveTo(seg.a[0], seg.a[1]);
    ctx.lineTo(seg.b[0], seg.b[1]);
    ctx.stroke();
  }

  for (const m of scene.markers) {
    ctx.beginPath();
    ctx.arc(m.pos[0], m.pos[1], m.active ? 7 : 4, 0, 2 * Math.PI);
    ctx.fillStyle = m.active ? "#d08770" : "#4c566a";
    ctx.fill();
  }

  ctx.beginPath();
  ctx.arc(scene.rootPx[0], scene.rootPx[1], 5, 0, 2 * Math.PI);
  ctx.fillStyle = "#88c0d0";
  ctx.fill();
}
