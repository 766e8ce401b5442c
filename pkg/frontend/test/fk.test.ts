/**
 * Golden-frame test: the client's forward kinematics and drawing geometry
 * must match the server-side snapshot (test/golden/frame.json, generated
 * by generate.py from the server's own kinematics) within 1 px at the
 * default camera. Guards both FK drift and drawing-convention drift.
 */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { DEFAULT_CAMERA, worldToScreen } from "../src/camera.js";
import { contactMarkers, forwardKinematics, linkSegments, topoOrder } from "../src/fk.js";
import { buildScene } from "../src/render.js";
import { parseServerFrame, HelloFrame, StateFrame, Vec2 } from "../src/wire.js";

interface GoldenCase {
  name: string;
  state: StateFrame;
  links: { pos: Vec2; ang: number }[];
  segments: { a: Vec2; b: Vec2 }[];
  contact_points: Vec2[];
}

const golden = JSON.parse(
  readFileSync(new URL("./golden/frame.json", import.meta.url), "utf-8"),
) as { hello: HelloFrame; cases: GoldenCase[] };

// round-trip the snapshot through the real parser so the fixture itself
// is guaranteed wire-conformant
const hello = parseServerFrame(JSON.stringify(golden.hello)) as HelloFrame;
const geometry = hello.geometry;

const pxDist = (a: Vec2, b: Vec2) =>
  Math.hypot(a[0] - b[0], a[1] - b[1]);

describe("golden-frame kinematics", () => {
  for (const c of golden.cases) {
    it(`matches the server snapshot: ${c.name}`, () => {
      const state = parseServerFrame(JSON.stringify(c.state)) as StateFrame;
      const poses = forwardKinematics(geometry, state.root, state.q);

      // world-space link frames agree to numerical precision
      for (let i = 0; i < poses.length; i++) {
        expect(Math.abs(poses[i]!.pos[0] - c.links[i]!.pos[0])).toBeLessThan(1e-9);
        expect(Math.abs(poses[i]!.pos[1] - c.links[i]!.pos[1])).toBeLessThan(1e-9);
        expect(Math.abs(poses[i]!.ang - c.links[i]!.ang)).toBeLessThan(1e-9);
      }

      // screen-space: every drawn segment endpoint within 1 px of the
      // snapshot's projection at the default camera
      const segs = linkSegments(geometry, poses);
      for (let i = 0; i < segs.length; i++) {
        const wantA = worldToScreen(DEFAULT_CAMERA, c.segments[i]!.a);
        const wantB = worldToScreen(DEFAULT_CAMERA, c.segments[i]!.b);
        expect(pxDist(segs[i]!.a.map((v, k) =>
          worldToScreen(DEFAULT_CAMERA, segs[i]!.a)[k]!) as Vec2, wantA),
        ).toBeLessThanOrEqual(1.0);
        expect(pxDist(worldToScreen(DEFAULT_CAMERA, segs[i]!.a), wantA)).toBeLessThanOrEqual(1.0);
        expect(pxDist(worldToScreen(DEFAULT_CAMERA, segs[i]!.b), wantB)).toBeLessThanOrEqual(1.0);
      }

      // contact points too (same order as the server emits them)
      const markers = contactMarkers(geometry, poses, state.contacts);
      expect(markers.length).toBe(c.contact_points.length);
      for (let i = 0; i < markers.length; i++) {
        const want = worldToScreen(DEFAULT_CAMERA, c.contact_points[i]!);
        expect(pxDist(worldToScreen(DEFAULT_CAMERA, markers[i]!.pos), want)).toBeLessThanOrEqual(1.0);
      }

      // buildScene wires the same numbers through to the scene
      const scene = buildScene(geometry, {
        t: state.t, root: state.root, q: state.q, contacts: state.contacts,
      }, DEFAULT_CAMERA);
      for (let i = 0; i < segs.length; i++) {
        expect(pxDist(scene.segments[i]!.a,
          worldToScreen(DEFAULT_CAMERA, c.segments[i]!.a))).toBeLessThanOrEqual(1.0);
      }
    });
  }

  it("identity pose is an upright figure at the streamed root", () => {
    const c = golden.cases.find((x) => x.name === "identity")!;
    const poses = forwardKinematics(geometry, c.state.root, c.state.q);
    const segs = linkSegments(geometry, poses);
    for (const s of segs) {
      expect(Math.abs(s.a[0] - c.state.root.x)).toBeLessThan(1e-12);
      expect(Math.abs(s.b[0] - c.state.root.x)).toBeLessThan(1e-12);
    }
    // base link extends up, leg links extend down
    const base = geometry.links.findIndex((l) => l.parent === -1);
    expect(segs[base]!.b[1]).toBeGreaterThan(segs[base]!.a[1]);
    const child = geometry.links.findIndex((l) => l.parent === base);
    expect(segs[child]!.b[1]).toBeLessThan(segs[child]!.a[1]);
  });

  it("orders parents before children and rejects cycles", () => {
    const order = topoOrder(geometry);
    const seen = new Set<number>();
    for (const i of order) {
      const parent = geometry.links[i]!.parent;
      if (parent !== -1) expect(seen.has(parent)).toBe(true);
      seen.add(i);
    }
    const cyclic = structuredClone(geometry);
    cyclic.links[0]!.parent = cyclic.links.length - 1;
    expect(() => topoOrder(cyclic)).toThrow(/cycle/);
  });

  it("flags contact markers through the ee-link mapping", () => {
    const c = golden.cases.find((x) => x.name === "bent")!;
    const poses = forwardKinematics(geometry, c.state.root, c.state.q);
    const markers = contactMarkers(geometry, poses, [true, false]);
    const firstEE = geometry.ee_links[0]!;
    const secondEE = geometry.ee_links[1]!;
    for (const m of markers) {
      if (m.link === firstEE) expect(m.active).toBe(true);
      if (m.link === secondEE) expect(m.active).toBe(false);
    }
    expect(markers.some((m) => m.link === firstEE)).toBe(true);
  });
});
