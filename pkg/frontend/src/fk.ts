/**
 * Client-side forward kinematics over the hello-frame geometry, mirroring
 * the server's planar convention: each link frame sits at its proximal
 * joint; a child's frame origin is the parent frame plus the joint anchor
 * rotated by the parent angle; the child angle is the parent angle plus the
 * joint coordinate. Angles are CCW, x forward, z up.
 *
 * The golden-frame test pins this against a server-computed snapshot, so
 * any drift from the server's kinematics fails in CI rather than on
 * screen.
 */

import type { Geometry, RootPose, Vec2 } from "./wire.js";

export interface LinkPose {
  pos: Vec2; // frame origin, world m
  ang: number; // rad
}

export function rot2(ang: number, v: Vec2): Vec2 {
  const c = Math.cos(ang);
  const s = Math.sin(ang);
  return [c * v[0] - s * v[1], s * v[0] + c * v[1]];
}

/** Parent-before-child ordering; rejects cycles and dangling parents. */
export function topoOrder(geometry: Geometry): number[] {
  const n = geometry.links.length;
  const order: number[] = [];
  const placed = new Array<boolean>(n).fill(false);
  let progressed = true;
  while (order.length < n && progressed) {
    progressed = false;
    for (let i = 0; i < n; i++) {
      if (placed[i]) continue;
      const parent = geometry.links[i]!.parent;
      if (parent < -1 || parent >= n) {
        throw new Error(`link ${i} has out-of-range parent ${parent}`);
      }
      if (parent === -1 || placed[parent]) {
        order.push(i);
        placed[i] = true;
        progressed = true;
      }
    }
  }
  if (order.length < n) throw new Error("link graph has a cycle");
  return order;
}

/** World pose of every link for one (root, q) configuration. */
export function forwardKinematics(
  geometry: Geometry,
  root: RootPose,
  q: number[],
): LinkPose[] {
  const poses = new Array<LinkPose>(geometry.links.length);
  for (const i of topoOrder(geometry)) {
    const link = geometry.links[i]!;
    if (link.parent === -1) {
      poses[i] = { pos: [root.x, root.z], ang: root.pitch };
      continue;
    }
    const parent = poses[link.parent]!;
    const qi = q[link.joint];
    if (qi === undefined) {
      throw new Error(`state.q has no entry for joint ${link.joint}`);
    }
    const r = rot2(parent.ang, link.anchor);
    poses[i] = {
      pos: [parent.pos[0] + r[0], parent.pos[1] + r[1]],
      ang: parent.ang + qi,
    };
  }
  return poses;
}

export interface Segment {
  a: Vec2;
  b: Vec2;
}

/**
 * One drawable segment per link: from the frame origin along the link
 * length. The floating base extends up (+z in its frame, e.g. a torso);
 * every descendant extends down toward its child joint, which matches the
 * proximal-joint frame convention above.
 */
export function linkSegments(geometry: Geometry, poses: LinkPose[]): Segment[] {
  return geometry.links.map((link, i) => {
    const p = poses[i]!;
    const local: Vec2 = link.parent === -1 ? [0, link.length] : [0, -link.length];
    const tip = rot2(p.ang, local);
    return { a: p.pos, b: [p.pos[0] + tip[0], p.pos[1] + tip[1]] };
  });
}

export interface ContactMarker {
  pos: Vec2; // world m
  link: number;
  active: boolean;
}

/** World contact-point markers; `contacts` flags index geometry.ee_links. */
export function contactMarkers(
  geometry: Geometry,
  poses: LinkPose[],
  contacts: boolean[],
): ContactMarker[] {
  const active = new Map<number, boolean>();
  geometry.ee_links.forEach((li, k) => active.set(li, contacts[k] ?? false));
  const out: ContactMarker[] = [];
  geometry.links.forEach((link, i) => {
    const p = poses[i]!;
    for (const cp of link.contact_points) {
      const r = rot2(p.ang, cp);
      out.push({
        pos: [p.pos[0] + r[0], p.pos[1] + r[1]],
        link: i,
        active: active.get(i) ?? false,
      });
    }
  });
  return out;
}
