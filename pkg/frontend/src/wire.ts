/**
 * Teleop wire protocol: one JSON object per WebSocket text frame, at most
 * 4096 bytes, discriminated by `type`. This module mirrors the checked-in
 * schema (src/physref/teleop/wire_schema.json on the server side); the test
 * suite validates both the parser and every outgoing builder against that
 * schema file so the two components cannot drift apart silently.
 */

export const MAX_MESSAGE_BYTES = 4096;

export type Vec2 = [number, number];

export interface LinkGeometry {
  name: string;
  parent: number; // link index, -1 for the floating base
  joint: number; // joint index driving this link, -1 for the base
  anchor: Vec2; // joint anchor in the parent frame, m
  length: number; // m
  contact_points: Vec2[]; // in this link's frame, m
}

export interface Geometry {
  links: LinkGeometry[];
  ee_links: number[];
  standing_height: number; // m
}

export interface HelloFrame {
  type: "hello";
  model: string;
  joints: string[];
  geometry: Geometry;
}

export interface RootPose {
  x: number;
  z: number;
  pitch: number;
}

export interface StateFrame {
  type: "state";
  t: number; // s, simulation time
  root: RootPose;
  q: number[]; // rad
  contacts: boolean[]; // one per end-effector link
  reward: Record<string, number>;
  overruns: number;
  faults?: { filter: number; tracker: number };
}

export interface PongFrame {
  type: "pong";
  t: number;
}

export interface WarningFrame {
  type: "warning";
  message: string;
}

export interface ErrorFrame {
  type: "error";
  message: string;
  path?: string;
}

export type ServerFrame =
  | HelloFrame
  | StateFrame
  | PongFrame
  | WarningFrame
  | ErrorFrame;

export const PRESETS = ["stand", "squat", "lean", "step-in-place", "jump"] as const;
export type Preset = (typeof PRESETS)[number];

export interface CmdMessage {
  type: "cmd";
  mode: "velocity" | "preset" | "pose";
  t: number; // s, client clock, monotone per session
  vx?: number;
  preset?: Preset;
  pose?: Record<string, number>;
}

export interface PingMessage {
  type: "ping";
  t: number;
}

export type ClientMessage = CmdMessage | PingMessage;

export class WireError extends Error {}

const isNum = (v: unknown): v is number =>
  typeof v === "number" && Number.isFinite(v);

function asVec2(v: unknown, what: string): Vec2 {
  if (!Array.isArray(v) || v.length !== 2 || !isNum(v[0]) || !isNum(v[1])) {
    throw new WireError(`${what} must be [x, z]`);
  }
  return [v[0], v[1]];
}

function parseGeometry(g: unknown): Geometry {
  if (typeof g !== "object" || g === null) {
    throw new WireError("hello.geometry must be an object");
  }
  const obj = g as Record<string, unknown>;
  if (!Array.isArray(obj.links) || obj.links.length === 0) {
    throw new WireError("geometry.links must be a non-empty array");
  }
  const links = obj.links.map((raw, i): LinkGeometry => {
    const l = raw as Record<string, unknown>;
    if (typeof l.name !== "string" || !Number.isInteger(l.parent) ||
        !Number.isInteger(l.joint) || !isNum(l.length) ||
        !Array.isArray(l.contact_points)) {
      throw new WireError(`geometry.links[${i}] is malformed`);
    }
    return {
      name: l.name,
      parent: l.parent as number,
      joint: l.joint as number,
      anchor: asVec2(l.anchor, `links[${i}].anchor`),
      length: l.length,
      contact_points: l.contact_points.map((p, k) =>
        asVec2(p, `links[${i}].contact_points[${k}]`)),
    };
  });
  if (!Array.isArray(obj.ee_links) || !obj.ee_links.every(Number.isInteger)) {
    throw new WireError("geometry.ee_links must be integer indices");
  }
  if (!isNum(obj.standing_height) || obj.standing_height <= 0) {
    throw new WireError("geometry.standing_height must be > 0");
  }
  return {
    links,
    ee_links: obj.ee_links as number[],
    standing_height: obj.standing_height,
  };
}

/** Parse and structurally validate one server frame. Throws WireError. */
export function parseServerFrame(raw: string): ServerFrame {
  if (raw.length > MAX_MESSAGE_BYTES) {
    throw new WireError(`frame exceeds ${MAX_MESSAGE_BYTES} bytes`);
  }
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    throw new WireError("frame is not valid JSON");
  }
  if (typeof msg !== "object" || msg === null || Array.isArray(msg)) {
    throw new WireError("frame must be a JSON object");
  }
  const m = msg as Record<string, unknown>;
  switch (m.type) {
    case "hello": {
      if (typeof m.model !== "string") throw new WireError("hello.model");
      if (!Array.isArray(m.joints) ||
          !m.joints.every((j) => typeof j === "string")) {
        throw new WireError("hello.joints must be strings");
      }
      return {
        type: "hello",
        model: m.model,
        joints: m.joints as string[],
        geometry: parseGeometry(m.geometry),
      };
    }
    case "state": {
      const root = m.root as Record<string, unknown> | null;
      if (!isNum(m.t) || m.t < 0) throw new WireError("state.t");
      if (typeof root !== "object" || root === null ||
          !isNum(root.x) || !isNum(root.z) || !isNum(root.pitch)) {
        throw new WireError("state.root must be {x, z, pitch}");
      }
      if (!Array.isArray(m.q) || !m.q.every(isNum)) {
        throw new WireError("state.q must be numbers");
      }
      if (!Array.isArray(m.contacts) ||
          !m.contacts.every((c) => typeof c === "boolean")) {
        throw new WireError("state.contacts must be booleans");
      }
      if (typeof m.reward !== "object" || m.reward === null) {
        throw new WireError("state.reward must be an object");
      }
      if (!Number.isInteger(m.overruns) || (m.overruns as number) < 0) {
        throw new WireError("state.overruns");
      }
      const frame: StateFrame = {
        type: "state",
        t: m.t,
        root: { x: root.x as number, z: root.z as number, pitch: root.pitch as number },
        q: m.q as number[],
        contacts: m.contacts as boolean[],
        reward: m.reward as Record<string, number>,
        overruns: m.overruns as number,
      };
      if (m.faults !== undefined) {
        const f = m.faults as Record<string, unknown>;
        if (!Number.isInteger(f.filter) || !Number.isInteger(f.tracker)) {
          throw new WireError("state.faults");
        }
        frame.faults = { filter: f.filter as number, tracker: f.tracker as number };
      }
      return frame;
    }
    case "pong":
      if (!isNum(m.t)) throw new WireError("pong.t");
      return { type: "pong", t: m.t };
    case "warning":
      if (typeof m.message !== "string") throw new WireError("warning.message");
      return { type: "warning", message: m.message };
    case "error": {
      if (typeof m.message !== "string") throw new WireError("error.message");
      const out: ErrorFrame = { type: "error", message: m.message };
      if (m.path !== undefined) {
        if (typeof m.path !== "string") throw new WireError("error.path");
        out.path = m.path;
      }
      return out;
    }
    default:
      throw new WireError(`unknown frame type ${JSON.stringify(m.type)}`);
  }
}

/**
 * Check an outgoing message against the wire contract. The sender refuses
 * to transmit anything that fails here, so a UI bug surfaces locally
 * instead of as a server error frame.
 */
export function validateClientMessage(msg: ClientMessage): void {
  if (msg.type === "ping") {
    if (!isNum(msg.t)) throw new WireError("ping.t must be a number");
    return;
  }
  if (msg.type !== "cmd") {
    throw new WireError(`unknown client message type ${(msg as { type: string }).type}`);
  }
  if (!isNum(msg.t) || msg.t < 0) {
    throw new WireError("cmd.t must be a number >= 0");
  }
  switch (msg.mode) {
    case "velocity":
      if (!isNum(msg.vx)) throw new WireError("velocity cmd needs numeric vx");
      break;
    case "preset":
      if (!PRESETS.includes(msg.preset as Preset)) {
        throw new WireError(`preset must be one of ${PRESETS.join(", ")}`);
      }
      break;
    case "pose": {
      const pose = msg.pose;
      if (typeof pose !== "object" || pose === null ||
          Object.keys(pose).length === 0) {
        throw new WireError("pose cmd needs a non-empty {joint: rad} map");
      }
      for (const [k, v] of Object.entries(pose)) {
        if (!isNum(v)) throw new WireError(`pose[${k}] must be a number`);
      }
      break;
    }
    default:
      throw new WireError(`unknown cmd mode ${JSON.stringify(msg.mode)}`);
  }
  const raw = JSON.stringify(msg);
  if (raw.length > MAX_MESSAGE_BYTES) {
    throw new WireError(`cmd serializes to ${raw.length} bytes > ${MAX_MESSAGE_BYTES}`);
  }
}
