/**
 * Client view model. Network callbacks push frames in; the render tick
 * pulls an interpolated pose out. Only monotone-time state frames are
 * accepted — a frame at or behind the newest one is dropped and counted,
 * never rendered, so an out-of-order burst cannot make the robot jump
 * backwards on screen.
 */

import type { HelloFrame, RootPose, StateFrame } from "./wire.js";

export type ConnectionStatus =
  | "connecting"
  | "connected"
  | "disconnected"
  | "protocol-error";

export interface RenderPose {
  t: number;
  root: RootPose;
  q: number[];
  contacts: boolean[]; // from the newest frame; booleans don't interpolate
}

export function lerpFrames(a: StateFrame, b: StateFrame, alpha: number): RenderPose {
  const w = Math.min(1, Math.max(0, alpha));
  const mix = (x: number, y: number) => x + (y - x) * w;
  return {
    t: mix(a.t, b.t),
    root: {
      x: mix(a.root.x, b.root.x),
      z: mix(a.root.z, b.root.z),
      pitch: mix(a.root.pitch, b.root.pitch),
    },
    q: a.q.map((qa, i) => mix(qa, b.q[i] ?? qa)),
    contacts: b.contacts,
  };
}

export class ViewState {
  hello: HelloFrame | null = null;
  status: ConnectionStatus = "connecting";
  banner = "";
  droppedFrames = 0;
  framesSeen = 0;
  pingMs: number | null = null;

  private prev: StateFrame | null = null;
  private latest: StateFrame | null = null;
  private latestArrivalMs = 0;
  private framePeriodMs = 40; // learned from inter-frame sim time

  get latestFrame(): StateFrame | null {
    return this.latest;
  }

  /** Returns false (and counts a drop) for non-monotone frames. */
  ingest(frame: StateFrame, nowMs: number): boolean {
    this.framesSeen += 1;
    if (this.latest !== null && frame.t <= this.latest.t) {
      this.droppedFrames += 1;
      return false;
    }
    if (this.latest !== null) {
      this.framePeriodMs = Math.max(1, (frame.t - this.latest.t) * 1000);
    }
    this.prev = this.latest;
    this.latest = frame;
    this.latestArrivalMs = nowMs;
    return true;
  }

  /**
   * Pose for the render tick: interpolates from the previous toward the
   * newest frame as wall time covers one stream period, then holds.
   */
  sample(nowMs: number): RenderPose | null {
    if (this.latest === null) return null;
    if (this.prev === null) return lerpFrames(this.latest, this.latest, 1);
    const alpha = (nowMs - this.latestArrivalMs) / this.framePeriodMs;
    return lerpFrames(this.prev, this.latest, alpha);
  }
}
