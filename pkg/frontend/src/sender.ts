/**
 * Rate-limited command sender. Operator input can arrive per keydown or
 * per slider tick; the wire contract caps clients at 20 messages a second,
 * so bursts coalesce (latest command wins) and flush on the trailing edge
 * of the 50 ms window. While disconnected, the newest command is held for
 * up to one second awaiting reconnect, then dropped with a notice.
 */

import {
  CmdMessage,
  PingMessage,
  Preset,
  validateClientMessage,
} from "./wire.js";

export const MIN_SEND_INTERVAL_MS = 50; // 20 msg/s cap
export const DISCONNECT_HOLD_MS = 1000;

type Transport = (raw: string) => void;
type Clock = () => number;

export interface SenderHooks {
  /** A held command was dropped after DISCONNECT_HOLD_MS offline. */
  onDrop?: (msg: CmdMessage) => void;
}

export class CommandSender {
  private transport: Transport | null = null;
  private lastSentMs = -Infinity;
  private pending: CmdMessage | null = null;
  private pendingSinceMs = 0;
  private flushTimer: ReturnType<typeof setTimeout> | null = null;
  private lastCmdT = -1;
  sent = 0;

  constructor(
    private readonly now: Clock,
    private readonly hooks: SenderHooks = {},
  ) {}

  /** Attach a live socket send function (null on disconnect). */
  setTransport(transport: Transport | null): void {
    this.transport = transport;
    if (transport !== null) this.tryFlush();
  }

  get connected(): boolean {
    return this.transport !== null;
  }

  /** Timestamp in seconds, strictly monotone so the server never sees
   * two commands it could order either way. */
  private stamp(): number {
    const t = Math.max(this.now() / 1000, this.lastCmdT + 1e-6);
    this.lastCmdT = t;
    return t;
  }

  velocity(vx: number): void {
    this.submit({ type: "cmd", mode: "velocity", vx, t: this.stamp() });
  }

  preset(preset: Preset): void {
    this.submit({ type: "cmd", mode: "preset", preset, t: this.stamp() });
  }

  pose(pose: Record<string, number>): void {
    this.submit({ type: "cmd", mode: "pose", pose, t: this.stamp() });
  }

  /** Pings bypass coalescing (they measure latency) but not validation. */
  ping(): void {
    const msg: PingMessage = { type: "ping", t: this.now() };
    validateClientMessage(msg);
    this.transport?.(JSON.stringify(msg));
  }

  private submit(msg: CmdMessage): void {
    validateClientMessage(msg); // throw here, not on the server
    if (this.pending === null) this.pendingSinceMs = this.now();
    this.pending = msg;
    this.tryFlush();
  }

  private tryFlush(): void {
    if (this.pending === null) return;
    const now = this.now();
    if (this.transport === null) {
      if (now - this.pendingSinceMs >= DISCONNECT_HOLD_MS) {
        const dropped = this.pending;
        this.pending = null;
        this.hooks.onDrop?.(dropped);
      } else {
        this.scheduleFlush(DISCONNECT_HOLD_MS - (now - this.pendingSinceMs));
      }
      return;
    }
    const wait = this.lastSentMs + MIN_SEND_INTERVAL_MS - now;
    if (wait > 0) {
      this.scheduleFlush(wait);
      return;
    }
    const msg = this.pending;
    this.pending = null;
    this.lastSentMs = now;
    this.sent += 1;
    this.transport(JSON.stringify(msg));
  }

  private scheduleFlush(delayMs: number): void {
    if (this.flushTimer !== null) return;
    this.flushTimer = setTimeout(() => {
      this.flushTimer = null;
      this.tryFlush();
    }, Math.max(1, Math.ceil(delayMs)));
  }
}
