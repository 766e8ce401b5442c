/**
 * Page wiring: WebSocket, command panel (slider / presets / keyboard),
 * camera drag and zoom, and the 60 fps render loop over the interpolated
 * view state. All protocol and geometry logic lives in the imported
 * modules; this file only connects them to the DOM.
 */

import { Camera, DEFAULT_CAMERA, panBy, zoomAt } from "./camera.js";
import { buildScene, drawScene } from "./render.js";
import { CommandSender } from "./sender.js";
import { ViewState } from "./view.js";
import { parseServerFrame, Preset, PRESETS, WireError } from "./wire.js";

const PING_INTERVAL_MS = 2000;
const RECONNECT_DELAY_MS = 1500;
const VX_STEP = 0.1;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

function defaultUrl(): string {
  const q = new URLSearchParams(location.search).get("ws");
  if (q !== null) return q;
  const host = location.hostname || "localhost";
  return `ws://${host}:8765`;
}

class App {
  readonly view = new ViewState();
  readonly sender = new CommandSender(() => performance.now(), {
    onDrop: () => this.setBanner("offline: command dropped", true),
  });
  cam: Camera = { ...DEFAULT_CAMERA };
  private ws: WebSocket | null = null;
  private vx = 0;
  private pingSentAt = 0;

  private readonly canvas = el<HTMLCanvasElement>("scene");
  private readonly ctx = this.canvas.getContext("2d")!;
  private readonly banner = el<HTMLDivElement>("banner");
  private readonly slider = el<HTMLInputElement>("vx");
  private readonly vxLabel = el<HTMLSpanElement>("vx-label");
  private readonly telemetry = el<HTMLDivElement>("telemetry");

  start(): void {
    this.cam = { ...DEFAULT_CAMERA, width: this.canvas.width, height: this.canvas.height };
    this.bindPanel();
    this.bindCamera();
    this.connect(defaultUrl());
    setInterval(() => {
      if (this.sender.connected) {
        this.pingSentAt = performance.now();
        this.sender.ping();
      }
    }, PING_INTERVAL_MS);
    const tick = () => {
      this.render();
      requestAnimationFrame(tick);
    };
    requestAnimationFrame(tick);
  }

  private setBanner(text: string, transientError = false): void {
    this.view.banner = text;
    this.banner.textContent = text;
    this.banner.dataset.kind = transientError ? "error" : "info";
    if (transientError) {
      setTimeout(() => {
        if (this.banner.textContent === text) this.banner.textContent = "";
      }, 4000);
    }
  }

  private connect(url: string): void {
    this.view.status = "connecting";
    this.setBanner(`connecting to ${url} ...`);
    const ws = new WebSocket(url);
    this.ws = ws;
    ws.onopen = () => {
      this.view.status = "connected";
      this.setBanner("");
      this.sender.setTransport((raw) => ws.send(raw));
    };
    ws.onmessage = (ev) => this.onFrame(String(ev.data));
    ws.onclose = () => {
      this.view.status = "disconnected";
      this.sender.setTransport(null);
      this.setBanner("disconnected, retrying ...");
      setTimeout(() => this.connect(url), RECONNECT_DELAY_MS);
    };
    ws.onerror = () => ws.close();
  }

  private onFrame(raw: string): void {
    let frame;
    try {
      frame = parseServerFrame(raw);
    } catch (e) {
      if (e instanceof WireError) {
        this.view.status = "protocol-error";
        this.setBanner(`protocol error: ${e.message}`, true);
        return; // drop the frame, keep the session
      }
      throw e;
    }
    switch (frame.type) {
      case "hello":
        this.view.hello = frame;
        this.setBanner(`model ${frame.model} (${frame.joints.length} joints)`);
        break;
      case "state":
        this.view.ingest(frame, performance.now());
        break;
      case "pong":
        this.view.pingMs = performance.now() - this.pingSentAt;
        break;
      case "warning":
        this.setBanner(`server: ${frame.message}`, true);
        break;
      case "error":
        this.setBanner(
          `server rejected message: ${frame.message}` +
            (frame.path !== undefined ? ` (${frame.path})` : ""),
          true,
        );
        break;
    }
  }

  private setVelocity(vx: number): void {
    this.vx = Math.round(vx * 100) / 100;
    this.slider.value = String(this.vx);
    this.vxLabel.textContent = `${this.vx.toFixed(2)} m/s`;
    this.sender.velocity(this.vx);
  }

  private bindPanel(): void {
    this.slider.oninput = () => this.setVelocity(Number(this.slider.value));
    const presetsDiv = el<HTMLDivElement>("presets");
    for (const preset of PRESETS) {
      const btn = document.createElement("button");
      btn.textContent = preset;
      btn.onclick = () => this.sender.preset(preset as Preset);
      presetsDiv.appendChild(btn);
    }
    window.addEventListener("keydown", (ev) => {
      if (ev.repeat && ev.key !== "ArrowLeft" && ev.key !== "ArrowRight") return;
      switch (ev.key) {
        case "ArrowRight":
          this.setVelocity(this.vx + VX_STEP);
          break;
        case "ArrowLeft":
          this.setVelocity(this.vx - VX_STEP);
          break;
        case " ":
          this.vx = 0;
          this.slider.value = "0";
          this.vxLabel.textContent = "0.00 m/s";
          this.sender.preset("stand");
          ev.preventDefault();
          break;
        case "s":
          this.sender.preset("squat");
          break;
        case "j":
          this.sender.preset("jump");
          break;
      }
    });
  }

  private bindCamera(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.canvas.onmousedown = (ev) => {
      dragging = true;
      lastX = ev.offsetX;
      lastY = ev.offsetY;
    };
    window.addEventListener("mouseup", () => (dragging = false));
    this.canvas.onmousemove = (ev) => {
      if (!dragging) return;
      this.cam = panBy(this.cam, ev.offsetX - lastX, ev.offsetY - lastY);
      lastX = ev.offsetX;
      lastY = ev.offsetY;
    };
    this.canvas.onwheel = (ev) => {
      ev.preventDefault();
      const factor = ev.deltaY < 0 ? 1.1 : 1 / 1.1;
      this.cam = zoomAt(this.cam, factor, [ev.offsetX, ev.offsetY]);
    };
  }

  private render(): void {
    const pose = this.view.sample(performance.now());
    const hello = this.view.hello;
    if (pose === null || hello === null) {
      this.ctx.fillStyle = "#10141a";
      this.ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
      return;
    }
    drawScene(this.ctx, buildScene(hello.geometry, pose, this.cam));
    const latest = this.view.latestFrame;
    const lines = [
      `status ${this.view.status}`,
      `sim t ${pose.t.toFixed(2)} s`,
      `reward ${latest?.reward["total"]?.toFixed(3) ?? "-"}`,
      `overruns ${latest?.overruns ?? 0}`,
      `faults filter ${latest?.faults?.filter ?? 0} / tracker ${latest?.faults?.tracker ?? 0}`,
      `frames ${this.view.framesSeen} (dropped ${this.view.droppedFrames})`,
      `ping ${this.view.pingMs === null ? "-" : this.view.pingMs.toFixed(0) + " ms"}`,
    ];
    this.telemetry.textContent = lines.join("\n");
  }
}

new App().start();
