// View model: the single place incoming messages mutate UI state. Renders
// the newest state at a fixed cadence (>= 5 Hz); physics is never
// extrapolated, so a reconnect mid-episode resumes with identical frames.

import { ConnState, SessionClient } from "./client.js";
import { Incoming, StateMessage } from "./messages.js";
import { SceneRenderer } from "./renderer.js";

export interface ViewOptions {
  fps?: number;
  setInterval?: typeof setInterval;
  clearInterval?: typeof clearInterval;
}

export class UiSessionView {
  latest: StateMessage | null = null;
  lastError = "";
  lastAck = "";
  conn: ConnState = "closed";
  captureMode = false;
  private renderer: SceneRenderer;
  private timer: ReturnType<typeof setInterval> | null = null;
  private fpsMs: number;
  private setI: typeof setInterval;
  private clearI: typeof clearInterval;
  renderedVersion = -1;

  constructor(renderer: SceneRenderer, opts: ViewOptions = {}) {
    this.renderer = renderer;
    this.fpsMs = 1000 / (opts.fps ?? 10); // rendering at 10 Hz >= 5 Hz floor
    this.setI = opts.setInterval ?? setInterval;
    this.clearI = opts.clearInterval ?? clearInterval;
  }

  attach(client: SessionClient): void {
    client.onMessage = (m) => this.apply(m);
    client.onConnState = (s) => {
      this.conn = s;
    };
  }

  apply(msg: Incoming): void {
    if (msg.type === "state") {
      if (this.latest === null || msg.version >= this.latest.version) {
        this.latest = msg;
      }
    } else if (msg.type === "error") {
      this.lastError = msg.message;
    } else if (msg.type === "ack") {
      this.lastAck = msg.cmd;
    }
  }

  start(): void {
    if (this.timer !== null) return;
    this.timer = this.setI(() => this.tick(), this.fpsMs);
  }

  stop(): void {
    if (this.timer !== null) {
      this.clearI(this.timer);
      this.timer = null;
    }
  }

  tick(): void {
    if (this.latest === null || this.conn !== "open") {
      this.renderer.renderPlaceholder(
        this.conn === "open" ? "waiting for state..." :
          `disconnected - retrying (${this.conn})`);
      return;
    }
    this.renderer.render(this.latest);
    this.renderedVersion = this.latest.version;
  }

  // Drain a prerecorded message list through the same path the socket uses;
  // returns frames rendered. Used by tests and the demo playback mode.
  playback(messages: Incoming[], perFrame = true): number {
    const before = this.renderer.framesRendered;
    this.conn = "open";
    for (const m of messages) {
      this.apply(m);
      if (perFrame) this.tick();
    }
    return this.renderer.framesRendered - before;
  }
}
