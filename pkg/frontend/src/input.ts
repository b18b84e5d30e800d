// Keyboard and pointer capture for intervention commands.
//
// Held keys map to normalized axes and are streamed at the control rate
// (10 Hz); releasing everything emits one zero command and stops the
// stream, so the outbound rate never exceeds the control rate.

import { interveneMessage } from "./messages.js";

export interface KeyEventLike {
  key: string;
  preventDefault?: () => void;
}

export interface EventTargetLike {
  addEventListener(type: string, cb: (ev: any) => void): void;
  removeEventListener(type: string, cb: (ev: any) => void): void;
}

export interface InputOptions {
  rateHz?: number;
  setInterval?: typeof setInterval;
  clearInterval?: typeof clearInterval;
}

const AXIS_KEYS: Record<string, [number, number, number]> = {
  ArrowLeft: [-1, 0, 0], a: [-1, 0, 0],
  ArrowRight: [1, 0, 0], d: [1, 0, 0],
  ArrowDown: [0, -1, 0], s: [0, -1, 0],
  ArrowUp: [0, 1, 0], w: [0, 1, 0],
  q: [0, 0, 1], e: [0, 0, -1],
};

export class InterventionInput {
  private held = new Set<string>();
  private timer: ReturnType<typeof setInterval> | null = null;
  private target: EventTargetLike;
  private send: (raw: string) => void;
  private rateMs: number;
  private setI: typeof setInterval;
  private clearI: typeof clearInterval;
  private onDown = (ev: KeyEventLike) => this.keyDown(ev);
  private onUp = (ev: KeyEventLike) => this.keyUp(ev);
  capturing = false;
  messagesSent = 0;

  constructor(target: EventTargetLike, send: (raw: string) => void,
              opts: InputOptions = {}) {
    this.target = target;
    this.send = send;
    this.rateMs = 1000 / (opts.rateHz ?? 10);
    this.setI = opts.setInterval ?? setInterval;
    this.clearI = opts.clearInterval ?? clearInterval;
  }

  start(): void {
    this.target.addEventListener("keydown", this.onDown);
    this.target.addEventListener("keyup", this.onUp);
  }

  stop(): void {
    this.target.removeEventListener("keydown", this.onDown);
    this.target.removeEventListener("keyup", this.onUp);
    this.stopStream(false);
    this.held.clear();
  }

  axes(): [number, number, number] {
    let dx = 0, dz = 0, dth = 0;
    for (const k of this.held) {
      const v = AXIS_KEYS[k];
      if (!v) continue;
      dx += v[0];
      dz += v[1];
      dth += v[2];
    }
    const clip = (v: number) => Math.max(-1, Math.min(1, v));
    return [clip(dx), clip(dz), clip(dth)];
  }

  private keyDown(ev: KeyEventLike): void {
    if (!(ev.key in AXIS_KEYS)) return;
    ev.preventDefault?.();
    this.held.add(ev.key);
    this.startStream();
  }

  private keyUp(ev: KeyEventLike): void {
    if (!(ev.key in AXIS_KEYS)) return;
    this.held.delete(ev.key);
    if (this.held.size === 0) this.stopStream(true);
  }

  private startStream(): void {
    if (this.timer !== null) return;
    this.capturing = true;
    this.emit(); // immediate first command, then steady cadence
    this.timer = this.setI(() => this.emit(), this.rateMs);
  }

  private stopStream(sendZero: boolean): void {
    if (this.timer !== null) {
      this.clearI(this.timer);
      this.timer = null;
    }
    if (sendZero && this.capturing) {
      this.send(interveneMessage(0, 0, 0));
      this.messagesSent++;
    }
    this.capturing = false;
  }

  private emit(): void {
    const [dx, dz, dth] = this.axes();
    this.send(interveneMessage(dx, dz, dth));
    this.messagesSent++;
  }
}
