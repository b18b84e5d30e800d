import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { InterventionInput } from "../src/input.js";

class FakeTarget {
  handlers = new Map<string, ((ev: any) => void)[]>();
  addEventListener(type: string, cb: (ev: any) => void) {
    this.handlers.set(type, [...(this.handlers.get(type) ?? []), cb]);
  }
  removeEventListener(type: string, cb: (ev: any) => void) {
    this.handlers.set(type,
      (this.handlers.get(type) ?? []).filter((h) => h !== cb));
  }
  fire(type: string, key: string) {
    for (const h of this.handlers.get(type) ?? []) h({ key });
  }
}

describe("InterventionInput", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  function setup() {
    const target = new FakeTarget();
    const sent: any[] = [];
    const input = new InterventionInput(target,
      (raw) => sent.push(JSON.parse(raw)));
    input.start();
    return { target, sent, input };
  }

  it("streams dz=-1 at 10 Hz while the down key is held", () => {
    const { target, sent } = setup();
    target.fire("keydown", "ArrowDown");
    vi.advanceTimersByTime(1000);
    // immediate command plus one per 100 ms
    expect(sent.length).toBe(11);
    for (const m of sent) {
      expect(m).toEqual({ type: "intervene", dx: 0, dz: -1, dtheta: 0 });
    }
  });

  it("sends nothing when no keys are held", () => {
    const { sent } = setup();
    vi.advanceTimersByTime(2000);
    expect(sent.length).toBe(0);
  });

  it("release emits one zero command and stops the stream", () => {
    const { target, sent } = setup();
    target.fire("keydown", "ArrowDown");
    vi.advanceTimersByTime(250);
    target.fire("keyup", "ArrowDown");
    const afterRelease = sent.length;
    expect(sent[afterRelease - 1])
      .toEqual({ type: "intervene", dx: 0, dz: 0, dtheta: 0 });
    vi.advanceTimersByTime(1000);
    expect(sent.length).toBe(afterRelease); // silence after capture ends
  });

  it("combines simultaneous axes in a single message", () => {
    const { target, sent } = setup();
    target.fire("keydown", "ArrowLeft");
    target.fire("keydown", "q");
    vi.advanceTimersByTime(100);
    const last = sent[sent.length - 1];
    expect(last.dx).toBe(-1);
    expect(last.dtheta).toBe(1);
  });

  it("caps the outbound rate at the control rate", () => {
    const { target, sent } = setup();
    target.fire("keydown", "a");
    // key repeat storms must not multiply the stream
    for (let i = 0; i < 50; i++) target.fire("keydown", "a");
    vi.advanceTimersByTime(1000);
    expect(sent.length).toBeLessThanOrEqual(12);
  });

  it("stop() detaches listeners without emitting zeros", () => {
    const { target, sent, input } = setup();
    input.stop();
    target.fire("keydown", "ArrowDown");
    vi.advanceTimersByTime(500);
    expect(sent.length).toBe(0);
  });
});
