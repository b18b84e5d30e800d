import { describe, expect, it } from "vitest";
import { SceneRenderer } from "../src/renderer.js";
import { RecordingCtx, stateFixture } from "./fakes.js";

function makeRenderer() {
  const ctx = new RecordingCtx();
  const r = new SceneRenderer(ctx, { widthPx: 720, heightPx: 480 });
  return { ctx, r };
}

describe("SceneRenderer", () => {
  it("draws a placeholder when nothing has arrived", () => {
    const { ctx, r } = makeRenderer();
    r.renderPlaceholder("no connection");
    expect(ctx.ops.some((o) => o.startsWith("text(no connection"))).toBe(true);
    expect(r.framesRendered).toBe(1);
  });

  it("draws socket walls, peg and stats from one state message", () => {
    const { ctx, r } = makeRenderer();
    r.render(stateFixture(10));
    expect(ctx.ops.filter((o) => o === "fill").length).toBeGreaterThanOrEqual(2);
    expect(ctx.ops.some((o) => o.startsWith("rotate"))).toBe(true);
    expect(ctx.ops.some((o) => o.includes("peg_medium"))).toBe(true);
  });

  it("marks success with a badge and recolors the peg", () => {
    const { ctx, r } = makeRenderer();
    r.render(stateFixture(99, { done: true }));
    expect(ctx.ops.some((o) => o.startsWith("text(SUCCESS"))).toBe(true);
    expect(ctx.ops.some((o) => o.includes("#67d978"))).toBe(true);
  });

  it("seated peg is drawn inside the socket cavity", () => {
    const { ctx, r } = makeRenderer();
    // tip at 96% depth, centered; the peg rect must start below the mouth
    const seated = stateFixture(0, { pose: [0.0, 0.1 - 0.024, 0.0] });
    r.render(seated);
    const translate = ctx.ops.find((o) => o.startsWith("translate"));
    expect(translate).toBeDefined();
    const [, y] = translate!.match(/translate\(([-\d.]+),([-\d.]+)\)/)!
      .slice(1, 3).map(Number) as [number, number];
    // mouth plane for this geometry maps to heightPx*0.62; deeper is larger y
    expect(y).toBeGreaterThan(480 * 0.62);
  });

  it("renders the policy camera thumbnail pixel grid when present", () => {
    const { ctx, r } = makeRenderer();
    const bin = "P5 2 2 255\n" + String.fromCharCode(1, 2, 3, 4);
    r.render(stateFixture(5, { image_pgm_b64: btoa(bin) }));
    expect(ctx.ops.some((o) => o.includes("rgb(3,3,3)"))).toBe(true);
    expect(ctx.ops.some((o) => o.startsWith("strokeRect"))).toBe(true);
  });

  it("keeps a frame counter and last version", () => {
    const { r } = makeRenderer();
    r.render(stateFixture(0));
    r.render(stateFixture(1));
    expect(r.framesRendered).toBe(2);
    expect(r.lastVersion).toBe(2);
  });
});
