// 2D canvas scene renderer. Draws crisp geometry from the state stream (the
// low-res policy camera is shown separately as a thumbnail), so the operator
// can see exactly where the peg is. Never extrapolates: one message, one
// frame.

import { StateMessage, TaskGeometry, decodePgm } from "./messages.js";

// The slice of CanvasRenderingContext2D we use; tests supply a recording
// fake, the browser supplies the real thing.
export interface Draw2D {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  save(): void;
  restore(): void;
  translate(x: number, y: number): void;
  rotate(r: number): void;
  fillText(text: string, x: number, y: number): void;
}

export interface RendererOptions {
  widthPx: number;
  heightPx: number;
  viewHalfWidthM?: number; // world meters shown left/right of the frame
}

const COLORS = {
  background: "#10141a",
  socket: "#5a6b7d",
  peg: "#e8b44c",
  pegDone: "#67d978",
  text: "#dce3ea",
  gaugeBack: "#2a3340",
  gauge: "#d9594c",
  placeholder: "#39424e",
};

export class SceneRenderer {
  private ctx: Draw2D;
  private w: number;
  private h: number;
  private halfW: number;
  framesRendered = 0;
  lastVersion = -1;

  constructor(ctx: Draw2D, opts: RendererOptions) {
    this.ctx = ctx;
    this.w = opts.widthPx;
    this.h = opts.heightPx;
    this.halfW = opts.viewHalfWidthM ?? 0.07;
  }

  // World (meters, frame-centered) -> pixels. z up becomes y down.
  private toPx(geom: TaskGeometry, x: number, z: number): [number, number] {
    const scale = this.w / (2 * this.halfW);
    const [fx, fz] = geom.frame;
    return [
      this.w / 2 + (x - fx) * scale,
      this.h * 0.62 - (z - fz) * scale,
    ];
  }

  renderPlaceholder(note: string): void {
    const c = this.ctx;
    c.fillStyle = COLORS.background;
    c.fillRect(0, 0, this.w, this.h);
    c.fillStyle = COLORS.placeholder;
    c.fillRect(0, this.h * 0.62, this.w, this.h * 0.38);
    c.fillStyle = COLORS.text;
    c.font = "14px monospace";
    c.fillText(note, 12, 24);
    this.framesRendered++;
  }

  render(msg: StateMessage): void {
    const c = this.ctx;
    c.fillStyle = COLORS.background;
    c.fillRect(0, 0, this.w, this.h);
    const geom = msg.task_geometry;
    if (geom) {
      this.drawSocket(geom);
      this.drawPeg(geom, msg.pose, msg.done);
    }
    this.drawWrenchGauge(msg.wrench);
    this.drawStats(msg);
    this.drawThumbnail(msg.image_pgm_b64);
    this.framesRendered++;
    this.lastVersion = msg.version;
  }

  private drawSocket(g: TaskGeometry): void {
    const c = this.ctx;
    const [fx, fz] = g.frame;
    const w2 = g.socket_width / 2;
    const ch = g.chamfer;
    const depth = g.socket_depth;
    const far = this.halfW;
    c.fillStyle = COLORS.socket;
    // left wall with chamfer, as one polygon
    c.beginPath();
    this.path(g, [
      [fx - far, fz],
      [fx - w2 - ch, fz],
      [fx - w2, fz - ch],
      [fx - w2, fz - depth],
      [fx - far, fz - depth],
    ]);
    c.closePath();
    c.fill();
    // right wall mirrored
    c.beginPath();
    this.path(g, [
      [fx + far, fz],
      [fx + w2 + ch, fz],
      [fx + w2, fz - ch],
      [fx + w2, fz - depth],
      [fx + far, fz - depth],
    ]);
    c.closePath();
    c.fill();
    // floor slab
    const [x0, y0] = this.toPx(g, fx - far, fz - depth);
    const [x1, y1] = this.toPx(g, fx + far, fz - depth - 0.01);
    c.fillRect(x0, y0, x1 - x0, y1 - y0);
  }

  private path(g: TaskGeometry, pts: [number, number][]): void {
    const c = this.ctx;
    pts.forEach(([x, z], i) => {
      const [px, py] = this.toPx(g, x, z);
      if (i === 0) c.moveTo(px, py);
      else c.lineTo(px, py);
    });
  }

  private drawPeg(
    g: TaskGeometry, pose: [number, number, number], done: boolean,
  ): void {
    const c = this.ctx;
    const [x, z, theta] = pose;
    const [px, py] = this.toPx(g, x, z);
    const scale = this.w / (2 * this.halfW);
    c.save();
    c.translate(px, py);
    c.rotate(-theta); // screen y is flipped
    c.fillStyle = done ? COLORS.pegDone : COLORS.peg;
    const wPx = g.peg_width * scale;
    const hPx = g.peg_height * scale;
    const offPx = g.asymmetry_offset * scale;
    c.fillRect(offPx - wPx / 2, -hPx, wPx, hPx);
    c.restore();
  }

  private drawWrenchGauge(wrench: [number, number, number]): void {
    const c = this.ctx;
    const mag = Math.hypot(wrench[0], wrench[1]);
    const frac = Math.min(1, mag / 40);
    c.fillStyle = COLORS.gaugeBack;
    c.fillRect(12, this.h - 26, 120, 12);
    c.fillStyle = COLORS.gauge;
    c.fillRect(12, this.h - 26, 120 * frac, 12);
    c.fillStyle = COLORS.text;
    c.font = "11px monospace";
    c.fillText(`|F| ${mag.toFixed(1)} N`, 140, this.h - 16);
  }

  private drawStats(msg: StateMessage): void {
    const c = this.ctx;
    c.fillStyle = COLORS.text;
    c.font = "13px monospace";
    c.fillText(
      `${msg.task}  ep ${msg.episodes}  step ${msg.step}  ` +
      `ok ${msg.successes}  D_P ${msg.buffer_policy}  D_H ${msg.buffer_human}`,
      12, 20,
    );
    if (msg.done) {
      c.fillStyle = COLORS.pegDone;
      c.fillText("SUCCESS", 12, 40);
    }
  }

  // What the policy actually sees, pixel by pixel in a corner.
  private drawThumbnail(b64: string): void {
    const img = decodePgm(b64);
    if (!img) return;
    const c = this.ctx;
    const cell = 2;
    const x0 = this.w - img.width * cell - 12;
    const y0 = 12;
    for (let v = 0; v < img.height; v++) {
      for (let u = 0; u < img.width; u++) {
        const g = img.gray[v * img.width + u];
        c.fillStyle = `rgb(${g},${g},${g})`;
        c.fillRect(x0 + u * cell, y0 + v * cell, cell, cell);
      }
    }
    c.strokeStyle = COLORS.text;
    c.lineWidth = 1;
    c.strokeRect(x0, y0, img.width * cell, img.height * cell);
  }
}
