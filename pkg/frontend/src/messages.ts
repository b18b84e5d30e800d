// Wire protocol: JSON messages over the /session WebSocket.

export interface TaskGeometry {
  frame: [number, number, number];
  socket_width: number;
  peg_width: number;
  socket_depth: number;
  chamfer: number;
  asymmetry_offset: number;
  peg_height: number;
}

export interface StateMessage {
  type: "state";
  mode: string;
  task: string;
  episode: number;
  step: number;
  env_steps: number;
  pose: [number, number, number];
  twist: [number, number, number];
  wrench: [number, number, number];
  buffer_policy: number;
  buffer_human: number;
  successes: number;
  episodes: number;
  done: boolean;
  image_pgm_b64: string;
  task_geometry?: TaskGeometry;
  version: number;
}

export interface AckMessage {
  type: "ack";
  cmd: string;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type Incoming = StateMessage | AckMessage | ErrorMessage;

function isTriple(v: unknown): v is [number, number, number] {
  return Array.isArray(v) && v.length === 3 &&
    v.every((x) => typeof x === "number" && isFinite(x));
}

// Parse one raw frame; anything that is not a well-formed known message
// yields null so a glitchy server can never corrupt the view.
export function parseMessage(raw: string): Incoming | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const m = obj as Record<string, unknown>;
  if (m.type === "ack" && typeof m.cmd === "string") {
    return { type: "ack", cmd: m.cmd };
  }
  if (m.type === "error" && typeof m.message === "string") {
    return { type: "error", message: m.message };
  }
  if (m.type === "state") {
    if (!isTriple(m.pose) || !isTriple(m.twist) || !isTriple(m.wrench)) {
      return null;
    }
    if (typeof m.version !== "number" || typeof m.step !== "number") {
      return null;
    }
    return m as unknown as StateMessage;
  }
  return null;
}

export function interveneMessage(dx: number, dz: number, dtheta: number) {
  const clip = (v: number) => Math.max(-1, Math.min(1, v));
  return JSON.stringify({
    type: "intervene", dx: clip(dx), dz: clip(dz), dtheta: clip(dtheta),
  });
}

export function controlMessage(
  kind: "start" | "pause" | "resume" | "record_demo" | "stop",
  task?: string,
) {
  return JSON.stringify(task ? { type: kind, task } : { type: kind });
}

// Decode a base64 "P5 w h 255\n" PGM into grayscale bytes.
export function decodePgm(
  b64: string,
): { width: number; height: number; gray: Uint8Array } | null {
  if (!b64) return null;
  let bin: string;
  try {
    bin = atob(b64);
  } catch {
    return null;
  }
  const header = bin.slice(0, bin.indexOf("\n") + 1);
  const parts = header.trim().split(/\s+/);
  if (parts[0] !== "P5" || parts.length < 4) return null;
  const width = parseInt(parts[1], 10);
  const height = parseInt(parts[2], 10);
  const data = bin.slice(header.length);
  if (data.length < width * height) return null;
  const gray = new Uint8Array(width * height);
  for (let i = 0; i < gray.length; i++) gray[i] = data.charCodeAt(i);
  return { width, height, gray };
}
