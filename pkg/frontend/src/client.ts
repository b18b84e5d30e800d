// WebSocket session client with auto-reconnect. The UI is stateless with
// respect to physics: everything rendered comes from the latest state
// message, so dropping and re-establishing the socket changes nothing but
// the connection badge.

import { Incoming, parseMessage } from "./messages.js";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export interface ClientOptions {
  makeSocket?: (url: string) => WebSocketLike;
  reconnectMs?: number;
  setTimeout?: typeof setTimeout;
}

export type ConnState = "connecting" | "open" | "closed";

export class SessionClient {
  url: string;
  state: ConnState = "closed";
  onMessage: ((msg: Incoming) => void) | null = null;
  onConnState: ((s: ConnState) => void) | null = null;
  private makeSocket: (url: string) => WebSocketLike;
  private reconnectMs: number;
  private setT: typeof setTimeout;
  private ws: WebSocketLike | null = null;
  private closedByUser = false;

  constructor(url: string, opts: ClientOptions = {}) {
    this.url = url;
    this.makeSocket = opts.makeSocket ??
      ((u: string) => new WebSocket(u) as unknown as WebSocketLike);
    this.reconnectMs = opts.reconnectMs ?? 1000;
    this.setT = opts.setTimeout ?? setTimeout;
  }

  connect(): void {
    this.closedByUser = false;
    this.setState("connecting");
    const ws = this.makeSocket(this.url);
    this.ws = ws;
    ws.onopen = () => this.setState("open");
    ws.onmessage = (ev) => {
      const msg = parseMessage(ev.data);
      if (msg && this.onMessage) this.onMessage(msg);
    };
    ws.onclose = () => {
      this.setState("closed");
      if (!this.closedByUser) {
        this.setT(() => this.connect(), this.reconnectMs);
      }
    };
    ws.onerror = () => { /* onclose follows */ };
  }

  send(raw: string): void {
    if (this.state === "open" && this.ws) this.ws.send(raw);
  }

  close(): void {
    this.closedByUser = true;
    this.ws?.close();
  }

  private setState(s: ConnState): void {
    this.state = s;
    this.onConnState?.(s);
  }
}
