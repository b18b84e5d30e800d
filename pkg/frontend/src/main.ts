// Browser entry point: canvas + buttons wired to the session socket.

import { SessionClient } from "./client.js";
import { controlMessage } from "./messages.js";
import { InterventionInput } from "./input.js";
import { SceneRenderer } from "./renderer.js";
import { UiSessionView } from "./view.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

export function boot(): void {
  const canvas = byId<HTMLCanvasElement>("scene");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("no 2d context");
  const renderer = new SceneRenderer(ctx as any, {
    widthPx: canvas.width, heightPx: canvas.height,
  });
  const view = new UiSessionView(renderer);
  const url = `ws://${location.host}/session`;
  const client = new SessionClient(url);
  view.attach(client);
  const input = new InterventionInput(window as any,
    (raw) => client.send(raw));

  byId<HTMLButtonElement>("btn-train").onclick = () =>
    client.send(controlMessage("start"));
  byId<HTMLButtonElement>("btn-demo").onclick = () =>
    client.send(controlMessage("record_demo"));
  byId<HTMLButtonElement>("btn-pause").onclick = () =>
    client.send(controlMessage("pause"));
  byId<HTMLButtonElement>("btn-resume").onclick = () =>
    client.send(controlMessage("resume"));
  byId<HTMLButtonElement>("btn-stop").onclick = () =>
    client.send(controlMessage("stop"));

  const status = byId<HTMLSpanElement>("status");
  client.onConnState = (s) => {
    view.conn = s;
    status.textContent = s;
  };

  input.start();
  view.start();
  client.connect();
}

if (typeof document !== "undefined" && document.getElementById("scene")) {
  boot();
}
