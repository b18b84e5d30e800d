"""Live session server: one WebSocket client drives and observes training.

The training loop runs in a worker thread; the socket handler exchanges JSON
messages with a single UI client. Human axis commands land in a one-shot
cell that the rollout reads at most once per environment step, so a stale
command never outlives one control period.
"""

from __future__ import annotations

import asyncio
import base64
import io
import json
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .distill import ACT_DIM, make_buffers
from .oracle import OracleParams
from .replay import SOURCE_HUMAN, SOURCE_POLICY, Transition, sample_symmetric
from .rollout import InsertionEnv, PROPRIO_DIM, task_schedule
from .sac import TrainConfig, make_agent, sac_update
from .sim import EnvConfig, SceneImage, make_task_set, write_pgm


class InteractiveSource:
    """Intervention source fed by the socket: last-writer-wins within a
    step, and each command is consumed by at most one env step."""

    kind = "interactive"

    def __init__(self):
        self._lock = threading.Lock()
        self._cmd = None

    def submit(self, dx: float, dz: float, dtheta: float):
        with self._lock:
            self._cmd = np.clip(np.array([dx, dz, dtheta], dtype=np.float64),
                                -1.0, 1.0)

    def begin_episode(self, max_steps: int):
        with self._lock:
            self._cmd = None

    def take(self):
        with self._lock:
            cmd, self._cmd = self._cmd, None
            return cmd

    def override(self, env, obs_t, obs_s, action):
        return self.take()


def _pgm_b64(img: SceneImage) -> str:
    buf = io.BytesIO()
    h, w = img.pixels.shape
    data = (np.clip(img.pixels, 0.0, 1.0) * 255).astype(np.uint8)
    buf.write(f"P5 {w} {h} 255\n".encode())
    buf.write(data.tobytes())
    return base64.b64encode(buf.getvalue()).decode()


@dataclass
class SessionState:
    mode: str = "idle"  # idle | training | demo_recording | paused
    task_id: str = ""
    episode: int = 0
    step: int = 0
    env_steps: int = 0
    buffer_policy: int = 0
    buffer_human: int = 0
    successes: int = 0
    episodes_done: int = 0
    pose: tuple = (0.0, 0.0, 0.0)
    twist: tuple = (0.0, 0.0, 0.0)
    wrench: tuple = (0.0, 0.0, 0.0)
    done: bool = False
    image_b64: str = ""
    version: int = 0
    task_geometry: dict = field(default_factory=dict)


class Session:
    """One training session driven over the wire.

    The worker thread steps the environment and learner; snapshots are
    published under a lock after every step.
    """

    def __init__(self, cfg: EnvConfig | None = None,
                 tcfg: TrainConfig | None = None, tasks=None,
                 realtime: bool = False, image_every: int = 2,
                 updates_enabled: bool = True):
        self.cfg = cfg or EnvConfig()
        self.tcfg = tcfg or TrainConfig(hidden=(32, 32), batch_size=128,
                                        warmup_steps=0)
        train_tasks, _ = make_task_set() if tasks is None else (tasks, None)
        self.tasks = train_tasks if tasks is None else tasks
        self.realtime = realtime
        self.image_every = max(1, image_every)
        self.updates_enabled = updates_enabled
        self.source = InteractiveSource()
        self.buffers = make_buffers(self.cfg)
        self.rng = np.random.default_rng(self.tcfg.seed)
        self.agent = make_agent("student", PROPRIO_DIM, ACT_DIM, self.tcfg,
                                self.rng)
        self._lock = threading.Lock()
        self._snapshot = SessionState()
        self._mode = "idle"
        self._stop = threading.Event()
        self._thread = None

    # -- control surface ---------------------------------------------------

    def start(self, mode: str = "training", task_id: str | None = None):
        if mode not in ("training", "demo_recording"):
            raise ValueError(f"cannot start mode {mode!r}")
        if task_id is not None:
            if task_id not in {t.id for t in self.tasks}:
                raise ValueError(f"unknown task {task_id!r}")
            self._task_filter = task_id
        else:
            self._task_filter = None
        with self._lock:
            self._mode = mode
        if self._thread is None or not self._thread.is_alive():
            self._stop.clear()
            self._thread = threading.Thread(target=self._run, daemon=True)
            self._thread.start()

    def pause(self):
        with self._lock:
            if self._mode in ("training", "demo_recording"):
                self._prev_mode = self._mode
                self._mode = "paused"

    def resume(self):
        with self._lock:
            if self._mode == "paused":
                self._mode = getattr(self, "_prev_mode", "training")

    def stop(self):
        self._stop.set()
        with self._lock:
            self._mode = "idle"
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def mode(self) -> str:
        with self._lock:
            return self._mode

    def snapshot(self) -> SessionState:
        with self._lock:
            return SessionState(**vars(self._snapshot))

    # -- worker ------------------------------------------------------------

    def _publish(self, env: InsertionEnv, episode: int, step: int,
                 env_steps: int, successes: int, episodes_done: int,
                 done: bool, with_image: bool):
        st = env.state
        task = env.task
        snap = SessionState(
            mode=self.mode(), task_id=task.id, episode=episode,
            step=step, env_steps=env_steps,
            buffer_policy=self.buffers.policy_size,
            buffer_human=self.buffers.human_size,
            successes=successes, episodes_done=episodes_done,
            pose=(st.ee_pose.x, st.ee_pose.z, st.ee_pose.theta),
            twist=(st.ee_twist.vx, st.ee_twist.vz, st.ee_twist.omega),
            wrench=(st.last_wrench.fx, st.last_wrench.fz, st.last_wrench.tau),
            done=done,
            task_geometry={
                "frame": [task.task_frame.x, task.task_frame.z,
                          task.task_frame.theta],
                "socket_width": task.socket_width,
                "peg_width": task.peg_width,
                "socket_depth": task.socket_depth,
                "chamfer": task.chamfer,
                "asymmetry_offset": task.asymmetry_offset,
                "peg_height": self.cfg.peg_height,
            })
        if with_image:
            from .sim import render, NO_DISTURBANCE
            snap.image_b64 = _pgm_b64(render(st, NO_DISTURBANCE, self.cfg))
        with self._lock:
            snap.mode = self._mode
            snap.version = self._snapshot.version + 1
            self._snapshot = snap

    def _run(self):
        episode = 0
        successes = 0
        env_steps = 0
        while not self._stop.is_set():
            mode = self.mode()
            if mode in ("idle", "paused"):
                time.sleep(0.005)
                continue
            if self._task_filter:
                task = next(t for t in self.tasks
                            if t.id == self._task_filter)
            else:
                task = self.tasks[task_schedule(episode, len(self.tasks),
                                                self.tcfg.task_cycle)]
            env = InsertionEnv(task, self.cfg)
            obs_t, obs_s = env.reset(int(self.rng.integers(2 ** 31)))
            self.source.begin_episode(self.tcfg.episode_len_train)
            done = False
            for step in range(self.tcfg.episode_len_train):
                if self._stop.is_set():
                    return
                while self.mode() == "paused" and not self._stop.is_set():
                    time.sleep(0.005)
                mode = self.mode()
                if mode == "idle":
                    break
                override = self.source.take()
                if mode == "demo_recording":
                    # kinesthetic recording: the robot moves only when the
                    # operator does, so block until a command arrives
                    while override is None and not self._stop.is_set() \
                            and self.mode() == "demo_recording":
                        time.sleep(0.002)
                        override = self.source.take()
                    if override is None:
                        break
                    action = override
                    src = SOURCE_HUMAN
                else:
                    action = self.agent.act(obs_s, self.rng)
                    if override is not None:
                        action = override
                        src = SOURCE_HUMAN
                    else:
                        src = SOURCE_POLICY
                (nobs_t, nobs_s), reward, done, _ = env.step(action)
                self.buffers.add(Transition(obs_t, obs_s, action, reward,
                                            done, nobs_t, nobs_s, src))
                obs_t, obs_s = nobs_t, nobs_s
                env_steps += 1
                if (self.updates_enabled and mode == "training"
                        and (self.buffers.policy_size
                             or self.buffers.human_size)):
                    batch = sample_symmetric(self.buffers,
                                             self.tcfg.batch_size, self.rng)
                    sac_update(self.agent, batch, self.rng)
                self._publish(env, episode, step, env_steps, successes,
                              episode, done,
                              with_image=step % self.image_every == 0)
                if self.realtime:
                    time.sleep(self.cfg.dt)
                if done:
                    break
            successes += int(done)
            episode += 1
            self._publish(env, episode, 0, env_steps, successes, episode,
                          done, with_image=True)
            if self.mode() == "demo_recording":
                # one episode per record_demo request
                with self._lock:
                    self._mode = "idle"


def state_message(snap: SessionState) -> dict:
    return {"type": "state", "mode": snap.mode, "task": snap.task_id,
            "episode": int(snap.episode), "step": int(snap.step),
            "env_steps": int(snap.env_steps),
            "pose": [float(v) for v in snap.pose],
            "twist": [float(v) for v in snap.twist],
            "wrench": [float(v) for v in snap.wrench],
            "buffer_policy": int(snap.buffer_policy),
            "buffer_human": int(snap.buffer_human),
            "successes": int(snap.successes),
            "episodes": int(snap.episodes_done),
            "done": bool(snap.done), "image_pgm_b64": snap.image_b64,
            "task_geometry": snap.task_geometry,
            "version": int(snap.version)}


def build_app(session: Session) -> FastAPI:
    app = FastAPI()
    app.state.session = session
    app.state.client_connected = False

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "mode": session.mode()}

    @app.websocket("/session")
    async def session_ws(ws: WebSocket):
        await ws.accept()
        if app.state.client_connected:
            await ws.send_json({"type": "error",
                                "message": "a client is already connected"})
            await ws.close()
            return
        app.state.client_connected = True
        last_version = -1
        try:
            while True:
                try:
                    raw = await asyncio.wait_for(ws.receive_text(),
                                                 timeout=0.02)
                except asyncio.TimeoutError:
                    raw = None
                if raw is not None:
                    reply = handle_message(session, raw)
                    if reply is not None:
                        await ws.send_json(reply)
                    if reply is not None and reply.get("bye"):
                        break
                snap = session.snapshot()
                if snap.version != last_version:
                    last_version = snap.version
                    await ws.send_json(state_message(snap))
        except WebSocketDisconnect:
            pass  # training continues, interventions simply cease
        finally:
            app.state.client_connected = False

    return app


def handle_message(session: Session, raw: str) -> dict | None:
    """Apply one wire message; malformed input yields a single error reply
    and leaves the session untouched."""
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError:
        return {"type": "error", "message": "malformed JSON"}
    if not isinstance(msg, dict) or "type" not in msg:
        return {"type": "error", "message": "missing message type"}
    kind = msg["type"]
    try:
        if kind == "start":
            session.start(msg.get("mode", "training"), msg.get("task"))
            return {"type": "ack", "cmd": "start"}
        if kind == "record_demo":
            session.start("demo_recording", msg.get("task"))
            return {"type": "ack", "cmd": "record_demo"}
        if kind == "pause":
            session.pause()
            return {"type": "ack", "cmd": "pause"}
        if kind == "resume":
            session.resume()
            return {"type": "ack", "cmd": "resume"}
        if kind == "stop":
            session.stop()
            return {"type": "ack", "cmd": "stop", "bye": True}
        if kind == "intervene":
            session.source.submit(float(msg.get("dx", 0.0)),
                                  float(msg.get("dz", 0.0)),
                                  float(msg.get("dtheta", 0.0)))
            return None  # high-rate path: no ack chatter
        return {"type": "error", "message": f"unknown type {kind!r}"}
    except (ValueError, TypeError) as exc:
        return {"type": "error", "message": str(exc)}


def serve(xcfg=None, host: str = "127.0.0.1", port: int = 8800):
    """Run the session server until interrupted."""
    import uvicorn
    tcfg = xcfg.train_config(xcfg.seeds[0]) if xcfg is not None else None
    session = Session(tcfg=tcfg, realtime=True)
    app = build_app(session)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        session.stop()
