"""Episode rollouts, observation assembly, and the multi-task training loop.

Observations come in two views and every transition stores both: the teacher
view is (image embedding, pose relative to the episode start, twist, wrench);
the student view is (pose relative to the estimated task frame, twist,
wrench) with no image content at all.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .replay import (
    Batch,
    ReplayBuffers,
    SOURCE_HUMAN,
    SOURCE_POLICY,
    Transition,
    sample_symmetric,
)
from .sac import SacAgent, TrainConfig, sac_update
from .sim import (
    Disturbance,
    EnvConfig,
    ImageEncoder,
    NO_DISTURBANCE,
    Pose2,
    TaskSpec,
    episode_relative,
    render,
    sim_reset,
    sim_step,
    task_relative,
    wrap_angle,
)


@dataclass
class ObsScales:
    """Fixed scalings that keep network inputs roughly O(1)."""

    pos: float = 50.0
    theta: float = 3.0
    vel: float = 5.0
    omega: float = 1.0
    force: float = 0.1
    torque: float = 5.0


def proprio_vec(rel: Pose2, twist, wrench, s: ObsScales) -> np.ndarray:
    return np.array([
        rel.x * s.pos, rel.z * s.pos, rel.theta * s.theta,
        twist.vx * s.vel, twist.vz * s.vel, twist.omega * s.omega,
        wrench.fx * s.force, wrench.fz * s.force, wrench.tau * s.torque,
    ])


PROPRIO_DIM = 9


def mask_proprio(vec: np.ndarray, mask: str) -> np.ndarray:
    """Zero out proprio blocks not in the modality mask.

    Masks name the kept blocks: p=pose, t=twist, w=wrench ("v" in a teacher
    mask refers to the image embedding, which is handled separately).
    """
    if mask in ("ptw", "vptw"):
        return vec
    out = vec.copy()
    if "p" not in mask:
        out[0:3] = 0.0
    if "t" not in mask:
        out[3:6] = 0.0
    if "w" not in mask:
        out[6:9] = 0.0
    return out


def teacher_obs_dim(cfg: EnvConfig) -> int:
    return cfg.embed_dim + PROPRIO_DIM


class InsertionEnv:
    """One task instance bound to a config, encoder and disturbance.

    Actions are normalized to [-1,1]^3 and scaled to the physical bounds at
    this boundary. `believed_frame` is the (possibly noisy) task frame
    estimate that student observations and primitive goals are built from.
    """

    def __init__(self, task: TaskSpec, cfg: EnvConfig,
                 encoder: ImageEncoder | None = None,
                 disturbance: Disturbance = NO_DISTURBANCE,
                 scales: ObsScales = ObsScales(),
                 student_mask: str = "ptw", teacher_mask: str = "vptw",
                 exact_frame: bool = False):
        self.task = task
        self.cfg = cfg
        self.encoder = encoder
        self.disturbance = disturbance
        self.scales = scales
        self.student_mask = student_mask
        self.teacher_mask = teacher_mask
        self.exact_frame = exact_frame
        fn = disturbance.frame_noise
        tf = task.task_frame
        self.believed_frame = Pose2(tf.x + fn.x, tf.z + fn.z,
                                    wrap_angle(tf.theta + fn.theta))
        self.state = None

    def _estimate_frame(self):
        """Per-episode kinesthetic estimate of the task frame.

        An explicit disturbance replaces the estimate outright; otherwise a
        small error is redrawn from the episode stream each reset.
        """
        fn = self.disturbance.frame_noise
        tf = self.task.task_frame
        if fn != Pose2() or self.exact_frame:
            return  # keep the frame fixed at construction
        lo, hi = self.cfg.frame_error_mag
        if hi <= 0.0:
            return
        r = self.state.rng
        mag = r.uniform(lo, hi)
        ang = r.uniform(0.0, 2.0 * math.pi)
        rot = r.uniform(-self.cfg.frame_error_rot, self.cfg.frame_error_rot)
        self.believed_frame = Pose2(tf.x + mag * math.cos(ang),
                                    tf.z + mag * math.sin(ang),
                                    wrap_angle(tf.theta + rot))

    def reset(self, seed):
        self.state = sim_reset(self.task, self.cfg, seed)
        self._estimate_frame()
        return self.observe()

    def observe(self):
        st = self.state
        if self.encoder is not None:
            emb = self.encoder.encode(render(st, self.disturbance, self.cfg))
        else:
            emb = np.zeros(self.cfg.embed_dim)
        ep_rel = episode_relative(st.ee_pose, st.start_pose)
        obs_t = np.concatenate([
            emb, mask_proprio(
                proprio_vec(ep_rel, st.ee_twist, st.last_wrench, self.scales),
                self.teacher_mask)])
        task_rel = task_relative(st.ee_pose, self.believed_frame)
        obs_s = mask_proprio(
            proprio_vec(task_rel, st.ee_twist, st.last_wrench, self.scales),
            self.student_mask)
        return obs_t, obs_s

    def action_to_delta(self, a: np.ndarray) -> Pose2:
        a = np.clip(a, -1.0, 1.0)
        return Pose2(float(a[0]) * self.cfg.max_dxz,
                     float(a[1]) * self.cfg.max_dxz,
                     float(a[2]) * self.cfg.max_dtheta)

    def step(self, action: np.ndarray):
        from .sim import compute_success
        self.state, wrench, contact = sim_step(
            self.state, self.action_to_delta(action), self.cfg)
        success = compute_success(self.state, self.cfg)
        reward = 1.0 if success else 0.0
        return self.observe(), reward, success, {
            "wrench": wrench, "contact": contact}

    def success(self) -> bool:
        from .sim import compute_success
        return compute_success(self.state, self.cfg)


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    interventions: int


class MetricsLog:
    """Per-episode training metrics, streamable to CSV.

    Rows with probe=1 are interleaved deterministic episodes run without
    interventions; the stop rule and trailing success read only those.
    """

    FIELDS = ("step", "episode", "task", "success", "interventions",
              "probe", "critic_loss", "actor_loss", "alpha", "kl_term",
              "mse_term")

    def __init__(self):
        self.rows = []

    def add(self, **kw):
        self.rows.append({f: kw.get(f, "") for f in self.FIELDS})

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=self.FIELDS)
            w.writeheader()
            w.writerows(self.rows)

    def trailing_success(self, task_id: str, window: int) -> float:
        """Success rate over the last `window` probe episodes of a task."""
        hits = [bool(r["success"]) for r in self.rows
                if r["task"] == task_id and r["probe"] == 1]
        if not hits:
            return 0.0
        tail = hits[-window:]
        return sum(tail) / len(tail)


def rollout_episode(agent: SacAgent, env: InsertionEnv, source,
                    buffers: ReplayBuffers, tcfg: TrainConfig,
                    rng: np.random.Generator, update_fn=None,
                    max_steps=None) -> EpisodeResult:
    """One training episode with optional action overrides.

    The override source is asked at every step; when it answers, its action
    is executed and the transition is tagged human. Episodes end on success
    (sparse reward 1) or at the step limit.
    """
    if max_steps is None:
        max_steps = tcfg.episode_len_train
    obs_t, obs_s = env.reset(int(rng.integers(2 ** 31)))
    if source is not None:
        source.begin_episode(max_steps)
    interventions = 0
    success = False
    steps = 0
    for _ in range(max_steps):
        obs_vec = obs_t if agent.view == "teacher" else obs_s
        action = agent.act(obs_vec, rng)
        override = None
        if source is not None:
            override = source.override(env, obs_t, obs_s, action)
        if override is not None:
            action = np.clip(np.asarray(override, dtype=np.float64), -1.0, 1.0)
            src = SOURCE_HUMAN
            interventions += 1
        else:
            src = SOURCE_POLICY
        (nobs_t, nobs_s), reward, done, _ = env.step(action)
        buffers.add(Transition(obs_t, obs_s, action, reward, done,
                               nobs_t, nobs_s, src))
        obs_t, obs_s = nobs_t, nobs_s
        steps += 1
        if update_fn is not None:
            update_fn()
        if done:
            success = True
            break
    return EpisodeResult(success, steps, interventions)


def eval_episode(agent: SacAgent, env: InsertionEnv, tcfg: TrainConfig,
                 seed: int, max_steps: int | None = None) -> EpisodeResult:
    """Deterministic evaluation: mean action, no learning, no interventions."""
    if max_steps is None:
        max_steps = tcfg.episode_len_eval
    obs_t, obs_s = env.reset(seed)
    rng = np.random.default_rng(0)  # unused by deterministic acting
    for t in range(max_steps):
        obs_vec = obs_t if agent.view == "teacher" else obs_s
        action = agent.act(obs_vec, rng, deterministic=True)
        (obs_t, obs_s), reward, done, _ = env.step(action)
        if done:
            return EpisodeResult(True, t + 1, 0)
    return EpisodeResult(False, max_steps, 0)


def task_schedule(episode_index: int, n_tasks: int, cycle: int) -> int:
    """Round-robin in blocks: episodes 0..cycle-1 on task 0, and so on."""
    return (episode_index // cycle) % n_tasks


@dataclass
class TrainState:
    """Mutable counters shared between the loop and the update closure."""

    env_steps: int = 0
    episodes: int = 0
    updates: int = 0
    last_info: dict = field(default_factory=dict)
    best_agent: object = None  # snapshot at the best probe score so far
    best_score: float = -1.0


def multitask_train(agent: SacAgent, tasks, tcfg: TrainConfig,
                    buffers: ReplayBuffers, envs: dict, source,
                    rng: np.random.Generator, metrics: MetricsLog,
                    step_budget: int | None = None,
                    distill=None, state: TrainState | None = None,
                    stop_at_full_success=True) -> TrainState:
    """Cycle tasks in blocks of `task_cycle` episodes, updating after every
    env step, until the step budget runs out or the trailing success rate
    hits 100% on every task."""
    if step_budget is None:
        step_budget = tcfg.step_budget
    ts = state or TrainState()
    trailing = {t.id: deque(maxlen=tcfg.trailing_window) for t in tasks}
    for r in metrics.rows:  # resume-aware trailing windows
        if r["task"] in trailing and r["probe"] == 1:
            trailing[r["task"]].append(bool(r["success"]))

    def update():
        ts.env_steps += 1
        if ts.env_steps < tcfg.warmup_steps:
            return
        if buffers.policy_size == 0 and buffers.human_size == 0:
            return
        for _ in range(tcfg.updates_per_step):
            batch = sample_symmetric(buffers, tcfg.batch_size, rng)
            ts.last_info = sac_update(agent, batch, rng, distill)
            ts.updates += 1

    while ts.env_steps < step_budget:
        task = tasks[task_schedule(ts.episodes, len(tasks), tcfg.task_cycle)]
        res = rollout_episode(agent, envs[task.id], source, buffers, tcfg,
                              rng, update_fn=update)
        info = ts.last_info
        metrics.add(step=ts.env_steps, episode=ts.episodes, task=task.id,
                    success=int(res.success), interventions=res.interventions,
                    probe=0,
                    critic_loss=info.get("critic_loss", ""),
                    actor_loss=info.get("actor_loss", ""),
                    alpha=info.get("alpha", ""),
                    kl_term=info.get("kl_term", ""),
                    mse_term=info.get("mse_term", ""))
        ts.episodes += 1
        if ts.episodes % tcfg.task_cycle == 0:
            # end of a task block: measure the bare policy on that task
            probe = eval_episode(agent, envs[task.id], tcfg,
                                 int(rng.integers(2 ** 31)),
                                 max_steps=tcfg.episode_len_train)
            ts.env_steps += probe.steps
            trailing[task.id].append(probe.success)
            metrics.add(step=ts.env_steps, episode=ts.episodes, task=task.id,
                        success=int(probe.success), interventions=0, probe=1)
            score = sum(sum(d) / tcfg.trailing_window
                        for d in trailing.values()) / len(trailing)
            if score > ts.best_score:
                ts.best_score = score
                ts.best_agent = agent.copy()
        if stop_at_full_success and all(
                len(d) == tcfg.trailing_window and all(d)
                for d in trailing.values()):
            break
    return ts


def save_trajectory_csv(path, rows) -> None:
    """Trajectory dump: one row per step with pose/twist/wrench/action."""
    fields = ("step", "x", "z", "theta", "vx", "vz", "omega",
              "fx", "fz", "tau", "ax", "az", "atheta", "reward", "intervened")
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def load_trajectory_csv(path):
    with open(path, newline="") as f:
        return [{k: float(v) for k, v in row.items()}
                for row in csv.DictReader(f)]
