"""Discrete dynamic movement primitives and the DMP+residual baseline.

Classic formulation: a critically damped spring-damper per degree of
freedom, a phase variable decaying exponentially, and a forcing term of
Gaussian basis functions scaled by phase and goal displacement, fit from a
single demonstration by locally weighted regression.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .replay import SOURCE_POLICY, Transition
from .rollout import EpisodeResult, InsertionEnv, MetricsLog
from .sac import SacAgent, TrainConfig, sac_update
from .sim import EnvConfig, Pose2, TaskSpec, wrap_angle


@dataclass
class DmpModel:
    """Per-DOF weights over Gaussian bases plus the transformation-system
    constants. beta defaults to alpha/4 (critical damping)."""

    n_basis: int
    weights: np.ndarray  # (dof, n_basis)
    centers: np.ndarray  # (n_basis,)
    widths: np.ndarray  # (n_basis,)
    alpha_z: float
    beta_z: float
    alpha_x: float
    duration: float  # tau
    start: np.ndarray  # y0, (dof,)
    goal: np.ndarray  # g, (dof,)

    def __post_init__(self):
        if self.n_basis < 1:
            raise ValueError("need at least one basis function")
        if min(self.alpha_z, self.beta_z, self.alpha_x, self.duration) <= 0:
            raise ValueError("dynamics constants must be positive")

    @property
    def dof(self) -> int:
        return self.weights.shape[0]


def _basis_grid(n_basis: int, alpha_x: float):
    # centers at the phase values visited at equally spaced times
    t = np.linspace(0.0, 1.0, n_basis)
    centers = np.exp(-alpha_x * t)
    widths = np.empty(n_basis)
    diffs = np.diff(centers)
    widths[:-1] = 1.0 / (diffs ** 2)
    widths[-1] = widths[-2]
    return centers, widths


def _basis(model: DmpModel, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return np.exp(-model.widths[None, :]
                  * (x[:, None] - model.centers[None, :]) ** 2)


def dmp_forcing(model: DmpModel, x) -> np.ndarray:
    """Forcing term f(x) for each DOF; shape (len(x), dof)."""
    psi = _basis(model, x)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    num = psi @ model.weights.T  # (n, dof)
    den = psi.sum(axis=1, keepdims=True)
    den[den < 1e-12] = 1e-12
    scale = x[:, None] * (model.goal - model.start)[None, :]
    return num / den * scale


def dmp_fit(demo: np.ndarray, dt: float, n_basis: int = 20,
            alpha_z: float = 25.0, alpha_x: float = 4.0) -> DmpModel:
    """Fit a DMP to one demonstrated trajectory (T, dof) sampled at dt.

    Locally weighted regression of the forcing term against demo
    accelerations. DOFs whose net displacement is degenerate get zero
    weights (their forcing scale would blow up) with a warning.
    """
    demo = np.asarray(demo, dtype=np.float64)
    if demo.ndim != 2 or demo.shape[0] < 3:
        raise ValueError("demo must be (T>=3, dof)")
    T, dof = demo.shape
    beta_z = alpha_z / 4.0
    tau = (T - 1) * dt
    y0, g = demo[0].copy(), demo[-1].copy()

    vel = np.gradient(demo, dt, axis=0)
    acc = np.gradient(vel, dt, axis=0)
    t = np.arange(T) * dt
    x = np.exp(-alpha_x * t / tau)

    centers, widths = _basis_grid(n_basis, alpha_x)
    weights = np.zeros((dof, n_basis))
    psi = np.exp(-widths[None, :] * (x[:, None] - centers[None, :]) ** 2)
    for d in range(dof):
        disp = g[d] - y0[d]
        if abs(disp) < 1e-9:
            warnings.warn(f"degenerate displacement in DOF {d}; zero forcing")
            continue
        # tau^2*ydd = a_z*(b_z*(g-y) - tau*yd) + f  =>  solve for f
        f_target = (tau ** 2 * acc[:, d]
                    - alpha_z * (beta_z * (g[d] - demo[:, d]) - tau * vel[:, d]))
        s = x * disp
        for i in range(n_basis):
            w_i = psi[:, i]
            denom = float(np.sum(w_i * s * s))
            weights[d, i] = 0.0 if denom < 1e-14 else \
                float(np.sum(w_i * s * f_target)) / denom
    return DmpModel(n_basis, weights, centers, widths, alpha_z, beta_z,
                    alpha_x, tau, y0, g)


def dmp_step(model: DmpModel, x: float, y: np.ndarray, z: np.ndarray,
             dt: float):
    """One explicit Euler step of the transformation + canonical systems.

    State is (phase x, position y, scaled velocity z); returns (y', z', x').
    """
    if not 0.0 < x <= 1.0:
        raise ValueError("phase must be in (0, 1]")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    f = dmp_forcing(model, x)[0]
    z_dot = (model.alpha_z * (model.beta_z * (model.goal - y) - z) + f) \
        / model.duration
    y_dot = z / model.duration
    x_dot = -model.alpha_x * x / model.duration
    return y + dt * y_dot, z + dt * z_dot, x + dt * x_dot


def dmp_rollout(model: DmpModel, steps: int, dt: float,
                start: np.ndarray | None = None,
                goal: np.ndarray | None = None) -> np.ndarray:
    """Integrate the primitive open loop; returns (steps+1, dof) waypoints."""
    m = model
    if start is not None or goal is not None:
        m = DmpModel(model.n_basis, model.weights, model.centers,
                     model.widths, model.alpha_z, model.beta_z, model.alpha_x,
                     model.duration,
                     np.asarray(start if start is not None else model.start,
                                dtype=np.float64),
                     np.asarray(goal if goal is not None else model.goal,
                                dtype=np.float64))
    y = m.start.copy()
    z = np.zeros_like(y)
    x = 1.0
    out = [y.copy()]
    for _ in range(steps):
        y, z, x = dmp_step(m, x, y, z, dt)
        x = max(x, 1e-10)
        out.append(y.copy())
    return np.array(out)


def dmp_to_doc(m: DmpModel) -> dict:
    return {
        "n_basis": m.n_basis, "weights": m.weights.tolist(),
        "centers": m.centers.tolist(), "widths": m.widths.tolist(),
        "alpha_z": m.alpha_z, "beta_z": m.beta_z, "alpha_x": m.alpha_x,
        "duration": m.duration, "start": m.start.tolist(),
        "goal": m.goal.tolist(),
    }


def dmp_from_doc(d: dict) -> DmpModel:
    return DmpModel(d["n_basis"], np.array(d["weights"]),
                    np.array(d["centers"]), np.array(d["widths"]),
                    d["alpha_z"], d["beta_z"], d["alpha_x"], d["duration"],
                    np.array(d["start"]), np.array(d["goal"]))


def save_dmp(path, m: DmpModel) -> None:
    with open(path, "w") as f:
        json.dump(dmp_to_doc(m), f)


def load_dmp(path) -> DmpModel:
    with open(path) as f:
        return dmp_from_doc(json.load(f))


# ---------------------------------------------------------------------------
# using the primitive as an insertion controller

def insertion_goal(env: InsertionEnv) -> np.ndarray:
    """Seated pose per the (possibly noisy) believed frame."""
    bf = env.believed_frame
    return np.array([bf.x - env.task.asymmetry_offset,
                     bf.z - 0.98 * env.task.socket_depth, bf.theta])


class DmpController:
    """Open-loop DMP playback: commands are successive waypoint deltas,
    normalized to the action bounds."""

    def __init__(self, model: DmpModel, cfg: EnvConfig):
        self.model = model
        self.cfg = cfg
        self._plan = None
        self._k = 0

    def begin(self, env: InsertionEnv, steps: int):
        p = env.state.ee_pose
        self._plan = dmp_rollout(self.model, steps, self.cfg.dt,
                                 start=np.array([p.x, p.z, p.theta]),
                                 goal=insertion_goal(env))
        self._k = 0

    def act(self, env: InsertionEnv) -> np.ndarray:
        k = min(self._k, len(self._plan) - 2)
        delta = self._plan[k + 1] - self._plan[k]
        self._k += 1
        return np.clip(np.array([
            delta[0] / self.cfg.max_dxz,
            delta[1] / self.cfg.max_dxz,
            wrap_angle(delta[2]) / self.cfg.max_dtheta,
        ]), -1.0, 1.0)


def demo_to_dmp(demo_rows, dt: float, n_basis: int = 20) -> DmpModel:
    """Build the baseline primitive from one recorded demonstration."""
    traj = np.array([[r["x"], r["z"], r["theta"]] for r in demo_rows])
    return dmp_fit(traj, dt, n_basis=n_basis)


@dataclass
class ResidualAgent:
    """DMP attractor plus a SAC corrector whose action is added on top.

    The residual is scaled down so the primitive stays the dominant term;
    the stored transitions carry the residual's own action.
    """

    dmp: DmpModel
    agent: SacAgent
    residual_scale: float = 0.5


def residual_episode(res: ResidualAgent, env: InsertionEnv,
                     tcfg: TrainConfig, rng: np.random.Generator,
                     buffers=None, update_fn=None, deterministic=False,
                     max_steps=None) -> EpisodeResult:
    """One episode of DMP + residual control.

    In training mode transitions (with the residual action) are stored and
    the update hook runs each step.
    """
    cfg = env.cfg
    if max_steps is None:
        max_steps = tcfg.episode_len_train if not deterministic \
            else tcfg.episode_len_eval
    seed = int(rng.integers(2 ** 31))
    obs_t, obs_s = env.reset(seed)
    ctrl = DmpController(res.dmp, cfg)
    ctrl.begin(env, max_steps)
    for t in range(max_steps):
        a_dmp = ctrl.act(env)
        a_res = res.agent.act(obs_s, rng, deterministic=deterministic)
        combined = np.clip(a_dmp + res.residual_scale * a_res, -1.0, 1.0)
        (nobs_t, nobs_s), reward, done, _ = env.step(combined)
        if buffers is not None:
            buffers.add(Transition(obs_t, obs_s, a_res, reward, done,
                                   nobs_t, nobs_s, SOURCE_POLICY))
        obs_t, obs_s = nobs_t, nobs_s
        if update_fn is not None:
            update_fn()
        if done:
            return EpisodeResult(True, t + 1, 0)
    return EpisodeResult(False, max_steps, 0)


def train_residual(dmp: DmpModel, tasks, tcfg: TrainConfig, cfg: EnvConfig,
                   rng: np.random.Generator, step_budget: int = 50_000,
                   residual_scale: float = 0.5):
    """Residual SAC on top of the primitive, sparse reward, no buffers of
    human data (the primitive itself is the prior)."""
    from .replay import ReplayBuffers, sample_symmetric
    from .rollout import PROPRIO_DIM, task_schedule, eval_episode
    from .sac import make_agent
    from .distill import ACT_DIM, make_buffers

    buffers = make_buffers(cfg)
    envs = {t.id: InsertionEnv(t, cfg, None) for t in tasks}
    agent = make_agent("student", PROPRIO_DIM, ACT_DIM, tcfg, rng)
    # zero final layer: the residual starts as a no-op around the primitive
    agent.actor.weights[-1][...] = 0.0
    agent.actor.biases[-1][...] = 0.0
    res = ResidualAgent(dmp, agent, residual_scale)
    metrics = MetricsLog()

    state = {"steps": 0, "updates": 0, "info": {}}

    def update():
        state["steps"] += 1
        if buffers.policy_size == 0:
            return
        for _ in range(tcfg.updates_per_step):
            batch = sample_symmetric(buffers, tcfg.batch_size, rng)
            state["info"] = sac_update(agent, batch, rng)
            state["updates"] += 1

    from collections import deque
    trailing = {t.id: deque(maxlen=tcfg.trailing_window) for t in tasks}
    episodes = 0
    best_score = -1.0
    best_agent = None
    while state["steps"] < step_budget:
        task = tasks[task_schedule(episodes, len(tasks), tcfg.task_cycle)]
        r = residual_episode(res, envs[task.id], tcfg, rng, buffers, update)
        metrics.add(step=state["steps"], episode=episodes, task=task.id,
                    success=int(r.success), interventions=0, probe=0,
                    critic_loss=state["info"].get("critic_loss", ""),
                    actor_loss=state["info"].get("actor_loss", ""),
                    alpha=state["info"].get("alpha", ""))
        episodes += 1
        if episodes % tcfg.task_cycle == 0:
            probe = residual_episode(res, envs[task.id], tcfg, rng,
                                     deterministic=True,
                                     max_steps=tcfg.episode_len_train)
            state["steps"] += probe.steps
            trailing[task.id].append(probe.success)
            metrics.add(step=state["steps"], episode=episodes, task=task.id,
                        success=int(probe.success), interventions=0, probe=1)
            score = sum(sum(d) / tcfg.trailing_window
                        for d in trailing.values()) / len(trailing)
            if score > best_score:
                best_score = score
                best_agent = agent.copy()
        if all(len(d) == tcfg.trailing_window and all(d)
               for d in trailing.values()):
            best_agent = None  # converged: keep the live agent
            break
    if best_agent is not None:
        res = ResidualAgent(dmp, best_agent, residual_scale)
    return res, metrics
