"""Scripted privileged expert and intervention gating.

The oracle stands in for the human operator: it reads the true task frame
(no estimate noise) and runs a phase policy of align, descend, and
retract-and-wiggle on jams. Demonstrations are oracle episodes kept only
when they end in success; interventions are oracle actions injected when a
training rollout strays from the approach corridor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .replay import ReplayBuffers, SOURCE_HUMAN, Transition
from .rollout import InsertionEnv
from .sim import EnvConfig, Pose2, SimState, TaskSpec, peg_tip


@dataclass
class OracleParams:
    approach_height: float = 0.004  # switch band above the mouth plane (m)
    alignment_gain: float = 1.0  # proportional, in units of the step bound
    descent_gain: float = 0.6
    wiggle_amplitude: float = math.radians(4.0)
    jam_force_threshold: float = 8.0  # N
    align_tol_frac: float = 0.22  # of clearance
    retract_gain: float = 0.35

    def __post_init__(self):
        if self.alignment_gain <= 0 or self.descent_gain <= 0:
            raise ValueError("gains must be positive")


def oracle_action(state: SimState, task: TaskSpec, params: OracleParams,
                  cfg: EnvConfig) -> Pose2:
    """Privileged expert action as a physical pose displacement."""
    tip_x, tip_z = peg_tip(state)
    frame = task.task_frame
    e_x = tip_x - frame.x
    height = tip_z - frame.z
    theta = state.ee_pose.theta
    tol = params.align_tol_frac * task.clearance

    d_theta = max(-cfg.max_dtheta, min(cfg.max_dtheta, -theta))
    align_dx = max(-cfg.max_dxz,
                   min(cfg.max_dxz, -params.alignment_gain * e_x))
    descend = -params.descent_gain * cfg.max_dxz

    wrench_mag = state.last_wrench.magnitude()
    descending = state.ee_twist.vz < -0.004
    jammed = (wrench_mag > params.jam_force_threshold and not descending
              and (height < 0.0 or abs(e_x) <= tol))
    if jammed:
        # wedged: back off a little and wiggle
        parity = 1.0 if state.step_index % 2 == 0 else -1.0
        return Pose2(parity * 0.3 * cfg.max_dxz,
                     params.retract_gain * cfg.max_dxz,
                     parity * params.wiggle_amplitude + d_theta)

    if height > params.approach_height:
        if abs(e_x) > tol:
            # move over the mouth while drifting down to the approach band
            dz = max(-0.3 * cfg.max_dxz,
                     params.approach_height - height)
            return Pose2(align_dx, dz, d_theta)
        return Pose2(0.0, descend, d_theta)

    if abs(e_x) > tol:
        if task.z_constrained:
            # sweep along the surface with light down pressure
            return Pose2(align_dx, -0.1 * cfg.max_dxz, d_theta)
        # press into the chamfer funnel while correcting sideways
        return Pose2(align_dx, 0.6 * descend, d_theta)
    return Pose2(0.0, descend, d_theta)


def oracle_action_normalized(state: SimState, task: TaskSpec,
                             params: OracleParams, cfg: EnvConfig) -> np.ndarray:
    d = oracle_action(state, task, params, cfg)
    return np.clip(np.array([d.x / cfg.max_dxz, d.z / cfg.max_dxz,
                             d.theta / cfg.max_dtheta]), -1.0, 1.0)


class ScriptedOracleSource:
    """Intervention gate around the oracle.

    Fires when the EE leaves a cone-shaped tube around the oracle's intended
    approach path and the policy action disagrees with the oracle's, up to a
    per-episode budget. A gate threshold of +inf disables it.
    """

    kind = "scripted_oracle"

    def __init__(self, params: OracleParams, cfg: EnvConfig,
                 gate_threshold: float = 0.25, tube_frac: float = 1.0,
                 tube_slope: float = 0.4, max_fraction: float = 0.5):
        self.params = params
        self.cfg = cfg
        self.gate_threshold = gate_threshold
        self.tube_frac = tube_frac
        self.tube_slope = tube_slope
        self.max_fraction = max_fraction
        self._budget = 0
        self._used = 0

    def begin_episode(self, max_steps: int):
        self._budget = int(self.max_fraction * max_steps)
        self._used = 0

    def _outside_tube(self, env: InsertionEnv) -> bool:
        task = env.task
        tip_x, tip_z = peg_tip(env.state)
        height = max(0.0, tip_z - task.task_frame.z)
        tube = self.tube_frac * task.clearance + self.tube_slope * height
        return abs(tip_x - task.task_frame.x) > tube

    def override(self, env: InsertionEnv, obs_t, obs_s, action):
        if not math.isfinite(self.gate_threshold):
            return None
        if self._used >= self._budget:
            return None
        a_star = oracle_action_normalized(env.state, env.task, self.params,
                                          self.cfg)
        if np.max(np.abs(action - a_star)) <= self.gate_threshold:
            return None
        if not self._outside_tube(env):
            return None
        self._used += 1
        return a_star


def run_oracle_episode(env: InsertionEnv, params: OracleParams,
                       tcfg, rng: np.random.Generator):
    """Roll the oracle once; returns (success, transitions, traj_rows)."""
    obs_t, obs_s = env.reset(int(rng.integers(2 ** 31)))
    transitions = []
    rows = []
    success = False
    for t in range(tcfg.episode_len_train):
        a = oracle_action_normalized(env.state, env.task, params, env.cfg)
        st = env.state
        (nobs_t, nobs_s), reward, done, info = env.step(a)
        transitions.append(Transition(obs_t, obs_s, a, reward, done,
                                      nobs_t, nobs_s, SOURCE_HUMAN))
        rows.append({
            "step": t, "x": st.ee_pose.x, "z": st.ee_pose.z,
            "theta": st.ee_pose.theta, "vx": st.ee_twist.vx,
            "vz": st.ee_twist.vz, "omega": st.ee_twist.omega,
            "fx": st.last_wrench.fx, "fz": st.last_wrench.fz,
            "tau": st.last_wrench.tau, "ax": a[0], "az": a[1], "atheta": a[2],
            "reward": reward, "intervened": 1,
        })
        obs_t, obs_s = nobs_t, nobs_s
        if done:
            success = True
            break
    return success, transitions, rows


def collect_demos(tasks, n_per_task: int, make_env, buffers: ReplayBuffers,
                  params: OracleParams, tcfg, rng: np.random.Generator,
                  max_retries: int = 60):
    """Prefill the human buffer with successful oracle episodes.

    Exactly n_per_task successful episodes per task are stored; failures are
    discarded and retried up to the bound.
    """
    demo_rows = {}
    for task in tasks:
        env = make_env(task)
        got = 0
        attempts = 0
        while got < n_per_task:
            attempts += 1
            if attempts > max_retries:
                raise RuntimeError(
                    f"oracle failed to demo task {task.id!r}: "
                    f"{got}/{n_per_task} in {max_retries} tries")
            success, transitions, rows = run_oracle_episode(
                env, params, tcfg, rng)
            if not success:
                continue
            for tr in transitions:
                buffers.add(tr)
            demo_rows.setdefault(task.id, []).append(rows)
            got += 1
    return demo_rows


def import_demo_csv(path, make_env, task, buffers, cfg: EnvConfig):
    """Replay an exported trajectory through the env and store it as demos.

    Lets externally recorded episodes (e.g. from the UI) seed training.
    """
    from .rollout import load_trajectory_csv
    rows = load_trajectory_csv(path)
    env = make_env(task)
    obs_t, obs_s = env.reset(0)
    # place the EE where the recording started
    env.state = env.state.__class__(
        ee_pose=Pose2(rows[0]["x"], rows[0]["z"], rows[0]["theta"]),
        ee_twist=env.state.ee_twist, last_wrench=env.state.last_wrench,
        step_index=0, task=env.task, rng=env.state.rng,
        start_pose=Pose2(rows[0]["x"], rows[0]["z"], rows[0]["theta"]))
    obs_t, obs_s = env.observe()
    count = 0
    for r in rows:
        a = np.array([r["ax"], r["az"], r["atheta"]])
        (nobs_t, nobs_s), reward, done, _ = env.step(a)
        buffers.add(Transition(obs_t, obs_s, a, reward, done,
                               nobs_t, nobs_s, SOURCE_HUMAN))
        obs_t, obs_s = nobs_t, nobs_s
        count += 1
        if done:
            break
    return count
