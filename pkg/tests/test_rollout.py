import numpy as np
import pytest

from insertrl.distill import make_buffers
from insertrl.replay import SOURCE_HUMAN, SOURCE_POLICY
from insertrl.rollout import (
    InsertionEnv,
    MetricsLog,
    eval_episode,
    mask_proprio,
    multitask_train,
    rollout_episode,
    task_schedule,
    load_trajectory_csv,
    save_trajectory_csv,
)
from insertrl.sac import TrainConfig, make_agent
from insertrl.sim import EnvConfig, ImageEncoder, Pose2, make_task_set

CFG = EnvConfig()
TRAIN, _ = make_task_set()


def tiny_tcfg(**kw):
    kw.setdefault("hidden", (8, 8))
    kw.setdefault("batch_size", 32)
    kw.setdefault("warmup_steps", 0)
    return TrainConfig(**kw)


def student_agent(seed=0, tcfg=None):
    return make_agent("student", 9, 3, tcfg or tiny_tcfg(),
                      np.random.default_rng(seed))


class AlwaysIntervene:
    def __init__(self, action):
        self.action = np.asarray(action, dtype=float)

    def begin_episode(self, max_steps):
        pass

    def override(self, env, obs_t, obs_s, action):
        return self.action


class NeverIntervene:
    def begin_episode(self, max_steps):
        pass

    def override(self, env, obs_t, obs_s, action):
        return None


def test_task_schedule_blocks_of_five():
    # episodes 0-4 task 0; 5-9 task 1; 10-14 task 2; 15 wraps to task 0
    expect = [0] * 5 + [1] * 5 + [2] * 5 + [0] * 5 + [1] * 5 + [2] * 5
    got = [task_schedule(i, 3, 5) for i in range(30)]
    assert got == expect


def test_task_schedule_single_task_degenerate():
    assert all(task_schedule(i, 1, 5) == 0 for i in range(40))


def test_observation_views_and_dims():
    enc = ImageEncoder(CFG)
    env = InsertionEnv(TRAIN[0], CFG, enc)
    obs_t, obs_s = env.reset(3)
    assert obs_t.shape == (CFG.embed_dim + 9,)
    assert obs_s.shape == (9,)
    # student view carries no image content: same state without an encoder
    env2 = InsertionEnv(TRAIN[0], CFG, None)
    _, obs_s2 = env2.reset(3)
    assert np.array_equal(obs_s, obs_s2)


def test_teacher_proprio_is_episode_relative():
    env = InsertionEnv(TRAIN[0], CFG, ImageEncoder(CFG))
    obs_t, _ = env.reset(5)
    # at step 0 the episode-relative pose block is exactly zero
    assert np.allclose(obs_t[CFG.embed_dim:CFG.embed_dim + 3], 0.0)


def test_frame_estimate_error_is_bounded_and_seeded():
    env = InsertionEnv(TRAIN[0], CFG, None)
    offs = []
    for seed in range(200):
        env.reset(seed)
        bf = env.believed_frame
        tf = TRAIN[0].task_frame
        mag = np.hypot(bf.x - tf.x, bf.z - tf.z)
        lo, hi = CFG.frame_error_mag
        assert lo <= mag <= hi + 1e-12
        offs.append((bf.x, bf.z))
    env.reset(7)
    first = env.believed_frame
    env.reset(7)
    assert env.believed_frame == first  # same seed, same estimate


def test_explicit_disturbance_overrides_estimate():
    from insertrl.sim import Disturbance
    d = Disturbance(frame_noise=Pose2(0.005, 0.0, 0.0))
    env = InsertionEnv(TRAIN[0], CFG, None, d)
    env.reset(0)
    assert env.believed_frame.x == TRAIN[0].task_frame.x + 0.005


def test_mask_proprio_blocks():
    v = np.arange(9.0) + 1.0
    assert np.array_equal(mask_proprio(v, "ptw"), v)
    p = mask_proprio(v, "p")
    assert np.array_equal(p[0:3], v[0:3]) and np.all(p[3:] == 0.0)
    tw = mask_proprio(v, "tw")
    assert np.all(tw[0:3] == 0.0) and np.array_equal(tw[3:], v[3:])


def test_rollout_all_interventions_land_in_human_buffer():
    buffers = make_buffers(CFG)
    env = InsertionEnv(TRAIN[0], CFG, None)
    agent = student_agent()
    res = rollout_episode(agent, env, AlwaysIntervene([0.0, -1.0, 0.0]),
                          buffers, tiny_tcfg(), np.random.default_rng(0))
    assert buffers.policy_size == 0
    assert buffers.human_size == res.steps
    assert res.interventions == res.steps


def test_rollout_success_terminates_with_reward_one():
    # a scripted descent from an aligned start must succeed before the limit
    buffers = make_buffers(CFG)
    cfg = EnvConfig(start_halfwidth=0.001, start_z_range=(0.02, 0.02),
                    start_theta=0.0)
    env = InsertionEnv(TRAIN[0], cfg, None)
    agent = student_agent()
    res = rollout_episode(agent, env, AlwaysIntervene([0.0, -1.0, 0.0]),
                          buffers, tiny_tcfg(), np.random.default_rng(1))
    assert res.success
    assert res.steps < tiny_tcfg().episode_len_train
    last = buffers.d_h
    assert last.rew[res.steps - 1] == 1.0
    assert last.done[res.steps - 1] == 1.0
    assert np.all(last.rew[:res.steps - 1] == 0.0)  # sparse reward


def test_rollout_policy_transitions_tagged_policy():
    buffers = make_buffers(CFG)
    env = InsertionEnv(TRAIN[0], CFG, None)
    agent = student_agent()
    rollout_episode(agent, env, NeverIntervene(), buffers, tiny_tcfg(),
                    np.random.default_rng(2))
    assert buffers.human_size == 0
    assert buffers.policy_size > 0


def test_eval_episode_deterministic():
    agent = student_agent(3)
    env = InsertionEnv(TRAIN[1], CFG, None)
    a = eval_episode(agent, env, tiny_tcfg(), 42)
    b = eval_episode(agent, env, tiny_tcfg(), 42)
    assert (a.success, a.steps) == (b.success, b.steps)


def test_multitask_train_runs_and_logs():
    tcfg = tiny_tcfg(task_cycle=2, trailing_window=2, episode_len_train=20)
    buffers = make_buffers(CFG)
    envs = {t.id: InsertionEnv(t, CFG, None) for t in TRAIN}
    agent = student_agent(4, tcfg)
    metrics = MetricsLog()
    ts = multitask_train(agent, TRAIN, tcfg, buffers, envs, None,
                         np.random.default_rng(3), metrics, step_budget=300)
    assert ts.env_steps >= 300 or all(
        metrics.trailing_success(t.id, 2) == 1.0 for t in TRAIN)
    train_rows = [r for r in metrics.rows if r["probe"] == 0]
    seen = [r["task"] for r in train_rows[:6]]
    assert seen == [TRAIN[0].id, TRAIN[0].id, TRAIN[1].id, TRAIN[1].id,
                    TRAIN[2].id, TRAIN[2].id]
    assert any(r["probe"] == 1 for r in metrics.rows)


def test_metrics_csv_roundtrip(tmp_path):
    m = MetricsLog()
    m.add(step=10, episode=0, task="a", success=1, interventions=2, probe=0,
          critic_loss=0.5, actor_loss=-1.0, alpha=0.1)
    path = tmp_path / "metrics.csv"
    m.write_csv(path)
    text = path.read_text()
    assert "step,episode,task" in text.splitlines()[0]
    assert "10,0,a,1,2,0" in text.splitlines()[1]


def test_trajectory_csv_roundtrip(tmp_path):
    rows = [{"step": i, "x": 0.1 * i, "z": 0.2, "theta": 0.0, "vx": 0.0,
             "vz": -0.1, "omega": 0.0, "fx": 0.0, "fz": 1.0, "tau": 0.0,
             "ax": 0.0, "az": -1.0, "atheta": 0.0, "reward": 0.0,
             "intervened": 1} for i in range(4)]
    path = tmp_path / "traj.csv"
    save_trajectory_csv(path, rows)
    back = load_trajectory_csv(path)
    assert len(back) == 4
    assert back[2]["x"] == pytest.approx(0.2)
