import math

import numpy as np
import pytest

from insertrl.distill import make_buffers
from insertrl.oracle import (
    OracleParams,
    ScriptedOracleSource,
    collect_demos,
    oracle_action,
    oracle_action_normalized,
    run_oracle_episode,
)
from insertrl.replay import SOURCE_HUMAN
from insertrl.rollout import InsertionEnv
from insertrl.sac import TrainConfig
from insertrl.sim import (
    EnvConfig,
    Pose2,
    SimState,
    Twist2,
    Wrench2,
    ZERO_WRENCH,
    make_task_set,
)

CFG = EnvConfig()
TCFG = TrainConfig()
TRAIN, EVAL = make_task_set()
PARAMS = OracleParams()


def state_at(task, x, z, theta=0.0, wrench=ZERO_WRENCH, twist=Twist2()):
    pose = Pose2(x, z, theta)
    return SimState(pose, twist, wrench, 0, task,
                    np.random.default_rng(0), pose)


def test_aligned_above_mouth_descends():
    task = TRAIN[0]
    st = state_at(task, task.task_frame.x, task.task_frame.z + 0.002)
    a = oracle_action(st, task, PARAMS, CFG)
    assert a.x == 0.0
    assert a.theta == 0.0
    assert a.z < 0.0


def test_lateral_error_corrected_with_opposite_sign():
    task = TRAIN[0]
    for err in (0.008, -0.008):
        st = state_at(task, task.task_frame.x + err,
                      task.task_frame.z + 0.02)
        a = oracle_action(st, task, PARAMS, CFG)
        assert np.sign(a.x) == -np.sign(err)


def test_tilt_corrected():
    task = TRAIN[0]
    st = state_at(task, task.task_frame.x, task.task_frame.z + 0.02,
                  theta=0.1)
    a = oracle_action(st, task, PARAMS, CFG)
    assert a.theta < 0.0


def test_jam_triggers_retract_and_wiggle():
    task = TRAIN[0]
    st = state_at(task, task.task_frame.x, task.task_frame.z - 0.005,
                  wrench=Wrench2(0.0, 30.0, 0.0))
    a = oracle_action(st, task, PARAMS, CFG)
    assert a.z > 0.0  # backs off
    assert a.x != 0.0 or a.theta != 0.0  # wiggles


def test_oracle_succeeds_on_all_training_tasks():
    rng = np.random.default_rng(0)
    for task in TRAIN:
        env = InsertionEnv(task, CFG)
        wins = sum(run_oracle_episode(env, PARAMS, TCFG, rng)[0]
                   for _ in range(100))
        assert wins >= 95, f"{task.id}: {wins}/100"


def test_oracle_handles_eval_variants():
    rng = np.random.default_rng(1)
    for task in EVAL:
        env = InsertionEnv(task, CFG)
        wins = sum(run_oracle_episode(env, PARAMS, TCFG, rng)[0]
                   for _ in range(20))
        assert wins >= 19, f"{task.id}: {wins}/20"


def test_collect_demos_contract():
    buffers = make_buffers(CFG)
    rng = np.random.default_rng(2)
    rows = collect_demos(TRAIN, 5, lambda t: InsertionEnv(t, CFG), buffers,
                         PARAMS, TCFG, rng)
    # 3 tasks x 5 successful episodes, every trajectory ends in success
    assert sum(len(v) for v in rows.values()) == 15
    assert buffers.policy_size == 0
    assert buffers.human_size > 0
    ends = 0
    for task_rows in rows.values():
        for ep in task_rows:
            assert ep[-1]["reward"] == 1.0
            ends += 1
    assert ends == 15


def test_collect_demos_zero_is_noop():
    buffers = make_buffers(CFG)
    collect_demos(TRAIN, 0, lambda t: InsertionEnv(t, CFG), buffers, PARAMS,
                  TCFG, np.random.default_rng(3))
    assert buffers.human_size == 0


def test_collect_demos_bounded_retries():
    # a hopeless oracle (never descends) must fail loudly, not loop forever
    bad = OracleParams(descent_gain=1e-9)
    buffers = make_buffers(CFG)
    with pytest.raises(RuntimeError, match="oracle failed"):
        collect_demos(TRAIN[:1], 2, lambda t: InsertionEnv(t, CFG), buffers,
                      bad, TCFG, np.random.default_rng(4), max_retries=3)


def test_gate_skips_when_policy_matches_oracle():
    task = TRAIN[0]
    env = InsertionEnv(task, CFG)
    env.reset(0)
    src = ScriptedOracleSource(PARAMS, CFG)
    src.begin_episode(100)
    a_star = oracle_action_normalized(env.state, task, PARAMS, CFG)
    assert src.override(env, None, None, a_star) is None


def test_gate_fires_outside_tube_with_divergent_action():
    task = TRAIN[0]
    cfg = EnvConfig(start_halfwidth=0.0, start_z_range=(0.03, 0.03),
                    start_theta=0.0)
    env = InsertionEnv(task, cfg)
    env.reset(0)
    # drive the EE far off the approach corridor
    for _ in range(4):
        env.step(np.array([1.0, 0.2, 0.0]))
    src = ScriptedOracleSource(PARAMS, CFG)
    src.begin_episode(100)
    bad_action = np.array([1.0, 1.0, 0.0])  # keeps running away
    out = src.override(env, None, None, bad_action)
    assert out is not None
    a_star = oracle_action_normalized(env.state, task, PARAMS, CFG)
    assert np.array_equal(out, a_star)


def test_gate_threshold_infinite_never_fires():
    task = TRAIN[0]
    env = InsertionEnv(task, CFG)
    env.reset(0)
    src = ScriptedOracleSource(PARAMS, CFG, gate_threshold=math.inf)
    src.begin_episode(100)
    assert src.override(env, None, None, np.array([1.0, 1.0, 1.0])) is None


def test_gate_budget_caps_interventions():
    task = TRAIN[0]
    cfg = EnvConfig(start_halfwidth=0.0, start_z_range=(0.03, 0.03),
                    start_theta=0.0)
    env = InsertionEnv(task, cfg)
    env.reset(0)
    for _ in range(4):
        env.step(np.array([1.0, 0.2, 0.0]))
    src = ScriptedOracleSource(PARAMS, CFG, max_fraction=0.1)
    src.begin_episode(50)  # budget of 5
    fired = sum(src.override(env, None, None, np.array([1.0, 1.0, 0.0]))
                is not None for _ in range(20))
    assert fired == 5
