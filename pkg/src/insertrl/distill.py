"""Teacher training, cross-modal student distillation, and fine-tuning.

The teacher is vision-enabled: it can only locate the socket through the
image, since its proprioception is episode-relative. The student is
vision-free and task-relative. Distillation adds a critic-matching MSE and a
forward KL from the frozen teacher head to the student head; with both
weights at zero the student pipeline degenerates exactly into the
from-scratch proprioceptive baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import GaussianHead, head_from_raw, mlp_forward, tanh_gaussian_mode
from .oracle import OracleParams, ScriptedOracleSource, collect_demos
from .replay import ReplayBuffers
from .rollout import (
    InsertionEnv,
    MetricsLog,
    PROPRIO_DIM,
    TrainState,
    multitask_train,
    teacher_obs_dim,
)
from .sac import DistillTerms, SacAgent, TrainConfig, make_agent
from .sim import EnvConfig, ImageEncoder, TaskSpec

ACT_DIM = 3


@dataclass
class DistillConfig:
    mse_weight: float = 1.0
    kl_weight: float = 1.0
    student_budget: int = 10_000
    finetune_teacher_budget: int = 20_000
    teacher_checkpoint: str | None = None

    def __post_init__(self):
        if self.mse_weight < 0 or self.kl_weight < 0:
            raise ValueError("distillation weights must be >= 0")


@dataclass
class TeacherPolicy:
    agent: SacAgent
    converged: bool
    metrics: MetricsLog
    encoder: ImageEncoder

    def head(self, obs_t: np.ndarray) -> GaussianHead:
        return head_from_raw(mlp_forward(self.agent.actor, obs_t))

    def q_min(self, obs_t: np.ndarray, action: np.ndarray) -> np.ndarray:
        qin = np.concatenate([obs_t, action], axis=-1)
        return np.minimum(mlp_forward(self.agent.q1, qin)[..., 0],
                          mlp_forward(self.agent.q2, qin)[..., 0])

    def act_deterministic(self, obs_t: np.ndarray) -> np.ndarray:
        return tanh_gaussian_mode(self.head(obs_t))


@dataclass
class StudentPolicy:
    agent: SacAgent
    converged: bool
    metrics: MetricsLog


def make_buffers(cfg: EnvConfig) -> ReplayBuffers:
    return ReplayBuffers(teacher_obs_dim(cfg), PROPRIO_DIM, ACT_DIM)


def training_envs(tasks, cfg: EnvConfig, encoder, student_mask="ptw",
                  teacher_mask="vptw") -> dict:
    return {t.id: InsertionEnv(t, cfg, encoder, student_mask=student_mask,
                               teacher_mask=teacher_mask) for t in tasks}


def _converged(metrics: MetricsLog, tasks, tcfg: TrainConfig) -> bool:
    return all(metrics.trailing_success(t.id, tcfg.trailing_window) == 1.0
               for t in tasks)


def train_teacher(tasks, tcfg: TrainConfig, cfg: EnvConfig,
                  rng: np.random.Generator,
                  oracle_params: OracleParams | None = None,
                  step_budget: int | None = None,
                  encoder: ImageEncoder | None = None) -> TeacherPolicy:
    """Vision-enabled agent trained with demonstrations and oracle-gated
    interventions until every task's trailing probe success hits 100%.

    If the budget runs out first, the best-scoring snapshot is returned and
    `converged` is False.
    """
    oracle_params = oracle_params or OracleParams()
    encoder = encoder or ImageEncoder(cfg)
    buffers = make_buffers(cfg)
    envs = training_envs(tasks, cfg, encoder)
    collect_demos(tasks, tcfg.demos_per_task, lambda t: envs[t.id], buffers,
                  oracle_params, tcfg, rng)
    agent = make_agent("teacher", teacher_obs_dim(cfg), ACT_DIM, tcfg, rng)
    source = ScriptedOracleSource(oracle_params, cfg)
    metrics = MetricsLog()
    ts = multitask_train(agent, tasks, tcfg, buffers, envs, source, rng,
                         metrics, step_budget=step_budget)
    converged = _converged(metrics, tasks, tcfg)
    if not converged and ts.best_agent is not None:
        agent = ts.best_agent
    return TeacherPolicy(agent, converged, metrics, encoder)


class TeacherGatedSource:
    """The converged teacher stands in for the human during student training:
    it overrides when its own Q sees a big enough advantage in its action."""

    kind = "teacher_gated"

    def __init__(self, teacher: TeacherPolicy, q_gate: float = 0.8,
                 max_fraction: float = 0.1):
        self.teacher = teacher
        self.q_gate = q_gate
        self.max_fraction = max_fraction
        self._budget = 0
        self._used = 0

    def begin_episode(self, max_steps: int):
        self._budget = int(self.max_fraction * max_steps)
        self._used = 0

    def override(self, env: InsertionEnv, obs_t, obs_s, action):
        if self._used >= self._budget:
            return None
        a_t = self.teacher.act_deterministic(obs_t)
        q_pol = float(self.teacher.q_min(obs_t, action))
        q_t = float(self.teacher.q_min(obs_t, a_t))
        if q_t - q_pol <= self.q_gate:
            return None
        self._used += 1
        return a_t


def make_distill_terms(teacher: TeacherPolicy, dcfg: DistillConfig) -> DistillTerms:
    return DistillTerms(teacher_q=teacher.q_min, teacher_head=teacher.head,
                        mse_weight=dcfg.mse_weight, kl_weight=dcfg.kl_weight)


@dataclass
class DistillSession:
    """Student training session; exists so budgets can be extended
    (checkpoint at one budget, continue to a larger one)."""

    teacher: TeacherPolicy
    tasks: list
    tcfg: TrainConfig
    cfg: EnvConfig
    dcfg: DistillConfig
    rng: np.random.Generator
    agent: SacAgent
    buffers: ReplayBuffers
    envs: dict
    source: object
    terms: DistillTerms
    metrics: MetricsLog
    state: TrainState = field(default_factory=TrainState)

    @classmethod
    def create(cls, teacher: TeacherPolicy, tasks, tcfg: TrainConfig,
               cfg: EnvConfig, dcfg: DistillConfig, rng: np.random.Generator,
               oracle_params: OracleParams | None = None,
               agent: SacAgent | None = None, source=None,
               collect_new_demos: bool = True,
               metrics: MetricsLog | None = None,
               student_mask: str = "ptw") -> "DistillSession":
        oracle_params = oracle_params or OracleParams()
        buffers = make_buffers(cfg)
        envs = training_envs(tasks, cfg, teacher.encoder,
                             student_mask=student_mask)
        if collect_new_demos:
            collect_demos(tasks, tcfg.demos_per_task, lambda t: envs[t.id],
                          buffers, oracle_params, tcfg, rng)
        if agent is None:
            agent = make_agent("student", PROPRIO_DIM, ACT_DIM, tcfg, rng)
        if agent.view != "student":
            raise ValueError("student agent must use the student view")
        if source is None:
            source = TeacherGatedSource(teacher)
        terms = make_distill_terms(teacher, dcfg)
        return cls(teacher, list(tasks), tcfg, cfg, dcfg, rng, agent,
                   buffers, envs, source, terms, metrics or MetricsLog())

    def run(self, step_budget: int) -> StudentPolicy:
        multitask_train(self.agent, self.tasks, self.tcfg, self.buffers,
                        self.envs, self.source, self.rng, self.metrics,
                        step_budget=step_budget, distill=self.terms,
                        state=self.state)
        converged = _converged(self.metrics, self.tasks, self.tcfg)
        agent = self.agent
        if not converged and self.state.best_agent is not None:
            agent = self.state.best_agent
        return StudentPolicy(agent, converged, self.metrics)


def distill_student(teacher: TeacherPolicy, tasks, tcfg: TrainConfig,
                    cfg: EnvConfig, dcfg: DistillConfig,
                    rng: np.random.Generator,
                    oracle_params: OracleParams | None = None,
                    agent: SacAgent | None = None,
                    source=None, collect_new_demos: bool = True,
                    metrics: MetricsLog | None = None,
                    student_mask: str = "ptw") -> StudentPolicy:
    """Train the vision-free student inside the same HIL loop, with the
    teacher as intervention source and distillation terms in both losses.

    With `dcfg` weights at zero this is exactly the from-scratch
    proprioceptive baseline (same seeds give bitwise-identical runs).
    """
    session = DistillSession.create(
        teacher, tasks, tcfg, cfg, dcfg, rng, oracle_params=oracle_params,
        agent=agent, source=source, collect_new_demos=collect_new_demos,
        metrics=metrics, student_mask=student_mask)
    return session.run(dcfg.student_budget)


def train_ptw(teacher: TeacherPolicy, tasks, tcfg: TrainConfig,
              cfg: EnvConfig, rng: np.random.Generator,
              step_budget: int = 50_000,
              oracle_params: OracleParams | None = None) -> StudentPolicy:
    """From-scratch proprioceptive baseline: the student pipeline with both
    distillation weights at zero (interventions and demos included)."""
    dcfg = DistillConfig(mse_weight=0.0, kl_weight=0.0,
                         student_budget=step_budget)
    return distill_student(teacher, tasks, tcfg, cfg, dcfg, rng,
                           oracle_params=oracle_params)


def finetune_student(student: StudentPolicy, new_task: TaskSpec,
                     tcfg: TrainConfig, cfg: EnvConfig, dcfg: DistillConfig,
                     rng: np.random.Generator, with_distillation: bool = True,
                     oracle_params: OracleParams | None = None):
    """Adapt an existing student to one hard unseen task.

    With distillation: a fresh teacher is trained on the new task first and
    the student continues inside the distillation loop. Without: the student
    continues on sparse reward alone (no teacher, no new demonstrations),
    which is the degradation comparison.
    """
    agent = student.agent
    metrics = MetricsLog()
    if with_distillation:
        new_teacher = train_teacher([new_task], tcfg, cfg, rng,
                                    oracle_params=oracle_params,
                                    step_budget=dcfg.finetune_teacher_budget)
        out = distill_student(new_teacher, [new_task], tcfg, cfg, dcfg, rng,
                              oracle_params=oracle_params, agent=agent,
                              collect_new_demos=True, metrics=metrics)
        return out, new_teacher
    # no teacher, no new demonstrations, sparse reward only, full budget
    buffers = make_buffers(cfg)
    envs = training_envs([new_task], cfg, None)
    multitask_train(agent, [new_task], tcfg, buffers, envs, None, rng,
                    metrics, step_budget=dcfg.student_budget,
                    stop_at_full_success=False)
    return StudentPolicy(agent, _converged(metrics, [new_task], tcfg),
                         metrics), None
