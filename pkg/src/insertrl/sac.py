"""Soft actor-critic with twin critics, target networks and auto-temperature.

Losses return exact gradients (reverse-mode through the fixed MLP topology),
which the test suite holds against central finite differences. Sampling
noise is always passed in explicitly so updates are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nets import (
    AdamState,
    GaussianHead,
    MlpParams,
    adam_step,
    flatten_grads,
    flatten_params,
    head_from_raw,
    kl_diag_gaussian,
    mlp_backward_cached,
    mlp_forward,
    mlp_init,
    squash_log_std,
    squash_log_std_grad,
    tanh_gaussian_mode,
    unflatten_params,
)
from .replay import Batch

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)


@dataclass
class TrainConfig:
    batch_size: int = 256
    episode_len_train: int = 100  # 10 s at 10 Hz
    episode_len_eval: int = 150  # 15 s at 10 Hz
    demos_per_task: int = 5
    task_cycle: int = 5  # episodes per task before moving on
    updates_per_step: int = 1
    gamma: float = 0.97
    tau: float = 0.005
    lr: float = 3e-4
    hidden: tuple = (64, 64)
    step_budget: int = 40_000
    trailing_window: int = 10  # episodes per task for the 100% stop rule
    warmup_steps: int = 200  # env steps before gradient updates start
    seed: int = 0


@dataclass
class SacAgent:
    view: str  # which observation view this agent consumes
    actor: MlpParams
    q1: MlpParams
    q2: MlpParams
    q1_target: MlpParams
    q2_target: MlpParams
    log_alpha: np.ndarray  # shape (1,)
    opt_actor: AdamState
    opt_q1: AdamState
    opt_q2: AdamState
    opt_alpha: AdamState
    gamma: float = 0.97
    tau: float = 0.005
    target_entropy: float = -3.0
    auto_alpha: bool = True
    obs_dim: int = 0
    act_dim: int = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def head(self, obs: np.ndarray) -> GaussianHead:
        return head_from_raw(mlp_forward(self.actor, obs))

    def act(self, obs: np.ndarray, rng: np.random.Generator,
            deterministic=False) -> np.ndarray:
        h = self.head(obs)
        if deterministic:
            return tanh_gaussian_mode(h)
        noise = rng.standard_normal(self.act_dim)
        pre = h.mean + h.std * noise
        return np.tanh(pre)

    def copy(self) -> "SacAgent":
        import copy as _copy
        return _copy.deepcopy(self)


def make_agent(view: str, obs_dim: int, act_dim: int, cfg: TrainConfig,
               rng: np.random.Generator, init_alpha=0.1,
               auto_alpha=True) -> SacAgent:
    dims_a = (obs_dim, *cfg.hidden, 2 * act_dim)
    dims_q = (obs_dim + act_dim, *cfg.hidden, 1)
    actor = mlp_init(dims_a, rng, final_scale=0.1)
    q1 = mlp_init(dims_q, rng)
    q2 = mlp_init(dims_q, rng)
    return SacAgent(
        view=view, actor=actor, q1=q1, q2=q2,
        q1_target=q1.copy(), q2_target=q2.copy(),
        log_alpha=np.array([math.log(init_alpha)]),
        opt_actor=AdamState(lr=cfg.lr), opt_q1=AdamState(lr=cfg.lr),
        opt_q2=AdamState(lr=cfg.lr), opt_alpha=AdamState(lr=cfg.lr),
        gamma=cfg.gamma, tau=cfg.tau,
        # tighter than the usual -act_dim: insertion needs low action noise
        target_entropy=-2.0 * act_dim,
        auto_alpha=auto_alpha, obs_dim=obs_dim, act_dim=act_dim,
    )


# ---------------------------------------------------------------------------
# pieces of the update

def critic_target(reward, done, gamma, min_q_next, alpha, logp_next):
    """Soft TD target: r + (1-done)*gamma*(min Q' - alpha*log pi')."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0,1)")
    return reward + (1.0 - done) * gamma * (min_q_next - alpha * logp_next)


def _log1m_tanh2(pre):
    return 2.0 * (_LOG2 - pre - np.logaddexp(0.0, -2.0 * pre))


def _policy_forward(actor: MlpParams, obs: np.ndarray, noise: np.ndarray):
    """Reparameterized batch sample: returns action, logp and backward state."""
    raw, cache = mlp_forward(actor, obs, want_cache=True)
    d = raw.shape[-1] // 2
    mu, u = raw[..., :d], raw[..., d:]
    log_std = squash_log_std(u)
    std = np.exp(log_std)
    pre = mu + std * noise
    a = np.tanh(pre)
    logp = (-log_std - _HALF_LOG_2PI - 0.5 * noise * noise
            - _log1m_tanh2(pre)).sum(axis=-1)
    return a, logp, (cache, mu, u, log_std, std, pre)


def _policy_backward(actor: MlpParams, noise, state, g_a, g_logp):
    """Backprop through the reparameterized sample.

    g_a: (B, d) gradient wrt the squashed action; g_logp: (B,) wrt logp.
    Returns flat actor gradients.
    """
    cache, mu, u, log_std, std, pre = state
    a = np.tanh(pre)
    glp = g_logp[:, None]
    # logp depends on pre only through the tanh correction: d logp/d pre = 2a
    g_pre = g_a * (1.0 - a * a) + glp * (2.0 * a)
    g_mu = g_pre
    g_logstd = -glp + g_pre * (std * noise)
    g_u = g_logstd * squash_log_std_grad(u)
    upstream = np.concatenate([g_mu, g_u], axis=-1)
    grads, _ = mlp_backward_cached(actor, cache, upstream)
    return flatten_grads(grads)


def critic_loss(agent: SacAgent, batch: Batch, noise_next: np.ndarray):
    """TD loss for both critics; gradients flow into Q1/Q2 only.

    Returns (loss, flat_grads_q1, flat_grads_q2, info).
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    obs = batch.obs(agent.view)
    nobs = batch.next_obs(agent.view)
    a_next, logp_next, _ = _policy_forward(agent.actor, nobs, noise_next)
    qin_next = np.concatenate([nobs, a_next], axis=-1)
    q1n = mlp_forward(agent.q1_target, qin_next)[:, 0]
    q2n = mlp_forward(agent.q2_target, qin_next)[:, 0]
    y = critic_target(batch.reward, batch.done, agent.gamma,
                      np.minimum(q1n, q2n), agent.alpha, logp_next)

    qin = np.concatenate([obs, batch.action], axis=-1)
    q1v, c1 = mlp_forward(agent.q1, qin, want_cache=True)
    q2v, c2 = mlp_forward(agent.q2, qin, want_cache=True)
    e1 = q1v[:, 0] - y
    e2 = q2v[:, 0] - y
    n = len(batch)
    loss = float(np.mean(e1 * e1 + e2 * e2))
    if not math.isfinite(loss):
        raise FloatingPointError("non-finite critic loss")
    g1, _ = mlp_backward_cached(agent.q1, c1, (2.0 * e1 / n)[:, None])
    g2, _ = mlp_backward_cached(agent.q2, c2, (2.0 * e2 / n)[:, None])
    info = {"y_mean": float(np.mean(y)), "q1_mean": float(np.mean(q1v))}
    return loss, flatten_grads(g1), flatten_grads(g2), info


def actor_loss(agent: SacAgent, batch: Batch, noise: np.ndarray,
               kl_to: GaussianHead | None = None, kl_weight: float = 0.0):
    """Reparameterized actor loss mean(alpha*logp - min Q), plus an optional
    forward-KL pull toward a frozen reference head (distillation).

    Returns (loss, flat_actor_grads, mean_logp).
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    obs = batch.obs(agent.view)
    n = len(batch)
    a, logp, state = _policy_forward(agent.actor, obs, noise)
    qin = np.concatenate([obs, a], axis=-1)
    q1v, c1 = mlp_forward(agent.q1, qin, want_cache=True)
    q2v, c2 = mlp_forward(agent.q2, qin, want_cache=True)
    q1v, q2v = q1v[:, 0], q2v[:, 0]
    qmin = np.minimum(q1v, q2v)
    alpha = agent.alpha
    loss = float(np.mean(alpha * logp - qmin))
    kl_mean = 0.0

    # dL/da through whichever critic realizes the min, per sample
    pick1 = (q1v <= q2v).astype(np.float64)[:, None]
    _, ig1 = mlp_backward_cached(agent.q1, c1, -pick1 / n)
    _, ig2 = mlp_backward_cached(agent.q2, c2, -(1.0 - pick1) / n)
    g_a = (ig1 + ig2)[:, agent.obs_dim:]
    g_logp = np.full(n, alpha / n)

    if kl_to is not None and kl_weight > 0.0:
        cache, mu, u, log_std, std, pre = state
        kl = kl_diag_gaussian(kl_to.mean, kl_to.std, mu, std)
        kl_mean = float(np.mean(kl))
        loss += kl_weight * kl_mean
        # d KL / d q-side parameters (the reference head is a constant)
        inv_var = 1.0 / (std * std)
        g_mu_extra = (mu - kl_to.mean) * inv_var
        g_logstd_extra = 1.0 - (kl_to.std ** 2 + (kl_to.mean - mu) ** 2) * inv_var
        g_u_extra = g_logstd_extra * squash_log_std_grad(u)
        upstream = np.concatenate([g_mu_extra, g_u_extra], axis=-1)
        upstream *= kl_weight / n
        extra, _ = mlp_backward_cached(agent.actor, cache, upstream)
        extra_flat = flatten_grads(extra)
    else:
        extra_flat = 0.0

    if not math.isfinite(loss):
        raise FloatingPointError("non-finite actor loss")
    grads = _policy_backward(agent.actor, noise, state, g_a, g_logp)
    return loss, grads + extra_flat, float(np.mean(logp)), kl_mean


def temperature_update(agent: SacAgent, mean_logp: float) -> float:
    """Gradient step on log alpha toward entropy = target. Returns new alpha."""
    grad = -(mean_logp + agent.target_entropy)
    agent.log_alpha = adam_step(agent.opt_alpha, agent.log_alpha,
                                np.array([grad]))
    return agent.alpha


def polyak_update(target: MlpParams, online: MlpParams, tau: float) -> None:
    """target <- tau*online + (1-tau)*target, elementwise, in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0,1]")
    for wt, wo in zip(target.weights, online.weights):
        if wt.shape != wo.shape:
            raise ValueError("shape mismatch")
        wt[...] = tau * wo + (1.0 - tau) * wt
    for bt, bo in zip(target.biases, online.biases):
        if bt.shape != bo.shape:
            raise ValueError("shape mismatch")
        bt[...] = tau * bo + (1.0 - tau) * bt


@dataclass
class DistillTerms:
    """Hooks the student update uses to pull toward a frozen teacher."""

    teacher_q: object  # callable (obs_teacher, action) -> (B,) value
    teacher_head: object  # callable (obs_teacher) -> GaussianHead
    mse_weight: float = 1.0
    kl_weight: float = 1.0


def student_critic_grads(agent: SacAgent, batch: Batch, terms: DistillTerms):
    """Extra critic-matching term: mean (Q_t - Q_s)^2 summed over both
    student critics. Returns (extra_loss, extra_g1, extra_g2)."""
    obs = batch.obs(agent.view)
    qin = np.concatenate([obs, batch.action], axis=-1)
    qt = terms.teacher_q(batch.obs_teacher, batch.action)
    n = len(batch)
    extra = 0.0
    flats = []
    for net in (agent.q1, agent.q2):
        qv, cache = mlp_forward(net, qin, want_cache=True)
        e = qv[:, 0] - qt
        extra += float(np.mean(e * e))
        g, _ = mlp_backward_cached(net, cache,
                                   (2.0 * terms.mse_weight * e / n)[:, None])
        flats.append(flatten_grads(g))
    return terms.mse_weight * extra, flats[0], flats[1]


def sac_update(agent: SacAgent, batch: Batch, rng: np.random.Generator,
               distill: DistillTerms | None = None) -> dict:
    """One full gradient step: critics, actor, temperature, targets."""
    n = len(batch)
    noise_next = rng.standard_normal((n, agent.act_dim))
    closs, g1, g2, cinfo = critic_loss(agent, batch, noise_next)
    mse_term = 0.0
    if distill is not None and distill.mse_weight > 0.0:
        mse_term, e1, e2 = student_critic_grads(agent, batch, distill)
        closs += mse_term
        g1 = g1 + e1
        g2 = g2 + e2
    flat = flatten_params(agent.q1)
    unflatten_params(agent.q1, adam_step(agent.opt_q1, flat, g1))
    flat = flatten_params(agent.q2)
    unflatten_params(agent.q2, adam_step(agent.opt_q2, flat, g2))

    noise_pi = rng.standard_normal((n, agent.act_dim))
    kl_to = None
    kl_w = 0.0
    if distill is not None and distill.kl_weight > 0.0:
        kl_to = distill.teacher_head(batch.obs_teacher)
        kl_w = distill.kl_weight
    aloss, ga, mean_logp, kl_term = actor_loss(agent, batch, noise_pi,
                                               kl_to, kl_w)
    flat = flatten_params(agent.actor)
    unflatten_params(agent.actor, adam_step(agent.opt_actor, flat, ga))

    if agent.auto_alpha:
        temperature_update(agent, mean_logp)

    polyak_update(agent.q1_target, agent.q1, agent.tau)
    polyak_update(agent.q2_target, agent.q2, agent.tau)
    return {"critic_loss": closs, "actor_loss": aloss, "alpha": agent.alpha,
            "mean_logp": mean_logp, "kl_term": kl_term,
            "mse_term": mse_term, **cinfo}


def save_agent(path, agent: SacAgent) -> None:
    """Versioned JSON checkpoint (optimizer state not included)."""
    from .nets import save_checkpoint
    save_checkpoint(path, {
        "actor": agent.actor, "q1": agent.q1, "q2": agent.q2,
        "q1_target": agent.q1_target, "q2_target": agent.q2_target,
    }, {
        "log_alpha": float(agent.log_alpha[0]), "gamma": agent.gamma,
        "tau": agent.tau, "obs_dim": agent.obs_dim, "act_dim": agent.act_dim,
        "view": agent.view, "target_entropy": agent.target_entropy,
        "auto_alpha": int(agent.auto_alpha),
    })


def load_agent(path, lr: float = 3e-4) -> SacAgent:
    from .nets import load_checkpoint
    nets, sc = load_checkpoint(path)
    return SacAgent(
        view=sc["view"], actor=nets["actor"], q1=nets["q1"], q2=nets["q2"],
        q1_target=nets["q1_target"], q2_target=nets["q2_target"],
        log_alpha=np.array([sc["log_alpha"]]),
        opt_actor=AdamState(lr=lr), opt_q1=AdamState(lr=lr),
        opt_q2=AdamState(lr=lr), opt_alpha=AdamState(lr=lr),
        gamma=sc["gamma"], tau=sc["tau"],
        target_entropy=sc["target_entropy"],
        auto_alpha=bool(sc["auto_alpha"]), obs_dim=int(sc["obs_dim"]),
        act_dim=int(sc["act_dim"]),
    )
