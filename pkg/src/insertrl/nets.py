"""Dense feedforward networks with hand-rolled reverse-mode gradients.

Everything is float64 numpy. Networks are plain weight/bias lists, so the
same code path serves single observations and batches, and flat parameter
vectors plug straight into Adam and finite-difference checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

_ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass
class MlpParams:
    """Layer list of (W, b) with a per-layer activation tag."""

    weights: list  # W_i with shape (out, in)
    biases: list  # b_i with shape (out,)
    activations: list  # "tanh" | "relu" | "identity"

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("layer lists must have equal length")
        for a in self.activations:
            if a not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if self.activations and self.activations[-1] != "identity":
            raise ValueError("final layer activation must be identity")
        for i in range(1, len(self.weights)):
            if self.weights[i].shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError("layer dimensions do not chain")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


def mlp_init(dims, rng: np.random.Generator, hidden_activation="tanh",
             final_scale=1.0) -> MlpParams:
    """Glorot-style init for a chain of dims, e.g. (9, 64, 64, 6)."""
    ws, bs, acts = [], [], []
    n = len(dims) - 1
    for i in range(n):
        fan_in, fan_out = dims[i], dims[i + 1]
        scale = math.sqrt(2.0 / (fan_in + fan_out))
        if i == n - 1:
            scale *= final_scale
        ws.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
        acts.append("identity" if i == n - 1 else hidden_activation)
    return MlpParams(ws, bs, acts)


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def mlp_forward(params: MlpParams, x: np.ndarray, want_cache=False):
    """Forward pass; x is (in,) or (B, in). Returns output, or (output, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.in_dim:
        raise ValueError(f"input dim {x.shape[-1]} != expected {params.in_dim}")
    single = x.ndim == 1
    a = x[None, :] if single else x
    pre, post = [], [a]
    for w, b, kind in zip(params.weights, params.biases, params.activations):
        z = a @ w.T + b
        a = _act(z, kind)
        if want_cache:
            pre.append(z)
            post.append(a)
    out = a[0] if single else a
    if want_cache:
        return out, (pre, post, single)
    return out


def mlp_backward_cached(params: MlpParams, cache, upstream: np.ndarray):
    """Gradients of sum_b <out_b, upstream_b> wrt params and input.

    Returns (grads, input_grad) with grads a list of (dW, db).
    """
    pre, post, single = cache
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape[-1] != params.out_dim:
        raise ValueError(f"upstream dim {g.shape[-1]} != output {params.out_dim}")
    delta = g[None, :] if g.ndim == 1 else g
    grads = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        delta = delta * _act_grad(pre[i], post[i + 1], params.activations[i])
        dw = delta.T @ post[i]
        db = delta.sum(axis=0)
        grads[i] = (dw, db)
        if i > 0:
            delta = delta @ params.weights[i]
    input_grad = delta @ params.weights[0]
    if single:
        input_grad = input_grad[0]
    return grads, input_grad


def mlp_backward(params: MlpParams, x: np.ndarray, upstream: np.ndarray):
    """Convenience wrapper: forward then backward in one call."""
    _, cache = mlp_forward(params, x, want_cache=True)
    return mlp_backward_cached(params, cache, upstream)


# ---------------------------------------------------------------------------
# flat parameter vectors

def flatten_params(params: MlpParams) -> np.ndarray:
    parts = []
    for w, b in zip(params.weights, params.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def unflatten_params(params: MlpParams, flat: np.ndarray) -> None:
    """Write a flat vector back into the layer arrays, in place."""
    k = 0
    for w, b in zip(params.weights, params.biases):
        n = w.size
        w[...] = flat[k:k + n].reshape(w.shape)
        k += n
        b[...] = flat[k:k + b.size]
        k += b.size
    if k != flat.size:
        raise ValueError("flat vector length mismatch")


def flatten_grads(grads) -> np.ndarray:
    parts = []
    for dw, db in grads:
        parts.append(dw.ravel())
        parts.append(db)
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def ensure(self, n: int):
        if self.m is None:
            self.m = np.zeros(n)
            self.v = np.zeros(n)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update. Mutates state, returns new params."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape:
        raise ValueError("param/grad length mismatch")
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise FloatingPointError(f"non-finite gradient at index {bad[0]}")
    state.ensure(params.size)
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    mhat = state.m / (1.0 - state.beta1 ** state.step)
    vhat = state.v / (1.0 - state.beta2 ** state.step)
    return params - state.lr * mhat / (np.sqrt(vhat) + state.eps)


# ---------------------------------------------------------------------------
# tanh-squashed Gaussian policy head

@dataclass
class GaussianHead:
    """Pre-squash Normal parameters for one state (or a batch)."""

    mean: np.ndarray
    log_std: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


def squash_log_std(raw: np.ndarray) -> np.ndarray:
    """Smoothly map raw net output into [LOG_STD_MIN, LOG_STD_MAX].

    tanh-based so the bound is differentiable everywhere (a hard clamp would
    break finite-difference checks at the boundary).
    """
    return LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (np.tanh(raw) + 1.0)


def squash_log_std_grad(raw: np.ndarray) -> np.ndarray:
    t = np.tanh(raw)
    return 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t)


def head_from_raw(raw: np.ndarray) -> GaussianHead:
    """Split a 2d-wide actor output into mean and bounded log_std."""
    d = raw.shape[-1] // 2
    return GaussianHead(raw[..., :d], squash_log_std(raw[..., d:]))


_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)


def _log1m_tanh2(pre: np.ndarray) -> np.ndarray:
    # log(1 - tanh(x)^2) = 2*(log 2 - x - softplus(-2x)); stable for large |x|
    return 2.0 * (_LOG2 - pre - np.logaddexp(0.0, -2.0 * pre))


def tanh_gaussian_sample(head: GaussianHead, noise: np.ndarray):
    """action = tanh(mean + std*noise) with the change-of-variables log-prob.

    Deterministic given noise. Works on single heads and batches; log_prob
    sums over the action dimension.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != np.shape(head.mean):
        raise ValueError("noise shape must match head shape")
    std = head.std
    pre = head.mean + std * noise
    action = np.tanh(pre)
    logp = (-head.log_std - _HALF_LOG_2PI - 0.5 * noise * noise
            - _log1m_tanh2(pre)).sum(axis=-1)
    return action, logp


def tanh_gaussian_mode(head: GaussianHead) -> np.ndarray:
    """Deterministic action (tanh of the mean)."""
    return np.tanh(head.mean)


def kl_diag_gaussian(p_mean, p_std, q_mean, q_std) -> np.ndarray:
    """KL(N(p) || N(q)) for diagonal Gaussians, summed over dims.

    Accepts vectors or batches; returns a scalar or a batch of scalars.
    """
    p_mean = np.asarray(p_mean, dtype=np.float64)
    p_std = np.asarray(p_std, dtype=np.float64)
    q_mean = np.asarray(q_mean, dtype=np.float64)
    q_std = np.asarray(q_std, dtype=np.float64)
    if np.any(p_std <= 0.0) or np.any(q_std <= 0.0):
        raise ValueError("std must be positive")
    var_ratio = (p_std / q_std) ** 2
    t1 = ((p_mean - q_mean) / q_std) ** 2
    return 0.5 * (var_ratio + t1 - 1.0 - np.log(var_ratio)).sum(axis=-1)


# ---------------------------------------------------------------------------
# checkpoint serialization (versioned JSON)

CHECKPOINT_VERSION = 1


def mlp_to_doc(params: MlpParams) -> dict:
    return {
        "shapes": [list(w.shape) for w in params.weights],
        "activations": list(params.activations),
        "weights": [w.ravel().tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def mlp_from_doc(doc: dict) -> MlpParams:
    ws = [np.array(w, dtype=np.float64).reshape(shape)
          for w, shape in zip(doc["weights"], doc["shapes"])]
    bs = [np.array(b, dtype=np.float64) for b in doc["biases"]]
    return MlpParams(ws, bs, list(doc["activations"]))


def save_checkpoint(path, nets: dict, scalars: dict | None = None) -> None:
    """Write named MlpParams plus optional named floats as one JSON file."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "nets": {name: mlp_to_doc(p) for name, p in nets.items()},
        "scalars": dict(scalars or {}),
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    nets = {name: mlp_from_doc(d) for name, d in doc["nets"].items()}
    return nets, doc.get("scalars", {})
