"""Transition records and the two-buffer replay scheme.

Policy experience lands in a ring buffer, human data (demonstrations and
interventions) in an append-only buffer; gradient batches draw half from
each so human guidance never gets crowded out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SOURCE_POLICY = "policy"
SOURCE_HUMAN = "human"


@dataclass
class Transition:
    """One step, keeping both observation views so distillation terms can
    be computed later regardless of which policy generated the data."""

    obs_teacher: np.ndarray
    obs_student: np.ndarray
    action: np.ndarray
    reward: float
    done: bool
    next_obs_teacher: np.ndarray
    next_obs_student: np.ndarray
    source: str

    def __post_init__(self):
        if self.source not in (SOURCE_POLICY, SOURCE_HUMAN):
            raise ValueError(f"bad source {self.source!r}")
        if self.reward not in (0.0, 1.0):
            raise ValueError("reward must be 0 or 1")
        if self.reward == 1.0 and not self.done:
            raise ValueError("reward 1 implies done")
        if np.any(np.abs(self.action) > 1.0 + 1e-9):
            raise ValueError("action outside [-1, 1]")


@dataclass
class Batch:
    obs_teacher: np.ndarray
    obs_student: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    done: np.ndarray
    next_obs_teacher: np.ndarray
    next_obs_student: np.ndarray

    def obs(self, view: str) -> np.ndarray:
        return self.obs_teacher if view == "teacher" else self.obs_student

    def next_obs(self, view: str) -> np.ndarray:
        return self.next_obs_teacher if view == "teacher" else self.next_obs_student

    def __len__(self):
        return self.action.shape[0]


class _Store:
    """Columnar transition storage; ring when capacity is finite."""

    def __init__(self, teacher_dim: int, student_dim: int, act_dim: int,
                 capacity: int | None = None):
        self.capacity = capacity
        n0 = capacity if capacity is not None else 1024
        self.obs_t = np.empty((n0, teacher_dim))
        self.obs_s = np.empty((n0, student_dim))
        self.act = np.empty((n0, act_dim))
        self.rew = np.empty(n0)
        self.done = np.empty(n0)
        self.next_t = np.empty((n0, teacher_dim))
        self.next_s = np.empty((n0, student_dim))
        self.size = 0
        self.head = 0

    def _grow(self):
        for name in ("obs_t", "obs_s", "act", "next_t", "next_s"):
            arr = getattr(self, name)
            setattr(self, name, np.concatenate([arr, np.empty_like(arr)]))
        for name in ("rew", "done"):
            arr = getattr(self, name)
            setattr(self, name, np.concatenate([arr, np.empty_like(arr)]))

    def append(self, t: Transition):
        if self.capacity is None and self.size == self.obs_t.shape[0]:
            self._grow()
        i = self.head
        self.obs_t[i] = t.obs_teacher
        self.obs_s[i] = t.obs_student
        self.act[i] = t.action
        self.rew[i] = t.reward
        self.done[i] = float(t.done)
        self.next_t[i] = t.next_obs_teacher
        self.next_s[i] = t.next_obs_student
        if self.capacity is not None:
            self.head = (i + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)
        else:
            self.head += 1
            self.size += 1

    def gather(self, idx: np.ndarray):
        return (self.obs_t[idx], self.obs_s[idx], self.act[idx],
                self.rew[idx], self.done[idx], self.next_t[idx],
                self.next_s[idx])


class ReplayBuffers:
    """D_P (policy ring buffer) and D_H (append-only human buffer)."""

    def __init__(self, teacher_dim: int, student_dim: int, act_dim: int,
                 policy_capacity: int = 200_000):
        self.d_p = _Store(teacher_dim, student_dim, act_dim, policy_capacity)
        self.d_h = _Store(teacher_dim, student_dim, act_dim, None)

    def add(self, t: Transition):
        if t.source == SOURCE_HUMAN:
            self.d_h.append(t)
        else:
            self.d_p.append(t)

    @property
    def policy_size(self) -> int:
        return self.d_p.size

    @property
    def human_size(self) -> int:
        return self.d_h.size


def sample_symmetric(buffers: ReplayBuffers, batch_size: int,
                     rng: np.random.Generator) -> Batch:
    """Half the batch from policy data, half from human data, uniform with
    replacement. Falls back to whichever buffer is non-empty."""
    if batch_size % 2 != 0:
        raise ValueError("batch_size must be even")
    np_, nh = buffers.d_p.size, buffers.d_h.size
    if np_ == 0 and nh == 0:
        raise ValueError("both replay buffers are empty")
    if np_ == 0:
        parts = [(buffers.d_h, batch_size)]
    elif nh == 0:
        parts = [(buffers.d_p, batch_size)]
    else:
        parts = [(buffers.d_p, batch_size // 2), (buffers.d_h, batch_size // 2)]
    cols = None
    for store, n in parts:
        idx = rng.integers(0, store.size, size=n)
        got = store.gather(idx)
        cols = got if cols is None else tuple(
            np.concatenate([a, b]) for a, b in zip(cols, got))
    return Batch(*cols)
