"""Recurrent replay of whole episodes padded to a fixed horizon."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, fields

import numpy as np
import torch

from cranelang import language as lang
from cranelang.env.arena import MAX_STEPS, ObservationBundle
from cranelang.fm import Observation

CAPACITY = 256
BATCH_SIZE = 32


@dataclass
class EpisodeRecord:
    """One episode as fixed-size arrays: T+1 observations, T transitions (T = 30)."""
    vision: np.ndarray          # (T+1, V, V, 4)
    touch: np.ndarray           # (T+1, 16)
    proprioception: np.ndarray  # (T+1, 4)
    command: np.ndarray         # (T+1, 3, 18)
    feedback: np.ndarray        # (T+1, 3, 18) padded with silence rows
    feedback_len: np.ndarray    # (T+1,)
    actions: np.ndarray         # (T, 4)
    reward: np.ndarray          # (T,)
    done: np.ndarray            # (T,)
    mask: np.ndarray            # (T,)

    @property
    def length(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def from_steps(cls, observations: list[ObservationBundle], actions, rewards, dones,
                   horizon: int = MAX_STEPS) -> "EpisodeRecord":
        n = len(actions)
        if len(observations) != n + 1 or len(rewards) != n or len(dones) != n:
            raise ValueError("need n+1 observations for n actions, rewards and dones")
        if not 1 <= n <= horizon:
            raise ValueError(f"episode length {n} outside [1, {horizon}]")
        o0 = observations[0]
        V = o0.vision.shape[0]
        rec = cls(
            vision=np.zeros((horizon + 1, V, V, 4), np.float32),
            touch=np.zeros((horizon + 1, o0.touch.shape[0]), np.float32),
            proprioception=np.zeros((horizon + 1, o0.proprioception.shape[0]), np.float32),
            command=np.zeros((horizon + 1, 3, lang.VOCAB_SIZE), np.float32),
            feedback=np.zeros((horizon + 1, 3, lang.VOCAB_SIZE), np.float32),
            feedback_len=np.zeros(horizon + 1, np.int64),
            actions=np.zeros((horizon, 4), np.float32),
            reward=np.zeros(horizon, np.float32),
            done=np.zeros(horizon, np.float32),
            mask=np.zeros(horizon, np.float32),
        )
        for t, o in enumerate(observations):
            rec.vision[t] = o.vision
            rec.touch[t] = o.touch
            rec.proprioception[t] = o.proprioception
            rec.command[t] = o.command_voice
            rec.feedback[t], rec.feedback_len[t] = lang.pad_voice(o.feedback_voice)
        rec.actions[:n] = actions
        rec.reward[:n] = rewards
        rec.mask[:n] = 1.0
        # the last real step always terminates the stored episode
        rec.done[n - 1] = 1.0
        return rec

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Batch:
    obs: Observation
    actions: torch.Tensor
    reward: torch.Tensor
    done: torch.Tensor
    mask: torch.Tensor
    indices: np.ndarray

    def to(self, dtype) -> "Batch":
        return Batch(self.obs.to(dtype), self.actions.to(dtype), self.reward.to(dtype),
                     self.done.to(dtype), self.mask.to(dtype), self.indices)


def stack(records: list[EpisodeRecord], indices=None) -> Batch:
    def st(name, dtype=torch.float32):
        return torch.as_tensor(np.stack([getattr(r, name) for r in records]), dtype=dtype)

    obs = Observation(vision=st("vision"), touch=st("touch"), proprioception=st("proprioception"),
                      command=st("command"), feedback=st("feedback"),
                      feedback_len=st("feedback_len", torch.long))
    idx = np.arange(len(records)) if indices is None else np.asarray(indices)
    return Batch(obs, st("actions"), st("reward"), st("done"), st("mask"), idx)


class ReplayBuffer:
    def __init__(self, capacity: int = CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._episodes: deque[EpisodeRecord] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._episodes)

    def __getitem__(self, i: int) -> EpisodeRecord:
        return self._episodes[i]

    def push(self, episode: EpisodeRecord) -> None:
        self._episodes.append(episode)   # deque drops the oldest when full

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        n = len(self._episodes)
        if n == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        return rng.choice(n, size=batch_size, replace=n < batch_size)

    def sample(self, batch_size: int = BATCH_SIZE, rng: np.random.Generator | int = 0) -> Batch:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        idx = self.sample_indices(batch_size, rng)
        return stack([self._episodes[i] for i in idx], idx)
