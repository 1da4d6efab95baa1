"""Success-rate evaluation on learned and unlearned goals."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
import torch

from cranelang import language as lang
from cranelang.harness.rollout import actor_policy, run_episode

EVAL_SEED_BASE = 900_000_000


@dataclass
class Rates:
    successes: dict[str, int]
    episodes: dict[str, int]

    def rate(self, category: str = "all") -> float:
        n = self.episodes.get(category, 0)
        return self.successes.get(category, 0) / n if n else float("nan")

    @property
    def categories(self) -> list[str]:
        order = list(lang.VERBS) + ["all"]
        return [c for c in order if c in self.episodes]


def eval_seed(sentence: lang.Sentence, repeat: int) -> int:
    # the same scene per (sentence, repeat) at every evaluation pass
    v, a, n = sentence.indexes
    return EVAL_SEED_BASE + ((v * 32 + a) * 32 + n) * 1000 + repeat


def evaluate(model, actor, sentences, episodes_per_sentence: int = 1, scale="full",
             policy: str = "deterministic", seed: int = 0) -> Rates:
    """Run every sentence ``episodes_per_sentence`` times and group successes by verb.

    ``policy`` is "deterministic" (squashed actor mean), "stochastic" or "random" (uniform
    commands, for baselines). Latent sampling uses a generator seeded from ``seed`` so the
    outcome is reproducible.
    """
    if policy not in ("deterministic", "stochastic", "random"):
        raise ValueError(f"unknown policy mode {policy!r}")
    succ, eps = defaultdict(int), defaultdict(int)
    gen = torch.Generator().manual_seed(seed)
    rand = np.random.default_rng(seed) if policy == "random" else None
    for s in sentences:
        for k in range(episodes_per_sentence):
            pol = None if rand is not None else actor_policy(actor, policy == "deterministic", gen)
            out = run_episode(model, pol, s, eval_seed(s, k), scale=scale, generator=gen, random_actions=rand)
            for cat in (s.action, "all"):
                eps[cat] += 1
                succ[cat] += int(out.success)
    return Rates(dict(succ), dict(eps))
