"""Online episode collection with the filtering forward model in the loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from cranelang import env
from cranelang import language as lang
from cranelang.fm import ForwardModel, Observation
from cranelang.replay import EpisodeRecord

Policy = Callable[[torch.Tensor], np.ndarray]


@dataclass
class EpisodeOutcome:
    sentence: lang.Sentence
    record: EpisodeRecord
    success: bool
    steps: int
    events: list = field(default_factory=list)
    hidden: list = field(default_factory=list)
    posterior_means: dict = field(default_factory=dict)
    results: list = field(default_factory=list)


def bundle_observation(bundle, dtype) -> Observation:
    return Observation.from_bundles([bundle], dtype=dtype).at(0)


@torch.no_grad()
def run_episode(model: ForwardModel, policy: Policy | None, sentence: lang.Sentence, seed: int,
                scale="full", generator: torch.Generator | None = None,
                random_actions: np.random.Generator | None = None, keep_latents: bool = False,
                controller: Callable | None = None) -> EpisodeOutcome:
    """Roll one episode.

    ``policy`` maps the current hidden state to a motor command. With ``random_actions`` set,
    commands are drawn uniformly from [-1, 1]^4 instead; ``controller`` maps the true arena
    state to a command (scripted baselines). The model filters in every mode so that latents
    can be recorded.
    """
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    state, obs = env.reset(seed, sentence, scale=scale, vision_size=model.cfg.vision_size)
    observations, actions, rewards, dones, events, hiddens, results = [obs], [], [], [], [], [], []
    post_means = {k: [] for k in model.cfg.latent_dims} if keep_latents else {}
    h = model.initial_hidden(1, dtype)
    a_enc = torch.zeros(1, model.cfg.motor_enc, dtype=dtype)
    success = False
    try:
        while True:
            st = model.filter_step(h, a_enc, model.encode(bundle_observation(obs, dtype)), generator=generator)
            h = st.h
            hiddens.append(h)
            if keep_latents:
                for k, (q, _) in st.latents.items():
                    post_means[k].append(q.mean[0].numpy().copy())
            if controller is not None:
                a = np.asarray(controller(state), dtype=float).reshape(4)
            elif random_actions is not None:
                a = random_actions.uniform(-1.0, 1.0, 4)
            else:
                a = np.asarray(policy(h), dtype=float).reshape(4)
            res = env.step(state, a)
            state, obs = res.state, res.observation
            observations.append(obs)
            actions.append(np.clip(a, -1.0, 1.0))
            rewards.append(res.reward)
            dones.append(float(res.done))
            events.extend(res.events)
            results.append(res)
            success = success or res.reward > 0
            a_enc = model.encode_motor(torch.as_tensor(actions[-1], dtype=dtype)[None])
            if res.done:
                break
    finally:
        model.train(was_training)
    record = EpisodeRecord.from_steps(observations, np.array(actions), rewards, dones)
    return EpisodeOutcome(sentence, record, success, len(actions), events, hiddens, post_means, results)


def actor_policy(actor, deterministic: bool, generator=None) -> Policy:
    def policy(h):
        a, _ = actor.act(h, deterministic=deterministic, generator=generator)
        return a[0].numpy()
    return policy
