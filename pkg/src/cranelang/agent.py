"""Soft actor-critic over the forward model's hidden state."""

from __future__ import annotations

import copy
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from cranelang import fe
from cranelang.fe import DiagonalGaussian, IntrinsicConfig

MOTOR_DIM = 4
LOG_STD_RANGE = (-5.0, 2.0)


def _mlp(n_in, width, n_out):
    return nn.Sequential(nn.Linear(n_in, width), nn.PReLU(), nn.Linear(width, width), nn.PReLU(),
                         nn.Linear(width, n_out))


def masked_mean(x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    x = torch.where(mask > 0, x, torch.zeros_like(x))
    return x.sum() / mask.sum().clamp_min(1.0)


class Actor(nn.Module):
    def __init__(self, hidden: int = 256, width: int = 256, init_log_std: float | None = None,
                 max_log_std: float = LOG_STD_RANGE[1]):
        super().__init__()
        self.net = _mlp(hidden, width, 2 * MOTOR_DIM)
        self.log_std_range = (LOG_STD_RANGE[0], max_log_std)
        if init_log_std is not None:
            # start near a still, narrow policy instead of saturating the squash
            last = self.net[-1]
            with torch.no_grad():
                last.weight.mul_(0.01)
                last.bias.zero_()
                last.bias[MOTOR_DIM:] = init_log_std

    def distribution(self, h: torch.Tensor) -> DiagonalGaussian:
        mean, log_std = self.net(h).chunk(2, -1)
        log_std = log_std.clamp(*self.log_std_range)
        return DiagonalGaussian(mean, log_std.exp())

    def sample(self, h, generator=None, noise=None):
        """Reparameterized squashed sample and its log-density."""
        dist = self.distribution(h)
        u = dist.rsample(noise=noise, generator=generator)
        return torch.tanh(u), fe.squashed_gaussian_log_prob(u, dist)

    @torch.no_grad()
    def act(self, h, deterministic=False, generator=None):
        """Motor command in [-1, 1]^4 and its log-probability (None when deterministic)."""
        if deterministic:
            return torch.tanh(self.distribution(h).mean), None
        return self.sample(h, generator=generator)


class Critic(nn.Module):
    def __init__(self, hidden: int = 256, width: int = 256):
        super().__init__()
        self.net = _mlp(hidden + MOTOR_DIM, width, 1)

    def forward(self, h, a):
        return self.net(torch.cat([h, a], -1)).squeeze(-1)


class CriticPair(nn.Module):
    def __init__(self, hidden: int = 256, width: int = 256):
        super().__init__()
        self.q1, self.q2 = Critic(hidden, width), Critic(hidden, width)
        self.t1, self.t2 = copy.deepcopy(self.q1), copy.deepcopy(self.q2)
        for p in self.targets().parameters():
            p.requires_grad_(False)

    def online(self) -> nn.ModuleList:
        return nn.ModuleList([self.q1, self.q2])

    def targets(self) -> nn.ModuleList:
        return nn.ModuleList([self.t1, self.t2])

    def min_q(self, h, a):
        return torch.min(self.q1(h, a), self.q2(h, a))

    def min_target(self, h, a):
        return torch.min(self.t1(h, a), self.t2(h, a))


@torch.no_grad()
def polyak_update(critics: CriticPair, tau: float) -> None:
    """θ̄ <- τ θ + (1 - τ) θ̄, elementwise."""
    for src, dst in ((critics.q1, critics.t1), (critics.q2, critics.t2)):
        for p, tp in zip(src.parameters(), dst.parameters()):
            tp.mul_(1.0 - tau).add_(tau * p)


class SAC:
    """Actor, twin critics with targets, and their optimizers.

    Batch tensors: ``hidden`` (B, T+1, H) detached, ``actions`` (B, T, 4), ``reward``,
    ``done``, ``mask`` and ``curiosity`` all (B, T).
    """

    def __init__(self, hidden: int = 256, width: int = 256, config: IntrinsicConfig | None = None,
                 lr: float = 3e-4, alpha_update: bool = False, target_entropy: float = -float(MOTOR_DIM),
                 init_log_std: float | None = None, max_log_std: float = LOG_STD_RANGE[1]):
        self.config = config or IntrinsicConfig()
        self.actor = Actor(hidden, width, init_log_std, max_log_std)
        self.critics = CriticPair(hidden, width)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=lr)
        self.critic_opt = torch.optim.Adam(self.critics.online().parameters(), lr=lr)
        self.log_alpha = torch.tensor(math.log(self.config.alpha) if self.config.alpha > 0 else -math.inf,
                                      requires_grad=alpha_update)
        self.alpha_update_enabled = alpha_update
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=lr) if alpha_update else None
        self.target_entropy = target_entropy

    @property
    def alpha(self) -> float:
        return float(self.log_alpha.detach().exp())

    def modules(self) -> dict[str, nn.Module]:
        return {"actor": self.actor, "critics": self.critics}

    def to(self, dtype):
        self.actor.to(dtype)
        self.critics.to(dtype)
        return self

    def critic_targets(self, hidden, reward, done, curiosity, generator=None, noise=None):
        with torch.no_grad():
            nxt = hidden[:, 1:]
            a_next, logp = self.actor.sample(nxt, generator=generator, noise=noise)
            next_q = self.critics.min_target(nxt, a_next)
            return fe.q_target(reward, curiosity, -logp, next_q, done, self.config.gamma, self.alpha)

    def critic_loss(self, hidden, actions, reward, done, mask, curiosity, generator=None, noise=None):
        y = self.critic_targets(hidden, reward, done, curiosity, generator, noise)
        h = hidden[:, :-1]
        q1, q2 = self.critics.q1(h, actions), self.critics.q2(h, actions)
        loss = masked_mean(0.5 * (q1 - y) ** 2, mask) + masked_mean(0.5 * (q2 - y) ** 2, mask)
        return loss, y

    def actor_loss(self, hidden, mask, generator=None, noise=None):
        h = hidden[:, :-1]
        a, logp = self.actor.sample(h, generator=generator, noise=noise)
        for p in self.critics.online().parameters():
            p.requires_grad_(False)
        try:
            q = self.critics.min_q(h, a)
        finally:
            for p in self.critics.online().parameters():
                p.requires_grad_(True)
        alpha = self.alpha
        if alpha == 0.0:
            per_step = -q
        else:
            per_step = alpha * logp - q
        return masked_mean(per_step, mask), logp

    def critic_update(self, hidden, actions, reward, done, mask, curiosity, generator=None) -> float:
        loss, _ = self.critic_loss(hidden, actions, reward, done, mask, curiosity, generator)
        if not torch.isfinite(loss):
            raise FloatingPointError(f"critic loss is {loss.item()}")
        self.critic_opt.zero_grad()
        loss.backward()
        self.critic_opt.step()
        return loss.item()

    def actor_update(self, hidden, mask, generator=None) -> tuple[float, float]:
        """One actor step; returns (loss, masked mean entropy)."""
        loss, logp = self.actor_loss(hidden, mask, generator)
        if not torch.isfinite(loss):
            raise FloatingPointError(f"actor loss is {loss.item()}")
        self.actor_opt.zero_grad()
        loss.backward()
        self.actor_opt.step()
        entropy = float(masked_mean(-logp.detach(), mask))
        if self.alpha_update_enabled:
            self.alpha_update(entropy)
        return loss.item(), entropy

    def alpha_update(self, entropy: float) -> float:
        """Gradient step on log α: α shrinks when entropy exceeds the target and grows otherwise."""
        if not self.alpha_update_enabled:
            return self.alpha
        loss = self.log_alpha * (entropy - self.target_entropy)
        self.alpha_opt.zero_grad()
        loss.backward()
        self.alpha_opt.step()
        return self.alpha

    def polyak(self):
        polyak_update(self.critics, self.config.tau)
