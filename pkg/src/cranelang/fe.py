"""Free-energy arithmetic: Gaussian KLD, evidence free energy, curiosity and the soft Q target."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import torch
import torch.nn.functional as F

MODALITIES = ("vision", "touch", "proprioception", "command", "feedback")
CONTINUOUS = ("vision", "touch", "proprioception")
VOICES = ("command", "feedback")
CURIOUS = ("vision", "touch", "proprioception", "feedback")

# eta per curious modality, in CURIOUS order
CURIOSITY_PRESETS = {
    "none": (0.0, 0.0, 0.0, 0.0),
    "sensorimotor": (0.05, 2.0, 0.1, 0.0),
    "all": (0.05, 2.0, 0.1, 0.3),
}


@dataclass
class DiagonalGaussian:
    mean: torch.Tensor
    std: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.std.shape:
            raise ValueError(f"mean {tuple(self.mean.shape)} and std {tuple(self.std.shape)} differ")

    def rsample(self, noise: torch.Tensor | None = None, generator: torch.Generator | None = None):
        if noise is None:
            noise = torch.randn(self.mean.shape, generator=generator, dtype=self.mean.dtype)
        return self.mean + self.std * noise

    def detach(self) -> "DiagonalGaussian":
        return DiagonalGaussian(self.mean.detach(), self.std.detach())


@dataclass
class IntrinsicConfig:
    eta: tuple[float, float, float, float] = CURIOSITY_PRESETS["all"]
    alpha: float = 0.05
    gamma: float = 0.99
    tau: float = 0.005

    def __post_init__(self):
        if len(self.eta) != len(CURIOUS) or any(e < 0 for e in self.eta):
            raise ValueError(f"eta must be {len(CURIOUS)} non-negative weights, got {self.eta}")
        if self.alpha < 0 or not 0 <= self.gamma <= 1 or not 0 <= self.tau <= 1:
            raise ValueError("need alpha >= 0 and gamma, tau in [0, 1]")

    @property
    def eta_by_modality(self) -> dict[str, float]:
        return dict(zip(CURIOUS, self.eta))


def kld_diag(q: DiagonalGaussian, p: DiagonalGaussian) -> torch.Tensor:
    """KL(q || p) for diagonal Gaussians, summed over the last axis."""
    if q.mean.shape != p.mean.shape:
        raise ValueError(f"dimension mismatch: {tuple(q.mean.shape)} vs {tuple(p.mean.shape)}")
    var_ratio = (q.std / p.std) ** 2
    diff = ((q.mean - p.mean) / p.std) ** 2
    return (torch.log(p.std / q.std) + 0.5 * (var_ratio + diff) - 0.5).sum(-1)


def _masked(term: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    # where() rather than multiply: padded steps may hold arbitrary values
    return torch.where(mask > 0, term, torch.zeros_like(term))


def negative_log_likelihood(name: str, prediction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Per-step accuracy loss for one modality; leading axes (B, T) kept.

    Continuous senses use a unit-variance Gaussian with constants dropped
    (half squared error); voices use categorical cross-entropy per row.
    """
    if name in CONTINUOUS:
        err = 0.5 * (prediction - target) ** 2
        return err.flatten(2).sum(-1)
    logp = F.log_softmax(prediction, dim=-1)
    return -(target * logp).sum((-1, -2))


def free_energy_terms(latents: Mapping[str, tuple[DiagonalGaussian, DiagonalGaussian]],
                      predictions: Mapping[str, torch.Tensor],
                      targets: Mapping[str, torch.Tensor]):
    """Per-step complexity and inaccuracy tensors (B, T) for every modality."""
    complexity = {name: kld_diag(q, p) for name, (q, p) in latents.items()}
    inaccuracy = {name: negative_log_likelihood(name, predictions[name], targets[name])
                  for name in predictions}
    return complexity, inaccuracy


def evidence_free_energy(latents, predictions, targets, mask: torch.Tensor,
                         weights: Mapping[str, float] | None = None) -> torch.Tensor:
    """Masked F summed over steps and modalities, averaged over the batch axis."""
    complexity, inaccuracy = free_energy_terms(latents, predictions, targets)
    weights = weights or {}
    total = torch.zeros_like(mask, dtype=mask.dtype)
    for name, kld in complexity.items():
        total = total + weights.get(name, 1.0) * kld
    for nll in inaccuracy.values():
        total = total + nll
    return _masked(total, mask).sum() / mask.shape[0]


def curiosity(complexity: Mapping[str, torch.Tensor], eta: Mapping[str, float]) -> torch.Tensor:
    """Intrinsic reward: eta-weighted KLD summed over curious modalities."""
    out = None
    for name, w in eta.items():
        if w > 0:
            term = w * complexity[name]
            out = term if out is None else out + term
    if out is None:
        ref = next(iter(complexity.values()))
        out = torch.zeros_like(ref)
    return out


def q_target(reward, curiosity_bonus, entropy, next_q, done, gamma: float, alpha: float):
    """Soft Bellman target with curiosity; the bootstrap is cut where ``done`` is 1."""
    return reward + curiosity_bonus + alpha * entropy + gamma * (1.0 - done) * next_q


def squashed_gaussian_log_prob(pre_tanh: torch.Tensor, dist: DiagonalGaussian) -> torch.Tensor:
    """log density of tanh(u), u ~ N(mean, std), with the exact change-of-variables term."""
    z = (pre_tanh - dist.mean) / dist.std
    log_normal = -0.5 * z ** 2 - torch.log(dist.std) - 0.5 * math.log(2 * math.pi)
    # log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
    log_det = 2.0 * (math.log(2.0) - pre_tanh - F.softplus(-2.0 * pre_tanh))
    return (log_normal - log_det).sum(-1)
