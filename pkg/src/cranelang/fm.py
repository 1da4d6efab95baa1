"""Variational recurrent forward model over vision, touch, proprioception and two voices."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from cranelang import fe
from cranelang import language as lang
from cranelang.fe import DiagonalGaussian

MOTOR_DIM = 4
TOUCH_DIM = 16
PROPRIO_DIM = 4
VOICE_LEN = 3


class NonFiniteLoss(RuntimeError):
    pass


@dataclass(frozen=True)
class FMConfig:
    vision_size: int = 16
    hidden: int = 256
    latents: tuple = (("vision", 16), ("touch", 8), ("proprioception", 8), ("command", 16), ("feedback", 16))
    vision_enc: int = 128
    vision_dec_channels: int = 64
    touch_enc: int = 20
    proprio_enc: int = 4
    motor_enc: int = 8
    token_embed: int = 8
    voice_width: int = 64
    voice_out: int = 256
    voice_dec: int = 192
    head_width: int = 64
    batch_norm: bool = True
    sigma_floor: float = 1e-4
    lr: float = 3e-4
    grad_clip: float | None = 10.0
    # widen the (tanh + 1) / 2 map so exact 0/1 targets sit at finite pre-activations
    range_margin: float = 0.0
    # per-modality complexity weights (beta); missing modalities weigh 1
    complexity_weights: tuple[tuple[str, float], ...] = ()

    @property
    def latent_dims(self) -> dict[str, int]:
        return dict(self.latents)

    @property
    def z_dim(self) -> int:
        return sum(d for _, d in self.latents)

    @property
    def dec_in(self) -> int:
        return self.hidden + self.motor_enc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["latents"] = [list(x) for x in self.latents]
        d["complexity_weights"] = [list(x) for x in self.complexity_weights]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FMConfig":
        d = dict(d)
        d["latents"] = tuple(tuple(x) for x in d["latents"])
        d["complexity_weights"] = tuple(tuple(x) for x in d.get("complexity_weights", ()))
        return cls(**d)


FULL = FMConfig()
TINY = FMConfig(vision_size=8, hidden=128,
                latents=(("vision", 8), ("touch", 4), ("proprioception", 4), ("command", 8), ("feedback", 8)),
                vision_enc=64, vision_dec_channels=32, touch_enc=10, proprio_enc=4, motor_enc=8,
                token_embed=8, voice_width=32, voice_out=128, voice_dec=96, head_width=32,
                batch_norm=False, lr=1e-3, range_margin=1.0,
                complexity_weights=(("vision", 0.05),))
# small enough for exhaustive finite-difference checks
MICRO = FMConfig(vision_size=4, hidden=4,
                 latents=(("vision", 2), ("touch", 2), ("proprioception", 2), ("command", 2), ("feedback", 2)),
                 vision_enc=3, vision_dec_channels=2, touch_enc=3, proprio_enc=2, motor_enc=2,
                 token_embed=2, voice_width=3, voice_out=3, voice_dec=6, head_width=3, batch_norm=True)
PRESETS = {"full": FULL, "tiny": TINY, "micro": MICRO}


def get_config(name: str | FMConfig) -> FMConfig:
    if isinstance(name, FMConfig):
        return name
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown model preset {name!r}") from None


class MaskedBatchNorm(nn.Module):
    """Batch norm over rows, where statistics see only rows flagged valid."""

    def __init__(self, n: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.bn = nn.BatchNorm1d(n, momentum=momentum, eps=eps)

    def forward(self, x: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
        bn = self.bn
        if not self.training:
            return bn(x)
        sel = x if valid is None else x[valid.reshape(-1) > 0]
        if sel.shape[0] < 2:
            return F.batch_norm(x, bn.running_mean, bn.running_var, bn.weight, bn.bias, False, 0.0, bn.eps)
        mean = sel.mean(0)
        var = sel.var(0, unbiased=False)
        with torch.no_grad():
            n = sel.shape[0]
            bn.running_mean.mul_(1 - bn.momentum).add_(bn.momentum * mean)
            bn.running_var.mul_(1 - bn.momentum).add_(bn.momentum * var * n / (n - 1))
        return (x - mean) / torch.sqrt(var + bn.eps) * bn.weight + bn.bias


def unit_range(x: torch.Tensor, margin: float = 0.0) -> torch.Tensor:
    """(tanh + 1) / 2, optionally widened by ``margin`` and clamped back to [0, 1].

    The clamp passes gradients straight through. Without a margin, targets of exactly 0 or 1
    pull the tanh into float saturation where its gradient vanishes.
    """
    if not margin:
        return (torch.tanh(x) + 1.0) / 2.0
    y = (1.0 + (1.0 + margin) * torch.tanh(x)) / 2.0
    return y + (y.clamp(0.0, 1.0) - y).detach()


class VoiceEncoder(nn.Module):
    def __init__(self, cfg: FMConfig):
        super().__init__()
        self.embed = nn.Linear(lang.VOCAB_SIZE, cfg.token_embed, bias=False)
        self.inp = nn.Sequential(nn.Linear(cfg.token_embed, cfg.voice_width), nn.PReLU())
        self.gru = nn.GRU(cfg.voice_width, cfg.voice_width, batch_first=True)
        self.out = nn.Sequential(nn.Linear(cfg.voice_width, cfg.voice_out), nn.PReLU())

    def forward(self, rows: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        lead = rows.shape[:-2]
        x = self.inp(self.embed(rows.reshape(-1, rows.shape[-2], rows.shape[-1])))
        seq, _ = self.gru(x)
        if lengths is None:
            last = seq[:, -1]
        else:
            idx = (lengths.reshape(-1).long() - 1).clamp(0, seq.shape[1] - 1)
            last = seq[torch.arange(seq.shape[0]), idx]
        return self.out(last).reshape(*lead, -1)


class VoiceDecoder(nn.Module):
    def __init__(self, cfg: FMConfig):
        super().__init__()
        self.width = cfg.voice_width
        self.fc = nn.Linear(cfg.dec_in, cfg.voice_dec)
        self.bn = MaskedBatchNorm(cfg.voice_dec) if cfg.batch_norm else None
        self.act = nn.PReLU()
        self.to_rows = nn.Linear(cfg.voice_dec, VOICE_LEN * cfg.voice_width)
        self.gru = nn.GRU(cfg.voice_width, cfg.voice_width, batch_first=True)
        self.logits = nn.Linear(cfg.voice_width, lang.VOCAB_SIZE)

    def forward(self, x, valid=None):
        y = self.fc(x)
        if self.bn is not None:
            y = self.bn(y, valid)
        y = self.to_rows(self.act(y)).reshape(-1, VOICE_LEN, self.width)
        seq, _ = self.gru(y)
        return self.logits(seq)


class VisionDecoder(nn.Module):
    def __init__(self, cfg: FMConfig):
        super().__init__()
        self.half = cfg.vision_size // 2
        self.ch = cfg.vision_dec_channels
        self.fc = nn.Linear(cfg.dec_in, self.half * self.half * self.ch)
        self.bn = MaskedBatchNorm(self.half * self.half * self.ch) if cfg.batch_norm else None
        self.act = nn.PReLU()
        # 16 channels so the x2 pixel shuffle lands on 4 output channels
        self.conv = nn.Conv2d(self.ch, 16, 3, padding=1, padding_mode="reflect")
        self.shuffle = nn.PixelShuffle(2)
        self.margin = cfg.range_margin

    def forward(self, x, valid=None):
        y = self.fc(x)
        if self.bn is not None:
            y = self.bn(y, valid)
        y = self.act(y).reshape(-1, self.ch, self.half, self.half)
        y = self.shuffle(self.conv(y))          # (N, 4, V, V)
        return unit_range(y.permute(0, 2, 3, 1), self.margin)


class GaussianHead(nn.Module):
    """Two-layer map to (mean, std) with std = softplus + floor."""

    def __init__(self, n_in: int, width: int, n_out: int, floor: float):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(n_in, width), nn.PReLU(), nn.Linear(width, 2 * n_out))
        self.floor = floor

    def forward(self, x) -> DiagonalGaussian:
        mean, raw = self.net(x).chunk(2, dim=-1)
        return DiagonalGaussian(mean, F.softplus(raw) + self.floor)


@dataclass
class Observation:
    """Batched observation tensors with leading axes (B,) or (B, T)."""
    vision: torch.Tensor
    touch: torch.Tensor
    proprioception: torch.Tensor
    command: torch.Tensor
    feedback: torch.Tensor
    feedback_len: torch.Tensor

    def targets(self) -> dict[str, torch.Tensor]:
        return {"vision": self.vision, "touch": self.touch, "proprioception": self.proprioception,
                "command": self.command, "feedback": self.feedback}

    def at(self, t) -> "Observation":
        return Observation(**{k: getattr(self, k)[:, t] for k in self.__dataclass_fields__})

    def to(self, dtype) -> "Observation":
        return Observation(**{k: (v if k == "feedback_len" else v.to(dtype))
                              for k, v in vars(self).items()})

    @classmethod
    def from_bundles(cls, bundles, dtype=torch.float32) -> "Observation":
        """Stack ObservationBundles into a (1, T) batch."""
        fb = [lang.pad_voice(b.feedback_voice) for b in bundles]

        def st(xs):
            return torch.as_tensor(np.stack(xs)[None], dtype=dtype)

        return cls(vision=st([b.vision for b in bundles]), touch=st([b.touch for b in bundles]),
                   proprioception=st([b.proprioception for b in bundles]),
                   command=st([b.command_voice for b in bundles]),
                   feedback=st([f[0] for f in fb]),
                   feedback_len=torch.tensor([[f[1] for f in fb]]))


@dataclass
class FilterStep:
    h: torch.Tensor
    z: torch.Tensor
    latents: dict[str, tuple[DiagonalGaussian, DiagonalGaussian]]


@dataclass
class ReplayPass:
    hidden: torch.Tensor                 # (B, T+1, H): h after integrating o_0..o_T
    latents: dict                        # name -> (posterior, prior), each (B, T+1, d)
    predictions: dict                    # name -> (B, T, ...) predictions of o_1..o_T
    complexity: dict = field(default_factory=dict)
    inaccuracy: dict = field(default_factory=dict)
    free_energy: torch.Tensor | None = None


class ForwardModel(nn.Module):
    def __init__(self, cfg: FMConfig | str = FULL):
        super().__init__()
        cfg = get_config(cfg)
        self.cfg = cfg
        V = cfg.vision_size
        self.enc = nn.ModuleDict({
            "vision": nn.Sequential(nn.Flatten(), nn.Linear(V * V * 4, cfg.vision_enc), nn.PReLU()),
            "touch": nn.Sequential(nn.Linear(TOUCH_DIM, cfg.touch_enc), nn.PReLU()),
            "proprioception": nn.Sequential(nn.Linear(PROPRIO_DIM, cfg.proprio_enc), nn.PReLU()),
        })
        self.voice_enc = VoiceEncoder(cfg)   # shared by command and feedback
        self.motor_enc = nn.Sequential(nn.Linear(MOTOR_DIM, cfg.motor_enc), nn.PReLU())
        enc_dims = {"vision": cfg.vision_enc, "touch": cfg.touch_enc, "proprioception": cfg.proprio_enc,
                    "command": cfg.voice_out, "feedback": cfg.voice_out}
        ctx = cfg.hidden + cfg.motor_enc
        self.prior = nn.ModuleDict({k: GaussianHead(ctx, cfg.head_width, d, cfg.sigma_floor)
                                    for k, d in cfg.latents})
        self.posterior = nn.ModuleDict({k: GaussianHead(ctx + enc_dims[k], cfg.head_width, d, cfg.sigma_floor)
                                        for k, d in cfg.latents})
        self.cell = nn.GRUCell(cfg.z_dim, cfg.hidden)
        self.dec = nn.ModuleDict({
            "vision": VisionDecoder(cfg),
            "touch": nn.Linear(cfg.dec_in, TOUCH_DIM),
            "proprioception": nn.Linear(cfg.dec_in, PROPRIO_DIM),
            "command": VoiceDecoder(cfg),
            "feedback": VoiceDecoder(cfg),
        })

    # single-step pieces

    def initial_hidden(self, batch: int = 1, dtype=None) -> torch.Tensor:
        dtype = dtype or next(self.parameters()).dtype
        return torch.zeros(batch, self.cfg.hidden, dtype=dtype)

    def encode_motor(self, a: torch.Tensor) -> torch.Tensor:
        return self.motor_enc(a)

    def encode(self, obs: Observation) -> dict[str, torch.Tensor]:
        """Per-modality encodings; accepts any number of leading axes."""
        lead = obs.touch.shape[:-1]
        V = self.cfg.vision_size
        out = {
            "vision": self.enc["vision"](obs.vision.reshape(-1, V, V, 4)).reshape(*lead, -1),
            "touch": self.enc["touch"](obs.touch),
            "proprioception": self.enc["proprioception"](obs.proprioception),
            "command": self.voice_enc(obs.command),
            "feedback": self.voice_enc(obs.feedback, obs.feedback_len),
        }
        return out

    def compute_prior(self, h_prev, a_enc) -> dict[str, DiagonalGaussian]:
        ctx = torch.cat([h_prev, a_enc], -1)
        return {k: head(ctx) for k, head in self.prior.items()}

    def compute_posterior(self, h_prev, a_enc, encoded: Mapping[str, torch.Tensor]) -> dict[str, DiagonalGaussian]:
        ctx = torch.cat([h_prev, a_enc], -1)
        return {k: head(torch.cat([ctx, encoded[k]], -1)) for k, head in self.posterior.items()}

    def advance_hidden(self, h_prev, z) -> torch.Tensor:
        return self.cell(z, h_prev)

    def filter_step(self, h_prev, a_enc, encoded, noise: torch.Tensor | None = None,
                    generator: torch.Generator | None = None) -> FilterStep:
        prior = self.compute_prior(h_prev, a_enc)
        post = self.compute_posterior(h_prev, a_enc, encoded)
        if noise is None:
            noise = torch.randn(h_prev.shape[0], self.cfg.z_dim, generator=generator, dtype=h_prev.dtype)
        parts, i = [], 0
        for k, d in self.cfg.latents:
            parts.append(post[k].rsample(noise[:, i:i + d]))
            i += d
        z = torch.cat(parts, -1)
        return FilterStep(self.advance_hidden(h_prev, z), z, {k: (post[k], prior[k]) for k in post})

    def predict_next(self, h, a_enc, valid: torch.Tensor | None = None) -> dict[str, torch.Tensor]:
        """Decode (h, a) into next-step predictions; voices come out as (3, 18) logits."""
        lead = h.shape[:-1]
        x = torch.cat([h, a_enc], -1).reshape(-1, self.cfg.dec_in)
        V, m = self.cfg.vision_size, self.cfg.range_margin
        return {
            "vision": self.dec["vision"](x, valid).reshape(*lead, V, V, 4),
            "touch": unit_range(self.dec["touch"](x), m).reshape(*lead, TOUCH_DIM),
            "proprioception": unit_range(self.dec["proprioception"](x), m).reshape(*lead, PROPRIO_DIM),
            "command": self.dec["command"](x, valid).reshape(*lead, VOICE_LEN, lang.VOCAB_SIZE),
            "feedback": self.dec["feedback"](x, valid).reshape(*lead, VOICE_LEN, lang.VOCAB_SIZE),
        }

    # whole-episode pass

    def forward(self, obs: Observation, actions: torch.Tensor, mask: torch.Tensor,
                noise: torch.Tensor | None = None, generator: torch.Generator | None = None,
                weights: Mapping[str, float] | None = None) -> ReplayPass:
        """Filter o_0..o_T (T+1 steps) under actions a_0..a_{T-1}; F over the T masked transitions.

        ``weights`` scales each modality's complexity in F and defaults to the config's betas.
        Curiosity reads the unweighted complexities.

        ``mask[:, t]`` marks transition t real. Step t contributes the complexity of o_t and the
        prediction error for o_{t+1}.
        """
        B, T1 = obs.touch.shape[:2]
        T = T1 - 1
        if actions.shape[:2] != (B, T) or mask.shape != (B, T):
            raise ValueError(f"expected actions/mask for {T} steps, got {tuple(actions.shape)}, {tuple(mask.shape)}")
        dtype = obs.touch.dtype
        if noise is None:
            noise = torch.randn(B, T1, self.cfg.z_dim, generator=generator, dtype=dtype)
        encoded = self.encode(obs)
        a_enc = self.encode_motor(actions)
        a_prev = torch.cat([torch.zeros_like(a_enc[:, :1]), a_enc], 1)
        H = self.cfg.hidden
        names = [k for k, _ in self.cfg.latents]
        heads = [self.posterior[k].net for k in names]
        # first posterior layer split into its h part (inside the loop) and the rest (batched)
        w_h = torch.cat([hd[0].weight[:, :H] for hd in heads], 0)
        rest = [F.linear(torch.cat([a_prev, encoded[k]], -1), hd[0].weight[:, H:], hd[0].bias)
                for k, hd in zip(names, heads)]
        widths = [hd[0].out_features for hd in heads]
        h = self.initial_hidden(B, dtype)
        h_prev, hs = [], []
        post_m = {k: [] for k in names}
        post_s = {k: [] for k in names}
        for t in range(T1):
            h_prev.append(h)
            pre = (h @ w_h.T).split(widths, -1)
            zs, i = [], 0
            for j, (k, d) in enumerate(self.cfg.latents):
                hd = heads[j]
                mean, raw = hd[2](hd[1](pre[j] + rest[j][:, t])).chunk(2, -1)
                std = F.softplus(raw) + self.cfg.sigma_floor
                post_m[k].append(mean)
                post_s[k].append(std)
                zs.append(mean + std * noise[:, t, i:i + d])
                i += d
            h = self.advance_hidden(h, torch.cat(zs, -1))
            hs.append(h)
        hidden = torch.stack(hs, 1)
        prior = self.compute_prior(torch.stack(h_prev, 1), a_prev)
        latents = {k: (DiagonalGaussian(torch.stack(post_m[k], 1), torch.stack(post_s[k], 1)), prior[k])
                   for k in names}
        preds = self.predict_next(hidden[:, :T], a_enc, valid=mask)
        step_latents = {k: (DiagonalGaussian(q.mean[:, :T], q.std[:, :T]),
                            DiagonalGaussian(p.mean[:, :T], p.std[:, :T])) for k, (q, p) in latents.items()}
        targets = {k: v[:, 1:] for k, v in obs.targets().items()}
        complexity, inaccuracy = fe.free_energy_terms(step_latents, preds, targets)
        if weights is None:
            weights = dict(self.cfg.complexity_weights)
        free = fe.evidence_free_energy(step_latents, preds, targets, mask, weights)
        # the final observation's complexity is needed for "next"-indexed curiosity
        complexity_full = {k: fe.kld_diag(q, p) for k, (q, p) in latents.items()}
        return ReplayPass(hidden, latents, preds, complexity_full, inaccuracy, free)


class FMTrainer:
    """Adam on F; aborts on non-finite values."""

    def __init__(self, model: ForwardModel, lr: float | None = None):
        self.model = model
        self.opt = torch.optim.Adam(model.parameters(), lr=lr or model.cfg.lr)

    def train_step(self, obs: Observation, actions, mask, generator=None, noise=None) -> ReplayPass:
        self.model.train()
        rp = self.model(obs, actions, mask, noise=noise, generator=generator)
        if not torch.isfinite(rp.free_energy):
            raise NonFiniteLoss(f"free energy is {rp.free_energy.item()}")
        self.opt.zero_grad()
        rp.free_energy.backward()
        clip = self.model.cfg.grad_clip
        if clip:
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), clip)
        self.opt.step()
        return rp


def parameter_checksum(module: nn.Module) -> str:
    import hashlib
    h = hashlib.sha256()
    for name, t in module.state_dict().items():
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


# dreaming

@dataclass
class DreamStep:
    vision: np.ndarray
    touch: np.ndarray
    proprioception: np.ndarray
    command: np.ndarray      # (3, 18) row distributions
    feedback: np.ndarray
    motor: np.ndarray


def _prediction_as_observation(pred: dict) -> Observation:
    # the model treats its own predictions as sensations; voices enter as row distributions
    fb = torch.softmax(pred["feedback"], -1)
    return Observation(vision=pred["vision"], touch=pred["touch"], proprioception=pred["proprioception"],
                       command=torch.softmax(pred["command"], -1), feedback=fb,
                       feedback_len=torch.full(fb.shape[:1], VOICE_LEN, dtype=torch.long))


@torch.no_grad()
def dream_rollout(model: ForwardModel, initial_obs, actor, T: int, generator=None) -> list[DreamStep]:
    """Closed-loop imagination: only the first genuine observation is ever read.

    ``initial_obs`` may be a single ObservationBundle or a sequence of them; only element 0
    is consumed. Step 0 reports the genuine bundle; step t > 0 reports the prediction made at
    step t - 1, which is also what the model filters at step t.
    """
    if not 1 <= T <= 30:
        raise ValueError("T must be in [1, 30]")
    first = initial_obs[0] if isinstance(initial_obs, (list, tuple)) else initial_obs
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    obs = Observation.from_bundles([first], dtype=dtype).at(0)
    fb_rows, _ = lang.pad_voice(first.feedback_voice)
    current = {"vision": np.array(first.vision), "touch": np.array(first.touch),
               "proprioception": np.array(first.proprioception),
               "command": np.array(first.command_voice), "feedback": fb_rows}
    h = model.initial_hidden(1, dtype)
    a_enc = torch.zeros(1, model.cfg.motor_enc, dtype=dtype)
    out = []
    try:
        for t in range(T):
            st = model.filter_step(h, a_enc, model.encode(obs), generator=generator)
            h = st.h
            a = actor.act(h, deterministic=True)[0]
            out.append(DreamStep(current["vision"], current["touch"], current["proprioception"],
                                 current["command"], current["feedback"], a[0].numpy().copy()))
            a_enc = model.encode_motor(a)
            pred = model.predict_next(h, a_enc)
            obs = _prediction_as_observation(pred)
            current = {k: getattr(obs, k)[0].numpy().copy() for k in pred}
    finally:
        model.train(was_training)
    return out
