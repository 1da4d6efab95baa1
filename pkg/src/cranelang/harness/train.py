"""Training schedule: one episode, one model update and one agent update per epoch."""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

import cranelang
from cranelang import language as lang
from cranelang.agent import SAC, masked_mean
from cranelang.checkpoint import load_checkpoint, save_checkpoint
from cranelang.fe import CURIOUS, curiosity
from cranelang.fm import FMTrainer, ForwardModel, NonFiniteLoss
from cranelang.harness.config import RunConfig
from cranelang.harness.evaluate import evaluate
from cranelang.harness.rollout import actor_policy, run_episode
from cranelang.replay import ReplayBuffer

log = logging.getLogger(__name__)

TRAIN_COLUMNS = ["epoch", "sentence", "episode_steps", "episode_success", "free_energy",
                 "curiosity", "entropy", "extrinsic_reward", "critic_loss", "actor_loss", "alpha"]
EVAL_COLUMNS = ["epoch", "split", "category", "successes", "episodes", "rate"]
SPLITS = ("learned", "unlearned")


@dataclass
class Agent:
    model: ForwardModel
    sac: SAC

    def modules(self) -> dict:
        return {"fm": self.model, "actor": self.sac.actor, "critics": self.sac.critics}


def build_agent(cfg: RunConfig) -> Agent:
    torch.manual_seed(cfg.seed)
    fmc = cfg.fm_config()
    model = ForwardModel(fmc)
    sac = SAC(hidden=fmc.hidden, width=cfg.agent_width or fmc.hidden, config=cfg.intrinsic(),
              lr=cfg.agent_lr, alpha_update=cfg.alpha_update, init_log_std=cfg.init_log_std,
              max_log_std=cfg.max_log_std)
    return Agent(model, sac)


def load_agent(run_dir) -> tuple[RunConfig, Agent, lang.Split]:
    run_dir = Path(run_dir)
    cfg = RunConfig.load(run_dir)
    agent = build_agent(cfg)
    load_checkpoint(run_dir / "checkpoint.bin", agent.modules())
    split = lang.load_split(run_dir / "split.txt")
    return cfg, agent, split


def _fmt(x) -> str:
    # fixed formatting keeps the metrics files byte-stable across runs
    if isinstance(x, float):
        return "nan" if np.isnan(x) else f"{x:.9g}"
    return str(x)


def episode_seed(run_seed: int, epoch: int) -> int:
    return run_seed * 1_000_003 + epoch


def step_curiosity(complexity: dict, eta: dict, indexing: str, T: int) -> torch.Tensor:
    full = curiosity({k: complexity[k] for k in CURIOUS}, eta)
    return full[:, :T] if indexing == "current" else full[:, 1:T + 1]


def eval_rows(epoch: int, model, actor, split: lang.Split, cfg: RunConfig) -> list[list]:
    rows = []
    for name, sentences in zip(SPLITS, (split.train, split.test)):
        if not sentences:
            continue
        r = evaluate(model, actor, sentences, cfg.episodes_per_sentence, cfg.scale, seed=cfg.seed)
        for cat in r.categories:
            rows.append([epoch, name, cat, r.successes.get(cat, 0), r.episodes[cat], r.rate(cat)])
    return rows


def run_training(cfg: RunConfig, progress: bool = False) -> Path:
    """Train and write ``split.txt``, ``train_metrics.csv``, ``eval_metrics.csv``,
    ``checkpoint.bin`` and ``manifest.json`` into ``cfg.out``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.time()
    torch.set_num_threads(1)
    split = lang.generate_split(cfg.scale, cfg.seed)
    lang.save_split(split, out / "split.txt")
    agent = build_agent(cfg)
    model, sac = agent.model, agent.sac
    trainer = FMTrainer(model)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    eta = cfg.intrinsic().eta_by_modality
    status, error = "complete", None
    epoch = 0

    with open(out / "train_metrics.csv", "w", newline="") as ft, open(out / "eval_metrics.csv", "w", newline="") as fv:
        wt, wv = csv.writer(ft, lineterminator="\n"), csv.writer(fv, lineterminator="\n")
        wt.writerow(TRAIN_COLUMNS)
        wv.writerow(EVAL_COLUMNS)
        try:
            for epoch in range(1, cfg.epochs + 1):
                sentence = split.train[int(rng.integers(len(split.train)))]
                ep = run_episode(model, actor_policy(sac.actor, False, gen), sentence,
                                 episode_seed(cfg.seed, epoch), scale=cfg.scale, generator=gen)
                buffer.push(ep.record)
                batch = buffer.sample(cfg.batch_size, rng)
                T = batch.actions.shape[1]
                try:
                    rp = trainer.train_step(batch.obs, batch.actions, batch.mask, generator=gen)
                except NonFiniteLoss as exc:
                    raise FloatingPointError(f"epoch {epoch}: {exc}") from exc
                hidden = rp.hidden.detach()
                cur = step_curiosity({k: v.detach() for k, v in rp.complexity.items()}, eta,
                                     cfg.curiosity_index, T)
                for _ in range(cfg.agent_updates):
                    closs = sac.critic_update(hidden, batch.actions, batch.reward, batch.done, batch.mask, cur, gen)
                    aloss, entropy = sac.actor_update(hidden, batch.mask, gen)
                    sac.polyak()
                wt.writerow([_fmt(v) for v in (
                    epoch, str(sentence), ep.steps, int(ep.success), rp.free_energy.item(),
                    float(masked_mean(cur, batch.mask)), entropy,
                    float(masked_mean(batch.reward, batch.mask)), closs, aloss, sac.alpha)])
                if epoch % cfg.eval_every == 0:
                    rows = eval_rows(epoch, model, sac.actor, split, cfg)
                    wv.writerows([[_fmt(v) for v in r] for r in rows])
                    fv.flush()
                    ft.flush()
                    if progress:
                        summary = " ".join(f"{r[1]}:{r[2]}={r[5]:.2f}" for r in rows if r[2] == "all")
                        log.info("epoch %d F=%.1f %s", epoch, rp.free_energy.item(), summary)
                if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
                    save_checkpoint(out / f"checkpoint_{epoch:06d}.bin", agent.modules(), {"epoch": epoch})
        except FloatingPointError as exc:
            status, error = "aborted", str(exc)
            log.error("training aborted: %s", exc)

    save_checkpoint(out / "checkpoint.bin", agent.modules(), {"epoch": epoch, "status": status})
    manifest = {
        "config": cfg.to_dict(),
        "status": status,
        "error": error,
        "epochs_completed": epoch if status == "complete" else epoch - 1,
        "versions": {"cranelang": cranelang.__version__, "torch": torch.__version__,
                     "numpy": np.__version__, "python": platform.python_version()},
        "wall_time_s": round(time.time() - t_start, 3),
        "files": ["split.txt", "train_metrics.csv", "eval_metrics.csv", "checkpoint.bin"],
        "train_columns": TRAIN_COLUMNS,
        "eval_columns": EVAL_COLUMNS,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out
