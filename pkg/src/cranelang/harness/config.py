"""Run configuration and presets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from cranelang import fm as fm_mod
from cranelang import language as lang
from cranelang.fe import CURIOSITY_PRESETS, IntrinsicConfig

CURIOSITY_INDEXING = ("current", "next")


@dataclass(frozen=True)
class RunConfig:
    curiosity: str = "all"
    scale: str = "full"
    seed: int = 0
    epochs: int = 2000
    eval_every: int = 50
    rolling_window: int = 10
    out: str = "runs/run"
    model: str = "full"
    episodes_per_sentence: int = 1
    batch_size: int = 32
    buffer_capacity: int = 256
    alpha: float = 0.05
    gamma: float = 0.99
    tau: float = 0.005
    agent_lr: float = 3e-4
    fm_lr: float | None = None
    agent_width: int | None = None
    alpha_update: bool = False
    agent_updates: int = 1
    init_log_std: float | None = None
    max_log_std: float = 2.0
    curiosity_index: str = "current"
    checkpoint_every: int = 0     # 0: only at the end

    def __post_init__(self):
        if self.curiosity not in CURIOSITY_PRESETS:
            raise ValueError(f"curiosity must be one of {sorted(CURIOSITY_PRESETS)}")
        lang.get_scale(self.scale)
        fm_mod.get_config(self.model)
        if self.epochs < 0 or self.eval_every < 1 or self.rolling_window < 1:
            raise ValueError("epochs >= 0, eval_every >= 1 and rolling_window >= 1 required")
        if self.curiosity_index not in CURIOSITY_INDEXING:
            raise ValueError(f"curiosity_index must be one of {CURIOSITY_INDEXING}")

    @property
    def eta(self) -> tuple[float, float, float, float]:
        return CURIOSITY_PRESETS[self.curiosity]

    def intrinsic(self) -> IntrinsicConfig:
        return IntrinsicConfig(eta=self.eta, alpha=self.alpha, gamma=self.gamma, tau=self.tau)

    def fm_config(self) -> fm_mod.FMConfig:
        cfg = fm_mod.get_config(self.model)
        return cfg if self.fm_lr is None else replace(cfg, lr=self.fm_lr)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    @classmethod
    def load(cls, run_dir) -> "RunConfig":
        manifest = json.loads((Path(run_dir) / "manifest.json").read_text())
        return cls.from_dict(manifest["config"])


# desk-scale smoke experiment: restricted task, tiny model, agent settings tuned for 2000 epochs
SMOKE_PRESET = dict(scale="smoke", model="tiny", curiosity="all", epochs=2000, eval_every=50,
                    alpha=0.005, agent_updates=4, agent_lr=1e-3, init_log_std=-2.0, max_log_std=-2.0)


def smoke_config(seed: int = 0, out: str = "runs/smoke", **overrides) -> RunConfig:
    return RunConfig(**{**SMOKE_PRESET, "seed": seed, "out": out, **overrides})
