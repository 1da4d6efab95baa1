"""Post-hoc analyses: PCA of command-voice latents and dream export."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from cranelang import env
from cranelang import language as lang
from cranelang.fm import dream_rollout
from cranelang.harness.rollout import actor_policy, run_episode


@dataclass
class LatentMatrix:
    values: np.ndarray                         # (N, d) command posterior means
    labels: list[tuple[str, str, str]]         # (verb, adjective, noun) per row
    steps: np.ndarray                          # step index within the episode


def collect_command_latents(model, actor, sentences, episodes: int = 1, scale="full", seed: int = 0) -> LatentMatrix:
    """Roll the deterministic policy and pool the command posterior mean at every step."""
    gen = torch.Generator().manual_seed(seed)
    rows, labels, steps = [], [], []
    for i, s in enumerate(sentences):
        for k in range(episodes):
            out = run_episode(model, actor_policy(actor, True, gen), s, seed * 100_003 + i * 101 + k,
                              scale=scale, generator=gen, keep_latents=True)
            for t, m in enumerate(out.posterior_means["command"]):
                rows.append(m)
                labels.append((s.action, s.color, s.shape))
                steps.append(t)
    d = model.cfg.latent_dims["command"]
    values = np.array(rows, dtype=float).reshape(-1, d)
    return LatentMatrix(values, labels, np.array(steps, dtype=int))


@dataclass
class PCAResult:
    components: np.ndarray          # (k, d), orthonormal rows
    explained_variance: np.ndarray  # (k,), non-increasing
    mean: np.ndarray
    projections: np.ndarray         # (N, k)


def _sign_fix(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return v if v[i] >= 0 else -v


def pca(x, k: int = 2, tol: float = 1e-13, max_iter: int = 100_000) -> PCAResult:
    """Top-k principal components by power iteration with deflation.

    Each component's largest-magnitude loading is made positive.
    """
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}]")
    mean = x.mean(0)
    xc = x - mean
    cov = xc.T @ xc / max(n - 1, 1)
    comps, var = [], []
    work = cov.copy()
    for j in range(k):
        # deterministic start that is unlikely to be orthogonal to the leading vector
        v = np.linspace(1.0, 2.0, d) + 0.1 * np.cos(np.arange(d) + j)
        for c in comps:
            v -= (v @ c) * c
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            w = work @ v
            for c in comps:   # keep the iterate out of the deflated span
                w -= (w @ c) * c
            norm = np.linalg.norm(w)
            if norm == 0.0:
                break
            w /= norm
            if w @ v < 0:
                w = -w
            delta = np.linalg.norm(w - v)
            v = w
            if delta < tol:
                break
        if norm == 0.0:
            # remaining variance is zero: any orthonormal completion will do
            v = _complete(comps, d)
            lam = 0.0
        else:
            lam = float(v @ cov @ v)
        v = _sign_fix(v)
        comps.append(v)
        var.append(max(lam, 0.0))
        work = work - lam * np.outer(v, v)
    C = np.array(comps)
    return PCAResult(C, np.array(var), mean, xc @ C.T)


def _complete(comps, d):
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        for c in comps:
            e -= (e @ c) * c
        if np.linalg.norm(e) > 1e-6:
            return e / np.linalg.norm(e)
    raise ValueError("no orthogonal direction left")


def silhouette(values: np.ndarray, labels) -> float:
    """Silhouette score of ``labels`` on ``values``; nan when fewer than two clusters."""
    from sklearn.metrics import silhouette_score
    labels = np.asarray(labels)
    if len(set(labels.tolist())) < 2 or len(labels) <= len(set(labels.tolist())):
        return float("nan")
    return float(silhouette_score(values, labels))


def write_projections(result: PCAResult, matrix: LatentMatrix, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["pc1", "pc2", "verb", "adjective", "noun", "step"])
        for p, lab, t in zip(result.projections, matrix.labels, matrix.steps):
            pc2 = p[1] if p.shape[0] > 1 else 0.0
            w.writerow([f"{p[0]:.9g}", f"{pc2:.9g}", *lab, int(t)])


# image export

def write_ppm(path, rgb: np.ndarray) -> None:
    img = (np.clip(rgb, 0.0, 1.0) * 255 + 0.5).astype(np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def write_pgm(path, gray: np.ndarray) -> None:
    img = (np.clip(gray, 0.0, 1.0) * 255 + 0.5).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def read_pnm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    magic, w, h, _ = parts[0], int(parts[1]), int(parts[2]), parts[3]
    raw = np.frombuffer(parts[4], dtype=np.uint8)
    return raw.reshape(h, w, 3) if magic == b"P6" else raw.reshape(h, w)


def export_dream(model, actor, sentence, T: int, out_dir, seed: int = 0, scale="full"):
    """Dream from one genuine observation; write frames, raw arrays and a step trace."""
    sentence = lang.Sentence.parse(sentence) if isinstance(sentence, str) else sentence
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, first = env.reset(seed, sentence, scale=scale, vision_size=model.cfg.vision_size)
    gen = torch.Generator().manual_seed(seed)
    steps = dream_rollout(model, first, actor, T, generator=gen)
    frames = np.stack([s.vision for s in steps])
    np.save(out / "vision.npy", frames)
    with open(out / "trace.jsonl", "w") as f:
        for t, s in enumerate(steps):
            write_ppm(out / f"frame_{t:02d}_rgb.ppm", s.vision[..., :3])
            write_pgm(out / f"frame_{t:02d}_dist.pgm", s.vision[..., 3])
            rec = {"step": t, "motor": [round(float(v), 6) for v in s.motor],
                   "command": [lang.TOKENS[i] for i in s.command.argmax(-1)],
                   "feedback": [lang.TOKENS[i] for i in s.feedback.argmax(-1)],
                   "touch_mean": round(float(np.mean(s.touch)), 6)}
            f.write(json.dumps(rec) + "\n")
    return steps, first
