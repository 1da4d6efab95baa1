"""Cross-seed aggregation with normal-approximation confidence intervals."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np
from scipy import stats

SUMMARY_COLUMNS = ["epoch", "split", "category", "n_seeds", "mean", "ci_low", "ci_high",
                   "rolling_mean", "rolling_ci_low", "rolling_ci_high"]


def read_eval(run_dir) -> dict[tuple[str, str], dict[int, float]]:
    """(split, category) -> {epoch: rate} from one run's evaluation file."""
    out: dict = defaultdict(dict)
    with open(Path(run_dir) / "eval_metrics.csv", newline="") as f:
        for row in csv.DictReader(f):
            out[(row["split"], row["category"])][int(row["epoch"])] = float(row["rate"])
    return dict(out)


def confidence_interval(values, level: float = 0.99) -> tuple[float, float, float]:
    """Mean and normal-approximation interval; a single value has zero width."""
    x = np.asarray(values, dtype=float)
    mean = float(x.mean())
    if x.size < 2:
        return mean, mean, mean
    half = stats.norm.ppf(0.5 + level / 2) * x.std(ddof=1) / np.sqrt(x.size)
    return mean, mean - half, mean + half


def rolling(series: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over the last ``window`` points along the last axis."""
    out = np.empty_like(series, dtype=float)
    for i in range(series.shape[-1]):
        out[..., i] = series[..., max(0, i - window + 1):i + 1].mean(-1)
    return out


def aggregate_seeds(run_dirs, window: int = 10, level: float = 0.99) -> list[dict]:
    runs = [read_eval(d) for d in run_dirs]
    if not runs:
        raise ValueError("no runs to aggregate")
    keys = sorted(set.intersection(*(set(r) for r in runs)))
    rows = []
    for key in keys:
        epochs = sorted(set.intersection(*(set(r[key]) for r in runs)))
        if not epochs:
            continue
        mat = np.array([[r[key][e] for e in epochs] for r in runs])
        roll = rolling(mat, window)
        for j, e in enumerate(epochs):
            m, lo, hi = confidence_interval(mat[:, j], level)
            rm, rlo, rhi = confidence_interval(roll[:, j], level)
            rows.append({"epoch": e, "split": key[0], "category": key[1], "n_seeds": len(runs),
                         "mean": m, "ci_low": lo, "ci_high": hi,
                         "rolling_mean": rm, "rolling_ci_low": rlo, "rolling_ci_high": rhi})
    rows.sort(key=lambda r: (r["split"], r["category"], r["epoch"]))
    return rows


def write_summary(rows: list[dict], out_dir) -> list[Path]:
    """Write ``summary.csv`` plus one SVG line chart per action category."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.DictWriter(f, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in r.items()})
    written = [out / "summary.csv"]
    for cat in sorted({r["category"] for r in rows}):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for split in sorted({r["split"] for r in rows}):
            sel = [r for r in rows if r["category"] == cat and r["split"] == split]
            if not sel:
                continue
            x = [r["epoch"] for r in sel]
            ax.plot(x, [r["rolling_mean"] for r in sel], label=split)
            ax.fill_between(x, [r["rolling_ci_low"] for r in sel], [r["rolling_ci_high"] for r in sel], alpha=0.25)
        ax.set_xlabel("epoch")
        ax.set_ylabel("success rate (rolling)")
        ax.set_title(cat)
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
        fig.tight_layout()
        path = out / f"success_{cat}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
