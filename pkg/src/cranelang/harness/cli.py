"""Command line entry point: train, evaluate, aggregate, dream, pca."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from cranelang import language as lang
from cranelang.fe import CURIOSITY_PRESETS


TRAIN_FLAGS = ("curiosity", "scale", "model", "seed", "epochs", "eval_every", "curiosity_index", "alpha",
               "agent_updates", "agent_lr", "init_log_std", "max_log_std")


def _train(args):
    from cranelang.harness.config import SMOKE_PRESET, RunConfig
    from cranelang.harness.train import run_training
    base = dict(SMOKE_PRESET) if args.preset == "smoke" else {}
    given = {k: getattr(args, k) for k in TRAIN_FLAGS if getattr(args, k) is not None}
    if args.alpha_update:
        given["alpha_update"] = True
    cfg = RunConfig(**{**base, **given, "out": args.out})
    out = run_training(cfg, progress=True)
    print(json.loads((out / "manifest.json").read_text())["status"], out)


def _evaluate(args):
    from cranelang.harness.evaluate import evaluate
    from cranelang.harness.train import load_agent
    cfg, agent, split = load_agent(args.run)
    sets = {"learned": split.train, "unlearned": split.test}
    names = list(sets) if args.split == "both" else [args.split]
    for name in names:
        r = evaluate(agent.model, agent.sac.actor, sets[name], args.episodes, cfg.scale,
                     policy=args.policy, seed=args.seed)
        for cat in r.categories:
            print(f"{name:9s} {cat:14s} {r.successes.get(cat, 0):4d}/{r.episodes[cat]:<4d} {r.rate(cat):.3f}")


def _aggregate(args):
    from cranelang.harness.aggregate import aggregate_seeds, write_summary
    rows = aggregate_seeds(args.runs, window=args.window)
    for p in write_summary(rows, args.out):
        print(p)


def _dream(args):
    from cranelang.analysis import export_dream
    from cranelang.harness.train import load_agent
    cfg, agent, _ = load_agent(args.run)
    export_dream(agent.model, agent.sac.actor, args.sentence, args.steps, args.out, seed=args.seed, scale=cfg.scale)
    print(args.out)


def _pca(args):
    from cranelang.analysis import collect_command_latents, pca, silhouette, write_projections
    from cranelang.harness.train import load_agent
    cfg, agent, split = load_agent(args.run)
    sentences = lang.get_scale(cfg.scale).all_sentences()
    mat = collect_command_latents(agent.model, agent.sac.actor, sentences, args.episodes, cfg.scale, args.seed)
    res = pca(mat.values, k=min(2, mat.values.shape[1]))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_projections(res, mat, args.out)
    for i, name in enumerate(("verb", "adjective", "noun")):
        s = silhouette(res.projections, [lab[i] for lab in mat.labels])
        logging.info("silhouette by %s: %.3f", name, s)
    print(args.out, "explained variance", " ".join(f"{v:.4g}" for v in res.explained_variance))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cranelang")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one agent")
    t.add_argument("--preset", choices=["default", "smoke"], default="default",
                   help="smoke: restricted task, tiny model and tuned agent settings")
    t.add_argument("--curiosity", choices=sorted(CURIOSITY_PRESETS))
    t.add_argument("--scale", choices=sorted(lang.SCALES))
    t.add_argument("--model", choices=["full", "tiny"])
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--eval-every", type=int)
    t.add_argument("--curiosity-index", choices=["current", "next"])
    t.add_argument("--alpha", type=float, help="entropy weight")
    t.add_argument("--alpha-update", action="store_true", help="adapt alpha toward a target entropy")
    t.add_argument("--agent-updates", type=int, help="critic and actor steps per epoch")
    t.add_argument("--agent-lr", type=float)
    t.add_argument("--init-log-std", type=float)
    t.add_argument("--max-log-std", type=float)
    t.add_argument("--out", required=True)
    t.set_defaults(func=_train)

    e = sub.add_parser("evaluate", help="success rates of a trained run")
    e.add_argument("--run", required=True)
    e.add_argument("--split", choices=["learned", "unlearned", "both"], default="both")
    e.add_argument("--episodes", type=int, default=1)
    e.add_argument("--policy", choices=["deterministic", "stochastic", "random"], default="deterministic")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=_evaluate)

    a = sub.add_parser("aggregate", help="mean and 99%% interval across seeds")
    a.add_argument("runs", nargs="+")
    a.add_argument("--window", type=int, default=10)
    a.add_argument("--out", required=True)
    a.set_defaults(func=_aggregate)

    d = sub.add_parser("dream", help="closed-loop imagination from one observation")
    d.add_argument("--run", required=True)
    d.add_argument("--sentence", required=True, help='e.g. "watch red pillar"')
    d.add_argument("--steps", type=int, default=30)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=_dream)

    c = sub.add_parser("pca", help="PCA of command-voice posterior latents")
    c.add_argument("--run", required=True)
    c.add_argument("--episodes", type=int, default=1)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True, help="CSV path")
    c.set_defaults(func=_pca)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
