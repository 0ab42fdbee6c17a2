"""Command-line entry point.

    fcgssl VERB [--config PATH] [--set key=value ...] [--out DIR] [--seed N] [--threads N]

Verbs: ``synth`` writes a synthetic dataset, ``preprocess`` the spectral
cache, ``contrib.csv`` and a sample ``plan.json``, ``train`` a checkpoint and
``history.csv``, ``eval`` a ``results.json`` probe summary, ``ablate`` a
seven-row ``ablation.csv`` and ``sweep`` a ``sweep.csv`` over the grid in
the ``[sweep]`` section. Text artifacts start with the resolved config as
``#`` comment lines.

Exit status is 1 for configuration errors and 2 for runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import ABLATIONS, RunConfig, apply_overrides, load_config
from .errors import ConfigError, FCGError
from .evalkit import embed, linear_probe, load_splits
from .frequency import write_contrib_csv
from .graph import save_graph
from .spectral import save_cache
from .trainer import (apply_ablation, load_checkpoint, load_dataset, make_plan, preprocess,
                      save_checkpoint, train, write_history)

log = logging.getLogger("fcgssl")

VERBS = ("preprocess", "train", "eval", "ablate", "sweep", "synth")
SWEEP_KEYS = (("alpha", "loss.alpha"), ("beta", "loss.beta"),
              ("r_N", "corruption.r_N"), ("r_E", "corruption.r_E"))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="fcgssl", description="Frequency-corrupt graph self-supervised learning")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", help="run-config file (key = value)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key; repeatable")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    p.add_argument("--threads", type=int, default=1,
                   help="BLAS threads, and worker processes for sweep (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config, args.set) if args.config else apply_overrides(RunConfig(),
                                                                                 args.set)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg.validate()


def header(cfg):
    return cfg.to_text("# ")


def _prep(cfg, g):
    cache = os.environ.get("FCG_CACHE_DIR") or None
    s = cfg.spectral
    return preprocess(g, s.K, s.K_e, cache_dir=cache, dense_cutoff=s.dense_cutoff)


def _probe(cfg, g, model, prep):
    if g.labels is None or len(g.labels) != g.num_nodes:
        raise ConfigError("evaluation needs per-node labels")
    H = embed(g, model, prep)
    e = cfg.eval
    splits = load_splits(e.splits) if e.splits else None
    return linear_probe(H, g.labels, splits, e.repeats, cfg.seed, e.probe_steps, e.probe_lr)


# -- verbs -----------------------------------------------------------------------

def cmd_synth(cfg, out):
    g = load_dataset(cfg)
    path = save_graph(g, out / "graph", header=header(cfg))
    (out / "run.cfg").write_text(cfg.to_text())
    print(f"wrote {path} (N={g.num_nodes}, E={g.num_edges})")


def cmd_preprocess(cfg, out):
    g = load_dataset(cfg)
    prep = _prep(cfg, g)
    save_cache(out / "spectral.bin", prep.bundle, g.content_hash())
    write_contrib_csv(out / "contrib.csv", prep.scores, g, header(cfg))
    make_plan(cfg, prep, apply_ablation(cfg), 1).write_json(out / "plan.json", g)
    print(f"wrote {out / 'spectral.bin'}, {out / 'contrib.csv'}, {out / 'plan.json'}")


def cmd_train(cfg, out):
    g = load_dataset(cfg)
    res = train(cfg, prep=_prep(cfg, g))
    write_history(out / "history.csv", res.history, header(cfg))
    save_checkpoint(out / "model.ckpt", res, cfg)
    last = res.history[-1]
    print(f"epoch {last['epoch']}: loss_total={last['loss_total']:.6g}; "
          f"wrote {out / 'model.ckpt'}")


def cmd_eval(cfg, out):
    ckpt = Path(cfg.eval.checkpoint) if cfg.eval.checkpoint else out / "model.ckpt"
    model, meta = load_checkpoint(ckpt)
    g = load_dataset(cfg)
    res = _probe(cfg, g, model, None)
    res.write_json(out / "results.json", cfg.to_text())
    print(f"{res.metric}: {res.mean:.4f} +- {res.std:.4f}")


def _run_cell(cfg_text, g):
    """Train and probe one configuration; returns ``(probe, final_loss)``."""
    from .config import parse_config
    cfg = parse_config(cfg_text)
    with threadpool_limits(1):
        prep = _prep(cfg, g)
        res = train(cfg, prep=prep)
        probe = _probe(cfg, g, res.model, prep)
    return probe, res.history[-1]["loss_total"]


def _run_cells(cfgs, g, threads):
    texts = [c.to_text() for c in cfgs]
    if threads == 1 or len(texts) == 1:
        return [_run_cell(t, g) for t in texts]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_cell, texts, [g] * len(texts)))


def _write_table(path, cfg, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(header(cfg))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def cmd_ablate(cfg, out, threads):
    g = load_dataset(cfg)
    cfgs = [cfg.copy().set("ablation", name) for name in ABLATIONS]
    results = _run_cells(cfgs, g, threads)
    rows = [(name, repr(p.mean), repr(p.std), repr(loss))
            for name, (p, loss) in zip(ABLATIONS, results)]
    _write_table(out / "ablation.csv", cfg,
                 ("variant", "accuracy_mean", "accuracy_std", "final_loss"), rows)
    for name, (p, _) in zip(ABLATIONS, results):
        print(f"{name:5s} {p.mean:.4f} +- {p.std:.4f}")


def sweep_grid(cfg):
    """Cartesian product over the non-empty ``[sweep]`` lists; an empty list
    keeps the base value."""
    axes = []
    for name, key in SWEEP_KEYS:
        values = getattr(cfg.sweep, name) or [cfg.get(key)]
        axes.append([(key, v) for v in values])
    return [dict(cell) for cell in itertools.product(*axes)]


def cmd_sweep(cfg, out, threads):
    g = load_dataset(cfg)
    grid = sweep_grid(cfg)
    cfgs = []
    for cell in grid:
        c = cfg.copy()
        for key, v in cell.items():
            c.set(key, v)
        cfgs.append(c.validate())
    results = _run_cells(cfgs, g, threads)
    rows = [[repr(float(cell[k])) for _, k in SWEEP_KEYS] + [repr(p.mean), repr(p.std),
                                                             repr(loss)]
            for cell, (p, loss) in zip(grid, results)]
    _write_table(out / "sweep.csv", cfg,
                 [n for n, _ in SWEEP_KEYS] + ["accuracy_mean", "accuracy_std", "final_loss"],
                 rows)
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")


def run(argv=None):
    """Parse ``argv``, run the verb and return the exit status."""
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(args.threads):
            if args.verb == "ablate":
                cmd_ablate(cfg, out, args.threads)
            elif args.verb == "sweep":
                cmd_sweep(cfg, out, args.threads)
            else:
                globals()[f"cmd_{args.verb}"](cfg, out)
    except ConfigError as exc:
        print(f"fcgssl: config error: {exc}", file=sys.stderr)
        return 1
    except (FCGError, OSError) as exc:
        print(f"fcgssl: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
