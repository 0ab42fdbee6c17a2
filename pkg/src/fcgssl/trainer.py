"""Preprocessing, the per-epoch corrupt/encode/align/reconstruct loop, and
run artifacts (history.csv, checkpoints)."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import RunConfig
from .corruption import build_plan, materialize
from .errors import ConfigError, FCGError, NumericalError, TrainingError
from .frequency import ContributionScores, contributions
from .graph import Graph, build_laplacian, disjoint_union, generate_synthetic, load_graph
from .model import FCGSSLModel, GraphContext, loss_align, loss_edge, loss_node
from .spectral import (EdgeFeatureMatrix, PositionMatrix, SpectralBundle, edge_features,
                       eigensolve_smallest, load_cache, position_matrix, save_cache)

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "loss_total", "loss_node", "loss_edge", "loss_align")


@dataclass(frozen=True)
class Preprocessed:
    graph: Graph
    bundle: SpectralBundle | None
    scores: ContributionScores
    positions: PositionMatrix
    edge_feats: EdgeFeatureMatrix
    from_cache: bool = False

    def __iter__(self):
        return iter((self.bundle, self.scores, self.positions, self.edge_feats))


_memory_cache: dict = {}


def resolve_k(n, K=None, K_e=None):
    """``K`` of 0/None means all ``n`` eigenpairs; ``K_e`` is clamped to ``K``."""
    K = n if not K else int(K)
    if K > n:
        raise ConfigError(f"K={K} exceeds the number of nodes N={n}")
    K_e = K if not K_e else min(int(K_e), K)
    return K, K_e


def _cache_dir(cache_dir):
    if cache_dir is None:
        cache_dir = os.environ.get("FCG_CACHE_DIR") or None
    return Path(cache_dir) if cache_dir else None


def spectral_bundle(g: Graph, K=None, K_e=None, cache_dir=None, dense_cutoff=512):
    """Eigenpairs for ``g``, reusing an in-memory or on-disk copy when the
    edge-list hash, ``K`` and ``K_e`` match. Returns ``(bundle, hit)``."""
    K, K_e = resolve_k(g.num_nodes, K, K_e)
    digest = g.content_hash()
    key = (digest, K, K_e)
    if key in _memory_cache:
        log.info("spectral cache hit (memory) for %s", digest[:12])
        return _memory_cache[key], True
    directory = _cache_dir(cache_dir)
    path = None
    if directory is not None:
        path = directory / f"spectral-{digest[:16]}-K{K}-Ke{K_e}.bin"
        bundle = load_cache(path, digest)
        if bundle is not None and bundle.K == K and bundle.K_e == K_e:
            log.info("spectral cache hit (%s)", path)
            _memory_cache[key] = bundle
            return bundle, True
    log.info("eigensolve: N=%d K=%d K_e=%d", g.num_nodes, K, K_e)
    bundle = eigensolve_smallest(build_laplacian(g), K, K_e, dense_cutoff=dense_cutoff)
    _memory_cache[key] = bundle
    if path is not None:
        directory.mkdir(parents=True, exist_ok=True)
        save_cache(path, bundle, digest)
    return bundle, False


def clear_memory_cache():
    _memory_cache.clear()


def preprocess(g: Graph, K=None, K_e=None, cache_dir=None, dense_cutoff=512) -> Preprocessed:
    """Spectrum, contribution scores, edge positions and edge targets."""
    bundle, hit = spectral_bundle(g, K, K_e, cache_dir, dense_cutoff)
    return Preprocessed(g, bundle, contributions(bundle, g), position_matrix(bundle, g),
                        edge_features(bundle, g), hit)


def preprocess_batch(graphs, K=None, K_e=None, cache_dir=None):
    """Preprocess each graph on its own spectrum and stitch the results onto
    their disjoint union. ``K``/``K_e`` are clamped per graph; edge targets
    from graphs with fewer than ``K_e`` components are zero-padded.

    Returns ``(Preprocessed, graph_index)``; ``bundle`` is ``None`` since the
    union has no single spectrum.
    """
    graphs = list(graphs)
    union, index = disjoint_union(graphs)
    ks = [resolve_k(g.num_nodes, min(K or g.num_nodes, g.num_nodes), K_e) for g in graphs]
    width = max(k_e for _, k_e in ks)
    ce, cn, pos, feats = [], [], [], []
    for g, (k, k_e) in zip(graphs, ks):
        p = preprocess(g, k, k_e, cache_dir)
        ce.append(p.scores.edge)
        cn.append(p.scores.node)
        pos.append(p.positions.values)
        pad = np.zeros((g.num_edges, width))
        pad[:, :k_e] = p.edge_feats.values
        feats.append(pad)
    scores = ContributionScores(np.concatenate(ce), np.concatenate(cn))
    positions = PositionMatrix(union.edges, np.concatenate(pos), union.num_nodes)
    edge_feats = EdgeFeatureMatrix(union.edges, np.concatenate(feats).reshape(-1, width))
    return Preprocessed(union, None, scores, positions, edge_feats), index


def load_dataset(cfg: RunConfig) -> Graph:
    d = cfg.data
    if d.path:
        return load_graph(d.path, d.format or None, strict=d.strict)
    return generate_synthetic(d.synthetic, d.block_sizes, d.p_in, d.p_out,
                              d.feature_dim, d.feature_noise, d.seed)


# -- ablations ---------------------------------------------------------------------

@dataclass(frozen=True)
class Pipeline:
    uniform_nodes: bool = False
    uniform_edges: bool = False
    combine: bool = True
    align: bool = True


def apply_ablation(cfg_or_name) -> Pipeline:
    """Switches for the ablation variants: ``cn``/``ce``/``cne`` corrupt
    uniformly at random instead of by contribution; ``so`` skips the
    union/intersection step; ``sa`` drops the alignment loss; ``soa`` both."""
    name = getattr(cfg_or_name, "ablation", cfg_or_name)
    table = {
        "none": Pipeline(),
        "cn": Pipeline(uniform_nodes=True),
        "ce": Pipeline(uniform_edges=True),
        "cne": Pipeline(uniform_nodes=True, uniform_edges=True),
        "so": Pipeline(combine=False),
        "sa": Pipeline(align=False),
        "soa": Pipeline(combine=False, align=False),
    }
    if name not in table:
        raise ConfigError(f"unknown ablation {name!r}")
    return table[name]


# -- training ------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: FCGSSLModel
    history: list = field(default_factory=list)
    prep: Preprocessed | None = None
    plans: list = field(default_factory=list)


def epoch_seed(seed, epoch):
    return int(np.random.SeedSequence([int(seed), 0x5A4D, int(epoch)]).generate_state(1)[0])


def build_model(cfg: RunConfig, prep: Preprocessed):
    g = prep.graph
    ctx = GraphContext(g, prep.positions, prep.edge_feats, cfg.spectral.rbf_count or None)
    init = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x1417]))
    model = FCGSSLModel(g.feature_dim, ctx.edge_dim, cfg.encoder, ctx.rbf_count, init)
    return model, ctx


def step_losses(model, ctx, plan, pipeline: Pipeline, cfg: RunConfig):
    """Forward pass for one corruption plan. Returns
    ``(total, node, edge, align)`` tensors."""
    g = ctx.graph
    lc = cfg.loss
    H_N = model.encode(materialize(plan, g, "G_N"), ctx).H
    H_E = model.encode(materialize(plan, g, "G_E"), ctx).H
    if pipeline.align:
        H_C = model.encode(materialize(plan, g, "G_C"), ctx).H
        l_align = loss_align(H_N, H_E, H_C, lc.tau)
        beta = lc.beta
    else:
        l_align, beta = ad.Tensor(0.0), 0.0
    X_hat = model.decode_nodes(H_N)
    l_node = loss_node(g.features, X_hat, plan.S_N.nodes, lc.gamma)
    dropped = plan.S_E.edges
    E_hat = model.decode_edges(H_E, g.edges[dropped])
    l_edge = loss_edge(ctx.edge_targets[dropped], E_hat, lc.gamma)
    total = l_node + lc.alpha * l_edge + beta * l_align
    return total, l_node, l_edge, l_align


def make_plan(cfg, prep, pipeline, epoch):
    c = cfg.corruption
    return build_plan(prep.scores, prep.graph, c.r_N, c.r_E, epoch_seed(cfg.seed, epoch),
                      pipeline.uniform_nodes, pipeline.uniform_edges, pipeline.combine)


def train(cfg: RunConfig, g: Graph | None = None, prep: Preprocessed | None = None,
          keep_plans=False, on_epoch=None) -> TrainResult:
    """Train from scratch. Fresh corruption sets every epoch; spectral
    artifacts are computed once. ``on_epoch(record)`` is called after each
    optimizer step."""
    cfg.validate()
    if prep is None:
        if g is None:
            raise ConfigError("train needs a graph or preprocessed artifacts")
        prep = preprocess(g, cfg.spectral.K, cfg.spectral.K_e,
                          dense_cutoff=cfg.spectral.dense_cutoff)
    pipeline = apply_ablation(cfg)
    model, ctx = build_model(cfg, prep)
    opt = ad.Adam(model.parameters(), lr=cfg.optim.lr)
    result = TrainResult(model, prep=prep)
    best, stale = np.inf, 0
    for epoch in range(1, cfg.optim.epochs + 1):
        plan = make_plan(cfg, prep, pipeline, epoch)
        if keep_plans:
            result.plans.append(plan)
        try:
            total, l_node, l_edge, l_align = step_losses(model, ctx, plan, pipeline, cfg)
            if not np.isfinite(total.data):
                raise NumericalError("non-finite total loss")
            opt.zero_grad()
            ad.backward(total)
        except NumericalError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}") from exc
        opt.step()
        record = {"epoch": epoch, "loss_total": total.item(), "loss_node": l_node.item(),
                  "loss_edge": l_edge.item(), "loss_align": l_align.item()}
        result.history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if cfg.optim.patience:
            if record["loss_total"] < best:
                best, stale = record["loss_total"], 0
            else:
                stale += 1
                if stale >= cfg.optim.patience:
                    log.info("early stop at epoch %d", epoch)
                    break
    model.rbf = (ctx.means.tolist(), float(ctx.sigma))
    return result


# -- artifacts -------------------------------------------------------------------------

def write_history(path, history, header=""):
    with open(path, "w") as fh:
        fh.write(header)
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for rec in history:
            fh.write(",".join([str(rec["epoch"])]
                              + [repr(float(rec[c])) for c in HISTORY_COLUMNS[1:]]) + "\n")


def read_history(path):
    rows = []
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    cols = lines[0].strip().split(",")
    for ln in lines[1:]:
        vals = ln.strip().split(",")
        rec = {c: float(v) for c, v in zip(cols, vals)}
        rec["epoch"] = int(rec["epoch"])
        rows.append(rec)
    return rows


def save_checkpoint(path, result: TrainResult, cfg: RunConfig):
    extra = {"config": cfg.to_text(), "rbf": getattr(result.model, "rbf", None),
             "K": cfg.spectral.K, "K_e": cfg.spectral.K_e}
    result.model.save(path, extra)
    return Path(path)


def load_checkpoint(path):
    """Returns ``(model, metadata)``; raises :class:`CheckpointError` if unreadable."""
    model, meta = FCGSSLModel.load(path)
    model.rbf = meta.get("rbf")
    return model, meta


__all__ = [
    "Preprocessed", "preprocess", "preprocess_batch", "spectral_bundle", "train",
    "apply_ablation", "Pipeline", "TrainResult", "write_history", "read_history",
    "save_checkpoint", "load_checkpoint", "load_dataset", "FCGError",
]
