"""Frozen-encoder evaluation: embeddings, linear probes, pooled graph
readout and metrics."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import autodiff as ad
from .corruption import clean_view
from .errors import ConfigError, ShapeError
from .graph import Graph
from .model import FCGSSLModel, GraphContext

log = logging.getLogger(__name__)


@dataclass
class ProbeResult:
    metric: str
    mean: float
    std: float
    per_repeat: list
    per_split: dict = field(default_factory=dict)

    def to_dict(self):
        return {"metric": self.metric, "mean": self.mean, "std": self.std,
                "per_repeat": list(self.per_repeat), "per_split": self.per_split}

    def write_json(self, path, config_text=""):
        doc = self.to_dict()
        if config_text:
            doc["config"] = config_text
        Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# -- metrics ------------------------------------------------------------------

def accuracy(pred, labels):
    pred, labels = np.asarray(pred), np.asarray(labels)
    if len(pred) == 0:
        raise ValueError("accuracy of an empty prediction set")
    return float(np.mean(pred == labels))


def rmse(pred, target):
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def roc_auc(scores, labels):
    """Mann-Whitney AUC with midranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC-AUC needs both positive and negative labels")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


# -- embeddings -----------------------------------------------------------------

def embed(g: Graph, model, prep=None):
    """Encode the uncorrupted graph with frozen weights; returns ``(N, d_h)``.

    ``model`` may be a checkpoint path. ``prep`` defaults to preprocessing
    ``g`` with the ``K``/``K_e`` recorded in the checkpoint.
    """
    from .trainer import load_checkpoint, preprocess

    meta = {}
    if not isinstance(model, FCGSSLModel):
        model, meta = load_checkpoint(model)
    if prep is None:
        prep = preprocess(g, meta.get("K") or None, meta.get("K_e") or None)
    ctx = GraphContext(prep.graph, prep.positions, prep.edge_feats, model.rbf_count, model.rbf)
    with ad.no_grad():
        return model.encode(clean_view(prep.graph), ctx).H.data.copy()


def graph_readout(H, pooling="mean", segments=None, num_segments=None):
    """Pool node rows into one vector per graph (``segments`` maps rows to graphs)."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] == 0:
        raise ShapeError("cannot pool an empty graph")
    if pooling not in ("sum", "mean"):
        raise ConfigError(f"pooling must be sum or mean, got {pooling!r}")
    if segments is None:
        return H.sum(axis=0) if pooling == "sum" else H.mean(axis=0)
    segments = np.asarray(segments, dtype=np.int64)
    k = int(num_segments or segments.max() + 1)
    out = np.zeros((k, H.shape[1]))
    np.add.at(out, segments, H)
    counts = np.bincount(segments, minlength=k)
    if np.any(counts == 0):
        raise ShapeError("cannot pool an empty graph")
    return out if pooling == "sum" else out / counts[:, None]


# -- splits ------------------------------------------------------------------------

def stratified_split(labels, fractions=(0.6, 0.2, 0.2), seed=0):
    """Per-class random split; returns dict of sorted index arrays."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts = {"train": [], "val": [], "test": []}
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n_tr = int(round(fractions[0] * len(idx)))
        n_va = int(round(fractions[1] * len(idx)))
        parts["train"].append(idx[:n_tr])
        parts["val"].append(idx[n_tr:n_tr + n_va])
        parts["test"].append(idx[n_tr + n_va:])
    return {k: np.sort(np.concatenate(v)) for k, v in parts.items()}


def random_split(n, fractions=(0.6, 0.2, 0.2), seed=0):
    idx = np.random.default_rng(seed).permutation(n)
    n_tr = int(round(fractions[0] * n))
    n_va = int(round(fractions[1] * n))
    return {"train": np.sort(idx[:n_tr]), "val": np.sort(idx[n_tr:n_tr + n_va]),
            "test": np.sort(idx[n_tr + n_va:])}


def load_splits(path):
    """Fixed splits from ``splits.json`` (``{"train": [...], ...}``) or a
    directory holding ``train.csv``, ``val.csv``, ``test.csv`` (one index per line)."""
    path = Path(path)
    if path.is_dir():
        out = {}
        for name in ("train", "val", "test"):
            f = path / f"{name}.csv"
            out[name] = (np.loadtxt(f, dtype=np.int64, ndmin=1) if f.exists()
                         else np.zeros(0, dtype=np.int64))
        return out
    doc = json.loads(path.read_text())
    return {k: np.asarray(doc.get(k, []), dtype=np.int64) for k in ("train", "val", "test")}


def save_splits(path, splits):
    Path(path).write_text(json.dumps({k: np.asarray(v).tolist() for k, v in splits.items()}))


# -- linear heads -----------------------------------------------------------------------

def _standardize(H, train):
    mu = H[train].mean(axis=0)
    sd = H[train].std(axis=0)
    return (H - mu) / np.where(sd > 0, sd, 1.0)


def fit_logistic(X, y, num_classes, steps=300, lr=0.01, seed=0):
    """Multinomial logistic regression by full-batch Adam; returns ``(W, b)``."""
    rng = np.random.default_rng(seed)
    W = ad.Parameter(rng.normal(0.0, 0.01, (X.shape[1], num_classes)), "W")
    b = ad.Parameter(np.zeros(num_classes), "b")
    opt = ad.Adam([W, b], lr=lr)
    Xt = ad.Tensor(X)
    rows = np.arange(len(y))
    for _ in range(steps):
        Z = Xt @ W + b
        loss = ad.mean(ad.logsumexp(Z, axis=1) - Z[rows, y])
        opt.zero_grad()
        ad.backward(loss)
        opt.step()
    return W.data.copy(), b.data.copy()


def fit_linear(X, y, steps=300, lr=0.01, seed=0):
    """Least-squares linear head by full-batch Adam; returns ``(w, b)``."""
    rng = np.random.default_rng(seed)
    w = ad.Parameter(rng.normal(0.0, 0.01, (X.shape[1], 1)), "w")
    b = ad.Parameter(np.zeros(1), "b")
    opt = ad.Adam([w, b], lr=lr)
    Xt, yt = ad.Tensor(X), ad.Tensor(np.asarray(y, float).reshape(-1, 1))
    for _ in range(steps):
        r = Xt @ w + b - yt
        loss = ad.mean(r * r)
        opt.zero_grad()
        ad.backward(loss)
        opt.step()
    return w.data.copy(), b.data.copy()


def _summary(metric, values, per_split):
    values = [float(v) for v in values]
    return ProbeResult(metric, float(np.mean(values)), float(np.std(values)), values, per_split)


def linear_probe(H, labels, splits=None, repeats=5, seed=0, steps=300, lr=0.01,
                 standardize=True) -> ProbeResult:
    """Test accuracy of a linear classifier on frozen embeddings.

    With fixed ``splits`` the repeats differ only in the classifier's
    initialisation; otherwise each repeat draws a fresh stratified 60/20/20
    split. ``std`` is the population standard deviation (0 for one repeat).
    """
    H = np.asarray(H, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.dtype.kind not in "iu":
        raise ConfigError("linear probe needs integer class labels")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    classes, y = np.unique(labels, return_inverse=True)
    accs, per_split = [], {"train": [], "val": [], "test": []}
    for r in range(repeats):
        sp = splits if splits is not None else stratified_split(labels, seed=seed + r)
        X = _standardize(H, sp["train"]) if standardize else H
        W, b = fit_logistic(X[sp["train"]], y[sp["train"]], len(classes), steps, lr,
                            seed=seed + r)
        pred = np.argmax(X @ W + b, axis=1)
        for name in per_split:
            idx = sp[name]
            per_split[name].append(accuracy(pred[idx], y[idx]) if len(idx) else float("nan"))
        accs.append(per_split["test"][-1])
    return _summary("accuracy", accs, per_split)


def graph_probe(G, targets, task="regression", repeats=5, seed=0, steps=300, lr=0.01,
                splits=None, standardize=True) -> ProbeResult:
    """Linear head on pooled graph vectors ``G`` (one row per graph).

    ``task="regression"`` reports RMSE, ``"classification"`` reports ROC-AUC
    on binary targets.
    """
    G = np.asarray(G, dtype=np.float64)
    targets = np.asarray(targets)
    if task not in ("regression", "classification"):
        raise ConfigError(f"unknown graph task {task!r}")
    vals, per_split = [], {"train": [], "val": [], "test": []}
    for r in range(repeats):
        if splits is not None:
            sp = splits
        elif task == "classification":
            sp = stratified_split(targets, seed=seed + r)
        else:
            sp = random_split(len(G), seed=seed + r)
        X = _standardize(G, sp["train"]) if standardize else G
        if task == "regression":
            w, b = fit_linear(X[sp["train"]], targets[sp["train"]], steps, lr, seed + r)
            pred = (X @ w + b).ravel()
            for name in per_split:
                idx = sp[name]
                per_split[name].append(rmse(pred[idx], targets[idx]))
        else:
            y = targets.astype(np.int64)
            W, b = fit_logistic(X[sp["train"]], y[sp["train"]], 2, steps, lr, seed + r)
            Z = X @ W + b
            score = Z[:, 1] - Z[:, 0]
            for name in per_split:
                idx = sp[name]
                ok = len(np.unique(y[idx])) == 2
                per_split[name].append(roc_auc(score[idx], y[idx]) if ok else float("nan"))
        vals.append(per_split["test"][-1])
    return _summary("rmse" if task == "regression" else "roc_auc", vals, per_split)
