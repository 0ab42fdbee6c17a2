"""Position-aware masked graph autoencoder: encoder, decoders and losses.

Message passing runs over directed copies of the kept edges plus one self
loop per node. Each directed edge ``j -> i`` carries a position state
``P_ij`` initialised from an RBF expansion of the spectral distance
between ``i`` and ``j``; the self loop uses distance 0. Per layer::

    alpha_ij = attention(X_i, X_j)
    X_i'     = sum_j (alpha_ij + P_ij) * X_j
    P_ij'    = P_ij + alpha_ij
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .corruption import CorruptedGraph
from .errors import ConfigError, ShapeError
from .graph import Graph
from .spectral import EdgeFeatureMatrix, PositionMatrix, rbf_embed, rbf_means

log = logging.getLogger(__name__)

VARIANTS = ("gat", "gatedgcn")


@dataclass
class EncoderConfig:
    variant: str = "gat"
    layers: int = 2
    hidden: int = 64
    heads: int = 4
    rbf_count: int | None = None  # None: use the raw feature dimension
    negative_slope: float = 0.2

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"encoder variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.layers < 1:
            raise ConfigError("encoder needs at least one layer")
        if self.hidden < 1:
            raise ConfigError("hidden dimension must be positive")
        if self.variant == "gat" and (self.heads < 1 or self.hidden % self.heads):
            raise ConfigError(f"hidden={self.hidden} not divisible by heads={self.heads}")
        if self.rbf_count is not None and self.rbf_count < 1:
            raise ConfigError("rbf_count must be positive")
        return self


@dataclass
class EncodedState:
    layers: list          # X^(0) .. X^(L)
    positions: list       # P^(0) .. P^(L), one row per directed edge
    src: np.ndarray
    dst: np.ndarray

    @property
    def H(self) -> Tensor:
        return self.layers[-1]


class GraphContext:
    """Per-graph constants shared by every corrupted view: RBF inputs for
    each base edge, the self-loop RBF row, and the spectral edge targets."""

    def __init__(self, g: Graph, positions: PositionMatrix, edge_feats: EdgeFeatureMatrix,
                 rbf_count=None, rbf=None):
        self.graph = g
        if rbf is not None:
            # kernels fixed at training time
            self.means, self.sigma = np.asarray(rbf[0], dtype=np.float64), float(rbf[1])
            B = len(self.means)
        else:
            B = int(rbf_count or g.feature_dim)
            dmax = float(positions.values.max()) if len(positions.values) else 0.0
            self.means, self.sigma = rbf_means(dmax, B)
        self.edge_rbf = rbf_embed(positions.values, self.means, self.sigma).reshape(-1, B)
        self.self_rbf = rbf_embed(0.0, self.means, self.sigma).reshape(1, B)
        self.edge_targets = edge_feats.values

    @property
    def rbf_count(self):
        return len(self.means)

    @property
    def edge_dim(self):
        return self.edge_targets.shape[1]


def glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class FCGSSLModel:
    """Encoder with a learnable mask token, plus node and edge decoders.

    Parameters live in an ordered name -> :class:`Parameter` map so that
    checkpoints are stable.
    """

    def __init__(self, in_dim, edge_dim, cfg: EncoderConfig, rbf_count=None, rng=None):
        cfg.validate()
        self.cfg = cfg
        self.in_dim = int(in_dim)
        self.edge_dim = int(edge_dim)
        self.rbf_count = int(rbf_count or cfg.rbf_count or in_dim)
        self.rbf = None  # (means, sigma) recorded after training
        rng = np.random.default_rng(rng)
        h = cfg.hidden
        self.params = OrderedDict()
        self._add("mask_token", np.zeros(self.in_dim))
        self._mlp(rng, "feat_in", self.in_dim, h, h)
        self._mlp(rng, "pos_in", self.rbf_count, h, h)
        for l in range(cfg.layers):
            self._add(f"layer{l}.W", glorot(rng, h, h))
            if cfg.variant == "gat":
                hs = h // cfg.heads
                bound = np.sqrt(6.0 / (2 * hs + 1))
                self._add(f"layer{l}.att_dst", rng.uniform(-bound, bound, h))
                self._add(f"layer{l}.att_src", rng.uniform(-bound, bound, h))
        self._mlp(rng, "dec_node", h, h, self.in_dim)
        self._mlp(rng, "dec_edge", h, h, self.edge_dim)
        if cfg.variant == "gat":
            # head_map[c, k] = 1 when channel c belongs to head k
            hs = h // cfg.heads
            self._head_map = np.kron(np.eye(cfg.heads), np.ones((hs, 1)))

    def _add(self, name, value):
        self.params[name] = Parameter(value, name)

    def _mlp(self, rng, prefix, d_in, d_hidden, d_out):
        self._add(f"{prefix}.0.W", glorot(rng, d_in, d_hidden))
        self._add(f"{prefix}.0.b", np.zeros(d_hidden))
        self._add(f"{prefix}.1.W", glorot(rng, d_hidden, d_out))
        self._add(f"{prefix}.1.b", np.zeros(d_out))

    def parameters(self):
        return list(self.params.values())

    def encoder_parameters(self):
        skip = ("dec_node.", "dec_edge.")
        return [p for n, p in self.params.items() if not n.startswith(skip)]

    def mlp(self, prefix, x):
        p = self.params
        z = ad.relu(x @ p[f"{prefix}.0.W"] + p[f"{prefix}.0.b"])
        return z @ p[f"{prefix}.1.W"] + p[f"{prefix}.1.b"]

    # -- encoder ----------------------------------------------------------------

    def attention(self, l, X, src, dst, n):
        W = self.params[f"layer{l}.W"]
        WX = X @ W
        if self.cfg.variant == "gatedgcn":
            return ad.sigmoid(ad.gather_rows(WX, dst) + ad.gather_rows(WX, src))
        head_map = self._head_map
        a_dst = ad.mul(ad.reshape(self.params[f"layer{l}.att_dst"], (-1, 1)), head_map)
        a_src = ad.mul(ad.reshape(self.params[f"layer{l}.att_src"], (-1, 1)), head_map)
        score = ad.gather_rows(WX @ a_dst, dst) + ad.gather_rows(WX @ a_src, src)
        score = ad.leaky_relu(score, self.cfg.negative_slope)
        per_head = ad.segment_softmax(score, dst, n)
        return per_head @ head_map.T

    def encode(self, view: CorruptedGraph, ctx: GraphContext) -> EncodedState:
        g = view.base
        if g is not ctx.graph:
            raise ConfigError("corrupted view and graph context come from different graphs")
        if ctx.rbf_count != self.rbf_count or g.feature_dim != self.in_dim:
            raise ShapeError(
                f"model expects {self.in_dim} features / {self.rbf_count} RBF kernels, "
                f"graph provides {g.feature_dim} / {ctx.rbf_count}")
        n = g.num_nodes
        kept = view.kept
        e = g.edges[kept]
        k = len(kept)
        loops = np.arange(n)
        src = np.concatenate([e[:, 1], e[:, 0], loops])
        dst = np.concatenate([e[:, 0], e[:, 1], loops])
        # one position row per kept edge plus a shared self-loop row
        rbf_rows = np.concatenate([ctx.edge_rbf[kept], ctx.self_rbf])
        row_of = np.concatenate([np.arange(k), np.arange(k), np.full(n, k)])

        mask = view.mask.astype(np.float64)[:, None]
        X_tilde = ad.add(g.features * (1.0 - mask), ad.mul(mask, self.params["mask_token"]))
        X = self.mlp("feat_in", X_tilde)
        P = ad.gather_rows(self.mlp("pos_in", Tensor(rbf_rows)), row_of)
        xs, ps = [X], [P]
        for l in range(self.cfg.layers):
            alpha = self.attention(l, X, src, dst, n)
            msg = (alpha + P) * ad.gather_rows(X, src)
            X = ad.segment_sum(msg, dst, n)
            P = P + alpha
            if l < self.cfg.layers - 1:
                X = ad.leaky_relu(X, self.cfg.negative_slope)
            xs.append(X)
            ps.append(P)
        return EncodedState(xs, ps, src, dst)

    # -- decoders -----------------------------------------------------------------

    def decode_nodes(self, H):
        return self.mlp("dec_node", H)

    def decode_edges(self, H, edge_pairs):
        edge_pairs = np.asarray(edge_pairs, dtype=np.int64).reshape(-1, 2)
        E_bar = ad.gather_rows(H, edge_pairs[:, 0]) * ad.gather_rows(H, edge_pairs[:, 1])
        return self.mlp("dec_edge", E_bar)

    # -- (de)serialisation ------------------------------------------------------------

    def metadata(self):
        return {"encoder": asdict(self.cfg), "in_dim": self.in_dim,
                "edge_dim": self.edge_dim, "rbf_count": self.rbf_count}

    def state_dict(self):
        return OrderedDict((n, p.data.copy()) for n, p in self.params.items())

    def load_state_dict(self, state):
        if list(state) != list(self.params):
            raise ShapeError("checkpoint parameter names do not match the model")
        for name, value in state.items():
            if value.shape != self.params[name].shape:
                raise ShapeError(f"{name}: checkpoint shape {value.shape}, "
                                 f"model shape {self.params[name].shape}")
            self.params[name].data[...] = value

    def save(self, path, extra=None):
        meta = self.metadata()
        if extra:
            meta.update(extra)
        ad.save_parameters(path, self.params, meta)

    @classmethod
    def load(cls, path):
        state, meta = ad.load_parameters(path)
        cfg = EncoderConfig(**meta["encoder"])
        model = cls(meta["in_dim"], meta["edge_dim"], cfg, meta["rbf_count"], rng=0)
        model.load_state_dict(state)
        return model, meta


# -- losses -----------------------------------------------------------------------

def scaled_cosine_error(target, recon, gamma=2.0):
    """Mean of ``(1 - cos(target_i, recon_i)) ** gamma`` over rows.

    An empty row set gives 0. A zero-norm row has cosine 0, i.e. costs 1.
    """
    if gamma < 1:
        raise ConfigError(f"gamma must be >= 1, got {gamma}")
    target = ad.as_tensor(target)
    recon = ad.as_tensor(recon)
    if recon.shape[0] == 0:
        return Tensor(0.0)
    if target.shape != recon.shape:
        raise ShapeError(f"SCE: target {target.shape} vs reconstruction {recon.shape}")
    zero = (np.linalg.norm(target.data, axis=1) == 0) | (np.linalg.norm(recon.data, axis=1) == 0)
    if zero.any():
        log.debug("SCE: %d zero-norm rows scored with cosine 0", int(zero.sum()))
    # relu guards against 1 - cos dipping a rounding error below zero
    base = ad.relu(1.0 - ad.cosine_similarity(target, recon))
    return ad.mean(ad.power(base, gamma))


def loss_node(X, X_hat, nodes, gamma=2.0):
    nodes = np.asarray(nodes, dtype=np.int64)
    return scaled_cosine_error(ad.as_tensor(X)[nodes], ad.gather_rows(X_hat, nodes), gamma)


def loss_edge(E, E_hat, gamma=2.0):
    """``E`` and ``E_hat`` hold one row per corrupted edge."""
    return scaled_cosine_error(E, E_hat, gamma)


def info_nce(A, B, tau=0.2):
    """Mean over rows of ``-log softmax_j(cos(a_i, b_j) / tau)[i]``, every
    row of ``B`` acting as a candidate."""
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    A, B = ad.as_tensor(A), ad.as_tensor(B)
    if A.shape != B.shape:
        raise ShapeError(f"InfoNCE: shapes {A.shape} and {B.shape} differ")
    na, nb = ad.normalize_rows(A), ad.normalize_rows(B)
    sims = (na @ nb.T) * (1.0 / tau)
    positive = ad.sum_(na * nb, axis=1) * (1.0 / tau)
    return ad.mean(ad.logsumexp(sims, axis=1) - positive)


def loss_align(X_N, X_E, X_C, tau=0.2):
    return info_nce(X_N, X_C, tau) + info_nce(X_E, X_C, tau)


def loss_total(l_node, l_edge, l_align, alpha, beta):
    return l_node + alpha * l_edge + beta * l_align
