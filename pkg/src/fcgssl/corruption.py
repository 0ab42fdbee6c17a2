"""Contribution-driven corruption: weighted sampling without replacement,
union/intersection set combination and the three corrupted views.

Items are nodes (feature masking) or edges (edge dropping); edges are
referred to by their row index in ``graph.edges``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .frequency import ContributionScores
from .graph import Graph

log = logging.getLogger(__name__)

VIEWS = ("G_N", "G_E", "G_C")


# -- samplers ----------------------------------------------------------------

def sample_count(rate, num_items):
    """``round(rate * num_items)`` rounding halves up, clamped to ``[0, M]``."""
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"sampling rate {rate} outside [0, 1]")
    return int(min(max(np.floor(rate * num_items + 0.5), 0), num_items))


def race_select(weights, T, rng=None, n_draws=None):
    """Draw ``T`` distinct indices with probability proportional to ``weights``.

    Each item gets the key ``Exp(1) / w``; the ``T`` smallest keys win, in
    order, which has the same law as ``T`` successive multinomial draws
    without replacement. Zero-weight items come after every positive-weight
    item, in uniformly random order. If all weights are zero the draw is
    uniform.

    With ``n_draws`` the result has shape ``(n_draws, T)``, one independent
    draw per row.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("weights must be one-dimensional")
    M = len(w)
    T = int(T)
    if T < 0 or T > M:
        raise ValueError(f"cannot draw T={T} items from {M}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if M and not np.any(w > 0):
        log.warning("all %d sampling weights are zero; falling back to uniform", M)
        w = np.ones(M)
    rng = np.random.default_rng(rng)
    shape = (M,) if n_draws is None else (int(n_draws), M)
    expo = rng.standard_exponential(shape)
    positive = w > 0
    with np.errstate(divide="ignore"):
        keys = np.where(positive, expo / np.where(positive, w, 1.0), expo)
    order = np.lexsort((keys, np.broadcast_to(~positive, shape)), axis=-1)
    return order[..., :T]


def rank_weights(values):
    """Replace values by ascending ranks ``1..M`` (ties: lower index first)."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


def sample_value_based(weights, T, rng=None, n_draws=None):
    return race_select(weights, T, rng, n_draws)


def sample_rank_based(weights, T, rng=None, n_draws=None):
    return race_select(rank_weights(weights), T, rng, n_draws)


def sample_uniform(num_items, T, rng=None, n_draws=None):
    return race_select(np.ones(num_items), T, rng, n_draws)


# -- plans -------------------------------------------------------------------

@dataclass(frozen=True)
class ItemSet:
    kind: str  # "node", "edge" or "mixed"
    nodes: np.ndarray
    edges: np.ndarray  # indices into graph.edges

    def __len__(self):
        return len(self.nodes) + len(self.edges)


def _sorted(a):
    return np.sort(np.asarray(a, dtype=np.int64))


@dataclass(frozen=True)
class CorruptionPlan:
    S_N: ItemSet
    S_E: ItemSet
    S_C: ItemSet
    P_N: np.ndarray
    Q_N: np.ndarray
    P_E: np.ndarray
    Q_E: np.ndarray
    r_N: float
    r_E: float
    seed: int
    sub_seeds: tuple
    combine: bool = True

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "sub_seeds": [int(s) for s in self.sub_seeds],
            "r_N": self.r_N,
            "r_E": self.r_E,
            "combine": self.combine,
            "P_N": self.P_N.tolist(), "Q_N": self.Q_N.tolist(),
            "P_E": self.P_E.tolist(), "Q_E": self.Q_E.tolist(),
            "S_N": {"nodes": self.S_N.nodes.tolist()},
            "S_E": {"edges": self.S_E.edges.tolist()},
            "S_C": {"nodes": self.S_C.nodes.tolist(), "edges": self.S_C.edges.tolist()},
        }

    def write_json(self, path, graph: Graph | None = None):
        doc = self.to_dict()
        if graph is not None:
            for key in ("S_E", "S_C"):
                idx = np.asarray(doc[key]["edges"], dtype=np.int64)
                doc[key]["edge_pairs"] = graph.edges[idx].tolist()
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)


def build_plan(scores: ContributionScores, g: Graph, r_N, r_E, seed,
               uniform_nodes=False, uniform_edges=False, combine=True):
    """Draw the value- and rank-based node/edge sets and combine them.

    ``S_N`` and ``S_E`` are the unions of the value- and rank-based draws and
    ``S_C`` holds both intersections. ``uniform_nodes``/``uniform_edges``
    swap the contribution weights for uniform draws. With ``combine=False``
    the value-based draws alone form the input views and the rank-based
    draws form the contrast view.
    """
    T_N = sample_count(r_N, g.num_nodes)
    T_E = sample_count(r_E, g.num_edges)
    sub = tuple(int(s) for s in np.random.SeedSequence(seed).generate_state(4))
    rngs = [np.random.default_rng(s) for s in sub]

    if uniform_nodes:
        P_N = sample_uniform(g.num_nodes, T_N, rngs[0])
        Q_N = sample_uniform(g.num_nodes, T_N, rngs[1])
    else:
        P_N = sample_value_based(scores.node, T_N, rngs[0])
        Q_N = sample_rank_based(scores.node, T_N, rngs[1])
    if uniform_edges:
        P_E = sample_uniform(g.num_edges, T_E, rngs[2])
        Q_E = sample_uniform(g.num_edges, T_E, rngs[3])
    else:
        P_E = sample_value_based(scores.edge, T_E, rngs[2])
        Q_E = sample_rank_based(scores.edge, T_E, rngs[3])
    P_N, Q_N, P_E, Q_E = map(_sorted, (P_N, Q_N, P_E, Q_E))
    empty = np.zeros(0, dtype=np.int64)

    if combine:
        S_N = ItemSet("node", np.union1d(P_N, Q_N), empty)
        S_E = ItemSet("edge", empty, np.union1d(P_E, Q_E))
        S_C = ItemSet("mixed", np.intersect1d(P_N, Q_N), np.intersect1d(P_E, Q_E))
    else:
        S_N = ItemSet("node", P_N, empty)
        S_E = ItemSet("edge", empty, P_E)
        S_C = ItemSet("mixed", Q_N, Q_E)
    return CorruptionPlan(S_N, S_E, S_C, P_N, Q_N, P_E, Q_E, float(r_N), float(r_E),
                          int(seed), sub, combine)


# -- corrupted views -----------------------------------------------------------

@dataclass(frozen=True)
class CorruptedGraph:
    """A view of ``base`` with ``masked`` feature rows and ``dropped`` edges.

    The mask token lives with the model; :meth:`corrupted_features` fills
    masked rows with a caller-supplied token for inspection.
    """

    base: Graph
    view: str
    masked: np.ndarray
    dropped: np.ndarray  # indices into base.edges

    @property
    def kept(self):
        keep = np.ones(self.base.num_edges, dtype=bool)
        keep[self.dropped] = False
        return np.flatnonzero(keep)

    @property
    def edges(self):
        return self.base.edges[self.kept]

    @property
    def num_nodes(self):
        return self.base.num_nodes

    @property
    def mask(self):
        m = np.zeros(self.base.num_nodes, dtype=bool)
        m[self.masked] = True
        return m

    def corrupted_features(self, token):
        X = np.array(self.base.features, copy=True)
        X[self.masked] = token
        return X


def materialize(plan: CorruptionPlan, g: Graph, view) -> CorruptedGraph:
    empty = np.zeros(0, dtype=np.int64)
    if view == "G_N":
        return CorruptedGraph(g, view, plan.S_N.nodes, empty)
    if view == "G_E":
        return CorruptedGraph(g, view, empty, plan.S_E.edges)
    if view == "G_C":
        return CorruptedGraph(g, view, plan.S_C.nodes, plan.S_C.edges)
    raise ConfigError(f"unknown view {view!r}; expected one of {VIEWS}")


def clean_view(g: Graph) -> CorruptedGraph:
    """The uncorrupted graph as a view (no masking, every edge kept)."""
    empty = np.zeros(0, dtype=np.int64)
    return CorruptedGraph(g, "clean", empty, empty)
