"""Low-frequency contribution scores for edges and nodes.

For an edge ``(i, j)`` the spectral terms ``t_n = |u_n[i] * lam_n * u_n[j]|``
(``n`` ascending in frequency) are accumulated into a normalized partial-sum
curve whose mean is the edge score. Mass concentrated at low frequencies
pushes the score toward 1; mass at the top retained frequency gives ``1/K``.
A node's score is the mean over its incident edges.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .spectral import SpectralBundle


@dataclass(frozen=True)
class ContributionScores:
    edge: np.ndarray  # aligned with graph.edges
    node: np.ndarray


def spectral_terms(bundle: SpectralBundle, edges):
    """``|u_n[i] * lam_n * u_n[j]|`` for every edge, shape ``(E, K)``."""
    U = bundle.eigenvectors
    edges = np.asarray(edges).reshape(-1, 2)
    return np.abs(U[edges[:, 0]] * bundle.eigenvalues * U[edges[:, 1]])


def partial_sum_score(terms):
    """Mean normalized prefix sum along the last axis; 0 where all terms vanish.

    Using the last prefix sum as the denominator makes the final ratio
    exactly 1, which keeps scores inside ``[1/K, 1]`` without clipping.
    """
    terms = np.asarray(terms, dtype=np.float64)
    csum = np.cumsum(terms, axis=-1)
    total = csum[..., -1:]
    safe = np.where(total > 0, total, 1.0)
    score = (csum / safe).mean(axis=-1)
    return np.where(total[..., 0] > 0, score, 0.0)


def edge_contributions(bundle: SpectralBundle, g: Graph):
    return partial_sum_score(spectral_terms(bundle, g.edges))


def node_contributions(edge_scores, g: Graph):
    edge_scores = np.asarray(edge_scores, dtype=np.float64)
    if len(edge_scores) != g.num_edges:
        raise ValueError(f"{len(edge_scores)} edge scores for {g.num_edges} edges")
    n = g.num_nodes
    totals = (np.bincount(g.edges[:, 0], edge_scores, minlength=n)
              + np.bincount(g.edges[:, 1], edge_scores, minlength=n))
    deg = g.degrees
    return np.divide(totals, deg, out=np.zeros(n), where=deg > 0)


def contributions(bundle: SpectralBundle, g: Graph) -> ContributionScores:
    ce = edge_contributions(bundle, g)
    return ContributionScores(ce, node_contributions(ce, g))


def write_contrib_csv(path, scores: ContributionScores, g: Graph, header=""):
    """Lines ``i,j,C_E`` for every edge followed by ``i,C_N`` for every node."""
    with open(path, "w") as fh:
        fh.write(header)
        for (i, j), c in zip(g.edges, scores.edge):
            fh.write(f"{i},{j},{float(c)!r}\n")
        for i, c in enumerate(scores.node):
            fh.write(f"{i},{float(c)!r}\n")
