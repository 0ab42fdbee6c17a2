"""Low-frequency eigenpairs of the normalized Laplacian and what is derived
from them: relative node positions on edges, Gaussian RBF expansions of
those distances, and spectral edge features."""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh, ArpackNoConvergence

from .errors import ConfigError, SpectralError
from .graph import Graph, LaplacianView

log = logging.getLogger(__name__)

DENSE_CUTOFF = 512
RESIDUAL_TOL = 1e-8
ZERO_EIG = 1e-12


@dataclass(frozen=True)
class SpectralBundle:
    """Smallest-K eigenpairs, ascending. ``K_e`` columns feed positions and
    edge features."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    K_e: int

    @property
    def K(self):
        return len(self.eigenvalues)

    @property
    def num_nodes(self):
        return self.eigenvectors.shape[0]

    @property
    def coords(self):
        """Spectral coordinates ``U[:, :K_e]``."""
        return self.eigenvectors[:, :self.K_e]


@dataclass(frozen=True)
class PositionMatrix:
    """Per-edge distances ``||U_i - U_j||`` aligned with ``graph.edges``."""

    edges: np.ndarray
    values: np.ndarray
    num_nodes: int

    def to_sparse(self):
        n = self.num_nodes
        e = self.edges
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        vals = np.concatenate([self.values, self.values])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class EdgeFeatureMatrix:
    """``E_ij = U_i * U_j`` (first K_e columns), one row per ``graph.edges``."""

    edges: np.ndarray
    values: np.ndarray

    def lookup(self, i, j):
        i, j = min(i, j), max(i, j)
        hit = np.flatnonzero((self.edges[:, 0] == i) & (self.edges[:, 1] == j))
        if not len(hit):
            raise KeyError((i, j))
        return self.values[hit[0]]


def normalize_signs(U):
    """Flip each column so its largest-magnitude entry is positive.

    Near-ties (relative 1e-10) go to the lowest index so that analytically
    tied entries are not decided by rounding noise.
    """
    U = np.array(U, dtype=np.float64, copy=True)
    for k in range(U.shape[1]):
        col = np.abs(U[:, k])
        top = col.max()
        if top == 0:
            continue
        idx = np.flatnonzero(col >= top * (1 - 1e-10))[0]
        if U[idx, k] < 0:
            U[:, k] = -U[:, k]
    return U


def residuals(L, eigenvalues, eigenvectors):
    """Column-wise ``||L u - lambda u||``."""
    R = L @ eigenvectors - eigenvectors * eigenvalues
    return np.linalg.norm(R, axis=0)


def _dense(L, K):
    w, V = np.linalg.eigh(L.toarray())
    return w[:K], V[:, :K]


def _iterative(L, K, tol, max_iter, seed):
    n = L.shape[0]
    # largest eigenpairs of 2I - L are the smallest of L; 'LA' converges
    # far better than shift-invert-free 'SA' on the raw Laplacian
    shifted = 2.0 * sp.identity(n, format="csr") - L
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        w, V = eigsh(shifted, k=K, which="LA", v0=v0, tol=0.0,
                     maxiter=max_iter or max(1000, 20 * n))
    except ArpackNoConvergence as exc:
        lam = 2.0 - exc.eigenvalues
        res = residuals(L, lam, exc.eigenvectors) if len(lam) else [np.inf]
        raise SpectralError("Lanczos iteration did not converge",
                            float(np.max(res))) from None
    w = 2.0 - w
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def _solve_block(L, K, dense_cutoff, tol, max_iter, seed):
    n = L.shape[0]
    # ARPACK needs K < N - 1; the remaining cases are cheap enough densely
    if n < dense_cutoff or K >= n - 1:
        return _dense(L, K)
    return _iterative(L, K, tol, max_iter, seed)


def _by_component(L, K, dense_cutoff, tol, max_iter, seed):
    """Solve each connected component on its own and merge by eigenvalue.

    A Krylov method started from one vector sees a single copy of each
    repeated eigenvalue, and every component adds a copy of 0 (isolated
    nodes add a copy of 1), so the spectrum is split along components first.
    """
    n = L.shape[0]
    count, comp = connected_components(L, directed=False)
    if count == 1:
        return _solve_block(L, K, dense_cutoff, tol, max_iter, seed)
    L = sp.csr_matrix(L)
    vals, cols = [], []
    for c in range(count):
        idx = np.flatnonzero(comp == c)
        w, V = _solve_block(L[idx][:, idx], min(K, len(idx)), dense_cutoff, tol,
                            max_iter, seed)
        full = np.zeros((n, len(w)))
        full[idx] = V
        vals.append(w)
        cols.append(full)
    w = np.concatenate(vals)
    order = np.argsort(w, kind="stable")[:K]
    return w[order], np.concatenate(cols, axis=1)[:, order]


def eigensolve_smallest(lap: LaplacianView, K, K_e=None, dense_cutoff=DENSE_CUTOFF,
                        tol=RESIDUAL_TOL, max_iter=None, seed=0) -> SpectralBundle:
    """Smallest ``K`` eigenpairs of ``lap.L`` in ascending order.

    Graphs with fewer than ``dense_cutoff`` nodes use a dense symmetric
    solve; larger ones are split into connected components, each solved
    with implicitly restarted Lanczos on ``2I - L`` (or densely when small).
    Eigenvector signs follow :func:`normalize_signs`.
    """
    L = lap.L
    n = L.shape[0]
    K = int(K)
    K_e = K if K_e is None else int(K_e)
    if not 1 <= K <= n:
        raise ConfigError(f"K={K} must satisfy 1 <= K <= N={n}")
    if not 1 <= K_e <= K:
        raise ConfigError(f"K_e={K_e} must satisfy 1 <= K_e <= K={K}")
    if n < dense_cutoff:
        w, V = _dense(L, K)
    else:
        w, V = _by_component(L, K, dense_cutoff, tol, max_iter, seed)
    V = normalize_signs(V)
    # L is PSD: round-off around the null eigenvalues would otherwise leak
    # into the contribution scores as spurious zero-frequency mass
    w = np.where(np.abs(w) < ZERO_EIG, 0.0, w)
    res = residuals(L, w, V)
    worst = float(res.max())
    if worst > tol * max(1.0, float(np.linalg.norm(V, axis=0).max())):
        raise SpectralError(f"eigenpair residual above {tol:g}", worst)
    return SpectralBundle(w, V, K_e)


def position_matrix(bundle: SpectralBundle, g: Graph) -> PositionMatrix:
    U = bundle.coords
    diff = U[g.edges[:, 0]] - U[g.edges[:, 1]]
    return PositionMatrix(g.edges, np.linalg.norm(diff, axis=1), g.num_nodes)


def edge_features(bundle: SpectralBundle, g: Graph) -> EdgeFeatureMatrix:
    U = bundle.coords
    return EdgeFeatureMatrix(g.edges, U[g.edges[:, 0]] * U[g.edges[:, 1]])


def rbf_means(max_distance, count):
    """Evenly spaced means on ``[0, max_distance]``; sigma is their spacing.

    With a single mean, or when every distance is zero, sigma falls back to
    ``max_distance`` or 1.
    """
    count = int(count)
    if count < 1:
        raise ConfigError(f"RBF count must be >= 1, got {count}")
    means = np.linspace(0.0, float(max_distance), count)
    if count > 1 and max_distance > 0:
        sigma = means[1] - means[0]
    else:
        sigma = float(max_distance) if max_distance > 0 else 1.0
    return means, sigma


def rbf_embed(distance, means, sigma):
    """Gaussian basis expansion ``exp(-(d - mu_k)^2 / (2 sigma^2))``.

    ``distance`` may be a scalar or a 1-D array; the result has a trailing
    axis of length ``len(means)``.
    """
    if sigma <= 0:
        raise ConfigError(f"RBF sigma must be > 0, got {sigma}")
    means = np.asarray(means, dtype=np.float64)
    if means.ndim != 1 or len(means) < 1:
        raise ConfigError("need at least one RBF mean")
    d = np.asarray(distance, dtype=np.float64)[..., None]
    return np.exp(-((d - means) ** 2) / (2.0 * sigma ** 2))


# -- spectral.bin cache ------------------------------------------------------

_MAGIC = b"FCGSPEC\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sIQQQ32s")


def save_cache(path, bundle: SpectralBundle, graph_hash: str):
    """Write ``bundle`` as little-endian float64 with a versioned header."""
    digest = bytes.fromhex(graph_hash)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, bundle.num_nodes, bundle.K,
                              bundle.K_e, digest))
        fh.write(np.asarray(bundle.eigenvalues, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(bundle.eigenvectors, dtype="<f8").tobytes())
    return Path(path)


def load_cache(path, graph_hash=None):
    """Read a cache file; returns ``None`` if missing, stale or malformed."""
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        return None
    if len(raw) < _HEADER.size:
        return None
    magic, version, n, k, k_e, digest = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        log.warning("ignoring spectral cache %s: bad header", path)
        return None
    if graph_hash is not None and digest != bytes.fromhex(graph_hash):
        log.info("spectral cache %s is stale (edge hash changed)", path)
        return None
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if len(body) != k + n * k:
        log.warning("ignoring spectral cache %s: truncated", path)
        return None
    w = body[:k].astype(np.float64)
    U = body[k:].reshape(n, k).astype(np.float64)
    return SpectralBundle(w, U, int(k_e))
