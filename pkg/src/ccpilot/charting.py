"""Channel charting: covariance-distance features and their low-dimensional maps.

Charts are stored as ``C x N`` arrays (one column per UE).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class GraphDisconnectedError(ValueError):
    """The neighbourhood graph has more than one connected component."""

    def __init__(self, components: list[list[int]]):
        sizes = ", ".join(str(len(c)) for c in components)
        preview = "; ".join(
            "{" + ", ".join(map(str, c[:8])) + (", ..." if len(c) > 8 else "") + "}"
            for c in components[:4])
        super().__init__(
            f"kNN graph is disconnected into {len(components)} components "
            f"(sizes {sizes}): {preview}. Increase the neighbour count (knn).")
        self.components = components


@dataclass
class ChartEmbedding:
    Z: np.ndarray                       # (C, N)
    method: str
    eigenvalues: np.ndarray             # all retained eigenvalues, descending
    residual: float = float("nan")
    padded: bool = False
    capped: bool = False
    residual_trace: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.Z.shape[0]


def spatial_correlation(Rn: np.ndarray, Rj: np.ndarray) -> float:
    """Normalized inner product ``tr(Rn^H Rj) / (|Rn|_F |Rj|_F)`` in [0, 1].

    Accepts full matrices or block stacks of equal shape.
    """
    nn, nj = np.linalg.norm(Rn), np.linalg.norm(Rj)
    if nn == 0 or nj == 0:
        raise ValueError("spatial correlation undefined for a zero matrix")
    value = np.vdot(Rn, Rj).real / (nn * nj)
    return float(np.clip(value, 0.0, 1.0))


def correlation_matrix(covs: np.ndarray) -> np.ndarray:
    """Pairwise spatial correlations of all UEs, ``N x N``, unit diagonal."""
    flat = covs.reshape(covs.shape[0], -1)
    norms = np.linalg.norm(flat, axis=1)
    if np.any(norms == 0):
        raise ValueError("spatial correlation undefined for a zero matrix")
    flat = flat / norms[:, None]
    delta = np.clip((flat.conj() @ flat.T).real, 0.0, 1.0)
    delta = (delta + delta.T) / 2
    np.fill_diagonal(delta, 1.0)
    return delta


def feature_matrix(covs: np.ndarray) -> np.ndarray:
    """CMD dissimilarities ``1 - delta``; symmetric, zero diagonal."""
    if covs.shape[0] < 2:
        raise ValueError("need at least two UEs")
    F = 1.0 - correlation_matrix(covs)
    np.fill_diagonal(F, 0.0)
    return F


def _centering(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of every eigenvector made nonnegative
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _spectral_embedding(K: np.ndarray, C: int, method: str) -> ChartEmbedding:
    """Top-``C`` eigen-coordinates ``sqrt(lambda_i) u_i^T`` of a symmetric matrix."""
    n = K.shape[0]
    if not 1 <= C <= n:
        raise ValueError(f"chart dimension must be in [1, {n}], got {C}")
    vals, vecs = np.linalg.eigh((K + K.T) / 2)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], _fix_signs(vecs[:, order])
    top = vals[0] if vals[0] > 0 else 0.0
    vals = np.where(vals > 1e-12 * top, vals, 0.0)
    n_pos = int(np.count_nonzero(vals > 0))
    Z = np.sqrt(vals[:C])[:, None] * vecs[:, :C].T
    return ChartEmbedding(Z, method, vals[:n_pos], padded=C > n_pos)


def pca_embedding(F: np.ndarray, C: int) -> ChartEmbedding:
    """PCA chart from the centred feature covariance ``F^T C F``."""
    Cm = _centering(F.shape[0])
    emb = _spectral_embedding(F.T @ Cm @ F, C, "pca")
    emb.residual = residual_variance(F, emb.Z)
    return emb


def knn_graph(F: np.ndarray, nu: int) -> np.ndarray:
    """Directed neighbourhood graph as a dense weight matrix.

    Row ``n`` keeps the ``nu`` smallest off-diagonal entries of ``F[n]``
    (ties to the lower index); absent edges are ``inf``.
    """
    n = F.shape[0]
    if not 1 <= nu <= n - 1:
        raise ValueError(f"nu must be in [1, {n - 1}], got {nu}")
    masked = F.astype(float).copy()
    np.fill_diagonal(masked, np.inf)
    nbrs = np.argsort(masked, axis=1, kind="stable")[:, :nu]
    W = np.full((n, n), np.inf)
    rows = np.repeat(np.arange(n), nu)
    W[rows, nbrs.ravel()] = F[rows, nbrs.ravel()]
    return W


def _components(reach: np.ndarray) -> list[list[int]]:
    seen = np.zeros(reach.shape[0], dtype=bool)
    comps = []
    for i in range(reach.shape[0]):
        if not seen[i]:
            members = np.flatnonzero(reach[i])
            seen[members] = True
            comps.append(members.tolist())
    return comps


def shortest_paths(W: np.ndarray) -> np.ndarray:
    """Geodesic distances by Floyd-Warshall on the symmetrized graph.

    Edges are merged by union keeping the lighter weight in either direction.
    """
    if np.any(W < 0):
        raise ValueError("edge weights must be nonnegative")
    D = np.minimum(W, W.T).astype(float)
    np.fill_diagonal(D, 0.0)
    for k in range(D.shape[0]):
        np.minimum(D, D[:, k, None] + D[None, k, :], out=D)
    if np.isinf(D).any():
        raise GraphDisconnectedError(_components(np.isfinite(D)))
    return D


def classical_mds(Fp: np.ndarray, C: int) -> ChartEmbedding:
    """Classical MDS of a dissimilarity matrix into ``C`` dimensions."""
    Cm = _centering(Fp.shape[0])
    K = -0.5 * Cm @ (Fp * Fp) @ Cm
    return _spectral_embedding(K, C, "mds")


def pairwise_distances(Z: np.ndarray) -> np.ndarray:
    """Euclidean distances between the columns of ``Z``."""
    sq = (Z * Z).sum(axis=0)
    d2 = sq[:, None] + sq[None, :] - 2 * Z.T @ Z
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(np.maximum(d2, 0.0))


def residual_variance(F: np.ndarray, Z: np.ndarray) -> float:
    """``1 - corr(F, D_Z)`` with per-column centring, ``D_Z`` the chart distances."""
    D = pairwise_distances(Z)
    Fc = F - F.mean(axis=0)
    Dc = D - D.mean(axis=0)
    var_f, var_d = (Fc * Fc).sum(), (Dc * Dc).sum()
    if var_f == 0 or var_d == 0:
        raise ValueError("residual variance undefined for a constant distance matrix")
    return float(1.0 - (Fc * Dc).sum() / np.sqrt(var_f * var_d))


def geodesic_distances(F: np.ndarray, nu: int) -> np.ndarray:
    nu = min(nu, F.shape[0] - 1)
    return shortest_paths(knn_graph(F, nu))


def isomap(F: np.ndarray, C: int, nu: int) -> ChartEmbedding:
    emb = classical_mds(geodesic_distances(F, nu), C)
    emb.method = "isomap"
    emb.residual = residual_variance(F, emb.Z)
    return emb


def adaptive_chart(F: np.ndarray, eps: float = 1e-4, xi: float = 1e-4,
                   c_max: Optional[int] = None, nu: int = 15) -> ChartEmbedding:
    """Isomap chart whose dimension grows until the residual variance settles.

    Stops at the first ``C`` with ``r_C <= eps`` and ``|r_C - r_{C-1}| <= xi``;
    at ``C = 1`` there is no predecessor and only the ``eps`` test applies.
    Otherwise returns ``c_max`` dimensions with ``capped`` set.
    ``nu`` is clipped to ``N - 1``.
    """
    if eps <= 0 or xi <= 0:
        raise ValueError("thresholds must be positive")
    n = F.shape[0]
    c_max = max(1, min(n - 1, 16)) if c_max is None else c_max
    # MDS coordinates are nested in C, so one decomposition serves all sizes
    full = classical_mds(geodesic_distances(F, nu), c_max)
    prev = None
    trace = []
    converged = False
    for C in range(1, c_max + 1):
        r = residual_variance(F, full.Z[:C])
        trace.append(r)
        if r <= eps and (prev is None or abs(r - prev) <= xi):
            converged = True
            break
        prev = r
    emb = ChartEmbedding(full.Z[:C].copy(), "isomap", full.eigenvalues,
                         residual=trace[-1], padded=C > len(full.eigenvalues),
                         capped=not converged, residual_trace=trace)
    return emb


def write_chart_csv(path, emb: ChartEmbedding) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ue_id"] + [f"z_{i + 1}" for i in range(emb.dim)])
        for n in range(emb.Z.shape[1]):
            w.writerow([n] + [repr(float(v)) for v in emb.Z[:, n]])
