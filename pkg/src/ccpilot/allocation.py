"""Pilot-assignment objective and allocators.

Assignments are integer arrays over all N UEs with 0-based pilot indices.
All greedy allocators share :func:`greedy_chain`, the nearest-neighbour
loop: pilot 0 goes to the start UE, then pilots 1, 2, ..., tau-1, 0, 1, ...
are handed to the unassigned UE nearest to the previously served one.
"""

from __future__ import annotations

import csv
from typing import Sequence

import numpy as np

from .config import check_exhaustive_feasible
from .geometry import Ue


def contamination_objective(assignment, correlation: np.ndarray) -> float:
    """Average pairwise spatial correlation over UE pairs that share a pilot.

    With an orthogonal codebook ``phi_a^T phi_b = tau [a == b]``, so the
    ``1 / tau`` normalization cancels and the objective is
    ``2 / (N (N - 1)) * sum_{n<j, pi_n = pi_j} delta_nj``.
    """
    a = np.asarray(assignment)
    n = a.shape[0]
    if n < 2:
        return 0.0
    same = np.triu(a[:, None] == a[None, :], k=1)
    return float(correlation[same].sum() * 2.0 / (n * (n - 1)))


def pilot_counts(assignment, tau: int) -> np.ndarray:
    return np.bincount(np.asarray(assignment), minlength=tau)


def greedy_chain(distances: np.ndarray, tau: int, start: int) -> np.ndarray:
    """Nearest-neighbour pilot allocation over a precomputed distance matrix."""
    n = distances.shape[0]
    if not 0 <= start < n:
        raise ValueError(f"start UE {start} out of range")
    assignment = np.full(n, -1, dtype=int)
    unassigned = np.ones(n, dtype=bool)
    assignment[start] = 0
    unassigned[start] = False
    prev, pilot = start, 1
    for _ in range(n - 1):
        if pilot == tau:
            pilot = 0
        row = np.where(unassigned, distances[prev], np.inf)
        # argmin returns the first minimum: ties go to the lower UE index
        nxt = int(np.argmin(row))
        if not unassigned[nxt]:
            # all remaining distances are inf; fall back to index order
            nxt = int(np.flatnonzero(unassigned)[0])
        assignment[nxt] = pilot
        unassigned[nxt] = False
        prev, pilot = nxt, pilot + 1
    return assignment


def squared_distances(points: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between the columns of a ``C x N`` array."""
    sq = (points * points).sum(axis=0)
    d2 = sq[:, None] + sq[None, :] - 2 * points.T @ points
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def nn_greedy_allocate(points: np.ndarray, tau: int, start: int) -> np.ndarray:
    """Greedy allocation on chart coordinates (``C x N``)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return greedy_chain(squared_distances(points), tau, start)


def cmd_allocate(F: np.ndarray, tau: int, start: int) -> np.ndarray:
    """Greedy allocation reading distances straight from the feature matrix."""
    return greedy_chain(np.asarray(F, dtype=float), tau, start)


def real_position_allocate(ues: Sequence[Ue], tau: int, start: int) -> np.ndarray:
    """Greedy allocation on the unit-circle image of each UE's BS azimuth.

    Chordal distance is monotone in circular angular distance.
    """
    angles = np.array([u.mean_angle for u in ues])
    return nn_greedy_allocate(np.vstack([np.cos(angles), np.sin(angles)]), tau, start)


def random_allocate(n: int, tau: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random assignment with every pilot used floor or ceil of n/tau times."""
    labels = rng.permutation(tau)[np.arange(n) % tau]
    return rng.permutation(labels)


def canonical_assignments(n: int, tau: int) -> np.ndarray:
    """All assignments of ``n`` UEs to at most ``tau`` pilots up to relabelling.

    Restricted growth strings: UE 0 uses pilot 0 and each new pilot index is
    one more than the largest seen so far. Shape ``(count, n)``, int8.
    """
    rows = np.zeros((1, 1), dtype=np.int8)
    top = np.zeros(1, dtype=np.int8)
    for _ in range(1, n):
        parts, tops = [], []
        for v in range(tau):
            ok = v <= top + 1
            if not ok.any():
                continue
            sub = rows[ok]
            parts.append(np.hstack([sub, np.full((len(sub), 1), v, dtype=np.int8)]))
            tops.append(np.maximum(top[ok], v))
        rows = np.vstack(parts)
        top = np.concatenate(tops).astype(np.int8)
    return rows


def exhaustive_search(correlation: np.ndarray, tau: int,
                      chunk: int = 200_000) -> tuple[np.ndarray, float]:
    """Global minimizer of :func:`contamination_objective` (small instances only).

    The objective only depends on which UEs share a pilot, so searching the
    canonical assignments is exact. Ties keep the first canonical string.
    """
    n = correlation.shape[0]
    check_exhaustive_feasible(n, tau)
    if n == 1:
        return np.zeros(1, dtype=int), 0.0
    cands = canonical_assignments(n, tau)
    iu, ju = np.triu_indices(n, k=1)
    weights = correlation[iu, ju]
    best_val, best_row = np.inf, None
    for lo in range(0, len(cands), chunk):
        block = cands[lo:lo + chunk]
        vals = (block[:, iu] == block[:, ju]) @ weights
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_row = vals[i], block[i]
    assignment = best_row.astype(int)
    return assignment, contamination_objective(assignment, correlation)


def write_assignment_csv(path, assignment) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ue_id", "pilot_index"])
        for n, p in enumerate(np.asarray(assignment)):
            w.writerow([n, int(p)])
