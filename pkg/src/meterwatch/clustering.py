"""K-means over daily profiles: seeded k-means++ init, Lloyd iterations,
best-of-restarts selection, and the knee-rule cluster-count pick.

Determinism contract: restart ``r`` of a fit seeded with ``s`` draws from
a generator derived from ``(s, r)``; the winning restart is the lowest
(inertia, restart index) pair, so parallel and sequential execution agree.
Nearest-centroid ties resolve to the lowest cluster index.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np

from .profiles import DailyProfile

DEFAULT_RESTARTS = 10
DEFAULT_MAX_ITERS = 300
DEFAULT_TOL = 1e-6
K_MIN = 1
K_MAX = 6

# Relative inertia improvement below which adding a cluster stops paying off.
KNEE_DROP = 0.15
# All pairwise distances under this floor means one cluster tells the story.
DEGENERATE_DISTANCE_FLOOR = 1e-6


@dataclass
class ClusterModel:
    """A fitted profile clustering.

    ``assignments`` maps each day to the index of its nearest centroid;
    ``inertia`` is the sum of squared distances to assigned centroids and
    can be recomputed from the other fields.  ``inertia_history`` records
    the objective after each assignment pass of the winning restart.
    """

    k: int
    centroids: np.ndarray
    assignments: dict[date, int]
    inertia: float
    seed: int
    iterations: int
    restart_index: int
    inertia_history: tuple[float, ...]

    def counts(self) -> list[int]:
        sizes = [0] * self.k
        for label in self.assignments.values():
            sizes[label] += 1
        return sizes

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "iterations": self.iterations,
            "restart_index": self.restart_index,
            "inertia": self.inertia,
            "centroids": [[float(v) for v in row] for row in self.centroids],
            "assignments": {d.isoformat(): int(c) for d, c in sorted(self.assignments.items())},
        }


@dataclass
class ClusterSummary:
    """Mean profile and population of each cluster."""

    centroids: np.ndarray
    counts: list[int]
    most_populated: int

    def to_json_dict(self) -> dict:
        return {
            "counts": self.counts,
            "most_populated": self.most_populated,
            "mean_profiles": [[float(v) for v in row] for row in self.centroids],
        }


@dataclass
class KSelectionReport:
    """Inertia for each candidate k and the recommended cluster count."""

    k_values: tuple[int, ...]
    inertias: tuple[float, ...]
    recommended_k: int

    def to_json_dict(self) -> dict:
        return {
            "k_values": list(self.k_values),
            "inertias": list(self.inertias),
            "recommended_k": self.recommended_k,
        }


def _profile_matrix(profiles: Sequence[DailyProfile]) -> tuple[np.ndarray, list[date]]:
    if not profiles:
        raise ValueError("no profiles to cluster")
    days = [p.day for p in profiles]
    X = np.array([p.values for p in profiles], dtype=float)
    return X, days


def _plus_plus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: D^2-weighted sampling of data points.

    Consumes exactly one uniform draw per added centroid, so the draw
    sequence is invariant under rescaling of X.
    """
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        d2 = np.min(
            ((X[:, None, :] - X[chosen][None, :, :]) ** 2).sum(axis=2), axis=1
        )
        total = d2.sum()
        u = rng.random()
        if total <= 0.0:
            index = min(int(u * n), n - 1)
        else:
            index = int(np.searchsorted(np.cumsum(d2 / total), u, side="right"))
            index = min(index, n - 1)
        chosen.append(index)
    return X[chosen].copy()


def _assign(X: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)  # argmin takes the lowest index on ties
    return labels, d2


def _repair_empty(
    X: np.ndarray, centroids: np.ndarray, labels: np.ndarray, k: int
) -> np.ndarray:
    """Move the farthest point of a multi-member cluster into each empty one."""
    labels = labels.copy()
    for cluster in range(k):
        if np.any(labels == cluster):
            continue
        counts = np.bincount(labels, minlength=k)
        movable = counts[labels] >= 2
        if not np.any(movable):  # pragma: no cover - requires n < k upstream
            raise ValueError("cannot repair empty cluster: too few points")
        dist = ((X - centroids[labels]) ** 2).sum(axis=1)
        dist[~movable] = -1.0
        labels[int(np.argmax(dist))] = cluster
    return labels


def _single_move_polish(
    X: np.ndarray, labels: np.ndarray, k: int
) -> tuple[np.ndarray, bool]:
    """Greedy single-point moves with exact objective deltas.

    Lloyd stops when no point is nearer another centroid; a point can
    still lower the total inertia by moving once the centroid shift it
    causes is priced in (Hartigan's criterion).  Applying such moves
    until none improves escapes the flat local optima Lloyd gets stuck
    in on tiny instances; every stable point of this polish is also a
    Lloyd fixed point.
    """
    labels = labels.copy()
    moved_any = False
    for _ in range(200 * X.shape[0]):  # hard cap against float-noise cycling
        counts = np.bincount(labels, minlength=k)
        centroids = np.vstack([X[labels == c].mean(axis=0) for c in range(k)])
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        best_delta = -1e-12
        best_move = None
        for i in range(X.shape[0]):
            a = labels[i]
            if counts[a] <= 1:
                continue
            leave_gain = d2[i, a] * counts[a] / (counts[a] - 1.0)
            for b in range(k):
                if b == a:
                    continue
                join_cost = d2[i, b] * counts[b] / (counts[b] + 1.0)
                delta = join_cost - leave_gain
                if delta < best_delta:
                    best_delta = delta
                    best_move = (i, b)
        if best_move is None:
            break
        labels[best_move[0]] = best_move[1]
        moved_any = True
    return labels, moved_any


def _lloyd(
    X: np.ndarray, centroids: np.ndarray, k: int, max_iters: int, tol: float
) -> tuple[np.ndarray, np.ndarray, float, int, list[float]]:
    labels = None
    history: list[float] = []
    iterations = 0
    for _ in range(max_iters):
        new_labels, d2 = _assign(X, centroids)
        new_labels = _repair_empty(X, centroids, new_labels, k)
        inertia = float(
            ((X - centroids[new_labels]) ** 2).sum()
        )
        history.append(inertia)
        converged = labels is not None and np.array_equal(new_labels, labels)
        labels = new_labels
        if converged:
            break
        iterations += 1
        new_centroids = np.empty_like(centroids)
        for cluster in range(k):
            new_centroids[cluster] = X[labels == cluster].mean(axis=0)
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < tol:
            # Verify the fixed point: one more assignment pass must not
            # change any label before we stop.
            check, _ = _assign(X, centroids)
            check = _repair_empty(X, centroids, check, k)
            if np.array_equal(check, labels):
                history.append(float(((X - centroids[check]) ** 2).sum()))
                break
    inertia = float(((X - centroids[labels]) ** 2).sum())
    return centroids, labels, inertia, iterations, history


def kmeans_fit(
    profiles: Sequence[DailyProfile],
    k: int,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> ClusterModel:
    """Fit k clusters, keeping the best of ``restarts`` seeded attempts.

    Raises:
        ValueError: if k is outside 1..6 or there are fewer profiles than k.
    """
    if not K_MIN <= k <= K_MAX:
        raise ValueError("k must lie in {}..{}".format(K_MIN, K_MAX))
    X, days = _profile_matrix(profiles)
    if len(profiles) < k:
        raise ValueError(
            "need at least {} profiles for k={}, got {}".format(k, k, len(profiles))
        )
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    best = None
    for restart in range(restarts):
        rng = np.random.default_rng([seed, restart])
        centroids = _plus_plus_init(X, k, rng)
        centroids, labels, inertia, iterations, history = _lloyd(
            X, centroids, k, max_iters, tol
        )
        # Alternate Lloyd with the single-move polish until neither improves.
        for _ in range(32):
            labels, moved = _single_move_polish(X, labels, k)
            if not moved:
                break
            centroids = np.vstack([X[labels == c].mean(axis=0) for c in range(k)])
            centroids, labels, inertia, more_iters, extra = _lloyd(
                X, centroids, k, max_iters, tol
            )
            iterations += more_iters
            history.extend(extra)
        if best is None or inertia < best[0]:
            best = (inertia, restart, centroids, labels, iterations, history)
    inertia, restart, centroids, labels, iterations, history = best
    assignments = {day: int(label) for day, label in zip(days, labels)}
    return ClusterModel(
        k=k,
        centroids=centroids,
        assignments=assignments,
        inertia=inertia,
        seed=seed,
        iterations=iterations,
        restart_index=restart,
        inertia_history=tuple(history),
    )


def select_k(
    profiles: Sequence[DailyProfile],
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    k_max: int = K_MAX,
) -> KSelectionReport:
    """Fit k=1..k_max and recommend the knee of the inertia curve.

    The recommendation is the smallest k whose relative inertia drop to
    k+1 falls below 15%.  Cluster counts that isolate a single day are
    treated as over-segmentation and end the scan: a routine that happens
    once is not a routine, and giving an atypical day its own centroid
    would hide it from the anomaly ranking.  Inputs whose profiles are
    all within a tiny distance of each other short-circuit to k=1.

    Raises:
        ValueError: with fewer than ``k_max`` profiles.
    """
    if len(profiles) < k_max:
        raise ValueError(
            "need at least {} profiles to scan k=1..{}".format(k_max, k_max)
        )
    X, _ = _profile_matrix(profiles)
    if _max_pairwise_distance(X) < DEGENERATE_DISTANCE_FLOOR:
        inertias = tuple(0.0 for _ in range(K_MIN, k_max + 1))
        return KSelectionReport(tuple(range(K_MIN, k_max + 1)), inertias, 1)

    inertias = []
    last_sound_k = K_MIN
    for k in range(K_MIN, k_max + 1):
        model = kmeans_fit(profiles, k, seed=seed, restarts=restarts)
        inertias.append(model.inertia)
        if k == K_MIN or (min(model.counts()) >= 2 and last_sound_k == k - 1):
            last_sound_k = k
    recommended = last_sound_k
    for k in range(K_MIN, last_sound_k):
        current, following = inertias[k - 1], inertias[k]
        drop = 0.0 if current <= 0.0 else (current - following) / current
        if drop < KNEE_DROP:
            recommended = k
            break
    return KSelectionReport(tuple(range(K_MIN, k_max + 1)), tuple(inertias), recommended)


def _max_pairwise_distance(X: np.ndarray) -> float:
    if X.shape[0] < 2:
        return 0.0
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.max()))


def mean_cluster_profiles(model: ClusterModel) -> ClusterSummary:
    """Centroids with member counts; the most populated cluster is the
    household's most typical routine (lowest index wins a tie)."""
    counts = model.counts()
    most = max(range(model.k), key=lambda c: (counts[c], -c))
    return ClusterSummary(model.centroids.copy(), counts, most)
