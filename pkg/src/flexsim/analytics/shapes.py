"""Daily load shapes and k-centroid clustering.

Two distances are offered. ``euclidean_znorm`` is k-means on z-normalized
shapes. ``shape_based`` is k-shape: the shape-based distance
1 - max normalized cross-correlation, with centroids from the leading
eigenvector of the aligned members' scatter matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flexsim.analytics.stats import AnalysisError

DISTANCES = ("euclidean_znorm", "shape_based")


@dataclass(frozen=True)
class LoadShape:
    device_id: str
    values: tuple
    basis: str = "mean"

    def __post_init__(self):
        if len(self.values) != 24:
            raise AnalysisError(f"load shape needs 24 values, got {len(self.values)}")

    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)


def normalize_shape(hourly_kwh, basis: str = "mean", device_id: str = "") -> LoadShape:
    x = np.asarray(hourly_kwh, dtype=float)
    if x.shape != (24,):
        raise AnalysisError(f"load shape needs 24 values, got {x.size}")
    if np.any(x < 0) or np.any(~np.isfinite(x)):
        raise AnalysisError("hourly energy must be finite and non-negative")
    if basis not in ("mean", "median"):
        raise AnalysisError(f"unknown basis {basis!r}")
    top = x.max()
    y = x / top if top > 0 else np.zeros(24)
    return LoadShape(device_id, tuple(float(v) for v in y), basis)


def hourly_profile(times_s, kw, dt_s: float, basis: str = "mean") -> np.ndarray:
    """Hour-of-day energy (kWh) combined across days by mean or median."""
    t = np.asarray(times_s, dtype=float)
    p = np.asarray(kw, dtype=float)
    hour_idx = (t // 3600).astype(np.int64)
    kwh = np.bincount(hour_idx - hour_idx.min(), weights=p * dt_s / 3600.0)
    first = int(hour_idx.min())
    out = np.zeros(24)
    for h in range(24):
        vals = kwh[[i for i in range(kwh.size) if (first + i) % 24 == h]]
        if vals.size:
            out[h] = np.median(vals) if basis == "median" else vals.mean()
    return out


@dataclass(frozen=True)
class ClusterResult:
    assignments: np.ndarray
    centroids: np.ndarray
    dispersion: float  # summed member-to-centroid distance (squared for euclidean)
    per_cluster: tuple
    distance: str


def _znorm(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mu = x.mean(axis=1, keepdims=True)
    sd = x.std(axis=1, keepdims=True)
    safe = np.where(sd > 0, sd, 1.0)
    return np.where(sd > 0, (x - mu) / safe, 0.0)


def _ncc(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Normalized cross-correlation of y against x for every shift."""
    den = np.linalg.norm(x) * np.linalg.norm(y)
    cc = np.correlate(x, y, mode="full")
    if den == 0:
        return np.zeros_like(cc)
    return cc / den


def sbd(x, y) -> tuple:
    """(distance, y shifted into alignment with x)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ncc = _ncc(x, y)
    idx = int(np.argmax(ncc))
    shift = idx - (x.size - 1)
    if shift >= 0:
        aligned = np.concatenate([np.zeros(shift), y[: y.size - shift]])
    else:
        aligned = np.concatenate([y[-shift:], np.zeros(-shift)])
    return max(0.0, 1.0 - float(ncc[idx])), aligned


def _sbd_matrix(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.array([[sbd(ci, xi)[0] for ci in c] for xi in x])


def _sq_euclid(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _seed_centroids(x: np.ndarray, k: int, dist, rng) -> np.ndarray:
    """k-means++ seeding under ``dist``; ties fall back to uniform picks."""
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d = dist(x, x[chosen]).min(axis=1)
    while len(chosen) < k:
        w = d.copy()
        w[chosen] = 0.0
        total = w.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=w / total))
        else:
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        chosen.append(nxt)
        d = np.minimum(d, dist(x, x[[nxt]])[:, 0])
    return x[chosen].copy()


def _extract_shape(members: np.ndarray, ref: np.ndarray) -> np.ndarray:
    if np.linalg.norm(ref) > 0:
        members = np.array([sbd(ref, m)[1] for m in members])
    members = _znorm(members)
    m = members.shape[1]
    s = members.T @ members
    q = np.eye(m) - np.full((m, m), 1.0 / m)
    w, v = np.linalg.eigh(q.T @ s @ q)
    c = v[:, -1]
    if np.sum((members - c) ** 2) > np.sum((members + c) ** 2):
        c = -c
    return _znorm(c)[0]


def _lloyd(x, centroids, dist, update, max_iter):
    k = centroids.shape[0]
    labels = None
    for _ in range(max_iter):
        d = dist(x, centroids)
        new = np.argmin(d, axis=1)
        # an empty cluster takes the member farthest from its own centroid
        for j in range(k):
            if not np.any(new == j):
                far = int(np.argmax(d[np.arange(len(new)), new]))
                new[far] = j
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centroids = np.array([update(x[labels == j], centroids[j]) for j in range(k)])
    d = dist(x, centroids)
    per = tuple(float(d[labels == j, j].sum()) for j in range(k))
    return labels, centroids, per


def cluster_shapes(shapes, k: int, distance: str = "euclidean_znorm", seed: int = 0,
                   n_init: int = 10, max_iter: int = 100) -> ClusterResult:
    """Cluster 24-value shapes into ``k`` groups; best of ``n_init`` restarts.

    Deterministic for a given ``seed``. Centroids are z-normalized.
    """
    rows = [s.array() if isinstance(s, LoadShape) else np.asarray(s, dtype=float) for s in shapes]
    if not rows:
        raise AnalysisError("no shapes to cluster")
    x = np.array(rows)
    n = x.shape[0]
    if k < 1 or k > n:
        raise AnalysisError(f"k must be in [1, {n}], got {k}")
    if distance not in DISTANCES:
        raise AnalysisError(f"unknown distance {distance!r}; choose from {', '.join(DISTANCES)}")
    z = _znorm(x)
    if distance == "euclidean_znorm":
        dist = _sq_euclid

        def update(members, old):
            return members.mean(axis=0)
    else:
        dist = _sbd_matrix
        update = _extract_shape
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        init = _seed_centroids(z, k, dist, rng)
        labels, cents, per = _lloyd(z, init, dist, update, max_iter)
        total = float(sum(per))
        if best is None or total < best[3] - 1e-12:
            best = (labels, cents, per, total)
    labels, cents, per, total = best
    return ClusterResult(labels, cents, total, per, distance)
