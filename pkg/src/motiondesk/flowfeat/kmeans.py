"""Lloyd's k-means with k-means++ seeding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    inertia_history: list[float]
    n_iter: int


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    n, d = points.shape
    k = centroids.shape[0]
    out = np.empty((n, k))
    step = max(1, (1 << 22) // max(1, k * d))
    for lo in range(0, n, step):
        diff = points[lo : lo + step, None, :] - centroids[None, :, :]
        out[lo : lo + step] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid labels (ties to the lowest index) and squared distances."""
    d2 = _sq_dists(points, centroids)
    labels = d2.argmin(axis=1)
    return labels, d2[np.arange(len(points)), labels]


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    closest = _sq_dists(points, centroids[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        centroids[c] = points[idx]
        closest = np.minimum(closest, _sq_dists(points, centroids[c : c + 1])[:, 0])
    return centroids


def kmeans(points, k: int, seed: int, max_iters: int = 100) -> KMeansResult:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(pts) < k:
        raise ValueError(f"kmeans needs at least k={k} points, got {len(pts)}")
    rng = np.random.default_rng(seed)
    centroids = kmeans_plus_plus(pts, k, rng)

    history: list[float] = []
    labels = None
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        new_labels, d2 = assign(pts, centroids)
        history.append(float(d2.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centroids = _update(pts, labels, d2, centroids)
    else:
        labels, d2 = assign(pts, centroids)
        history.append(float(d2.sum()))
    return KMeansResult(centroids, labels, history[-1], history, n_iter)


def _update(pts, labels, d2, old):
    k = old.shape[0]
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros_like(old)
    np.add.at(sums, labels, pts)
    centroids = old.copy()
    filled = counts > 0
    centroids[filled] = sums[filled] / counts[filled, None]
    if not filled.all():
        # re-seed each empty cluster at the point currently farthest from its centroid
        _, far = assign(pts, centroids)
        far = far.copy()
        for c in np.flatnonzero(~filled):
            idx = int(np.argmax(far))
            centroids[c] = pts[idx]
            far[idx] = -1.0
    return centroids
