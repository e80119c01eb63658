"""k-means clustering of embeddings, plus the size-preserving random
relabeling used as the color-blind null model.

Plain Lloyd iterations over Euclidean distance on raw embedding vectors.
Initialization is either greedy k-means++ (several candidates per step,
picked by resulting inertia) or uniform random points; the best of n_init
restarts by final inertia wins.  Everything is driven by one seeded
generator, so results are a pure function of (data, k, init, n_init, seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

MAX_ITER = 300
REL_TOL = 1e-6


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray  # (k, d)
    labels: np.ndarray     # (n,) int
    inertia: float
    k: int
    init: str
    n_init: int
    seed: int
    inertia_trajectory: tuple  # per-iteration inertia of the winning restart


def _as_matrix(embeddings) -> np.ndarray:
    if isinstance(embeddings, np.ndarray):
        x = np.asarray(embeddings, dtype=np.float64)
        if x.ndim != 2:
            raise DataError(f"expected (n, d) matrix, got shape {x.shape}")
        return x
    dims = {e.dim for e in embeddings}
    if len(dims) > 1:
        raise DataError(f"mixed embedding dimensionalities: {sorted(dims)}")
    return np.array([e.vector for e in embeddings], dtype=np.float64)


def _sq_dists(x, centers):
    # ||x||^2 - 2 x.c + ||c||^2, clipped: the cross-term form can go
    # slightly negative in floating point
    d = (np.einsum("ij,ij->i", x, x)[:, None]
         - 2.0 * x @ centers.T
         + np.einsum("ij,ij->i", centers, centers)[None, :])
    return np.maximum(d, 0.0)


def _init_kmeanspp(x, k, rng):
    n = len(x)
    n_candidates = 2 + int(np.log(k))
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1]).ravel()
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            centers[c:] = x[rng.integers(n, size=k - c)]
            break
        cand = rng.choice(n, size=n_candidates, p=closest / total)
        cand_d = _sq_dists(x, x[cand])
        pots = np.minimum(closest[:, None], cand_d).sum(axis=0)
        best = cand[np.argmin(pots)]
        centers[c] = x[best]
        closest = np.minimum(closest, cand_d[:, np.argmin(pots)])
    return centers


def _lloyd(x, centers, rng):
    k = len(centers)
    trajectory = []
    prev = np.inf
    for _ in range(MAX_ITER):
        d = _sq_dists(x, centers)
        labels = np.argmin(d, axis=1)
        inertia = float(d[np.arange(len(x)), labels].sum())
        trajectory.append(inertia)

        new_centers = np.zeros_like(centers)
        counts = np.bincount(labels, minlength=k)
        np.add.at(new_centers, labels, x)
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            # reseed each empty centroid at the point farthest from its
            # assigned centroid, then reassign
            far = np.argsort(d[np.arange(len(x)), labels])[::-1]
            for e, idx in zip(empty, far[:len(empty)]):
                new_centers[e] = x[idx]
                counts[e] = 1
                old = labels[idx]
                new_centers[old] -= x[idx]
                counts[old] -= 1
                labels[idx] = e
        nonzero = counts > 0
        new_centers[nonzero] /= counts[nonzero, None]

        if prev - inertia <= REL_TOL * max(prev, 1e-300) and prev != np.inf:
            centers = new_centers
            break
        centers = new_centers
        prev = inertia
    d = _sq_dists(x, centers)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(len(x)), labels].sum())
    trajectory.append(inertia)
    return centers, labels, inertia, trajectory


def kmeans(embeddings, k: int = 10, init: str = "kmeanspp", n_init: int = 10,
           seed: int = 0) -> ClusterModel:
    """Cluster embeddings with k-means; best of n_init seeded restarts."""
    x = _as_matrix(embeddings)
    n = len(x)
    if not 1 <= k <= n:
        raise DataError(f"k={k} outside [1, {n}]")
    if init not in ("kmeanspp", "random"):
        raise DataError(f"unknown init {init!r}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        if init == "kmeanspp":
            centers = _init_kmeanspp(x, k, rng)
        else:
            centers = x[rng.choice(n, size=k, replace=False)]
        centers, labels, inertia, traj = _lloyd(x, centers, rng)
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia, traj)
    centers, labels, inertia, traj = best
    return ClusterModel(centroids=centers, labels=labels, inertia=inertia, k=k,
                        init=init, n_init=n_init, seed=seed,
                        inertia_trajectory=tuple(traj))


def random_relabel(labels, rng) -> np.ndarray:
    """Uniformly random permutation of the label multiset.

    Cluster sizes are exactly preserved; rng is a Generator or a seed.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("empty label vector")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    return labels[rng.permutation(len(labels))]


def write_assignments_csv(path, ids, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "cluster"])
        for i, lab in zip(ids, labels):
            w.writerow([i, int(lab)])
