"""Color-coherence measurements in JzAzBz space.

An image's color content is summarized as a normalized 8-bin histogram over
JzAzBz octants (per-axis split at the midpoint of the canonical sRGB-gamut
ranges).  Pairs of histograms are compared with a Jensen-Shannon-based
similarity, and clusterings are scored by within-cluster pair similarity
and by the coherence fraction: the share of images whose mean color lies
inside the convex hull of exactly one cluster.

Only the central (masked) region of an image ever contributes to these
metrics; borders are embedding-only context.
"""

from __future__ import annotations

import json
import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import colorspace
from .clustering import random_relabel
from .errors import DataError, DegenerateInputError

N_BINS = 8
HULL_TOL = 1e-9


def octant_index(jzazbz_points) -> np.ndarray:
    """Map JzAzBz points (..., 3) to octant bin indices in [0, 8)."""
    pts = np.asarray(jzazbz_points)
    above = pts > colorspace.JZAZBZ_AXIS_MIDPOINTS
    return (above[..., 0].astype(np.intp) * 4
            + above[..., 1] * 2
            + above[..., 2])


def color_histogram(img) -> np.ndarray:
    """Normalized 8-bin octant histogram of an image's central region."""
    central = img.central()
    if central.size == 0:
        raise DegenerateInputError(f"{img.id}: empty central mask")
    bins = octant_index(colorspace.image_to_jzazbz(central))
    counts = np.bincount(bins.ravel(), minlength=N_BINS).astype(np.float64)
    return counts / counts.sum()


def color_histograms(records) -> np.ndarray:
    """Stacked histograms for a dataset, shape (n, 8)."""
    return np.array([color_histogram(r) for r in records])


def _check_histogram(h):
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (N_BINS,):
        raise DataError(f"expected {N_BINS}-bin histogram, got shape {h.shape}")
    if np.any(h < 0) or abs(h.sum() - 1.0) > 1e-9:
        raise DataError("histogram is not a normalized distribution")
    return h


def _js_divergence(p, q):
    """Jensen-Shannon divergence in bits, vectorized over leading axes.

    Each distribution is compared against the mixture (p + q) / 2; zero
    bins contribute nothing (0 * log 0 = 0).
    """
    m = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_pm = np.where(p > 0, p * (np.log2(np.maximum(p, 1e-300)) - np.log2(np.maximum(m, 1e-300))), 0.0)
        kl_qm = np.where(q > 0, q * (np.log2(np.maximum(q, 1e-300)) - np.log2(np.maximum(m, 1e-300))), 0.0)
    return 0.5 * (kl_pm.sum(axis=-1) + kl_qm.sum(axis=-1))


def color_similarity(h1, h2) -> float:
    """1 minus the Jensen-Shannon divergence (base 2) of two histograms.

    Symmetric, bounded to [0, 1]: 1 for identical distributions, 0 for
    disjoint supports.
    """
    p = _check_histogram(h1)
    q = _check_histogram(h2)
    return float(np.clip(1.0 - _js_divergence(p, q), 0.0, 1.0))


def pair_similarities(histograms, idx_a, idx_b) -> np.ndarray:
    """Vectorized 1 - JS for index pairs into a histogram matrix."""
    h = np.asarray(histograms)
    return np.clip(1.0 - _js_divergence(h[idx_a], h[idx_b]), 0.0, 1.0)


@dataclass(frozen=True)
class SimilarityStats:
    """Within-cluster pairwise similarities and their summaries.

    pairs maps cluster -> (idx_a, idx_b, similarities); grand_mean pools
    every within-cluster pair.  A clustering with no multi-member cluster
    has n_pairs == 0 and NaN means.
    """

    pairs: dict
    per_cluster_means: dict
    grand_mean: float
    n_pairs: int

    def all_values(self) -> np.ndarray:
        if not self.pairs:
            return np.empty(0)
        return np.concatenate([v for (_, _, v) in self.pairs.values()])


def within_cluster_similarity(histograms, labels) -> SimilarityStats:
    """Similarity of all unordered image pairs within each cluster."""
    h = np.asarray(histograms)
    labels = np.asarray(labels)
    if len(h) != len(labels):
        raise DataError(f"{len(h)} histograms vs {len(labels)} labels")
    pairs = {}
    means = {}
    total = 0.0
    count = 0
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if len(members) < 2:
            continue
        ia, ib = np.triu_indices(len(members), k=1)
        sims = pair_similarities(h, members[ia], members[ib])
        pairs[int(c)] = (members[ia], members[ib], sims)
        means[int(c)] = float(sims.mean())
        total += sims.sum()
        count += len(sims)
    grand = total / count if count else float("nan")
    return SimilarityStats(pairs=pairs, per_cluster_means=means,
                           grand_mean=grand, n_pairs=count)


@dataclass(frozen=True)
class NullStats:
    mean: float
    lo95: float
    hi95: float
    realization_means: np.ndarray


def _null_stats(values) -> NullStats:
    values = np.asarray(values, dtype=np.float64)
    lo, hi = np.percentile(values, [2.5, 97.5])
    return NullStats(mean=float(values.mean()), lo95=float(lo), hi95=float(hi),
                     realization_means=values)


def null_distribution(histograms, labels, realizations: int = 100, seed: int = 0) -> NullStats:
    """Grand-mean similarity under size-preserving random relabelings."""
    rng = np.random.default_rng(seed)
    means = [within_cluster_similarity(histograms, random_relabel(labels, rng)).grand_mean
             for _ in range(realizations)]
    return _null_stats(means)


def mean_color(img) -> np.ndarray:
    """Average JzAzBz coordinate of an image's central region."""
    central = img.central()
    if central.size == 0:
        raise DegenerateInputError(f"{img.id}: empty central mask")
    return colorspace.image_to_jzazbz(central).reshape(-1, 3).mean(axis=0)


def mean_colors(records) -> np.ndarray:
    return np.array([mean_color(r) for r in records])


def _affine_basis(points, tol):
    """Centroid, orthonormal basis of the affine hull, and numeric rank."""
    center = points.mean(axis=0)
    centered = points - center
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = s[0] if len(s) and s[0] > 0 else 0.0
    rank = int(np.sum(s > max(tol, 1e-12 * max(scale, 1.0))))
    return center, vt[:rank], rank


def _hull_tester(points, tol=HULL_TOL):
    """Boundary-inclusive containment test for the convex hull of points.

    Degenerate clusters (fewer than d+1 affinely independent points) fall
    back to the convex polytope inside their affine hull: a query must lie
    within tol of the affine subspace and inside the projected hull.
    """
    points = np.asarray(points, dtype=np.float64)
    center, basis, rank = _affine_basis(points, tol)

    if rank == 0:
        def tester(q):
            return np.linalg.norm(q - center, axis=-1) <= tol
        return tester

    proj = (points - center) @ basis.T

    if rank == 1:
        lo, hi = proj.min() - tol, proj.max() + tol

        def tester(q):
            rel = q - center
            t = rel @ basis.T
            resid = np.linalg.norm(rel - t @ basis, axis=-1)
            inside = (t[..., 0] >= lo) & (t[..., 0] <= hi)
            return inside & (resid <= tol)
        return tester

    try:
        hull = ConvexHull(proj)
    except QhullError:
        # numerically flat in the projected space; drop a dimension
        return _hull_tester_projected(points, center, basis[:rank - 1], tol)
    eqs = hull.equations

    def tester(q):
        rel = np.atleast_2d(q) - center
        t = rel @ basis.T
        resid = np.linalg.norm(rel - t @ basis, axis=-1)
        inside = np.all(t @ eqs[:, :-1].T + eqs[:, -1] <= tol, axis=-1)
        out = inside & (resid <= tol)
        return out if np.ndim(q) > 1 else out[0]
    return tester


def _hull_tester_projected(points, center, basis, tol):
    if len(basis) == 0:
        def tester(q):
            return np.linalg.norm(np.atleast_2d(q) - center, axis=-1) <= tol
        return tester
    sub = (points - center) @ basis.T
    inner = _hull_tester_nd(sub, tol)

    def tester(q):
        rel = np.atleast_2d(q) - center
        t = rel @ basis.T
        resid = np.linalg.norm(rel - t @ basis, axis=-1)
        return inner(t) & (resid <= tol)
    return tester


def _hull_tester_nd(points, tol):
    """Containment in a full-rank low-dimensional point cloud."""
    if points.shape[1] == 1:
        lo, hi = points.min() - tol, points.max() + tol
        return lambda q: (q[..., 0] >= lo) & (q[..., 0] <= hi)
    hull = ConvexHull(points)
    eqs = hull.equations
    return lambda q: np.all(q @ eqs[:, :-1].T + eqs[:, -1] <= tol, axis=-1)


@dataclass(frozen=True)
class HullSummary:
    """Per-cluster hull membership counts and the coherence fraction."""

    fraction: float
    containment_counts: np.ndarray  # hulls containing each image
    cluster_sizes: dict

    @property
    def f(self) -> float:
        return self.fraction


def coherence_fraction(points, labels) -> HullSummary:
    """Fraction of images inside the convex hull of exactly one cluster.

    points are per-image mean colors (n, 3); hulls are boundary-inclusive
    with tolerance 1e-9, so every image is inside at least its own hull.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DataError(f"expected (n, 3) points, got {points.shape}")
    if len(points) != len(labels):
        raise DataError(f"{len(points)} points vs {len(labels)} labels")
    counts = np.zeros(len(points), dtype=int)
    sizes = {}
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        sizes[int(c)] = len(members)
        tester = _hull_tester(points[members])
        counts += tester(points)
    fraction = float(np.mean(counts == 1))
    return HullSummary(fraction=fraction, containment_counts=counts, cluster_sizes=sizes)


def coherence_null(points, labels, realizations: int = 100, seed: int = 0) -> NullStats:
    """Coherence fraction under size-preserving random relabelings."""
    rng = np.random.default_rng(seed)
    vals = [coherence_fraction(points, random_relabel(labels, rng)).fraction
            for _ in range(realizations)]
    return _null_stats(vals)


def write_similarity_csv(path, ids, stats: SimilarityStats) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_id_a", "pair_id_b", "cluster", "similarity"])
        for cluster, (ia, ib, sims) in sorted(stats.pairs.items()):
            for a, b, s in zip(ia, ib, sims):
                w.writerow([ids[a], ids[b], cluster, repr(float(s))])


def write_hull_report(path, summary: HullSummary, null: NullStats | None,
                      points=None, labels=None) -> None:
    """JSON report: per-cluster hull stats, f, and the null interval."""
    per_cluster = []
    for c, size in sorted(summary.cluster_sizes.items()):
        entry = {"cluster": c, "size": size}
        if points is not None and labels is not None:
            members = np.flatnonzero(np.asarray(labels) == c)
            entry["mean_color"] = np.asarray(points)[members].mean(axis=0).tolist()
        per_cluster.append(entry)
    doc = {
        "per_cluster": per_cluster,
        "f": summary.fraction,
        "null": None if null is None else
            {"mean": null.mean, "lo95": null.lo95, "hi95": null.hi95},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
