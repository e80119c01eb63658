"""Embedding-space comparisons and the statistics used to report them.

Cosine similarity between embeddings, rank/minmax normalization, Spearman
rank correlation, normal-approximation proportion tests, Welch's t-test,
PCA extremes of embedding coefficients, and the luminance-vs-similarity
relation for image pairs.

Tie handling is everywhere average ranks; proportion tests use the normal
approximation without continuity correction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats as _sps

from .errors import DataError


def cosine_similarity(e1, e2) -> float:
    """Cosine of the angle between two embedding vectors, in [-1, 1]."""
    v1 = e1.vector if hasattr(e1, "vector") else np.asarray(e1, dtype=np.float64)
    v2 = e2.vector if hasattr(e2, "vector") else np.asarray(e2, dtype=np.float64)
    if v1.shape != v2.shape:
        raise DataError(f"dimension mismatch: {v1.shape} vs {v2.shape}")
    n1 = np.linalg.norm(v1)
    n2 = np.linalg.norm(v2)
    if n1 == 0.0 or n2 == 0.0:
        raise DataError("cosine similarity undefined for zero vectors")
    return float(np.clip(np.dot(v1, v2) / (n1 * n2), -1.0, 1.0))


def cosine_similarity_pairs(matrix, idx_a, idx_b) -> np.ndarray:
    """Vectorized cosine similarity for index pairs into a row matrix."""
    m = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0):
        raise DataError("cosine similarity undefined for zero vectors")
    dots = np.einsum("ij,ij->i", m[idx_a], m[idx_b])
    return np.clip(dots / (norms[idx_a] * norms[idx_b]), -1.0, 1.0)


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties assigned their average rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    sv = v[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def rank_minmax(values) -> np.ndarray:
    """Average-tie ranks scaled to [0, 1]; all-equal input maps to 0.5."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 2:
        raise DataError("need at least 2 values to rank")
    r = average_ranks(v)
    lo, hi = r.min(), r.max()
    if hi == lo:
        return np.full(len(v), 0.5)
    return (r - lo) / (hi - lo)


def spearman(x, y) -> tuple[float, float]:
    """Spearman rank correlation and two-tailed p via the t approximation.

    Returns (nan, nan) when either input is constant (rho undefined).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"need two equal-length vectors, got {x.shape} and {y.shape}")
    n = len(x)
    if n < 3:
        raise DataError(f"need at least 3 observations, got {n}")
    rx = average_ranks(x)
    ry = average_ranks(y)
    sx = rx.std()
    sy = ry.std()
    if sx == 0.0 or sy == 0.0:
        return float("nan"), float("nan")
    rho = float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * _sps.t.sf(abs(t), df=n - 2)
    return rho, float(min(p, 1.0))


def proportion_test(successes: int, n: int, p0: float) -> float:
    """Two-tailed one-sample z-test for a proportion (no continuity corr.)."""
    if n < 1 or not 0 <= successes <= n or not 0.0 < p0 < 1.0:
        raise DataError(f"bad proportion-test inputs: {successes}/{n} vs {p0}")
    se = np.sqrt(p0 * (1.0 - p0) / n)
    z = (successes / n - p0) / se
    return float(2.0 * _sps.norm.sf(abs(z)))


def two_sample_proportion_test(s1: int, n1: int, s2: int, n2: int) -> float:
    """Two-tailed pooled z-test for the difference of two proportions."""
    if min(n1, n2) < 1 or not 0 <= s1 <= n1 or not 0 <= s2 <= n2:
        raise DataError("bad two-sample proportion-test inputs")
    pooled = (s1 + s2) / (n1 + n2)
    var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
    if var == 0.0:
        return float("nan")
    z = (s1 / n1 - s2 / n2) / np.sqrt(var)
    return float(2.0 * _sps.norm.sf(abs(z)))


def t_test_two_tailed(sample_a, sample_b) -> float:
    """Welch's two-tailed t-test for a difference of means.

    Returns NaN (the degenerate flag) when both samples have zero variance.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise DataError("need at least 2 observations per sample")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        return float("nan")
    sa = va / len(a)
    sb = vb / len(b)
    t = (a.mean() - b.mean()) / np.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (len(a) - 1) + sb**2 / (len(b) - 1))
    return float(2.0 * _sps.t.sf(abs(t), df=df))


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray        # (n_components, d), rows unit norm
    explained_variance: np.ndarray
    projections: np.ndarray       # (n, n_components), mean-centered data
    min_ids: list                 # per component, m ids with smallest projection
    max_ids: list


def pca_extremes(embeddings, n_components: int, m: int = 5) -> PcaResult:
    """PCA of embedding coefficients and the images at component extremes.

    Mean-centered eigendecomposition of the covariance matrix; component
    signs follow the convention that the largest-magnitude loading is
    positive.  If the covariance has rank below n_components, only the
    informative components are returned.
    """
    ids = [e.image_id for e in embeddings]
    x = np.array([e.vector for e in embeddings], dtype=np.float64)
    if len(x) < n_components + 1:
        raise DataError(f"need more than {n_components} samples, got {len(x)}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (len(x) - 1)
    eigval, eigvec = np.linalg.eigh(cov)
    order = np.argsort(eigval)[::-1]
    eigval = np.maximum(eigval[order], 0.0)
    eigvec = eigvec[:, order]
    total = eigval.sum()
    rank = int(np.sum(eigval > 1e-12 * max(total, 1e-300)))
    k = min(n_components, rank)
    comps = eigvec[:, :k].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    proj = centered @ comps.T
    min_ids, max_ids = [], []
    for c in range(k):
        order_c = np.argsort(proj[:, c], kind="stable")
        min_ids.append([ids[i] for i in order_c[:m]])
        max_ids.append([ids[i] for i in order_c[::-1][:m]])
    return PcaResult(components=comps, explained_variance=eigval[:k],
                     projections=proj, min_ids=min_ids, max_ids=max_ids)


@dataclass(frozen=True)
class PairSample:
    """One sampled image pair with its similarity measurements."""

    id_a: str
    id_b: str
    embedding_similarity: float
    color_similarity: float
    mean_jz: float


def sample_pair_indices(n: int, n_pairs: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """n_pairs random unordered pairs of distinct indices in [0, n)."""
    if n < 2:
        raise DataError("need at least 2 items to pair")
    rng = np.random.default_rng(seed)
    ia = rng.integers(0, n, size=n_pairs)
    ib = rng.integers(0, n - 1, size=n_pairs)
    ib = np.where(ib >= ia, ib + 1, ib)
    return ia, ib


def build_pair_samples(ids, emb_matrix, histograms, mean_jz, idx_a, idx_b) -> list[PairSample]:
    """Assemble PairSample records for given index pairs."""
    from .colormetrics import pair_similarities
    cos = cosine_similarity_pairs(emb_matrix, idx_a, idx_b)
    col = pair_similarities(histograms, idx_a, idx_b)
    jz = np.asarray(mean_jz, dtype=np.float64)
    pair_jz = 0.5 * (jz[idx_a] + jz[idx_b])
    return [PairSample(ids[a], ids[b], float(c), float(s), float(j))
            for a, b, c, s, j in zip(idx_a, idx_b, cos, col, pair_jz)]


@dataclass(frozen=True)
class LuminanceRelation:
    mean_jz_minmax: np.ndarray
    embedding_similarity: np.ndarray
    # share of below-median-luminance pairs whose similarity is below average
    asymmetry: float


def luminance_relation(pairs: list[PairSample]) -> LuminanceRelation:
    """Minmax-normalized pair luminance against embedding similarity."""
    if not pairs:
        raise DataError("no pairs")
    jz = np.array([p.mean_jz for p in pairs])
    sim = np.array([p.embedding_similarity for p in pairs])
    if len(pairs) == 1:
        norm = np.array([0.5])
    else:
        lo, hi = jz.min(), jz.max()
        norm = np.full(len(jz), 0.5) if hi == lo else (jz - lo) / (hi - lo)
    below_lum = norm < np.median(norm)
    if below_lum.any():
        asym = float(np.mean(sim[below_lum] < sim.mean()))
    else:
        asym = float("nan")
    return LuminanceRelation(mean_jz_minmax=norm, embedding_similarity=sim,
                             asymmetry=asym)


def write_pairs_csv(path, pairs: list[PairSample], ranked: bool = True) -> None:
    """Pair-sample export; optionally rank+minmax the similarity columns."""
    emb = np.array([p.embedding_similarity for p in pairs])
    col = np.array([p.color_similarity for p in pairs])
    if ranked and len(pairs) >= 2:
        emb_n, col_n = rank_minmax(emb), rank_minmax(col)
    else:
        emb_n, col_n = emb, col
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id_a", "id_b", "embedding_similarity", "color_similarity",
                    "embedding_similarity_norm", "color_similarity_norm", "mean_jz"])
        for p, en, cn in zip(pairs, emb_n, col_n):
            w.writerow([p.id_a, p.id_b, repr(p.embedding_similarity),
                        repr(p.color_similarity), repr(float(en)), repr(float(cn)),
                        repr(p.mean_jz)])


def write_luminance_csv(path, rel: LuminanceRelation) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mean_jz_minmax", "embedding_similarity"])
        for a, b in zip(rel.mean_jz_minmax, rel.embedding_similarity):
            w.writerow([repr(float(a)), repr(float(b))])
