"""Clustering primitives: cosine distance, DBSCAN, and refined spectral
clustering with eigengap speaker-count estimation.

DBSCAN here is fully deterministic and order-invariant: border points are
attached to the cluster of their nearest core point (ties to the lowest
point index) and cluster ids follow first member appearance. The spectral
path refines a cosine affinity matrix (row-wise soft thresholding,
max-symmetrization, diffusion, row-max normalization), estimates the
speaker count from the eigengap, and runs seeded k-means in the leading
eigenvector space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

NOISE = -1

# Soft thresholding keeps a trace of pruned affinities instead of a hard
# zero, which would risk disconnecting the similarity graph.
SOFT_MULTIPLIER = 1e-3


@dataclass(frozen=True)
class SpectralParams:
    """Knobs for the refined spectral clustering used by the audio baseline."""

    row_threshold_percentile: float = 0.5
    max_speakers: int = 10
    kmeans_restarts: int = 8
    kmeans_iters: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.row_threshold_percentile < 1.0:
            raise ValueError("row_threshold_percentile must lie in (0,1)")
        if self.max_speakers < 2:
            raise ValueError("max_speakers must be >= 2")
        if self.kmeans_restarts < 1 or self.kmeans_iters < 1:
            raise ValueError("kmeans_restarts and kmeans_iters must be positive")


class ClusterLabels:
    """Cluster assignment for a list of ids; label -1 marks noise.

    Cluster labels form the contiguous range 0..C-1, assigned in order of
    first member appearance.
    """

    def __init__(self, ids: list[str], labels):
        labels = [int(v) for v in labels]
        if len(ids) != len(labels):
            raise ValueError("ids and labels length mismatch")
        used = sorted({v for v in labels if v != NOISE})
        if used != list(range(len(used))):
            raise ValueError(f"labels not contiguous from 0: {used}")
        self.ids = list(ids)
        self.labels = labels
        self._by_id = dict(zip(self.ids, self.labels))

    @property
    def num_clusters(self) -> int:
        return len({v for v in self.labels if v != NOISE})

    def label_of(self, id_: str) -> int:
        return self._by_id[id_]

    def members(self, cluster: int) -> list[str]:
        return [i for i, v in zip(self.ids, self.labels) if v == cluster]

    def noise_ids(self) -> list[str]:
        return [i for i, v in zip(self.ids, self.labels) if v == NOISE]

    def as_dict(self) -> dict[str, int]:
        return dict(self._by_id)


class DistanceMatrix:
    """Symmetric pairwise distance matrix with a zero diagonal."""

    def __init__(self, ids: list[str], values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        n = len(ids)
        if values.shape != (n, n):
            raise ValueError(f"expected {n}x{n} matrix, got {values.shape}")
        if not np.allclose(values, values.T, atol=1e-10):
            raise ValueError("distance matrix not symmetric")
        if not np.allclose(np.diag(values), 0.0, atol=1e-10):
            raise ValueError("distance matrix diagonal not zero")
        self.ids = list(ids)
        self.values = values

    def __len__(self) -> int:
        return len(self.ids)

    def to_csv(self) -> str:
        """CSV with an id header row and id-leading rows."""
        lines = ["," + ",".join(self.ids)]
        for id_, row in zip(self.ids, self.values):
            lines.append(",".join([id_] + [repr(float(v)) for v in row]))
        return "".join(line + "\n" for line in lines)


def unit_rows(matrix: np.ndarray) -> np.ndarray:
    """Rows scaled to unit Euclidean norm; rejects zero rows."""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero vector has no direction")
    return matrix / norms[:, None]


def cosine_distance(u, v) -> float:
    """1 - cos(u, v), in [0, 2].

    Raises on zero vectors: cosine distance is undefined for them.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine distance undefined for zero vector")
    d = 1.0 - float(np.dot(u, v) / (nu * nv))
    return min(2.0, max(0.0, d))


def cosine_similarity_matrix(matrix: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity of the rows, exactly symmetric, unit diagonal.

    Similarities within 1e-12 of +/-1 are snapped exactly, so identical
    (or antipodal) rows score 1 (or -1) despite rounding in the dot
    products.
    """
    normed = unit_rows(matrix)
    sim = normed @ normed.T
    sim = 0.5 * (sim + sim.T)
    np.clip(sim, -1.0, 1.0, out=sim)
    sim[1.0 - sim < 1e-12] = 1.0
    sim[sim + 1.0 < 1e-12] = -1.0
    np.fill_diagonal(sim, 1.0)
    return sim


def cosine_distance_matrix(ids: list[str], matrix: np.ndarray) -> DistanceMatrix:
    """Pairwise cosine distances of the rows as a :class:`DistanceMatrix`."""
    dist = 1.0 - cosine_similarity_matrix(matrix)
    np.clip(dist, 0.0, 2.0, out=dist)
    np.fill_diagonal(dist, 0.0)
    return DistanceMatrix(ids, dist)


# ---------------------------------------------------------------------------
# DBSCAN
# ---------------------------------------------------------------------------

def dbscan(distances: DistanceMatrix, eps: float, min_pts: int) -> ClusterLabels:
    """Density-based clustering over a precomputed distance matrix.

    Arguments
    ---------
    distances : DistanceMatrix
        Pairwise distances.
    eps : float
        Neighborhood radius (inclusive).
    min_pts : int
        Minimum neighborhood size for a core point; a point counts as its
        own neighbor.

    Returns
    -------
    ClusterLabels
        Clusters are the connected components of core points under
        eps-adjacency plus border points; unreachable points are noise.
        Border points join the cluster of their nearest core neighbor
        (ties to the lowest core index), so the partition depends only on
        the distances, never on input order.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    d = distances.values
    n = len(distances)
    within = d <= eps
    core = within.sum(axis=1) >= min_pts

    labels = np.full(n, NOISE, dtype=int)
    cluster = 0
    for i in range(n):
        if not core[i] or labels[i] != NOISE:
            continue
        # Breadth-first expansion over core-to-core adjacency.
        labels[i] = cluster
        frontier = [i]
        while frontier:
            nxt = []
            for p in frontier:
                for q in np.flatnonzero(within[p]):
                    if core[q] and labels[q] == NOISE:
                        labels[q] = cluster
                        nxt.append(int(q))
            frontier = nxt
        cluster += 1

    for i in range(n):
        if core[i] or not np.any(core & within[i]):
            continue
        candidates = np.flatnonzero(core & within[i])
        nearest = candidates[np.lexsort((candidates, d[i, candidates]))[0]]
        labels[i] = labels[nearest]

    return ClusterLabels(distances.ids, _relabel_by_first_appearance(labels))


def _relabel_by_first_appearance(labels: np.ndarray) -> np.ndarray:
    remap: dict[int, int] = {}
    out = np.full(len(labels), NOISE, dtype=int)
    for i, v in enumerate(labels):
        if v == NOISE:
            continue
        if v not in remap:
            remap[v] = len(remap)
        out[i] = remap[v]
    return out


# ---------------------------------------------------------------------------
# Refined spectral clustering
# ---------------------------------------------------------------------------

def refined_affinity(matrix: np.ndarray, params: SpectralParams) -> np.ndarray:
    """Cosine affinity with the diarization refinement sequence applied.

    Steps, in order: cosine similarity; per-row soft thresholding (entries
    below the row's p-quantile are scaled by 1e-3); symmetrization by
    elementwise max; diffusion Y = A @ A.T; row-wise max normalization.
    Every row of the result has maximum exactly 1.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    a = cosine_similarity_matrix(matrix)
    for i in range(a.shape[0]):
        thresh = np.quantile(a[i], params.row_threshold_percentile)
        # Strictly below the quantile; the slack keeps entries equal to the
        # threshold up to rounding from being scaled.
        low = a[i] < thresh - 1e-12
        a[i, low] *= SOFT_MULTIPLIER
    a = np.maximum(a, a.T)
    y = a @ a.T
    y /= y.max(axis=1)[:, None]
    return y


def _sorted_eigh(affinity: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues/vectors of the symmetrized matrix, sorted descending."""
    sym = 0.5 * (affinity + affinity.T)
    try:
        vals, vecs = scipy.linalg.eigh(sym)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(f"eigendecomposition failed: {exc}") from None
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def estimate_num_speakers(affinity: np.ndarray, max_speakers: int = 10) -> int:
    """Speaker count from the largest relative eigengap.

    Eigenvalues are sorted descending and the gap after position k is
    scored as (l_k - l_{k+1}) / l_k; the best k in [1, min(max_speakers,
    n-1)] is returned. The relative gap makes the estimate exact on
    block-diagonal affinities regardless of block-size imbalance, where a
    raw difference would latch onto the dominant block.
    """
    affinity = np.asarray(affinity, dtype=np.float64)
    n = affinity.shape[0]
    if affinity.shape != (n, n):
        raise ValueError("affinity must be square")
    vals, _ = _sorted_eigh(affinity)
    kmax = min(max_speakers, n - 1)
    if kmax < 1 or vals[0] <= 0:
        return 1
    vals = np.maximum(vals, 0.0)
    # An eigenvalue this small against the spectrum top is residue of the
    # soft thresholding (multiplier 1e-3), not cluster mass; a gap cannot
    # start from it.
    floor = 1e-3 * vals[0]
    best_k, best_gap = 1, -np.inf
    for k in range(1, kmax + 1):
        lead = vals[k - 1]
        gap = (lead - vals[k]) / lead if lead > floor else 0.0
        if gap > best_gap:
            best_k, best_gap = k, gap
    return best_k


def spectral_cluster(affinity: np.ndarray, num_clusters: int,
                     params: SpectralParams) -> ClusterLabels:
    """K-means in the space of the leading eigenvectors.

    Rows of the n x C eigenvector matrix are length-normalized before
    clustering. K-means uses greedy farthest-point seeding under a fixed
    seed and keeps the best of ``kmeans_restarts`` runs by within-cluster
    sum of squares, so results are deterministic for a given seed.
    """
    affinity = np.asarray(affinity, dtype=np.float64)
    n = affinity.shape[0]
    ids = [str(i) for i in range(n)]
    return spectral_cluster_ids(ids, affinity, num_clusters, params)


def spectral_cluster_ids(ids: list[str], affinity: np.ndarray, num_clusters: int,
                         params: SpectralParams) -> ClusterLabels:
    """Same as :func:`spectral_cluster` but labels the given ids."""
    n = affinity.shape[0]
    if num_clusters > n:
        raise ValueError(f"cannot form {num_clusters} clusters from {n} points")
    if num_clusters < 1:
        raise ValueError("num_clusters must be >= 1")
    if num_clusters == 1:
        return ClusterLabels(ids, [0] * n)

    _, vecs = _sorted_eigh(affinity)
    emb = vecs[:, :num_clusters].copy()
    norms = np.linalg.norm(emb, axis=1)
    nz = norms > 0
    emb[nz] /= norms[nz, None]

    labels = _kmeans(emb, num_clusters, params)
    return ClusterLabels(ids, _relabel_by_first_appearance(labels))


def _farthest_point_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    first = int(rng.integers(n))
    chosen = [first]
    dist = np.linalg.norm(points - points[first], axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(dist))  # argmax takes the lowest index on ties
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return points[chosen].copy()


def _lloyd(points: np.ndarray, centers: np.ndarray, iters: int) -> tuple[np.ndarray, float]:
    for _ in range(iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for c in range(centers.shape[0]):
            mask = labels == c
            if np.any(mask):
                new_centers[c] = points[mask].mean(axis=0)
            else:
                # Re-seed an emptied cluster at the point farthest from its center.
                worst = int(np.argmax(d2[np.arange(len(points)), labels]))
                new_centers[c] = points[worst]
        if np.allclose(new_centers, centers):
            centers = new_centers
            break
        centers = new_centers
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(points)), labels].sum())
    return labels, inertia


def _kmeans(points: np.ndarray, k: int, params: SpectralParams) -> np.ndarray:
    best_labels, best_inertia = None, np.inf
    for restart in range(params.kmeans_restarts):
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=params.rng_seed, spawn_key=(restart,)))
        centers = _farthest_point_seeds(points, k, rng)
        labels, inertia = _lloyd(points, centers, params.kmeans_iters)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels
