"""Farthest point sampling and multi-resolution kNN grouping.

All index decisions (FPS greedy picks, kNN ordering) are made on squared
Euclidean distances computed as ``((dx*dx + dy*dy) + dz*dz)`` in float64,
with ties broken by lowest point index. The native kernel backend
reproduces this arithmetic exactly, so reference and accelerated paths
agree bitwise on indices.
"""

from __future__ import annotations

import numpy as np

from .cloud import GroupSet, PointCloud


def squared_distances(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    """(Q, N) squared distances via explicit difference, not the dot-product
    expansion; the rounding behaviour is part of the kernel contract."""
    diff = queries[:, None, :] - points[None, :, :]
    return (diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]) + diff[
        ..., 2
    ] * diff[..., 2]


def fps(cloud: PointCloud | np.ndarray, g: int, start: int = 0) -> np.ndarray:
    """Greedy maximin farthest point sampling.

    Args:
        cloud: input cloud (N points), or a raw (N, 3) float64 array.
        g: number of centers to select, 1 <= g <= N.
        start: index of the first selected point (deterministic start rule).

    Returns:
        (g,) int64 indices in selection order. Each pick maximizes the
        minimum distance to the already-selected set; distance ties go to
        the lowest index (numpy argmax picks the first maximum).
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    n = pts.shape[0]
    if not 1 <= g <= n:
        raise ValueError(f"g={g} must be in [1, {n}]")
    if not 0 <= start < n:
        raise ValueError(f"start={start} out of range [0, {n})")
    selected = np.empty(g, dtype=np.int64)
    selected[0] = start
    diff = pts - pts[start]
    min_sq = (diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]) + diff[:, 2] * diff[:, 2]
    for i in range(1, g):
        nxt = int(np.argmax(min_sq))
        selected[i] = nxt
        diff = pts - pts[nxt]
        sq = (diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]) + diff[:, 2] * diff[:, 2]
        np.minimum(min_sq, sq, out=min_sq)
    return selected


def knn_indices(points: np.ndarray, center_indices: np.ndarray, r: int) -> np.ndarray:
    """(g, r) indices of the r nearest points to each center, self included.

    Rows are sorted by ascending distance; exact distance ties are resolved
    by lowest point index (stable argsort).
    """
    n = points.shape[0]
    if not 1 <= r <= n:
        raise ValueError(f"r={r} must be in [1, {n}]")
    centers = points[center_indices]
    out = np.empty((centers.shape[0], r), dtype=np.int64)
    # Chunk over centers to bound the distance-matrix footprint on big clouds.
    chunk = max(1, int(2**24 // max(n, 1)))
    for lo in range(0, centers.shape[0], chunk):
        sq = squared_distances(centers[lo : lo + chunk], points)
        order = np.argsort(sq, axis=1, kind="stable")
        out[lo : lo + chunk] = order[:, :r]
    return out


def estimate_adaptive_radius(
    points: np.ndarray, base_neighborhood: np.ndarray
) -> tuple[float, bool]:
    """Mean distance from each center to its k-th nearest neighbor.

    ``base_neighborhood`` is the (g, k) index matrix at the base resolution;
    its last column is each center's k-th neighbor. Returns the radius and a
    degenerate flag that is set when the radius is 0 (all points within every
    base neighborhood coincident with their center).
    """
    centers = points[base_neighborhood[:, 0]]
    kth = points[base_neighborhood[:, -1]]
    radius = float(np.linalg.norm(kth - centers, axis=1).mean())
    return radius, radius == 0.0


def build_groups(cloud: PointCloud, g: int, k: int, backend=None) -> GroupSet:
    """FPS centers plus kNN neighborhoods at resolutions {k/2, k, 2k}.

    Args:
        cloud: input cloud; requires 2k <= N (small clouds are rejected, not
            padded, since padding would corrupt downstream covariance
            statistics).
        g: number of FPS centers.
        k: base (even) neighborhood size.
        backend: optional accelerated kernel backend; defaults to the pure
            numpy reference implementation.

    Returns:
        A GroupSet whose neighborhood rows at every resolution start with the
        center itself (distance 0) and whose adaptive_radius is the mean
        center-to-k-th-neighbor distance at the base resolution.
    """
    n = cloud.n_points
    if k < 2 or k % 2 != 0:
        raise ValueError(f"k={k} must be even and >= 2")
    if 2 * k > n:
        raise ValueError(f"cloud has {n} points; need at least 2k={2 * k}")
    if g > n:
        raise ValueError(f"g={g} exceeds point count {n}")
    if backend is None:
        from . import kernels

        backend = kernels.reference_backend()
    center_idx = backend.fps(cloud.points, g, 0)
    neighborhoods = {
        r: backend.knn(cloud.points, center_idx, r) for r in (k // 2, k, 2 * k)
    }
    radius, degenerate = estimate_adaptive_radius(cloud.points, neighborhoods[k])
    return GroupSet(
        center_indices=center_idx,
        centers=cloud.points[center_idx].copy(),
        neighborhoods=neighborhoods,
        adaptive_radius=radius,
        degenerate=degenerate,
    )
