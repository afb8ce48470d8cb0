"""PCA surface descriptors used to derive the decoder's attention bias.

For every point we gather its radius neighborhood, eigendecompose the
covariance of the centered neighbors and read off a surface normal (the
eigenvector of the smallest eigenvalue, sign-canonicalized) and a
curvature kappa = lambda0 / (lambda0 + lambda1 + lambda2) in [0, 1/3].
Per group center we then aggregate two irregularity measures over the
neighborhood: the mean unsigned angle between the center normal and its
neighbors' normals, and the mean absolute curvature difference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import GroupSet, PointCloud


@dataclass
class GeoDescriptors:
    """Per-group geometric descriptors.

    Attributes:
        normals: (g, 3) unit normals at the group centers.
        kappa: (g,) curvatures in [0, 1/3].
        v_norm: (g,) mean angular normal deviation, radians in [0, pi/2].
        v_curv: (g,) mean absolute curvature difference in [0, 1/3].
        fallback: (g,) bool, True where the radius neighborhood had fewer
            than 3 points and the 3 nearest points were used instead.
    """

    normals: np.ndarray
    kappa: np.ndarray
    v_norm: np.ndarray
    v_curv: np.ndarray
    fallback: np.ndarray


def canonicalize_normals(normals: np.ndarray) -> np.ndarray:
    """Resolve the eigenvector sign ambiguity deterministically.

    Flip each normal so its dot product with +z is positive; on an exact
    zero, fall through to +x, then +y. Pure sign convention; the unsigned
    angles used downstream are unaffected.
    """
    normals = normals.copy()
    undecided = np.ones(len(normals), dtype=bool)
    for axis in (2, 0, 1):
        comp = normals[:, axis]
        flip = undecided & (comp < 0)
        normals[flip] = -normals[flip]
        undecided = undecided & (comp == 0)
        if not undecided.any():
            break
    return normals


def point_normals_curvature(
    points: np.ndarray, radius: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normal and curvature at every point from its radius neighborhood.

    Neighborhoods are {p : ||p - p_j|| <= radius} (the point itself always
    qualifies). Neighborhoods with fewer than 3 members fall back to the 3
    nearest points and are flagged. A fully degenerate neighborhood (zero
    covariance) yields kappa 0 and the canonical +z normal.

    Returns:
        normals (N, 3), kappa (N,), fallback (N,) bool.
    """
    n = points.shape[0]
    covs = np.empty((n, 3, 3), dtype=np.float64)
    fallback = np.zeros(n, dtype=bool)
    r_sq = radius * radius
    chunk = max(1, int(2**23 // max(n, 1)))
    for lo in range(0, n, chunk):
        block = points[lo : lo + chunk]
        diff = block[:, None, :] - points[None, :, :]
        sq = (diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]) + diff[
            ..., 2
        ] * diff[..., 2]
        for bi in range(block.shape[0]):
            j = lo + bi
            member = np.flatnonzero(sq[bi] <= r_sq)
            if member.size < 3:
                member = np.argsort(sq[bi], kind="stable")[:3]
                fallback[j] = True
            neigh = points[member]
            centered = neigh - neigh.mean(axis=0)
            covs[j] = centered.T @ centered / member.size
    evals, evecs = np.linalg.eigh(covs)
    totals = evals.sum(axis=1)
    ok = totals > 0
    kappa = np.where(ok, evals[:, 0] / np.where(ok, totals, 1.0), 0.0)
    # eigh can return a marginally negative smallest eigenvalue for a PSD
    # matrix; clamp to the analytic range [0, 1/3]
    kappa = np.clip(kappa, 0.0, 1.0 / 3.0)
    normals = evecs[:, :, 0].copy()
    normals[~ok] = (0.0, 0.0, 1.0)
    return canonicalize_normals(normals), kappa, fallback


def unsigned_angle(n_ref: np.ndarray, n_others: np.ndarray) -> np.ndarray:
    """Angle between lines (not oriented vectors): arccos(|n_ref . n_j|)."""
    dots = np.abs(n_others @ n_ref)
    return np.arccos(np.clip(dots, -1.0, 1.0))


def compute_geo_descriptors(
    cloud: PointCloud, groups: GroupSet, backend=None
) -> GeoDescriptors:
    """Per-group descriptors feeding the scalar attention bias.

    Uses the group set's adaptive radius for every neighborhood. The
    irregularity terms average over all points of the center's radius
    neighborhood (center included, contributing zero), in the cloud's
    index order. ``backend`` optionally accelerates the per-point pass.
    """
    points = cloud.points
    radius = groups.adaptive_radius
    if backend is None:
        normals, kappa, fb = point_normals_curvature(points, radius)
    else:
        normals, kappa, fb = backend.point_descriptors(points, radius)
    g = groups.n_groups
    v_norm = np.empty(g, dtype=np.float64)
    v_curv = np.empty(g, dtype=np.float64)
    fallback = np.zeros(g, dtype=bool)
    r_sq = radius * radius
    for m, ci in enumerate(groups.center_indices):
        diff = points - points[ci]
        sq = (diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]) + diff[:, 2] * diff[:, 2]
        member = np.flatnonzero(sq <= r_sq)
        if member.size < 3:
            member = np.argsort(sq, kind="stable")[:3]
            fallback[m] = True
        fallback[m] |= bool(fb[ci])
        v_norm[m] = unsigned_angle(normals[ci], normals[member]).mean()
        v_curv[m] = np.abs(kappa[ci] - kappa[member]).mean()
    return GeoDescriptors(
        normals=normals[groups.center_indices].copy(),
        kappa=kappa[groups.center_indices].copy(),
        v_norm=v_norm,
        v_curv=v_curv,
        fallback=fallback,
    )
