"""Synthetic multi-category dataset with injected, mask-annotated defects.

Six parametric surface families stand in for scan categories. Points are
sampled uniformly by area on each surface, warped by a smooth seeded
low-frequency radial field so instances of one category vary, and scaled
so the farthest point from the origin sits at radius 0.5 (unit
diameter). Defects are local bulges, sinks, or missing regions with
per-point ground-truth masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import DatasetManifest, ManifestSample, PointCloud, save_ply
from .exceptions import ConfigError, DataError

SHAPE_FAMILIES = ("sphere", "torus", "box", "cylinder", "cone", "capsule")
DEFECT_TYPES = ("bulge", "sink", "missing")

# Survivors within this multiple of the defect radius form the annotated
# boundary ring of a missing-region defect.
MISSING_RING_FACTOR = 1.5


# ---------------------------------------------------------------------------
# Uniform area sampling of the base surfaces
# ---------------------------------------------------------------------------

def _unit_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    s = np.sqrt(1.0 - z * z)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def _sample_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    return _unit_sphere(rng, n)


def _sample_torus(rng: np.random.Generator, n: int) -> np.ndarray:
    major, minor = 1.0, 0.4
    u = rng.uniform(0.0, 2.0 * np.pi, n)
    # The area element is proportional to (major + minor cos v): sample v by
    # rejection so the sampling stays uniform in area.
    v = np.empty(n)
    filled = 0
    while filled < n:
        cand = rng.uniform(0.0, 2.0 * np.pi, 2 * (n - filled))
        accept = rng.uniform(0.0, 1.0, cand.size) <= (
            (major + minor * np.cos(cand)) / (major + minor)
        )
        kept = cand[accept][: n - filled]
        v[filled : filled + kept.size] = kept
        filled += kept.size
    ring = major + minor * np.cos(v)
    return np.column_stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)])


def _sample_box(rng: np.random.Generator, n: int) -> np.ndarray:
    half = np.array([1.0, 0.7, 0.5])
    # Two faces per axis; the face perpendicular to axis i has area
    # proportional to the product of the other two extents.
    areas = np.array(
        [half[1] * half[2], half[0] * half[2], half[0] * half[1]], dtype=np.float64
    )
    probs = np.repeat(areas / areas.sum() / 2.0, 2)
    face = rng.choice(6, size=n, p=probs)
    pts = rng.uniform(-1.0, 1.0, (n, 3)) * half
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    pts[np.arange(n), axis] = sign * half[axis]
    return pts


def _disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    t = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def _sample_cylinder(rng: np.random.Generator, n: int) -> np.ndarray:
    radius, height = 0.7, 2.0
    side_area = 2.0 * np.pi * radius * height
    cap_area = np.pi * radius * radius
    total = side_area + 2.0 * cap_area
    part = rng.choice(3, size=n, p=[side_area / total, cap_area / total, cap_area / total])
    pts = np.empty((n, 3))
    side = part == 0
    t = rng.uniform(0.0, 2.0 * np.pi, int(side.sum()))
    pts[side] = np.column_stack(
        [
            radius * np.cos(t),
            radius * np.sin(t),
            rng.uniform(-height / 2.0, height / 2.0, t.size),
        ]
    )
    for which, z in ((part == 1, height / 2.0), (part == 2, -height / 2.0)):
        m = int(which.sum())
        xy = _disc(rng, m, radius)
        pts[which] = np.column_stack([xy[:, 0], xy[:, 1], np.full(m, z)])
    return pts


def _sample_cone(rng: np.random.Generator, n: int) -> np.ndarray:
    radius, height = 1.0, 2.0
    slant_area = np.pi * radius * np.hypot(radius, height)
    base_area = np.pi * radius * radius
    total = slant_area + base_area
    on_slant = rng.uniform(0.0, 1.0, n) < slant_area / total
    pts = np.empty((n, 3))
    m = int(on_slant.sum())
    # t runs from apex (0) to rim (1); area grows linearly with t, so t is
    # the square root of a uniform draw.
    t = np.sqrt(rng.uniform(0.0, 1.0, m))
    theta = rng.uniform(0.0, 2.0 * np.pi, m)
    pts[on_slant] = np.column_stack(
        [
            radius * t * np.cos(theta),
            radius * t * np.sin(theta),
            height / 2.0 - height * t,
        ]
    )
    m = n - m
    xy = _disc(rng, m, radius)
    pts[~on_slant] = np.column_stack([xy[:, 0], xy[:, 1], np.full(m, -height / 2.0)])
    return pts


def _sample_capsule(rng: np.random.Generator, n: int) -> np.ndarray:
    radius, length = 0.6, 1.2
    side_area = 2.0 * np.pi * radius * length
    cap_area = 4.0 * np.pi * radius * radius  # both hemispheres
    on_side = rng.uniform(0.0, 1.0, n) < side_area / (side_area + cap_area)
    pts = np.empty((n, 3))
    m = int(on_side.sum())
    t = rng.uniform(0.0, 2.0 * np.pi, m)
    pts[on_side] = np.column_stack(
        [
            radius * np.cos(t),
            radius * np.sin(t),
            rng.uniform(-length / 2.0, length / 2.0, m),
        ]
    )
    caps = radius * _unit_sphere(rng, n - m)
    caps[:, 2] += np.where(caps[:, 2] >= 0.0, length / 2.0, -length / 2.0)
    pts[~on_side] = caps
    return pts


_SAMPLERS = {
    "sphere": _sample_sphere,
    "torus": _sample_torus,
    "box": _sample_box,
    "cylinder": _sample_cylinder,
    "cone": _sample_cone,
    "capsule": _sample_capsule,
}


# ---------------------------------------------------------------------------
# Deformation and generation
# ---------------------------------------------------------------------------

def _radial_field(points: np.ndarray, rng: np.random.Generator, waves: int = 6) -> np.ndarray:
    """Smooth low-frequency scalar field in [-1, 1], one value per point."""
    dirs = _unit_sphere(rng, waves)
    freq = rng.uniform(0.5, 1.5, waves)
    phase = rng.uniform(0.0, 2.0 * np.pi, waves)
    amp = rng.uniform(0.5, 1.0, waves)
    arg = points @ (dirs.T * freq) * (2.0 * np.pi) + phase
    return np.cos(arg) @ amp / amp.sum()


def generate_category(
    shape_family: str,
    n_points: int,
    deform_seed: int,
    deform_amplitude: float = 0.08,
    category: int | None = None,
) -> PointCloud:
    """One normal instance of a category.

    The deformation scales each point radially from the origin by
    1 + amplitude * field(p), so amplitude 0 leaves the parametric
    surface untouched; afterwards the cloud is scaled to put its
    farthest point at radius 0.5.
    """
    if shape_family not in _SAMPLERS:
        raise ConfigError(
            f"unknown shape family {shape_family!r}; choose from {SHAPE_FAMILIES}"
        )
    if n_points < 4:
        raise ConfigError(f"n_points={n_points} too small")
    if not 0.0 <= deform_amplitude < 1.0:
        raise ConfigError(f"deform_amplitude must be in [0, 1), got {deform_amplitude}")
    rng = np.random.default_rng(deform_seed)
    pts = _SAMPLERS[shape_family](rng, n_points)
    if deform_amplitude > 0.0:
        pts = pts * (1.0 + deform_amplitude * _radial_field(pts, rng))[:, None]
    pts = pts * (0.5 / np.linalg.norm(pts, axis=1).max())
    return PointCloud(pts, object_label=0, category=category)


# ---------------------------------------------------------------------------
# Defect injection
# ---------------------------------------------------------------------------

def _local_normals(points: np.ndarray, idx: np.ndarray, radius: float) -> np.ndarray:
    """Outward PCA normals for the selected points.

    Each normal is the smallest-eigenvalue eigenvector of the covariance of
    the neighbors within ``radius`` (at least 3, topping up with nearest
    points when the ball is too sparse), its sign flipped to point away
    from the centroid. Degenerate patches fall back to the radial
    direction itself.
    """
    centroid = points.mean(axis=0)
    normals = np.empty((idx.size, 3))
    r_sq = radius * radius
    for row, j in enumerate(idx):
        diff = points - points[j]
        sq = (diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]) + diff[:, 2] * diff[:, 2]
        member = np.flatnonzero(sq <= r_sq)
        if member.size < 3:
            member = np.argsort(sq, kind="stable")[:3]
        neigh = points[member]
        centered = neigh - neigh.mean(axis=0)
        _, vecs = np.linalg.eigh(centered.T @ centered / member.size)
        n = vecs[:, 0]
        outward = points[j] - centroid
        d = float(n @ outward)
        if d < 0:
            n = -n
        elif d == 0:
            norm = np.linalg.norm(outward)
            n = outward / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
        normals[row] = n
    return normals


def inject_defect(
    cloud: PointCloud,
    defect_type: str,
    magnitude: float,
    radius: float,
    rng: np.random.Generator,
) -> tuple[PointCloud, np.ndarray]:
    """Inject one localized defect, returning the new cloud and its mask.

    bulge/sink displace every point within a euclidean ball of the chosen
    surface point along its outward normal by magnitude * w(d), with the
    cosine falloff w(d) = 0.5 (1 + cos(pi d / radius)); missing removes
    the ball and marks the ring of survivors just outside it. A location
    whose defect region comes out empty is redrawn, up to 8 attempts.
    """
    if defect_type not in DEFECT_TYPES:
        raise ConfigError(
            f"unknown defect type {defect_type!r}; choose from {DEFECT_TYPES}"
        )
    pts = cloud.points
    n = pts.shape[0]
    diameter = 2.0 * np.linalg.norm(pts - pts.mean(axis=0), axis=1).max()
    if radius <= 0 or radius >= diameter:
        raise ConfigError(
            f"defect radius {radius} must be in (0, object diameter {diameter:.3g})"
        )
    if magnitude == 0.0:
        return cloud, np.zeros(n, dtype=bool)
    for _ in range(8):
        center = pts[int(rng.integers(n))]
        diff = pts - center
        dist = np.sqrt(
            (diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]) + diff[:, 2] * diff[:, 2]
        )
        inside = dist < radius
        if defect_type == "missing":
            survivors = ~inside
            ring = survivors & (dist < MISSING_RING_FACTOR * radius)
            if not ring.any() or not survivors.any():
                continue
            new_pts = pts[survivors]
            mask = ring[survivors]
            return (
                PointCloud(new_pts, mask=mask, object_label=1, category=cloud.category),
                mask,
            )
        idx = np.flatnonzero(inside)
        if idx.size == 0:
            continue
        w = 0.5 * (1.0 + np.cos(np.pi * dist[idx] / radius))
        sign = 1.0 if defect_type == "bulge" else -1.0
        normals = _local_normals(pts, idx, radius)
        new_pts = pts.copy()
        new_pts[idx] += sign * magnitude * w[:, None] * normals
        mask = inside.copy()
        return (
            PointCloud(new_pts, mask=mask, object_label=1, category=cloud.category),
            mask,
        )
    raise DataError(
        f"could not place a {defect_type} defect with radius {radius} in 8 attempts"
    )


# ---------------------------------------------------------------------------
# Dataset builder
# ---------------------------------------------------------------------------

@dataclass
class DatasetConfig:
    """Knobs for :func:`build_dataset`.

    Defaults mirror a small unified regime: 4 normal training samples per
    category, a balanced test split, defect magnitude 5% and radius 10%
    of the unit object diameter.
    """

    out_dir: str = "data"
    categories: list[str] = field(default_factory=lambda: ["sphere", "torus", "box"])
    n_points: int = 1024
    train_per_category: int = 4
    test_per_category: int = 8
    defect_magnitude: float = 0.05
    defect_radius: float = 0.10
    deform_amplitude: float = 0.08
    seed: int = 0


def build_dataset(config: DatasetConfig) -> DatasetManifest:
    """Generate, write, and describe the full dataset.

    Layout: <out_dir>/<category>/{train,test}_<idx>.ply plus
    <out_dir>/manifest.json. Anomalous test samples cycle through the
    three defect types. Everything derives deterministically from
    ``config.seed``.
    """
    if len(config.categories) < 2:
        raise ConfigError("the unified setting needs at least 2 categories")
    for name in config.categories:
        if name not in _SAMPLERS:
            raise ConfigError(f"unknown shape family {name!r}")
    if len(set(config.categories)) != len(config.categories):
        raise ConfigError("duplicate category names")
    root = Path(config.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    categories = [
        {"id": cid, "name": name} for cid, name in enumerate(config.categories, start=1)
    ]
    samples: list[ManifestSample] = []
    for cid, name in enumerate(config.categories, start=1):
        cat_dir = root / name
        cat_dir.mkdir(exist_ok=True)
        base = config.seed * 1_000_003 + cid * 10_007
        for i in range(config.train_per_category):
            cloud = generate_category(
                name, config.n_points, base + i, config.deform_amplitude, category=cid
            )
            rel = f"{name}/train_{i:03d}.ply"
            save_ply(root / rel, cloud)
            samples.append(ManifestSample(rel, cid, "train", 0))
        n_anom = config.test_per_category // 2
        n_norm = config.test_per_category - n_anom
        for i in range(config.test_per_category):
            sample_seed = base + 1000 + i
            cloud = generate_category(
                name, config.n_points, sample_seed, config.deform_amplitude, category=cid
            )
            if i < n_norm:
                label, defect = 0, "none"
            else:
                defect = DEFECT_TYPES[(i - n_norm) % len(DEFECT_TYPES)]
                cloud, _ = inject_defect(
                    cloud,
                    defect,
                    config.defect_magnitude,
                    config.defect_radius,
                    np.random.default_rng(sample_seed + 500_000),
                )
                label = 1
            rel = f"{name}/test_{i:03d}.ply"
            save_ply(root / rel, cloud)
            samples.append(ManifestSample(rel, cid, "test", label, defect))
    manifest = DatasetManifest(
        categories=categories, samples=samples, seed=config.seed, root=root
    )
    manifest.save(root / "manifest.json")
    return manifest
