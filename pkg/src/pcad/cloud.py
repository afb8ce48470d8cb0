"""Point-cloud containers and file formats.

A :class:`PointCloud` is the unit of ingestion and scoring: raw N x 3
coordinates plus an optional per-point anomaly mask, an optional
normal/anomalous object label and an optional category id.

Clouds are exchanged on disk as ASCII PLY (vertex properties ``x y z``,
optionally ``anomaly`` for ground-truth masks and ``score`` for exported
heatmaps). A dataset is described by a sidecar JSON manifest listing one
record per sample file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import DataError

MANIFEST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PointCloud:
    """Immutable N x 3 point set with optional annotations.

    Attributes:
        points: (N, 3) float64 coordinates, all finite, N >= 1.
        mask: optional (N,) bool per-point anomaly ground truth.
        object_label: optional 0 (normal) / 1 (anomalous).
        category: optional 1-based category id.
    """

    points: np.ndarray
    mask: Optional[np.ndarray] = None
    object_label: Optional[int] = None
    category: Optional[int] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"points must be (N, 3) with N >= 1, got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("points contain non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != (pts.shape[0],):
                raise ValueError(
                    f"mask length {m.shape} does not match point count {pts.shape[0]}"
                )
            m.setflags(write=False)
            object.__setattr__(self, "mask", m)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def normalized(self) -> "PointCloud":
        """Center on the centroid and scale into a unit-diameter sphere.

        Optional preprocessing; off by default throughout the pipeline since
        the synthetic generator already emits unit-diameter clouds.
        """
        centered = self.points - self.points.mean(axis=0)
        radius = np.linalg.norm(centered, axis=1).max()
        if radius > 0:
            centered = centered * (0.5 / radius)
        return PointCloud(centered, self.mask, self.object_label, self.category)


@dataclass
class GroupSet:
    """FPS centers plus per-resolution kNN neighborhoods of one cloud.

    ``neighborhoods`` maps a resolution r to a (g, r) integer index matrix;
    row m holds the r nearest points to centers[m] in ascending distance
    order (ties broken by lowest point index). ``adaptive_radius`` is the
    mean center-to-k-th-neighbor distance used by the geometry descriptors;
    ``degenerate`` flags an all-coincident cloud where that radius is 0.
    """

    center_indices: np.ndarray
    centers: np.ndarray
    neighborhoods: dict[int, np.ndarray] = field(default_factory=dict)
    adaptive_radius: float = 0.0
    degenerate: bool = False

    @property
    def n_groups(self) -> int:
        return self.center_indices.shape[0]


# ---------------------------------------------------------------------------
# ASCII PLY
# ---------------------------------------------------------------------------

def save_ply(path, cloud: PointCloud, scores: Optional[np.ndarray] = None) -> None:
    """Write an ASCII PLY file with x,y,z and optional anomaly/score columns."""
    path = Path(path)
    n = cloud.n_points
    props = ["property double x", "property double y", "property double z"]
    columns = [cloud.points[:, 0], cloud.points[:, 1], cloud.points[:, 2]]
    if cloud.mask is not None:
        props.append("property uchar anomaly")
        columns.append(cloud.mask.astype(np.int64))
    if scores is not None:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (n,):
            raise ValueError(f"scores must have shape ({n},), got {scores.shape}")
        props.append("property double score")
        columns.append(scores)
    header = "\n".join(
        ["ply", "format ascii 1.0", f"element vertex {n}"] + props + ["end_header"]
    )
    lines = [header]
    for row in zip(*columns):
        lines.append(" ".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def load_ply(path) -> tuple[PointCloud, Optional[np.ndarray]]:
    """Read an ASCII PLY file written by :func:`save_ply` or compatible tools.

    Returns the cloud (mask populated from an ``anomaly`` column when
    present) and the ``score`` column if one exists.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise DataError(f"{path}: not a PLY file")
    n_vertex = None
    prop_names: list[str] = []
    body_start = None
    in_vertex_element = False
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise DataError(f"{path}: only ASCII PLY is supported")
        elif tok[0] == "element":
            in_vertex_element = tok[1] == "vertex"
            if in_vertex_element:
                n_vertex = int(tok[2])
        elif tok[0] == "property" and in_vertex_element:
            prop_names.append(tok[-1])
        elif tok[0] == "end_header":
            body_start = i + 1
            break
    if n_vertex is None or body_start is None:
        raise DataError(f"{path}: malformed PLY header")
    for req in ("x", "y", "z"):
        if req not in prop_names:
            raise DataError(f"{path}: missing vertex property {req!r}")
    rows = []
    for line in lines[body_start : body_start + n_vertex]:
        rows.append([float(v) for v in line.split()])
    data = np.asarray(rows, dtype=np.float64)
    if data.shape != (n_vertex, len(prop_names)):
        raise DataError(f"{path}: vertex data does not match header")
    col = {name: data[:, j] for j, name in enumerate(prop_names)}
    points = np.stack([col["x"], col["y"], col["z"]], axis=1)
    mask = col["anomaly"].astype(bool) if "anomaly" in col else None
    scores = col.get("score")
    return PointCloud(points, mask=mask), scores


# ---------------------------------------------------------------------------
# Dataset manifest
# ---------------------------------------------------------------------------

@dataclass
class ManifestSample:
    path: str
    category_id: int
    split: str  # "train" | "test"
    object_label: int
    defect_type: str = "none"


@dataclass
class DatasetManifest:
    """Sidecar description of a multi-category dataset on disk."""

    categories: list[dict]  # [{"id": int, "name": str}, ...]
    samples: list[ManifestSample]
    seed: int
    root: Path = Path(".")

    def category_ids(self) -> list[int]:
        return [c["id"] for c in self.categories]

    def category_name(self, cid: int) -> str:
        for c in self.categories:
            if c["id"] == cid:
                return c["name"]
        raise KeyError(cid)

    def split_samples(self, split: str) -> list[ManifestSample]:
        return [s for s in self.samples if s.split == split]

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "seed": self.seed,
            "categories": self.categories,
            "samples": [
                {
                    "path": s.path,
                    "category_id": s.category_id,
                    "category_name": self.category_name(s.category_id),
                    "split": s.split,
                    "object_label": s.object_label,
                    "defect_type": s.defect_type,
                }
                for s in self.samples
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def load_manifest(path) -> DatasetManifest:
    """Load and validate a dataset manifest.

    Enforces the normal-only training contract: any train-split sample
    with object_label != 0 is a hard error.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load manifest {path}: {exc}") from exc
    if raw.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise DataError(
            f"{path}: unsupported manifest schema {raw.get('schema_version')!r}"
        )
    samples = []
    for rec in raw["samples"]:
        s = ManifestSample(
            path=rec["path"],
            category_id=int(rec["category_id"]),
            split=rec["split"],
            object_label=int(rec["object_label"]),
            defect_type=rec.get("defect_type", "none"),
        )
        if s.split not in ("train", "test"):
            raise DataError(f"{path}: bad split {s.split!r} for {s.path}")
        if s.split == "train" and s.object_label != 0:
            raise DataError(
                f"{path}: training sample {s.path} has object_label "
                f"{s.object_label}; training data must be normal-only"
            )
        samples.append(s)
    return DatasetManifest(
        categories=raw["categories"], samples=samples, seed=int(raw["seed"]),
        root=path.parent,
    )


def load_sample(manifest: DatasetManifest, sample: ManifestSample) -> PointCloud:
    """Load one manifest entry as a PointCloud with label/category attached."""
    cloud, _ = load_ply(manifest.root / sample.path)
    if sample.object_label == 1 and (cloud.mask is None or not cloud.mask.any()):
        raise DataError(
            f"{sample.path}: anomalous sample must carry a nonempty point mask"
        )
    return PointCloud(
        cloud.points,
        mask=cloud.mask,
        object_label=sample.object_label,
        category=sample.category_id,
    )
