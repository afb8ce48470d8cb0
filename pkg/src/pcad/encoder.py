"""Local neighborhood encoder and training-time feature jittering.

Each multi-resolution neighborhood is mapped to one d-dimensional token:
a shared per-point MLP lifts center-relative coordinates, max pooling
aggregates them order-independently, a linear head projects to width d,
and a positional embedding of the absolute center is added back so the
token keeps its location on the object.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .cloud import GroupSet, PointCloud


class LocalEncoder(nn.Module):
    """PointNet-style set encoder E(.) shared by all resolutions.

    Args:
        d: output token width.
        hidden: width of the per-point lift (defaults to d).
    """

    def __init__(self, d: int, hidden: int | None = None):
        super().__init__()
        hidden = hidden or d
        self.d = d
        self.lift = nn.Sequential(
            nn.Linear(3, hidden), nn.ReLU(), nn.Linear(hidden, hidden)
        )
        self.proj = nn.Linear(hidden, d)
        self.pos = nn.Sequential(nn.Linear(3, d), nn.ReLU(), nn.Linear(d, d))

    def encode_neighborhoods(self, points: torch.Tensor, centers: torch.Tensor) -> torch.Tensor:
        """Encode a batch of neighborhoods.

        Args:
            points: (g, r, 3) absolute neighborhood coordinates.
            centers: (g, 3) absolute group centers.

        Returns:
            (g, d) tokens: proj(max over the lifted center-relative points)
            plus the positional embedding of each center.
        """
        if not torch.isfinite(points).all() or not torch.isfinite(centers).all():
            raise ValueError("non-finite neighborhood input")
        rel = points - centers[:, None, :]
        pooled = self.lift(rel).max(dim=1).values
        return self.proj(pooled) + self.pos(centers)

    def encode_neighborhood(self, points: torch.Tensor, center: torch.Tensor) -> torch.Tensor:
        """Single-neighborhood convenience wrapper: (r, 3), (3,) -> (d,)."""
        return self.encode_neighborhoods(points[None], center[None])[0]

    def encode_resolution(self, cloud: PointCloud, groups: GroupSet, r: int) -> torch.Tensor:
        """(g, d) feature sequence for resolution r, rows in FPS center order."""
        if r not in groups.neighborhoods:
            raise ValueError(
                f"groups carry resolutions {sorted(groups.neighborhoods)}, not {r}"
            )
        dtype = self.proj.weight.dtype
        pts = torch.from_numpy(cloud.points[groups.neighborhoods[r]]).to(dtype)
        centers = torch.from_numpy(groups.centers).to(dtype)
        return self.encode_neighborhoods(pts, centers)


def jitter_features(
    tokens: torch.Tensor,
    scale: float,
    prob: float,
    generator: torch.Generator | None = None,
    training: bool = True,
) -> torch.Tensor:
    """Additive Gaussian feature noise applied during training.

    With probability ``prob`` (one draw per call), every token receives
    noise with standard deviation ||token||_2 / (scale * sqrt(d)), so the
    perturbation is proportional to the token's own magnitude. Inference
    mode and zero-norm tokens pass through unchanged.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"prob must be in [0, 1], got {prob}")
    if not training or prob == 0.0:
        return tokens
    if prob < 1.0:
        gate = torch.rand((), generator=generator, dtype=tokens.dtype)
        if float(gate) >= prob:
            return tokens
    d = tokens.shape[-1]
    # The noise scale is augmentation state, not part of the computation
    # graph; detach so gradients do not flow through the norm.
    sigma = tokens.detach().norm(dim=-1, keepdim=True) / (scale * np.sqrt(d))
    noise = torch.randn(
        tokens.shape, generator=generator, dtype=tokens.dtype, device=tokens.device
    )
    return tokens + noise * sigma
