"""Anomaly scores from reconstruction residuals.

Per token: ||f_hat - f||_2 over the base-resolution features. Per
instance the residuals are min-max normalized (constant vectors map to
all zeros), smoothed with a truncated, renormalized 1D Gaussian along
the token axis (tokens are kept in farthest-point-sampling order), and
reduced to one object-level score by taking the maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import GroupSet
from .exceptions import ConfigError


@dataclass
class AnomalyResult:
    """Score vectors for one instance.

    Attributes:
        raw: (g,) per-token residual norms.
        normalized: (g,) min-max normalized residuals in [0, 1].
        smoothed: (g,) Gaussian-smoothed normalized residuals.
        object_score: max of ``smoothed``.
    """

    raw: np.ndarray
    normalized: np.ndarray
    smoothed: np.ndarray
    object_score: float

    def to_dict(self) -> dict:
        return {
            "object_score": self.object_score,
            "token_scores": [float(v) for v in self.smoothed],
        }


def token_residuals(features: np.ndarray, reconstructions: np.ndarray) -> np.ndarray:
    """(g,) euclidean norms of the per-token reconstruction errors."""
    f = np.asarray(features, dtype=np.float64)
    r = np.asarray(reconstructions, dtype=np.float64)
    if f.shape != r.shape or f.ndim != 2:
        raise ValueError(f"feature shapes disagree: {f.shape} vs {r.shape}")
    diff = r - f
    return np.sqrt((diff * diff).sum(axis=1))


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Map to [0, 1] per instance; a constant vector maps to all zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo = values.min()
    rng = values.max() - lo
    if rng == 0.0:
        return np.zeros_like(values)
    return (values - lo) / rng


def effective_sigma(kernel_length: int, sigma: float, sigma_mode: str) -> float:
    """Resolve the smoothing width in token units.

    'absolute' reads ``sigma`` directly in token-index units. 'relative'
    scales it by the kernel half-width (L - 1) / 2, which keeps the
    amount of smoothing proportional to the window whatever the token
    count is.
    """
    if sigma <= 0.0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    if sigma_mode == "absolute":
        return sigma
    if sigma_mode == "relative":
        half = (kernel_length - 1) / 2.0
        return sigma * half if half > 0 else sigma
    raise ConfigError(f"unknown sigma_mode {sigma_mode!r}")


def gaussian_window(kernel_length: int, sigma_tokens: float) -> np.ndarray:
    """Unnormalized Gaussian taps exp(-t^2 / (2 sigma^2)) for integer
    offsets t in [-(L-1)/2, (L-1)/2]."""
    if kernel_length < 1 or kernel_length % 2 == 0:
        raise ConfigError(f"kernel length must be odd and >= 1, got {kernel_length}")
    half = (kernel_length - 1) // 2
    t = np.arange(-half, half + 1, dtype=np.float64)
    return np.exp(-(t * t) / (2.0 * sigma_tokens * sigma_tokens))


def smooth_scores(
    values: np.ndarray, kernel_size: int, sigma: float, sigma_mode: str = "absolute"
) -> np.ndarray:
    """Truncated, renormalized Gaussian filter along the token axis.

    The window length is min(kernel_size, 2g - 1) so the kernel never
    exceeds the sequence. Near the borders the window is truncated to the
    valid range and the remaining taps renormalized to sum to one, which
    avoids the damping a zero-padded convolution would introduce.
    """
    values = np.asarray(values, dtype=np.float64)
    g = values.shape[0]
    if g == 0:
        raise ValueError("cannot smooth an empty score vector")
    length = min(kernel_size, 2 * g - 1)
    if length % 2 == 0:
        length -= 1
    window = gaussian_window(length, effective_sigma(length, sigma, sigma_mode))
    half = (length - 1) // 2
    # mode="same" pins the output length to the longer operand, which is the
    # window once g < kernel_size; slice the centered run of the full
    # convolution instead.
    num = np.convolve(values, window, mode="full")[half : half + g]
    den = np.convolve(np.ones_like(values), window, mode="full")[half : half + g]
    return num / den


def score_tokens(
    features: np.ndarray,
    reconstructions: np.ndarray,
    kernel_size: int = 511,
    sigma: float = 0.2,
    sigma_mode: str = "absolute",
) -> AnomalyResult:
    """Full residual -> normalize -> smooth -> max pipeline for one instance."""
    raw = token_residuals(features, reconstructions)
    normalized = minmax_normalize(raw)
    smoothed = smooth_scores(normalized, kernel_size, sigma, sigma_mode)
    return AnomalyResult(
        raw=raw,
        normalized=normalized,
        smoothed=smoothed,
        object_score=float(smoothed.max()),
    )


def propagate_to_points(
    smoothed: np.ndarray, groups: GroupSet, points: np.ndarray
) -> np.ndarray:
    """Per-point scores: each point inherits its nearest center's score.

    Tie distances resolve to the lowest center position in FPS order,
    matching the index conventions used everywhere else.
    """
    smoothed = np.asarray(smoothed, dtype=np.float64)
    if smoothed.shape[0] != groups.n_groups:
        raise ValueError(
            f"got {smoothed.shape[0]} token scores for {groups.n_groups} groups"
        )
    centers = groups.centers
    n = points.shape[0]
    out = np.empty(n, dtype=np.float64)
    chunk = max(1, int(2**24 // max(centers.shape[0], 1)))
    for lo in range(0, n, chunk):
        block = points[lo : lo + chunk]
        diff = block[:, None, :] - centers[None, :, :]
        sq = (diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]) + diff[
            ..., 2
        ] * diff[..., 2]
        out[lo : lo + chunk] = smoothed[np.argmin(sq, axis=1)]
    return out
