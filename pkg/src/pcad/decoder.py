"""Geometry-guided reconstruction decoder.

The global token is projected to token width, broadcast across the g
query slots, and combined with positional embeddings of the group
centers. Two independently parameterized cross-attention branches read
the encoded base sequence under a shared scalar attention bias derived
from local surface irregularity (normal deviation and curvature
fluctuation); their concatenated outputs pass through a feed-forward
network to produce the reconstructed token sequence.
"""

from __future__ import annotations

import torch
from torch import nn

from .exceptions import ConfigError

GUIDANCE_MODES = ("bias", "mask", "gate")
VARIANCE_FLOOR = 1e-8


def standardize_descriptors(v_norm: torch.Tensor, v_curv: torch.Tensor) -> torch.Tensor:
    """Per-instance standardization of the two descriptor channels.

    Each channel is centered and divided by its standard deviation with a
    variance floor of 1e-8, so constant channels map to exact zeros
    instead of amplified noise. Returns (g, 2).
    """
    stacked = torch.stack([v_norm, v_curv], dim=1)
    mean = stacked.mean(dim=0, keepdim=True)
    var = stacked.var(dim=0, unbiased=False, keepdim=True)
    return (stacked - mean) / torch.sqrt(var.clamp_min(VARIANCE_FLOOR))


class GeoBiasNet(nn.Module):
    """Two-layer MLP mapping standardized descriptors to a scalar per group."""

    def __init__(self, hidden: int = 16):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(2, hidden), nn.ReLU(), nn.Linear(hidden, 1))

    def forward(self, v_norm: torch.Tensor, v_curv: torch.Tensor) -> torch.Tensor:
        return self.mlp(standardize_descriptors(v_norm, v_curv)).squeeze(-1)


def biased_attention(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    b_geo: torch.Tensor,
    beta: torch.Tensor | float,
    n_heads: int = 8,
    mode: str = "bias",
) -> torch.Tensor:
    """Multi-head scaled dot-product attention with geometric guidance.

    'bias' adds beta * b_geo to every attention logit column (broadcast
    over query rows and heads) before the softmax; with beta = 0 this is
    numerically identical to unbiased attention. 'mask' reweights the
    softmax rows by sigmoid(beta * b_geo) and renormalizes; 'gate' scales
    the value rows by the same sigmoid after the softmax. The two
    variants exist for the guidance ablation.
    """
    if mode not in GUIDANCE_MODES:
        raise ConfigError(f"unknown guidance mode {mode!r}; choose from {GUIDANCE_MODES}")
    nq, d = q.shape
    ng = k.shape[0]
    if d % n_heads != 0:
        raise ValueError(f"width {d} not divisible by {n_heads} heads")
    if k.shape != (ng, d) or v.shape != (ng, d) or b_geo.shape != (ng,):
        raise ValueError("key/value/bias shapes inconsistent")
    hd = d // n_heads
    qh = q.reshape(nq, n_heads, hd).transpose(0, 1)
    kh = k.reshape(ng, n_heads, hd).transpose(0, 1)
    vh = v.reshape(ng, n_heads, hd).transpose(0, 1)
    logits = qh @ kh.transpose(1, 2) / hd**0.5
    if mode == "bias":
        logits = logits + beta * b_geo[None, None, :]
        attn = logits.softmax(dim=-1)
    elif mode == "mask":
        weights = logits.softmax(dim=-1) * torch.sigmoid(beta * b_geo)[None, None, :]
        attn = weights / weights.sum(dim=-1, keepdim=True)
    else:  # gate
        attn = logits.softmax(dim=-1)
        vh = vh * torch.sigmoid(beta * b_geo)[None, :, None]
    out = attn @ vh
    return out.transpose(0, 1).reshape(nq, d)


class AttentionBranch(nn.Module):
    """Query/key/value projections feeding one guided attention pass."""

    def __init__(self, d: int, n_heads: int = 8):
        super().__init__()
        self.n_heads = n_heads
        self.wq = nn.Linear(d, d)
        self.wk = nn.Linear(d, d)
        self.wv = nn.Linear(d, d)

    def forward(
        self,
        queries: torch.Tensor,
        memory: torch.Tensor,
        b_geo: torch.Tensor,
        beta: torch.Tensor | float,
        mode: str = "bias",
    ) -> torch.Tensor:
        return biased_attention(
            self.wq(queries),
            self.wk(memory),
            self.wv(memory),
            b_geo,
            beta,
            self.n_heads,
            mode,
        )


class GeometryGuidedDecoder(nn.Module):
    """Reconstruct the g base tokens from the global token.

    Both attention branches see the same (queries, memory, bias) inputs
    with independent weights; a learnable beta is optional, otherwise the
    configured constant is used.
    """

    def __init__(
        self,
        d: int,
        d_z: int,
        n_heads: int = 8,
        beta: float = 1.0,
        learnable_beta: bool = False,
        bias_hidden: int = 16,
    ):
        super().__init__()
        self.d = d
        self.z_proj = nn.Linear(d_z, d)
        self.pos = nn.Sequential(nn.Linear(3, d), nn.ReLU(), nn.Linear(d, d))
        self.bias_net = GeoBiasNet(bias_hidden)
        self.branch_a = AttentionBranch(d, n_heads)
        self.branch_b = AttentionBranch(d, n_heads)
        self.ffn = nn.Sequential(
            nn.Linear(2 * d, 2 * d), nn.GELU(), nn.Linear(2 * d, d)
        )
        if learnable_beta:
            self.beta = nn.Parameter(torch.tensor(float(beta)))
        else:
            self.register_buffer("beta", torch.tensor(float(beta)))

    def queries(self, z: torch.Tensor, centers: torch.Tensor) -> torch.Tensor:
        """(g, d) query slots: broadcast projected z plus center positions."""
        g = centers.shape[0]
        return self.z_proj(z)[None, :].expand(g, -1) + self.pos(centers)

    def forward(
        self,
        z: torch.Tensor,
        f_base: torch.Tensor,
        centers: torch.Tensor,
        v_norm: torch.Tensor,
        v_curv: torch.Tensor,
        mode: str = "bias",
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (reconstructed (g, d) sequence, b_geo (g,) bias)."""
        b_geo = self.bias_net(v_norm, v_curv)
        q = self.queries(z, centers)
        a = self.branch_a(q, f_base, b_geo, self.beta, mode)
        b = self.branch_b(q, f_base, b_geo, self.beta, mode)
        return self.ffn(torch.cat([a, b], dim=1)), b_geo


def rec_loss(f_hat: torch.Tensor, f_target: torch.Tensor) -> torch.Tensor:
    """(1/g) sum of squared euclidean token errors."""
    if f_hat.shape != f_target.shape:
        raise ValueError(f"shapes disagree: {f_hat.shape} vs {f_target.shape}")
    return ((f_hat - f_target) ** 2).sum(dim=1).mean()


def total_loss(c3l: torch.Tensor, rec: torch.Tensor) -> torch.Tensor:
    """Unit-weight sum of the auxiliary objective and reconstruction."""
    return c3l + rec
