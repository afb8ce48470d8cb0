"""Coarse-to-fine global tokenization.

The three resolution sequences pass through one shared pre-norm
transformer; the base sequence additionally carries a learnable adaptive
context token in front. Pooled sequence means and the encoded context
token are concatenated into a global feature, which feeds an auxiliary
category classifier and a projector producing the unit-norm global token
z used downstream as the decoder query and contrastive embedding.
"""

from __future__ import annotations

import torch
from torch import nn

from .exceptions import NumericalError


def trunc_normal_(tensor: torch.Tensor, std: float = 0.02) -> torch.Tensor:
    return nn.init.trunc_normal_(tensor, std=std, a=-2 * std, b=2 * std)


class SelfAttention(nn.Module):
    """Multi-head self attention over one (n, d) sequence."""

    def __init__(self, d: int, n_heads: int):
        super().__init__()
        if d % n_heads != 0:
            raise ValueError(f"width {d} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.head_dim = d // n_heads
        self.qkv = nn.Linear(d, 3 * d)
        self.out = nn.Linear(d, d)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, d = x.shape
        q, k, v = self.qkv(x).reshape(n, 3, self.n_heads, self.head_dim).unbind(dim=1)
        q = q.transpose(0, 1)  # (heads, n, head_dim)
        k = k.transpose(0, 1)
        v = v.transpose(0, 1)
        logits = q @ k.transpose(1, 2) / self.head_dim**0.5
        attn = logits.softmax(dim=-1)
        mixed = (attn @ v).transpose(0, 1).reshape(n, d)
        return self.out(mixed)


class TransformerBlock(nn.Module):
    """Pre-norm block: x + attn(LN(x)), then x + mlp(LN(x)).

    Zeroing the attention output projection and the second MLP layer
    makes the block an exact identity, which the tests exploit.
    """

    def __init__(self, d: int, n_heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(d)
        self.attn = SelfAttention(d, n_heads)
        self.norm2 = nn.LayerNorm(d)
        self.mlp = nn.Sequential(
            nn.Linear(d, mlp_ratio * d), nn.GELU(), nn.Linear(mlp_ratio * d, d)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class SharedEncoder(nn.Module):
    """Stack of pre-norm blocks; one parameter set for every resolution."""

    def __init__(self, d: int, n_layers: int = 4, n_heads: int = 8):
        super().__init__()
        self.blocks = nn.ModuleList(
            TransformerBlock(d, n_heads) for _ in range(n_layers)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return x


def cosine_alignment_loss(
    f_base: torch.Tensor, f_fine: torch.Tensor, f_coarse: torch.Tensor
) -> torch.Tensor:
    """Cross-scale alignment: (1/g) sum_m sum_r [1 - cos(base_m, r_m)].

    Bounded in [0, 4]. A pair with a zero-norm member contributes the
    neutral value 1 (cosine treated as 0) instead of propagating NaN.
    """
    if f_base.shape != f_fine.shape or f_base.shape != f_coarse.shape:
        raise ValueError(
            f"sequences disagree: {f_base.shape}, {f_fine.shape}, {f_coarse.shape}"
        )
    total = f_base.new_zeros(())
    for other in (f_fine, f_coarse):
        dot = (f_base * other).sum(dim=1)
        denom = f_base.norm(dim=1) * other.norm(dim=1)
        safe = denom > 0
        cos = torch.where(safe, dot / torch.where(safe, denom, denom.new_ones(())), dot.new_zeros(()))
        total = total + (1.0 - cos).sum()
    return total / f_base.shape[0]


class CfgtModule(nn.Module):
    """Shared transformer, context token, classifier, and projector.

    Args:
        d: token width.
        n_categories: number of training categories C (labels are 1-based).
        d_z: width of the projected global token.
        global_dim: width of the fused global feature (4d for the full
            concatenation; d for the pooled/context-only ablations).
    """

    def __init__(
        self,
        d: int,
        n_categories: int,
        d_z: int = 128,
        n_layers: int = 4,
        n_heads: int = 8,
        global_dim: int | None = None,
    ):
        super().__init__()
        if n_categories < 2:
            raise ValueError(f"need at least 2 categories, got {n_categories}")
        self.d = d
        self.d_z = d_z
        self.n_categories = n_categories
        self.global_dim = global_dim if global_dim is not None else 4 * d
        self.act = nn.Parameter(torch.empty(1, d))
        trunc_normal_(self.act, std=0.02)
        self.enc = SharedEncoder(d, n_layers, n_heads)
        self.classifier = nn.Linear(self.global_dim, n_categories)
        self.projector = nn.Sequential(
            nn.LayerNorm(self.global_dim),
            nn.Linear(self.global_dim, d_z),
            nn.GELU(),
            nn.Linear(d_z, d_z),
        )

    def encode_sequences(
        self, f_fine: torch.Tensor, f_base: torch.Tensor, f_coarse: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        """Run all three resolutions through the shared encoder.

        The base sequence is encoded with the context token prepended;
        returns (fine~, base~, coarse~, encoded context token).
        """
        for seq in (f_fine, f_base, f_coarse):
            if seq.ndim != 2 or seq.shape[1] != self.d:
                raise ValueError(f"expected (g, {self.d}) sequences, got {tuple(seq.shape)}")
        fine_t = self.enc(f_fine)
        coarse_t = self.enc(f_coarse)
        with_act = torch.cat([self.act.to(f_base.dtype), f_base], dim=0)
        out = self.enc(with_act)
        return fine_t, out[1:], coarse_t, out[0]

    @staticmethod
    def fuse_global(
        f_fine: torch.Tensor,
        f_base: torch.Tensor,
        f_coarse: torch.Tensor,
        t_act: torch.Tensor,
    ) -> torch.Tensor:
        """Concatenate [mean(base), mean(coarse), mean(fine), context]."""
        return torch.cat(
            [f_base.mean(dim=0), f_coarse.mean(dim=0), f_fine.mean(dim=0), t_act]
        )

    def classify(self, f_global: torch.Tensor) -> torch.Tensor:
        return self.classifier(f_global)

    def cls_loss(self, logits: torch.Tensor, label: int) -> torch.Tensor:
        """Cross entropy against a 1-based category label."""
        if not 1 <= label <= self.n_categories:
            raise ValueError(f"label {label} outside [1, {self.n_categories}]")
        return torch.logsumexp(logits, dim=0) - logits[label - 1]

    def project(self, f_global: torch.Tensor) -> torch.Tensor:
        """Unit-norm global token z. The leading layer normalization makes
        the result invariant to a positive rescaling of the input."""
        raw = self.projector(f_global)
        norm = raw.norm()
        if float(norm.detach()) == 0.0:
            raise NumericalError("projector produced a zero vector")
        return raw / norm
