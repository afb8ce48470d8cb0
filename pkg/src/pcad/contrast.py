"""Category-conditioned contrastive learning over a FIFO embedding buffer.

The buffer keeps the last L unit-norm global tokens with their category
labels. Each training step contrasts the fresh token against the whole
buffer: same-category entries are positives, everything else negatives.
Stored entries are detached snapshots, so no gradient ever reaches them.
"""

from __future__ import annotations

from typing import Optional

import torch

UNIT_NORM_TOL = 1e-4


class ContrastBuffer:
    """Fixed-capacity FIFO of (embedding, label) pairs."""

    def __init__(self, capacity: int = 64):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries: list[tuple[torch.Tensor, int]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def push(self, z: torch.Tensor, c: int) -> None:
        """Append a detached copy; evict the oldest entry beyond capacity."""
        if z.ndim != 1:
            raise ValueError(f"z must be a vector, got shape {tuple(z.shape)}")
        norm = float(z.detach().norm())
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"z must be unit-norm, got ||z|| = {norm}")
        self._entries.append((z.detach().clone(), int(c)))
        if len(self._entries) > self.capacity:
            self._entries.pop(0)

    def embeddings(self) -> Optional[torch.Tensor]:
        if not self._entries:
            return None
        return torch.stack([z for z, _ in self._entries])

    def labels(self) -> list[int]:
        return [c for _, c in self._entries]

    def state_dict(self) -> dict:
        """Snapshot for inspection; the buffer is transient optimization
        state and deliberately not part of model checkpoints."""
        return {"capacity": self.capacity, "labels": self.labels()}


def scl_loss(
    z: torch.Tensor, c: int, buffer: ContrastBuffer, tau: float = 0.07
) -> Optional[torch.Tensor]:
    """Supervised contrastive loss of one embedding against the buffer.

    mean over positives p of -log[ exp(z.z_p / tau) / sum_a exp(z.z_a / tau) ]
    where a ranges over every buffered entry. Returns None (the skip
    sentinel) when the buffer holds no same-label entry; the combined
    objective then simply omits the term for this step.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    bank = buffer.embeddings()
    if bank is None:
        return None
    labels = torch.tensor(buffer.labels())
    positives = labels == int(c)
    if not bool(positives.any()):
        return None
    sims = bank.to(z.dtype) @ z / tau
    log_denom = torch.logsumexp(sims, dim=0)
    return (log_denom - sims[positives]).mean()


def c3l_total(
    scl: Optional[torch.Tensor],
    cls: torch.Tensor,
    cos: torch.Tensor,
    lambda_scl: float,
    lambda_cls: float,
    lambda_cos: float,
) -> torch.Tensor:
    """Weighted sum of the three auxiliary objectives.

    A skipped contrastive term (None) contributes zero.
    """
    for name, w in (("lambda_scl", lambda_scl), ("lambda_cls", lambda_cls), ("lambda_cos", lambda_cos)):
        if w < 0:
            raise ValueError(f"{name} must be >= 0, got {w}")
    total = lambda_cls * cls + lambda_cos * cos
    if scl is not None:
        total = total + lambda_scl * scl
    return total
