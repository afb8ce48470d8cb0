"""Training loop, seeding, and checkpoint round-trips.

Optimization is per-sample (batch size 1) with AdamW and cosine
annealing to lr/100, exactly one optimizer step per sample visit, and a
contrastive-buffer push of each fresh global token after its step.
Everything derives from the config seed: parameter init, jitter noise,
and the per-epoch sample order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import kernels
from .cloud import DatasetManifest, load_sample
from .config import RunConfig
from .contrast import ContrastBuffer
from .exceptions import ConfigError, NumericalError
from .model import PreparedSample, UnifiedModel, prepare_sample

CHECKPOINT_VERSION = 1


def set_seed(seed: int) -> torch.Generator:
    """Seed torch and numpy; returns a dedicated generator for jitter."""
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    gen = torch.Generator()
    gen.manual_seed(seed + 1)
    return gen


def resolve_n_categories(config: RunConfig, manifest: DatasetManifest) -> int:
    n = config.n_categories or len(manifest.categories)
    if config.n_categories and config.n_categories < len(manifest.categories):
        raise ConfigError(
            f"config declares {config.n_categories} categories but the manifest "
            f"has {len(manifest.categories)}"
        )
    return n


def prepare_split(
    manifest: DatasetManifest, config: RunConfig, split: str, backend=None
) -> list[PreparedSample]:
    entries = manifest.split_samples(split)
    if backend is None and config.kernel_backend != "reference":
        backend = kernels.get_backend(config.kernel_backend)
    return [prepare_sample(load_sample(manifest, s), config, backend) for s in entries]


@dataclass
class TrainResult:
    model: UnifiedModel
    history: list[float] = field(default_factory=list)
    steps: int = 0
    checkpoint_path: str | None = None


def save_checkpoint(model: UnifiedModel, path, steps: int = 0) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "config_hash": model.config.config_hash(),
        "n_categories": model.n_categories,
        "steps": steps,
        "state_dict": model.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[UnifiedModel, RunConfig, dict]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(
            f"checkpoint version {payload.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    config = RunConfig.from_dict(payload["config"])
    if config.config_hash() != payload["config_hash"]:
        raise ConfigError("checkpoint config hash mismatch; file corrupted?")
    model = UnifiedModel(config, payload["n_categories"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, config, payload


def check_config_hash(payload: dict, config: RunConfig, override: bool = False) -> None:
    """Reject evaluation under a different config unless overridden."""
    if override:
        return
    if config.config_hash() != payload["config_hash"]:
        raise ConfigError(
            "config hash differs from the checkpoint's; pass the override flag "
            "to evaluate under modified settings"
        )


def train(
    config: RunConfig,
    manifest: DatasetManifest,
    checkpoint_path=None,
    log=None,
    samples: list[PreparedSample] | None = None,
) -> TrainResult:
    """Train one unified model over the manifest's training split.

    ``samples`` can inject pre-prepared training samples (the grouping and
    descriptor work is deterministic, so sharing it across ablation runs
    is sound and much faster).
    """
    generator = set_seed(config.seed)
    if samples is None:
        samples = prepare_split(manifest, config, "train")
    if not samples:
        raise ConfigError("training split is empty")
    n_categories = resolve_n_categories(config, manifest)
    seen = {s.label for s in samples}
    if any(w > 0 for w in config.effective_lambdas()[:2]) and len(seen) < 2:
        raise ConfigError(
            "category-conditioned objectives need >= 2 categories in training data"
        )
    model = UnifiedModel(config, n_categories)
    model.train()
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.AdamW(params, lr=config.lr)
    if config.schedule == "cosine":
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(
            opt, T_max=config.epochs, eta_min=config.lr / 100.0
        )
    else:
        sched = None
    buffer = ContrastBuffer(config.buffer_size)
    order_rng = np.random.default_rng(config.seed + 2)
    history: list[float] = []
    steps = 0
    for epoch in range(config.epochs):
        order = order_rng.permutation(len(samples))
        epoch_total = 0.0
        for pos, idx in enumerate(order):
            sample = samples[int(idx)]
            losses = model.forward_train(sample, buffer, generator)
            total = losses["total"]
            if not torch.isfinite(total):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} step {steps}: "
                    f"rec={float(losses['rec'])}, c3l={float(losses['c3l'])}"
                )
            (total / config.grad_accum).backward()
            steps += 1
            if steps % config.grad_accum == 0 or pos == len(order) - 1:
                opt.step()
                opt.zero_grad(set_to_none=True)
            buffer.push(losses["z"].detach(), sample.label)
            epoch_total += float(total.detach())
        if sched is not None:
            sched.step()
        history.append(epoch_total / len(samples))
        if log is not None and (epoch % max(1, config.epochs // 10) == 0 or epoch == config.epochs - 1):
            log(f"epoch {epoch + 1}/{config.epochs} mean loss {history[-1]:.6f}")
    model.eval()
    result = TrainResult(model=model, history=history, steps=steps)
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path, steps)
        result.checkpoint_path = str(checkpoint_path)
    return result


def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    """Reference formula for the schedule: anneals to base_lr / 100."""
    eta_min = base_lr / 100.0
    if total_epochs <= 1:
        return base_lr
    t = min(epoch, total_epochs) / total_epochs
    return eta_min + 0.5 * (base_lr - eta_min) * (1.0 + math.cos(math.pi * t))
