"""The assembled pipeline: grouping, encoding, fusion, decoding, scoring.

``prepare_sample`` does the numpy-side work (FPS grouping, neighborhood
gathering, geometric descriptors) once per cloud; ``UnifiedModel`` holds
every trainable module and exposes one training forward returning all
loss terms and one evaluation forward returning anomaly scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from . import kernels
from .cloud import GroupSet, PointCloud
from .config import RunConfig
from .contrast import ContrastBuffer, c3l_total, scl_loss
from .decoder import GeometryGuidedDecoder, rec_loss, total_loss
from .encoder import LocalEncoder, jitter_features
from .exceptions import ConfigError
from .geometry import compute_geo_descriptors
from .grouping import build_groups
from .scoring import AnomalyResult, propagate_to_points, score_tokens
from .tokenizer import CfgtModule, cosine_alignment_loss


@dataclass
class PreparedSample:
    """One cloud with everything the model needs, precomputed."""

    cloud: PointCloud
    groups: GroupSet
    neighborhoods: dict[int, torch.Tensor]  # r -> (g, r, 3)
    centers: torch.Tensor  # (g, 3)
    v_norm: torch.Tensor  # (g,)
    v_curv: torch.Tensor  # (g,)
    label: int  # 1-based category

    @property
    def resolutions(self) -> tuple[int, int, int]:
        """(fine, base, coarse) = (k/2, k, 2k)."""
        rs = sorted(self.neighborhoods)
        return rs[0], rs[1], rs[2]


def prepare_sample(
    cloud: PointCloud, config: RunConfig, backend=None, dtype: torch.dtype = torch.float32
) -> PreparedSample:
    """Group, gather, and describe one cloud for repeated forward passes."""
    if backend is None and config.kernel_backend != "reference":
        backend = kernels.get_backend(config.kernel_backend)
    groups = build_groups(cloud, config.g, config.k, backend)
    desc = compute_geo_descriptors(cloud, groups, backend)
    neighborhoods = {
        r: torch.from_numpy(cloud.points[idx]).to(dtype)
        for r, idx in groups.neighborhoods.items()
    }
    return PreparedSample(
        cloud=cloud,
        groups=groups,
        neighborhoods=neighborhoods,
        centers=torch.from_numpy(groups.centers).to(dtype),
        v_norm=torch.from_numpy(desc.v_norm).to(dtype),
        v_curv=torch.from_numpy(desc.v_curv).to(dtype),
        label=cloud.category if cloud.category is not None else 1,
    )


class UnifiedModel(nn.Module):
    """One model trained jointly over all categories."""

    def __init__(self, config: RunConfig, n_categories: int):
        super().__init__()
        if n_categories < 2:
            raise ConfigError(f"the unified setting needs >= 2 categories, got {n_categories}")
        if config.global_token == "cfgt" and not config.cfgt_on:
            raise ConfigError("global_token 'cfgt' requires cfgt_on")
        self.config = config
        self.n_categories = n_categories
        d = config.d
        global_dim = 4 * d if config.global_token == "cfgt" else d
        self.local = LocalEncoder(d, config.hidden)
        self.cfgt = CfgtModule(
            d,
            n_categories,
            d_z=config.d_z,
            n_layers=config.n_layers,
            n_heads=config.n_heads,
            global_dim=global_dim,
        )
        self.decoder = GeometryGuidedDecoder(
            d,
            config.d_z,
            n_heads=config.n_heads,
            beta=config.beta,
            learnable_beta=config.learnable_beta,
        )
        if not config.train_encoder:
            for p in self.local.parameters():
                p.requires_grad_(False)

    # -- shared forward ----------------------------------------------------

    def encode(
        self,
        sample: PreparedSample,
        training: bool,
        generator: Optional[torch.Generator] = None,
    ) -> dict:
        """Everything up to the global token.

        Returns a dict with the raw base sequence (the detached
        reconstruction target), the transformer outputs, the fused global
        feature, the unit-norm global token z, and the alignment loss.
        """
        cfg = self.config
        r_fine, r_base, r_coarse = sample.resolutions
        raw = {
            r: self.local.encode_neighborhoods(sample.neighborhoods[r], sample.centers)
            for r in (sample.resolutions if cfg.cfgt_on else (r_base,))
        }
        target = raw[r_base].detach()

        def maybe_jitter(seq: torch.Tensor, is_base: bool) -> torch.Tensor:
            if cfg.jitter_target == "base" and not is_base:
                return seq
            return jitter_features(
                seq, cfg.jitter_scale, cfg.jitter_prob, generator, training
            )

        base_in = maybe_jitter(raw[r_base], True)
        if cfg.cfgt_on:
            fine_in = maybe_jitter(raw[r_fine], False)
            coarse_in = maybe_jitter(raw[r_coarse], False)
            f_fine, f_base, f_coarse, t_act = self.cfgt.encode_sequences(
                fine_in, base_in, coarse_in
            )
            cos = cosine_alignment_loss(f_base, f_fine, f_coarse)
        else:
            with_act = torch.cat([self.cfgt.act.to(base_in.dtype), base_in], dim=0)
            out = self.cfgt.enc(with_act)
            f_base, t_act = out[1:], out[0]
            f_fine = f_coarse = None
            cos = base_in.new_zeros(())

        mode = cfg.global_token
        if mode == "cfgt":
            f_global = self.cfgt.fuse_global(f_fine, f_base, f_coarse, t_act)
        elif mode == "act":
            f_global = t_act
        elif mode == "max":
            f_global = f_base.max(dim=0).values
        else:  # mean
            f_global = f_base.mean(dim=0)
        z = self.cfgt.project(f_global)
        return {
            "target": target,
            "f_base": f_base,
            "f_global": f_global,
            "z": z,
            "cos": cos,
        }

    def decode(self, sample: PreparedSample, z: torch.Tensor, f_base: torch.Tensor):
        return self.decoder(
            z, f_base, sample.centers, sample.v_norm, sample.v_curv, self.config.guidance
        )

    # -- training / evaluation entry points --------------------------------

    def forward_train(
        self,
        sample: PreparedSample,
        buffer: ContrastBuffer,
        generator: Optional[torch.Generator] = None,
    ) -> dict:
        """All loss terms for one optimization step (does not push z)."""
        cfg = self.config
        enc = self.encode(sample, training=True, generator=generator)
        logits = self.cfgt.classify(enc["f_global"])
        cls = self.cfgt.cls_loss(logits, sample.label)
        scl = scl_loss(enc["z"], sample.label, buffer, cfg.tau)
        lam_scl, lam_cls, lam_cos = cfg.effective_lambdas()
        c3l = c3l_total(scl, cls, enc["cos"], lam_scl, lam_cls, lam_cos)
        f_hat, b_geo = self.decode(sample, enc["z"], enc["f_base"])
        rec = rec_loss(f_hat, enc["target"])
        return {
            "total": total_loss(c3l, rec),
            "rec": rec,
            "c3l": c3l,
            "cls": cls,
            "cos": enc["cos"],
            "scl": scl,
            "z": enc["z"],
            "b_geo": b_geo,
        }

    @torch.no_grad()
    def forward_eval(self, sample: PreparedSample) -> tuple[AnomalyResult, dict]:
        """Anomaly scores plus per-point propagation for one cloud."""
        cfg = self.config
        enc = self.encode(sample, training=False)
        f_hat, _ = self.decode(sample, enc["z"], enc["f_base"])
        result = score_tokens(
            enc["target"].double().numpy(),
            f_hat.double().numpy(),
            cfg.k_g,
            cfg.sigma,
            cfg.sigma_mode,
        )
        point_scores = propagate_to_points(
            result.smoothed, sample.groups, sample.cloud.points
        )
        extras = {
            "z": enc["z"],
            "f_hat": f_hat,
            "target": enc["target"],
            "point_scores": point_scores,
        }
        return result, extras
