"""Assembled pipeline: sample preparation, ablation paths, eval scores."""

import numpy as np
import pytest
import torch

from pcad.cloud import PointCloud
from pcad.config import desk_profile
from pcad.contrast import ContrastBuffer
from pcad.exceptions import ConfigError
from pcad.model import PreparedSample, UnifiedModel, prepare_sample


@pytest.fixture
def config():
    return desk_profile(g=24, k=8, d=32, d_z=16, epochs=1, seed=0)


@pytest.fixture
def cloud(rng):
    return PointCloud(rng.normal(size=(200, 3)), category=2)


@pytest.fixture
def sample(cloud, config):
    return prepare_sample(cloud, config)


class TestPrepareSample:
    def test_shapes_and_resolutions(self, sample, config):
        assert sample.resolutions == (4, 8, 16)
        for r in sample.resolutions:
            assert sample.neighborhoods[r].shape == (24, r, 3)
            assert sample.neighborhoods[r].dtype == torch.float32
        assert sample.centers.shape == (24, 3)
        assert sample.v_norm.shape == (24,)
        assert sample.v_curv.shape == (24,)

    def test_label_from_cloud_category(self, sample):
        assert sample.label == 2

    def test_label_defaults_to_one(self, rng, config):
        s = prepare_sample(PointCloud(rng.normal(size=(100, 3))), config)
        assert s.label == 1

    def test_neighborhood_rows_start_at_center(self, sample):
        for r in sample.resolutions:
            first = sample.neighborhoods[r][:, 0, :]
            assert torch.allclose(first, sample.centers)

    def test_float64_option(self, cloud, config):
        s = prepare_sample(cloud, config, dtype=torch.float64)
        assert s.centers.dtype == torch.float64


class TestConstruction:
    def test_two_categories_required(self, config):
        with pytest.raises(ConfigError, match="2 categories"):
            UnifiedModel(config, 1)

    def test_global_token_requires_cfgt(self):
        cfg = desk_profile(g=24, k=8, d=32, cfgt_on=False)
        with pytest.raises(ConfigError, match="cfgt"):
            UnifiedModel(cfg, 3)

    def test_frozen_encoder_option(self):
        cfg = desk_profile(g=24, k=8, d=32, train_encoder=False)
        model = UnifiedModel(cfg, 3)
        assert all(not p.requires_grad for p in model.local.parameters())
        assert all(p.requires_grad for p in model.cfgt.parameters())
        assert all(p.requires_grad for p in model.decoder.parameters())


class TestEncode:
    def test_eval_mode_deterministic(self, sample, config):
        model = UnifiedModel(config, 3)
        e1 = model.encode(sample, training=False)
        e2 = model.encode(sample, training=False)
        assert torch.equal(e1["z"], e2["z"])
        assert torch.equal(e1["f_base"], e2["f_base"])

    def test_training_jitter_changes_features(self, sample, config):
        model = UnifiedModel(config, 3)
        gen = torch.Generator().manual_seed(0)
        e1 = model.encode(sample, training=True, generator=gen)
        e2 = model.encode(sample, training=True, generator=gen)
        assert not torch.equal(e1["f_base"], e2["f_base"])

    def test_z_unit_norm_and_cos_range(self, sample, config):
        model = UnifiedModel(config, 3)
        enc = model.encode(sample, training=False)
        assert float(enc["z"].detach().norm()) == pytest.approx(1.0, abs=1e-5)
        assert 0.0 <= float(enc["cos"].detach()) <= 4.0

    def test_target_is_detached_raw_base(self, sample, config):
        model = UnifiedModel(config, 3)
        enc = model.encode(sample, training=False)
        assert not enc["target"].requires_grad
        raw = model.local.encode_neighborhoods(sample.neighborhoods[8], sample.centers)
        assert torch.equal(enc["target"], raw.detach())

    @pytest.mark.parametrize("mode", ["act", "max", "mean"])
    def test_alternative_global_tokens(self, sample, mode):
        cfg = desk_profile(g=24, k=8, d=32, d_z=16, global_token=mode)
        model = UnifiedModel(cfg, 3)
        enc = model.encode(sample, training=False)
        assert enc["f_global"].shape == (32,)
        assert float(enc["z"].detach().norm()) == pytest.approx(1.0, abs=1e-5)

    def test_cfgt_global_is_four_wide(self, sample, config):
        model = UnifiedModel(config, 3)
        enc = model.encode(sample, training=False)
        assert enc["f_global"].shape == (4 * 32,)

    def test_cfgt_off_zero_alignment(self, sample):
        cfg = desk_profile(g=24, k=8, d=32, d_z=16, cfgt_on=False, global_token="act")
        model = UnifiedModel(cfg, 3)
        enc = model.encode(sample, training=False)
        assert float(enc["cos"]) == 0.0
        assert enc["f_base"].shape == (24, 32)


class TestForwardTrain:
    def test_loss_terms_present_and_consistent(self, sample, config):
        model = UnifiedModel(config, 3)
        buffer = ContrastBuffer(8)
        out = model.forward_train(sample, buffer)
        assert out["scl"] is None  # empty buffer
        assert float(out["total"].detach()) == pytest.approx(
            float(out["c3l"].detach()) + float(out["rec"].detach()), rel=1e-6
        )
        assert out["b_geo"].shape == (24,)
        assert torch.isfinite(out["total"])

    def test_scl_engages_with_positive_in_buffer(self, sample, config):
        model = UnifiedModel(config, 3)
        buffer = ContrastBuffer(8)
        first = model.forward_train(sample, buffer)
        buffer.push(first["z"].detach(), sample.label)
        second = model.forward_train(sample, buffer)
        assert second["scl"] is not None

    @pytest.mark.parametrize("guidance", ["mask", "gate"])
    def test_guidance_modes_train(self, sample, guidance):
        cfg = desk_profile(g=24, k=8, d=32, d_z=16, guidance=guidance)
        model = UnifiedModel(cfg, 3)
        out = model.forward_train(sample, ContrastBuffer(8))
        assert torch.isfinite(out["total"])

    def test_cfgt_off_trains(self, sample):
        cfg = desk_profile(
            g=24, k=8, d=32, d_z=16, cfgt_on=False, global_token="act"
        )
        model = UnifiedModel(cfg, 3)
        out = model.forward_train(sample, ContrastBuffer(8))
        assert float(out["cos"]) == 0.0
        assert torch.isfinite(out["total"])


class TestForwardEval:
    def test_score_ranges_and_shapes(self, sample, config):
        model = UnifiedModel(config, 3)
        result, extras = model.forward_eval(sample)
        assert result.raw.shape == (24,)
        assert result.normalized.min() >= 0.0 and result.normalized.max() <= 1.0
        assert result.smoothed.min() >= 0.0 and result.smoothed.max() <= 1.0
        assert 0.0 <= result.object_score <= 1.0
        assert result.object_score == pytest.approx(float(result.smoothed.max()))
        assert extras["point_scores"].shape == (200,)
        assert np.all(extras["point_scores"] >= 0.0)
        assert np.all(extras["point_scores"] <= 1.0)

    def test_eval_deterministic(self, sample, config):
        model = UnifiedModel(config, 3)
        r1, _ = model.forward_eval(sample)
        r2, _ = model.forward_eval(sample)
        assert np.array_equal(r1.smoothed, r2.smoothed)
        assert r1.object_score == r2.object_score
