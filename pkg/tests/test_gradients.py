"""Finite-difference validation of every differentiable objective.

All checks run in float64 with central differences (step 1e-5) and
require the worst coordinate to agree with autograd to 1e-4 relative.
"""

import numpy as np
import pytest
import torch

from _fd import REL_TOL, check_gradient
from pcad.contrast import ContrastBuffer, scl_loss
from pcad.decoder import GeometryGuidedDecoder, rec_loss
from pcad.tokenizer import CfgtModule, cosine_alignment_loss

SEEDS = [0, 1, 2, 3]


def unit(rng, n):
    v = torch.tensor(rng.normal(size=n))
    return v / v.norm()


@pytest.mark.parametrize("seed", SEEDS)
def test_cosine_loss_gradient(seed):
    rng = np.random.default_rng(seed)
    base = torch.tensor(rng.normal(size=(5, 8)))
    fine = torch.tensor(rng.normal(size=(5, 8)))
    coarse = torch.tensor(rng.normal(size=(5, 8)))
    for target in (base, fine, coarse):
        err = check_gradient(lambda: cosine_alignment_loss(base, fine, coarse), target)
        assert err <= REL_TOL, f"cosine grad rel err {err}"


@pytest.mark.parametrize("seed", SEEDS)
def test_classifier_loss_gradient(seed):
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed + 100)
    module = CfgtModule(d=8, n_categories=3, d_z=4, n_layers=1, n_heads=2).double()
    fused = torch.tensor(rng.normal(size=32))
    label = int(rng.integers(1, 4))

    def loss_fn():
        return module.cls_loss(module.classify(fused), label)

    err = check_gradient(loss_fn, fused)
    assert err <= REL_TOL, f"classifier grad rel err {err}"
    err_w = check_gradient(loss_fn, module.classifier.weight)
    assert err_w <= REL_TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_contrastive_loss_gradient(seed):
    rng = np.random.default_rng(seed + 200)
    buf = ContrastBuffer(capacity=8)
    for _ in range(6):
        buf.push(unit(rng, 6), int(rng.integers(1, 3)))
    raw = torch.tensor(rng.normal(size=6))

    def loss_fn():
        z = raw / raw.norm()
        out = scl_loss(z, 1, buf, tau=0.07)
        assert out is not None
        return out

    err = check_gradient(loss_fn, raw)
    assert err <= REL_TOL, f"scl grad rel err {err}"


@pytest.mark.parametrize("seed", SEEDS)
def test_reconstruction_loss_gradient(seed):
    rng = np.random.default_rng(seed + 300)
    f_hat = torch.tensor(rng.normal(size=(4, 8)))
    f_tgt = torch.tensor(rng.normal(size=(4, 8)))
    err = check_gradient(lambda: rec_loss(f_hat, f_tgt), f_hat)
    assert err <= REL_TOL, f"rec grad rel err {err}"


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("mode", ["bias", "mask", "gate"])
def test_decoder_gradients(seed, mode):
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed + 400)
    dec = GeometryGuidedDecoder(d=8, d_z=4, n_heads=2, learnable_beta=True).double()
    g = 4
    z = torch.tensor(rng.normal(size=4))
    f_base = torch.tensor(rng.normal(size=(g, 8)))
    centers = torch.tensor(rng.normal(size=(g, 3)))
    v_norm = torch.tensor(rng.uniform(0, 1.5, size=g))
    v_curv = torch.tensor(rng.uniform(0, 0.3, size=g))
    f_tgt = torch.tensor(rng.normal(size=(g, 8)))

    def loss_fn():
        f_hat, _ = dec(z, f_base, centers, v_norm, v_curv, mode=mode)
        return rec_loss(f_hat, f_tgt)

    for name, tensor in [
        ("z", z),
        ("f_base", f_base),
        ("beta", dec.beta),
        ("bias_w1", dec.bias_net.mlp[0].weight),
        ("bias_w2", dec.bias_net.mlp[2].weight),
    ]:
        err = check_gradient(loss_fn, tensor)
        assert err <= REL_TOL, f"decode grad rel err for {name}: {err} (mode {mode})"


def test_instance_count_meets_floor():
    """The parametrized checks above cover at least 20 distinct instances."""
    n = len(SEEDS) * 3  # cosine targets
    n += len(SEEDS) * 2  # classifier input + weight
    n += len(SEEDS)  # scl
    n += len(SEEDS)  # rec
    n += len(SEEDS) * 3 * 5  # decoder modes x tensors
    assert n >= 20
