"""Central finite-difference gradient checking helpers (float64)."""

import torch

STEP = 1e-5
REL_TOL = 1e-4


def fd_gradient(fn, x, h=STEP):
    """Coordinate-wise central differences of a scalar-valued fn().

    fn must read x by reference; x is perturbed in place under no_grad
    and restored afterwards.
    """
    grad = torch.zeros_like(x, dtype=torch.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + h
            f_plus = float(fn())
            flat[i] = orig - h
            f_minus = float(fn())
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def rel_error(analytic, numeric):
    """Worst-coordinate error relative to the gradient magnitude."""
    scale = max(float(analytic.abs().max()), float(numeric.abs().max()), 1e-8)
    return float((analytic - numeric).abs().max()) / scale


def check_gradient(loss_fn, x):
    """Compare autograd and finite differences for d loss / d x.

    x may be a leaf tensor or an nn.Parameter; finite differences
    perturb the underlying storage either way.
    """
    storage = x.data if isinstance(x, torch.nn.Parameter) else x
    x.requires_grad_(True)
    if x.grad is not None:
        x.grad = None
    loss = loss_fn()
    (analytic,) = torch.autograd.grad(loss, x)
    if not isinstance(x, torch.nn.Parameter):
        x.requires_grad_(False)
    numeric = fd_gradient(loss_fn, storage)
    return rel_error(analytic, numeric)
