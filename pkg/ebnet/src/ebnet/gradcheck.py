"""Finite-difference gradient verification for the subnetworks.

Central differences in float64 against autograd, on tiny 4x4 configurations.
Models are checked in eval mode (fixed normalization statistics) with
parameters randomly perturbed away from their zero initializations so every
path carries signal.
"""

from __future__ import annotations

import numpy as np
import torch

from .model import (BasisFeatureNet, DualInputNet, InitialReconNet, NetConfig,
                    PixelLstm)


def toy_config(seed: int = 0) -> NetConfig:
    return NetConfig(m_t=4, n_sc=4, n_b=2, width=8, tx_heads=2,
                     lstm_hidden=8, history=2, seed=seed)


def _perturb(model: torch.nn.Module, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(0.05 * torch.randn(p.shape, generator=gen, dtype=p.dtype))


def finite_difference_grad(fn, x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Central-difference gradient of scalar fn at x, one coordinate at a time."""
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = fn(x)
        flat[i] = orig - eps
        lo = fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def max_relative_error(auto: torch.Tensor, fd: torch.Tensor) -> float:
    """Worst per-coordinate relative gap, with an absolute floor tied to the
    gradient's overall scale so structurally-zero entries do not divide by
    zero."""
    a = auto.detach().reshape(-1).numpy()
    b = fd.detach().reshape(-1).numpy()
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6 * scale)
    return float(np.max(np.abs(a - b) / denom))


def _check(fn, x: torch.Tensor) -> float:
    x = x.detach().clone().requires_grad_(True)
    value = fn(x)
    (auto,) = torch.autograd.grad(value, x)
    fd = finite_difference_grad(lambda t: fn(t).item(), x.detach().clone())
    return max_relative_error(auto, fd)


def check_all_subnets(seed: int = 0) -> dict[str, float]:
    """Max relative autograd-vs-finite-difference error per subnet, for the
    gradient with respect to the subnet input."""
    cfg = toy_config(seed)
    gen = torch.Generator().manual_seed(seed + 1)

    def rand(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float64)

    # fixed projection makes the output a generic scalar
    proj = rand(1, 2, cfg.m_t, cfg.n_sc)
    results = {}

    eb_net = BasisFeatureNet(cfg).double()
    _perturb(eb_net, seed + 2)
    eb_net.eval()
    eb = rand(1, 2 * cfg.n_b, cfg.m_t, cfg.n_sc)
    results["eb_feature"] = _check(lambda x: (eb_net(x) * proj).sum(), eb)

    init_net = InitialReconNet(cfg).double()
    _perturb(init_net, seed + 3)
    init_net.eval()
    mask = (rand(1, 1, cfg.m_t, cfg.n_sc) > 0).double()
    h0 = rand(1, 2, cfg.m_t, cfg.n_sc) * mask
    results["initial_recon"] = _check(
        lambda x: (init_net(x, mask) * proj).sum(), h0)

    dual_net = DualInputNet(cfg).double()
    _perturb(dual_net, seed + 4)
    dual_net.eval()
    f_b = rand(1, 2, cfg.m_t, cfg.n_sc)
    h_ini = rand(1, 2, cfg.m_t, cfg.n_sc)
    results["dual_input"] = _check(
        lambda x: (dual_net(x, f_b) * proj).sum(), h_ini)

    lstm = PixelLstm(cfg).double()
    _perturb(lstm, seed + 5)
    lstm.eval()
    seq = rand(1, cfg.history, 2, cfg.m_t, cfg.n_sc)
    results["recurrent_head"] = _check(lambda x: (lstm(x) * proj).sum(), seq)
    return results


def check_parameter_gradients(seed: int = 0) -> dict[str, float]:
    """Same comparison for a small parameter tensor of each subnet."""
    cfg = toy_config(seed)
    gen = torch.Generator().manual_seed(seed + 11)

    def rand(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float64)

    proj = rand(1, 2, cfg.m_t, cfg.n_sc)
    results = {}

    def check_param(model, named, loss_fn):
        param = dict(model.named_parameters())[named]
        loss = loss_fn()
        (auto,) = torch.autograd.grad(loss, param)
        with torch.no_grad():
            fd = torch.zeros_like(param)
            flat = param.reshape(-1)
            fdflat = fd.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + 1e-6
                hi = loss_fn().item()
                flat[i] = orig - 1e-6
                lo = loss_fn().item()
                flat[i] = orig
                fdflat[i] = (hi - lo) / 2e-6
        return max_relative_error(auto, fd)

    eb_net = BasisFeatureNet(cfg).double()
    _perturb(eb_net, seed + 12)
    eb_net.eval()
    eb = rand(1, 2 * cfg.n_b, cfg.m_t, cfg.n_sc)
    results["eb_feature"] = check_param(
        eb_net, "out.bias", lambda: (eb_net(eb) * proj).sum())

    init_net = InitialReconNet(cfg).double()
    _perturb(init_net, seed + 13)
    init_net.eval()
    mask = (rand(1, 1, cfg.m_t, cfg.n_sc) > 0).double()
    h0 = rand(1, 2, cfg.m_t, cfg.n_sc) * mask
    results["initial_recon"] = check_param(
        init_net, "steps.0.alpha.bias",
        lambda: (init_net(h0, mask) * proj).sum())

    dual_net = DualInputNet(cfg).double()
    _perturb(dual_net, seed + 14)
    dual_net.eval()
    f_b = rand(1, 2, cfg.m_t, cfg.n_sc)
    h_ini = rand(1, 2, cfg.m_t, cfg.n_sc)
    results["dual_input"] = check_param(
        dual_net, "tail.bias", lambda: (dual_net(h_ini, f_b) * proj).sum())
    return results
