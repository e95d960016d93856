"""Network architecture for partial-to-whole channel prediction.

Three subnetworks plus an optional recurrent head:

- BasisFeatureNet turns a cell's basis planes into a 2-plane feature map the
  size of the observed channel: conv/pool front end, a small transformer
  encoder over the pooled grid, transposed-conv upsampling.
- InitialReconNet unrolls a fixed number of proximal-gradient iterations
  with a learned stepsize (one conv) and a learned proximal map (two convs)
  per iteration.
- DualInputNet concatenates the initial reconstruction with the basis
  features and refines through residual blocks.
- PixelLstm predicts the next initial reconstruction from a history of T of
  them, one shared-weight LSTM applied per spatial position.

Convolutions are followed by batch normalization, except final layers that
are zero-initialized: those make every untrained refinement an exact
identity on its residual path, so the untrained network reproduces its
zero-filled input and the untrained recurrent head holds the last step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ConfigError, ShapeError


@dataclass
class NetConfig:
    """Architecture and training hyperparameters."""

    m_t: int = 32
    n_sc: int = 32
    n_b: int = 15
    width: int = 32
    unroll: int = 2          # proximal iterations
    tx_layers: int = 2
    tx_heads: int = 4
    lstm_hidden: int = 64
    history: int = 4         # recurrent input length T
    leaky_slope: float = 0.0005
    lambda1: float = 0.7
    lambda2: float = 0.3
    lr_eb: float = 0.0006
    lr_recon: float = 0.0004
    lr_lstm: float = 0.0003
    lr_finetune: float = 0.00005
    batch_size: int = 32
    epochs_present: int = 200
    epochs_stage1: int = 100
    epochs_stage2: int = 50
    patience: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.unroll < 1:
            raise ConfigError(f"unroll must be >= 1, got {self.unroll}")
        if self.history < 1:
            raise ConfigError(f"history must be >= 1, got {self.history}")
        for name in ("m_t", "n_sc", "n_b", "width", "tx_layers", "tx_heads",
                     "lstm_hidden", "batch_size", "epochs_present",
                     "epochs_stage1", "epochs_stage2", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.m_t % 2 or self.n_sc % 2:
            raise ConfigError("m_t and n_sc must be even for the pooling stage")
        if self.width % self.tx_heads:
            raise ConfigError("width must be divisible by tx_heads")
        for name in ("lr_eb", "lr_recon", "lr_lstm", "lr_finetune",
                     "leaky_slope"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be nonnegative")


def _zero_init(conv: nn.Module) -> nn.Module:
    nn.init.zeros_(conv.weight)
    if conv.bias is not None:
        nn.init.zeros_(conv.bias)
    return conv


class BasisFeatureNet(nn.Module):
    """Cell basis planes (2*n_b, m, n) -> feature planes (2, m, n)."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        w = cfg.width
        act = nn.LeakyReLU(cfg.leaky_slope)
        self.front = nn.Sequential(
            nn.Conv2d(2 * cfg.n_b, w, 3, padding=1), nn.BatchNorm2d(w), act,
            nn.Conv2d(w, w, 3, padding=1), nn.BatchNorm2d(w), act,
            nn.AvgPool2d(2),
        )
        layer = nn.TransformerEncoderLayer(
            d_model=w, nhead=cfg.tx_heads, dim_feedforward=2 * w,
            dropout=0.0, batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=cfg.tx_layers)
        self.up = nn.Sequential(
            nn.ConvTranspose2d(w, w, 4, stride=2, padding=1),
            nn.BatchNorm2d(w), act,
        )
        self.out = nn.Conv2d(w, 2, 3, padding=1)

    def forward(self, eb: torch.Tensor) -> torch.Tensor:
        if eb.ndim != 4:
            raise ShapeError(f"expected (batch, planes, m, n), got {tuple(eb.shape)}")
        x = self.front(eb)
        b, c, m, n = x.shape
        tokens = x.flatten(2).transpose(1, 2)  # (b, m*n, c)
        tokens = self.encoder(tokens)
        x = tokens.transpose(1, 2).reshape(b, c, m, n)
        return self.out(self.up(x))


class _ProxStep(nn.Module):
    """One unrolled iteration: learned stepsize then learned proximal map.

    Proximal kernels reach 4 subcarriers to each side so sparse pilot combs
    fall inside the receptive field after one iteration.
    """

    def __init__(self, cfg: NetConfig):
        super().__init__()
        w = cfg.width
        self.alpha = _zero_init(nn.Conv2d(2, 2, 3, padding=1))
        self.prox_in = nn.Sequential(
            nn.Conv2d(2, w, (3, 9), padding=(1, 4)), nn.BatchNorm2d(w),
            nn.LeakyReLU(cfg.leaky_slope),
        )
        self.prox_out = _zero_init(nn.Conv2d(w, 2, (3, 9), padding=(1, 4)))

    def forward(self, h, h0, mask):
        h = h - self.alpha(mask * h - h0)
        return h + self.prox_out(self.prox_in(h))


class InitialReconNet(nn.Module):
    """Unrolled proximal-gradient completion of a masked channel."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.steps = nn.ModuleList(_ProxStep(cfg) for _ in range(cfg.unroll))

    def forward(self, h0: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if h0.ndim != 4 or h0.shape[1] != 2:
            raise ShapeError(f"expected (batch, 2, m, n), got {tuple(h0.shape)}")
        if mask.shape[-2:] != h0.shape[-2:]:
            raise ShapeError(
                f"mask {tuple(mask.shape)} does not align with {tuple(h0.shape)}")
        h = h0
        for step in self.steps:
            h = step(h, h0, mask)
        return h


class _ResBlock(nn.Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        w = cfg.width
        self.body = nn.Sequential(
            nn.Conv2d(w, w, 3, padding=1), nn.BatchNorm2d(w),
            nn.LeakyReLU(cfg.leaky_slope),
        )
        self.out = _zero_init(nn.Conv2d(w, w, 3, padding=1))

    def forward(self, x):
        return x + self.out(self.body(x))


class DualInputNet(nn.Module):
    """Fuse initial reconstruction with basis features; residual refinement."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        w = cfg.width
        self.head = nn.Sequential(
            nn.Conv2d(4, w, (3, 9), padding=(1, 4)), nn.BatchNorm2d(w),
            nn.LeakyReLU(cfg.leaky_slope),
        )
        self.blocks = nn.Sequential(_ResBlock(cfg), _ResBlock(cfg))
        self.tail = _zero_init(nn.Conv2d(w, 2, 3, padding=1))

    def forward(self, h_ini: torch.Tensor, f_b: torch.Tensor) -> torch.Tensor:
        if h_ini.shape != f_b.shape:
            raise ShapeError(
                f"inputs must align, got {tuple(h_ini.shape)} vs {tuple(f_b.shape)}")
        x = self.head(torch.cat([h_ini, f_b], dim=1))
        return h_ini + self.tail(self.blocks(x))


class PixelLstm(nn.Module):
    """Shared-weight LSTM over each spatial position's 2-plane time series."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.history = cfg.history
        self.lstm = nn.LSTM(input_size=2, hidden_size=cfg.lstm_hidden,
                            batch_first=True)
        self.out = _zero_init(nn.Linear(cfg.lstm_hidden, 2))

    def forward(self, h_seq: torch.Tensor) -> torch.Tensor:
        if h_seq.ndim != 5 or h_seq.shape[2] != 2:
            raise ShapeError(
                f"expected (batch, T, 2, m, n), got {tuple(h_seq.shape)}")
        b, t, _, m, n = h_seq.shape
        if t < self.history:
            raise ShapeError(f"history of {t} steps is shorter than {self.history}")
        # (b, t, 2, m, n) -> one length-t series of 2-vectors per pixel
        series = h_seq.permute(0, 3, 4, 1, 2).reshape(b * m * n, t, 2)
        encoded, _ = self.lstm(series)
        delta = self.out(encoded[:, -1])
        delta = delta.reshape(b, m, n, 2).permute(0, 3, 1, 2)
        return h_seq[:, -1] + delta


class PredictorNet(nn.Module):
    """Full predictor: feature, completion, and fusion subnets plus the
    recurrent head used only by the future task."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        self.eb_net = BasisFeatureNet(cfg)
        self.init_net = InitialReconNet(cfg)
        self.dual_net = DualInputNet(cfg)
        self.lstm = PixelLstm(cfg)

    def forward_present(self, h0, mask, eb):
        f_b = self.eb_net(eb)
        h_ini = self.init_net(h0, mask)
        return self.dual_net(h_ini, f_b)

    def forward_future(self, h0_seq, mask, eb):
        """Returns (present estimate at step T, future estimate at T+1)."""
        b, t = h0_seq.shape[0], h0_seq.shape[1]
        f_b = self.eb_net(eb)
        flat = h0_seq.reshape(b * t, *h0_seq.shape[2:])
        mask_rep = mask.repeat_interleave(t, dim=0)
        h_ini_seq = self.init_net(flat, mask_rep).reshape(b, t, *h0_seq.shape[2:])
        h_ini_next = self.lstm(h_ini_seq)
        present = self.dual_net(h_ini_seq[:, -1], f_b)
        future = self.dual_net(h_ini_next, f_b)
        return present, future

    def lstm_parameters(self):
        return list(self.lstm.parameters())

    def non_lstm_parameters(self):
        ids = {id(p) for p in self.lstm.parameters()}
        return [p for p in self.parameters() if id(p) not in ids]
