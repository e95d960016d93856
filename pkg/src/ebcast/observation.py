"""Partial observation of a channel: pilot masks, noise, interference."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .channel import ChannelMatrix
from .errors import InvalidInputError

MASK_PATTERNS = ("comb", "random")


def round_half_up(x) -> int:
    """Round to nearest integer with ties going up (0.5 -> 1, 6.5 -> 7)."""
    if isinstance(x, Fraction):
        return int((2 * x + 1) // 2)
    return int(math.floor(float(x) + 0.5))


@dataclass(frozen=True)
class ObservationMask:
    """Binary (m_t, n_sc) pilot mask with exactly n_pilot ones per row."""

    data: np.ndarray
    n_pilot: int
    pattern: str

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, order="C")
        if data.ndim != 2:
            raise InvalidInputError("mask must be a 2-D matrix")
        if not np.all((data == 0.0) | (data == 1.0)):
            raise InvalidInputError("mask entries must be 0 or 1")
        if not np.all(data.sum(axis=1) == self.n_pilot):
            raise InvalidInputError(f"every mask row must hold {self.n_pilot} ones")
        if self.pattern not in MASK_PATTERNS:
            raise InvalidInputError(f"unknown mask pattern {self.pattern!r}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def flat_bool(self) -> np.ndarray:
        """Column-stacked boolean support, aligned with channel.flatten."""
        return self.data.astype(bool).flatten(order="F")


def make_mask(m_t: int, n_sc: int, pilot_ratio=None, n_pilot: int | None = None,
              pattern: str = "comb", seed: int = 0) -> ObservationMask:
    """Build a pilot mask from a ratio (rounded half-up to a column count) or
    an explicit per-row pilot count.

    comb: the same evenly spaced columns floor(i * n_sc / n_pilot) in every
    row, seed ignored. random: per-row independent column draws without
    replacement.
    """
    if (pilot_ratio is None) == (n_pilot is None):
        raise InvalidInputError("pass exactly one of pilot_ratio or n_pilot")
    if pilot_ratio is not None:
        if isinstance(pilot_ratio, Fraction):
            n_pilot = round_half_up(pilot_ratio * n_sc)
        else:
            ratio = float(pilot_ratio)
            if not 0.0 < ratio <= 1.0:
                raise InvalidInputError(f"pilot_ratio must lie in (0, 1], got {ratio}")
            n_pilot = round_half_up(ratio * n_sc)
    if not 1 <= n_pilot <= n_sc:
        raise InvalidInputError(
            f"pilot count {n_pilot} outside [1, {n_sc}] for {n_sc} subcarriers"
        )
    data = np.zeros((m_t, n_sc))
    if pattern == "comb":
        cols = [(i * n_sc) // n_pilot for i in range(n_pilot)]
        data[:, cols] = 1.0
    elif pattern == "random":
        rng = np.random.default_rng(seed)
        for row in range(m_t):
            data[row, rng.choice(n_sc, size=n_pilot, replace=False)] = 1.0
    else:
        raise InvalidInputError(f"unknown mask pattern {pattern!r}")
    return ObservationMask(data, n_pilot, pattern)


def observe(h: ChannelMatrix, mask: ObservationMask) -> ChannelMatrix:
    """Entrywise product with the mask: unsampled entries become exact zeros."""
    if mask.shape != h.shape:
        raise InvalidInputError(f"mask shape {mask.shape} != channel shape {h.shape}")
    return h.with_data(h.data * mask.data)


@dataclass(frozen=True)
class NoiseSpec:
    """Complex white Gaussian corruption level. snr_db = +inf disables noise.

    The seed may be an int or a tuple of ints (a seed path)."""

    snr_db: float = math.inf
    seed: int | tuple[int, ...] = 0

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise InvalidInputError(f"snr_db must be finite or +inf, got {self.snr_db}")


def noise_variance(h: ChannelMatrix | np.ndarray, snr_db: float) -> float:
    """Per-entry noise variance putting the matrix at snr_db:
    sigma^2 = mean(|H|^2) * 10^(-snr_db/10)."""
    data = h.data if isinstance(h, ChannelMatrix) else np.asarray(h)
    mean_power = float(np.mean(np.abs(data) ** 2))
    if mean_power == 0.0:
        raise InvalidInputError("cannot reference noise power to an all-zero matrix")
    if snr_db == math.inf:
        return 0.0
    if not math.isfinite(snr_db):
        raise InvalidInputError(f"snr_db must be finite or +inf, got {snr_db}")
    return mean_power * 10.0 ** (-snr_db / 10.0)


def add_noise(h: ChannelMatrix, spec: NoiseSpec) -> ChannelMatrix:
    """Add circular complex Gaussian noise at the spec's SNR; at +inf SNR the
    input is returned unchanged. Deterministic in (spec.seed, h)."""
    if spec.snr_db == math.inf:
        return h
    sigma2 = noise_variance(h, spec.snr_db)
    rng = np.random.default_rng(spec.seed)
    scale = math.sqrt(sigma2 / 2.0)
    noise = scale * rng.standard_normal(h.shape) + 1j * scale * rng.standard_normal(h.shape)
    return h.with_data(h.data + noise)


def mix_interference(h_main: ChannelMatrix, h_other: ChannelMatrix,
                     strength: float) -> ChannelMatrix:
    """Superpose a scaled interfering channel: H + strength * H_other,
    strength in [0, 1]."""
    if h_other.shape != h_main.shape:
        raise InvalidInputError(
            f"interferer shape {h_other.shape} != channel shape {h_main.shape}"
        )
    if not 0.0 <= strength <= 1.0:
        raise InvalidInputError(f"interference strength must lie in [0, 1], got {strength}")
    return h_main.with_data(h_main.data + strength * h_other.data)
