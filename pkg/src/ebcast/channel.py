"""Space-frequency channel assembly on a uniform planar array.

The channel of one location is an (m_t, n_subcarriers) complex matrix whose
column k (1-based subcarrier index) is

    h[k] = sum_l sqrt(power_l / n_sc) * exp(j*(2*pi*k*delay_l*B/n_sc + phase_l))
           * steering(elevation_l, azimuth_l)

with B the bandwidth and steering the unit-modulus planar-array response.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .scene import TWO_PI, PathSet


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform planar array: m_rows x m_cols elements, spacing in wavelengths.

    Elements are indexed row-major: flat index = p * m_cols + q for row p,
    column q.
    """

    m_rows: int = 8
    m_cols: int = 4
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if not (isinstance(self.m_rows, int) and isinstance(self.m_cols, int)
                and self.m_rows >= 1 and self.m_cols >= 1):
            raise ConfigurationError("array dimensions must be integers >= 1")
        if not (self.spacing_wavelengths > 0 and math.isfinite(self.spacing_wavelengths)):
            raise ConfigurationError("element spacing must be positive")

    @property
    def m_t(self) -> int:
        return self.m_rows * self.m_cols


@dataclass(frozen=True)
class OfdmConfig:
    n_subcarriers: int = 32
    bandwidth_hz: float = 25e6

    def __post_init__(self):
        if not (isinstance(self.n_subcarriers, int) and self.n_subcarriers >= 1):
            raise ConfigurationError("n_subcarriers must be an integer >= 1")
        if not (self.bandwidth_hz > 0 and math.isfinite(self.bandwidth_hz)):
            raise ConfigurationError("bandwidth_hz must be positive")

    @property
    def resolvable_window_s(self) -> float:
        """Delay span n_sc / B that the phase model resolves without aliasing."""
        return self.n_subcarriers / self.bandwidth_hz


def steering_vector(elevation_rad: float, azimuth_rad: float,
                    array: ArrayConfig) -> np.ndarray:
    """Planar-array response, flat length m_t, unit-modulus entries.

    Element (p, q) carries phase
    2*pi*spacing*(p*sin(elevation) + q*cos(elevation)*sin(azimuth)).
    """
    if not -math.pi / 2 <= elevation_rad <= math.pi / 2:
        raise InvalidInputError(f"elevation must lie in [-pi/2, pi/2], got {elevation_rad}")
    if not 0.0 <= azimuth_rad < TWO_PI:
        raise InvalidInputError(f"azimuth must lie in [0, 2*pi), got {azimuth_rad}")
    return _steering_matrix(
        np.array([elevation_rad]), np.array([azimuth_rad]), array
    )[:, 0]


def _steering_matrix(elev: np.ndarray, azim: np.ndarray,
                     array: ArrayConfig) -> np.ndarray:
    # (m_t, n_paths) stack of steering vectors; inputs pre-validated.
    p = np.arange(array.m_rows, dtype=np.float64)[:, None, None]
    q = np.arange(array.m_cols, dtype=np.float64)[None, :, None]
    sin_el = np.sin(elev)[None, None, :]
    proj = np.cos(elev) * np.sin(azim)
    phase = TWO_PI * array.spacing_wavelengths * (p * sin_el + q * proj[None, None, :])
    return np.exp(1j * phase).reshape(array.m_t, elev.shape[0])


@dataclass(frozen=True)
class ChannelMatrix:
    """Read-only (m_t, n_subcarriers) complex channel with optional origin
    metadata (scene coordinates and sample time)."""

    data: np.ndarray
    array: ArrayConfig
    ofdm: OfdmConfig
    coords: tuple[float, float] | None = None
    time_s: float | None = None

    def __post_init__(self):
        # copy defensively: freezing must never lock the caller's buffer
        data = np.array(self.data, dtype=np.complex128, order="C")
        expected = (self.array.m_t, self.ofdm.n_subcarriers)
        if data.shape != expected:
            raise InvalidInputError(
                f"channel data shape {data.shape} does not match config {expected}"
            )
        if not np.all(np.isfinite(data.view(np.float64))):
            raise InvalidInputError("channel data must be finite")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def n_flat(self) -> int:
        return self.data.size

    def with_data(self, data: np.ndarray) -> "ChannelMatrix":
        """Same metadata, new entries."""
        return ChannelMatrix(data, self.array, self.ofdm, self.coords, self.time_s)


def channel_from_paths(paths: PathSet, array: ArrayConfig, ofdm: OfdmConfig,
                       coords: tuple[float, float] | None = None,
                       time_s: float | None = None) -> ChannelMatrix:
    """Assemble the space-frequency matrix of a path set.

    Subcarrier indices run 1..n_subcarriers in the phase term. Delays are
    used verbatim; delays at or beyond resolvable_window_s alias.
    """
    power, delay, phase, elev, azim, _ = paths.as_arrays()
    a_mat = _steering_matrix(elev, azim, array)
    n_sc = ofdm.n_subcarriers
    k = np.arange(1, n_sc + 1, dtype=np.float64)
    col_phase = TWO_PI * np.outer(delay * ofdm.bandwidth_hz / n_sc, k) + phase[:, None]
    gains = np.sqrt(power / n_sc)[:, None] * np.exp(1j * col_phase)
    return ChannelMatrix(a_mat @ gains, array, ofdm, coords=coords, time_s=time_s)


def flatten(h: ChannelMatrix | np.ndarray) -> np.ndarray:
    """Stack the per-subcarrier columns into one length m_t*n_sc vector
    (column k occupies entries [k*m_t, (k+1)*m_t))."""
    data = h.data if isinstance(h, ChannelMatrix) else np.asarray(h)
    if data.ndim != 2:
        raise InvalidInputError(f"expected a 2-D channel, got shape {data.shape}")
    return data.flatten(order="F")


def unflatten(h_flat: np.ndarray, array: ArrayConfig, ofdm: OfdmConfig,
              coords: tuple[float, float] | None = None,
              time_s: float | None = None) -> ChannelMatrix:
    """Inverse of flatten; unflatten(flatten(H)) reproduces H exactly."""
    vec = np.asarray(h_flat)
    expected = array.m_t * ofdm.n_subcarriers
    if vec.shape != (expected,):
        raise InvalidInputError(
            f"flat channel length {vec.shape} does not match config ({expected},)"
        )
    data = vec.reshape((array.m_t, ofdm.n_subcarriers), order="F")
    return ChannelMatrix(data, array, ofdm, coords=coords, time_s=time_s)
