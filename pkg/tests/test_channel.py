"""Channel assembly tests.

The reference oracle builds the channel entry by entry with explicit Python
loops over antenna rows, columns, paths, and subcarriers, independent of the
vectorized implementation.
"""

import cmath
import math

import numpy as np
import pytest

from ebcast import (
    ArrayConfig,
    ChannelMatrix,
    InvalidInputError,
    OfdmConfig,
    PathParams,
    PathSet,
    channel_from_paths,
    flatten,
    steering_vector,
    unflatten,
)
from conftest import make_paths


def oracle_channel(paths, array, ofdm):
    """Loop-based channel assembly. Subcarrier index k runs 1..n_sc."""
    m_t = array.m_rows * array.m_cols
    n = ofdm.n_subcarriers
    h = np.zeros((m_t, n), dtype=np.complex128)
    powers, delays, phases, elevs, azims, _ = paths.as_arrays()
    for k in range(1, n + 1):
        for l in range(len(powers)):
            gain = math.sqrt(powers[l] / n) * cmath.exp(
                1j * (2.0 * math.pi * k * delays[l] * ofdm.bandwidth_hz / n
                      + phases[l]))
            for p in range(array.m_rows):
                for q in range(array.m_cols):
                    ph = (2.0 * math.pi * array.spacing_wavelengths
                          * (p * math.sin(elevs[l])
                             + q * math.cos(elevs[l]) * math.sin(azims[l])))
                    h[p * array.m_cols + q, k - 1] += gain * cmath.exp(1j * ph)
    return h


# ===================================================================
# steering vectors
# ===================================================================

def test_steering_boresight_all_ones(tiny_array):
    a = steering_vector(0.0, 0.0, tiny_array)
    np.testing.assert_allclose(a, np.ones(4, dtype=np.complex128), atol=1e-15)


def test_steering_hand_cases(tiny_array):
    # elevation pi/2: phase = pi * p, row-major flatten -> [1, 1, -1, -1]
    a = steering_vector(math.pi / 2, 0.0, tiny_array)
    np.testing.assert_allclose(a, [1, 1, -1, -1], atol=1e-12)
    # azimuth pi/2 at zero elevation: phase = pi * q -> [1, -1, 1, -1]
    a = steering_vector(0.0, math.pi / 2, tiny_array)
    np.testing.assert_allclose(a, [1, -1, 1, -1], atol=1e-12)


def test_steering_unit_modulus_and_first_entry(desk_array):
    rng = np.random.default_rng(11)
    for _ in range(20):
        el = rng.uniform(-math.pi / 2, math.pi / 2)
        az = rng.uniform(0.0, 2.0 * math.pi)
        a = steering_vector(el, az, desk_array)
        assert a.shape == (32,)
        np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
        # index (p=0, q=0) carries zero phase
        assert a[0] == pytest.approx(1.0)


def test_steering_domain_errors(tiny_array):
    with pytest.raises(InvalidInputError):
        steering_vector(2.0, 0.0, tiny_array)
    with pytest.raises(InvalidInputError):
        steering_vector(0.0, -0.5, tiny_array)
    with pytest.raises(InvalidInputError):
        steering_vector(0.0, 7.0, tiny_array)


# ===================================================================
# channel assembly vs loop oracle
# ===================================================================

def test_single_path_single_antenna_hand_value():
    array = ArrayConfig(m_rows=1, m_cols=1)
    ofdm = OfdmConfig(n_subcarriers=2, bandwidth_hz=25e6)
    tau = 2.0e-7
    psi = 0.3
    alpha = 0.5
    paths = PathSet(paths=(PathParams(power=alpha, delay_s=tau, phase_rad=psi,
                                      elevation_rad=0.0, azimuth_rad=0.0),))
    h = channel_from_paths(paths, array, ofdm)
    for k in (1, 2):
        expect = math.sqrt(alpha / 2.0) * cmath.exp(
            1j * (2.0 * math.pi * k * tau * 25e6 / 2.0 + psi))
        assert h.data[0, k - 1] == pytest.approx(expect, abs=1e-15)


def test_channel_matches_loop_oracle_tiny(tiny_array, tiny_ofdm):
    rng = np.random.default_rng(5)
    for _ in range(5):
        paths = make_paths(rng, int(rng.integers(1, 6)))
        expect = oracle_channel(paths, tiny_array, tiny_ofdm)
        got = channel_from_paths(paths, tiny_array, tiny_ofdm)
        np.testing.assert_allclose(got.data, expect, rtol=1e-12, atol=1e-14)


def test_channel_matches_loop_oracle_desk(desk_array, desk_ofdm):
    rng = np.random.default_rng(6)
    paths = make_paths(rng, 4)
    expect = oracle_channel(paths, desk_array, desk_ofdm)
    got = channel_from_paths(paths, desk_array, desk_ofdm)
    assert got.shape == (32, 32)
    np.testing.assert_allclose(got.data, expect, rtol=1e-12, atol=1e-14)


def test_channel_superposition(tiny_array, tiny_ofdm):
    # channel of the union of two path sets = sum of the two channels
    rng = np.random.default_rng(7)
    p1 = make_paths(rng, 3)
    p2 = make_paths(rng, 2)
    both = PathSet(paths=p1.paths + p2.paths)
    h1 = channel_from_paths(p1, tiny_array, tiny_ofdm).data
    h2 = channel_from_paths(p2, tiny_array, tiny_ofdm).data
    hb = channel_from_paths(both, tiny_array, tiny_ofdm).data
    np.testing.assert_allclose(hb, h1 + h2, rtol=1e-12, atol=1e-14)


# ===================================================================
# ChannelMatrix container
# ===================================================================

def test_channel_matrix_immutable_and_validated(tiny_array, tiny_ofdm):
    data = np.ones((4, 4), dtype=np.complex128)
    h = ChannelMatrix(data, tiny_array, tiny_ofdm)
    assert not h.data.flags.writeable
    with pytest.raises(InvalidInputError):
        ChannelMatrix(np.ones((3, 4), dtype=np.complex128), tiny_array, tiny_ofdm)
    bad = data.copy()
    bad[0, 0] = np.nan
    with pytest.raises(InvalidInputError):
        ChannelMatrix(bad, tiny_array, tiny_ofdm)


def test_channel_matrix_copies_input(tiny_array, tiny_ofdm):
    data = np.ones((4, 4), dtype=np.complex128)
    h = ChannelMatrix(data, tiny_array, tiny_ofdm)
    data[0, 0] = 99.0
    assert h.data[0, 0] == 1.0


# ===================================================================
# flatten / unflatten
# ===================================================================

def test_flatten_column_stacking_order(tiny_array, tiny_ofdm):
    # flat index k * m_t + i must address entry (i, k)
    data = (np.arange(16, dtype=np.float64).reshape(4, 4)
            + 0.0j)
    h = ChannelMatrix(data, tiny_array, tiny_ofdm)
    flat = flatten(h)
    assert flat.shape == (16,)
    for k in range(4):
        for i in range(4):
            assert flat[k * 4 + i] == data[i, k]


def test_unflatten_inverts_flatten(desk_array, desk_ofdm):
    rng = np.random.default_rng(9)
    data = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
    h = ChannelMatrix(data, desk_array, desk_ofdm)
    back = unflatten(flatten(h), desk_array, desk_ofdm)
    np.testing.assert_array_equal(back.data, h.data)


def test_unflatten_length_check(tiny_array, tiny_ofdm):
    with pytest.raises(InvalidInputError):
        unflatten(np.zeros(15, dtype=np.complex128), tiny_array, tiny_ofdm)


def test_flatten_accepts_plain_array():
    arr = np.arange(6, dtype=np.complex128).reshape(2, 3)
    np.testing.assert_array_equal(flatten(arr), arr.flatten(order="F"))


# ===================================================================
# path parameter validation
# ===================================================================

def test_path_params_domain_checks():
    ok = dict(power=1.0, delay_s=0.0, phase_rad=0.0,
              elevation_rad=0.0, azimuth_rad=0.0)
    PathParams(**ok)
    with pytest.raises(InvalidInputError):
        PathParams(**{**ok, "power": -1.0})
    with pytest.raises(InvalidInputError):
        PathParams(**{**ok, "delay_s": -1e-9})
    with pytest.raises(InvalidInputError):
        PathParams(**{**ok, "phase_rad": 7.0})
    with pytest.raises(InvalidInputError):
        PathParams(**{**ok, "elevation_rad": 2.0})
    with pytest.raises(InvalidInputError):
        PathParams(**{**ok, "azimuth_rad": -0.1})


def test_pathset_round_trip_arrays():
    rng = np.random.default_rng(13)
    ps = make_paths(rng, 4)
    rebuilt = PathSet.from_arrays(*ps.as_arrays())
    for a, b in zip(ps.as_arrays(), rebuilt.as_arrays()):
        np.testing.assert_array_equal(a, b)


def test_pathset_nonempty():
    with pytest.raises(InvalidInputError):
        PathSet(paths=())
