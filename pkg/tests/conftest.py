"""Shared fixtures: small scenes and geometry configs sized for fast tests."""

import numpy as np
import pytest

from ebcast import (
    ArrayConfig,
    OfdmConfig,
    PathParams,
    PathSet,
    SceneConfig,
    build_store,
    generate_scene,
)


@pytest.fixture(scope="session")
def desk_array():
    return ArrayConfig(m_rows=8, m_cols=4, spacing_wavelengths=0.5)


@pytest.fixture(scope="session")
def desk_ofdm():
    return OfdmConfig(n_subcarriers=32, bandwidth_hz=25e6)


@pytest.fixture(scope="session")
def tiny_array():
    return ArrayConfig(m_rows=2, m_cols=2, spacing_wavelengths=0.5)


@pytest.fixture(scope="session")
def tiny_ofdm():
    return OfdmConfig(n_subcarriers=4, bandwidth_hz=25e6)


@pytest.fixture(scope="session")
def small_scene():
    # 2 x 2 cells, frozen paths
    return generate_scene(SceneConfig(extent_m=10.0, grid_size_m=5.0, seed=3))


@pytest.fixture(scope="session")
def small_store(small_scene, desk_array, desk_ofdm):
    return build_store(small_scene, desk_array, desk_ofdm, n_basis=15)


def make_paths(rng, n_paths, doppler_scale=0.0):
    """Draw a valid PathSet with uniformly random parameters."""
    paths = []
    for _ in range(n_paths):
        paths.append(PathParams(
            power=float(rng.uniform(0.05, 2.0)),
            delay_s=float(rng.uniform(0.0, 1.2e-6)),
            phase_rad=float(rng.uniform(0.0, 2.0 * np.pi)),
            elevation_rad=float(rng.uniform(-np.pi / 2, np.pi / 2)),
            azimuth_rad=float(rng.uniform(0.0, 2.0 * np.pi)),
            doppler_rate_rad_s=float(rng.uniform(-1.0, 1.0) * doppler_scale),
        ))
    return PathSet(paths=tuple(paths))


@pytest.fixture
def paths_factory():
    return make_paths
