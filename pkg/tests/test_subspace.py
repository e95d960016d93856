"""Subspace extraction tests.

The extraction oracle takes the second route through the same linear
algebra: eigendecomposition of the explicit snapshot autocorrelation matrix,
compared to the SVD-based implementation through eigenvalues and principal
angles. Remaining groups cover snapshot collection order, energy ratios,
the store lifecycle, and cell lookup under localization error.
"""

import math

import numpy as np
import pytest

from ebcast import (
    InvalidInputError,
    NoiseSpec,
    OutOfBoundsError,
    SceneConfig,
    StoreIntegrityError,
    build_store,
    cell_location_paths,
    channel_from_paths,
    collect_vertex_snapshots,
    energy_ratio,
    extract_eb,
    flatten,
    generate_scene,
    grid_lookup,
    load_store,
    save_store,
)
from ebcast.subspace import (
    N_SNAPSHOTS,
    SNAPSHOT_TIMES_S,
    VertexSnapshotSet,
)


def make_snapshot_set(stack, cell_id=(0, 0)):
    return VertexSnapshotSet(cell_id=cell_id, snapshots=np.asarray(stack),
                             noisy=False, snr_db=math.inf)


# ===================================================================
# snapshot collection
# ===================================================================

def test_snapshot_times_grid():
    assert len(SNAPSHOT_TIMES_S) == 10
    np.testing.assert_allclose(SNAPSHOT_TIMES_S, np.arange(10) * 0.04, atol=1e-15)
    assert N_SNAPSHOTS == 40


def test_collect_order_is_vertex_major(small_scene, desk_array, desk_ofdm):
    snaps = collect_vertex_snapshots(small_scene, (0, 1), desk_array, desk_ofdm)
    assert snaps.snapshots.shape == (40, 32 * 32)
    cell = small_scene.cell(0, 1)
    for v_idx, vertex in enumerate(cell.vertex_coords):
        for t_idx, t in enumerate(SNAPSHOT_TIMES_S):
            paths = cell_location_paths(small_scene, (0, 1), vertex, t)
            expect = flatten(channel_from_paths(paths, desk_array, desk_ofdm))
            np.testing.assert_array_equal(
                snaps.snapshots[v_idx * 10 + t_idx], expect)


def test_frozen_cell_snapshots_have_path_limited_rank(small_scene, desk_array, desk_ofdm):
    # every snapshot is a scalar-weighted sum of the same per-path vectors,
    # so the stack rank cannot exceed the path count
    for cell in small_scene.all_cells():
        snaps = collect_vertex_snapshots(small_scene, cell.cell_id,
                                         desk_array, desk_ofdm)
        s = np.linalg.svd(snaps.snapshots.T, compute_uv=False)
        n_paths = len(cell.base_paths.paths)
        assert s[n_paths:].max(initial=0.0) < 1e-8 * s[0]


def test_noisy_collection_flags_and_differs(small_scene, desk_array, desk_ofdm):
    clean = collect_vertex_snapshots(small_scene, (0, 0), desk_array, desk_ofdm)
    noisy = collect_vertex_snapshots(small_scene, (0, 0), desk_array, desk_ofdm,
                                     noise=NoiseSpec(snr_db=5.0, seed=2))
    again = collect_vertex_snapshots(small_scene, (0, 0), desk_array, desk_ofdm,
                                     noise=NoiseSpec(snr_db=5.0, seed=2))
    assert not clean.noisy and noisy.noisy
    assert noisy.snr_db == 5.0
    assert not np.array_equal(clean.snapshots, noisy.snapshots)
    np.testing.assert_array_equal(noisy.snapshots, again.snapshots)


def test_independent_doppler_mode(small_scene, desk_array, desk_ofdm):
    a = collect_vertex_snapshots(small_scene, (1, 0), desk_array, desk_ofdm,
                                 doppler_mode="trajectory")
    b = collect_vertex_snapshots(small_scene, (1, 0), desk_array, desk_ofdm,
                                 doppler_mode="independent")
    assert a.snapshots.shape == b.snapshots.shape
    assert not np.array_equal(a.snapshots, b.snapshots)
    with pytest.raises(InvalidInputError):
        collect_vertex_snapshots(small_scene, (1, 0), desk_array, desk_ofdm,
                                 doppler_mode="orbit")


# ===================================================================
# energy ratio
# ===================================================================

def test_energy_ratio_hand_value():
    # hand arithmetic: (4+2)/(4+2+1+1) = 0.75
    assert energy_ratio([4.0, 2.0, 1.0, 1.0], 2) == pytest.approx(0.75)
    assert energy_ratio([3.0, 1.0], 1) == pytest.approx(0.75)
    assert energy_ratio([3.0, 1.0], 2) == 1.0


def test_energy_ratio_uniform_spectrum():
    assert energy_ratio([2.0, 2.0, 2.0, 2.0], 2) == pytest.approx(0.5)


def test_energy_ratio_full_is_exactly_one():
    rng = np.random.default_rng(2)
    for _ in range(50):
        s = np.sort(rng.uniform(0.0, 5.0, int(rng.integers(1, 12))))[::-1]
        assert energy_ratio(s, len(s)) == 1.0


def test_energy_ratio_nondecreasing():
    rng = np.random.default_rng(3)
    for _ in range(50):
        s = np.sort(rng.uniform(0.0, 5.0, 8))[::-1]
        ratios = [energy_ratio(s, a) for a in range(1, 9)]
        assert all(b >= a - 1e-15 for a, b in zip(ratios, ratios[1:]))


def test_energy_ratio_validation():
    with pytest.raises(InvalidInputError):
        energy_ratio([1.0, 2.0], 1)      # ascending
    with pytest.raises(InvalidInputError):
        energy_ratio([-1.0], 1)
    with pytest.raises(InvalidInputError):
        energy_ratio([2.0, 1.0], 0)
    with pytest.raises(InvalidInputError):
        energy_ratio([2.0, 1.0], 3)
    with pytest.raises(InvalidInputError):
        energy_ratio([0.0, 0.0], 1)


# ===================================================================
# extraction vs eigendecomposition oracle
# ===================================================================

def test_extract_matches_autocorrelation_eigendecomposition(small_scene, desk_array, desk_ofdm):
    snaps = collect_vertex_snapshots(small_scene, (1, 1), desk_array, desk_ofdm)
    stack = snaps.snapshots.T                      # (n_flat, 40)

    # oracle route: eigh of the explicit autocorrelation
    corr = stack @ stack.conj().T
    evals, evecs = np.linalg.eigh(corr)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]

    n_b = 6
    eb = extract_eb(snaps, n_basis=n_b)

    # the stored spectrum is the autocorrelation's: lambda_i = s_i^2
    np.testing.assert_allclose(eb.singular_values[:n_b], evals[:n_b],
                               rtol=1e-8)
    # principal angles between the two leading subspaces are all ~0
    overlap = np.linalg.svd(eb.basis.conj().T @ evecs[:, :n_b],
                            compute_uv=False)
    np.testing.assert_allclose(overlap, 1.0, atol=1e-8)


def test_rank_one_stack_spectrum():
    # 40 copies of a unit vector: lambda_1 = 40, the rest vanish, and the
    # single basis column equals the vector up to a global phase
    rng = np.random.default_rng(4)
    h = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    h = h / np.linalg.norm(h)
    snaps = make_snapshot_set(np.tile(h, (40, 1)))
    eb = extract_eb(snaps, n_basis=1)
    assert eb.singular_values[0] == pytest.approx(40.0, rel=1e-10)
    assert eb.singular_values[1:].max() < 1e-10 * eb.singular_values[0]
    assert eb.energy_captured == pytest.approx(1.0)
    col = eb.basis[:, 0]
    phase = col[np.argmax(np.abs(h))] / h[np.argmax(np.abs(h))]
    np.testing.assert_allclose(col, h * phase, atol=1e-10)


def test_basis_orthonormal(small_store):
    for cell_id, eb in small_store.bases.items():
        gram = eb.basis.conj().T @ eb.basis
        np.testing.assert_allclose(gram, np.eye(eb.n_basis), atol=1e-10)


def test_column_phase_pivot_real_positive(small_store):
    for eb in small_store.bases.values():
        for j in range(eb.n_basis):
            col = eb.basis[:, j]
            piv = col[np.argmax(np.abs(col))]
            assert abs(piv.imag) < 1e-12 * abs(piv)
            assert piv.real > 0


def test_extraction_deterministic(small_scene, desk_array, desk_ofdm):
    snaps = collect_vertex_snapshots(small_scene, (0, 0), desk_array, desk_ofdm)
    a = extract_eb(snaps, n_basis=8)
    b = extract_eb(snaps, n_basis=8)
    assert a.basis.tobytes() == b.basis.tobytes()
    assert a.singular_values.tobytes() == b.singular_values.tobytes()


def test_energy_threshold_selects_minimal_alpha(small_scene, desk_array, desk_ofdm):
    snaps = collect_vertex_snapshots(small_scene, (0, 1), desk_array, desk_ofdm)
    thr = 0.9
    eb = extract_eb(snaps, energy_threshold=thr)
    # oracle: smallest alpha whose cumulative energy reaches the threshold
    s = np.linalg.svd(snaps.snapshots.T, compute_uv=False)
    energies = s ** 2
    cum = np.cumsum(energies) / np.sum(energies)
    expect = int(np.argmax(cum >= thr - 1e-15)) + 1
    assert eb.n_basis == expect
    assert eb.energy_captured >= thr - 1e-12


def test_extract_option_validation(small_scene, desk_array, desk_ofdm):
    snaps = collect_vertex_snapshots(small_scene, (0, 0), desk_array, desk_ofdm)
    with pytest.raises(InvalidInputError):
        extract_eb(snaps, n_basis=8, energy_threshold=0.9)
    with pytest.raises(InvalidInputError):
        extract_eb(snaps, n_basis=0)
    with pytest.raises(InvalidInputError):
        extract_eb(snaps, n_basis=41)
    with pytest.raises(InvalidInputError):
        extract_eb(snaps, energy_threshold=1.5)


def test_default_basis_size(small_scene, desk_array, desk_ofdm):
    snaps = collect_vertex_snapshots(small_scene, (0, 0), desk_array, desk_ofdm)
    assert extract_eb(snaps).n_basis == 15


def test_noisy_basis_flag_and_divergence(small_scene, desk_array, desk_ofdm):
    clean = extract_eb(collect_vertex_snapshots(
        small_scene, (0, 0), desk_array, desk_ofdm), n_basis=10)
    noisy = extract_eb(collect_vertex_snapshots(
        small_scene, (0, 0), desk_array, desk_ofdm,
        noise=NoiseSpec(snr_db=0.0, seed=1)), n_basis=10)
    assert not clean.noisy and noisy.noisy
    assert not np.array_equal(clean.basis, noisy.basis)


# ===================================================================
# store lifecycle
# ===================================================================

def test_store_covers_all_cells(small_store, small_scene):
    assert set(small_store.bases) == {c.cell_id for c in small_scene.all_cells()}
    with pytest.raises(StoreIntegrityError):
        small_store.basis((9, 9))


def test_store_save_load_round_trip(small_store, tmp_path):
    save_store(small_store, tmp_path / "store")
    loaded = load_store(tmp_path / "store")
    assert set(loaded.bases) == set(small_store.bases)
    for cid, eb in small_store.bases.items():
        got = loaded.basis(cid)
        np.testing.assert_array_equal(got.basis, eb.basis)
        np.testing.assert_array_equal(got.singular_values, eb.singular_values)
        assert got.noisy == eb.noisy
    assert loaded.extraction == small_store.extraction
    # the embedded scene regenerates identical geometry
    assert loaded.scene.config == small_store.scene.config


def test_store_detects_corruption(small_store, tmp_path):
    save_store(small_store, tmp_path / "store")
    victim = sorted((tmp_path / "store").glob("*.bin"))[0]
    raw = bytearray(victim.read_bytes())
    raw[8] ^= 0xFF
    victim.write_bytes(bytes(raw))
    with pytest.raises(StoreIntegrityError):
        load_store(tmp_path / "store")


def test_store_detects_missing_file(small_store, tmp_path):
    save_store(small_store, tmp_path / "store")
    sorted((tmp_path / "store").glob("*.bin"))[0].unlink()
    with pytest.raises(StoreIntegrityError):
        load_store(tmp_path / "store")


def test_load_missing_manifest(tmp_path):
    with pytest.raises(StoreIntegrityError):
        load_store(tmp_path / "nowhere")


# ===================================================================
# lookup under localization error
# ===================================================================

def test_lookup_exact_returns_true_cell(small_store, small_scene):
    eb = grid_lookup(small_store, (1.0, 1.0))
    assert eb.cell_id == (0, 0)
    eb = grid_lookup(small_store, (7.0, 2.0))
    assert eb.cell_id == (0, 1)


def test_lookup_out_of_bounds(small_store):
    with pytest.raises(OutOfBoundsError):
        grid_lookup(small_store, (50.0, 1.0))


def test_lookup_error_deterministic_and_bounded(small_store):
    a = grid_lookup(small_store, (6.0, 6.0), loc_error_m=4.0, seed=9)
    b = grid_lookup(small_store, (6.0, 6.0), loc_error_m=4.0, seed=9)
    assert a.cell_id == b.cell_id
    # offsets are clamped inside the extent, so lookup always resolves
    for s in range(25):
        eb = grid_lookup(small_store, (9.9, 9.9), loc_error_m=10.0, seed=s)
        assert eb.cell_id in small_store.bases


def test_lookup_error_moves_cells_sometimes(small_store):
    hits = {grid_lookup(small_store, (2.5, 2.5), loc_error_m=5.0, seed=s).cell_id
            for s in range(40)}
    assert len(hits) > 1


def test_lookup_zero_error_ignores_seed(small_store):
    a = grid_lookup(small_store, (1.0, 8.0), loc_error_m=0.0, seed=1)
    b = grid_lookup(small_store, (1.0, 8.0), loc_error_m=0.0, seed=2)
    assert a.cell_id == b.cell_id == (1, 0)
