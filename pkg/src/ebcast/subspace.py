"""Environment-specific basis extraction from cell-vertex snapshots.

Each cell contributes 40 flattened channel snapshots: its 4 corners sampled
at 10 Doppler times (0..360 ms, 40 ms apart). The basis is the set of
leading left singular vectors of the stacked snapshot matrix, which equals
the leading eigenvectors of the sample autocorrelation; stored singular
values are the squared stack singular values so they match that
autocorrelation's spectrum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensorio
from .channel import ArrayConfig, ChannelMatrix, OfdmConfig, channel_from_paths, flatten
from .errors import InvalidInputError, OutOfBoundsError, StoreIntegrityError
from .observation import NoiseSpec, add_noise
from .scene import TWO_PI, SceneGrid, cell_location_paths, scene_from_dict, scene_to_dict

SNAPSHOT_TIMES_S: tuple[float, ...] = tuple(j * 0.04 for j in range(10))
N_VERTICES = 4
N_SNAPSHOTS = N_VERTICES * len(SNAPSHOT_TIMES_S)

DOPPLER_MODES = ("trajectory", "independent")

DEFAULT_N_BASIS = 15
DEFAULT_ENERGY_THRESHOLD = 0.95

STORE_FORMAT = "ebcast-ebstore-v1"


@dataclass(frozen=True)
class VertexSnapshotSet:
    """The 40 flattened vertex channels of one cell, vertex-major in time."""

    cell_id: tuple[int, int]
    snapshots: np.ndarray  # (N_SNAPSHOTS, n_flat) complex
    noisy: bool
    snr_db: float = math.inf

    def __post_init__(self):
        snaps = np.array(self.snapshots, dtype=np.complex128, order="C")
        if snaps.ndim != 2 or snaps.shape[0] != N_SNAPSHOTS:
            raise InvalidInputError(
                f"expected {N_SNAPSHOTS} snapshot rows, got shape {snaps.shape}"
            )
        snaps.flags.writeable = False
        object.__setattr__(self, "snapshots", snaps)

    @property
    def n_flat(self) -> int:
        return self.snapshots.shape[1]


def _child_seed(base, *path: int) -> tuple[int, ...]:
    if isinstance(base, (tuple, list)):
        return tuple(base) + tuple(path)
    return (base,) + tuple(path)


def collect_vertex_snapshots(scene: SceneGrid, cell_id: tuple[int, int],
                             array: ArrayConfig, ofdm: OfdmConfig,
                             noise: NoiseSpec | None = None,
                             doppler_mode: str = "trajectory") -> VertexSnapshotSet:
    """Evaluate a cell's 4 corner channels at the 10 snapshot times.

    trajectory mode rotates each path phase by doppler_rate * t; independent
    mode replaces that rotation with an i.i.d. uniform phase per snapshot
    (seeded from the scene seed), giving decorrelated realizations.
    """
    if doppler_mode not in DOPPLER_MODES:
        raise InvalidInputError(f"unknown doppler mode {doppler_mode!r}")
    cell = scene.cell(*cell_id)
    rows = []
    for v_idx, vertex in enumerate(cell.vertex_coords):
        for t_idx, t in enumerate(SNAPSHOT_TIMES_S):
            if doppler_mode == "trajectory":
                paths = cell_location_paths(scene, cell_id, vertex, t)
            else:
                paths = cell_location_paths(scene, cell_id, vertex, 0.0)
                rng = np.random.default_rng(
                    [scene.config.seed, 4, cell_id[0], cell_id[1], v_idx, t_idx]
                )
                paths = paths.with_phase_offsets(rng.uniform(0.0, TWO_PI, len(paths)))
            h = channel_from_paths(paths, array, ofdm, coords=vertex, time_s=t)
            if noise is not None and noise.snr_db != math.inf:
                h = add_noise(h, NoiseSpec(
                    noise.snr_db,
                    _child_seed(noise.seed, cell_id[0], cell_id[1], v_idx, t_idx),
                ))
            rows.append(flatten(h))
    noisy = noise is not None and noise.snr_db != math.inf
    return VertexSnapshotSet(
        cell_id, np.stack(rows), noisy, noise.snr_db if noisy else math.inf
    )


def energy_ratio(singular_values, alpha: int) -> float:
    """Fraction of spectrum energy captured by the leading alpha values.

    Input must be 1-D, non-negative, non-ascending, with a positive sum.
    The ratio is non-decreasing in alpha and exactly 1.0 at full length.
    """
    vals = np.asarray(singular_values, dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise InvalidInputError("singular values must form a non-empty 1-D array")
    if np.any(vals < 0.0):
        raise InvalidInputError("singular values must be non-negative")
    if np.any(np.diff(vals) > 1e-12 * max(float(vals[0]), 1e-300)):
        raise InvalidInputError("singular values must be sorted in descending order")
    total = float(vals.sum())
    if total <= 0.0:
        raise InvalidInputError("spectrum has zero total energy")
    if not (isinstance(alpha, (int, np.integer)) and 1 <= alpha <= vals.size):
        raise InvalidInputError(f"alpha must lie in [1, {vals.size}], got {alpha}")
    return float(vals[:alpha].sum()) / total


@dataclass(frozen=True)
class EbBasis:
    """Orthonormal basis of one cell's channel subspace.

    basis columns are phase-normalized (largest-magnitude entry real
    positive); singular_values is the full autocorrelation spectrum (squared
    stack singular values), not truncated to n_basis.
    """

    cell_id: tuple[int, int]
    basis: np.ndarray  # (n_flat, n_basis)
    singular_values: np.ndarray
    n_basis: int
    energy_threshold: float | None
    noisy: bool

    def __post_init__(self):
        mat = np.array(self.basis, dtype=np.complex128, order="C")
        if mat.ndim != 2 or mat.shape[1] != self.n_basis:
            raise InvalidInputError(
                f"basis shape {mat.shape} does not match n_basis={self.n_basis}"
            )
        vals = np.array(self.singular_values, dtype=np.float64, order="C")
        mat.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "basis", mat)
        object.__setattr__(self, "singular_values", vals)

    @property
    def n_flat(self) -> int:
        return self.basis.shape[0]

    @property
    def energy_captured(self) -> float:
        return energy_ratio(self.singular_values, self.n_basis)


def _normalize_column_phases(mat: np.ndarray) -> np.ndarray:
    # Rotate each column so its largest-magnitude entry is real positive;
    # removes the SVD's per-column phase ambiguity.
    idx = np.argmax(np.abs(mat), axis=0)
    pivots = mat[idx, np.arange(mat.shape[1])]
    mags = np.abs(pivots)
    phases = np.where(mags > 0.0, pivots / np.where(mags > 0.0, mags, 1.0), 1.0)
    return mat * np.conj(phases)[None, :]


def extract_eb(snapshots: VertexSnapshotSet, n_basis: int | None = None,
               energy_threshold: float | None = None) -> EbBasis:
    """Extract a cell basis from its snapshot set.

    Exactly one selection rule applies: a fixed column count n_basis, or the
    smallest count whose energy_ratio reaches energy_threshold. With neither
    given, n_basis defaults to DEFAULT_N_BASIS (capped by the spectrum
    length).
    """
    if n_basis is not None and energy_threshold is not None:
        raise InvalidInputError("pass n_basis or energy_threshold, not both")
    stack = snapshots.snapshots.T  # columns are snapshots, (n_flat, 40)
    u_full, s, _ = np.linalg.svd(stack, full_matrices=False)
    lam = s.astype(np.float64) ** 2
    max_rank = min(stack.shape)
    if energy_threshold is not None:
        if not 0.0 < energy_threshold <= 1.0:
            raise InvalidInputError(
                f"energy_threshold must lie in (0, 1], got {energy_threshold}"
            )
        total = float(lam.sum())
        if total <= 0.0:
            raise InvalidInputError("snapshot stack has zero energy")
        cum = np.cumsum(lam) / total
        n_basis = int(np.searchsorted(cum, energy_threshold - 1e-15) + 1)
    elif n_basis is None:
        n_basis = min(DEFAULT_N_BASIS, max_rank)
    if not 1 <= n_basis <= max_rank:
        raise InvalidInputError(f"n_basis must lie in [1, {max_rank}], got {n_basis}")
    basis = _normalize_column_phases(u_full[:, :n_basis])
    return EbBasis(snapshots.cell_id, basis, lam, int(n_basis),
                   energy_threshold, snapshots.noisy)


@dataclass(frozen=True)
class EbStore:
    """Per-cell bases for a whole scene plus the settings that produced them."""

    scene: SceneGrid
    array: ArrayConfig
    ofdm: OfdmConfig
    bases: dict[tuple[int, int], EbBasis]
    extraction: dict

    def basis(self, cell_id: tuple[int, int]) -> EbBasis:
        if cell_id not in self.bases:
            raise StoreIntegrityError(f"store holds no basis for cell {cell_id}")
        return self.bases[cell_id]


def build_store(scene: SceneGrid, array: ArrayConfig, ofdm: OfdmConfig,
                n_basis: int | None = DEFAULT_N_BASIS,
                energy_threshold: float | None = None,
                noise: NoiseSpec | None = None,
                doppler_mode: str = "trajectory") -> EbStore:
    """Extract one basis per scene cell. noise=None gives the ideal store;
    a finite NoiseSpec gives the noisy-snapshot variant."""
    if n_basis is not None and energy_threshold is not None:
        raise InvalidInputError("pass n_basis or energy_threshold, not both")
    bases = {}
    for cell in scene.all_cells():
        snaps = collect_vertex_snapshots(scene, cell.cell_id, array, ofdm,
                                         noise=noise, doppler_mode=doppler_mode)
        bases[cell.cell_id] = extract_eb(snaps, n_basis=n_basis,
                                         energy_threshold=energy_threshold)
    noisy = noise is not None and noise.snr_db != math.inf
    extraction = {
        "n_basis": n_basis,
        "energy_threshold": energy_threshold,
        "noisy": noisy,
        "snr_db": (noise.snr_db if noisy else None),
        "noise_seed": (list(_child_seed(noise.seed)) if noisy else None),
        "doppler_mode": doppler_mode,
    }
    return EbStore(scene, array, ofdm, bases, extraction)


def grid_lookup(store: EbStore, coords: tuple[float, float],
                loc_error_m: float = 0.0, seed: int | tuple[int, ...] = 0) -> EbBasis:
    """Basis of the cell containing coords, optionally after perturbing the
    reported position by loc_error_m meters in a seeded uniform direction
    (clamped back inside the scene)."""
    scene = store.scene
    x, y = float(coords[0]), float(coords[1])
    ext = scene.config.extent_m
    if not (0.0 <= x <= ext and 0.0 <= y <= ext):
        raise OutOfBoundsError(f"coords ({x}, {y}) outside scene extent {ext}")
    if loc_error_m < 0.0:
        raise InvalidInputError("loc_error_m must be >= 0")
    if loc_error_m > 0.0:
        rng = np.random.default_rng(seed)
        angle = rng.uniform(0.0, TWO_PI)
        x = min(max(x + loc_error_m * math.cos(angle), 0.0), ext)
        y = min(max(y + loc_error_m * math.sin(angle), 0.0), ext)
    return store.basis(scene.cell_index_at((x, y)))


def _cell_key(cell_id: tuple[int, int]) -> str:
    return f"{cell_id[0]},{cell_id[1]}"


def save_store(store: EbStore, path: str | Path) -> None:
    """Write the store as a directory: manifest.json plus one raw complex
    tensor per cell, checksummed."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    cells = {}
    for cell_id in sorted(store.bases):
        eb = store.bases[cell_id]
        fname = f"eb_r{cell_id[0]:03d}_c{cell_id[1]:03d}.bin"
        tensorio.write_tensor(root / fname, eb.basis)
        cells[_cell_key(cell_id)] = {
            "file": fname,
            "shape": list(eb.basis.shape),
            "n_basis": eb.n_basis,
            "energy_threshold": eb.energy_threshold,
            "noisy": eb.noisy,
            "singular_values": [float(v) for v in eb.singular_values],
            "sha256": tensorio.sha256_path(root / fname),
        }
    manifest = {
        "format": STORE_FORMAT,
        "scene": scene_to_dict(store.scene),
        "array": {
            "m_rows": store.array.m_rows,
            "m_cols": store.array.m_cols,
            "spacing_wavelengths": store.array.spacing_wavelengths,
        },
        "ofdm": {
            "n_subcarriers": store.ofdm.n_subcarriers,
            "bandwidth_hz": store.ofdm.bandwidth_hz,
        },
        "extraction": store.extraction,
        "cells": cells,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (root / "manifest.json").write_text(text, encoding="utf-8")


def load_store(path: str | Path) -> EbStore:
    """Load a saved store, verifying format, coverage, and checksums."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise StoreIntegrityError(f"{root}: missing manifest.json")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != STORE_FORMAT:
        raise StoreIntegrityError(
            f"{root}: unexpected store format {manifest.get('format')!r}"
        )
    scene = scene_from_dict(manifest["scene"])
    array = ArrayConfig(**manifest["array"])
    ofdm = OfdmConfig(**manifest["ofdm"])
    extraction = manifest["extraction"]
    bases = {}
    for cell in scene.all_cells():
        key = _cell_key(cell.cell_id)
        if key not in manifest["cells"]:
            raise StoreIntegrityError(f"{root}: no basis recorded for cell {key}")
        entry = manifest["cells"][key]
        fpath = root / entry["file"]
        if not fpath.is_file():
            raise StoreIntegrityError(f"{root}: missing basis file {entry['file']}")
        if tensorio.sha256_path(fpath) != entry["sha256"]:
            raise StoreIntegrityError(f"{root}: checksum mismatch for {entry['file']}")
        mat = tensorio.read_tensor(fpath, tuple(entry["shape"]), "c16")
        bases[cell.cell_id] = EbBasis(
            cell.cell_id, mat, np.asarray(entry["singular_values"], dtype=np.float64),
            int(entry["n_basis"]), entry["energy_threshold"], bool(entry["noisy"]),
        )
    return EbStore(scene, array, ofdm, bases, extraction)
