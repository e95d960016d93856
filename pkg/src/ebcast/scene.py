"""Frozen-path gridded scene: generation, serialization, per-location path lookup.

A scene is a square area split into square cells. Each cell owns a frozen
population of propagation paths drawn once from the scene seed; every
location inside a cell sees those same paths, re-phased by plane-wave
geometry relative to the cell's south-west corner and, optionally, perturbed
by a small intra-cell jitter. Doppler is a deterministic per-path linear
phase rotation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidInputError, OutOfBoundsError

SPEED_OF_LIGHT = 299_792_458.0
TWO_PI = 2.0 * math.pi

# Power spread of the per-cell log-uniform path power draw.
POWER_RANGE_DB = 20.0
# Dominant-path margin for line-of-sight cells: power >= 10x mean of the rest.
LOS_DOMINANCE = 10.0

SCENE_FORMAT = "ebcast-scene-v1"


@dataclass(frozen=True)
class PathParams:
    """One propagation path: gain, delay, phase, arrival angles, Doppler rate.

    Angles follow the planar-array convention: elevation in [-pi/2, pi/2],
    azimuth in [0, 2*pi). The phase is the path's carrier phase at the
    owning cell's anchor corner at time zero. The Doppler rate is a phase
    rate in rad/s applied linearly in time.
    """

    power: float
    delay_s: float
    phase_rad: float
    elevation_rad: float
    azimuth_rad: float
    doppler_rate_rad_s: float = 0.0

    def __post_init__(self):
        if not (self.power > 0.0 and math.isfinite(self.power)):
            raise InvalidInputError(f"path power must be positive, got {self.power}")
        if not (self.delay_s >= 0.0 and math.isfinite(self.delay_s)):
            raise InvalidInputError(f"path delay must be >= 0, got {self.delay_s}")
        if not 0.0 <= self.phase_rad < TWO_PI:
            raise InvalidInputError(f"path phase must lie in [0, 2*pi), got {self.phase_rad}")
        if not -math.pi / 2 <= self.elevation_rad <= math.pi / 2:
            raise InvalidInputError(
                f"elevation must lie in [-pi/2, pi/2], got {self.elevation_rad}"
            )
        if not 0.0 <= self.azimuth_rad < TWO_PI:
            raise InvalidInputError(f"azimuth must lie in [0, 2*pi), got {self.azimuth_rad}")
        if not math.isfinite(self.doppler_rate_rad_s):
            raise InvalidInputError("doppler rate must be finite")


@dataclass(frozen=True)
class PathSet:
    """An ordered, non-empty collection of paths feeding channel assembly."""

    paths: tuple[PathParams, ...]

    def __post_init__(self):
        if len(self.paths) == 0:
            raise InvalidInputError("a PathSet must contain at least one path")

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def __getitem__(self, i: int) -> PathParams:
        return self.paths[i]

    def as_arrays(self) -> tuple[np.ndarray, ...]:
        """Return (power, delay_s, phase_rad, elevation_rad, azimuth_rad,
        doppler_rate_rad_s) as float64 arrays of length len(self)."""
        cols = np.array(
            [
                (p.power, p.delay_s, p.phase_rad, p.elevation_rad, p.azimuth_rad,
                 p.doppler_rate_rad_s)
                for p in self.paths
            ],
            dtype=np.float64,
        )
        return tuple(cols[:, j].copy() for j in range(6))

    @staticmethod
    def from_arrays(power, delay_s, phase_rad, elevation_rad, azimuth_rad,
                    doppler_rate_rad_s) -> "PathSet":
        fields = [np.asarray(a, dtype=np.float64) for a in
                  (power, delay_s, phase_rad, elevation_rad, azimuth_rad,
                   doppler_rate_rad_s)]
        n = fields[0].shape[0]
        if any(f.shape != (n,) for f in fields):
            raise InvalidInputError("path parameter arrays must share one length")
        return PathSet(tuple(
            PathParams(*(float(f[i]) for f in fields)) for i in range(n)
        ))

    def with_phase_offsets(self, offsets: np.ndarray) -> "PathSet":
        """Rotate every path phase by the matching offset (wrapped to [0, 2*pi))."""
        off = np.asarray(offsets, dtype=np.float64)
        if off.shape != (len(self),):
            raise InvalidInputError("need one phase offset per path")
        arrs = list(self.as_arrays())
        arrs[2] = np.mod(arrs[2] + off, TWO_PI)
        return PathSet.from_arrays(*arrs)


@dataclass(frozen=True)
class SceneConfig:
    """Scene geometry, path-population law, and mobility parameters.

    extent_m must be an integer multiple of grid_size_m. Delays are drawn on
    a uniform grid of delay_window_s / delay_taps seconds (distinct taps per
    cell); powers are log-uniform over POWER_RANGE_DB. Doppler rates are
    uniform over +/- 2*pi * user_speed_mps * carrier_hz / c.
    """

    extent_m: float = 40.0
    grid_size_m: float = 5.0
    cell_path_count_range: tuple[int, int] = (3, 8)
    los_fraction: float = 0.4
    intra_cell_jitter: float = 0.0
    seed: int = 0
    carrier_hz: float = 6.5e9
    user_speed_mps: float = 3.0 / 3.6
    delay_window_s: float = 32 / 25e6
    delay_taps: int = 32

    def __post_init__(self):
        if not (self.extent_m > 0 and self.grid_size_m > 0):
            raise ConfigurationError("extent_m and grid_size_m must be positive")
        n = self.extent_m / self.grid_size_m
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise ConfigurationError(
                f"extent_m must be a positive integer multiple of grid_size_m "
                f"(got {self.extent_m} / {self.grid_size_m})"
            )
        lo, hi = self.cell_path_count_range
        if not (isinstance(lo, int) and isinstance(hi, int) and 1 <= lo <= hi):
            raise ConfigurationError(
                f"cell_path_count_range must satisfy 1 <= lo <= hi, got ({lo}, {hi})"
            )
        if not 0.0 <= self.los_fraction <= 1.0:
            raise ConfigurationError("los_fraction must lie in [0, 1]")
        if not (self.intra_cell_jitter >= 0.0 and math.isfinite(self.intra_cell_jitter)):
            raise ConfigurationError("intra_cell_jitter must be >= 0")
        if not (self.carrier_hz > 0 and self.user_speed_mps >= 0):
            raise ConfigurationError("carrier_hz must be > 0 and user_speed_mps >= 0")
        if not (self.delay_window_s > 0 and self.delay_taps >= 1):
            raise ConfigurationError("delay window must be positive with >= 1 taps")

    @property
    def n_cells_side(self) -> int:
        return int(round(self.extent_m / self.grid_size_m))

    @property
    def n_cells(self) -> int:
        return self.n_cells_side ** 2

    @property
    def max_doppler_rad_s(self) -> float:
        """Band edge of the Doppler phase-rate draw, 2*pi * v * f_c / c."""
        return TWO_PI * self.user_speed_mps * self.carrier_hz / SPEED_OF_LIGHT

    @property
    def delay_quantum_s(self) -> float:
        return self.delay_window_s / self.delay_taps


@dataclass(frozen=True)
class CellDescriptor:
    """One grid cell: id, LoS flag, corner coordinates, frozen path population.

    vertex_coords are ordered (SW, SE, NW, NE); the SW corner is the phase
    anchor for every location inside the cell. base_paths are sorted by
    descending power, so a LoS cell's dominant path sits at index 0.
    """

    cell_id: tuple[int, int]
    los: bool
    vertex_coords: tuple[tuple[float, float], ...]
    base_paths: PathSet

    def __post_init__(self):
        if len(self.vertex_coords) != 4:
            raise ConfigurationError("a cell must carry exactly 4 vertex coordinates")

    @property
    def anchor(self) -> tuple[float, float]:
        return self.vertex_coords[0]


@dataclass(frozen=True)
class SceneGrid:
    """A generated scene: config plus a row-major grid of cell descriptors."""

    config: SceneConfig
    cells: tuple[tuple[CellDescriptor, ...], ...]

    def __post_init__(self):
        n = self.config.n_cells_side
        if len(self.cells) != n or any(len(row) != n for row in self.cells):
            raise ConfigurationError("cell grid shape does not match the config")

    def cell(self, row: int, col: int) -> CellDescriptor:
        n = self.config.n_cells_side
        if not (0 <= row < n and 0 <= col < n):
            raise OutOfBoundsError(f"cell index ({row}, {col}) outside {n}x{n} grid")
        return self.cells[row][col]

    def cell_index_at(self, coords: tuple[float, float]) -> tuple[int, int]:
        """Map a coordinate to its containing cell (boundary points clamp
        toward the interior, so the top/right edges stay in range)."""
        x, y = float(coords[0]), float(coords[1])
        ext = self.config.extent_m
        if not (0.0 <= x <= ext and 0.0 <= y <= ext):
            raise OutOfBoundsError(f"coords ({x}, {y}) outside scene extent {ext}")
        n = self.config.n_cells_side
        col = min(int(x / self.config.grid_size_m), n - 1)
        row = min(int(y / self.config.grid_size_m), n - 1)
        return row, col

    def cell_at(self, coords: tuple[float, float]) -> CellDescriptor:
        row, col = self.cell_index_at(coords)
        return self.cells[row][col]

    def all_cells(self):
        for row in self.cells:
            yield from row


def _draw_cell_paths(rng: np.random.Generator, config: SceneConfig, los: bool) -> PathSet:
    lo, hi = config.cell_path_count_range
    n_paths = int(rng.integers(lo, hi + 1))
    replace = n_paths > config.delay_taps
    taps = rng.choice(config.delay_taps, size=n_paths, replace=replace)
    delays = taps.astype(np.float64) * config.delay_quantum_s
    powers = 10.0 ** rng.uniform(-POWER_RANGE_DB / 10.0, 0.0, n_paths)
    phases = rng.uniform(0.0, TWO_PI, n_paths)
    elevations = rng.uniform(-math.pi / 2, math.pi / 2, n_paths)
    azimuths = rng.uniform(0.0, TWO_PI, n_paths)
    wmax = config.max_doppler_rad_s
    doppler = rng.uniform(-wmax, wmax, n_paths)
    if los and n_paths > 1:
        rest = powers[1:]
        floor = max(LOS_DOMINANCE * float(rest.mean()), float(rest.max()))
        powers[0] = floor * rng.uniform(1.0, 2.0)
    order = np.argsort(-powers, kind="stable")
    return PathSet.from_arrays(
        powers[order], delays[order], phases[order],
        elevations[order], azimuths[order], doppler[order],
    )


def generate_scene(config: SceneConfig) -> SceneGrid:
    """Draw the frozen per-cell path populations for a scene config.

    Deterministic: the same config (seed included) always yields an
    identical scene. Each cell consumes an independent seeded stream, so
    changing one config field never reshuffles unrelated cells.
    """
    n = config.n_cells_side
    los_rng = np.random.default_rng([config.seed, 0])
    los_flags = los_rng.random((n, n)) < config.los_fraction
    g = config.grid_size_m
    rows = []
    for row in range(n):
        cells = []
        for col in range(n):
            cell_rng = np.random.default_rng([config.seed, 1, row, col])
            los = bool(los_flags[row, col])
            paths = _draw_cell_paths(cell_rng, config, los)
            x0, x1 = col * g, (col + 1) * g
            y0, y1 = row * g, (row + 1) * g
            vertices = ((x0, y0), (x1, y0), (x0, y1), (x1, y1))
            cells.append(CellDescriptor((row, col), los, vertices, paths))
        rows.append(tuple(cells))
    return SceneGrid(config, tuple(rows))


def _coord_bits(value: float) -> int:
    # Stable integer key for a float coordinate, used to seed jitter streams.
    return int(np.float64(value).view(np.uint64))


def cell_location_paths(scene: SceneGrid, cell_id: tuple[int, int],
                        coords: tuple[float, float], time_s: float = 0.0) -> PathSet:
    """Paths of a named cell evaluated at a coordinate and time.

    Skips containment lookup, so a shared grid corner can be evaluated
    against any of the cells that touch it. Phase per path is
    base + plane-wave offset from the cell anchor + doppler_rate * time,
    wrapped to [0, 2*pi). With zero jitter, coords == anchor and
    time_s == 0 reproduce the cell's base paths exactly.
    """
    if not math.isfinite(time_s):
        raise InvalidInputError("time_s must be finite")
    cell = scene.cell(*cell_id)
    config = scene.config
    power, delay, phase, elev, azim, dopp = cell.base_paths.as_arrays()

    jitter = config.intra_cell_jitter
    if jitter > 0.0:
        rng = np.random.default_rng(
            [config.seed, 2, cell_id[0], cell_id[1],
             _coord_bits(coords[0]), _coord_bits(coords[1])]
        )
        eps = rng.standard_normal((len(cell.base_paths), 3))
        delay = np.clip(delay * (1.0 + jitter * eps[:, 0]),
                        0.0, np.nextafter(config.delay_window_s, 0.0))
        elev = np.clip(elev + jitter * eps[:, 1], -math.pi / 2, math.pi / 2)
        azim = np.mod(azim + jitter * eps[:, 2], TWO_PI)

    ax, ay = cell.anchor
    dx = float(coords[0]) - ax
    dy = float(coords[1]) - ay
    k_c = TWO_PI * config.carrier_hz / SPEED_OF_LIGHT
    cos_el = np.cos(elev)
    plane = -k_c * (dx * cos_el * np.cos(azim) + dy * cos_el * np.sin(azim))
    phase = np.mod(phase + plane + dopp * time_s, TWO_PI)
    return PathSet.from_arrays(power, delay, phase, elev, azim, dopp)


def location_paths(scene: SceneGrid, coords: tuple[float, float],
                   time_s: float = 0.0) -> PathSet:
    """Paths seen by a user at coords/time; raises OutOfBoundsError outside
    the scene extent."""
    cell_id = scene.cell_index_at(coords)
    return cell_location_paths(scene, cell_id, coords, time_s)


def scene_to_dict(scene: SceneGrid) -> dict:
    config = scene.config
    return {
        "format": SCENE_FORMAT,
        "config": {
            "extent_m": config.extent_m,
            "grid_size_m": config.grid_size_m,
            "cell_path_count_range": list(config.cell_path_count_range),
            "los_fraction": config.los_fraction,
            "intra_cell_jitter": config.intra_cell_jitter,
            "seed": config.seed,
            "carrier_hz": config.carrier_hz,
            "user_speed_mps": config.user_speed_mps,
            "delay_window_s": config.delay_window_s,
            "delay_taps": config.delay_taps,
        },
        "generator": {
            "power_law": f"log-uniform over {POWER_RANGE_DB} dB",
            "los_dominance": LOS_DOMINANCE,
            "delay_law": "uniform tap grid, distinct taps per cell",
            "delay_quantum_s": config.delay_quantum_s,
            "doppler_law": "uniform phase-rate band",
            "max_doppler_rad_s": config.max_doppler_rad_s,
            "jitter_law": "gaussian on angles, multiplicative on delay",
        },
        "cells": [
            {
                "cell_id": list(cell.cell_id),
                "los": cell.los,
                "vertices": [list(v) for v in cell.vertex_coords],
                "paths": [
                    {
                        "power": p.power,
                        "delay_s": p.delay_s,
                        "phase_rad": p.phase_rad,
                        "elevation_rad": p.elevation_rad,
                        "azimuth_rad": p.azimuth_rad,
                        "doppler_rate_rad_s": p.doppler_rate_rad_s,
                    }
                    for p in cell.base_paths
                ],
            }
            for cell in scene.all_cells()
        ],
    }


def scene_from_dict(data: dict) -> SceneGrid:
    if data.get("format") != SCENE_FORMAT:
        raise InvalidInputError(f"not a scene document (format={data.get('format')!r})")
    cfg = dict(data["config"])
    cfg["cell_path_count_range"] = tuple(cfg["cell_path_count_range"])
    config = SceneConfig(**cfg)
    n = config.n_cells_side
    if len(data["cells"]) != n * n:
        raise InvalidInputError("cell list does not match the configured grid size")
    grid: list[list[CellDescriptor | None]] = [[None] * n for _ in range(n)]
    for entry in data["cells"]:
        row, col = entry["cell_id"]
        paths = PathSet(tuple(PathParams(**p) for p in entry["paths"]))
        vertices = tuple(tuple(v) for v in entry["vertices"])
        grid[row][col] = CellDescriptor((row, col), bool(entry["los"]), vertices, paths)
    if any(cell is None for row in grid for cell in row):
        raise InvalidInputError("cell list does not cover the whole grid")
    return SceneGrid(config, tuple(tuple(row) for row in grid))


def scene_json_bytes(scene: SceneGrid) -> bytes:
    """Canonical serialized form; identical scenes yield identical bytes."""
    text = json.dumps(scene_to_dict(scene), indent=2, sort_keys=True)
    return (text + "\n").encode("utf-8")


def save_scene(scene: SceneGrid, path: str | Path) -> None:
    Path(path).write_bytes(scene_json_bytes(scene))


def load_scene(path: str | Path) -> SceneGrid:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))
