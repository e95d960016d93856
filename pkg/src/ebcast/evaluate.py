"""Reconstruction metrics, robustness sweeps, and dataset export.

This module produces data only (records, summaries, binary datasets);
figure rendering lives in the CLI report path.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import tensorio
from .channel import (ArrayConfig, ChannelMatrix, OfdmConfig, channel_from_paths,
                      flatten)
from .errors import (EbcastError, ConfigurationError, InvalidInputError,
                     StoreIntegrityError)
from .observation import (NoiseSpec, add_noise, make_mask, mix_interference,
                          noise_variance, observe, round_half_up)
from .reconstruct import lmmse_fit, lmmse_reconstruct, project_reconstruct, zero_fill
from .scene import SceneGrid, cell_location_paths, location_paths, scene_json_bytes, scene_to_dict
from .subspace import build_store, collect_vertex_snapshots, grid_lookup, save_store

METHODS = ("IEB-PR", "EB-PR", "LMMSE", "zero-fill", "hold-last")
_METHOD_LOOKUP = {m.lower(): m for m in METHODS}

DATASET_FORMAT = "ebcast-dataset-v1"


# ---------------------------------------------------------------------------
# metrics


def _flat(h) -> np.ndarray:
    if isinstance(h, ChannelMatrix):
        return flatten(h)
    arr = np.asarray(h)
    return arr.flatten(order="F") if arr.ndim == 2 else arr


def cosine_similarity(h1, h2) -> float:
    """|<h1, h2>| / (||h1|| ||h2||) of the flattened channels, in [0, 1]."""
    v1, v2 = _flat(h1), _flat(h2)
    if v1.shape != v2.shape:
        raise InvalidInputError(f"shape mismatch {v1.shape} vs {v2.shape}")
    n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
    if n1 == 0.0 or n2 == 0.0:
        raise InvalidInputError("cosine similarity of a zero vector is undefined")
    return min(float(np.abs(np.vdot(v1, v2))) / float(n1 * n2), 1.0)


def nmse(h_true, h_hat) -> float:
    """||H - H_hat||_F^2 / ||H||_F^2."""
    t, e = _flat(h_true), _flat(h_hat)
    if t.shape != e.shape:
        raise InvalidInputError(f"shape mismatch {t.shape} vs {e.shape}")
    denom = float(np.sum(np.abs(t) ** 2))
    if denom == 0.0:
        raise InvalidInputError("NMSE is undefined for an all-zero reference")
    return float(np.sum(np.abs(t - e) ** 2)) / denom


def to_db(x: float) -> float:
    """10*log10(x); x must be positive."""
    if not x > 0.0:
        raise InvalidInputError(f"dB of a non-positive value ({x})")
    return 10.0 * math.log10(x)


def nmse_db(h_true, h_hat) -> float:
    return to_db(nmse(h_true, h_hat))


def achievable_rate(h_true, h_hat, sigma2: float) -> float:
    """Average over subcarriers of log2(1 + |h_hat_k^H h_k|^2 /
    (||h_hat_k||^2 * sigma2)), treating the estimate as the combiner."""
    if not sigma2 > 0.0:
        raise InvalidInputError(f"sigma2 must be positive, got {sigma2}")
    t = h_true.data if isinstance(h_true, ChannelMatrix) else np.asarray(h_true)
    e = h_hat.data if isinstance(h_hat, ChannelMatrix) else np.asarray(h_hat)
    if t.ndim != 2 or t.shape != e.shape:
        raise InvalidInputError(f"need matching 2-D channels, got {t.shape} vs {e.shape}")
    norms2 = np.sum(np.abs(e) ** 2, axis=0)
    if np.any(norms2 == 0.0):
        raise InvalidInputError("achievable rate needs non-zero estimate columns")
    gains = np.abs(np.sum(e.conj() * t, axis=0)) ** 2
    return float(np.mean(np.log2(1.0 + gains / (norms2 * sigma2))))


def empirical_cdf(values) -> np.ndarray:
    """Right-continuous step points of the empirical CDF: an (k, 2) array of
    (value, P[X <= value]) rows over the sorted unique values."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise InvalidInputError("empirical_cdf needs a non-empty 1-D sample")
    if not np.all(np.isfinite(vals)):
        raise InvalidInputError("empirical_cdf needs finite samples")
    uniq, counts = np.unique(vals, return_counts=True)
    probs = np.cumsum(counts) / vals.size
    return np.column_stack([uniq, probs])


# ---------------------------------------------------------------------------
# sweep configuration and records


def normalize_method(name: str) -> str:
    key = str(name).strip().lower()
    if key not in _METHOD_LOOKUP:
        raise InvalidInputError(
            f"unknown method {name!r}; valid methods: {', '.join(METHODS)}"
        )
    return _METHOD_LOOKUP[key]


def parse_ratio(value) -> Fraction:
    """Coerce a pilot ratio (Fraction, int, float, or '1/8' string) to an
    exact Fraction in (0, 1]."""
    try:
        if isinstance(value, Fraction):
            frac = value
        elif isinstance(value, int):
            frac = Fraction(value)
        elif isinstance(value, float):
            frac = Fraction(repr(value))
        elif isinstance(value, str):
            frac = Fraction(value)
        else:
            raise TypeError
    except (ValueError, ZeroDivisionError, TypeError):
        raise InvalidInputError(f"cannot interpret pilot ratio {value!r}") from None
    if not 0 < frac <= 1:
        raise InvalidInputError(f"pilot ratio must lie in (0, 1], got {frac}")
    return frac


def ratio_label(frac: Fraction) -> str:
    return str(frac.numerator) if frac.denominator == 1 else \
        f"{frac.numerator}/{frac.denominator}"


@dataclass(frozen=True)
class SweepCondition:
    index: int
    snr_db: float
    pilot_ratio: Fraction
    interference_a: float
    loc_error_m: float


@dataclass
class MetricRecord:
    """One (condition, trial, method) outcome row."""

    condition_index: int
    trial: int
    method: str
    snr_db: float
    pilot_ratio: float
    pilot_ratio_label: str
    interference_a: float
    loc_error_m: float
    grid_size_m: float
    cell_row: int
    cell_col: int
    nmse: float | None
    nmse_db: float | None
    cs: float | None
    aar: float | None
    ok: bool
    error: str = ""


RECORD_COLUMNS = (
    "condition_index", "trial", "method", "snr_db", "pilot_ratio",
    "pilot_ratio_label", "interference_a", "loc_error_m", "grid_size_m",
    "cell_row", "cell_col", "nmse", "nmse_db", "cs", "aar", "ok", "error",
)


@dataclass
class SweepConfig:
    """Grid of evaluation conditions crossed with methods and trials.

    Every random quantity derives from (seed, condition index, trial index),
    so results are independent of processing order and worker count.
    """

    scene: SceneGrid
    array: ArrayConfig = field(default_factory=ArrayConfig)
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    methods: tuple = ("IEB-PR",)
    snr_db: tuple = (0.0,)
    pilot_ratios: tuple = (Fraction(1, 4),)
    interference_a: tuple = (0.0,)
    loc_error_m: tuple = (0.0,)
    trials: int = 200
    seed: int = 0
    n_basis: int | None = 15
    energy_threshold: float | None = None
    mask_pattern: str = "comb"
    projection_mode: str = "zero-fill"
    lmmse_scope: str = "per-cell"
    doppler_mode: str = "trajectory"
    future_dt_s: float = 0.01
    query_time_range_s: float = 0.36
    jobs: int = 1

    def __post_init__(self):
        self.methods = tuple(normalize_method(m) for m in self.methods)
        if len(self.methods) != len(set(self.methods)):
            raise ConfigurationError("duplicate methods in sweep config")
        self.snr_db = tuple(float(s) for s in self.snr_db)
        self.pilot_ratios = tuple(parse_ratio(r) for r in self.pilot_ratios)
        self.interference_a = tuple(float(a) for a in self.interference_a)
        self.loc_error_m = tuple(float(e) for e in self.loc_error_m)
        for name in ("methods", "snr_db", "pilot_ratios", "interference_a",
                     "loc_error_m"):
            if len(getattr(self, name)) == 0:
                raise ConfigurationError(f"{name} must be non-empty")
        if any(a < 0 or a > 1 for a in self.interference_a):
            raise ConfigurationError("interference_a values must lie in [0, 1]")
        if any(e < 0 for e in self.loc_error_m):
            raise ConfigurationError("loc_error_m values must be >= 0")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.n_basis is not None and self.energy_threshold is not None:
            raise ConfigurationError("pass n_basis or energy_threshold, not both")
        if self.mask_pattern not in ("comb", "random"):
            raise ConfigurationError(f"unknown mask pattern {self.mask_pattern!r}")
        if self.projection_mode not in ("zero-fill", "masked-ls"):
            raise ConfigurationError(f"unknown projection mode {self.projection_mode!r}")
        if self.lmmse_scope not in ("per-cell", "pooled"):
            raise ConfigurationError(f"unknown lmmse scope {self.lmmse_scope!r}")
        if not (self.future_dt_s > 0 and self.query_time_range_s >= 0):
            raise ConfigurationError("future_dt_s must be > 0, time range >= 0")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")

    @property
    def conditions(self) -> list[SweepCondition]:
        grid = itertools.product(self.snr_db, self.pilot_ratios,
                                 self.interference_a, self.loc_error_m)
        return [SweepCondition(i, s, r, a, e) for i, (s, r, a, e) in enumerate(grid)]


@dataclass(frozen=True)
class _TrialPlan:
    coords: tuple[float, float]
    time_s: float
    cell: tuple[int, int]
    noise_seed: int
    intf_cell: tuple[int, int]
    intf_coords: tuple[float, float]
    intf_noise_seed: int
    loc_seed: int
    mask_seed: int


def _plan_trial(cfg: SweepConfig, cond_index: int, trial: int) -> _TrialPlan:
    # All per-trial randomness comes from this one stream, drawn in a fixed
    # order regardless of which methods or condition values are active.
    rng = np.random.default_rng([cfg.seed, 6, cond_index, trial])
    ext = cfg.scene.config.extent_m
    g = cfg.scene.config.grid_size_m
    x, y = rng.uniform(0.0, ext, 2)
    t = rng.uniform(0.0, cfg.query_time_range_s)
    noise_seed = int(rng.integers(1 << 62))
    neighbor_u = rng.uniform()
    fx, fy = rng.uniform(0.0, 1.0, 2)
    intf_noise_seed = int(rng.integers(1 << 62))
    loc_seed = int(rng.integers(1 << 62))
    mask_seed = int(rng.integers(1 << 62))

    cell = cfg.scene.cell_index_at((x, y))
    n = cfg.scene.config.n_cells_side
    neighbors = [(cell[0] + dr, cell[1] + dc)
                 for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0))
                 if 0 <= cell[0] + dr < n and 0 <= cell[1] + dc < n]
    intf_cell = neighbors[min(int(neighbor_u * len(neighbors)), len(neighbors) - 1)]
    intf_coords = (intf_cell[1] * g + fx * g, intf_cell[0] * g + fy * g)
    return _TrialPlan((float(x), float(y)), float(t), cell, noise_seed,
                      intf_cell, (float(intf_coords[0]), float(intf_coords[1])),
                      intf_noise_seed, loc_seed, mask_seed)


class _LmmseModels:
    """Per-(scope, condition, mask) LMMSE models fit from vertex snapshots,
    kept in a small LRU so at most a few dense models live at once."""

    def __init__(self, cfg: SweepConfig, max_models: int = 4):
        self._cfg = cfg
        self._snapshots: dict[tuple[int, int], np.ndarray] = {}
        self._models: OrderedDict = OrderedDict()
        self._max_models = max_models
        self._lock = threading.Lock()

    def _cell_snapshots(self, cell_id: tuple[int, int]) -> np.ndarray:
        if cell_id not in self._snapshots:
            snaps = collect_vertex_snapshots(
                self._cfg.scene, cell_id, self._cfg.array, self._cfg.ofdm,
                noise=None, doppler_mode=self._cfg.doppler_mode)
            self._snapshots[cell_id] = snaps.snapshots
        return self._snapshots[cell_id]

    def _scope_snapshots(self, cell_id: tuple[int, int]) -> np.ndarray:
        if self._cfg.lmmse_scope == "per-cell":
            return self._cell_snapshots(cell_id)
        rows = [self._cell_snapshots(c.cell_id)
                for c in self._cfg.scene.all_cells()]
        return np.concatenate(rows, axis=0)

    def model(self, cell_id: tuple[int, int], cond: SweepCondition, mask):
        scope_key = cell_id if self._cfg.lmmse_scope == "per-cell" else "pooled"
        mask_fp = tensorio.sha256_bytes(mask.data.tobytes())
        key = (scope_key, cond.index, mask_fp)
        with self._lock:
            if key in self._models:
                self._models.move_to_end(key)
                return self._models[key]
            truth = self._scope_snapshots(cell_id)
            observed = truth * mask.flat_bool()[None, :]
            mean_power = float(np.mean(np.abs(truth) ** 2))
            if cond.snr_db == math.inf:
                sigma2 = 1e-12 * mean_power  # ridge floor for the noiseless case
            else:
                sigma2 = mean_power * 10.0 ** (-cond.snr_db / 10.0)
            model = lmmse_fit(truth, observed, sigma2, mask)
            self._models[key] = model
            while len(self._models) > self._max_models:
                self._models.popitem(last=False)
            return model


def _score(truth: ChannelMatrix, estimate: ChannelMatrix, sigma2: float):
    err = nmse(truth, estimate)
    cs = cosine_similarity(truth, estimate)
    # the rate is undefined at zero noise and for estimates with an all-zero
    # subcarrier column (a masked-out column of the zero-fill baseline)
    rate = None
    if sigma2 > 0.0:
        try:
            rate = achievable_rate(truth, estimate, sigma2)
        except InvalidInputError:
            rate = None
    return err, to_db(err) if err > 0.0 else None, cs, rate


@dataclass
class SweepResult:
    records: list[MetricRecord]
    summary: dict


def run_sweep(cfg: SweepConfig) -> SweepResult:
    """Run every (condition, trial, method) cell of the sweep grid.

    Per-method failures are recorded (ok=False) rather than raised, so one
    degenerate trial cannot sink a sweep. Records come back in condition-
    major, then trial, then method order.
    """
    scene = cfg.scene
    conditions = cfg.conditions
    methods = cfg.methods

    need_ideal = any(m in ("IEB-PR", "hold-last") for m in methods)
    ideal_store = None
    if need_ideal:
        ideal_store = build_store(scene, cfg.array, cfg.ofdm,
                                  n_basis=cfg.n_basis,
                                  energy_threshold=cfg.energy_threshold,
                                  noise=None, doppler_mode=cfg.doppler_mode)
    noisy_stores = {}
    if "EB-PR" in methods:
        for idx, snr in enumerate(sorted(set(cfg.snr_db))):
            noise = None if snr == math.inf else NoiseSpec(snr, (cfg.seed, 5, idx))
            noisy_stores[snr] = build_store(
                scene, cfg.array, cfg.ofdm, n_basis=cfg.n_basis,
                energy_threshold=cfg.energy_threshold, noise=noise,
                doppler_mode=cfg.doppler_mode)
    lmmse_models = _LmmseModels(cfg) if "LMMSE" in methods else None

    m_t, n_sc = cfg.array.m_t, cfg.ofdm.n_subcarriers
    slots: list[list[MetricRecord] | None] = [None] * (len(conditions) * cfg.trials)

    def run_trial(cond: SweepCondition, trial: int) -> list[MetricRecord]:
        plan = _plan_trial(cfg, cond.index, trial)
        base = dict(
            condition_index=cond.index, trial=trial, snr_db=cond.snr_db,
            pilot_ratio=float(cond.pilot_ratio),
            pilot_ratio_label=ratio_label(cond.pilot_ratio),
            interference_a=cond.interference_a, loc_error_m=cond.loc_error_m,
            grid_size_m=scene.config.grid_size_m,
            cell_row=plan.cell[0], cell_col=plan.cell[1],
        )

        def failure(method: str, exc: Exception) -> MetricRecord:
            return MetricRecord(method=method, nmse=None, nmse_db=None, cs=None,
                                aar=None, ok=False,
                                error=f"{type(exc).__name__}: {exc}", **base)

        try:
            paths = location_paths(scene, plan.coords, plan.time_s)
            h_true = channel_from_paths(paths, cfg.array, cfg.ofdm,
                                        coords=plan.coords, time_s=plan.time_s)
            sigma2 = noise_variance(h_true, cond.snr_db)
            h_rx = add_noise(h_true, NoiseSpec(cond.snr_db, plan.noise_seed))
            if cond.interference_a > 0.0:
                intf_paths = cell_location_paths(scene, plan.intf_cell,
                                                 plan.intf_coords, plan.time_s)
                h_intf = channel_from_paths(intf_paths, cfg.array, cfg.ofdm,
                                            coords=plan.intf_coords,
                                            time_s=plan.time_s)
                h_intf = add_noise(h_intf, NoiseSpec(cond.snr_db,
                                                     plan.intf_noise_seed))
                h_rx = mix_interference(h_rx, h_intf, cond.interference_a)
            mask = make_mask(m_t, n_sc, pilot_ratio=cond.pilot_ratio,
                             pattern=cfg.mask_pattern, seed=plan.mask_seed)
            h_obs = observe(h_rx, mask)
        except (EbcastError, np.linalg.LinAlgError) as exc:
            return [failure(m, exc) for m in methods]

        ieb_recon = None

        def ideal_reconstruction():
            nonlocal ieb_recon
            if ieb_recon is None:
                basis = grid_lookup(ideal_store, plan.coords,
                                    loc_error_m=cond.loc_error_m,
                                    seed=plan.loc_seed)
                ieb_recon = project_reconstruct(h_obs, basis,
                                                mode=cfg.projection_mode,
                                                mask=mask, method="IEB-PR")
            return ieb_recon

        out = []
        for method in methods:
            try:
                truth = h_true
                if method == "IEB-PR":
                    estimate = ideal_reconstruction().channel
                elif method == "EB-PR":
                    basis = grid_lookup(noisy_stores[cond.snr_db], plan.coords,
                                        loc_error_m=cond.loc_error_m,
                                        seed=plan.loc_seed)
                    estimate = project_reconstruct(
                        h_obs, basis, mode=cfg.projection_mode, mask=mask,
                        method="EB-PR").channel
                elif method == "LMMSE":
                    model = lmmse_models.model(plan.cell, cond, mask)
                    estimate = lmmse_reconstruct(h_obs, model).channel
                elif method == "zero-fill":
                    estimate = zero_fill(h_obs).channel
                else:  # hold-last: score the current reconstruction later
                    future_paths = location_paths(
                        scene, plan.coords, plan.time_s + cfg.future_dt_s)
                    truth = channel_from_paths(
                        future_paths, cfg.array, cfg.ofdm, coords=plan.coords,
                        time_s=plan.time_s + cfg.future_dt_s)
                    estimate = ideal_reconstruction().channel
                err, err_db, cs, rate = _score(truth, estimate, sigma2)
                out.append(MetricRecord(method=method, nmse=err, nmse_db=err_db,
                                        cs=cs, aar=rate, ok=True, **base))
            except (EbcastError, np.linalg.LinAlgError) as exc:
                out.append(failure(method, exc))
        return out

    for cond in conditions:
        plans = {t: _plan_trial(cfg, cond.index, t) for t in range(cfg.trials)}
        # Group trials by user cell so per-cell LMMSE models are each fit once.
        order = sorted(range(cfg.trials), key=lambda t: (plans[t].cell, t))
        offset = cond.index * cfg.trials
        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                for trial, recs in zip(order, pool.map(
                        lambda t: run_trial(cond, t), order)):
                    slots[offset + trial] = recs
        else:
            for trial in order:
                slots[offset + trial] = run_trial(cond, trial)

    records = [rec for group in slots for rec in group]
    summary = _summarize(cfg, conditions, records)
    return SweepResult(records, summary)


def _summarize(cfg: SweepConfig, conditions, records) -> dict:
    by_cond: dict[int, dict[str, list[MetricRecord]]] = {}
    for rec in records:
        by_cond.setdefault(rec.condition_index, {}).setdefault(rec.method, []).append(rec)

    def method_stats(recs: list[MetricRecord]) -> dict:
        ok = [r for r in recs if r.ok]
        stats = {"n_ok": len(ok), "n_failed": len(recs) - len(ok)}
        if ok:
            mean_nmse = float(np.mean([r.nmse for r in ok]))
            stats["mean_nmse"] = mean_nmse
            stats["mean_nmse_db"] = to_db(mean_nmse) if mean_nmse > 0 else None
            stats["mean_cs"] = float(np.mean([r.cs for r in ok]))
            rates = [r.aar for r in ok if r.aar is not None]
            stats["mean_aar"] = float(np.mean(rates)) if rates else None
            stats["cs_cdf"] = [[float(v), float(p)]
                               for v, p in empirical_cdf([r.cs for r in ok])]
        else:
            stats.update({"mean_nmse": None, "mean_nmse_db": None,
                          "mean_cs": None, "mean_aar": None, "cs_cdf": []})
        return stats

    cond_entries = []
    for cond in conditions:
        methods = {m: method_stats(by_cond.get(cond.index, {}).get(m, []))
                   for m in cfg.methods}
        cond_entries.append({
            "index": cond.index,
            "snr_db": cond.snr_db,
            "pilot_ratio": float(cond.pilot_ratio),
            "pilot_ratio_label": ratio_label(cond.pilot_ratio),
            "interference_a": cond.interference_a,
            "loc_error_m": cond.loc_error_m,
            "methods": methods,
        })
    return {
        "kind": "ebcast-sweep-summary",
        "config": {
            "methods": list(cfg.methods),
            "snr_db": list(cfg.snr_db),
            "pilot_ratios": [ratio_label(r) for r in cfg.pilot_ratios],
            "interference_a": list(cfg.interference_a),
            "loc_error_m": list(cfg.loc_error_m),
            "trials": cfg.trials,
            "seed": cfg.seed,
            "n_basis": cfg.n_basis,
            "energy_threshold": cfg.energy_threshold,
            "mask_pattern": cfg.mask_pattern,
            "projection_mode": cfg.projection_mode,
            "lmmse_scope": cfg.lmmse_scope,
            "doppler_mode": cfg.doppler_mode,
            "future_dt_s": cfg.future_dt_s,
            "query_time_range_s": cfg.query_time_range_s,
            "grid_size_m": cfg.scene.config.grid_size_m,
            "scene_sha256": tensorio.sha256_bytes(scene_json_bytes(cfg.scene)),
            "array": {"m_rows": cfg.array.m_rows, "m_cols": cfg.array.m_cols,
                      "spacing_wavelengths": cfg.array.spacing_wavelengths},
            "ofdm": {"n_subcarriers": cfg.ofdm.n_subcarriers,
                     "bandwidth_hz": cfg.ofdm.bandwidth_hz},
        },
        "conditions": cond_entries,
    }


# ---------------------------------------------------------------------------
# delimited/JSON serialization of sweep outputs


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, col)) for col in RECORD_COLUMNS])


def write_summary_json(summary: dict, path) -> None:
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


SWEEP_AXES = ("pilot_ratio", "snr_db", "interference_a", "loc_error_m")


def _axis_values(summary: dict, axis: str) -> list:
    return sorted({cond[axis] for cond in summary["conditions"]})


def write_curves_csv(summary: dict, out_dir) -> list[Path]:
    """One CSV per (varying axis, fixed setting of the other axes): rows are
    axis value x method with the aggregate metrics."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    varying = [a for a in SWEEP_AXES if len(_axis_values(summary, a)) > 1]
    if not varying:
        varying = ["pilot_ratio"]
    written = []
    for axis in varying:
        fixed_axes = [a for a in SWEEP_AXES if a != axis]
        groups: dict[tuple, list[dict]] = {}
        for cond in summary["conditions"]:
            groups.setdefault(tuple(cond[a] for a in fixed_axes), []).append(cond)
        for fixed_vals, conds in sorted(groups.items()):
            tag = "_".join(f"{a.replace('_', '')}{_fmt(v)}"
                           for a, v in zip(fixed_axes, fixed_vals))
            fname = out / f"curve_vs_{axis}__{tag}.csv"
            with open(fname, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow([axis, "method", "n_ok", "n_failed", "mean_nmse",
                                 "mean_nmse_db", "mean_cs", "mean_aar"])
                for cond in sorted(conds, key=lambda c: c[axis]):
                    for method, stats in cond["methods"].items():
                        writer.writerow([
                            _fmt(cond[axis]), method, stats["n_ok"],
                            stats["n_failed"], _fmt(stats["mean_nmse"]),
                            _fmt(stats["mean_nmse_db"]), _fmt(stats["mean_cs"]),
                            _fmt(stats["mean_aar"]),
                        ])
            written.append(fname)
    return written


# ---------------------------------------------------------------------------
# dataset export


@dataclass(frozen=True)
class DataCondition:
    """One (SNR, pilot ratio) observation setting for exported records."""

    snr_db: float = 0.0
    pilot_ratio: Fraction = Fraction(1, 4)

    def __post_init__(self):
        object.__setattr__(self, "pilot_ratio", parse_ratio(self.pilot_ratio))
        object.__setattr__(self, "snr_db", float(self.snr_db))


def _split_counts(split, n: int) -> tuple[int, int, int]:
    fracs = [Fraction(repr(float(s))) for s in split]
    if len(fracs) != 3 or any(f < 0 for f in fracs):
        raise InvalidInputError("split must be three non-negative fractions")
    if sum(fracs) != 1:
        raise InvalidInputError(f"split fractions must sum to 1, got {split}")
    n1 = round_half_up(fracs[0] * n)
    n2 = round_half_up(fracs[1] * n)
    if n1 + n2 > n:
        raise InvalidInputError("split rounding exceeded the record count")
    return n1, n2, n - n1 - n2


def export_dataset(scene: SceneGrid, array: ArrayConfig, ofdm: OfdmConfig,
                   out_dir, conditions, users_per_cell: int = 10,
                   split=(0.7, 0.1, 0.2), seed: int = 0,
                   n_basis: int | None = 15, energy_threshold: float | None = None,
                   eb_snr_db: float | None = None, time_steps: int = 1,
                   time_step_s: float = 0.01, mask_pattern: str = "comb",
                   doppler_mode: str = "trajectory") -> dict:
    """Export (whole, observed, mask) channel records plus the cell bases.

    Records enumerate cells row-major, then users, then conditions, so the
    count is n_cells * users_per_cell * len(conditions); a seeded shuffle
    splits records into train/val/test by the given fractions. Each record
    holds time_steps consecutive channel snapshots (one mask per record,
    independent noise per step). Returns the manifest that was written.
    """
    conds = [c if isinstance(c, DataCondition) else DataCondition(**c)
             for c in conditions]
    if len(conds) == 0:
        raise InvalidInputError("need at least one export condition")
    if users_per_cell < 1 or time_steps < 1 or time_step_s <= 0:
        raise InvalidInputError("users_per_cell/time_steps/time_step_s must be positive")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m_t, n_sc = array.m_t, ofdm.n_subcarriers
    cells = list(scene.all_cells())
    n_records = len(cells) * users_per_cell * len(conds)
    g = scene.config.grid_size_m

    h_all = np.zeros((n_records, time_steps, m_t, n_sc), dtype=np.complex128)
    h0_all = np.zeros_like(h_all)
    mask_all = np.zeros((n_records, m_t, n_sc), dtype=np.float64)
    meta_all: list[dict] = []

    horizon = (time_steps - 1) * time_step_s
    t_max = max(0.36 - horizon, 0.0)
    idx = 0
    for cell in cells:
        row, col = cell.cell_id
        for user in range(users_per_cell):
            rng = np.random.default_rng([seed, 11, row, col, user])
            fx, fy = rng.uniform(0.0, 1.0, 2)
            coords = (col * g + fx * g, row * g + fy * g)
            t0 = float(rng.uniform(0.0, t_max))
            times = [t0 + step * time_step_s for step in range(time_steps)]
            for c_idx, cond in enumerate(conds):
                mask_seed = int(rng.integers(1 << 62))
                noise_seeds = [int(rng.integers(1 << 62)) for _ in range(time_steps)]
                mask = make_mask(m_t, n_sc, pilot_ratio=cond.pilot_ratio,
                                 pattern=mask_pattern, seed=mask_seed)
                for step, t in enumerate(times):
                    paths = cell_location_paths(scene, cell.cell_id, coords, t)
                    h = channel_from_paths(paths, array, ofdm, coords=coords,
                                           time_s=t)
                    h_noisy = add_noise(h, NoiseSpec(cond.snr_db,
                                                     noise_seeds[step]))
                    h_all[idx, step] = h.data
                    h0_all[idx, step] = observe(h_noisy, mask).data
                mask_all[idx] = mask.data
                meta_all.append({
                    "cell": [row, col],
                    "coords": [coords[0], coords[1]],
                    "times_s": times,
                    "snr_db": cond.snr_db,
                    "pilot_ratio": ratio_label(cond.pilot_ratio),
                    "pilot_ratio_value": float(cond.pilot_ratio),
                    "condition_index": c_idx,
                })
                idx += 1

    n1, n2, _ = _split_counts(split, n_records)
    perm = np.random.default_rng([seed, 10]).permutation(n_records)
    split_indices = {
        "train": sorted(int(i) for i in perm[:n1]),
        "val": sorted(int(i) for i in perm[n1:n1 + n2]),
        "test": sorted(int(i) for i in perm[n1 + n2:]),
    }

    eb_noise = None
    if eb_snr_db is not None and eb_snr_db != math.inf:
        eb_noise = NoiseSpec(float(eb_snr_db), (seed, 12))
    store = build_store(scene, array, ofdm, n_basis=n_basis,
                        energy_threshold=energy_threshold, noise=eb_noise,
                        doppler_mode=doppler_mode)
    save_store(store, out / "eb_store")

    splits_entry = {}
    for name, indices in split_indices.items():
        sdir = out / name
        sdir.mkdir(exist_ok=True)
        sel = np.asarray(indices, dtype=np.intp)
        files = {}
        for fname, arr in (("h", h_all[sel]), ("h0", h0_all[sel]),
                           ("mask", mask_all[sel])):
            fpath = sdir / f"{fname}.bin"
            code = tensorio.write_tensor(fpath, arr)
            files[fname] = {
                "file": f"{name}/{fname}.bin",
                "shape": list(arr.shape),
                "dtype": code,
                "sha256": tensorio.sha256_path(fpath),
            }
        splits_entry[name] = {
            "count": len(indices),
            "files": files,
            "records": [meta_all[i] for i in indices],
        }

    manifest = {
        "format": DATASET_FORMAT,
        "scene": scene_to_dict(scene),
        "array": {"m_rows": array.m_rows, "m_cols": array.m_cols,
                  "spacing_wavelengths": array.spacing_wavelengths},
        "ofdm": {"n_subcarriers": ofdm.n_subcarriers,
                 "bandwidth_hz": ofdm.bandwidth_hz},
        "conditions": [{"snr_db": c.snr_db,
                        "pilot_ratio": ratio_label(c.pilot_ratio),
                        "pilot_ratio_value": float(c.pilot_ratio),
                        "n_pilot": round_half_up(c.pilot_ratio * n_sc)}
                       for c in conds],
        "users_per_cell": users_per_cell,
        "records_total": n_records,
        "split": [float(s) for s in split],
        "seed": seed,
        "mask_pattern": mask_pattern,
        "time": {"steps": time_steps, "step_s": time_step_s},
        "eb_store": {"path": "eb_store", "snr_db": eb_snr_db,
                     "n_basis": n_basis, "energy_threshold": energy_threshold,
                     "doppler_mode": doppler_mode},
        "splits": splits_entry,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out / "manifest.json").write_text(text, encoding="utf-8")
    return manifest


def load_dataset(path) -> dict:
    """Read an exported dataset back: manifest plus per-split arrays, with
    checksum verification."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise InvalidInputError(f"{root}: missing manifest.json")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != DATASET_FORMAT:
        raise InvalidInputError(
            f"{root}: unexpected dataset format {manifest.get('format')!r}")
    splits = {}
    for name, entry in manifest["splits"].items():
        arrays = {}
        for key, file_entry in entry["files"].items():
            fpath = root / file_entry["file"]
            if not fpath.is_file():
                raise StoreIntegrityError(f"{root}: missing {file_entry['file']}")
            if tensorio.sha256_path(fpath) != file_entry["sha256"]:
                raise StoreIntegrityError(
                    f"{root}: checksum mismatch for {file_entry['file']}")
            arrays[key] = tensorio.read_tensor(
                fpath, tuple(file_entry["shape"]), file_entry["dtype"])
        arrays["records"] = entry["records"]
        splits[name] = arrays
    return {"manifest": manifest, "splits": splits}
