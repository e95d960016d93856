"""Command-line interface: scene generation, basis extraction, sweeps,
dataset export.

Every subcommand writes its artifacts into the --out directory plus a
run_manifest.json describing the resolved configuration, output checksums,
and stage timings. Data artifacts are deterministic for a fixed
configuration; only the run manifest (timings) differs between repeats.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__, tensorio
from .channel import ArrayConfig, OfdmConfig
from .errors import EbcastError
from .evaluate import (DataCondition, SweepConfig, export_dataset, run_sweep,
                       write_curves_csv, write_records_csv, write_summary_json)
from .observation import NoiseSpec
from .scene import SceneConfig, generate_scene, load_scene, save_scene
from .subspace import build_store, save_store


def _parse_array(text: str) -> tuple[int, int]:
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"array must look like ROWSxCOLS, got {text!r}") from exc


def _parse_float(text: str) -> float:
    if text.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(text)


def _csv_list(parse):
    def inner(text: str) -> tuple:
        items = [s for s in (part.strip() for part in text.split(",")) if s]
        if not items:
            raise argparse.ArgumentTypeError("expected a comma-separated list")
        return tuple(parse(s) for s in items)
    return inner


def _parse_condition(text: str) -> dict:
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise argparse.ArgumentTypeError(
                f"condition fields look like key=value, got {part!r}")
        key, value = (s.strip() for s in part.split("=", 1))
        if key == "snr_db":
            out["snr_db"] = _parse_float(value)
        elif key == "pilot_ratio":
            out["pilot_ratio"] = Fraction(value)
        else:
            raise argparse.ArgumentTypeError(
                f"unknown condition field {key!r} (use snr_db, pilot_ratio)")
    return out


def _add_geometry_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--array", type=_parse_array, default=(8, 4),
                        metavar="RxC", help="planar array rows x cols (default 8x4)")
    parser.add_argument("--spacing", type=float, default=0.5,
                        help="element spacing in wavelengths (default 0.5)")
    parser.add_argument("--n-sc", type=int, default=32,
                        help="number of subcarriers (default 32)")
    parser.add_argument("--bandwidth-hz", type=float, default=25e6,
                        help="system bandwidth in Hz (default 25e6)")


def _geometry(args) -> tuple[ArrayConfig, OfdmConfig]:
    return (ArrayConfig(args.array[0], args.array[1], args.spacing),
            OfdmConfig(args.n_sc, args.bandwidth_hz))


def _add_basis_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--n-basis", type=int, default=None,
                       help="fixed basis size (default 15 when neither is given)")
    group.add_argument("--energy-threshold", type=float, default=None,
                       help="pick the smallest basis reaching this energy fraction")


def _basis_choice(args) -> tuple[int | None, float | None]:
    if args.energy_threshold is not None:
        return None, args.energy_threshold
    return (args.n_basis if args.n_basis is not None else 15), None


def _write_manifest(out_dir: Path, command: str, config: dict,
                    outputs: list[Path], timings: dict) -> None:
    manifest = {
        "tool": "ebcast",
        "version": __version__,
        "command": command,
        "config": config,
        "outputs": {
            str(p.relative_to(out_dir)): {"sha256": tensorio.sha256_path(p)}
            for p in sorted(outputs) if p.is_file()
        },
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out_dir / "run_manifest.json").write_text(text, encoding="utf-8")


def _cmd_gen_scene(args) -> int:
    t0 = time.perf_counter()
    lo, hi = args.paths
    kwargs = dict(
        extent_m=args.extent, grid_size_m=args.grid_size,
        cell_path_count_range=(lo, hi), los_fraction=args.los_fraction,
        intra_cell_jitter=args.jitter, seed=args.seed,
        carrier_hz=args.carrier_hz, user_speed_mps=args.speed_kmh / 3.6,
        delay_taps=args.delay_taps,
    )
    if args.delay_window_s is not None:
        kwargs["delay_window_s"] = args.delay_window_s
    config = SceneConfig(**kwargs)
    scene = generate_scene(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene_path = out / "scene.json"
    save_scene(scene, scene_path)
    _write_manifest(out, "gen-scene",
                    {k: (list(v) if isinstance(v, tuple) else v)
                     for k, v in kwargs.items()},
                    [scene_path], {"total": time.perf_counter() - t0})
    print(f"wrote {scene.config.n_cells}-cell scene to {scene_path}")
    return 0


def _cmd_extract_eb(args) -> int:
    t0 = time.perf_counter()
    scene = load_scene(args.scene)
    array, ofdm = _geometry(args)
    n_basis, energy = _basis_choice(args)
    noise = None
    if args.snr_db is not None and args.snr_db != math.inf:
        noise = NoiseSpec(args.snr_db, args.noise_seed)
    t1 = time.perf_counter()
    store = build_store(scene, array, ofdm, n_basis=n_basis,
                        energy_threshold=energy, noise=noise,
                        doppler_mode=args.doppler_mode)
    t2 = time.perf_counter()
    out = Path(args.out)
    save_store(store, out)
    t3 = time.perf_counter()
    outputs = [p for p in out.rglob("*") if p.is_file() and p.name != "run_manifest.json"]
    _write_manifest(out, "extract-eb", {
        "scene": str(args.scene), "array": list(args.array),
        "spacing": args.spacing, "n_sc": args.n_sc,
        "bandwidth_hz": args.bandwidth_hz, "n_basis": n_basis,
        "energy_threshold": energy, "snr_db": args.snr_db,
        "noise_seed": args.noise_seed, "doppler_mode": args.doppler_mode,
    }, outputs, {"load": t1 - t0, "extract": t2 - t1, "write": t3 - t2})
    print(f"wrote {len(store.bases)} cell bases to {out}")
    return 0


def _cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    scene = load_scene(args.scene)
    array, ofdm = _geometry(args)
    n_basis, energy = _basis_choice(args)
    cfg = SweepConfig(
        scene=scene, array=array, ofdm=ofdm, methods=args.methods,
        snr_db=args.snr_db, pilot_ratios=args.pilot_ratios,
        interference_a=args.interference_a, loc_error_m=args.loc_error_m,
        trials=args.trials, seed=args.seed, n_basis=n_basis,
        energy_threshold=energy, mask_pattern=args.mask_pattern,
        projection_mode=args.projection_mode, lmmse_scope=args.lmmse_scope,
        doppler_mode=args.doppler_mode, future_dt_s=args.future_dt_ms / 1e3,
        jobs=args.jobs,
    )
    t1 = time.perf_counter()
    result = run_sweep(cfg)
    t2 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / "records.csv"
    summary_path = out / "summary.json"
    write_records_csv(result.records, records_path)
    write_summary_json(result.summary, summary_path)
    outputs = [records_path, summary_path]
    outputs.extend(write_curves_csv(result.summary, out / "curves"))
    if not args.no_figures:
        from .plots import render_sweep_figures
        outputs.extend(render_sweep_figures(result.summary, out / "figures"))
    t3 = time.perf_counter()
    _write_manifest(out, "sweep", result.summary["config"], outputs,
                    {"load": t1 - t0, "sweep": t2 - t1, "write": t3 - t2})
    n_cond = len(result.summary["conditions"])
    print(f"wrote {len(result.records)} records over {n_cond} conditions to {out}")
    return 0


def _cmd_export_dataset(args) -> int:
    t0 = time.perf_counter()
    scene = load_scene(args.scene)
    array, ofdm = _geometry(args)
    n_basis, energy = _basis_choice(args)
    conditions = [DataCondition(**c) for c in args.condition]
    split = args.split
    if len(split) != 3:
        raise EbcastError(f"--split needs three fractions, got {split}")
    out = Path(args.out)
    manifest = export_dataset(
        scene, array, ofdm, out, conditions,
        users_per_cell=args.users_per_cell, split=split, seed=args.seed,
        n_basis=n_basis, energy_threshold=energy, eb_snr_db=args.eb_snr_db,
        time_steps=args.time_steps, time_step_s=args.time_step_ms / 1e3,
        mask_pattern=args.mask_pattern, doppler_mode=args.doppler_mode,
    )
    t1 = time.perf_counter()
    outputs = [p for p in out.rglob("*") if p.is_file() and p.name != "run_manifest.json"]
    _write_manifest(out, "export-dataset", {
        "scene": str(args.scene),
        "conditions": manifest["conditions"],
        "users_per_cell": args.users_per_cell,
        "split": list(split),
        "time_steps": args.time_steps,
        "time_step_ms": args.time_step_ms,
        "eb_snr_db": args.eb_snr_db,
        "seed": args.seed,
    }, outputs, {"total": t1 - t0})
    print(f"wrote {manifest['records_total']} records to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebcast",
        description="Gridded-scene channel simulation, cell-basis extraction, "
                    "partial-to-whole reconstruction sweeps, dataset export.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="generate a frozen-path scene JSON")
    p.add_argument("--extent", type=float, default=40.0, help="side length in m")
    p.add_argument("--grid-size", type=float, default=5.0, help="cell size in m")
    p.add_argument("--paths", type=_csv_list(int), default=(3, 8),
                   metavar="MIN,MAX", help="per-cell path count range")
    p.add_argument("--los-fraction", type=float, default=0.4)
    p.add_argument("--jitter", type=float, default=0.0,
                   help="intra-cell path jitter scale (0 = frozen paths)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--carrier-hz", type=float, default=6.5e9)
    p.add_argument("--speed-kmh", type=float, default=3.0)
    p.add_argument("--delay-taps", type=int, default=32)
    p.add_argument("--delay-window-s", type=float, default=None)
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gen_scene)

    p = sub.add_parser("extract-eb", help="extract per-cell bases to a store")
    p.add_argument("--scene", required=True, help="scene JSON path")
    _add_geometry_args(p)
    _add_basis_args(p)
    p.add_argument("--snr-db", type=_parse_float, default=None,
                   help="corrupt snapshots at this SNR (omit for ideal bases)")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--doppler-mode", choices=("trajectory", "independent"),
                   default="trajectory")
    p.add_argument("-o", "--out", required=True, help="output store directory")
    p.set_defaults(func=_cmd_extract_eb)

    p = sub.add_parser("sweep", help="run a reconstruction robustness sweep")
    p.add_argument("--scene", required=True, help="scene JSON path")
    _add_geometry_args(p)
    _add_basis_args(p)
    p.add_argument("--methods", type=_csv_list(str),
                   default=("IEB-PR",), metavar="M1,M2",
                   help="IEB-PR, EB-PR, LMMSE, zero-fill, hold-last")
    p.add_argument("--snr-db", type=_csv_list(_parse_float), default=(0.0,))
    p.add_argument("--pilot-ratios", type=_csv_list(Fraction), default=(Fraction(1, 4),),
                   metavar="R1,R2", help="e.g. 1/4,1/8,1/16")
    p.add_argument("--interference-a", type=_csv_list(float), default=(0.0,))
    p.add_argument("--loc-error-m", type=_csv_list(float), default=(0.0,))
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask-pattern", choices=("comb", "random"), default="comb")
    p.add_argument("--projection-mode", choices=("zero-fill", "masked-ls"),
                   default="zero-fill")
    p.add_argument("--lmmse-scope", choices=("per-cell", "pooled"),
                   default="per-cell")
    p.add_argument("--doppler-mode", choices=("trajectory", "independent"),
                   default="trajectory")
    p.add_argument("--future-dt-ms", type=float, default=10.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("export-dataset",
                       help="export (whole, observed, mask) records and bases")
    p.add_argument("--scene", required=True, help="scene JSON path")
    _add_geometry_args(p)
    _add_basis_args(p)
    p.add_argument("--condition", type=_parse_condition, action="append",
                   required=True, metavar="snr_db=0,pilot_ratio=1/8",
                   help="observation condition (repeatable)")
    p.add_argument("--users-per-cell", type=int, default=10)
    p.add_argument("--split", type=_csv_list(float), default=(0.7, 0.1, 0.2),
                   metavar="TRAIN,VAL,TEST")
    p.add_argument("--time-steps", type=int, default=1)
    p.add_argument("--time-step-ms", type=float, default=10.0)
    p.add_argument("--eb-snr-db", type=_parse_float, default=None,
                   help="corrupt the embedded bases at this SNR (omit for ideal)")
    p.add_argument("--mask-pattern", choices=("comb", "random"), default="comb")
    p.add_argument("--doppler-mode", choices=("trajectory", "independent"),
                   default="trajectory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_export_dataset)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EbcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
