"""Figure rendering for sweep summaries. Only the CLI report path imports
this; the evaluation core stays plot-free."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluate import SWEEP_AXES, _axis_values  # noqa: E402

_AXIS_LABELS = {
    "pilot_ratio": "pilot ratio",
    "snr_db": "SNR (dB)",
    "interference_a": "interference strength",
    "loc_error_m": "localization error (m)",
}
_METRIC_LABELS = {
    "mean_nmse_db": "mean NMSE (dB)",
    "mean_cs": "mean cosine similarity",
    "mean_aar": "mean achievable rate (bit/s/Hz)",
}
# Fixed metadata keeps PNG bytes identical across repeated runs.
_PNG_META = {"Software": "ebcast"}
_DPI = 120


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=_DPI, metadata=_PNG_META)
    plt.close(fig)
    return path


def _fixed_tag(axes, values) -> str:
    return "_".join(f"{a.replace('_', '')}{v}" for a, v in zip(axes, values))


def plot_metric_curves(summary: dict, axis: str, metric: str,
                       out_dir: Path) -> list[Path]:
    """One figure per fixed setting of the non-axis condition values:
    metric vs axis, one line per method."""
    fixed_axes = [a for a in SWEEP_AXES if a != axis]
    groups: dict[tuple, list[dict]] = {}
    for cond in summary["conditions"]:
        groups.setdefault(tuple(cond[a] for a in fixed_axes), []).append(cond)
    methods = summary["config"]["methods"]
    written = []
    for fixed_vals, conds in sorted(groups.items()):
        conds = sorted(conds, key=lambda c: c[axis])
        xs = [c[axis] for c in conds]
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for method in methods:
            ys = [c["methods"][method].get(metric) for c in conds]
            pairs = [(x, y) for x, y in zip(xs, ys) if y is not None]
            if not pairs:
                continue
            ax.plot([p[0] for p in pairs], [p[1] for p in pairs],
                    marker="o", label=method)
        ax.set_xlabel(_AXIS_LABELS[axis])
        ax.set_ylabel(_METRIC_LABELS[metric])
        if axis == "pilot_ratio":
            ax.set_xscale("log", base=2)
        title = ", ".join(f"{_AXIS_LABELS[a]}={v}"
                          for a, v in zip(fixed_axes, fixed_vals))
        ax.set_title(title, fontsize=9)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fname = out_dir / f"{metric}_vs_{axis}__{_fixed_tag(fixed_axes, fixed_vals)}.png"
        written.append(_save(fig, fname))
    return written


def plot_cs_cdfs(summary: dict, out_dir: Path, max_conditions: int = 16) -> list[Path]:
    """Cosine-similarity CDF per condition (skipped when the sweep has more
    conditions than max_conditions)."""
    conds = summary["conditions"]
    if len(conds) > max_conditions:
        return []
    written = []
    for cond in conds:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        any_curve = False
        for method, stats in cond["methods"].items():
            cdf = stats.get("cs_cdf") or []
            if not cdf:
                continue
            xs = [p[0] for p in cdf]
            ys = [p[1] for p in cdf]
            ax.step(xs, ys, where="post", label=method)
            any_curve = True
        if not any_curve:
            plt.close(fig)
            continue
        ax.set_xlabel("cosine similarity")
        ax.set_ylabel("empirical CDF")
        ax.set_title(
            f"snr={cond['snr_db']} dB, ratio={cond['pilot_ratio_label']}, "
            f"a={cond['interference_a']}, loc={cond['loc_error_m']} m",
            fontsize=9,
        )
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        written.append(_save(fig, out_dir / f"cs_cdf_cond{cond['index']:03d}.png"))
    return written


def render_sweep_figures(summary: dict, out_dir) -> list[Path]:
    """Render the standard figure set for a sweep summary into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    varying = [a for a in SWEEP_AXES if len(_axis_values(summary, a)) > 1]
    if not varying:
        varying = ["pilot_ratio"]
    written = []
    for axis in varying:
        for metric in ("mean_nmse_db", "mean_cs", "mean_aar"):
            written.extend(plot_metric_curves(summary, axis, metric, out))
    written.extend(plot_cs_cdfs(summary, out))
    return written
