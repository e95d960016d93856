"""Metrics, sweep harness, and dataset export tests."""

import csv
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from ebcast import (
    ConfigurationError,
    DataCondition,
    InvalidInputError,
    SweepConfig,
    achievable_rate,
    cosine_similarity,
    empirical_cdf,
    export_dataset,
    load_dataset,
    nmse,
    nmse_db,
    run_sweep,
    StoreIntegrityError,
)
from ebcast.evaluate import (
    RECORD_COLUMNS,
    parse_ratio,
    ratio_label,
    normalize_method,
    to_db,
    write_curves_csv,
    write_records_csv,
    write_summary_json,
)


# ===================================================================
# metrics
# ===================================================================

def test_cosine_similarity_complex_scale_invariance():
    rng = np.random.default_rng(1)
    for _ in range(30):
        h = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
        beta = complex(rng.standard_normal(), rng.standard_normal())
        assert abs(cosine_similarity(h, beta * h) - 1.0) < 1e-12


def test_cosine_similarity_clipped_to_one():
    h = np.ones((3, 3), dtype=complex)
    assert cosine_similarity(h, h) <= 1.0


def test_cosine_similarity_orthogonal():
    a = np.zeros((2, 2), dtype=complex)
    b = np.zeros((2, 2), dtype=complex)
    a[0, 0] = 1.0
    b[1, 1] = 1.0
    assert cosine_similarity(a, b) == 0.0


def test_nmse_doubling_is_one():
    rng = np.random.default_rng(2)
    h = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    assert nmse(h, 2.0 * h) == 1.0
    assert nmse(h, h) == 0.0


def test_nmse_hand_value():
    t = np.array([[1.0 + 0j, 0.0]])
    e = np.array([[0.0 + 0j, 1.0]])
    # ||e - t||^2 / ||t||^2 = 2 / 1
    assert nmse(t, e) == pytest.approx(2.0)


def test_db_conversion_oracle():
    assert to_db(1.0) == 0.0
    assert to_db(0.1) == pytest.approx(-10.0)
    rng = np.random.default_rng(3)
    h = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    e = h + 0.3 * rng.standard_normal((3, 3))
    assert nmse_db(h, e) == pytest.approx(10.0 * math.log10(nmse(h, e)))


def test_achievable_rate_single_column_oracle():
    h = np.array([[1.0 + 0j], [1.0j]])
    est = np.array([[0.5 + 0j], [0.5j]])
    sigma2 = 0.25
    gain = abs(np.vdot(est[:, 0], h[:, 0])) ** 2
    expect = math.log2(1.0 + gain / (np.linalg.norm(est[:, 0]) ** 2 * sigma2))
    assert achievable_rate(h, est, sigma2) == pytest.approx(expect)


def test_achievable_rate_scale_invariant_in_estimate():
    rng = np.random.default_rng(4)
    h = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
    e = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
    a = achievable_rate(h, e, 0.5)
    b = achievable_rate(h, (3.0 - 2.0j) * e, 0.5)
    assert abs(a - b) < 1e-12


def test_achievable_rate_zero_column_rejected():
    h = np.ones((2, 2), dtype=complex)
    e = np.ones((2, 2), dtype=complex)
    e[:, 1] = 0.0
    with pytest.raises(InvalidInputError):
        achievable_rate(h, e, 0.5)
    with pytest.raises(InvalidInputError):
        achievable_rate(h, np.ones((2, 2), dtype=complex), 0.0)


def test_empirical_cdf_hand_example():
    steps = empirical_cdf([3.0, 1.0, 3.0, 2.0])
    np.testing.assert_allclose(steps, [[1.0, 0.25], [2.0, 0.5], [3.0, 1.0]])


def test_empirical_cdf_properties():
    rng = np.random.default_rng(5)
    vals = rng.standard_normal(40)
    steps = empirical_cdf(vals)
    assert steps[-1, 1] == 1.0
    assert np.all(np.diff(steps[:, 0]) > 0)
    assert np.all(np.diff(steps[:, 1]) > 0)
    with pytest.raises(InvalidInputError):
        empirical_cdf([])


# ===================================================================
# ratio and method name parsing
# ===================================================================

def test_parse_ratio_forms():
    assert parse_ratio("1/4") == Fraction(1, 4)
    assert parse_ratio(0.25) == Fraction(1, 4)
    assert parse_ratio(Fraction(1, 8)) == Fraction(1, 8)
    assert parse_ratio(1) == Fraction(1, 1)
    with pytest.raises(InvalidInputError):
        parse_ratio("0/4")
    with pytest.raises(InvalidInputError):
        parse_ratio("5/4")
    with pytest.raises(InvalidInputError):
        parse_ratio("abc")


def test_ratio_label():
    assert ratio_label(Fraction(1, 4)) == "1/4"
    assert ratio_label(Fraction(1, 1)) == "1"


def test_normalize_method_case_insensitive():
    assert normalize_method("ieb-pr") == "IEB-PR"
    assert normalize_method("LMMSE") == "LMMSE"
    assert normalize_method("Zero-Fill") == "zero-fill"
    with pytest.raises(InvalidInputError):
        normalize_method("oracle")


# ===================================================================
# sweep configuration
# ===================================================================

def test_sweep_config_validation(small_scene):
    # bad method names surface as invalid input, config-shape issues as
    # configuration errors
    with pytest.raises(InvalidInputError):
        SweepConfig(scene=small_scene, methods=("guess",))
    for bad in [dict(trials=0), dict(interference_a=(1.5,)),
                dict(loc_error_m=(-1.0,)), dict(projection_mode="dense"),
                dict(lmmse_scope="city"), dict(jobs=0),
                dict(methods=("IEB-PR", "ieb-pr")),
                dict(n_basis=5, energy_threshold=0.9)]:
        with pytest.raises(ConfigurationError):
            SweepConfig(scene=small_scene, **bad)


def test_sweep_conditions_product_order(small_scene):
    cfg = SweepConfig(scene=small_scene, snr_db=(0.0, 10.0),
                      pilot_ratios=(Fraction(1, 4), Fraction(1, 8)),
                      interference_a=(0.0,), loc_error_m=(0.0, 2.0))
    conds = cfg.conditions
    assert len(conds) == 8
    assert [c.index for c in conds] == list(range(8))
    # snr varies slowest, loc error fastest
    assert conds[0].snr_db == 0.0 and conds[0].loc_error_m == 0.0
    assert conds[1].loc_error_m == 2.0
    assert conds[2].pilot_ratio == Fraction(1, 8)
    assert conds[4].snr_db == 10.0


# ===================================================================
# sweep runs
# ===================================================================

def _small_sweep_cfg(scene, **kw):
    base = dict(scene=scene, methods=("IEB-PR", "zero-fill"),
                snr_db=(0.0,), pilot_ratios=(Fraction(1, 4),),
                trials=6, seed=11, n_basis=8)
    base.update(kw)
    return SweepConfig(**base)


def test_run_sweep_record_shape(small_scene):
    cfg = _small_sweep_cfg(small_scene)
    result = run_sweep(cfg)
    assert len(result.records) == 2 * 6
    for rec in result.records:
        assert rec.ok
        assert rec.method in ("IEB-PR", "zero-fill")
        assert rec.nmse >= 0.0
        assert 0.0 <= rec.cs <= 1.0
        assert rec.pilot_ratio_label == "1/4"
        if rec.method == "IEB-PR":
            # projection estimates have no all-zero columns, so the rate
            # is defined; zero-fill's masked-out columns leave it None
            assert rec.aar is not None
    # summary aggregates equal recomputation from records
    ieb = [r.nmse for r in result.records if r.method == "IEB-PR"]
    stats = result.summary["conditions"][0]["methods"]["IEB-PR"]
    assert stats["mean_nmse"] == pytest.approx(float(np.mean(ieb)))
    assert stats["n_ok"] == 6


def test_run_sweep_deterministic(small_scene):
    a = run_sweep(_small_sweep_cfg(small_scene))
    b = run_sweep(_small_sweep_cfg(small_scene))
    assert a.records == b.records


def test_run_sweep_parallel_equals_serial(small_scene):
    a = run_sweep(_small_sweep_cfg(small_scene, jobs=1))
    b = run_sweep(_small_sweep_cfg(small_scene, jobs=3))
    assert a.records == b.records


def test_run_sweep_seed_changes_results(small_scene):
    a = run_sweep(_small_sweep_cfg(small_scene, seed=11))
    b = run_sweep(_small_sweep_cfg(small_scene, seed=12))
    assert a.records != b.records


def test_run_sweep_failures_are_recorded(small_scene):
    # masked LS with more basis columns than observed rows fails per trial
    cfg = _small_sweep_cfg(small_scene, methods=("IEB-PR",),
                           pilot_ratios=(Fraction(1, 32),),
                           projection_mode="masked-ls", n_basis=None,
                           energy_threshold=None)
    cfg = SweepConfig(scene=small_scene, methods=("IEB-PR",),
                      snr_db=(0.0,), pilot_ratios=(Fraction(1, 32),),
                      trials=4, seed=11, n_basis=35,
                      projection_mode="masked-ls")
    result = run_sweep(cfg)
    assert all(not r.ok for r in result.records)
    assert all("RankDeficiencyError" in r.error for r in result.records)
    stats = result.summary["conditions"][0]["methods"]["IEB-PR"]
    assert stats["n_failed"] == 4 and stats["mean_nmse"] is None


def test_run_sweep_hold_last_doppler_penalty(small_scene):
    cfg = SweepConfig(scene=small_scene, methods=("IEB-PR", "hold-last"),
                      snr_db=(math.inf,), pilot_ratios=(Fraction(1, 1),),
                      trials=30, seed=13, n_basis=15, future_dt_s=0.01)
    result = run_sweep(cfg)
    m = result.summary["conditions"][0]["methods"]
    assert m["hold-last"]["mean_nmse"] > m["IEB-PR"]["mean_nmse"]


def test_run_sweep_methods_share_trial_draws(small_scene):
    # the same trial index sees the same user and corruption in every method
    result = run_sweep(_small_sweep_cfg(small_scene))
    by_trial = {}
    for rec in result.records:
        by_trial.setdefault(rec.trial, []).append(rec)
    for recs in by_trial.values():
        assert len({(r.cell_row, r.cell_col) for r in recs}) == 1


# ===================================================================
# sweep artifacts
# ===================================================================

def test_write_records_csv_round_trip(small_scene, tmp_path):
    result = run_sweep(_small_sweep_cfg(small_scene))
    path = tmp_path / "records.csv"
    write_records_csv(result.records, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(RECORD_COLUMNS)
    assert len(rows) == 1 + len(result.records)
    idx = RECORD_COLUMNS.index("nmse")
    assert float(rows[1][idx]) == pytest.approx(result.records[0].nmse)


def test_write_summary_and_curves(small_scene, tmp_path):
    cfg = SweepConfig(scene=small_scene, methods=("IEB-PR",), snr_db=(0.0,),
                      pilot_ratios=(Fraction(1, 4), Fraction(1, 8)),
                      trials=3, seed=7, n_basis=6)
    result = run_sweep(cfg)
    spath = tmp_path / "summary.json"
    write_summary_json(result.summary, spath)
    loaded = json.loads(spath.read_text())
    assert loaded["kind"] == "ebcast-sweep-summary"
    assert len(loaded["conditions"]) == 2

    curve_files = write_curves_csv(result.summary, tmp_path / "curves")
    assert len(curve_files) == 1
    with open(curve_files[0], newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "pilot_ratio"
    assert len(rows) == 3  # header + 2 swept ratios


# ===================================================================
# dataset export
# ===================================================================

def _export(small_scene, desk_array, desk_ofdm, out, **kw):
    base = dict(conditions=[DataCondition(snr_db=math.inf,
                                          pilot_ratio=Fraction(1, 4))],
                users_per_cell=10, seed=5, n_basis=8)
    base.update(kw)
    return export_dataset(small_scene, desk_array, desk_ofdm, out, **base)


def test_export_dataset_round_trip(small_scene, desk_array, desk_ofdm, tmp_path):
    manifest = _export(small_scene, desk_array, desk_ofdm, tmp_path / "ds")
    assert manifest["format"] == "ebcast-dataset-v1"
    # 4 cells x 10 users x 1 condition, split 0.7/0.1/0.2
    counts = {s: manifest["splits"][s]["count"] for s in ("train", "val", "test")}
    assert counts == {"train": 28, "val": 4, "test": 8}
    assert manifest["records_total"] == 40

    data = load_dataset(tmp_path / "ds")["splits"]
    for split, n in counts.items():
        assert data[split]["h"].shape == (n, 1, 32, 32)
        assert data[split]["h0"].shape == (n, 1, 32, 32)
        assert data[split]["mask"].shape == (n, 32, 32)
        assert len(data[split]["records"]) == n
        # infinite SNR: observed equals masked truth exactly
        np.testing.assert_array_equal(
            data[split]["h0"][:, 0], data[split]["h"][:, 0] * data[split]["mask"])


def test_export_dataset_deterministic(small_scene, desk_array, desk_ofdm, tmp_path):
    m1 = _export(small_scene, desk_array, desk_ofdm, tmp_path / "a")
    m2 = _export(small_scene, desk_array, desk_ofdm, tmp_path / "b")
    c1 = {(s, k): f["sha256"] for s, entry in m1["splits"].items()
          for k, f in entry["files"].items()}
    c2 = {(s, k): f["sha256"] for s, entry in m2["splits"].items()
          for k, f in entry["files"].items()}
    assert c1 == c2


def test_export_dataset_checksum_guard(small_scene, desk_array, desk_ofdm, tmp_path):
    _export(small_scene, desk_array, desk_ofdm, tmp_path / "ds")
    victim = tmp_path / "ds" / "train" / "h.bin"
    raw = bytearray(victim.read_bytes())
    raw[0] ^= 0x01
    victim.write_bytes(bytes(raw))
    with pytest.raises(StoreIntegrityError):
        load_dataset(tmp_path / "ds")


def test_export_dataset_time_steps(small_scene, desk_array, desk_ofdm, tmp_path):
    _export(small_scene, desk_array, desk_ofdm, tmp_path / "ds",
            time_steps=3, time_step_s=0.01)
    data = load_dataset(tmp_path / "ds")["splits"]
    h = data["train"]["h"]
    assert h.shape[1] == 3
    # doppler rotation makes successive steps differ
    assert not np.array_equal(h[:, 0], h[:, 1])


def test_export_dataset_embeds_eb_store(small_scene, desk_array, desk_ofdm, tmp_path):
    from ebcast import load_store
    _export(small_scene, desk_array, desk_ofdm, tmp_path / "ds")
    store = load_store(tmp_path / "ds" / "eb_store")
    assert set(store.bases) == {c.cell_id for c in small_scene.all_cells()}
    assert all(not eb.noisy for eb in store.bases.values())


def test_export_dataset_noisy_store_flag(small_scene, desk_array, desk_ofdm, tmp_path):
    from ebcast import load_store
    _export(small_scene, desk_array, desk_ofdm, tmp_path / "ds", eb_snr_db=0.0)
    store = load_store(tmp_path / "ds" / "eb_store")
    assert all(eb.noisy for eb in store.bases.values())


def test_export_dataset_split_validation(small_scene, desk_array, desk_ofdm, tmp_path):
    with pytest.raises(InvalidInputError):
        _export(small_scene, desk_array, desk_ofdm, tmp_path / "ds",
                split=(0.5, 0.2, 0.2))
    with pytest.raises(InvalidInputError):
        _export(small_scene, desk_array, desk_ofdm, tmp_path / "ds",
                conditions=[])
