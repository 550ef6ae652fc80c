import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renewalopt import cli, coupled, datacenter, harness


# ---------------------------------------------------------------------------
# config schema
# ---------------------------------------------------------------------------


def test_minimal_one_slot_config_roundtrips():
    config = harness.config_from_mapping({"kind": "coupled-energy", "horizon": 1})
    assert config.horizon == 1
    assert harness.config_from_mapping(config.to_mapping()) == config
    summary = harness.run_experiment(config)
    assert summary.n_rows == 1


def test_unknown_kind_rejected():
    with pytest.raises(harness.ConfigError, match="unknown experiment kind"):
        harness.config_from_mapping({"kind": "frobnicate", "horizon": 1})


def test_unknown_keys_rejected():
    with pytest.raises(harness.ConfigError, match="unknown config key"):
        harness.config_from_mapping({"kind": "coupled-energy", "horizons": 5})
    with pytest.raises(harness.ConfigError, match="does not apply to"):
        harness.config_from_mapping(
            {"kind": "coupled-energy", "instance": {"beta": 1.0}})


def test_sweep_validation():
    with pytest.raises(harness.ConfigError, match="nonempty list"):
        harness.config_from_mapping({"kind": "coupled-energy", "v_values": []})
    with pytest.raises(harness.ConfigError, match="finite numbers"):
        harness.config_from_mapping(
            {"kind": "coupled-energy", "v_values": [1.0, "x"]})
    # sweeps the kind never reads may not be set at all
    with pytest.raises(harness.ConfigError, match="delta_values does not apply"):
        harness.config_from_mapping(
            {"kind": "coupled-energy", "delta_values": [0.6]})
    with pytest.raises(harness.ConfigError, match="strictly positive v"):
        harness.config_from_mapping(
            {"kind": "online-renewal", "v_values": [0.0]})
    with pytest.raises(harness.ConfigError, match="strictly positive alpha"):
        harness.config_from_mapping(
            {"kind": "ocmdp", "alpha_values": [-1.0]})


@pytest.mark.parametrize("key,value", [
    ("horizon", 0), ("replications", 0), ("jobs", 0), ("horizon", 2.5),
    ("seed", "three"), ("format", "xml"), ("oracle", "yes"),
])
def test_bad_field_values_rejected(key, value):
    with pytest.raises(harness.ConfigError):
        harness.config_from_mapping({"kind": "coupled-energy", key: value})


def test_load_config_reports_line_numbers(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text('{\n  "kind": "coupled-energy",\n'
                    '  "replications": 1,\n  "horizon": 0\n}\n')
    with pytest.raises(harness.ConfigError, match=r"exp\.json:4: horizon"):
        harness.load_config(path)
    path.write_text('{\n  "kind": "coupled-energy",\n  "horizon": 1,,\n}\n')
    with pytest.raises(harness.ConfigError, match=r"exp\.json:3: invalid JSON"):
        harness.load_config(path)


# ---------------------------------------------------------------------------
# sweep grid and summaries
# ---------------------------------------------------------------------------


def _small_energy_mapping(**extra):
    data = {"kind": "coupled-energy", "horizon": 150, "seed": 11}
    data.update(extra)
    return data


def test_v_sweep_emits_one_summary_row_per_value():
    config = harness.config_from_mapping(
        _small_energy_mapping(v_values=[1.0, 10.0, 100.0]))
    summary = harness.run_experiment(config)
    assert summary.n_rows == 3
    assert [row["v"] for row in summary.rows] == [1.0, 10.0, 100.0]
    assert summary.columns[:3] == ["v", "replication", "seed"]
    assert len(summary.aggregates) == 3


def test_rows_blocked_by_parameter_then_replication():
    config = harness.config_from_mapping(
        _small_energy_mapping(v_values=[2.0, 5.0], replications=3))
    summary = harness.run_experiment(config)
    assert [(row["v"], row["replication"]) for row in summary.rows] == [
        (2.0, 0), (2.0, 1), (2.0, 2), (5.0, 0), (5.0, 1), (5.0, 2)]
    for p_idx in range(2):
        for rep in range(3):
            run_seed, _ = harness.derive_seeds(11, p_idx, rep)
            assert summary.rows[3 * p_idx + rep]["seed"] == run_seed


def test_aggregates_equal_recomputation_from_rows():
    config = harness.config_from_mapping(
        _small_energy_mapping(v_values=[3.0, 30.0], replications=3))
    summary = harness.run_experiment(config)
    for p_idx, agg in enumerate(summary.aggregates):
        group = summary.rows[3 * p_idx:3 * p_idx + 3]
        assert agg["replications"] == 3
        for name, mean in agg["means"].items():
            total = 0.0
            for row in group:
                total += row[name]
            assert mean == total / 3  # exact: same fold order


def test_same_config_and_seed_bit_identical_files(tmp_path):
    base = _small_energy_mapping(v_values=[1.0, 10.0], replications=2)
    paths = []
    for name in ("a", "b"):
        out = tmp_path / name
        config = harness.config_from_mapping(dict(base, out_dir=str(out)))
        harness.run_experiment(config)
        paths.append(out)
    for fname in ("rows.csv", "summary.json"):
        assert (paths[0] / fname).read_bytes() == (paths[1] / fname).read_bytes()


def test_parallel_fold_matches_serial():
    base = _small_energy_mapping(v_values=[1.0, 10.0], replications=2)
    serial = harness.run_experiment(harness.config_from_mapping(base))
    parallel = harness.run_experiment(
        harness.config_from_mapping(dict(base, jobs=2)))
    assert parallel.rows == serial.rows
    assert parallel.aggregates == serial.aggregates


def test_master_seed_moves_results():
    one = harness.run_experiment(
        harness.config_from_mapping(_small_energy_mapping(seed=1)))
    two = harness.run_experiment(
        harness.config_from_mapping(_small_energy_mapping(seed=2)))
    assert one.rows[0]["penalty_avg"] != two.rows[0]["penalty_avg"]


def test_invariants_report_passes():
    for name, passed, detail in harness.invariants_report():
        assert passed, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# kinds and oracles
# ---------------------------------------------------------------------------


def test_oracle_columns_attached():
    config = harness.config_from_mapping(
        _small_energy_mapping(v_values=[5.0], oracle=True))
    summary = harness.run_experiment(config)
    row = summary.rows[0]
    assert row["oracle_value"] == pytest.approx(coupled.energy_oracle_value(5))
    assert row["oracle_gap"] == pytest.approx(
        row["penalty_avg"] - row["oracle_value"])


def test_oracle_only_rows():
    config = harness.config_from_mapping({
        "kind": "oracle-only", "horizon": 1, "replications": 2,
        "instance": {"target": "coupled-energy", "instance": {"n_servers": 6}}})
    summary = harness.run_experiment(config)
    assert summary.n_rows == 2
    expected = coupled.energy_oracle_value(6)
    assert all(row["oracle_value"] == pytest.approx(expected)
               for row in summary.rows)


def test_oracle_only_needs_simulated_target():
    bad = harness.config_from_mapping({
        "kind": "oracle-only", "horizon": 1,
        "instance": {"target": "oracle-only"}})
    with pytest.raises(harness.ConfigError, match="target"):
        harness.run_experiment(bad)


def test_datacenter_has_no_oracle():
    config = harness.config_from_mapping({
        "kind": "datacenter", "horizon": 10, "oracle": True,
        "instance": {"servers": [{"active_power": 4.0, "mu": ["constant", 3.0],
                                  "sleep_modes": [[0.0, 2.0, 5.0]],
                                  "i_max": 100, "r_max": 40.0}]}})
    with pytest.raises(harness.ConfigError, match="no oracle"):
        harness.run_experiment(config)


def test_bandit_kind_with_explicit_users():
    config = harness.config_from_mapping({
        "kind": "bandit", "horizon": 400, "v_values": [20.0],
        "instance": {"users": [
            {"lam": 0.3, "mean_file": 2.0, "actions": [[0, 0], [0.4, 1.5]]},
            {"lam": 0.5, "mean_file": 1.5, "actions": [[0, 0], [0.6, 2.0]]},
        ], "m_servers": 1, "beta": 1.0}})
    summary = harness.run_experiment(config)
    assert set(summary.rows[0]) >= {"throughput_avg", "power_avg", "queue_max"}


def test_ocmdp_kind_runs_example():
    config = harness.config_from_mapping({
        "kind": "ocmdp", "horizon": 200, "v_values": [5.0],
        "alpha_values": [200.0], "oracle": True})
    summary = harness.run_experiment(config)
    row = summary.rows[0]
    assert row["oracle_gap"] == pytest.approx(
        row["penalty_avg"] - row["oracle_value"])
    assert row["queue_max"] >= 0.0


def test_missing_instance_key_is_a_config_error():
    config = harness.config_from_mapping({"kind": "bandit", "horizon": 10})
    with pytest.raises(harness.ConfigError, match="needs instance key"):
        harness.run_experiment(config)


# ---------------------------------------------------------------------------
# trace ingestion
# ---------------------------------------------------------------------------


def test_ingest_empty_file_rejected(tmp_path):
    path = tmp_path / "trace.csv"
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        harness.ingest_trace(path)


def test_ingest_three_rows(tmp_path):
    path = tmp_path / "trace.csv"
    path.write_text("slot,arrivals,cost\n0,12,2.0\n1,0,1.5\n2,30,3.0\n")
    records = harness.ingest_trace(path)
    assert len(records) == 3
    assert records[2] == datacenter.TraceRecord(2, 30, 3.0)


def test_ingest_rejects_gaps_and_negatives(tmp_path):
    path = tmp_path / "trace.csv"
    path.write_text("slot,arrivals,cost\n0,12,2.0\n2,5,1.0\n")
    with pytest.raises(ValueError, match="contiguous|run 0,1"):
        harness.ingest_trace(path)
    path.write_text("slot,arrivals,cost\n0,-3,2.0\n")
    with pytest.raises(ValueError, match="nonnegative"):
        harness.ingest_trace(path)


def test_generated_trace_roundtrips(tmp_path):
    records = datacenter.uniform_trace(50, seed=4)
    path = tmp_path / "trace.csv"
    datacenter.write_trace(path, records)
    assert harness.ingest_trace(path) == records


# ---------------------------------------------------------------------------
# metrics files
# ---------------------------------------------------------------------------


def test_metrics_roundtrip_both_formats(tmp_path):
    rng = np.random.default_rng(0)
    table = {"first": rng.normal(size=200) * 1e6,
             "second": rng.uniform(1e-9, 1.0, size=200),
             "slot": np.arange(200)}
    for fmt in ("csv", "json"):
        path = tmp_path / f"m.{fmt}"
        harness.write_metrics(table, path, fmt)
        back = harness.read_metrics(path)
        assert list(back) == ["first", "second", "slot"]
        for name in ("first", "second"):
            rel = np.abs(back[name] - table[name]) / np.abs(table[name])
            assert rel.max() < 1e-11
        assert back["slot"].dtype == np.int64
        assert np.array_equal(back["slot"], table["slot"])


def test_metrics_csv_and_json_parse_identically(tmp_path):
    rng = np.random.default_rng(3)
    table = {"x": rng.normal(size=500), "n": rng.integers(0, 9, size=500)}
    harness.write_metrics(table, tmp_path / "m.csv", "csv")
    harness.write_metrics(table, tmp_path / "m.json", "json")
    from_csv = harness.read_metrics(tmp_path / "m.csv")
    from_json = harness.read_metrics(tmp_path / "m.json")
    for name in table:
        assert np.array_equal(from_csv[name], from_json[name])


def test_metrics_validation(tmp_path):
    with pytest.raises(ValueError, match="at least one column"):
        harness.write_metrics({}, tmp_path / "m.csv")
    with pytest.raises(ValueError, match="differ in length"):
        harness.write_metrics({"a": [1.0], "b": [1.0, 2.0]}, tmp_path / "m.csv")
    with pytest.raises(ValueError, match="one dimensional"):
        harness.write_metrics({"a": np.zeros((2, 2))}, tmp_path / "m.csv")
    with pytest.raises(ValueError, match="format"):
        harness.write_metrics({"a": [1.0]}, tmp_path / "m.csv", "tsv")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=-1e12, max_value=1e12,
                          allow_nan=False, allow_subnormal=False),
                min_size=1, max_size=30))
def test_metrics_roundtrip_property(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("metrics") / "m.csv"
    harness.write_metrics({"col": values}, path)
    back = harness.read_metrics(path)["col"]
    expected = np.asarray(values, dtype=float)
    scale = np.maximum(np.abs(expected), 1e-300)
    assert (np.abs(back - expected) / scale).max() < 1e-11


def test_metrics_million_rows_under_budget(tmp_path):
    import time

    rng = np.random.default_rng(1)
    table = {"a": rng.normal(size=10**6), "b": rng.normal(size=10**6),
             "slot": np.arange(10**6)}
    start = time.perf_counter()
    harness.write_metrics(table, tmp_path / "big.csv", "csv")
    assert time.perf_counter() - start < 5.0


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _write_config(tmp_path, **extra):
    data = _small_energy_mapping(**extra)
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(data))
    return path


def test_cli_runs_config_and_writes_files(tmp_path, capsys):
    path = _write_config(tmp_path, v_values=[1.0, 10.0])
    out = tmp_path / "results"
    assert cli.main(["--config", str(path), "--out", str(out)]) == 0
    assert (out / "rows.csv").exists() and (out / "summary.json").exists()
    stdout = capsys.readouterr().out
    assert "coupled-energy" in stdout and "2 rows" in stdout


def test_cli_format_override(tmp_path):
    path = _write_config(tmp_path)
    out = tmp_path / "results"
    assert cli.main(["--config", str(path), "--out", str(out),
                     "--format", "json"]) == 0
    assert (out / "rows.json").exists()
    assert not (out / "rows.csv").exists()


def test_cli_seed_override_changes_rows(tmp_path):
    path = _write_config(tmp_path)
    outs = []
    for seed in (1, 2):
        out = tmp_path / f"r{seed}"
        assert cli.main(["--config", str(path), "--out", str(out),
                         "--seed", str(seed)]) == 0
        outs.append((out / "rows.csv").read_bytes())
    assert outs[0] != outs[1]


def test_cli_errors_exit_one(tmp_path, capsys):
    assert cli.main([]) == 1
    assert cli.main(["--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "nope"}')
    assert cli.main(["--config", str(bad)]) == 1
    assert "error:" in capsys.readouterr().err


def test_cli_invariants_suite(capsys):
    assert cli.main(["--suite", "invariants"]) == 0
    stdout = capsys.readouterr().out
    assert "PASS determinism" in stdout
    assert "PASS parallel-fold" in stdout
