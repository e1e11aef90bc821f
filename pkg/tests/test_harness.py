import csv
import os

import numpy as np
import pytest

from crbeam.harness import (
    EmptyInput,
    ExperimentConfig,
    MetricTable,
    ParseError,
    RangeError,
    UnknownKey,
    empirical_cdf,
    parse_config,
    run_experiment,
    run_sweep,
    verify_manifest,
)


def small_cfg(tmp_path, **kw):
    defaults = dict(runs=2, seed=7, links=2, out_dir=str(tmp_path / "out"),
                    figures=False)
    defaults.update(kw)
    return ExperimentConfig(**defaults)


# ------------------------------------------------------------------ parsing

def test_parse_empty_gives_defaults():
    assert parse_config("") == ExperimentConfig()


def test_parse_reference_is_baseline():
    from crbeam.cli import reference_config_text
    cfg = parse_config(reference_config_text())
    assert cfg.links == 4
    assert cfg.path_loss_exponent == 3.5
    assert cfg.direct_distance_m == 30.0
    assert cfg.snr_db == 15.0
    assert cfg.iota_max_w == 4e-7
    assert cfg.rho == 0.05
    assert cfg.tau == 0.1


def test_parse_rejects_negative_runs_with_line():
    with pytest.raises(RangeError, match="line 2"):
        parse_config("[experiment]\nruns = -1\n")


def test_parse_rejects_unknown_key_and_section():
    with pytest.raises(UnknownKey, match="frobnicate"):
        parse_config("[experiment]\nfrobnicate = 3\n")
    with pytest.raises(UnknownKey, match="warp"):
        parse_config("[warp]\nx = 1\n")


def test_parse_rejects_malformed_lines():
    with pytest.raises(ParseError, match="line 1"):
        parse_config("runs = 5\n")  # key before section
    with pytest.raises(ParseError, match="line 2"):
        parse_config("[experiment]\nruns 5\n")


def test_parse_sweep_section():
    cfg = parse_config("[sweep]\nparameter = iota_max\n"
                       "values = 1e-8, 1e-7, 1e-6\n")
    assert cfg.sweep_parameter == "iota_max"
    assert cfg.sweep_values == (1e-8, 1e-7, 1e-6)
    with pytest.raises(RangeError):
        parse_config("[sweep]\nparameter = bandwidth\n")


# ------------------------------------------------------------- empirical cdf

def test_empirical_cdf_single_value():
    assert empirical_cdf([5.0]) == [(5.0, 1.0)]


def test_empirical_cdf_ties():
    got = empirical_cdf([1, 2, 2, 4])
    assert got == [(1.0, 0.25), (2.0, 0.75), (2.0, 0.75), (4.0, 1.0)]


def test_empirical_cdf_empty():
    with pytest.raises(EmptyInput):
        empirical_cdf([])


def test_empirical_cdf_uniform_dkw_bound():
    rng = np.random.default_rng(0)
    vals = rng.uniform(size=1000)
    dev = max(abs(p - v) for v, p in empirical_cdf(vals))
    assert dev <= 0.06


# --------------------------------------------------------------- experiments

def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_experiment_outputs_and_determinism(tmp_path):
    cfg = small_cfg(tmp_path, runs=2)
    table = run_experiment(cfg)
    out = cfg.out_dir
    for name in ("interference_cdf.csv", "mse_trace.csv", "summary.csv",
                 "budgets.csv", "MANIFEST"):
        assert os.path.exists(os.path.join(out, name))
    first = {name: open(os.path.join(out, name), "rb").read()
             for name in ("interference_cdf.csv", "mse_trace.csv",
                          "summary.csv", "budgets.csv", "MANIFEST")}
    # identical config and seed: byte-identical outputs
    cfg2 = small_cfg(tmp_path, runs=2, out_dir=str(tmp_path / "out2"))
    run_experiment(cfg2)
    for name, data in first.items():
        assert open(os.path.join(cfg2.out_dir, name), "rb").read() == data
    assert verify_manifest(out) == []
    assert len(table.values("final_sum_mse")) == 2


def test_run_experiment_threads_match_serial(tmp_path):
    cfg = small_cfg(tmp_path, runs=3)
    run_experiment(cfg)
    cfg_t = small_cfg(tmp_path, runs=3, threads=3,
                      out_dir=str(tmp_path / "out_threads"))
    run_experiment(cfg_t)
    for name in ("interference_cdf.csv", "mse_trace.csv", "summary.csv"):
        a = open(os.path.join(cfg.out_dir, name), "rb").read()
        b = open(os.path.join(cfg_t.out_dir, name), "rb").read()
        assert a == b


def test_run_experiment_robust_never_exceeds_limit(tmp_path):
    cfg = small_cfg(tmp_path, runs=3, links=3)
    run_experiment(cfg)
    rows = read_csv(os.path.join(cfg.out_dir, "interference_cdf.csv"))
    assert rows
    for row in rows:
        lim = float(row["limit_w"])
        assert float(row["worst_case_w"]) <= lim * (1 + 1e-6)
        assert float(row["realized_w"]) <= lim * (1 + 1e-6)


def test_run_experiment_primal_decomp_budgets(tmp_path):
    cfg = small_cfg(tmp_path, runs=1, algo="primal_decomp", max_masters=8)
    run_experiment(cfg)
    rows = read_csv(os.path.join(cfg.out_dir, "budgets.csv"))
    assert rows
    per_master = {}
    for row in rows:
        per_master.setdefault(int(row["master_iter"]), 0.0)
        per_master[int(row["master_iter"])] += float(row["iota_w"])
    for total in per_master.values():
        assert total <= cfg.iota_max_w * (1 + 1e-9)


def test_run_experiment_figures(tmp_path):
    cfg = small_cfg(tmp_path, runs=1, figures=True)
    run_experiment(cfg)
    assert os.path.exists(os.path.join(cfg.out_dir, "interference_cdf.png"))
    assert os.path.exists(os.path.join(cfg.out_dir, "mse_trace.png"))
    with open(os.path.join(cfg.out_dir, "MANIFEST")) as fh:
        manifest = fh.read()
    assert "interference_cdf.png" in manifest
    assert verify_manifest(cfg.out_dir) == []


def test_run_sweep_structure(tmp_path):
    cfg = small_cfg(tmp_path, runs=1, sweep_parameter="iota_max",
                    sweep_values=(1e-7, 1e-6))
    rows, tables = run_sweep(cfg)
    assert len(rows) == 2 and len(tables) == 2
    assert os.path.exists(os.path.join(cfg.out_dir, "sweep.csv"))
    assert os.path.exists(os.path.join(cfg.out_dir, "point_0",
                                       "interference_cdf.csv"))
    got = read_csv(os.path.join(cfg.out_dir, "sweep.csv"))
    assert [float(r["value"]) for r in got] == [1e-7, 1e-6]


def test_metric_table_round_trip():
    t = MetricTable()
    t.add(0, 7, "final_sum_mse", 3.5)
    t.add(1, 7, "final_sum_mse", 4.5)
    assert np.allclose(t.values("final_sum_mse"), [3.5, 4.5])
    t.build_cdf("x", [2.0, 1.0])
    assert t.cdfs["x"] == [(1.0, 0.5), (2.0, 1.0)]
