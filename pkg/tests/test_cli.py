"""End-to-end command runs through main(argv) on small panels."""

import json

import numpy as np
import pytest

from topofolio.cli import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_NUMERICAL,
    EXIT_OK,
    main,
)


def write_panel_csv(path, seed=5, T=120, n=6):
    """Two correlated 3-asset blocks plus an index tracking the first block."""
    rng = np.random.default_rng(seed)
    r = rng.normal(0.0, 0.01, size=(T, n))
    r[:, : n // 2] += rng.normal(0.0, 0.02, size=(T, 1))
    r[:, n // 2 :] += rng.normal(0.0, 0.02, size=(T, 1))
    prices = 100.0 * np.cumprod(1.0 + np.vstack([np.zeros(n), r]), axis=0)
    index = prices[:, : n // 2].mean(axis=1)
    names = [f"A{j}" for j in range(n // 2)] + [f"B{j}" for j in range(n // 2)]
    with open(path, "w") as fh:
        fh.write("date,IDX," + ",".join(names) + "\n")
        for t in range(T + 1):
            cells = [f"d{t:03d}", "%.12f" % index[t]]
            cells += ["%.12f" % prices[t, j] for j in range(n)]
            fh.write(",".join(cells) + "\n")
    return names


@pytest.fixture
def panel_csv(tmp_path):
    path = tmp_path / "panel.csv"
    write_panel_csv(path)
    return path


def base_args(panel_csv, tmp_path, *extra):
    cfg = tmp_path / "run.cfg"
    if not cfg.exists():
        cfg.write_text(
            f"data = {panel_csv}\n"
            "format = csv\n"
            "index_column = IDX\n"
            "kernel = K5\n"
            "m = 3\n"
            f"outdir = {tmp_path / 'out'}\n"
            "prefix = toy\n"
        )
    return ["-c", str(cfg), *extra]


class TestDistancesCommand:
    def test_writes_both_matrices(self, panel_csv, tmp_path, capsys):
        rc = main(["distances", *base_args(panel_csv, tmp_path)])
        assert rc == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        dist = tmp_path / "out" / "toy_distance.csv"
        sim = tmp_path / "out" / "toy_similarity.csv"
        assert dist.exists() and sim.exists()
        assert str(dist) in out and str(sim) in out

        header = dist.read_text().splitlines()[0]
        assert header == "entity,INDEX,A0,A1,A2,B0,B1,B2"
        rows = [line.split(",") for line in sim.read_text().splitlines()[1:]]
        diag = [float(row[i + 1]) for i, row in enumerate(rows)]
        assert diag == [1.0] * 7

    def test_rerun_is_byte_identical(self, panel_csv, tmp_path):
        args = base_args(panel_csv, tmp_path)
        assert main(["distances", *args]) == EXIT_OK
        first = (tmp_path / "out" / "toy_distance.csv").read_bytes()
        assert main(["distances", *args]) == EXIT_OK
        assert (tmp_path / "out" / "toy_distance.csv").read_bytes() == first

    def test_unknown_kernel_is_config_error(self, panel_csv, tmp_path, capsys):
        rc = main(["distances", *base_args(panel_csv, tmp_path), "--set", "kernel=K99"])
        assert rc == EXIT_CONFIG
        err = capsys.readouterr().err
        assert err.startswith("error: code=2 kind=config:")
        assert "K99" in err

    def test_missing_data_file_is_data_error(self, panel_csv, tmp_path, capsys):
        rc = main([
            "distances", *base_args(panel_csv, tmp_path),
            "--set", f"data={tmp_path / 'gone.csv'}",
        ])
        assert rc == EXIT_DATA
        err = capsys.readouterr().err
        assert err.startswith("error: code=3 kind=data:")
        assert "gone.csv" in err

    def test_data_key_required(self, tmp_path, capsys):
        cfg = tmp_path / "bare.cfg"
        cfg.write_text("kernel = K5\n")
        rc = main(["distances", "-c", str(cfg)])
        assert rc == EXIT_CONFIG
        assert "data" in capsys.readouterr().err

    def test_charts_format_rejected_for_panel_commands(self, panel_csv, tmp_path, capsys):
        rc = main(["distances", *base_args(panel_csv, tmp_path), "--set", "format=charts"])
        assert rc == EXIT_CONFIG
        assert "price panel" in capsys.readouterr().err

    def test_subseries_keys_rejected_for_pointwise_kernel(self, panel_csv, tmp_path, capsys):
        rc = main([
            "distances", *base_args(panel_csv, tmp_path),
            "--set", "subseries_length=30", "--set", "subseries_shift=15",
        ])
        assert rc == EXIT_CONFIG
        assert "no sub-series plan" in capsys.readouterr().err

    def test_outdir_env_var_wins(self, panel_csv, tmp_path, monkeypatch):
        envdir = tmp_path / "elsewhere"
        monkeypatch.setenv("TOPOFOLIO_OUTDIR", str(envdir))
        assert main(["distances", *base_args(panel_csv, tmp_path)]) == EXIT_OK
        assert (envdir / "toy_distance.csv").exists()
        assert not (tmp_path / "out").exists()

    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(["distances", "-c", str(tmp_path / "none.cfg")])
        assert rc == EXIT_CONFIG
        assert "cannot read config" in capsys.readouterr().err


class TestClusterCommand:
    def test_writes_partition(self, panel_csv, tmp_path):
        rc = main(["cluster", *base_args(panel_csv, tmp_path)])
        assert rc == EXIT_OK
        lines = (tmp_path / "out" / "toy_clusters.csv").read_text().splitlines()
        assert lines[0] == "entity_id,cluster_id,is_exemplar"
        rows = {line.split(",")[0]: line.split(",")[1] for line in lines[1:]}
        assert len(rows) == 7
        # the index was built from the A block, so they must share a cluster
        assert rows["INDEX"] == rows["A0"] == rows["A1"] == rows["A2"]
        assert rows["B0"] != rows["INDEX"]

    def test_kmedoids_path(self, panel_csv, tmp_path):
        rc = main([
            "cluster", *base_args(panel_csv, tmp_path),
            "--set", "clustering=KMedoids", "--set", "k=2",
        ])
        assert rc == EXIT_OK
        lines = (tmp_path / "out" / "toy_clusters.csv").read_text().splitlines()
        labels = {line.split(",")[1] for line in lines[1:]}
        assert len(labels) == 2


class TestBacktestCommand:
    def test_strategy1_writes_report(self, panel_csv, tmp_path):
        rc = main([
            "backtest", *base_args(panel_csv, tmp_path),
            "--set", "kernel=K6", "--set", "in_len=60",
            "--set", "out_len=20", "--set", "step=20",
        ])
        assert rc == EXIT_OK
        report = json.loads((tmp_path / "out" / "toy.json").read_text())
        assert report["config"]["strategy"] == "IndexTracking"
        assert len(report["windows"]) == 3
        weights0 = report["windows"][0]["weights"]
        assert set(weights0) <= {"A0", "A1", "A2"}
        assert (tmp_path / "out" / "toy_metrics.csv").exists()
        assert (tmp_path / "out" / "toy_window000_clusters.csv").exists()

    def test_benchmark_mode_and_determinism(self, panel_csv, tmp_path):
        args = [
            "backtest", *base_args(panel_csv, tmp_path),
            "--set", "strategy=Naive", "--set", "mode=benchmark",
            "--set", "in_len=60", "--set", "out_len=20", "--set", "step=20",
        ]
        assert main(args) == EXIT_OK
        first = (tmp_path / "out" / "toy.json").read_bytes()
        assert main(args) == EXIT_OK
        assert (tmp_path / "out" / "toy.json").read_bytes() == first

    def test_too_short_panel_is_data_error(self, panel_csv, tmp_path, capsys):
        rc = main(["backtest", *base_args(panel_csv, tmp_path), "--set", "in_len=500"])
        assert rc == EXIT_DATA
        assert capsys.readouterr().err.startswith("error: code=3 kind=data:")


class TestCasestudyCommand:
    def test_surrogate_run(self, tmp_path, capsys):
        cfg = tmp_path / "cs.cfg"
        cfg.write_text(
            "seed = 0\n"
            "distances = ED\n"
            f"outdir = {tmp_path}\n"
            "prefix = cs\n"
        )
        rc = main(["casestudy", "-c", str(cfg)])
        assert rc == EXIT_OK
        lines = (tmp_path / "cs_accuracy.csv").read_text().splitlines()
        assert lines[0] == "distance,algorithm,accuracy"
        assert [line.split(",")[:2] for line in lines[1:]] == [
            ["ED", "KMedoids"], ["ED", "APC"],
        ]
        for line in lines[1:]:
            assert 0.0 <= float(line.split(",")[2]) <= 1.0

    def test_needs_seed_or_data(self, tmp_path, capsys):
        cfg = tmp_path / "cs.cfg"
        cfg.write_text(f"outdir = {tmp_path}\n")
        rc = main(["casestudy", "-c", str(cfg)])
        assert rc == EXIT_CONFIG
        assert "seed=" in capsys.readouterr().err

    def test_unknown_distance_name(self, tmp_path, capsys):
        cfg = tmp_path / "cs.cfg"
        cfg.write_text(f"seed = 0\ndistances = XD\noutdir = {tmp_path}\n")
        rc = main(["casestudy", "-c", str(cfg)])
        assert rc == EXIT_CONFIG
        assert "XD" in capsys.readouterr().err


class TestReportMergeCommand:
    def test_merges_two_reports(self, panel_csv, tmp_path):
        base = base_args(panel_csv, tmp_path)
        common = ["--set", "in_len=60", "--set", "out_len=20", "--set", "step=20"]
        assert main([
            "backtest", *base, "--set", "kernel=K6", "--set", "prefix=s1", *common,
        ]) == EXIT_OK
        assert main([
            "backtest", *base, "--set", "strategy=Naive", "--set", "mode=benchmark",
            "--set", "prefix=bench", *common,
        ]) == EXIT_OK
        rc = main([
            "report-merge", *base, "--set", "prefix=cmp",
            str(tmp_path / "out" / "s1.json"), str(tmp_path / "out" / "bench.json"),
        ])
        assert rc == EXIT_OK
        lines = (tmp_path / "out" / "cmp_compare.csv").read_text().splitlines()
        assert lines[0] == "name,value"
        names = [line.split(",")[0] for line in lines[1:]]
        assert names == [
            "test_mean_diff_t_stat", "test_mean_diff_t_p",
            "test_sharpe_z_stat", "test_sharpe_z_p",
            "test_ceq_z_stat", "test_ceq_z_p",
        ]
        for line in lines[1:]:
            assert np.isfinite(float(line.split(",")[1]))

    def test_invalid_report_json(self, panel_csv, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("not json at all")
        rc = main([
            "report-merge", *base_args(panel_csv, tmp_path), str(bad), str(bad),
        ])
        assert rc == EXIT_DATA
        assert "not valid report JSON" in capsys.readouterr().err


class TestExitCodes:
    def test_constants(self):
        assert (EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL) == (0, 2, 3, 4)

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "distances" in capsys.readouterr().out

    def test_no_command_is_config_error(self, capsys):
        assert main([]) == EXIT_CONFIG
