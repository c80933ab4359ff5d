import dataclasses
import json
import os
from pathlib import Path

import numpy as np
import pytest

from gfbounds import Gaussian, MonteCarlo, SpdMatrix, chol_sample
from gfbounds.cli import main
from gfbounds.experiment import (
    DensitySpec,
    builtin_model,
    config_to_toml,
    emit_density_csv,
    load_config,
    parse_config,
    run_experiment,
)

DATA = Path(__file__).parent / "data"


def read_report(path):
    with open(path) as fh:
        return json.load(fh)


def masked(report: dict) -> dict:
    clone = json.loads(json.dumps(report))
    clone.pop("timings", None)
    return clone


class TestConfig:
    def test_builtin_names(self):
        for name in ("ungm-f1", "ungm-f2"):
            cfg = builtin_model(name)
            assert cfg.name == name
            assert cfg.scheme == MonteCarlo(1_000_000, 1)
        with pytest.raises(KeyError, match="ungm-f1, ungm-f2"):
            builtin_model("ungm-f3")

    @pytest.mark.parametrize("name", ["ungm-f1", "ungm-f2"])
    def test_builtin_round_trips_through_serialization(self, name, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        text = config_to_toml(builtin_model(name))
        assert config_to_toml(parse_config(text)) == text

    def test_demo_config_round_trips(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = load_config(str(DATA / "affine-demo.toml"))
        assert config_to_toml(parse_config(config_to_toml(cfg))) == config_to_toml(cfg)

    def test_missing_section_reported(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        with pytest.raises(ValueError, match="missing key"):
            parse_config('[model]\nn = 1\nm = 1\nf = ["x1"]\nh = ["x1"]\n')

    def test_bad_scheme_kind(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        text = config_to_toml(builtin_model("ungm-f2")).replace('"mc"', '"qmc"')
        with pytest.raises(ValueError, match="scheme kind"):
            parse_config(text)

    def test_gauss_hermite_state_dimension_cap(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        n = 5
        f = [f"x{i + 1}" for i in range(n)]
        cfg = dataclasses.replace(
            builtin_model("ungm-f2"),
            n=n,
            f_exprs=tuple(f),
            h_exprs=("x1",),
            prior_mean=(0.0,) * n,
            prior_cov=tuple(np.eye(n).ravel()),
            sigma_u=tuple(np.eye(n).ravel()),
        )
        with pytest.raises(ValueError, match="Monte Carlo"):
            parse_config(config_to_toml(cfg).replace(
                'kind = "mc"\nsamples = 1000000\nseed = 1', 'kind = "gauss-hermite"\norder = 5'
            ))

    def test_unknown_mode_rejected(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        text = config_to_toml(builtin_model("ungm-f2")).replace(
            '"as_stated"', '"verbatim"'
        )
        with pytest.raises(ValueError, match="mode"):
            parse_config(text)


class TestRunExperiment:
    def test_affine_demo_matches_golden_report(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = load_config(str(DATA / "affine-demo.toml"))
        report = run_experiment(cfg)
        assert os.path.exists(cfg.report_path)
        golden = read_report(DATA / "affine-demo-report.json")
        assert masked(read_report(cfg.report_path)) == golden
        assert masked(report) == golden

    def test_affine_demo_bound_and_kl_vanish(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        report = run_experiment(load_config(str(DATA / "affine-demo.toml")))
        for entry in report["bounds"].values():
            assert abs(entry["total"]) <= 1e-6
        assert abs(report["distances"]["kl"]) <= 1e-9

    def test_repeat_runs_byte_identical_with_any_worker_count(
        self, tmp_path, monkeypatch
    ):
        monkeypatch.chdir(tmp_path)
        cfg = dataclasses.replace(
            builtin_model("ungm-f2"),
            scheme=MonteCarlo(200_000, 1),
            report_path="first.json",
        )
        monkeypatch.setenv("CERTIFY_THREADS", "1")
        run_experiment(cfg)
        monkeypatch.setenv("CERTIFY_THREADS", "3")
        run_experiment(dataclasses.replace(cfg, report_path="second.json"))
        first = masked(read_report("first.json"))
        second = masked(read_report("second.json"))
        first["config"]["output"]["report"] = second["config"]["output"]["report"] = ""
        assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)

    def test_bound_dominates_empirical_distance(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = dataclasses.replace(
            builtin_model("ungm-f2"), scheme=MonteCarlo(100_000, 1)
        )
        report = run_experiment(cfg)
        assert (
            report["bounds"]["as_stated"]["total"]
            >= report["empirical_w1"]["estimate"]
        )

    def test_density_stage_writes_csv(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = dataclasses.replace(
            builtin_model("ungm-f1"),
            scheme=MonteCarlo(100_000, 1),
            empirical=None,
            density=DensitySpec(variable="Y", bins=120, lo=-1.0, hi=8.0, path="y.csv"),
        )
        report = run_experiment(cfg)
        assert report["density"]["path"] == "y.csv"
        rows = np.loadtxt("y.csv", delimiter=",", skiprows=1)
        centers, density, overlay = rows[:, 0], rows[:, 1], rows[:, 2]
        width = centers[1] - centers[0]
        assert np.sum(density * width) == pytest.approx(1.0, abs=1e-3)
        # measurement distribution is right-skewed: more than half of the
        # mass sits below the overlay Gaussian's median (its mean)
        overlay_mean = report["filter"]["mean_y"][0]
        assert np.sum(density[centers < overlay_mean] * width) > 0.5


class TestDensityCsv:
    def test_standard_normal_density_integrates_to_one(self, tmp_path):
        samples = chol_sample(Gaussian([0.0], SpdMatrix([[1.0]])), 1_000_000, 3)
        path = tmp_path / "density.csv"
        emit_density_csv(samples[:, 0], 100, -5.0, 5.0, str(path))
        rows = np.loadtxt(path, delimiter=",", skiprows=1)
        width = rows[1, 0] - rows[0, 0]
        assert np.sum(rows[:, 1] * width) == pytest.approx(1.0, abs=1e-3)
        # overlay matches the samples' own moments here
        assert rows[:, 2].max() == pytest.approx(1.0 / np.sqrt(2 * np.pi), rel=5e-3)

    def test_bad_inputs(self, tmp_path):
        samples = np.zeros(100)
        with pytest.raises(ValueError, match="bins"):
            emit_density_csv(samples, 5, -1.0, 1.0, str(tmp_path / "x.csv"))
        with pytest.raises(ValueError, match="interval"):
            emit_density_csv(samples, 20, 1.0, 1.0, str(tmp_path / "x.csv"))
        with pytest.raises(ValueError, match="range"):
            emit_density_csv(samples, 20, 5.0, 6.0, str(tmp_path / "x.csv"))

    def test_degenerate_samples_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="degenerate"):
            emit_density_csv(np.zeros(100), 20, -1.0, 1.0, str(tmp_path / "x.csv"))

    def test_unwritable_path(self):
        samples = np.linspace(-0.9, 0.9, 100)
        with pytest.raises(OSError):
            emit_density_csv(samples, 20, -1.0, 1.0, "/nonexistent/dir/x.csv")


class TestCli:
    def test_builtin_run_and_summary(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        code = main(
            ["builtin", "ungm-f2", "--samples", "50000", "--mode", "both", "--out", "r.json"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "report written to r.json" in out
        assert main(["report", "r.json", "--summary"]) == 0
        summary = capsys.readouterr().out
        assert "bound[as_stated]" in summary
        assert "bound[sqrt_second_term]" in summary
        assert "empirical W1" in summary

    def test_run_subcommand_with_config(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(["run", str(DATA / "affine-demo.toml")]) == 0
        assert os.path.exists("affine-demo-report.json")

    def test_unknown_builtin_fails_with_listing(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(["builtin", "ungm-f9"]) == 1
        err = capsys.readouterr().err
        assert "ungm-f1" in err and "ungm-f2" in err

    def test_invalid_config_is_stage_tagged(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        bad = tmp_path / "bad.toml"
        bad.write_text(config_to_toml(builtin_model("ungm-f2")).replace('"mc"', '"qmc"'))
        assert main(["run", str(bad)]) == 1
        assert "[config]" in capsys.readouterr().err

    def test_density_flags(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = main(
            [
                "builtin",
                "ungm-f2",
                "--samples",
                "50000",
                "--out",
                "d.json",
                "--emit-density",
                "Y",
                "--bins",
                "60",
                "--range=-1,6",
            ]
        )
        assert code == 0
        assert os.path.exists("d-density.csv")

    def test_seed_override_changes_report(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        main(["builtin", "ungm-f2", "--samples", "50000", "--out", "a.json"])
        main(["builtin", "ungm-f2", "--samples", "50000", "--seed", "7", "--out", "b.json"])
        a, b = read_report("a.json"), read_report("b.json")
        assert a["bounds"]["as_stated"]["total"] != b["bounds"]["as_stated"]["total"]
