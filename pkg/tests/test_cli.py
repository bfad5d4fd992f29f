"""Tests for config validation, CSV output and CLI determinism."""

import json
import math

import numpy as np
import pytest

from mlen.cli import (ConfigError, ExperimentSpec, main, run_experiment,
                      validate_config)

CAT_CONFIG = """
[depolarize-cat:demo]
times = 0.5, 1.0
b_sizes = 4, 8, 16
samples = 0
seed = 3
"""

BAD_CONFIG = """
[cmi-scan:broken]
beta_i = 2.0
alpha = 1.5
times = 1, 2
b_sizes = 4
samples = 100
"""


class TestValidateConfig:
    def test_accepts_minimal_cat(self):
        specs = validate_config(CAT_CONFIG)
        assert len(specs) == 1
        assert specs[0].kind == "depolarize-cat"
        assert specs[0].seed == 3
        assert specs[0].times == (0.5, 1.0)

    def test_alpha_out_of_range(self):
        with pytest.raises(ConfigError) as err:
            validate_config(BAD_CONFIG)
        text = "\n".join(err.value.problems)
        assert "alpha" in text and "(0, 1]" in text
        assert "beta_f" in text  # missing required field is named

    def test_missing_field_named(self):
        with pytest.raises(ConfigError) as err:
            validate_config("[quench:x]\nbeta_i = 1.0\ntimes = 1\n")
        assert any("beta_f" in p and "missing" in p
                   for p in err.value.problems)

    def test_cooling_quench_warns_but_validates(self):
        specs = validate_config(
            "[quench:cool]\nbeta_i = 1.0\nbeta_f = 2.0\ntimes = 1, 2\n")
        assert specs[0].warnings
        assert "cooling" in specs[0].warnings[0]

    def test_unknown_kind_and_field(self):
        with pytest.raises(ConfigError) as err:
            validate_config("[teleport:x]\ntimes = 1\n")
        assert "unknown experiment kind" in err.value.problems[0]
        with pytest.raises(ConfigError) as err:
            validate_config(CAT_CONFIG.replace("seed", "sede"))
        assert any("unknown field" in p for p in err.value.problems)

    def test_infinite_beta_i_for_polarized_start(self):
        specs = validate_config(
            "[cmi-scan:gs]\nbeta_i = inf\nbeta_f = 1.5\ntimes = 2\n"
            "b_sizes = 4\nsamples = 10\n")
        assert math.isinf(specs[0].beta_i)

    def test_steps_extended_to_cover_times(self):
        specs = validate_config(
            "[quench:x]\nbeta_i = 2.0\nbeta_f = 1.4\ntimes = 3, 7\n")
        assert specs[0].steps == 7


class TestRunExperiment:
    def test_cat_exact_values_and_units(self, tmp_path):
        spec = validate_config(CAT_CONFIG)[0]
        files = run_experiment(spec, tmp_path, units="nats")
        text = files[0].read_text()
        assert text.startswith("# schema=1")
        rows = [line for line in text.splitlines()
                if line and not line.startswith("#")]
        header = rows[0].split(",")
        assert header == ["t", "b", "i_exact", "i_sampled", "stderr"]
        from mlen import exact_cmi_depolarized_cat
        first = rows[1].split(",")
        p = 0.5 * (1 - math.exp(-0.5))
        assert float(first[2]) == pytest.approx(
            exact_cmi_depolarized_cat(p, 4), rel=1e-14)

        files_bits = run_experiment(spec, tmp_path / "bits", units="bits")
        bits_rows = [line for line in files_bits[0].read_text().splitlines()
                     if line and not line.startswith("#")]
        assert float(bits_rows[1].split(",")[2]) == pytest.approx(
            float(first[2]) / math.log(2.0), rel=1e-13)

    def test_determinism_byte_identical(self, tmp_path):
        config = ("[depolarize-cat:d]\ntimes = 0.8\nb_sizes = 4, 6\n"
                  "samples = 64\nseed = 9\n")
        spec = validate_config(config)[0]
        first = run_experiment(spec, tmp_path / "a")[0].read_bytes()
        second = run_experiment(spec, tmp_path / "b")[0].read_bytes()
        assert first == second

    def test_correlator_benchmark_columns(self, tmp_path):
        spec = validate_config(
            "[correlator-benchmark:cb]\nbeta_i = 2.0\nbeta_f = 1.4\n"
            "alpha = 0.5\ntimes = 1, 2\nr_max = 10\nd_max = 12\n")[0]
        files = run_experiment(spec, tmp_path)
        lines = [line for line in files[0].read_text().splitlines()
                 if line and not line.startswith("#")]
        assert lines[0] == "t,r,c_mps,c_exact,abs_err"
        data = np.array([[float(v) for v in line.split(",")]
                         for line in lines[1:]])
        assert data.shape == (22, 5)
        assert data[:, 4].max() < 1e-6

    def test_collapse_columns(self, tmp_path):
        spec = validate_config(
            "[collapse:c]\ntimes = 2.0\nb_sizes = 120, 240\n")[0]
        files = run_experiment(spec, tmp_path)
        lines = [line for line in files[0].read_text().splitlines()
                 if line and not line.startswith("#")]
        assert lines[0] == "t,x,y,valid"


class TestMainEntry:
    def test_validate_command(self, tmp_path, capsys):
        cfg = tmp_path / "exp.ini"
        cfg.write_text(CAT_CONFIG)
        assert main(["validate", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "depolarize-cat" in out

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "exp.ini"
        cfg.write_text(BAD_CONFIG)
        assert main(["validate", "--config", str(cfg)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file(self, capsys):
        assert main(["validate", "--config", "/nonexistent.ini"]) == 2

    def test_run_writes_manifest(self, tmp_path, capsys):
        cfg = tmp_path / "exp.ini"
        cfg.write_text("[collapse:c]\ntimes = 1.5\nb_sizes = 40, 80\n")
        out = tmp_path / "out"
        code = main(["collapse", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["schema"] == 1
        assert len(manifest["files"]) == 1
        assert len(manifest["files"][0]["sha256"]) == 64

    def test_no_matching_experiments(self, tmp_path, capsys):
        cfg = tmp_path / "exp.ini"
        cfg.write_text(CAT_CONFIG)
        assert main(["lyapunov", "--config", str(cfg)]) == 2

    def test_env_seed_override(self, tmp_path, monkeypatch, capsys):
        cfg = tmp_path / "exp.ini"
        cfg.write_text("[collapse:c]\ntimes = 1.5\nb_sizes = 40\n")
        monkeypatch.setenv("MLEN_SEED", "77")
        out = tmp_path / "out"
        assert main(["collapse", "--config", str(cfg), "--out",
                     str(out)]) == 0
        header = (out / "collapse-c.csv").read_text()
        assert "# seed=77" in header
