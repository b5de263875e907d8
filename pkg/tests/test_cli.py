"""Command-line interface tests: exit codes, output files, config layering,
and the resume flow. All runs use tiny budgets; the full-budget experiments
live in the acceptance suite.
"""

import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from cylpatch.cli import ENV_OUTDIR, main, read_config_echo, read_config_file
from cylpatch.errors import ConfigError
from cylpatch.experiments import read_series


def read_report(out_dir):
    with open(os.path.join(out_dir, "report.json"), "r", encoding="ascii") as fh:
        return json.load(fh)


class TestParser:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 2
        capsys.readouterr()

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert main(["steady-check", "--help"]) == 0
        out = capsys.readouterr().out
        assert "--dt" in out

    def test_unknown_subcommand(self, capsys):
        assert main(["polish"]) == 2
        capsys.readouterr()

    def test_bad_flag_value(self, capsys):
        assert main(["steady-check", "--dt", "fast"]) == 2
        capsys.readouterr()

    def test_console_script_installed(self):
        exe = shutil.which("cylpatch")
        assert exe is not None
        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "steady-check" in proc.stdout


class TestKernelTable:
    def test_writes_table_and_report(self, tmp_path, capsys):
        out = str(tmp_path / "kt")
        assert main(["kernel-table", "--out", out]) == 0
        stdout = capsys.readouterr().out
        assert "PASSED" in stdout
        report = read_report(out)
        assert report["passed"] is True
        assert report["experiment"] == "kernel-table"
        lines = (tmp_path / "kt" / "kernel_table.csv").read_text().splitlines()
        assert lines[0] == "name,value,reference,abs_err,tol,pass"
        assert len(lines) >= 9
        cfg, name, args = read_config_echo(os.path.join(out, "config.echo"))
        assert name == "kernel-table"
        assert args["seed"] == "0"


class TestRearrangeTest:
    def test_reduced_case_count(self, tmp_path, capsys):
        out = str(tmp_path / "rt")
        assert main(["rearrange-test", "--seed", "3", "--cases", "10",
                     "--out", out]) == 0
        capsys.readouterr()
        report = read_report(out)
        assert report["passed"] is True
        assert report["config"] == {"seed": 3, "cases": 10}


class TestSteadyCheck:
    def test_short_run_outputs(self, tmp_path, capsys):
        out = str(tmp_path / "sc")
        assert main(["steady-check", "--out", out, "--T", "1.0",
                     "--nodes", "128", "--raster-res", "256"]) == 0
        stdout = capsys.readouterr().out
        assert "PASS velocity_profile" in stdout
        report = read_report(out)
        assert report["passed"] is True
        records = read_series(os.path.join(out, "series.csv"))
        assert np.allclose([r.t for r in records], [0.0, 1.0], atol=1e-9)
        cfg, name, _ = read_config_echo(os.path.join(out, "config.echo"))
        assert name == "steady-check"
        assert cfg.t_end == 1.0
        assert cfg.nodes0 == 128
        assert cfg.dt == 0.05
        assert cfg.dmax > 0.0
        assert os.path.exists(os.path.join(out, "checkpoint_000000.csv"))

    def test_env_var_names_output_base(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(ENV_OUTDIR, str(tmp_path / "envbase"))
        assert main(["kernel-table"]) == 0
        capsys.readouterr()
        assert os.path.exists(tmp_path / "envbase" / "kernel-table" / "report.json")


class TestConfigFile:
    def test_layering_defaults_file_flags(self, tmp_path, capsys):
        ini = tmp_path / "run.ini"
        ini.write_text(
            "[run]\ndt = 0.1\nnodes0 = 128\nraster_res = 128\noutput_every = 2\n"
            "[experiment]\nh = 0.2\n"
        )
        out = str(tmp_path / "st")
        assert main(["stability", "--config", str(ini), "--out", out,
                     "--T", "0.2"]) == 0
        capsys.readouterr()
        cfg, name, args = read_config_echo(os.path.join(out, "config.echo"))
        assert name == "stability"
        assert cfg.dt == 0.1          # file overrides the subcommand default
        assert cfg.t_end == 0.2       # flag overrides the file
        assert cfg.nodes0 == 128
        assert args["h"] == "0.2"
        report = read_report(out)
        assert report["config"]["experiment_args"] == {"h": 0.2}

    def test_out_dir_from_file(self, tmp_path, capsys):
        out = tmp_path / "filed"
        ini = tmp_path / "run.ini"
        ini.write_text(f"[run]\nout_dir = {out}\n[experiment]\nseed = 5\n")
        assert main(["kernel-table", "--config", str(ini)]) == 0
        capsys.readouterr()
        assert os.path.exists(out / "report.json")

    def test_unknown_run_key_rejected(self, tmp_path, capsys):
        ini = tmp_path / "run.ini"
        ini.write_text("[run]\ntimestep = 0.1\n")
        assert main(["steady-check", "--config", str(ini)]) == 2
        assert "configuration error" in capsys.readouterr().err
        with pytest.raises(ConfigError):
            read_config_file(str(ini))

    def test_bad_scalar_rejected(self, tmp_path, capsys):
        ini = tmp_path / "run.ini"
        ini.write_text("[run]\ndt = quick\n")
        assert main(["steady-check", "--config", str(ini)]) == 2
        capsys.readouterr()

    def test_missing_file_rejected(self, tmp_path, capsys):
        assert main(["steady-check", "--config", str(tmp_path / "none.ini")]) == 2
        capsys.readouterr()


class TestRectangleCommands:
    def test_h_is_required(self, capsys):
        assert main(["stability", "--T", "0.1"]) == 2
        assert "--h" in capsys.readouterr().err

    def test_h_domain_checked(self, tmp_path, capsys):
        assert main(["stability", "--h", "0.3", "--T", "0.1",
                     "--out", str(tmp_path / "x")]) == 2
        capsys.readouterr()

    def test_short_stability_run(self, tmp_path, capsys):
        out = str(tmp_path / "st")
        assert main(["stability", "--h", "0.2", "--T", "0.4", "--dt", "0.1",
                     "--nodes", "128", "--raster-res", "128",
                     "--output-every", "2", "--out", out]) == 0
        stdout = capsys.readouterr().out
        assert "PASS stability_ratio" in stdout
        report = read_report(out)
        assert report["passed"] is True
        assert report["wall_series"] is not None
        assert os.path.exists(os.path.join(out, "wall.csv"))


class TestResume:
    def test_extend_horizon(self, tmp_path, capsys):
        out = str(tmp_path / "st")
        assert main(["stability", "--h", "0.2", "--T", "0.4", "--dt", "0.1",
                     "--nodes", "128", "--raster-res", "128",
                     "--output-every", "2", "--out", out]) == 0
        assert main(["resume", "--from", out, "--T", "0.8"]) == 0
        capsys.readouterr()
        records = read_series(os.path.join(out, "series.csv"))
        ts = [r.t for r in records]
        assert np.allclose(ts, [0.0, 0.2, 0.4, 0.6, 0.8], atol=1e-9)
        cfg, name, args = read_config_echo(os.path.join(out, "config.echo"))
        assert cfg.t_end == 0.8
        assert name == "stability"
        report = read_report(out)
        assert report["config"]["t_end"] == 0.8
        assert len(report["wall_series"]) == len(records)

    def test_resume_requires_rectangle_experiment(self, tmp_path, capsys):
        out = str(tmp_path / "sc")
        assert main(["steady-check", "--out", out, "--T", "0.2",
                     "--nodes", "96", "--raster-res", "128"]) == 0
        assert main(["resume", "--from", out]) == 2
        assert "configuration error" in capsys.readouterr().err

    def test_resume_missing_directory(self, tmp_path, capsys):
        assert main(["resume", "--from", str(tmp_path / "nowhere")]) == 2
        capsys.readouterr()
