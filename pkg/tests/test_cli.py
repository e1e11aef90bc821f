import os
import subprocess
import sys

import pytest

from crbeam.cli import main


def test_cli_help_shows_reference_config(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "simulate" in out and "sweep" in out and "check" in out
    assert "iota_max_w = 4e-7" in out


def test_cli_simulate_and_manifest_check(tmp_path, capsys):
    out_dir = str(tmp_path / "run")
    rc = main(["simulate", "--runs", "2", "--seed", "3", "--out", out_dir,
               "--no-figures"])
    assert rc == 0
    assert os.path.exists(os.path.join(out_dir, "summary.csv"))
    rc = main(["check", "--trials", "5", "--manifest", out_dir])
    assert rc == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_cli_bad_config_is_parse_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[experiment]\nruns = -5\n")
    rc = main(["simulate", "--config", str(cfg)])
    assert rc == 2
    assert "line 2" in capsys.readouterr().err


def test_cli_sweep(tmp_path, capsys):
    out_dir = str(tmp_path / "sweep")
    rc = main(["sweep", "--runs", "1", "--seed", "3", "--out", out_dir,
               "--no-figures", "--parameter", "iota_max",
               "--values", "1e-7,1e-6"])
    assert rc == 0
    assert os.path.exists(os.path.join(out_dir, "sweep.csv"))


def test_cli_entry_point_installed():
    proc = subprocess.run([sys.executable, "-m", "crbeam.cli", "check",
                           "--trials", "3"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
