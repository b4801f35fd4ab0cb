import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from isacbf import bench
from isacbf.cli import main

ROOT = Path(__file__).resolve().parents[1]
SCEN = ROOT / "scenarios"


def run(*argv):
    return subprocess.run([sys.executable, "-m", "isacbf", *map(str, argv)], capture_output=True, text=True)


def test_solve_reference_sdr(tmp_path, capsys):
    out = tmp_path / "bf.bin"
    assert main(["solve", "--scenario", str(SCEN / "reference.toml"), "--algo", "sdr", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    fields = dict(line.split(None, 1) for line in text.splitlines() if line and not line.startswith("beamformers"))
    assert float(fields["min_sinr_db"]) >= 20.0 - 1e-6
    crlb = float(fields["crlb_m2"])
    assert np.isfinite(crlb) and crlb > 0
    [(tag, bf)] = bench.read_beamformers(out)
    assert tag == "sdr" and bf.f.shape == (2, 4, 16)


def test_solve_seed_changes_hash(capsys):
    main(["solve", "--scenario", str(SCEN / "desk.toml"), "--algo", "zf"])
    a = capsys.readouterr().out
    main(["solve", "--scenario", str(SCEN / "desk.toml"), "--algo", "zf", "--seed", "3"])
    b = capsys.readouterr().out
    hashes = [ln.split()[1] for ln in (a + b).splitlines() if ln.startswith("scenario_hash")]
    assert hashes[0] != hashes[1]


def test_solve_without_solution_exits_1(tmp_path, capsys):
    p = tmp_path / "s.toml"
    p.write_text("[system]\nM = 2\nN = 3\nK = 2\nNt = 3\n")
    assert main(["solve", "--scenario", str(p), "--algo", "zf"]) == 1


def test_malformed_sweep_exits_2_naming_field(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text(f'scenario = "{SCEN / "desk.toml"}"\nparam = "Gamma_dB"\nvalues = ["ten", 20]\nalgorithms = ["sdr"]\n')
    r = run("sweep", p)
    assert r.returncode == 2
    assert "values" in r.stderr


def test_missing_scenario_file_exits_2(tmp_path):
    r = run("solve", "--scenario", tmp_path / "nope.toml")
    assert r.returncode == 2
    assert "path" in r.stderr


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--scenario", "x.toml", "--bogus"],
        ["solve"],
        ["solve", "--scenario", "x.toml", "--algo", "magic"],
        ["solve", "--scenario", "x.toml", "--tol", "-1"],
        ["frobnicate"],
        [],
    ],
)
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code != 0


def test_sweep_cli_byte_stable(tmp_path, capsys):
    p = tmp_path / "sw.toml"
    p.write_text(
        f'scenario = "{SCEN / "desk.toml"}"\nparam = "P_dBm"\nvalues = [26, 30]\nalgorithms = ["zf", "radar"]\ntrials = 2\n'
    )
    for name in ("a.csv", "b.csv"):
        assert main(["sweep", str(p), "--no-timing", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert "median crlb_m2" in capsys.readouterr().out


def test_beampattern_cli(tmp_path, capsys):
    out = tmp_path / "bp.csv"
    rc = main(["beampattern", "--scenario", str(SCEN / "desk.toml"), "--algo", "radar", "--algo", "zf", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "angle_deg,radar,zf" and len(lines) == 182


def test_validate_exits_0():
    r = run("validate")
    assert r.returncode == 0, r.stdout + r.stderr
    assert r.stdout.count("PASS") == 7


def test_console_script_help():
    r = subprocess.run(["isacbf", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("solve", "sweep", "beampattern", "validate"):
        assert cmd in r.stdout
