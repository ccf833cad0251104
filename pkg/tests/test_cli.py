"""Command-line behaviour: outputs, exit codes and reproducibility."""
import subprocess
import sys

import numpy as np
import pytest

from nvqnode.cli import main, parse_rounds
from nvqnode.noise import NoiseModel, save_noise


@pytest.fixture
def clean_noise(tmp_path):
    path = tmp_path / "clean.toml"
    save_noise(NoiseModel.noiseless(herald_prob=0.5), path)
    return str(path)


def test_parse_rounds():
    assert parse_rounds("12") == [12]
    assert parse_rounds("0-3") == [0, 1, 2, 3]
    assert parse_rounds("8,0,4") == [0, 4, 8]


def test_ghz_exact(tmp_path, capsys):
    assert main(["ghz", "--seed", "1", "--backend", "exact", "--noise", "default",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "ghz_report.tsv").read_text().splitlines()
    assert lines[0] == "# schema: nvqnode.ghz_report/1"
    assert any(line.startswith("summary\tf_lb") for line in lines)
    assert "F_lb=" in capsys.readouterr().out


def test_qec_outputs(tmp_path, clean_noise):
    rc = main(["qec", "--seed", "2", "--shots", "40", "--rounds", "0-3", "--feedback", "sweep",
               "--noise", clean_noise, "--out", str(tmp_path), "--resamples", "100"])
    assert rc == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"qec_summary.tsv", "qec_parity.tsv", "qec_fit.tsv", "shots_zero_fbon_M03.jsonl",
            "shots_zero_fboff_M00.jsonl"} <= names
    rows = [r.split("\t") for r in (tmp_path / "qec_summary.tsv").read_text().splitlines()
            if not r.startswith("#")]
    col = rows[0].index("fidelity")
    assert all(float(r[col]) == 1.0 for r in rows[1:])


def test_fit_command(tmp_path):
    t = 5.0 * np.arange(13)
    np.savetxt(tmp_path / "d.txt", np.c_[t, 0.8 * np.exp(-t / 31) + 0.2, np.full(13, 0.01)])
    assert main(["fit", str(tmp_path / "d.txt"), "--seed", "0", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fit.tsv").exists()


@pytest.mark.parametrize("argv", [
    ["ghz", "--seed", "1", "--shots", "0"],
    ["qec", "--seed", "1", "--rounds", "65"],
    ["ghz", "--seed", "1", "--noise", "/nonexistent.toml"],
    ["qec", "--seed", "1", "--backend", "exact", "--inject-x"],
    ["fit", "/nonexistent.txt", "--seed", "1"],
])
def test_configuration_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_bad_noise_key_exit_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("p_gate_x = 0.1\n")
    assert main(["ghz", "--seed", "1", "--noise", str(bad), "--out", str(tmp_path)]) == 2


def test_missing_seed_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["ghz", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_same_seed_byte_identical(tmp_path, clean_noise):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(["qec", "--seed", "7", "--shots", "30", "--rounds", "2", "--inject-x",
                     "--noise", clean_noise, "--out", str(d)]) == 0
        outs.append({p.name: p.read_bytes() for p in d.iterdir()})
    assert outs[0] == outs[1]


def test_workers_do_not_change_results(tmp_path, clean_noise):
    outs = []
    for w in ("1", "2"):
        d = tmp_path / f"w{w}"
        assert main(["ghz", "--seed", "3", "--shots", "60", "--workers", w, "--noise", clean_noise,
                     "--out", str(d)]) == 0
        outs.append((d / "ghz_report.tsv").read_bytes())
    assert outs[0] == outs[1]


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "nvqnode", "ghz", "--seed", "1", "--backend", "exact",
                        "--noise", "default", "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
