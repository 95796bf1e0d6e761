import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ltsi_relax.cli import main
from ltsi_relax.fieldio import read_field_binary, read_field_csv

SHIFTED = {"kind": "shifted_diffusion", "alpha": 1.0, "kappa": 0.5}


def _config(tmp_path, name="cfg.json", **sections):
    path = tmp_path / name
    path.write_text(json.dumps(sections))
    return str(path)


def _run(*argv):
    return main([str(a) for a in argv])


def test_certify_shifted_diffusion_passes(tmp_path):
    cfg = _config(tmp_path, family=SHIFTED, grid={"omega_max": 10, "count": 201})
    out = tmp_path / "out"
    assert _run("certify", "--config", cfg, "--out", out, "--seed", 3) == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["verdict"] == "pass" and cert["schema"] == "ltsi-relax/1"
    assert cert["seed"] == 3
    assert cert["tolerances"]["tol"] == 1e-9
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["exit_code"] == 0 and manifest["manifest"]["seed"] == 3


def test_certify_oscillator_fails(tmp_path):
    cfg = _config(tmp_path, family={"kind": "damped_oscillator", "zeta": 0.1})
    assert _run("certify", "--config", cfg, "--grid", "5,11", "--out", tmp_path) == 2


def test_certify_diffusion_inconclusive(tmp_path, capsys):
    cfg = _config(tmp_path, family={"kind": "diffusion", "alpha": 1.0})
    assert _run("certify", "--config", cfg, "--grid", "5,11", "--out", tmp_path) == 3
    assert "marginally stable" in capsys.readouterr().out


def test_config_errors_exit_64(tmp_path):
    assert _run("certify", "--config", tmp_path / "missing.json") == 64
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run("certify", "--config", bad) == 64
    cfg = _config(tmp_path, family={"kind": "nonsense"})
    assert _run("certify", "--config", cfg, "--out", tmp_path) == 64
    cfg = _config(tmp_path, family=SHIFTED)
    assert _run("certify", "--config", cfg, "--tol", "bogus=1") == 64
    assert _run("certify", "--config", cfg, "--grid", "ten") == 64
    assert _run("certify") == 64
    assert _run("nonsense") == 64


def test_tolerance_override_is_recorded(tmp_path):
    cfg = _config(tmp_path, family=SHIFTED)
    assert _run("certify", "--config", cfg, "--grid", "2,5", "--tol", "tol=1e-6",
                "--quad", "gauss-laguerre,32", "--out", tmp_path) == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["tolerances"]["tol"] == 1e-6
    assert cert["quadrature"]["scheme"] == "gauss-laguerre"


def test_storage_check_examples(tmp_path):
    single = _config(tmp_path, "single.json",
                     family={"kind": "diagonal_exponential", "terms": [[1.0, 0.0, 1.0]]},
                     grid={"points": [[0.0]], "weights": [1.0]},
                     past_input={"kind": "exponential", "rate": 1.0})
    assert _run("storage-check", "--config", single, "--out", tmp_path / "a") == 0
    rep = json.loads((tmp_path / "a" / "storage.json").read_text())
    for key in ("lhs", "rhs", "hankel_form"):
        assert rep[key] == pytest.approx(0.25, rel=1e-6)

    fam = _config(tmp_path, "fam.json", family=SHIFTED,
                  grid={"omega_max": 10, "count": 101}, quadrature={"N": 128})
    assert _run("storage-check", "--config", fam, "--out", tmp_path / "b") == 0
    rep = json.loads((tmp_path / "b" / "storage.json").read_text())
    assert max(rep["rel_errors"].values()) <= 1e-4

    zero = _config(tmp_path, "zero.json", family=SHIFTED, grid={"omega_max": 2, "count": 5},
                   past_input={"kind": "zero"})
    assert _run("storage-check", "--config", zero, "--out", tmp_path / "c") == 0
    rep = json.loads((tmp_path / "c" / "storage.json").read_text())
    assert rep["lhs"] == rep["rhs"] == rep["hankel_form"] == 0


def test_storage_check_hypothesis_violation(tmp_path):
    cfg = _config(tmp_path, family={"kind": "damped_oscillator"},
                  grid={"omega_max": 1, "count": 3})
    assert _run("storage-check", "--config", cfg, "--out", tmp_path) == 3


def test_figures_default(tmp_path):
    assert _run("figures", "--out", tmp_path) == 0
    for name in ("fig2a.csv", "fig2b.csv"):
        with open(tmp_path / name) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "x", "g"]
        assert all(len(r) == 3 for r in rows)
    with open(tmp_path / "hankel_spectrum.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "eigenvalue"] and len(rows) == 129
    b = np.loadtxt(tmp_path / "fig2b.csv", delimiter=",", skiprows=1)
    x1 = b[b[:, 1] == 1.0]
    assert abs(x1[np.argmax(x1[:, 2]), 0] - 0.5) <= x1[1, 0] - x1[0, 0]
    a = np.loadtxt(tmp_path / "fig2a.csv", delimiter=",", skiprows=1)
    maxima = [a[a[:, 0] == t, 2].max() for t in np.unique(a[:, 0])]
    assert all(np.diff(maxima) < 0)


def test_hankel_command_and_dump(tmp_path):
    cfg = _config(tmp_path, family=SHIFTED, hankel={"omega": 2.0})
    dump = tmp_path / "dump" / "h.csv"
    assert _run("hankel", "--config", cfg, "--grid", "3,7", "--quad", "truncated-trapezoid,16",
                "--out", tmp_path, "--dump-hankel", dump) == 0
    text = dump.read_text().splitlines()
    assert text[0] == "# nodes" and "# eigenvalues" in text
    data = json.loads((tmp_path / "hankel.json").read_text())
    assert data["verdict"] == "pass" and len(data["certificates"][0]["evidence"]) == 7


def test_passivity_command(tmp_path):
    cfg = _config(tmp_path, family=SHIFTED, grid={"omega_max": 2, "count": 5})
    assert _run("passivity", "--config", cfg, "--out", tmp_path / "a") == 0
    cert_path = tmp_path / "a" / "passivity_certificate.json"
    cert = json.loads(cert_path.read_text())
    cert["modes"][2]["Q"] = [[[3.0, 0.0]]]
    bad = tmp_path / "bad_cert.json"
    bad.write_text(json.dumps(cert))
    assert _run("passivity", "--config", cfg, "--certificate", bad,
                "--out", tmp_path / "b") == 2
    osc = _config(tmp_path, "osc.json", family={"kind": "damped_oscillator"},
                  grid={"omega_max": 1, "count": 3})
    assert _run("passivity", "--config", osc, "--out", tmp_path / "c") == 3


def test_passivity_least_norm_fallback(tmp_path):
    # A = -1, B = 1, C = 2 is passive but not collocated: Q = 2 is synthesized
    sample = {"A": [[-1.0]], "B": [[1.0]], "C": [[2.0]]}
    cfg = _config(tmp_path, family={"kind": "tabulated", "samples": [
        dict(sample, omega=[-1.0]), dict(sample, omega=[1.0])]},
        grid={"omega_max": 1, "count": 3})
    assert _run("passivity", "--config", cfg, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "passivity.json").read_text())
    assert report["source"] == "least-norm"
    cert = json.loads((tmp_path / "passivity_certificate.json").read_text())
    assert cert["modes"][1]["Q"] == [[[2.0, 0.0]]]


def test_simulate_command(tmp_path):
    cfg = _config(tmp_path, family={"kind": "diffusion", "alpha": 1.0},
                  simulation={"spatial_points": 64, "domain_length": 40.0, "dt": 0.01,
                              "t_span": [0.0, 0.2]},
                  initial={"kind": "gaussian", "sigma0": 1.0})
    assert _run("simulate", "--config", cfg, "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "simulate.json").read_text())
    assert summary["reference_max_rel_error"] < 1e-5
    a = read_field_binary(tmp_path / "field.bin")
    b = read_field_csv(tmp_path / "field.csv")
    assert a.shape == (21, 64, 1)
    np.testing.assert_array_equal(a.values, b.values)


def test_simulate_random_input_depends_on_seed(tmp_path):
    cfg = _config(tmp_path, family=SHIFTED,
                  simulation={"spatial_points": 16, "domain_length": 10.0, "dt": 0.1,
                              "t_span": [0.0, 0.5]},
                  input={"kind": "random"})
    outs = []
    for seed, d in ((1, "a"), (1, "b"), (2, "c")):
        with pytest.warns(Warning):
            assert _run("simulate", "--config", cfg, "--seed", seed,
                        "--out", tmp_path / d) == 0
        outs.append((tmp_path / d / "field.bin").read_bytes())
    assert outs[0] == outs[1] and outs[0] != outs[2]


def test_reruns_are_byte_identical(tmp_path):
    cfg = _config(tmp_path, family=SHIFTED, grid={"omega_max": 3, "count": 9})
    for d in ("a", "b"):
        assert _run("certify", "--config", cfg, "--out", tmp_path / d, "--seed", 9) == 0
    for name in ("certificate.json", "run_manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ltsi_relax.cli", "figures", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "fig2a.csv").exists()
