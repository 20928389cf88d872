import csv

import numpy as np
import pytest
import yaml

from cavqed.cli import EXIT_FIT, EXIT_INPUT, EXIT_OK, main


def results(out, command):
    with open(out / f"{command}_results.csv") as f:
        return {r["key"]: (float(r["value"]), float(r["sigma"]), r["unit"]) for r in csv.DictReader(f)}


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def test_qe_bound(tmp_path, capsys):
    assert run(tmp_path, "qe-bound", "--g", "0.36", "--g0", "0.80", "--eta-dw", "0.6") == EXIT_OK
    v, s, _ = results(tmp_path, "qe-bound")["eta_qe_bound"]
    assert v == pytest.approx(0.34, abs=0.005) and s == pytest.approx(0.05, abs=0.005)
    assert "eta_qe_bound = 0.3375 +/- 0.0505" in capsys.readouterr().out


def test_qe_bound_inconsistent_is_input_error(tmp_path):
    assert run(tmp_path, "qe-bound", "--g", "0.9", "--g0", "0.8") == EXIT_INPUT


def test_simulate_decay_without_coupling(tmp_path):
    assert run(tmp_path, "simulate-decay", "--g-ghz", "0") == EXIT_OK
    tau, _, unit = results(tmp_path, "simulate-decay")["tau_emission_tail"]
    assert tau == pytest.approx(6.1e-9, rel=1e-6) and unit == "s"
    curve = np.loadtxt(tmp_path / "simulate-decay_curve.csv", delimiter=",", comments="#", skiprows=4)
    assert curve.shape[1] == 3


def test_synth_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["synth", "histogram", "--events", "20000", "--seed", "4", "--out", str(d)]) == EXIT_OK
    assert (a / "synth_histogram.csv").read_bytes() == (b / "synth_histogram.csv").read_bytes()


def test_pipeline_synth_then_fit_lifetime(tmp_path):
    assert run(tmp_path, "synth", "histogram", "--seed", "1") == EXIT_OK
    code = run(tmp_path, "fit-lifetime", str(tmp_path / "synth_histogram.csv"), "--n-mc", "3", "--seed", "2")
    assert code == EXIT_OK
    g, sg, _ = results(tmp_path, "fit-lifetime")["g_ghz"]
    assert g == pytest.approx(0.36, abs=max(2 * sg, 0.02))


@pytest.mark.parametrize("kind, command, extra, key, truth, tol", [
    ("sweep", "fit-sweep-linewidth", [], "kappa_ghz", 2.07, 0.02),
    ("spectrum", "fit-spectrum", [], "fwhm_l", 2.3, 0.05),
    ("saturation", "fit-saturation", ["--c-bg", "20", "--c-dark", "500"], "P_sat", 100.0, 10.0),
    ("detunings", "vibration-analyze", [], "fwhm_l", 43.7, 2.0),
])
def test_fit_commands_on_synth(tmp_path, kind, command, extra, key, truth, tol):
    assert run(tmp_path, "synth", kind, "--seed", "1") == EXIT_OK
    path = next(tmp_path.glob(f"synth_{kind}.*"))
    assert run(tmp_path, command, str(path), *extra) == EXIT_OK
    assert results(tmp_path, command)[key][0] == pytest.approx(truth, abs=tol)


def test_fit_g2_on_synth(tmp_path):
    assert run(tmp_path, "synth", "hbt", "--duration", "0.1", "--seed", "1") == EXIT_OK
    assert run(tmp_path, "fit-g2", str(tmp_path / "synth_hbt.bin")) == EXIT_OK
    assert 0 < results(tmp_path, "fit-g2")["g2_0"][0] < 0.5


def test_cavity_commands(tmp_path):
    assert run(tmp_path, "cavity-g0") == EXIT_OK
    assert results(tmp_path, "cavity-g0")["g0_ghz"][0] == pytest.approx(0.608, abs=0.005)
    assert run(tmp_path, "cavity-dispersion", "--n-gaps", "3") == EXIT_OK
    assert results(tmp_path, "cavity-dispersion")["slope"][0] == pytest.approx(17.64, rel=0.15)


def test_manifest_and_replay(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("cqed:\n  g_ghz: [0.30, 0.02]\n")
    assert run(tmp_path, "qe-bound", "--config", str(cfg), "--eta-dw", "0.6") == EXIT_OK
    first = (tmp_path / "qe-bound_results.csv").read_bytes()
    man = yaml.safe_load((tmp_path / "qe-bound_manifest.yaml").read_text())
    assert man["command"] == "qe-bound" and len(man["config_sha256"]) == 64 and man["version"]
    cfg.write_text("cqed:\n  g_ghz: [0.50, 0.02]\n")  # replay must not read the edited file
    assert main(["replay", str(tmp_path / "qe-bound_manifest.yaml")]) == EXIT_OK
    assert (tmp_path / "qe-bound_results.csv").read_bytes() == first


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("cqed:\n  nonsense: 1\n")
    assert run(tmp_path, "qe-bound", "--config", str(bad)) == EXIT_INPUT
    assert run(tmp_path, "fit-spectrum", str(tmp_path / "missing.csv")) == EXIT_INPUT
    assert main(["no-such-command"]) == EXIT_INPUT
    # a flat histogram has no decay to fit
    flat = tmp_path / "flat.csv"
    rows = "\n".join(f"{i * 1e-10!r},{(i + 1) * 1e-10!r},100" for i in range(200))
    flat.write_text("# kind: histogram\n# unit.t_lo: s\n# unit.t_hi: s\n# unit.counts: counts\n"
                    f"t_lo,t_hi,counts\n{rows}\n")
    assert run(tmp_path, "fit-lifetime", str(flat), "--model", "emg") == EXIT_FIT
