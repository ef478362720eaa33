from __future__ import annotations

import math

import numpy as np
import pytest
import yaml

from pairsource import cli
from pairsource.analysis import fit_sinusoid, visibility_net
from pairsource.presets import FILTERS, DETECTORS
from pairsource.spectral import fwhm
from pairsource.textio import config_hash, read_table


def run(tmp_path, *args):
    return cli.main([*args, "--output-dir", str(tmp_path)])


def _report(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line and " " not in line.split("=")[0]:
            k, v = line.split("=", 1)
            out[k] = v.split()[0]
    return out


def test_spectrum_peak_and_width(tmp_path, capsys):
    assert run(tmp_path, "spectrum") == 0
    cols, data = read_table(tmp_path / "spectrum.tsv")
    assert cols == ["wavelength_nm", "density"]
    lam, dens = data[:, 0], data[:, 1]
    assert lam[np.argmax(dens)] == pytest.approx(1560.48, abs=0.05)
    assert fwhm(lam, dens) == pytest.approx(32.0, rel=0.02)


def test_spectrum_zero_span_is_single_line(tmp_path):
    assert run(tmp_path, "spectrum", "--span-nm", "0") == 0
    _, data = read_table(tmp_path / "spectrum.tsv")
    assert data.shape == (1, 2)


def test_spectrum_temperature_scan(tmp_path):
    assert run(tmp_path, "spectrum", "--temperatures", "385", "387", "--spectrum-points", "11") == 0
    cols, data = read_table(tmp_path / "spectrum.tsv")
    assert cols[0] == "temperature_K" and data.shape == (22, 3)


def test_histogram_peaks(tmp_path, capsys):
    assert run(tmp_path, "histogram", "--detector", "snspd", "--pump-power", "0.1") == 0
    text = capsys.readouterr().out
    assert "peak -76.0 ns" in text and "peak +76.0 ns" in text
    cols, data = read_table(tmp_path / "histogram.tsv")
    assert cols == ["bin_center_s", "counts"]
    centers, counts = data[:, 0], data[:, 1]
    for c in (-76e-9, 0.0, 76e-9):
        sel = np.abs(centers - c) < 38e-9
        assert abs(centers[sel][np.argmax(counts[sel])] - c) <= 0.1e-9


def test_histogram_empty_without_pump(tmp_path, capsys):
    assert run(tmp_path, "histogram", "--pump-power", "0") == 0
    _, data = read_table(tmp_path / "histogram.tsv")
    assert data[:, 1].sum() == 0


def test_fringe_ideal_and_mixed(tmp_path, capsys):
    assert run(tmp_path, "fringe", "--detector", "custom", "--config", str(_ideal_cfg(tmp_path))) == 0
    rep = _report(capsys.readouterr().out)
    assert float(rep["net_visibility"]) >= 0.999 - 3 * float(rep["net_sigma_V"])
    assert run(tmp_path, "fringe", "--visibility", "0", "--pump-power", "0.2") == 0
    rep = _report(capsys.readouterr().out)
    assert float(rep["net_visibility"]) < 0.05


def _ideal_cfg(tmp_path):
    path = tmp_path / "ideal.yaml"
    path.write_text(yaml.safe_dump({
        "detector": "custom",
        "custom_detector": {"efficiency": 1.0},
        "pump_power": 0.05,
        "duration": 1.0,
    }))
    return path


def test_fringe_hwp_sweep(tmp_path, capsys):
    assert run(tmp_path, "fringe", "--sweep", "hwp", "--pump-power", "0.2") == 0
    cols, data = read_table(tmp_path / "fringe.tsv")
    assert cols == ["angle_rad", "counts", "acc_counts"]
    assert data[-1, 0] < math.pi / 2
    rep = _report(capsys.readouterr().out)
    assert float(rep["net_visibility"]) > 0.95


def test_fringe_raw_below_net_for_ingaas_25mhz(tmp_path, capsys):
    args = ["fringe", "--filter", "psfbg25mhz", "--detector", "ingaas", "--pump-power", "7",
            "--duration", "0.2", "--window", "20e-9", "--points", "8"]
    assert run(tmp_path, *args) == 0
    rep = _report(capsys.readouterr().out)
    assert float(rep["raw_visibility"]) < float(rep["net_visibility"])


def test_bell_ideal_threshold_and_mixed(tmp_path, capsys):
    base = ["--pump-power", "0.2"]
    assert run(tmp_path, "bell", *base) == 0
    rep = _report(capsys.readouterr().out)
    S, sig = float(rep["S"]), float(rep["sigma_S"])
    assert abs(S - 2 * math.sqrt(2)) < 3 * sig + 0.1  # raw counts include accidentals
    assert run(tmp_path, "bell", *base, "--visibility", str(1 / math.sqrt(2))) == 0
    rep = _report(capsys.readouterr().out)
    assert abs(float(rep["S"]) - 2) < 3 * float(rep["sigma_S"])
    assert run(tmp_path, "bell", *base, "--visibility", "0") == 0
    rep = _report(capsys.readouterr().out)
    assert abs(float(rep["S"])) < 3 * float(rep["sigma_S"]) + 0.05


def test_budget_table(tmp_path, capsys):
    assert run(tmp_path, "budget") == 0
    _, text = capsys.readouterr()
    rows = (tmp_path / "budget.tsv").read_text().splitlines()
    totals = {}
    for line in rows:
        if not line.startswith("#"):
            name, item, db, running = line.split("\t")
            totals[name] = float(running)
    assert totals == pytest.approx({"dwdm100ghz": 15.0, "psfbg540mhz": 19.4, "psfbg25mhz": 20.4})


def test_budget_improvements(tmp_path, capsys):
    with pytest.warns(UserWarning):
        assert run(tmp_path, "budget", "--all-improvements") == 0
    last = {}
    for line in (tmp_path / "budget.tsv").read_text().splitlines():
        if not line.startswith("#"):
            name, _, _, running = line.split("\t")
            last[name] = float(running)
    assert last == pytest.approx({"dwdm100ghz": 9.0, "psfbg540mhz": 10.4, "psfbg25mhz": 11.4})


def test_lock_summary_and_open_loop(tmp_path, capsys):
    assert run(tmp_path, "lock", "--lock-duration", "0.1") == 0
    rep = _report(capsys.readouterr().out)
    assert float(rep["residual_rms_rad"]) < math.pi / 100
    assert rep["settled"] == "True"
    assert run(tmp_path, "lock", "--lock-duration", "0.1", "--gains", "0", "0", "0") == 0
    rep = _report(capsys.readouterr().out)
    assert float(rep["residual_rms_rad"]) > math.pi / 100
    cols, data = read_table(tmp_path / "lock.tsv")
    assert cols == ["t_s", "phi_r_rad", "error", "actuation_rad"]
    assert np.all(data[:, 3] == 0)


def test_lock_sweep_feeds_fringe(tmp_path, capsys):
    assert run(tmp_path, "lock", "--lock-duration", "0.01", "--sweep-points", "16") == 0
    sweep = tmp_path / "lock_sweep.tsv"
    cols, data = read_table(sweep)
    assert data.shape == (16, 4)
    np.testing.assert_allclose(data[:, 0], np.linspace(-math.pi, 2.5 * math.pi, 16))
    assert run(tmp_path, "fringe", "--phases-from", str(sweep), "--pump-power", "0.2") == 0
    rep = _report(capsys.readouterr().out)
    assert float(rep["net_visibility"]) > 0.99


def test_check(tmp_path, capsys):
    assert run(tmp_path, "check") == 0
    assert "PASS" in capsys.readouterr().out


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["fringe", "--output-dir", str(d), "--pump-power", "0.1"]) == 0
    assert (a / "fringe.tsv").read_bytes() == (b / "fringe.tsv").read_bytes()


def test_effective_config_round_trip(tmp_path):
    first = tmp_path / "first"
    assert cli.main(["histogram", "--output-dir", str(first), "--seed", "7", "--pump-power", "0.02"]) == 0
    eff = first / "histogram_effective_config.yaml"
    second = tmp_path / "second"
    assert cli.main(["histogram", "--config", str(eff), "--output-dir", str(second)]) == 0
    assert (first / "histogram.tsv").read_bytes() == (second / "histogram.tsv").read_bytes()
    header = (first / "histogram.tsv").read_text().splitlines()[0]
    cfg = cli.load_config(str(eff), {})
    assert f"config_hash={config_hash(cfg.hashable())}" in header and "seed=7" in header


def test_flags_override_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("seed: 3\npump_power: 1.0\n")
    cfg = cli.load_config(str(path), {"seed": 9})
    assert cfg.seed == 9 and cfg.pump_power == 1.0


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.main(["check"]) == 0
    assert (tmp_path / "env" / "check_effective_config.yaml").exists()


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("colour: blue\n")
    assert run(tmp_path, "check", "--config", str(bad)) == 2
    assert run(tmp_path, "check", "--filter", "custom") == 2
    bad.write_text("filter: custom\ncustom_filter: {shape: lorentzian}\n")
    assert run(tmp_path, "check", "--config", str(bad)) == 2


def test_numerical_errors_exit_3(tmp_path, capsys):
    assert run(tmp_path, "histogram", "--filter", "dwdm100ghz", "--pump-power", "1") == 3
    assert "numerical error" in capsys.readouterr().err


def test_custom_filter(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"filter": "custom", "custom_filter": {
        "shape": "lorentzian", "center_V": float(FILTERS["psfbg540mhz"].center_V), "fwhm_V": 1e9}}))
    assert run(tmp_path, "check", "--config", str(path)) == 0


def test_presets_match_anchors():
    assert FILTERS["psfbg540mhz"].fwhm_V == 540e6
    assert FILTERS["psfbg25mhz"].fwhm_V == 25e6
    assert FILTERS["dwdm100ghz"].fwhm_V == 80e9
    assert DETECTORS["ingaas"]["efficiency"] == 0.20
    assert DETECTORS["ingaas"]["jitter_fwhm"] == 230e-12
    assert DETECTORS["ingaas"]["dark_rate"] == pytest.approx(1e-6 / 1e-9)
    assert DETECTORS["snspd"]["efficiency"] == 0.07
    assert DETECTORS["snspd"]["dark_rate"] <= 10
