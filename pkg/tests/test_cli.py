import csv
import json

import numpy as np
import pytest

from hrsim import config as C
from hrsim.cli import main, run_command
from hrsim.errors import ValidationError
from hrsim.fitting import loglog_fit
from hrsim.io import sha256_file, write_csv, write_statevector
from hrsim.reference import STRONG_COUPLING, reference_scalings, weak_row

SMALL = {"geometry.sites_per_dim": 2, "digitization.k": 2, "digitization.phi_max": 1.5,
         "theory.lambda4": 0.5}


def small_cfg(**extra):
    return C.merge(C.DEFAULTS, {**SMALL, **extra})


def test_merge_dotted_and_nested():
    cfg = C.merge(C.DEFAULTS, {"digitization": {"k": 4}, "theory.lambda4": 2.0})
    assert cfg["digitization"]["k"] == 4
    assert cfg["theory"]["lambda4"] == 2.0
    assert C.DEFAULTS["digitization"]["k"] == 3


def test_unknown_key_rejected():
    with pytest.raises(ValidationError):
        C.merge(C.DEFAULTS, {"digitization.kk": 4})
    with pytest.raises(ValidationError):
        C.merge(C.DEFAULTS, {"theory": 1.0})


def test_env_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("digitization:\n  k: 4\ntheory.lambda4: 1.0\n")
    env = {"HRSIM_DIGITIZATION__K": "2", "HRSIM_THEORY__M0_SQ": "0.25", "OTHER": "x"}
    cfg = C.load_config(path, environ=env)
    assert cfg["digitization"]["k"] == 2
    assert cfg["theory"]["m0_sq"] == 0.25
    assert cfg["theory"]["lambda4"] == 1.0


def test_bad_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ValidationError):
        C.load_config(path, environ={})


def test_config_hash_stable():
    a = C.config_hash(small_cfg())
    assert a == C.config_hash(small_cfg())
    assert a != C.config_hash(small_cfg(seed=1))


def test_csv_format_and_schema(tmp_path):
    p = write_csv(tmp_path / "x.csv", ["i", "v", "flag"], [(0, 0.1, True), (1, 1 / 3, False)],
                  units={"v": "a^-1"})
    lines = p.read_text().split("\n")
    assert lines[0] == "i,v,flag"
    assert lines[1] == "0,0.10000000000000001,1"
    assert float(lines[2].split(",")[1]) == 1 / 3
    schema = json.loads((tmp_path / "x.schema.json").read_text())
    assert [c["type"] for c in schema["columns"]] == ["int", "float", "bool"]
    assert schema["columns"][1]["unit"] == "a^-1"


def test_statevector_roundtrip(tmp_path):
    v = np.array([1 + 2j, -0.5j, 0.25])
    p = write_statevector(tmp_path / "s.bin", v, {"n_sites": 1})
    back = np.frombuffer(p.read_bytes(), dtype="<f8")
    assert np.array_equal(back[0::2] + 1j * back[1::2], v)
    meta = json.loads((tmp_path / "s.json").read_text())
    assert meta["n_amplitudes"] == 3 and meta["byte_order"] == "little"


def test_reference_rows():
    assert weak_row(1) == (1.5, 1.25, 1.5)
    assert weak_row(2) == (4.0, 3.0, 2.376)
    strong = [r for r in STRONG_COUPLING if r[1] == "1/(lambda_c - lambda0)"]
    assert [r[2] for r in strong] == [6.0, 5.0, 9.0]
    data = reference_scalings()
    assert len(data["weak_coupling"]) == 5


def test_loglog_fit():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    f = loglog_fit(x, 3 * x**-1.5)
    assert np.isclose(f.slope, -1.5)
    assert np.isclose(np.exp(f.intercept), 3.0)
    assert np.isclose(loglog_fit([1, 2], [1, 4]).slope, 2.0)
    with pytest.raises(ValueError):
        loglog_fit([1.0], [1.0])
    with pytest.raises(ValueError):
        loglog_fit([1.0, 2.0], [0.0, 1.0])


def test_spectrum_outputs(tmp_path):
    res = run_command("spectrum", small_cfg(), tmp_path)
    rows = list(csv.DictReader((tmp_path / "spectrum.csv").open()))
    assert list(rows[0]) == ["index", "energy", "gap", "q", "parity", "ambiguous"]
    assert len(rows) == 3
    assert float(rows[0]["gap"]) == 0.0
    for f in res["files"]:
        assert sha256_file(tmp_path / f["path"]) == f["sha256"]
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "spectrum" and man["versions"]["hrsim"]
    assert res["summary"]["gap_m"] > 0


def test_wavepacket_outputs(tmp_path):
    res = run_command("wavepacket", small_cfg(), tmp_path)
    rows = list(csv.DictReader((tmp_path / "table.csv").open()))
    assert list(rows[0]) == ["t", "site", "x", "re", "im"]
    s = res["summary"]
    assert len(rows) == s["N"] * s["S"]
    assert s["dominant_term"] in s["discretization_terms"]
    assert s["ledger_discrepancy"] <= s["discretization_error_bound"]


def test_lcu_sim_outputs(tmp_path):
    res = run_command("lcu-sim", small_cfg(**{"lcu.dump_state": True, "lcu.shots": 100}), tmp_path)
    s = res["summary"]
    assert np.isclose(s["rho_formula"], s["rho_measured"], rtol=1e-10)
    assert np.isclose(s["fidelity_vs_oracle"], 1.0)
    assert 0 <= s["rho_sampled"] <= 1
    # postselected system register: 2^(V k) complex128 amplitudes
    raw = np.frombuffer((tmp_path / "state.bin").read_bytes(), dtype="<f8")
    assert raw.size == 2 * 16
    assert np.isclose(np.sum(raw**2), 1.0)


def test_two_packet_outputs(tmp_path):
    res = run_command("two-packet", small_cfg(**{"geometry.sites_per_dim": 4}), tmp_path)
    s = res["summary"]
    assert np.isclose(s["parity"], 1.0)
    assert s["fidelity_vs_oracle"] > 0.99


def test_adiabatic_outputs(tmp_path):
    res = run_command("adiabatic", small_cfg(**{"adiabatic.tau_values": [2.0, 8.0]}), tmp_path)
    inf = res["summary"]["infidelity"]
    assert inf[1] < inf[0]
    assert (tmp_path / "adiabatic.csv").exists()


def test_truncation_outputs(tmp_path):
    res = run_command("truncation", small_cfg(), tmp_path)
    s = res["summary"]
    assert s["eps_trunc"] <= 1e-3
    assert s["phi_max_recommended"] >= s["phi_cl"]


def test_reference_command(tmp_path, capsys):
    run_command("reference-scalings", small_cfg(), tmp_path)
    assert "G_JLP" in capsys.readouterr().out
    assert (tmp_path / "reference_scalings.json").exists()


def test_validation_error_leaves_no_outputs(tmp_path):
    out = tmp_path / "out"
    with pytest.raises(ValidationError):
        run_command("spectrum", small_cfg(**{"digitization.k": 0}), out)
    assert not out.exists()


def test_main_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("digitization: {k: 0}\n")
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2
    cfg.write_text("geometry: {sites_per_dim: 4}\ndigitization: {k: 3}\n")
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "b"),
                 "--cap-dim", "100"]) == 3
    assert not (tmp_path / "b").exists()
    cfg.write_text("geometry: {sites_per_dim: 2}\ndigitization: {k: 2}\n")
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0


def test_singleton_sweep_matches_run(tmp_path):
    direct = run_command("spectrum", small_cfg(), tmp_path / "direct")
    sw = run_command("sweep", small_cfg(**{"sweep.values": [2]}), tmp_path / "sweep")
    assert sw["summary"]["y"] == [direct["summary"]["gap_m"]]
    assert sw["summary"]["fit"] is None
    a = {f["path"]: f["sha256"] for f in direct["files"]}
    b = json.loads((tmp_path / "sweep" / "run_000" / "manifest.json").read_text())
    assert a == {f["path"]: f["sha256"] for f in b["files"]}


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = small_cfg(**{"sweep.values": [2, 3]})
    a = run_command("sweep", cfg, tmp_path / "a")
    b = run_command("sweep", cfg, tmp_path / "b", workers=2)
    assert sha256_file(tmp_path / "a" / "sweep.csv") == sha256_file(tmp_path / "b" / "sweep.csv")
    assert a["summary"]["y"] == b["summary"]["y"]


def test_sweep_failure_writes_partial_manifest(tmp_path):
    cfg = small_cfg(**{"sweep.values": [2, 0]})
    with pytest.raises(ValidationError):
        run_command("sweep", cfg, tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert [f["path"] for f in man["files"]] == ["run_000/manifest.json"]


def test_sweep_unknown_axis(tmp_path):
    with pytest.raises(ValidationError):
        run_command("sweep", small_cfg(**{"sweep.axis": "geometry.nope"}), tmp_path)
