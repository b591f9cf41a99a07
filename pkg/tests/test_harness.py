import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from omegalab.harness.cli import main
from omegalab.harness.config import RunConfig, load_schema
from omegalab.harness.io import dumps
from omegalab.harness.verify import CHECK_IDS, CHECKS, SuiteParams, run_suite
from omegalab.scenarios import get_scenario


def test_dumps_fixed_float_format():
    text = dumps({"b": 1.0, "a": [0.1, 2], "c": float("nan"), "d": np.float64(3.0), "e": True})
    d = json.loads(text)
    assert d == {"a": [0.1, 2], "b": 1.0, "c": None, "d": 3.0, "e": True}
    assert '"b": 1.000000000000e+00' in text
    assert text.index('"a"') < text.index('"b"')


def test_run_config_schema():
    cfg = RunConfig.from_dict({"scenario": "ex62", "overrides": {"N": 32, "t_end": 5.0}, "seed": 3})
    sc = cfg.resolve()
    assert sc.config.N == 32 and sc.settings.t_end == 5.0
    with pytest.raises(jsonschema.ValidationError):
        RunConfig.from_dict({"scenario": "ex62", "overrides": {"bogus": 1}})
    with pytest.raises(jsonschema.ValidationError):
        RunConfig.from_dict({"seed": -1})


def test_inline_scenario_config(tmp_path):
    d = get_scenario("heat").to_dict()
    d["name"] = "my-heat"
    cfg = {"scenario": d, "overrides": {"t_end": 1.0}, "out": str(tmp_path / "o")}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(path)]) == 0
    meta = json.loads((tmp_path / "o" / "metadata.json").read_text())
    assert meta["scenario"]["name"] == "my-heat"


def test_simulate_is_deterministic_and_echoes_config(tmp_path):
    a, b, c = (str(tmp_path / k) for k in "abc")
    assert main(["simulate", "--scenario", "ex61-l0", "--t-end", "64", "--out", a]) == 0
    assert main(["simulate", "--scenario", "ex61-l0", "--t-end", "64", "--out", b]) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert main(["simulate", "--scenario", "ex61-l0", "--t-end", "64", "--n", "32", "--dt", "2e-3",
                 "--out", c]) == 0
    meta = json.loads((tmp_path / "c" / "metadata.json").read_text())
    assert meta["scenario"]["config"]["N"] == 32
    assert meta["scenario"]["config"]["dt"] == 2e-3
    assert meta["run_config"]["overrides"]["t_end"] == 64.0


def test_random_u0_uses_seed(tmp_path):
    for k in "ab":
        main(["simulate", "--scenario", "ex62", "--t-end", "1", "--random-u0", "--seed", "7",
              "--out", str(tmp_path / k)])
    main(["simulate", "--scenario", "ex62", "--t-end", "1", "--random-u0", "--seed", "8",
          "--out", str(tmp_path / "c")])
    read = lambda k: (tmp_path / k / "trajectory.csv").read_bytes()
    assert read("a") == read("b") != read("c")


def test_export_section_matches_oracle(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--scenario", "ex61-l-1", "--t-end", "20", "--dt", "1e-3", "--stride", "100",
                 "--out", str(out)]) == 0
    col = tmp_path / "section.dat"
    assert main(["export-plot", "--input", str(out / "trajectory.csv"), "--kind", "section",
                 "--x0", str(np.pi / 2), "--out", str(col)]) == 0
    data = np.loadtxt(col)
    sc = get_scenario("ex61-l-1")
    np.testing.assert_allclose(data[:, 1], sc.oracle(data[:, 0], np.pi / 2), atol=1e-6)
    field = tmp_path / "field.dat"
    main(["export-plot", "--input", str(out / "trajectory.csv"), "--kind", "field", "--out", str(field)])
    arr = np.loadtxt(field)
    assert arr.shape == (201, 65)


def test_lap_command_and_export(tmp_path):
    out = tmp_path / "lap"
    assert main(["lap", "--scenario", "bistable", "--seed", "3", "--out", str(out)]) == 0
    col = tmp_path / "lap.dat"
    main(["export-plot", "--input", str(out / "lap.csv"), "--kind", "lap", "--out", str(col)])
    z = np.loadtxt(col)[:, 1]
    assert np.all(np.diff(z) <= 0)
    assert json.loads((out / "drops.json").read_text()) is not None


def test_spectrum_and_omega_commands(tmp_path):
    out = tmp_path / "s"
    assert main(["spectrum", "--scenario", "heat", "--out", str(out)]) == 0
    rep = json.loads((out / "spectrum.json").read_text())
    jsonschema.validate(rep, load_schema("spectrum.schema.json"))
    np.testing.assert_allclose(rep["exponents"], [0, -1, -1, -4, -4], atol=1e-3)
    assert rep["within_tolerance"] is True
    hist = tmp_path / "h.dat"
    assert main(["export-plot", "--input", str(out / "spectrum_history.csv"), "--kind", "exponents",
                 "--out", str(hist)]) == 0
    assert np.loadtxt(hist).shape[1] == 6
    assert main(["omega", "--scenario", "heat", "--out", str(out)]) == 0
    om = json.loads((out / "omega.json").read_text())
    jsonschema.validate(om, load_schema("omega_report.schema.json"))
    assert om["trichotomy_case"].startswith("(i)")


def test_error_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--scenario", "nope", "--out", str(tmp_path)]) == 2
    assert main(["export-plot", "--input", str(tmp_path / "missing.csv"), "--kind", "field"]) == 2
    p = tmp_path / "x.csv"
    p.write_text("t,x_0\n0,1\n")
    assert main(["export-plot", "--input", str(p), "--kind", "bogus"]) == 2
    capsys.readouterr()
    # a transient longer than half the run leaves no omega sample
    assert main(["omega", "--scenario", "heat", "--t-end", "10", "--t-transient", "6",
                 "--out", str(tmp_path)]) == 2
    assert "twice the transient" in capsys.readouterr().err


def test_list_scenarios(capsys):
    assert main(["list-scenarios", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert {r["name"] for r in rows} == {"ex61-l0", "ex61-l-1", "ex62", "bistable", "heat"}


def test_every_check_has_one_anchor():
    assert CHECK_IDS == [f"A{i:02d}" for i in range(1, 14)]
    anchors = [c.anchor for c in CHECKS]
    assert len(set(anchors)) == len(anchors) and all(anchors)


def test_verify_subset_report_validates(tmp_path):
    assert main(["verify", "--quick", "--only", "A02", "A09", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify_report.json").read_text())
    jsonschema.validate(rep, load_schema("verify_report.schema.json"))
    assert [c["id"] for c in rep["checks"]] == ["A02", "A09"]
    assert rep["summary"]["pass"] == 2


def test_fault_injection_fails_oracle_checks():
    rep = run_suite(SuiteParams.quick(), only={"A01", "A06", "A09"}, flip_diffusion=True)
    assert [c.status for c in rep.checks] == ["fail", "fail", "fail"]
    assert all(c.diagnostics for c in rep.checks)
    assert not rep.passed
    jsonschema.validate(rep.to_dict(), load_schema("verify_report.schema.json"))


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "omegalab.harness.cli", "list-scenarios"],
                       capture_output=True, text=True, check=True)
    assert "ex61-l0" in r.stdout
