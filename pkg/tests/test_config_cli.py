import filecmp
import json
import os
import subprocess
import sys

import pytest

from vstat_rff import cli
from vstat_rff.config import ExperimentConfig, apply_overrides, load_config
from vstat_rff.errors import ValidationError

MINIMAL = {"kernel": "gaussian", "process": "iid-normal", "m": 2, "p": 2,
           "nList": [128], "R": 100, "seed": 7}


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_minimal_config_is_valid(tmp_path):
    cfg = load_config(_write(tmp_path, MINIMAL))
    assert cfg.R == 100 and cfg.D == 1000 and cfg.xGrid == "auto"


def test_round_trip(tmp_path):
    cfg = load_config(_write(tmp_path, MINIMAL))
    again = load_config(_write(tmp_path, json.loads(cfg.to_json()), "again.json"))
    assert again.to_dict() == cfg.to_dict()
    assert again.sha256() == cfg.sha256()


@pytest.mark.parametrize("key,value", [
    ("R", 0), ("R", 49), ("m", 5), ("p", 3), ("nList", []), ("nList", [2]),
    ("xGrid", [0.2, 0.1]), ("xGrid", "manual"), ("kernel", "rbf"), ("process", "garch"),
    ("bound", "cor9"), ("seed", -1), ("C", 0), ("q", 0.5), ("gamma2", -1.0),
])
def test_validation_names_field(key, value):
    with pytest.raises(ValidationError) as info:
        ExperimentConfig.from_dict({**MINIMAL, key: value})
    assert info.value.field == key


def test_unknown_field_rejected():
    with pytest.raises(ValidationError) as info:
        ExperimentConfig.from_dict({**MINIMAL, "Rr": 3})
    assert info.value.field == "Rr"


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        load_config(str(path))


def test_overrides():
    cfg = apply_overrides(ExperimentConfig(), ["R=60", "nList=[16,32]", "kernel=cauchy"])
    assert cfg.R == 60 and cfg.nList == [16, 32] and cfg.kernel == "cauchy"
    with pytest.raises(ValidationError):
        apply_overrides(cfg, ["R"])


def _run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _values(text):
    out = {}
    for line in text.splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def test_kernel_info(capsys):
    code, out, _ = _run(["kernel-info", "gaussian"], capsys)
    vals = _values(out)
    assert code == 0
    assert float(vals["f0(0)"]) == 1.0 and float(vals["fhat_l1"]) == 1.0 and vals["PD"] == "true"
    assert out.startswith("config: ")


def test_bound_prints_cor2(tmp_path, capsys):
    code, out, _ = _run(["bound", "--set", "p=1", "--set", f"out={json.dumps(str(tmp_path))}",
                         "--set", "gamma1=1", "--set", "gamma2=1", "--n", "1000"], capsys)
    vals = _values(out)
    assert code == 0 and vals["variant"] == "cor2"
    assert float(vals["A"]) == pytest.approx(912.2, rel=1e-4)
    assert float(vals["M"]) == pytest.approx(95.43, rel=1e-4)
    lines = (tmp_path / "bound.csv").read_text().splitlines()
    assert lines[0].startswith("# vstat-rff ")
    assert any(l.startswith("# config-sha256 ") for l in lines)
    assert "x,bound" in lines
    assert "\r" not in (tmp_path / "bound.csv").read_bytes().decode()


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 1
    code, _, err = _run(["bound", "--set", "R=0"], capsys)
    assert code == 1 and "'R'" in err
    code, _, _ = _run(["bound", "--config", str(tmp_path / "missing.json")], capsys)
    assert code == 1
    code, _, err = _run(["simulate", "--set", "nList=[100000000]", "--set", "D=4000",
                         "--set", f"out={json.dumps(str(tmp_path))}"], capsys)
    assert code == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "vstat_rff", "nope"], capture_output=True,
                         text=True)
    assert res.returncode == 1 and "usage" in res.stderr


def test_simulate_and_approx(tmp_path, capsys):
    out = json.dumps(str(tmp_path))
    code, text, _ = _run(["simulate", "--set", "nList=[40]", "--set", "D=50",
                          "--set", f"out={out}"], capsys)
    assert code == 0 and "check Z_j >= |S_nj|: pass" in text
    series = (tmp_path / "series.csv").read_text().splitlines()
    assert series[3] == "k,V_k,scaled_abs,running_max" and len(series) == 44
    code, text, _ = _run(["approx", "--set", "D=200", "--set", "gridPoints=11",
                          "--set", f"out={out}"], capsys)
    assert code == 0 and "pass" in text
    doc = json.loads((tmp_path / "approx.json").read_text())
    assert doc["F"] <= doc["F_cap"] + 1e-9
    assert "_header" in json.loads((tmp_path / "expansion.json").read_text())


def test_decompose_command(tmp_path, capsys):
    code, text, _ = _run(["decompose", "--set", f"out={json.dumps(str(tmp_path))}"], capsys)
    assert code == 0
    assert "check degeneracy p=2: pass" in text
    doc = json.loads((tmp_path / "decomposition.json").read_text())
    assert doc["theta"]["stderr"] > 0


def test_calibrate_summary_matches_csv(tmp_path, capsys):
    out = json.dumps(str(tmp_path))
    code, text, _ = _run(["calibrate", "--set", "nList=[32,64]", "--set", "R=60",
                          "--set", "D=50", "--set", f"out={out}"], capsys)
    assert code == 0
    printed_C = _values(text)["C"]
    header = [l for l in (tmp_path / "tail_n32.csv").read_text().splitlines()
              if l.startswith("# C ")]
    assert header == [f"# C {printed_C}"]
    assert json.loads((tmp_path / "calibration.json").read_text())["C"] == float(printed_C)
    for name in ("tail_n32.svg", "tail_n64.svg", "tail_n64.csv"):
        assert (tmp_path / name).exists()
    assert "config-sha256" in (tmp_path / "tail_n64.svg").read_text()


def test_report_is_byte_identical(tmp_path, capsys):
    cfg = {"kernel": "gaussian", "process": "ar1", "processParams": {"rho": 0.5}, "m": 2,
           "p": 2, "nList": [32, 64, 128], "R": 50, "D": 50, "seed": 5}
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        path = _write(tmp_path, {**cfg, "out": str(tmp_path / "shared")}, f"{run}.json")
        assert _run(["report", "--config", path], capsys)[0] == 0
        os.rename(tmp_path / "shared", out)
        outs.append(out)
    names = sorted(os.listdir(outs[0]))
    assert "scaling.csv" in names and "summary.json" in names
    match, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
    assert not mismatch and not errors
