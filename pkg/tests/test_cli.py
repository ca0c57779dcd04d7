import json
import subprocess
import sys

import pytest

from svlab.cli import ConfigError, format_number, main, parse_args, parse_values, to_json

HEADER = "xi,h,t0_numeric,t0_predicted,ratio,t1_numeric,t1_predicted,regime"


def test_tunneling_csv(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code = main(["tunneling", "--model", "cubic", "--xi", "-1", "--h", "0.1,0.08,0.06", "--format", "csv", "--out", str(out)])
    assert code == 0
    text = out.read_bytes().decode()
    lines = text.split("\n")
    assert lines[0] == HEADER
    assert len(lines) == 5 and lines[-1] == ""
    assert "\r" not in text
    assert "tunneling: 3/3 rows ok" in capsys.readouterr().out


def test_byte_identical_outputs(tmp_path):
    args = ["tunneling", "--model", "sine", "--xi", "-0.5,0.5", "--h", "0.1"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b), "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_json_round_trip(tmp_path):
    out = tmp_path / "t.json"
    assert main(["tunneling", "--xi", "-1", "--h", "0.1", "--format", "json", "--out", str(out)]) == 0
    recs = json.loads(out.read_text())
    assert recs[0]["regime"] == "nondegenerate" and recs[0]["error"] is None
    assert to_json(recs) == out.read_text()


@pytest.mark.parametrize("x", [0.1, 1 / 3, 2.0**-1074, 1e300, -0.0, 123456789.125])
def test_number_format_round_trip(x):
    s = format_number(x)
    assert float(s) == x


def test_weyl_json_keys(capsys):
    assert main(["weyl", "--model", "cubic", "--a", "0.5", "--b", "1.0", "--h", "0.02", "--mode", "predicted"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert {"counted", "predicted", "discrepancy"} <= set(rep)
    assert rep["discrepancy"] == pytest.approx(rep["counted"] - rep["predicted"])


def test_predict_summary(capsys):
    assert main(["predict", "--model", "cubic", "--xi", "-1", "--h", "0.1"]) == 0
    cap = capsys.readouterr()
    assert "m_plus = 2.88956" in cap.err
    assert "S0 = 1.33333333" in cap.err
    assert cap.out.splitlines()[0] == "xi,h,S0,t0_predicted,t1_predicted,regime"


def test_partial_failure_exit_code(capsys):
    code = main(["tunneling", "--xi", "-1,-3", "--h", "0.1", "--precision", "standard"])
    assert code == 2
    assert "PrecisionError" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["tunneling", "--xi", "-1", "--h", "2"],
        ["tunneling", "--xi", "abc", "--h", "0.1"],
        ["tunneling", "--xi", "-1"],
        ["tunneling", "--xi", "-1", "--h", "0.1", "--bogus"],
        ["nonsense", "--h", "0.1"],
        ["weyl", "--h", "0.1", "--a", "1.0"],
        ["weyl", "--model", "sine", "--h", "0.1", "--a", "0.5", "--b", "3"],
        ["tunneling", "--xi", "1:0:0.5", "--h", "0.1"],
        ["tunneling", "--xi", "inf", "--h", "0.1"],
    ],
)
def test_config_errors(argv, capsys):
    assert main(argv) == 1
    assert "configuration error" in capsys.readouterr().err


def test_parse_values():
    assert parse_values("-1:1:0.5", "xi") == (-1.0, -0.5, 0.0, 0.5, 1.0)
    assert parse_values("0.1, 0.2", "h") == (0.1, 0.2)
    with pytest.raises(ConfigError):
        parse_values("0.1,,0.2", "h")


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# campaign\nmodel = sine\nxi = -0.5\nh = 0.1\nnormalize-sqrt-h = true\n")
    rc = parse_args(["predict", "--config", str(cfg), "--xi", "0.3"], environ={})
    assert rc.model.value == "sine" and rc.xi_spec == (0.3,) and rc.normalize_sqrt_h
    rc = parse_args(["predict"], environ={"SVLAB_CONFIG": str(cfg)})
    assert rc.xi_spec == (-0.5,)
    cfg.write_text("colour = red\n")
    with pytest.raises(ConfigError):
        parse_args(["predict", "--config", str(cfg)], environ={})


def test_negative_range_value():
    rc = parse_args(["resolvent", "--xi", "-2:2:1", "--h", "0.1"], environ={})
    assert rc.xi_spec == (-2.0, -1.0, 0.0, 1.0, 2.0)


def test_console_script():
    r = subprocess.run(
        [sys.executable, "-m", "svlab.cli", "predict", "--xi", "-1", "--h", "0.1"], capture_output=True, text=True
    )
    assert r.returncode == 0 and "nondegenerate" in r.stdout
