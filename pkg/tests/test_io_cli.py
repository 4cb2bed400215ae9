import json
import math
from dataclasses import fields

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldp_nls import cli
from ldp_nls.errors import ConfigError, DivergenceError
from ldp_nls.io import (
    MANIFEST_NAME,
    format_number,
    read_csv,
    read_jsonl,
    verify_manifest,
    write_csv,
    write_jsonl,
    write_manifest,
)
from ldp_nls.montecarlo import TailEstimate


@given(st.floats(allow_nan=False))
def test_numbers_round_trip(x):
    assert float(format_number(x)) == x


def test_special_cells():
    assert format_number(None) == ""
    assert format_number(True) == "true"
    assert format_number(float("nan")) == "nan"
    assert format_number(-math.inf) == "-inf"
    assert format_number(3) == "3"


def test_csv_and_jsonl_round_trip(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["a", "b"], [(0.1, None), (2, "x,y")])
    header, rows = read_csv(p)
    assert header == ["a", "b"] and rows == [["0.10000000000000001", ""], ["2", "x,y"]]
    with pytest.raises(ValueError):
        write_csv(tmp_path / "bad.csv", ["a"], [(1, 2)])
    recs = [{"x": 0.1, "inf": math.inf, "l": [1, 2.5], "n": None, "s": "é"}]
    q = write_jsonl(tmp_path / "r.jsonl", recs)
    back = read_jsonl(q)[0]
    assert back["x"] == 0.1 and back["inf"] == math.inf and back["l"] == [1, 2.5] and back["n"] is None
    assert not [f for f in tmp_path.iterdir() if f.name.endswith(".tmp")]


def test_manifest_detects_tampering(tmp_path):
    a = write_csv(tmp_path / "a.csv", ["x"], [(1.0,)])
    b = write_jsonl(tmp_path / "b.jsonl", [{"y": 2}])
    write_manifest(tmp_path, {"seed": 1}, [a, b], "0", 0.1, 5)
    assert verify_manifest(tmp_path) == [("a.csv", "ok"), ("b.jsonl", "ok")]
    a.write_text(a.read_text()[:-2])
    b.unlink()
    assert verify_manifest(tmp_path / MANIFEST_NAME) == [("a.csv", "mismatch"), ("b.jsonl", "missing")]
    with pytest.raises(FileNotFoundError):
        verify_manifest(tmp_path / "nope.json")


def test_config_schema(tmp_path):
    cfg = cli.default_config()
    assert cfg["coeffs"]["kind"] == "exponential" and cfg["tail"]["theta"] == -1.0
    bad = tmp_path / "bad.toml"
    bad.write_text("[tail]\nz1 = 2\n")
    with pytest.raises(ConfigError) as exc:
        cli.load_config(bad)
    assert exc.value.path == "tail.z1"
    bad.write_text('[flow]\nsign = "sideways"\n')
    with pytest.raises(ConfigError):
        cli.load_config(bad)
    bad.write_text("flow = 3\n")
    with pytest.raises(ConfigError):
        cli.load_config(bad)
    bad.write_text("[flow\n")
    with pytest.raises(ConfigError):
        cli.load_config(bad)


def test_overrides():
    cfg = cli.default_config()
    cli.apply_override(cfg, "eps=0.05")
    cli.apply_override(cfg, "tail.n_samples=7")
    cli.apply_override(cfg, "eps_grid=[0.3, 0.1]")
    cli.apply_override(cfg, "sign=focusing")
    assert cfg["flow"]["eps"] == 0.05 and cfg["tail"]["n_samples"] == 7
    assert cfg["flow"]["eps_grid"] == [0.3, 0.1] and cfg["flow"]["sign"] == "focusing"
    for bad in ("n_samples=3", "nothing=1", "eps=abc", "tail.n_samples=1.5", "noequals"):
        with pytest.raises(ConfigError):
            cli.apply_override(cfg, bad)


def test_cgf_command_writes_curve(tmp_path, capsys):
    out = tmp_path / "cgf"
    assert cli.main(["cgf", "--out", str(out), "--set", "n_modes=20"]) == 0
    header, rows = read_csv(out / "cgf.csv")
    assert header == ["eps", "scaled_cgf", "limit", "abs_error"] and len(rows) == 6
    assert cli.main(["verify", str(out)]) == 0
    assert "OK" in capsys.readouterr().out


def test_tail_command_emits_every_field(tmp_path, monkeypatch):
    monkeypatch.setenv("LDPNLS_SEED", "77")
    out = tmp_path / "tail"
    args = ["tail", "--out", str(out), "--set", "eps=0.1", "--set", "z0=1.0", "--set", "tail.n_samples=2000"]
    assert cli.main(args) == 0
    rec = read_jsonl(out / "tail.jsonl")
    assert len(rec) == 1 and set(rec[0]) == {f.name for f in fields(TailEstimate)}
    assert rec[0]["master_seed"] == 77
    assert cli.main(args + ["--seed", "5"]) == 0
    assert read_jsonl(out / "tail.jsonl")[0]["master_seed"] == 5


def test_reruns_are_byte_identical(tmp_path):
    common = ["--set", "tail.n_samples=5000", "--set", "tail.block_size=512", "--seed", "3"]
    assert cli.main(["tail", "--out", str(tmp_path / "a"), "--threads", "1", *common]) == 0
    assert cli.main(["tail", "--out", str(tmp_path / "b"), "--threads", "4", *common]) == 0
    assert (tmp_path / "a/tail.jsonl").read_bytes() == (tmp_path / "b/tail.jsonl").read_bytes()
    # the effective config written by a run reproduces it
    assert cli.main(["tail", "--config", str(tmp_path / "a/config.toml"), "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a/tail.jsonl").read_bytes() == (tmp_path / "c/tail.jsonl").read_bytes()
    ma = json.loads((tmp_path / "a" / MANIFEST_NAME).read_text())
    assert ma["files"][0]["path"] == "tail.jsonl" and ma["n_samples"] == 5000


@pytest.mark.parametrize(
    "command,extra,files",
    [
        ("sample", ["--set", "count=2", "--set", "n_modes=3"], ["samples.csv", "samples.jsonl"]),
        ("evolve", ["--set", "n_modes=4", "--set", "t_end=0.5"], ["trajectory.csv", "final_field.csv"]),
        ("sharpness", ["--set", "levels=[1, 10]"], ["sharpness.csv"]),
        ("sweep", ["--set", "eps_grid=[0.2, 0.1]", "--set", "sweep.n_samples=500", "--set", "n_modes=4"], ["sweep.csv"]),
        (
            "error-bound",
            ["--set", "n_modes=4", "--set", "error_bound.n_samples=4", "--set", "eps_list=[0.2]", "--set", "dt=0.05"],
            ["error_bound.csv", "error_samples.csv"],
        ),
    ],
)
def test_other_commands(tmp_path, command, extra, files):
    out = tmp_path / command
    assert cli.main([command, "--out", str(out), *extra]) == 0
    for f in files:
        assert (out / f).is_file()
    assert all(status == "ok" for _, status in verify_manifest(out))


def test_error_exit_codes(tmp_path, capsys, monkeypatch):
    assert cli.main(["tail", "--set", "bogus=1", "--out", str(tmp_path)]) == 2
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["exit_code"] == 2 and rec["field"] == "bogus"
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["cgf", "--out", str(blocker / "sub")]) == 4
    assert cli.main(["verify", str(tmp_path / "missing")]) == 4
    assert "not_found" in capsys.readouterr().err

    def boom(*a, **k):
        raise DivergenceError("non-finite amplitudes at step 3", step=3)

    monkeypatch.setattr(cli, "solve", boom)
    assert cli.main(["evolve", "--out", str(tmp_path / "ev")]) == 3
    assert json.loads(capsys.readouterr().err.strip())["step"] == 3
    monkeypatch.setenv("LDPNLS_SEED", "minus one")
    assert cli.main(["cgf", "--out", str(tmp_path / "x")]) == 2


def test_verify_names_truncated_file(tmp_path, capsys):
    out = tmp_path / "s"
    assert cli.main(["sharpness", "--out", str(out), "--set", "levels=[1, 2, 3]"]) == 0
    p = out / "sharpness.csv"
    p.write_bytes(p.read_bytes()[:-5])
    assert cli.main(["verify", str(out / MANIFEST_NAME)]) == 1
    assert "MISMATCH sharpness.csv" in capsys.readouterr().out
