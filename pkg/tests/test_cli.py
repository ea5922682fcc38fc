import json
import subprocess
import sys

import pytest

from pfdsqo import bench
from pfdsqo.cli import ConfigError, RunConfig, build_parser, config_from_args, load_config_file, main, run_benchmark
from pfdsqo.report import load_report, read_trace_csv


def test_hs118_q5_succeeds(capsys):
    assert main(["hs118", "--q", "5", "--c", "1"]) == 0
    out = capsys.readouterr().out
    assert "664.82" in out and "hs118-q5" in out


def test_json_output_file(tmp_path):
    out = tmp_path / "r.json"
    assert main(["hs118", "--q", "5", "--format", "json", "--out", str(out)]) == 0
    rep = load_report(out)
    assert abs(rep.objective - 664.82045) < 1e-3
    assert rep.params["c"] == 1.0


def test_max_iter_one_fails(capsys):
    assert main(["hs118", "--q", "6", "--max-iter", "1"]) == 1


def test_epd_csv(capsys, tmp_path):
    out = tmp_path / "trace.csv"
    assert main(["epd", "--T", "6", "--format", "csv", "--out", str(out)]) == 0
    rows = read_trace_csv(out.read_text())
    assert rows and rows[-1]["eps_rel"] < 0.005


def test_epd_valve_point(capsys):
    assert main(["epd", "--valve-point", "--T", "6"]) == 0
    assert "units5-vp" in capsys.readouterr().out


def test_malformed_unit_file_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text(
        "kind,a,b,c,d,e,f,Pmin,Pmax,D,U,period,value\n"
        "unit,1e-6,0.008,2,25,0,0,10,75,30,30,,\n"
        "unit,1e-6,0.008,2,25,0,0,10,seventy,30,30,,\n"
        "load,,,,,,,,,,,1,40\n"
    )
    assert main(["epd", "--units-file", str(path)]) == 2
    err = capsys.readouterr().err
    assert f"{path}:3:" in err and "'Pmax'" in err


def test_bad_parameter_exit_2(capsys):
    assert main(["hs118", "--q", "5", "--rho", "1.5"]) == 2
    assert "rho" in capsys.readouterr().err


def test_small_q_rejected(capsys):
    assert main(["hs118", "--q", "4"]) == 2


def test_sweep_writes_one_file_per_run(tmp_path, capsys):
    out = tmp_path / "sweep"
    assert main(["sweep", "--q", "5,6", "--sweep-c", "0,1", "--baseline", "--format", "json", "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(
        f"hs118-q{q}-{tag}.json" for q in (5, 6) for tag in ("c0", "c1", "baseline")
    )
    table = capsys.readouterr().out
    assert "RE_F" in table and "cumulative time" in table


def test_sweep_default_c_values():
    args = build_parser().parse_args(["sweep"])
    cfg = config_from_args(args)
    assert cfg.sweep_c == (0.0, 0.5, 1.0) and cfg.q == (5,)


def test_config_file_and_precedence(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"q": [7], "rho": 0.3, "max-iter": 50, "format": "json"}))
    args = build_parser().parse_args(["hs118", "--config", str(cfg_path), "--rho", "0.4"])
    cfg = config_from_args(args)
    assert cfg.q == (7,) and cfg.fmt == "json"
    assert cfg.overrides == {"rho": 0.4, "max_iter": 50}


@pytest.mark.parametrize(
    "content",
    ['{"rho": "high"}', '{"unknown": 1}', '[1, 2]', '{"baseline": 1}', '{"max_iter": true}', "{oops"],
)
def test_bad_config_rejected(tmp_path, content):
    path = tmp_path / "cfg.json"
    path.write_text(content)
    with pytest.raises(ConfigError):
        load_config_file(path)


def test_bad_config_exit_2(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text('{"rho": "high"}')
    assert main(["hs118", "--config", str(path)]) == 2


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(benchmark="other")
    with pytest.raises(ConfigError):
        RunConfig(benchmark="hs118", overrides={"gamma": 1.0})
    with pytest.raises(ConfigError):
        RunConfig(benchmark="hs118", fmt="xml")


def test_reports_deterministic():
    cfg = RunConfig(benchmark="hs118", q=(8,), parallel=True)
    _, a = run_benchmark(cfg)
    _, b = run_benchmark(cfg)
    assert [r.alf for r in a[0].report.trace] == [r.alf for r in b[0].report.trace]


def test_process_pool_matches_serial():
    serial = RunConfig(benchmark="hs118", q=(5, 6), sweep_c=(0.0, 1.0))
    pooled = RunConfig(benchmark="hs118", q=(5, 6), sweep_c=(0.0, 1.0), jobs=2)
    _, a = run_benchmark(serial)
    _, b = run_benchmark(pooled)
    assert [r.report.objective for r in a] == [r.report.objective for r in b]


def test_verify_subcommand(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] qp-oracle" in out and "[FAIL]" not in out


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pfdsqo.cli", "hs118", "--q", "5"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
