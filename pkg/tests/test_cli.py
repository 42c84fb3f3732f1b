import csv
import io

import pytest

from budgetsim import build_case1
from budgetsim.cli import main, parse_values
from budgetsim.config import ConfigError, dump_config, parse_config
from budgetsim.metrics import CSV_COLUMNS
from budgetsim.workload import ScenarioError

SHORT = 2_000_000_000


def short_config(fraction="0.3"):
    sc = build_case1(fraction)
    sc.duration = SHORT
    return dump_config(sc)


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "case1.ini"
    path.write_text(short_config())
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_csv_and_trace(cfg, tmp_path):
    out, tr = tmp_path / "m.csv", tmp_path / "t.trace"
    assert main(["run", str(cfg), "--metrics", str(out), "--trace", str(tr)]) == 0
    rows = read_csv(out)
    assert tuple(rows[0].keys()) == CSV_COLUMNS
    assert [r["topic"] for r in rows] == ["hprt", "lpbe"]
    assert tr.read_text().startswith("0 ")


def test_run_then_check_trace(cfg, tmp_path, capsys):
    tr = tmp_path / "t.trace"
    main(["run", str(cfg), "--metrics", str(tmp_path / "m.csv"), "--trace", str(tr)])
    capsys.readouterr()
    assert main(["check-trace", str(tr)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6 and all(ln.startswith("PASS") for ln in lines)


def test_check_trace_failure_exit_code(tmp_path, capsys):
    tr = tmp_path / "bad.trace"
    tr.write_text("1 a LOCK mw_mutex\n2 b LOCK mw_mutex\n")
    assert main(["check-trace", str(tr)]) == 2
    assert "FAIL lock_nesting at 2" in capsys.readouterr().out


def test_check_trace_parse_error(tmp_path, capsys):
    tr = tmp_path / "bad.trace"
    tr.write_text("1 a LOCK mw_mutex\ngarbage\n")
    assert main(["check-trace", str(tr)]) == 1
    assert "2" in capsys.readouterr().err


def test_missing_file_is_io_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.ini")]) == 3
    assert main(["check-trace", str(tmp_path / "nope.trace")]) == 3


def test_budget_above_period_names_field(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text(short_config().replace("init_budget_ns = 30000000",
                                           "init_budget_ns = 200000000"))
    assert main(["run", str(path)]) == 1
    assert "init_budget_ns" in capsys.readouterr().err


def test_config_errors_name_field():
    text = short_config()
    with pytest.raises(ConfigError) as err:
        parse_config(text.replace("low_priority = 10", "low_priority = 99"))
    assert "low_priority" in str(err.value)
    with pytest.raises(ConfigError) as err:
        parse_config(text.replace("busy_ns = 10000000", "busy_ns = ten", 1))
    assert "busy_ns" in str(err.value)


def test_config_round_trip():
    text = short_config()
    assert dump_config(parse_config(text)) == text


def test_sweep_builtin_rows(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "case2", "--values", "0.1,0.5", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 4
    assert [r["sweep_value"] for r in rows] == ["0.100000", "0.100000", "0.500000", "0.500000"]


def test_sweep_config_file_with_traces(cfg, tmp_path):
    out, tdir = tmp_path / "s.csv", tmp_path / "traces"
    assert main(["sweep", str(cfg), "--values", "0.2,1", "--out", str(out),
                 "--trace-dir", str(tdir)]) == 0
    rows = read_csv(out)
    hp = [int(r["received"]) for r in rows if r["topic"] == "hprt"]
    assert hp[0] < hp[1]
    assert len(list(tdir.iterdir())) == 2


def test_sweep_empty_values(capsys):
    assert main(["sweep", "case1", "--values", ""]) == 1
    assert "empty" in capsys.readouterr().err


def test_sweep_unknown_experiment(tmp_path):
    assert main(["sweep", str(tmp_path / "nothing"), "--values", "0.5"]) == 1


def test_sweep_out_of_range_value():
    assert main(["sweep", "case1", "--values", "1.5", "--out", "-"]) == 1


def test_parse_values():
    assert [str(v) for v in parse_values("0.1, 1/2,1")] == ["1/10", "1/2", "1"]
    with pytest.raises(ScenarioError):
        parse_values("0.1,abc")


def test_repeat_runs_are_byte_identical(cfg, tmp_path):
    outs = []
    for k in range(2):
        m, t = tmp_path / f"m{k}.csv", tmp_path / f"t{k}.trace"
        main(["run", str(cfg), "--metrics", str(m), "--trace", str(t)])
        outs.append((m.read_bytes(), t.read_bytes()))
    assert outs[0] == outs[1]


def test_gen_config_writes_loadable_files(tmp_path, capsys):
    assert main(["gen-config", str(tmp_path), "--budget", "0.5"]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["case1.ini", "case2.ini", "workconserving.ini"]
    sc = parse_config((tmp_path / "case1.ini").read_text())
    assert sc.subscriptions[0].sched.init_budget == 50_000_000


def test_run_metrics_to_stdout(cfg, capsys):
    assert main(["run", str(cfg)]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 2
