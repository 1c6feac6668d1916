import csv
import io
import json
import re
import subprocess
import sys

import pytest

from basinlab.cli import main
from basinlab.plot import PlotInputError, read_table, render


def run_cli(*argv):
    buf = io.StringIO()
    code = main(list(argv), out=buf)
    return code, buf.getvalue()


def test_run_two_depths_flow():
    code, text = run_cli("run", "--function", "two_depths", "--tau", "0.01", "--eps", "0",
                         "--trials", "20000", "--seed", "42")
    assert code == 0
    doc = json.loads(text)
    assert doc["ratio_per_well"] == pytest.approx(0.72, abs=0.02)
    assert sum(doc["counts"]) + doc["escaped"] == 20000
    assert doc["manifest"]["seed"] == 42 and doc["manifest"]["tool"] == "basinlab"
    assert len(doc["histogram"]) == 12


def test_analyze_two_widths():
    code, text = run_cli("analyze", "--function", "two_widths", "--format", "json")
    assert code == 0
    doc = json.loads(text)
    widths = sorted(w["width"] for w in doc["wells"])
    assert widths == pytest.approx([2 / 3] * 3 + [4 / 3] * 2, abs=1e-8)
    keys = {"index", "center", "min_value", "left", "right", "width", "depth", "type"}
    assert all(set(w) == keys for w in doc["wells"])
    assert doc["tau_bound"]["mean_width"] == pytest.approx(14 / 15)


def test_analyze_text_and_csv():
    code, text = run_cli("analyze")
    assert code == 0 and "12 wells" in text and "tau bound" in text
    code, text = run_cli("analyze", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 12 and rows[0]["type"] in ("0", "1")


def test_expression_without_interval_is_usage_error(capsys):
    code, _ = run_cli("run", "--function", "sin(pi*x)")
    assert code == 1
    assert "--interval" in capsys.readouterr().err


def test_expression_with_interval():
    code, text = run_cli("run", "--function", "sin(pi*x)", "--interval", "-1", "2",
                         "--trials", "500", "--format", "text")
    assert code == 0
    assert "ratio_per_well undefined" in text


def test_unknown_flag_is_usage_error(capsys):
    assert run_cli("run", "--bogus", "1")[0] == 1
    err = capsys.readouterr().err
    assert "--bogus" in err and len(err.strip().splitlines()) == 1


def test_missing_subcommand():
    assert run_cli()[0] == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--tau", "-1"],
        ["run", "--trials", "0"],
        ["run", "--tau", "abc"],
        ["run", "--function", "sin(x", "--interval", "0", "1"],
        ["trace", "--steps", "0"],
        ["sweep", "--eps-count", "0"],
    ],
)
def test_bad_values_are_usage_errors(argv):
    assert run_cli(*argv)[0] == 1


def test_computation_error_exit_code(capsys):
    code, _ = run_cli("analyze", "--function", "x", "--interval", "0", "1")
    assert code == 2
    assert "minimum" in capsys.readouterr().err
    assert run_cli("analyze", "--function", "0*x", "--interval", "0", "1")[0] == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"function": "two_widths", "trials": 300, "eps": 0.1, "steps": 50}))
    code, text = run_cli("run", "--config", str(cfg), "--trials", "200")
    doc = json.loads(text)
    assert code == 0
    assert doc["config"]["function"] == "two_widths"
    assert doc["trials"] == 200
    assert doc["config"]["eps"] == 0.1 and doc["config"]["max_steps"] == 50


@pytest.mark.parametrize(
    "content, needle",
    [("{not json", "invalid JSON"), ("[1, 2]", "JSON object"), ('{"colour": 1}', "unknown key")],
)
def test_malformed_config(tmp_path, capsys, content, needle):
    cfg = tmp_path / "c.json"
    cfg.write_text(content)
    assert run_cli("run", "--config", str(cfg))[0] == 1
    err = capsys.readouterr().err
    assert needle in err and len(err.strip().splitlines()) == 1


def test_missing_config(capsys):
    assert run_cli("run", "--config", "/nonexistent/c.json")[0] == 1


def test_manifest_config_round_trip(tmp_path):
    out1 = tmp_path / "a"
    code, text = run_cli("run", "--function", "two_widths", "--trials", "300", "--eps", "0.2",
                         "--steps", "40", "--seed", "9", "--out", str(out1))
    assert code == 0
    man = json.loads((out1 / "manifest.json").read_text())
    assert sorted(man["outputs"]) == sorted(str(out1 / n) for n in ("histogram.csv", "manifest.json", "result.json"))
    echo = tmp_path / "echo.json"
    echo.write_text(json.dumps(man["config"]))
    code, text2 = run_cli("run", "--config", str(echo))
    man2 = json.loads(text2)["manifest"]
    assert man2["config"] == man["config"]
    a, b = json.loads(text), json.loads(text2)
    assert a["counts"] == b["counts"]


def test_run_artifacts(tmp_path):
    code, _ = run_cli("run", "--trials", "1000", "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.reader(io.StringIO((tmp_path / "histogram.csv").read_text())))
    assert rows[0] == ["index", "center", "type", "count"]
    assert len(rows) == 13
    assert sum(int(r[3]) for r in rows[1:]) + json.loads((tmp_path / "result.json").read_text())["escaped"] == 1000


SWEEP_ARGS = ["sweep", "--taus", "0.02", "0.04", "--eps-max", "0.2", "--eps-count", "3",
              "--trials", "100", "--steps", "100"]


def test_sweep_csv_header_and_rows(tmp_path):
    code, text = run_cli(*SWEEP_ARGS, "--out", str(tmp_path))
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "tau,epsilon,trials,in_interval,escaped,ratio_per_well,ratio_total"
    assert len(lines) == 7
    doc = json.loads((tmp_path / "sweep.json").read_text())
    assert set(doc["gaps"]) == {"0.02", "0.04"}
    assert (tmp_path / "sweep.csv").read_text() == text


def test_sweep_text_format():
    code, text = run_cli(*SWEEP_ARGS, "--format", "text")
    assert code == 0 and text.count("gap width") == 2


def test_trace_csv():
    code, text = run_cli("trace", "--p0", "1.0", "--tau", "0.01", "--steps", "5")
    assert code == 0
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["step", "position", "value", "gradient"]
    assert len(rows) == 7
    assert float(rows[2][1]) == pytest.approx(1.031416, abs=1e-6)
    assert float(rows[1][3]) == pytest.approx(-3.141593, abs=1e-6)


def test_trace_replays_trial():
    a = run_cli("trace", "--trial", "3", "--eps", "0.2", "--steps", "20")[1]
    b = run_cli("trace", "--trial", "3", "--eps", "0.2", "--steps", "20")[1]
    c = run_cli("trace", "--trial", "4", "--eps", "0.2", "--steps", "20")[1]
    assert a == b != c


def test_trace_flow_mode():
    code, text = run_cli("trace", "--p0", "1.2", "--flow", "--steps", "5000", "--format", "json")
    doc = json.loads(text)
    assert doc["position"] == pytest.approx(1.5, abs=1e-6)
    assert doc["steps"] < 5000


def _bars(svg):
    return len(re.findall(r'<rect class="bar"', svg))


def test_plot_histogram(tmp_path):
    run_cli("run", "--trials", "5000", "--out", str(tmp_path))
    out = tmp_path / "h.svg"
    assert run_cli("plot", str(tmp_path / "histogram.csv"), "--output", str(out))[0] == 0
    svg = out.read_text()
    assert svg.startswith("<?xml") and svg.rstrip().endswith("</svg>")
    assert _bars(svg) == 12
    heights = [float(h) for h in re.findall(r'<rect class="bar" [^>]*height="([\d.]+)"', svg)]
    assert all((heights[i] < heights[i + 1]) == (i % 2 == 0) for i in range(11))
    # purity: the same CSV renders to the same bytes
    again = run_cli("plot", str(tmp_path / "histogram.csv"))[1]
    assert again == svg


def test_plot_sweep_panels(tmp_path):
    rows = ["tau,epsilon,trials,in_interval,escaped,ratio_per_well,ratio_total"]
    for tau in (0.001, 0.01, 0.02, 0.04, 0.06):
        for k in range(26):
            rows.append(f"{tau},{k * 0.02:.2f},1000,900,100,{0.5 + 0.01 * k},0.5")
    rows.append("0.06,0.52,1000,0,1000,,")
    path = tmp_path / "s.csv"
    path.write_text("\n".join(rows) + "\n")
    code, svg = run_cli("plot", str(path))
    assert code == 0
    assert svg.count('<g class="panel"') == 5
    # the undefined-ratio cell draws no bar
    assert _bars(svg) == 5 * 26


def test_plot_from_sweep_command(tmp_path):
    run_cli(*SWEEP_ARGS, "--out", str(tmp_path))
    code, svg = run_cli("plot", str(tmp_path / "sweep.csv"), "--kind", "sweep")
    assert code == 0 and svg.count('<g class="panel"') == 2


@pytest.mark.parametrize("content", ["", "index,center,type,count\n"])
def test_plot_empty(tmp_path, content):
    path = tmp_path / "e.csv"
    path.write_text(content)
    code, svg = run_cli("plot", str(path))
    assert code == 0
    assert "no data" in svg and "<line" in svg
    assert run_cli("plot", str(path), "--kind", "sweep")[0] == (0 if content == "" else 1)


@pytest.mark.parametrize(
    "content, row",
    [
        ("index,center,type,count\n0,0.5,0,3\n1,1.5,0\n", "row 3"),
        ("index,center,type,count\n0,abc,0,3\n", "row 2"),
        ("tau,epsilon,trials,in_interval,escaped,ratio_per_well,ratio_total\n0.1,x,1,1,0,,\n", "row 2"),
        ("a,b\n1,2\n", "row 1"),
    ],
)
def test_plot_malformed(tmp_path, capsys, content, row):
    path = tmp_path / "m.csv"
    path.write_text(content)
    assert run_cli("plot", str(path))[0] == 1
    assert row in capsys.readouterr().err


def test_plot_missing_file():
    assert run_cli("plot", "/nonexistent.csv")[0] == 1


def test_read_table_and_render_directly():
    kind, rows = read_table("index,center,type,count\n0,0.5,1,7\n")
    assert kind == "histogram" and rows == [{"index": "0", "center": "0.5", "type": "1", "count": "7"}]
    with pytest.raises(PlotInputError):
        render("index,center,type,count\n", kind="sweep")


def test_threads_env(monkeypatch):
    args = ("run", "--eps", "0.15", "--trials", "5000", "--steps", "100")
    monkeypatch.setenv("BASINLAB_THREADS", "1")
    a = json.loads(run_cli(*args)[1])
    monkeypatch.setenv("BASINLAB_THREADS", "4")
    b = json.loads(run_cli(*args)[1])
    assert a["counts"] == b["counts"]
    monkeypatch.setenv("BASINLAB_THREADS", "lots")
    assert run_cli(*args)[0] == 1


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "basinlab", "analyze", "--function", "two_widths"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and "5 wells" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "basinlab", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "basinlab" in proc.stdout
