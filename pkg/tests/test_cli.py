import json

import pytest

from interlock.cli import build_parser, main, read_config_file, resolve_run_config


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["synth", "--out", str(out), "--n", "40", "--days", "40", "--years", "2", "--seed", "5"]) == 0
    return out


def inputs(d):
    return ["--boards", str(d / "boards.csv"), "--prices", str(d / "prices.csv"), "--meta", str(d / "meta.csv")]


def test_synth_writes_bundle(data):
    for name in ("boards.csv", "prices.csv", "meta.csv", "traders.csv", "synth.json"):
        assert (data / name).exists()
    assert json.loads((data / "synth.json").read_text())["config"]["n_corporations"] == 40


def test_validate_clean(data, capsys):
    assert main(["validate", *inputs(data), "--traders", str(data / "traders.csv")]) == 0
    assert capsys.readouterr().out.strip().endswith("0 issues")


def test_validate_reports_every_problem(tmp_path, data, capsys):
    prices = tmp_path / "prices.csv"
    lines = (data / "prices.csv").read_text().splitlines()
    lines[3] = lines[3].rsplit(",", 1)[0] + ",-1"
    lines.append("ORPHAN,2007-01-02,5.0")
    prices.write_text("\n".join(lines) + "\n")
    code = main(["validate", "--boards", str(data / "boards.csv"), "--prices", str(prices), "--meta", str(data / "meta.csv")])
    out = capsys.readouterr().out.splitlines()
    assert code == 1
    assert any(f"{prices}:4: non-positive close -1" in line for line in out)
    assert any("ORPHAN" in line and line.startswith("warning") for line in out)
    assert out[-1] == "2 issues"


def test_analyze_writes_reports(tmp_path, data, capsys):
    out = tmp_path / "run"
    code = main(["analyze", *inputs(data), "--replicates", "100", "--null-replicates", "0", "--out", str(out), "--years", "2008", "--export"])
    assert code == 0
    names = {p.name for p in out.iterdir()}
    assert {"report_2008.json", "mantel_by_sector.csv", "performance_effects.csv", "summary.json", "run.json"} <= names
    assert "report_2007.json" not in names
    assert "trader_corr.csv" not in names
    run = json.loads((out / "run.json").read_text())
    assert run["config"]["replicates"] == 100
    assert "numpy" in run["versions"]
    assert (out / "2008" / "similarity.csv").exists()
    report = json.loads((out / "report_2008.json").read_text())
    # the earlier year is in the bundle, so the change analysis runs
    assert report["delta"]


def test_analyze_rejects_few_replicates(data, capsys):
    assert main(["analyze", *inputs(data), "--replicates", "50"]) == 2
    assert "at least 100" in capsys.readouterr().err


def test_analyze_rejects_bad_threshold(data, capsys):
    assert main(["analyze", *inputs(data), "--max-missing", "0.6"]) == 2


def test_analyze_unknown_year(tmp_path, data, capsys):
    assert main(["analyze", *inputs(data), "--years", "1999", "--out", str(tmp_path / "x")]) == 2
    assert "1999" in capsys.readouterr().err


def test_unreadable_input(tmp_path, capsys):
    code = main(["analyze", "--boards", str(tmp_path / "nope.csv"), "--prices", "p", "--meta", "m"])
    assert code == 2
    assert "cannot read" in capsys.readouterr().err


def test_ingest_error_reports_file_and_line(tmp_path, data, capsys):
    bad = tmp_path / "meta.csv"
    bad.write_text("corp_id,ticker,sector,latitude,longitude\nA,AAA,financial,100,0\n")
    code = main(["analyze", "--boards", str(data / "boards.csv"), "--prices", str(data / "prices.csv"), "--meta", str(bad), "--out", str(tmp_path / "o")])
    assert code == 2
    assert f"{bad}:2:" in capsys.readouterr().err


def test_config_precedence(tmp_path, data, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# comment\nreplicates = 300\nseed = 4\nmethod = spearman\nboards = {data / 'boards.csv'}\n")
    parser = build_parser()
    base = ["analyze", "--prices", str(data / "prices.csv"), "--meta", str(data / "meta.csv"), "--config", str(cfg)]
    r = resolve_run_config(parser.parse_args(base))
    assert (r.replicates, r.seed, r.method) == (300, 4, "spearman")
    monkeypatch.setenv("INTERLOCK_REPLICATES", "400")
    monkeypatch.setenv("INTERLOCK_SEED", "6")
    r = resolve_run_config(parser.parse_args(base))
    assert (r.replicates, r.seed) == (400, 6)
    r = resolve_run_config(parser.parse_args(base + ["--replicates", "500"]))
    assert (r.replicates, r.seed, r.method) == (500, 6, "spearman")
    assert r.out.parent.name == "runs"


def test_config_file_syntax(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("replicates 100\n")
    with pytest.raises(ValueError, match="bad.cfg:1"):
        read_config_file(bad)


def test_year_ranges(data):
    args = build_parser().parse_args(["analyze", *inputs(data), "--years", "2005-2007,2009", "--cutoffs", "2,3"])
    r = resolve_run_config(args)
    assert r.years == (2005, 2006, 2007, 2009)
    assert r.cutoffs == (2, 3)


def test_network_summary(data, capsys, tmp_path):
    assert main(["network-summary", *inputs(data)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("year,n_corporations,n_links")
    assert [line.split(",")[0] for line in lines[1:]] == ["2007", "2008"]
    out = tmp_path / "summary.csv"
    assert main(["network-summary", *inputs(data), "--years", "2007", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 2
