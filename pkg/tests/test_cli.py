import csv
import json

import pytest

from railrisk.cli import CONFIG_KEYS, build_parser, main
from railrisk.lgbn import GBNModel
from railrisk.topology import load_network, transfer_stations

ARTIFACTS = ["snapshots.csv", "risks.csv", "model_gbn1.json", "model_gbn2.json", "model_ar.json",
             "report.json", "report.csv", "plot_data.csv"]


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("RAILRISK_OUTPUT_DIR", str(tmp_path / "out"))
    return tmp_path / "out"


@pytest.fixture
def toy_run(out):
    assert main(["pipeline", "--topology", "toy", "--days", "3"]) == 0
    return out


def test_gen_fixture(out):
    assert main(["gen-fixture", "--scale", "chongqing"]) == 0
    p = out / "topology_chongqing.json"
    net = load_network(p)
    assert (net.n_stations, net.n_sections) == (168, 362)
    first = p.read_bytes()
    assert main(["gen-fixture", "--scale", "chongqing"]) == 0
    assert p.read_bytes() == first
    assert main(["gen-fixture", "--scale", "toy", "-o", str(out / "t.json")]) == 0
    assert len(transfer_stations(load_network(out / "t.json"))) == 1


def test_pipeline_artifacts_parse(toy_run):
    for name in ARTIFACTS:
        assert (toy_run / name).is_file(), name
    report = json.loads((toy_run / "report.json").read_text())
    assert report["targets"] == ["A", "B", "Global"]
    with open(toy_run / "risks.csv") as fh:
        slots = {row["slot"] for row in csv.DictReader(fh)}
    assert len(slots) == 3 * 64
    GBNModel.load(toy_run / "model_gbn2.json")


def test_pipeline_idempotent(toy_run, tmp_path):
    again = tmp_path / "again"
    assert main(["pipeline", "--topology", "toy", "--days", "3", "--output-dir", str(again)]) == 0
    for name in ARTIFACTS:
        assert (again / name).read_bytes() == (toy_run / name).read_bytes(), name


def test_invalid_fitter_is_usage_error(out, capsys):
    assert main(["pipeline", "--topology", "toy", "--fitter", "bogus"]) == 1
    assert "usage" in capsys.readouterr().err
    assert not out.exists()


def test_invalid_config_is_validation_error(out, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"topology": "toy", "fitter": "gradient"}))
    assert main(["pipeline", "--config", str(cfg)]) == 2
    assert "fitter" in capsys.readouterr().err
    assert not out.exists()
    cfg.write_text(json.dumps({"topology": "toy", "dayz": 3}))
    assert main(["pipeline", "--config", str(cfg)]) == 2


def test_flags_override_config(out, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"topology": "toy", "days": 1, "seed": 1, "schemes": ["AR"], "fitter": "nnls"}))
    assert main(["pipeline", "--config", str(cfg), "--days", "2", "--scheme", "GBN1"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["days"] == 2
    assert report["schemes"] == ["GBN1"]
    assert report["config"]["fitter"] == "nnls"


def test_stage_failure_exit_code(out, tmp_path, capsys):
    bad = tmp_path / "snap.csv"
    bad.write_text("wrong,header\n")
    assert main(["evaluate", "--topology", "toy", "--snapshots", str(bad)]) == 3
    assert "read-snapshots" in capsys.readouterr().err


def test_missing_input_is_validation_error(out):
    assert main(["assess", "--topology", "toy", "--snapshots", "nope.csv"]) == 2
    assert main(["assess", "--topology", "missing.json", "--snapshots", "nope.csv"]) == 2


def test_stepwise_commands(out):
    assert main(["simulate", "--topology", "toy", "--days", "2"]) == 0
    snaps = str(out / "snapshots.csv")
    assert main(["assess", "--topology", "toy", "--snapshots", snaps]) == 0
    assert (out / "risks.csv").is_file()
    assert main(["train", "--topology", "toy", "--snapshots", snaps, "--scheme", "GBN1", "--scheme", "AR"]) == 0
    assert main(["predict", "--topology", "toy", "--snapshots", snaps, "--model", str(out / "model_gbn1.json")]) == 0
    rows = (out / "predictions_gbn1.csv").read_text().splitlines()
    assert rows[0] == "slot,A,B,Global" and len(rows) == 1 + 2 * 63
    assert main(["predict", "--topology", "toy", "--snapshots", snaps, "--model", str(out / "model_ar.json")]) == 0
    assert main(["evaluate", "--topology", "toy", "--snapshots", snaps]) == 0
    assert (out / "report.csv").is_file()


def test_inspect_line_node(toy_run, capsys):
    assert main(["inspect", "--model", str(toy_run / "model_gbn1.json"), "--node", "RL:A"]) == 0
    text = capsys.readouterr().out
    model = GBNModel.load(toy_run / "model_gbn1.json")
    parents = model.structure.parents["RL:A"]
    rows = text.splitlines()[2:]
    assert sorted(r.split()[0] for r in rows) == sorted(parents)
    coefs = [float(r.split()[1]) for r in rows]
    assert coefs == sorted(coefs, reverse=True)


def test_inspect_root_and_unknown(toy_run, capsys):
    assert main(["inspect", "--model", str(toy_run / "model_gbn1.json"), "--node", "SS:X:t0"]) == 0
    assert "root node: no CPD, sample mean/variance shown" in capsys.readouterr().out
    assert main(["inspect", "--model", str(toy_run / "model_gbn1.json"), "--node", "RL:Q"]) == 2
    err = capsys.readouterr().err
    assert "RL:A" in err and "RL:B" in err


def test_inspect_nnls_model_has_no_negative_slopes(out, capsys):
    assert main(["pipeline", "--topology", "toy", "--days", "2", "--fitter", "nnls", "--scheme", "GBN1"]) == 0
    capsys.readouterr()
    model = GBNModel.load(out / "model_gbn1.json")
    for node in model.structure.non_roots:
        assert main(["inspect", "--model", str(out / "model_gbn1.json"), "--node", node]) == 0
        rows = capsys.readouterr().out.splitlines()[2:]
        assert all(float(r.split()[1]) >= 0 for r in rows)


def test_help_documents_config_keys():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    keys = [line.split()[0] for line in CONFIG_KEYS.splitlines()[1:] if line.startswith("  ") and not line.startswith("   ")]
    for name in ("simulate", "assess", "train", "predict", "evaluate", "pipeline"):
        text = sub.choices[name].format_help()
        for key in keys:
            assert key in text, (name, key)
    assert "--scale" in sub.choices["gen-fixture"].format_help()
    assert "--node" in sub.choices["inspect"].format_help()
