import hashlib
import json
from importlib import resources

import pytest

from mfglab import cli, runner
from mfglab.config import ConfigError, canonical_json, validate_config

SCENARIOS = resources.files("mfglab") / "scenarios"


def bundled(name):
    return (SCENARIOS / name).read_text(encoding="utf-8")


def violations(text):
    with pytest.raises(ConfigError) as err:
        validate_config(text)
    return dict(err.value.violations), err.value


def test_empty_document_is_a_parse_error():
    v, err = violations("   ")
    assert "<document>" in v and err.line == 1


def test_syntax_error_has_line_and_column():
    v, err = violations('{\n  "games": {"game": "cournot",}\n}')
    assert (err.line, err.column) == (2, 31)
    assert "line 2" in v["<document>"]


def test_negative_meeting_cost_is_flagged_at_its_path():
    v, _ = violations('{"meeting": {"A": -1}}')
    assert v == {"meeting.A": "must be positive"}


def test_all_violations_are_listed():
    doc = {"meeting": {"A": -1, "B": "x", "quantile": 2, "typo": 1}, "seed": -3, "tolerances": {"nope": 1}}
    v, _ = violations(json.dumps(doc))
    assert set(v) == {"meeting.A", "meeting.B", "meeting.quantile", "meeting.typo", "seed", "tolerances.nope"}


def test_exactly_one_kind_block():
    v, _ = violations('{"games": {"game": "cournot"}, "meeting": {}}')
    assert "<document>" in v
    v, _ = violations('{"seed": 1}')
    assert "<document>" in v


@pytest.mark.parametrize(
    "doc, path",
    [
        ({"meeting": {"nu": {"kind": "normal", "scale": 1.0}}}, "meeting.nu"),
        ({"games": {"game": "cournot", "a": 1.0, "c": 2.0}}, "games.a"),
        ({"mkv": {"dt": 0.3}}, "mkv.dt"),
        ({"mkv": {"kernel": {"name": "custom-polynomial"}}}, "mkv.kernel.coeffs"),
        ({"aiyagari": {"l_min": 1.5}}, "aiyagari.l_min"),
        ({"aiyagari": {"labor": {"kind": "jump"}}}, "aiyagari.labor.kind"),
        ({"fbsde": {"instance": "custom", "vol": [0, 0, 0]}}, "fbsde.vol"),
        ({"mfg": {"preset": "lq_mean_field", "method": "hjb_fp", "epsilon_N": [10]}}, "mfg.epsilon_N"),
        ({"mfg": {"preset": "custom", "drift": [0, 0, 0]}}, "mfg.drift"),
        ({"games": {"game": "custom", "payoff1": [[1, 2]], "payoff2": [[1]]}}, "games"),
    ],
)
def test_module_preconditions_fail_at_validate_time(doc, path):
    v, _ = violations(json.dumps(doc))
    assert path in v


def test_bundled_corpus():
    listing = cli.list_examples()
    names = [n for n, _, _ in listing]
    assert len(names) >= 8 and names == sorted(names)
    assert all(desc for _, _, desc in listing)
    for name in names:
        text = bundled(name)
        cfg = validate_config(text)
        assert cfg.to_json() == text
        assert canonical_json(json.loads(text)) == text


def test_lq_example_round_trips_byte_identically():
    text = bundled("lq_mfg.json")
    assert validate_config(text).to_json().encode() == text.encode()


def test_cournot_example(tmp_path):
    report = runner.run_scenario(validate_config(bundled("cournot.json")), tmp_path, "cournot")
    out = json.loads((tmp_path / "summary.json").read_text())
    assert out["q1"] == 1.0 and out["q2"] == 1.0
    assert report.passed


def test_meeting_example_is_byte_reproducible(tmp_path):
    cfg = validate_config(bundled("meeting_basic.json"))
    a = runner.run_scenario(cfg, tmp_path / "a", "meeting_basic")
    b = runner.run_scenario(cfg, tmp_path / "b", "meeting_basic", workers=3)
    assert a.manifest == b.manifest
    for name in a.manifest:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert runner.verify_manifest(a)
    text = (tmp_path / "a" / "finite_n.csv").read_text()
    assert text.splitlines()[0] == "N,mean_start,std_start" and "\r" not in text
    assert (tmp_path / "a" / "picard.csv").read_text().startswith("iteration,T,residual\n")


def test_black_scholes_example_records_oracle_error(tmp_path):
    report = runner.run_scenario(validate_config(bundled("black_scholes.json")), tmp_path, "black_scholes")
    check = {c.name: c for c in report.checks}["oracle_error"]
    assert check.passed and check.value <= 0.005
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["manifest"]["summary.json"] == hashlib.sha256((tmp_path / "summary.json").read_bytes()).hexdigest()


def test_seed_changes_monte_carlo_outputs(tmp_path):
    text = bundled("mkv_free_diffusion.json")
    cfg = validate_config(text)
    a = runner.run_scenario(cfg, tmp_path / "a", "x")
    b = runner.run_scenario(validate_config(text.replace('"seed": 2', '"seed": 5')), tmp_path / "b", "x")
    assert a.manifest["flow_quantiles.csv"] != b.manifest["flow_quantiles.csv"]


def test_cli_run_and_exit_codes(tmp_path, capsys, monkeypatch):
    assert cli.main(["run", "--config", "cournot.json", "--out", str(tmp_path / "c")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and "summary.json" in report["manifest"]

    bad = tmp_path / "bad.json"
    bad.write_text('{"meeting": {"A": -1}}')
    assert cli.main(["validate", "--config", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and err["violations"][0]["path"] == "meeting.A"

    degenerate = tmp_path / "degenerate.json"
    degenerate.write_text('{"meeting": {"mode": "direct"}}')
    assert cli.main(["run", "--config", str(degenerate), "--out", str(tmp_path / "d")]) == 4
    assert json.loads(capsys.readouterr().err)["error"] == "DegenerateEquilibrium"

    stalled = tmp_path / "stalled.json"
    stalled.write_text('{"mkv": {"tol": 1e-15, "max_iter": 1, "M": 100, "N": [10]}}')
    assert cli.main(["run", "--config", str(stalled), "--out", str(tmp_path / "s")]) == 3
    assert len(json.loads(capsys.readouterr().err)["residual_history"]) == 1

    def boom(cfg, workers):
        raise RuntimeError("unexpected")

    monkeypatch.setitem(runner.RUNNERS, "games", boom)
    assert cli.main(["run", "--config", "cournot.json", "--out", str(tmp_path / "e")]) == 5
    assert json.loads(capsys.readouterr().err)["error"] == "RuntimeError"


def test_failed_check_gives_nonzero_exit(tmp_path, capsys):
    cfg = tmp_path / "tight.json"
    doc = json.loads(bundled("black_scholes.json"))
    doc["fbsde"].update(nt=20, nx=21)
    doc["tolerances"] = {"oracle_rel_error": 1e-6}
    cfg.write_text(json.dumps(doc))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert not json.loads(capsys.readouterr().out)["passed"]


def test_default_out_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(runner.OUT_DIR_ENV, str(tmp_path))
    assert cli.main(["run", "--config", "prisoners_dilemma.json", "--seed", "4"]) == 0
    summary = json.loads((tmp_path / "prisoners_dilemma" / "summary.json").read_text())
    assert summary["seed"] == 4 and summary["pure_nash"] == [["accuse", "accuse"]]


def test_examples_and_missing_file(capsys):
    assert cli.main(["examples"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 8 and lines[0].split("\t")[0] == "aiyagari_long_horizon.json"
    assert cli.main(["validate", "--config", "/nonexistent/x.json"]) == 2
