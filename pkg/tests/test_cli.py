import json
import re
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from itersig.cli import run
from itersig.plot import emit_plot

RAD = {"kind": "iid_rademacher", "dim": 1}


def _write(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj))
    return path


def _manifest(out: Path) -> dict:
    return json.loads((out / "manifest.json").read_text())


@pytest.fixture(scope="module")
def oracle_runs(tmp_path_factory):
    """The binomial-oracle instance through rate, probe and report."""
    d = tmp_path_factory.mktemp("oracle")
    rate_cfg = _write(d / "rate.json", {"model": RAD, "level": 1, "T": 1.0, "target": [0.5], "grid": 4,
                                         "multistart": 4, "delta": 0.05, "seed": 0})
    probe_cfg = _write(d / "probe.json", {"model": RAD, "level": 1, "T": 1.0, "target": [0.5], "delta": 0.05,
                                           "n_list": [50, 100, 200], "trials": 20000, "grid": 4, "seed": 1})
    codes = {
        "rate": run(["rate", "--config", str(rate_cfg), "--out", str(d / "r")]),
        "probe": run(["probe", "--config", str(probe_cfg), "--out", str(d / "p"), "--method", "tilted"]),
    }
    codes["report"] = run(["report", "--probe", str(d / "p" / "probe.json"), "--rate", str(d / "r" / "rate.json"),
                           "--out", str(d / "rep")])
    return d, codes


def test_report_verdict_consistent(oracle_runs):
    d, codes = oracle_runs
    assert codes == {"rate": 0, "probe": 0, "report": 0}
    rep = json.loads((d / "rep" / "report.json").read_text())["comparison"]
    assert rep["verdict"] == "consistent"
    rate = json.loads((d / "r" / "rate.json").read_text())
    assert rate["envelope"]["lower"] == rep["rate_lower_envelope"]


def test_plot_annotation_matches_report(oracle_runs):
    d, _ = oracle_runs
    rep = json.loads((d / "rep" / "report.json").read_text())["comparison"]
    svg = (d / "rep" / "report.svg").read_text()
    m = re.search(r"fitted slope = ([0-9.eE+-]+)", svg)
    assert m and float(m.group(1)) == pytest.approx(rep["fitted_slope"], rel=1e-5)


def test_manifest_contents(oracle_runs):
    d, _ = oracle_runs
    man = _manifest(d / "p")
    assert man["command"] == "probe" and man["seed"] == 1 and man["exit_code"] == 0
    assert set(man["outputs"]) == {"probe.json", "probe.csv"}
    assert man["config"]["method"] == "tilted"
    for key in ("version", "started", "finished", "argv"):
        assert key in man


def test_replay_every_subcommand(tmp_path, oracle_runs):
    d, _ = oracle_runs
    gen_cfg = _write(tmp_path / "gen.json", {"model": {"kind": "markov", "dim": 1, "params": {
        "transition": [[0.9, 0.1], [0.2, 0.8]], "observations": [[1], [-1]]}}, "n": 64, "seed": 3})
    assert run(["gen", "--config", str(gen_cfg), "--out", str(tmp_path / "g")]) == 0
    seq = tmp_path / "g" / "sequence.csv"
    assert run(["sig", "--input", str(seq), "--level", "3", "--n", "8", "--method", "stream",
                "--out", str(tmp_path / "s")]) == 0
    chk = _write(tmp_path / "chk.json", {"level": 2, "dim": 2, "T": 1.0, "trials": 20, "seed": 4})
    assert run(["check", "--suite", "regularity", "--config", str(chk), "--out", str(tmp_path / "c")]) == 0
    runs = [tmp_path / "g", tmp_path / "s", tmp_path / "c", d / "r", d / "p", d / "rep"]
    for i, src in enumerate(runs):
        out = tmp_path / f"replay{i}"
        assert run(["replay", str(src / "manifest.json"), "--out", str(out)]) == 0, src
        assert _manifest(out)["outputs"] == _manifest(src)["outputs"]


def test_replay_detects_tampering(tmp_path):
    cfg = _write(tmp_path / "gen.json", {"model": RAD, "n": 10, "seed": 1})
    run(["gen", "--config", str(cfg), "--out", str(tmp_path / "a")])
    man = _manifest(tmp_path / "a")
    man["outputs"]["sequence.csv"] = "0" * 64
    _write(tmp_path / "a" / "manifest.json", man)
    assert run(["replay", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 5


def test_inputs_not_mutated(tmp_path, oracle_runs):
    d, _ = oracle_runs
    cfg = _write(tmp_path / "rate.json", {"model": RAD, "level": 1, "T": 1.0, "target": [0.3], "seed": 0,
                                          "multistart": 2, "grid": 4})
    before = cfg.read_bytes()
    probe_before = (d / "p" / "probe.json").read_bytes()
    run(["rate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--grid", "2"])
    run(["report", "--probe", str(d / "p" / "probe.json"), "--rate", str(d / "r" / "rate.json"),
         "--out", str(tmp_path / "rep2")])
    assert cfg.read_bytes() == before
    assert (d / "p" / "probe.json").read_bytes() == probe_before


def test_check_lln_constant_sequence(tmp_path):
    cfg = _write(tmp_path / "lln.json", {"model": {"kind": "iid_discrete", "dim": 1,
                                                   "params": {"points": [[0.5]], "probs": [1.0]}},
                                         "level": 2, "T": 1.0, "n_list": [10, 100], "reps": 2, "seed": 0})
    assert run(["check", "--suite", "lln", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "lln.json").read_text())
    assert max(rep["max_error"]) <= 1e-12
    assert (tmp_path / "o" / "lln.svg").exists() and (tmp_path / "o" / "lln.csv").exists()


def test_check_holder(tmp_path):
    cfg = _write(tmp_path / "h.json", {"level": 2, "dim": 2, "T": 1.0, "eps2_list": [1e-2, 1e-3],
                                       "trials": 3, "seed": 0})
    assert run(["check", "--suite", "holder", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "holder.json").read_text())["trials"] == 6


def test_infeasible_rate_is_config_error(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.json", {"model": RAD, "level": 2, "T": 1.0, "target": [0.6], "seed": 0})
    assert run(["rate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "infeasible" in capsys.readouterr().err


def test_missing_seed_is_config_error(tmp_path):
    cfg = _write(tmp_path / "c.json", {"model": RAD, "n": 5})
    assert run(["gen", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_bad_config_and_argv(tmp_path):
    (tmp_path / "broken.json").write_text("{not json")
    assert run(["gen", "--config", str(tmp_path / "broken.json"), "--out", str(tmp_path / "o")]) == 2
    assert run(["frobnicate"]) == 2
    bad_model = _write(tmp_path / "m.json", {"model": {"kind": "iid_discrete", "dim": 1,
                                                       "params": {"points": [[2.0]], "probs": [1.0]}},
                                             "n": 5, "seed": 0})
    assert run(["gen", "--config", str(bad_model), "--out", str(tmp_path / "o2")]) == 2


def test_nonconverged_rate_exit_code(tmp_path):
    cfg = _write(tmp_path / "r.json", {"model": {"kind": "iid_uniform", "dim": 1}, "level": 2, "T": 1.0,
                                       "target": [0.45], "seed": 0, "max_outer": 1, "multistart": 1, "grid": 4})
    code = run(["rate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    sol = json.loads((tmp_path / "o" / "rate.json").read_text())["solution"]
    assert code == (0 if sol["converged"] else 3)


def test_unresolved_probe_exit_code(tmp_path):
    cfg = _write(tmp_path / "p.json", {"model": RAD, "level": 1, "T": 1.0, "target": [0.9], "delta": 0.01,
                                       "n_list": [200], "trials": 1000, "seed": 0})
    assert run(["probe", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4
    assert (tmp_path / "o" / "manifest.json").exists()


def test_sig_path_json_matches_line(tmp_path):
    path = {"knots": [0.0, 2.0], "values": [[0.0], [1.0]]}
    src = _write(tmp_path / "line.json", path)
    assert run(["sig", "--input", str(src), "--level", "3", "--out", str(tmp_path / "o")]) == 0
    stack = json.loads((tmp_path / "o" / "signature.json").read_text())["stack"]
    assert stack["levels"][3]["data"] == pytest.approx([1 / 6])
    assert run(["sig", "--input", str(src), "--level", "2", "--method", "direct", "--out", str(tmp_path / "x")]) == 2


def test_threads_env_does_not_change_outputs(tmp_path, monkeypatch):
    cfg = _write(tmp_path / "p.json", {"model": RAD, "level": 2, "T": 1.0, "target": [0.1], "delta": 0.05,
                                       "n_list": [20], "trials": 2000, "seed": 2})
    run(["probe", "--config", str(cfg), "--out", str(tmp_path / "a")])
    monkeypatch.setenv("ITERSIG_THREADS", "3")
    run(["probe", "--config", str(cfg), "--out", str(tmp_path / "b")])
    assert _manifest(tmp_path / "a")["outputs"] == _manifest(tmp_path / "b")["outputs"]


def test_console_script_entry_point(tmp_path):
    cfg = _write(tmp_path / "gen.json", {"model": RAD, "n": 4, "seed": 0})
    res = subprocess.run([sys.executable, "-m", "itersig.cli", "gen", "--config", str(cfg), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "level=INFO" in res.stderr


def test_plot_empty_series_axes_only(tmp_path):
    emit_plot([], tmp_path / "e.svg", title="empty")
    svg = (tmp_path / "e.svg").read_text()
    assert svg.startswith("<svg") or svg.startswith("<?xml")
    assert 'class="marker"' not in svg and 'class="fit"' not in svg


def test_plot_single_point_no_fit(tmp_path):
    emit_plot([{"x": [50], "y": [0.1], "label": "one"}], tmp_path / "s.svg")
    svg = (tmp_path / "s.svg").read_text()
    assert svg.count('class="marker"') == 1
    assert 'class="fit"' not in svg


def test_plot_byte_deterministic(tmp_path):
    series = [{"x": [10, 100, 1000], "y": [0.3, 0.1, 0.03], "label": "err"}]
    emit_plot(series, tmp_path / "a.svg", log_x=True, log_y=True, bands=[(0.05, 0.2, "band")])
    emit_plot(series, tmp_path / "b.svg", log_x=True, log_y=True, bands=[(0.05, 0.2, "band")])
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert (tmp_path / "a.svg").read_text().count('class="marker"') == 3


def test_plot_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_plot([], tmp_path / "missing" / "dir" / "x.svg")
