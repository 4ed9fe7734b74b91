import csv
import json
import math

import pytest

from cribsim import cli, runner
from cribsim.errors import NumericalFailure
from cribsim.scenario import packaged_scenarios


def _write(tmp_path, text, name="sc.yaml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_forward_crib_efficiency(tmp_path):
    assert cli.main(["--scenario", "crib_forward_aL2", "--out-dir", str(tmp_path), "--quiet"]) == 0
    out = tmp_path / "crib_forward_aL2"
    s = json.loads((out / "summary.json").read_text())
    assert s["efficiency"] == pytest.approx(0.54, abs=0.011)
    assert s["oracle_rms"] <= 1e-2
    m = json.loads((out / "manifest.json").read_text())
    assert set(m) >= {"inputs", "grid", "versions", "outputs", "order_independent"}
    assert set(m["outputs"]) >= {"summary.json", "input.csv", "recalled.csv", "transmitted.csv"}
    with open(out / "recalled.csv", newline="") as fh:
        assert fh.readline() == "t,re,im,abs2\n"


def test_unknown_key_is_named(tmp_path, capsys):
    p = _write(tmp_path, "name: x\nkind: crib\ncrib:\n  resonant_dept: 2.0\n")
    assert cli.main(["--scenario", str(p), "--out-dir", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "crib.resonant_dept" in err and "unknown key" in err
    assert not (tmp_path / "o" / "x").exists()


def test_violated_precondition_is_named(tmp_path, capsys):
    p = _write(tmp_path, "name: x\nkind: crib\ncrib:\n  resonant_depth: -1.0\n")
    assert cli.main(["--scenario", str(p), "--out-dir", str(tmp_path)]) == 2
    assert "crib.resonant_depth" in capsys.readouterr().err


def test_malformed_yaml(tmp_path, capsys):
    p = _write(tmp_path, "name: x\nkind: [crib\n")
    assert cli.main(["--scenario", str(p), "--out-dir", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_kind_block_mismatch(tmp_path):
    p = _write(tmp_path, "name: x\nkind: echo\ncrib: {}\n")
    assert cli.main(["--scenario", str(p), "--out-dir", str(tmp_path)]) == 2


def test_backward_depth_sweep_table(tmp_path):
    assert cli.main(["--scenario", "crib_backward_sweep", "--out-dir", str(tmp_path), "--quiet"]) == 0
    rows = _rows(tmp_path / "crib_backward_sweep" / "sweep.csv")
    assert [float(r["crib.resonant_depth"]) for r in rows] == [0.5, 1.0, 2.0, 4.0]
    for r in rows:
        d = float(r["crib.resonant_depth"])
        assert float(r["efficiency_formula"]) == pytest.approx((1 - math.exp(-d)) ** 2, rel=1e-11)
        assert float(r["abs_diff"]) <= 0.02
        assert float(r["abs_diff"]) == pytest.approx(
            abs(float(r["efficiency_sim"]) - float(r["efficiency_formula"])), abs=1e-11)


def test_min_efficiency_sweep_is_exact(tmp_path):
    assert cli.main(["--scenario", "min_efficiency_sweep", "--out-dir", str(tmp_path), "--quiet"]) == 0
    rows = _rows(tmp_path / "min_efficiency_sweep" / "sweep.csv")
    assert len(rows) == 5
    for r in rows:
        l0 = float(r["repeater.channel.segment_length_km"])
        assert r["min_efficiency"] == f"{10 ** (-0.2 * l0 / 20):.12g}"


def test_dual_fringe_sweep_visibility_constant(tmp_path):
    assert cli.main(["--scenario", "dual_fringe_sweep", "--out-dir", str(tmp_path), "--quiet"]) == 0
    rows = _rows(tmp_path / "dual_fringe_sweep" / "sweep.csv")
    v = [float(r["visibility"]) for r in rows]
    assert (max(v) - min(v)) / (sum(v) / len(v)) <= 0.01
    assert v[0] == pytest.approx(0.915, abs=1e-3)


def test_grid_doubling_sweep(tmp_path):
    assert cli.main(["--scenario", "oracle_convergence", "--out-dir", str(tmp_path), "--quiet"]) == 0
    rows = _rows(tmp_path / "oracle_convergence" / "sweep.csv")
    rms = [float(r["oracle_rms"]) for r in rows]
    assert rms[1] <= 0.5 * rms[0]


def test_non_numeric_sweep_axis(tmp_path, capsys):
    p = _write(tmp_path, """name: s
kind: sweep
sweep:
  parameter: crib.recall_direction
  values: [1.0]
  base: {name: b, kind: crib, crib: {}}
""")
    assert cli.main(["--scenario", str(p), "--out-dir", str(tmp_path)]) == 2
    assert "recall_direction" in capsys.readouterr().err


def test_runs_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["--scenario", "repeater_single", "--out-dir", str(tmp_path / d),
                         "--quiet"]) == 0
    a, b = tmp_path / "a" / "repeater_single", tmp_path / "b" / "repeater_single"
    for f in ("summary.json", "histogram.csv", "scenario.resolved.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"]


def test_seed_override(tmp_path):
    cli.main(["--scenario", "repeater_single", "--out-dir", str(tmp_path / "a"), "--quiet"])
    cli.main(["--scenario", "repeater_single", "--out-dir", str(tmp_path / "b"), "--seed", "77",
              "--quiet"])
    sa = json.loads((tmp_path / "a" / "repeater_single" / "summary.json").read_text())
    sb = json.loads((tmp_path / "b" / "repeater_single" / "summary.json").read_text())
    assert sb["seed"] == 77 and sa["seed"] != 77
    assert sa["monte_carlo"]["mean_time"] != sb["monte_carlo"]["mean_time"]


def test_json_is_stable_and_finite_floats_are_rounded(tmp_path):
    cli.main(["--scenario", "repeater_single", "--out-dir", str(tmp_path), "--quiet"])
    text = (tmp_path / "repeater_single" / "summary.json").read_text()
    data = json.loads(text)
    assert list(data) == sorted(data)
    assert "NaN" not in text and "Infinity" not in text


def test_partial_outputs_removed(tmp_path, capsys):
    # the second point exceeds the detuning-grid recurrence time and fails mid-sweep
    p = _write(tmp_path, """name: broken
kind: sweep
sweep:
  parameter: crib.switch_time_us
  values: [18.0, 200.0]
  base: {name: b, kind: crib, crib: {n_bins: 100, nz: 20}}
""")
    out = tmp_path / "out"
    assert cli.main(["--scenario", str(p), "--out-dir", str(out)]) == 2
    assert "recurrence" in capsys.readouterr().err
    assert not (out / "broken").exists()
    if out.exists():
        assert list(out.iterdir()) == []


def test_failed_rerun_keeps_previous_results(tmp_path, monkeypatch):
    out = tmp_path / "out"
    assert cli.main(["--scenario", "repeater_single", "--out-dir", str(out), "--quiet"]) == 0
    before = (out / "repeater_single" / "summary.json").read_bytes()

    def boom(*a, **k):
        raise NumericalFailure("forced", {"dt": 0.1})

    monkeypatch.setattr(runner, "run_repeater_kind", boom)
    monkeypatch.setitem(runner.RUNNERS, "repeater", boom)
    assert cli.main(["--scenario", "repeater_single", "--out-dir", str(out)]) == 3
    assert (out / "repeater_single" / "summary.json").read_bytes() == before
    assert sorted(p.name for p in out.iterdir()) == ["repeater_single"]


def test_bad_grid_scale(tmp_path):
    assert cli.main(["--scenario", "repeater_single", "--out-dir", str(tmp_path),
                     "--grid-scale", "0"]) == 2


def test_list(capsys):
    assert cli.main(["--list"]) == 0
    names = capsys.readouterr().out.split()
    assert names == packaged_scenarios()
    assert "crib_forward_aL2" in names and len(names) >= 10


@pytest.mark.parametrize("name", [n for n in packaged_scenarios()
                                  if n in ("echo_two_pulse", "echo_stimulated", "fringe_scan",
                                           "timebin_random", "repeater_chain")])
def test_packaged_scenarios_run(tmp_path, name):
    assert cli.main(["--scenario", name, "--out-dir", str(tmp_path), "--quiet"]) == 0
    assert (tmp_path / name / "summary.json").exists()


def test_accept_subset(tmp_path, capsys):
    assert cli.main(["--accept", "--only", "9,10", "--out-dir", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and all(line.startswith("[PASS]") for line in lines)
    report = json.loads((tmp_path / "acceptance.json").read_text())
    assert [r["id"] for r in report] == [9, 10]


def test_accept_failure_exit_code(tmp_path, monkeypatch):
    from cribsim import acceptance
    monkeypatch.setitem(acceptance.CRITERIA, 9, ("forced failure", lambda: (False, {})))
    assert cli.main(["--accept", "--only", "9", "--out-dir", str(tmp_path), "--quiet"]) == 4
