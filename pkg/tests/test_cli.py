import json
from argparse import Namespace

import pytest

from ionphotonics import cli

NUMERIC_SETTINGS = {"seed", "samples", "sides", "points_per_axis"}


def run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    return cli.main([*argv, "--out", str(out)]), out


def untagged(o, key=""):
    if isinstance(o, dict):
        if {"value", "unit", "provenance"} <= set(o):
            assert o["provenance"] in ("computed", "published", "assumed")
            return
        for k, v in o.items():
            yield from untagged(v, k)
    elif isinstance(o, list):
        for v in o:
            yield from untagged(v, key)
    elif isinstance(o, (int, float)) and not isinstance(o, bool) and key not in NUMERIC_SETTINGS:
        yield key


@pytest.mark.parametrize("argv", [["budget"], ["micromotion"], ["clip", "--samples", "200000"],
                                  ["thermometry", "--seed", "4"]])
def test_deterministic_reports(tmp_path, argv):
    c1, a = run(tmp_path, *argv, sub="a")
    c2, b = run(tmp_path, *argv, sub="b")
    assert c1 == c2 == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


@pytest.mark.parametrize("argv", [["budget"], ["micromotion"], ["trap"], ["trace"],
                                  ["clip", "--samples", "100000"], ["thermometry"]])
def test_reports_are_tagged(tmp_path, argv):
    code, out = run(tmp_path, *argv)
    assert code == 0
    reports = list(out.glob("*.json"))
    assert reports
    for r in reports:
        body = json.loads(r.read_text())
        assert body["tool"] == "ionphotonics" and "seed" in body
        assert list(untagged(body)) == [], r.name
    for c in out.glob("*.csv"):
        assert c.read_text().startswith("# seed=")


def test_seed_changes_monte_carlo(tmp_path):
    run(tmp_path, "clip", "--samples", "100000", "--seed", "1", sub="a")
    run(tmp_path, "clip", "--samples", "100000", "--seed", "2", sub="b")
    assert (tmp_path / "a" / "clip.csv").read_text() != (tmp_path / "b" / "clip.csv").read_text()


def test_missing_config(tmp_path, capsys):
    code, _ = run(tmp_path, "budget", "--config", str(tmp_path / "nope.toml"))
    assert code == 2
    assert "nope.toml" in capsys.readouterr().err


def test_bad_config_value(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('[clipping]\nna = "abc"\n')
    code, _ = run(tmp_path, "clip", "--samples", "1000", "--config", str(cfg))
    assert code == 2


def test_config_override(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[clipping]\nna = "0.5"\n')
    code, out = run(tmp_path, "clip", "--samples", "100000", "--config", str(cfg))
    assert code == 0
    assert json.loads((out / "clip.json").read_text())["na"]["value"] == 0.5


def test_no_writes_outside_out(tmp_path):
    r = cli.Run(Namespace(config=None, seed=None, tolerance_scale=None, out=str(tmp_path / "o")))
    with pytest.raises(ValueError):
        r.path("../escape.json")
    with pytest.raises(ValueError):
        r.path(str(tmp_path / "elsewhere.json"))
    run(tmp_path, "budget", sub="o")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["o"]


def test_reproduce_subset(tmp_path, capsys):
    code, out = run(tmp_path, "reproduce-paper", "--only", "1", "2", "6", "7", "8", "9", "10")
    assert code == 0
    text = capsys.readouterr().out
    assert text.count("[PASS]") == 7
    assert (out / "acceptance.json").exists()


def test_plot_descriptions(tmp_path):
    code, out = run(tmp_path, "micromotion", "--points", "21")
    assert code == 0
    plots = json.loads((out / "plots.json").read_text())["plots"]
    assert [p["csv"] for p in plots] == ["sideband_spectrum.csv"]
    header = (out / "sideband_spectrum.csv").read_text().splitlines()[1].split(",")
    assert plots[0]["x"] in header and set(plots[0]["y"]) <= set(header)


def test_thermometry_spectators_from_config(tmp_path):
    cfg = tmp_path / "spectators.toml"
    cfg.write_text('[thermometry]\nspectator_eta = ["0.05"]\nspectator_nbar = ["10"]\n')
    code, out = run(tmp_path, "thermometry", "--config", str(cfg), "--noise", "0")
    assert code == 0
    rep = json.loads((out / "thermometry.json").read_text())
    assert rep["spectator_modes"][0]["eta"]["value"] == 0.05
    assert rep["heating_rate"]["value"] == pytest.approx(285.0, rel=1e-3)
    cfg.write_text('[thermometry]\nspectator_eta = ["0.05"]\nspectator_nbar = []\n')
    assert run(tmp_path, "thermometry", "--config", str(cfg), sub="bad")[0] == 2
