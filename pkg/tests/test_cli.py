import csv
import json

import pytest

from contactlo.cli.config import ConfigError, parse_config, parse_dict
from contactlo.cli.main import main
from contactlo.cli.plots import emit_plot


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_kernel_config_fills_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, "k.toml", 'experiment = "kernel"\n'))
    assert cfg.block["t"] == 1.0 and cfg.block["method"] == "shoot"
    assert cfg.grid.N == 128 and cfg.lam == 0.5
    assert parse_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_unknown_key_suggests_nearest(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, "k.toml", 'experiment = "kernel"\n[model]\nlamda = 0.5\n'))
    assert "'lamda'" in str(err.value) and "'lambda'" in str(err.value)


def test_all_violations_reported_together():
    with pytest.raises(ConfigError) as err:
        parse_dict({"experiment": "entropy-lower", "model": {"lambda": 0.0}, "grid": {"N": 1}, "colour": 1})
    assert len(err.value.violations) == 3


@pytest.mark.parametrize(
    "raw",
    [
        {"experiment": "entropy-lower", "model": {"lambda": 0}},
        {"experiment": "cover"},
        {"experiment": "nope"},
        {"experiment": "audit", "seed": 1, "audit": {"eps_min": 0.5, "eps_max": 0.1}},
        {"experiment": "entropy-lower", "model": {"preset": "nonlinear_u", "lambda": 0.1, "amp": 0.2}},
    ],
)
def test_rejected_configs(raw):
    with pytest.raises(ConfigError):
        parse_dict(raw)


def test_emit_plot(tmp_path):
    emit_plot({"a": ([1, 2], [3, 5])}, 0.5, tmp_path / "one.svg")
    series = {f"eps={e}": ([2, 3, 4, 5], [2, 3, 5, 8]) for e in (0.2, 0.1, 0.05, 0.025)}
    emit_plot(series, 0.5, tmp_path / "four.svg")
    text = (tmp_path / "four.svg").read_text()
    assert text.startswith("<?xml") and "<path" in text
    for bad in ({}, {"z": ([1, 2], [0, 3])}, {"r": ([1, 2, 3], [1, 2])}):
        with pytest.raises(ValueError):
            emit_plot(bad, 0.5, tmp_path / "bad.svg")


def test_plot_bytes_are_reproducible(tmp_path):
    s = {"a": ([2, 3, 4, 5], [2, 3, 5, 8])}
    emit_plot(s, 0.5, tmp_path / "a.svg")
    emit_plot(s, 0.5, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_kernel_subcommand(tmp_path, capsys):
    out = tmp_path / "k"
    code = main(["kernel", "--out", str(out), "--lambda", "1", "--t", "1", "--delta", "0.2", "--method", "closed", "--csv", str(tmp_path / "v.csv")])
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "v.csv").read_text().splitlines()))
    assert float(rows[0]["value"]) == pytest.approx(0.031639, abs=1e-6)
    meta = json.loads((out / "kernel_table.json").read_text())
    assert set(meta) >= {"t", "lambda", "K0"}
    assert json.loads(capsys.readouterr().out)["status"] == "ok"


def test_evolve_subcommand(tmp_path):
    out = tmp_path / "e"
    assert main(["evolve", "--out", str(out), "--phi", "constant", "--t", "2", "--tau", "1", "--quiet"]) == 0
    frames = sorted(p.name for p in out.glob("frame_*.csv"))
    assert len(frames) == 2
    last = (out / frames[-1]).read_text().splitlines()[1].split(",")[1]
    assert float(last) == pytest.approx(0.2 * 2.718281828459045, rel=1e-12)


def test_exit_codes(tmp_path):
    assert main(["kernel", "--out", str(tmp_path / "a"), "--config", str(tmp_path / "missing.toml"), "--quiet"]) == 2
    assert json.loads((tmp_path / "a" / "error.json").read_text())["kind"] == "config"
    assert main(["entropy-lower", "--out", str(tmp_path / "b"), "--lambda", "0", "--quiet"]) == 2
    cfg = write(tmp_path, "c.toml", 'experiment = "evolve"\n')
    assert main(["kernel", "--config", str(cfg), "--out", str(tmp_path / "c"), "--quiet"]) == 2
    assert main(["kernel", "--out", str(tmp_path / "d"), "--model", "quartic_discounted", "--method", "closed", "--quiet"]) == 2


SMALL = {
    "audit": 'experiment = "audit"\nseed = 7\n[grid]\nN = 32\n[audit]\nconfigs = 3\nmembers = 6\nk_max = 3\n',
    "cover": 'experiment = "cover"\nseed = 7\n[grid]\nN = 64\n[cover]\nn = [2]\nmembers = 3\n',
    "validate": 'experiment = "validate"\nseed = 7\n[grid]\nN = 32\n[validate]\nsamples = 32\n',
    "entropy-upper": 'experiment = "entropy-upper"\n[grid]\nN = 32\n[entropy-upper]\neps = 0.2\n',
    "bench": 'experiment = "bench"\n[bench]\nsizes = [64, 128]\nrepeats = 1\n',
    "entropy-lower": 'experiment = "entropy-lower"\n[grid]\nN = 32\n[entropy-lower]\neps = [0.2]\nt = [1, 2, 3, 4]\n',
}


@pytest.mark.parametrize("name", sorted(SMALL))
def test_experiments_run_and_are_deterministic(tmp_path, name):
    cfg = write(tmp_path, "c.toml", SMALL[name])
    sums = []
    for run in ("r1", "r2"):
        out = tmp_path / run
        assert main([name, "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
        sums.append(json.loads((out / "manifest.json").read_text())["checksums"])
    assert sums[0]
    if name != "bench":  # wall-clock timings are not reproducible
        assert sums[0] == sums[1]


def test_validate_table_all_pass(tmp_path):
    cfg = write(tmp_path, "c.toml", SMALL["validate"])
    main(["validate", "--config", str(cfg), "--out", str(tmp_path / "v"), "--quiet"])
    rows = list(csv.DictReader((tmp_path / "v" / "validate.csv").read_text().splitlines()))
    assert rows and all(r["passed"] == "true" for r in rows)
