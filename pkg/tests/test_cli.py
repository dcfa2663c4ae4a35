import csv

import pytest

from asutrain.agemodel import ModelSpec, init_model, save_checkpoint
from asutrain.cli import main
from asutrain.config import ConfigError, parse_config
from asutrain.filters import FilterKind

CONFIG = """\
n_workers = 2
filter = "ASU"
delta = 0.01
lr = 0.3
batch_size = 8
max_iterations = 20
eval_every = 5
seed = 1

[spec]
input_dim = 6
hidden_dims = [8]
c = 20
seed = 2

[data]
n_samples = 300
min_age = 1
max_age = 20
seed = 3

[experiment]
filters = ["RAW", "DSU", "ASU"]
compute_seconds = 0.5

[experiment.delta_overrides]
DSU = 0.02

[[experiment.links]]
name = "1Gbps"
bandwidth = 1e9

[[experiment.links]]
name = "10Gbps"
bandwidth = 1e10
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text(CONFIG)
    return p


def test_parse_config():
    cfg = parse_config(CONFIG)
    assert cfg.train.n_workers == 2 and cfg.train.spec == ModelSpec(6, (8,), 20, 2)
    assert cfg.filters == [FilterKind.RAW, FilterKind.DSU, FilterKind.ASU]
    assert cfg.delta_for(FilterKind.DSU) == 0.02 and cfg.delta_for(FilterKind.ASU) == 0.01
    assert [nl.name for nl in cfg.links] == ["1Gbps", "10Gbps"]
    assert cfg.data.classes.c == 20


def test_config_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config(CONFIG.replace("delta = 0.01", "delta = = 0.01"))
    with pytest.raises(ConfigError, match="line 2.*filter"):
        parse_config(CONFIG.replace('filter = "ASU"', 'filter = "XYZ"'))
    with pytest.raises(ConfigError, match="line 1.*n_workers"):
        parse_config(CONFIG.replace("n_workers = 2", "n_workers = 0"))
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("bogus = 1\n" + CONFIG)
    with pytest.raises(ConfigError, match="spec.c"):
        parse_config(CONFIG.replace("c = 20", "c = 21"))


def test_dry_run(config_file, capsys, tmp_path):
    assert main(["train", "--config", str(config_file), "--dry-run",
                 "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "n_workers = 2" in out and "experiment.filters" in out
    assert not (tmp_path / "o").exists()


def test_train_writes_artifacts_deterministically(config_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", str(config_file), "--out", str(a)]) == 0
    assert main(["train", "--config", str(config_file), "--out", str(b), "--inline"]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(
        ["comparison.csv", "speedup.csv"]
        + [f"log_{k}.csv" for k in ("RAW", "DSU", "ASU")]
        + [f"model_{k}.ckpt" for k in ("RAW", "DSU", "ASU")]
        + [f"timing_{k}_{l}.csv" for k in ("RAW", "DSU", "ASU") for l in ("1Gbps", "10Gbps")])
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    text = (a / "comparison.csv").read_text()
    assert "# data.seed = 3" in text and "# experiment.delta_overrides.DSU = 0.02" in text
    rows = list(csv.DictReader(ln for ln in text.splitlines() if not ln.startswith("#")))
    assert len(rows) == 3 * 20
    speed = [r for r in csv.reader((a / "speedup.csv").read_text().splitlines())
             if r and not r[0].startswith("#")]
    assert speed[0][-1] == "speedup_vs_RAW"
    raw_1g = next(r for r in speed if r[:2] == ["1Gbps", "RAW"])
    assert float(raw_1g[-1]) == 1.0


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("n_workers = [\n")
    assert main(["train", "--config", str(bad)]) == 1
    assert main(["train", "--config", str(tmp_path / "missing.toml")]) == 3


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_code(tmp_path):
    cfg = tmp_path / "div.toml"
    cfg.write_text(CONFIG.replace("lr = 0.3", "lr = 1e305").replace(
        'filters = ["RAW", "DSU", "ASU"]', 'filters = ["RAW"]'))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_generate_eval_simulate(tmp_path, config_file):
    d = tmp_path / "data"
    assert main(["generate-data", "--config", str(config_file), "--out", str(d),
                 "--stream", "50"]) == 0
    assert {p.name for p in d.iterdir()} == {"train.csv", "test.csv", "records.csv"}

    run = tmp_path / "run"
    assert main(["train", "--config", str(config_file), "--out", str(run)]) == 0
    report = tmp_path / "report.csv"
    assert main(["eval", "--model", str(run / "model_ASU.ckpt"), "--data", str(d / "test.csv"),
                 "--out", str(report)]) == 0
    text = report.read_text()
    assert "n,mae" in text and "gap,accuracy" in text and "bin_low,bin_high,count" in text

    timing = tmp_path / "timing.csv"
    assert main(["simulate-comm", "--log", str(run / "log_RAW.csv"), "--bandwidth", "1e9",
                 "--compute-seconds", "0.5", "--out", str(timing)]) == 0
    rows = list(csv.DictReader(timing.read_text().splitlines()))
    assert len(rows) == 20 and list(rows[0]) == ["iteration", "compute_s", "push_s", "pull_s",
                                                 "total_s"]
    P = ModelSpec(6, (8,), 20).num_params
    assert float(rows[0]["push_s"]) == pytest.approx(8 * 4 * P / 1e9)

    out = tmp_path / "demo"
    assert main(["demographics", "--model", str(run / "model_ASU.ckpt"), "--input",
                 str(d / "records.csv"), "--interval-seconds", "1", "--group-width", "5",
                 "--out", str(out)]) == 0
    hist = (out / "histogram.csv").read_text().splitlines()
    assert hist[0] == "group_low,group_high,count" and hist[-1] == "total,,50"


def test_demographics_missing_input(tmp_path):
    spec = ModelSpec(4, (), 10)
    save_checkpoint(tmp_path / "m.ckpt", init_model(spec), spec)
    assert main(["demographics", "--model", str(tmp_path / "m.ckpt"), "--input",
                 str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]) == 3
