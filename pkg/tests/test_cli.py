import csv
import json
import time

import numpy as np
import pytest

from dominohd.cli import main
from dominohd.container import load_model, save_model
from dominohd.experiments import (
    ConfigError,
    ExperimentConfig,
    RunRecord,
    build_config,
    ordered_map,
    out_path,
    parse_config_text,
)

TINY = ["--dim", "64", "--effective-dim", "128", "--regen-rate", "0.25", "--synth-domains", "3",
        "--synth-per-domain", "40", "--synth-window", "12", "--synth-sensors", "4"]


def records(out):
    return [RunRecord.from_json(line) for line in (out / "records.jsonl").read_text().splitlines()]


def files_under(root):
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*"))


def test_train_tiny_roundtrip(tmp_path):
    out = tmp_path / "run"
    t0 = time.perf_counter()
    assert main(["train", *TINY, "--holdout", "3", "--out", str(out)]) == 0
    assert time.perf_counter() - t0 < 10
    rec = records(out)[0]
    assert rec.command == "train" and not rec.baseline
    assert len(rec.history) == 4
    assert set(rec.timings) == {"encode_s", "train_s", "generalize_s", "inference_s"}
    assert min(rec.timings.values()) >= 0
    assert rec.version["dominohd"]
    model = load_model(out / "model.domv")
    again = out / "again.domv"
    save_model(model, again)
    assert again.read_bytes() == (out / "model.domv").read_bytes()


def test_baseline_flag(tmp_path):
    assert main(["train", *TINY, "--effective-dim", "64", "--out", str(tmp_path)]) == 0
    assert records(tmp_path)[0].baseline


def test_rerun_is_byte_identical_modulo_timings(tmp_path, monkeypatch):
    # the output path is part of the config echo, so both runs use the same relative one
    lines, models = [], []
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        monkeypatch.chdir(tmp_path / name)
        assert main(["train", *TINY, "--seed", "3", "--holdout", "1", "--out", "o"]) == 0
        lines.append(records(tmp_path / name / "o")[0].to_json(timings=False))
        models.append((tmp_path / name / "o" / "model.domv").read_bytes())
    assert lines[0] == lines[1]
    assert models[0] == models[1]


def test_record_is_rerunnable_from_echo(tmp_path):
    assert main(["train", *TINY, "--holdout", "2", "--out", str(tmp_path)]) == 0
    rec = records(tmp_path)[0]
    cfg = build_config(cli_values=rec.config)
    assert cfg.echo() == rec.config


def test_config_precedence(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("# comment\ndim = 80\neffective-dim = 160\nregen_rate=0.5\n")
    file_vals = parse_config_text(f.read_text())
    cfg = build_config(file_vals, {"dim": 40})
    assert (cfg.dim, cfg.effective_dim, cfg.regen_rate, cfg.eta) == (40, 160, 0.5, 0.035)
    assert main(["train", "--config", str(f), *TINY[6:], "--dim", "32", "--effective-dim", "64",
                 "--out", str(tmp_path / "o")]) == 0
    rec = records(tmp_path / "o")[0]
    assert rec.config["dim"] == 32 and rec.config["regen_rate"] == 0.5


def test_config_errors_name_the_field():
    with pytest.raises(ConfigError, match="effective_dim"):
        build_config(cli_values={"dim": 100, "effective_dim": 50})
    with pytest.raises(ConfigError, match="regen_rates"):
        build_config(cli_values={"regen_rates": "0.2,1.5"})
    with pytest.raises(ConfigError, match="bogus"):
        build_config({"bogus": "1"})
    with pytest.raises(ConfigError, match="dim"):
        build_config(cli_values={"dim": "abc"})
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign here")


def test_exit_codes(tmp_path, capsys):
    assert main(["train", "--dim", "64", "--effective-dim", "32", "--out", str(tmp_path)]) == 2
    assert main(["train", "--regen-rate", "1.5", "--out", str(tmp_path)]) == 2
    assert main(["train", "--dataset", "dsads", "--root", str(tmp_path / "none"), "--out", str(tmp_path)]) == 3
    assert main(["eval", "--model", str(tmp_path / "missing.domv"), "--out", str(tmp_path)]) == 3
    assert main(["train", *TINY, "--holdout", "9", "--out", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2
    err = capsys.readouterr().err
    assert "config error" in err and "data error" in err


def test_never_writes_outside_out(tmp_path):
    out = tmp_path / "inside"
    assert main(["train", *TINY, "--out", str(out)]) == 0
    assert files_under(tmp_path) == ["inside", "inside/model.domv", "inside/records.jsonl"]
    with pytest.raises(ConfigError):
        out_path(ExperimentConfig(out=str(out)), "../escape.txt")


def test_eval_command(tmp_path):
    assert main(["train", *TINY, "--holdout", "3", "--out", str(tmp_path)]) == 0
    assert main(["eval", *TINY, "--holdout", "3", "--model", str(tmp_path / "model.domv"),
                 "--out", str(tmp_path)]) == 0
    train, ev = records(tmp_path)
    assert ev.command == "eval"
    assert abs(ev.report["overall_accuracy"] - train.report["overall_accuracy"]) < 0.05


def test_lodo_table(tmp_path):
    assert main(["lodo", *TINY, "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "lodo.csv").open()))
    body, mean = rows[:-1], rows[-1]
    assert [r["domain"] for r in body] == ["1", "2", "3"]
    assert float(mean["accuracy"]) == pytest.approx(np.mean([float(r["accuracy"]) for r in body]))
    assert float(mean["baseline_accuracy"]) == pytest.approx(np.mean([float(r["baseline_accuracy"]) for r in body]))
    recs = records(tmp_path)
    assert len(recs) == 6 and sum(r.baseline for r in recs) == 3


def test_sweep_grid(tmp_path):
    grid = ["--dims", "32,64", "--effective-dims", "128", "--regen-rates", "0.25,0.5"]
    assert main(["sweep", *TINY, *grid, "--holdout", "1", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert len(rows) == 4
    for r in rows:
        d, e, rate = int(r["dim"]), int(r["effective_dim"]), float(r["regen_rate"])
        assert int(r["iterations"]) == int((e - d) / (d * rate) + 1e-9)


def test_sweep_of_one_equals_train(tmp_path):
    assert main(["sweep", *TINY, "--dims", "64", "--effective-dims", "128", "--regen-rates", "0.25",
                 "--holdout", "2", "--out", str(tmp_path)]) == 0
    assert main(["train", *TINY, "--holdout", "2", "--out", str(tmp_path)]) == 0
    row = next(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert float(row["accuracy"]) == records(tmp_path)[0].report["overall_accuracy"]


def test_robustness_table(tmp_path):
    assert main(["robustness", *TINY, "--holdout", "1", "--bitwidth", "1,8", "--flip-rates", "0,0.05",
                 "--trials", "4", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "robustness.json").read_text())
    assert len(doc["rows"]) == 4
    for r in doc["rows"]:
        assert r["mean_loss"] == float(np.mean(r["losses"]))
        if r["flip_rate"] == 0.0:
            assert r["mean_loss"] == 0.0
    assert len(list(csv.DictReader((tmp_path / "robustness.csv").open()))) == 4


def test_bench_report(tmp_path):
    assert main(["bench", *TINY, "--holdout", "1", "--effective-dim", "2048", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "bench.json").read_text())
    rows = doc["rows"]
    assert [r["fraction"] for r in rows] == [0.25, 0.5, 0.75, 1.0]
    assert [r["n_train"] for r in rows] == sorted(r["n_train"] for r in rows)
    assert rows[-1]["encode_s"] >= rows[0]["encode_s"]
    assert doc["scoring"]["score_s_physical"] < doc["scoring"]["score_s_effective"]
    assert doc["config"]["dim"] == 64


def test_synth_then_train_from_file(tmp_path):
    assert main(["synth", *TINY, "--out", str(tmp_path)]) == 0
    f = tmp_path / "synthetic.domd"
    assert main(["train", "--dataset", str(f), "--dim", "64", "--effective-dim", "128", "--holdout", "1",
                 "--out", str(tmp_path / "t")]) == 0


def test_ordered_map_keeps_job_order():
    def slow_first(i):
        time.sleep(0.02 * (5 - i))
        return i * i
    assert ordered_map(slow_first, range(5), workers=4) == [0, 1, 4, 9, 16]
