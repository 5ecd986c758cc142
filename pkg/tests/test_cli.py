import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from tornadocast import dataio
from tornadocast.cli import main, read_config_file
from tornadocast.exceptions import DataError
from tornadocast.synth import SynthConfig, generate

FAST = ["--hidden", "6", "--epochs", "4", "--batch-size", "32", "--lr", "0.005"]


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "samples.csv"
    assert main(["synth", str(path), "--n", "300", "--features", "4", "--rate", "0.2", "--seed", "5"]) == 0
    return path


@pytest.fixture
def model(tmp_path, dataset):
    path = tmp_path / "model.json"
    assert main(["train", str(dataset), "--model", str(path), *FAST]) == 0
    return path


class TestPrep:
    def test_fixture_totals(self, yearly_prepped):
        code, stdout, out = yearly_prepped
        assert code == 0
        total = [line for line in stdout.splitlines() if line.startswith("Total")][0].split()
        assert total[1:] == ["178,948", "4,081"]
        assert "2000" in stdout and "17,934" in stdout
        dropped = json.loads((out / "samples.dropped_columns.json").read_text())
        assert {d["column"] for d in dropped["dropped"]} == {"preciptype", "snow", "conditions"}
        assert json.loads((out / "samples.dropped_events.json").read_text())["count"] == 10
        summary = json.loads((out / "samples.summary.json").read_text())
        assert summary["total_rows"] == 178948

    def test_missing_events_file(self, tmp_path, yearly_raw, capsys):
        weather, _ = yearly_raw
        missing = tmp_path / "nope.csv"
        assert main(["prep", str(weather), str(missing), str(tmp_path / "o.csv")]) == 2
        assert str(missing) in capsys.readouterr().err

    def test_sparsity_threshold(self, tmp_path):
        rows = ["date,location_id,a,b"]
        for d in range(10):
            b = "" if d < 7 else str(d)
            rows.append(f"2001-01-{d + 1:02d},OK,{d},{b}")
        (tmp_path / "w.csv").write_text("\n".join(rows) + "\n")
        (tmp_path / "e.csv").write_text("date,location_id,magnitude\n2001-01-03,OK,2\n")
        args = [str(tmp_path / "w.csv"), str(tmp_path / "e.csv")]
        assert main(["prep", *args, str(tmp_path / "lo.csv"), "--sparsity", "0.5"]) == 0
        assert main(["prep", *args, str(tmp_path / "hi.csv"), "--sparsity", "0.9"]) == 0
        assert dataio.read_dataset(tmp_path / "lo.csv").feature_names == ["a"]
        hi = dataio.read_dataset(tmp_path / "hi.csv")
        assert hi.feature_names == ["a", "b"] and not np.isnan(hi.X).any()
        assert hi.y.tolist() == [0, 0, 1] + [0] * 7


class TestTrainScore:
    def test_round_trip(self, tmp_path, dataset, model, capsys):
        doc = json.loads(model.read_text())
        assert doc["feature_names"] == ["x00", "x01", "x02", "x03"]
        out1, out2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
        assert main(["score", str(model), str(dataset), "--out", str(out1)]) == 0
        assert main(["score", str(model), str(dataset), "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        scored = pd.read_csv(out1)
        assert list(scored.columns[-2:]) == ["probability", "prediction"]
        assert scored["probability"].between(0, 1).all()
        assert (scored["prediction"] == (scored["probability"] >= 0.5)).all()

    def test_score_accuracy_tracks_training_curve(self, tmp_path, dataset, model, capsys):
        doc = json.loads(model.read_text())
        main(["score", str(model), str(dataset), "--out", str(tmp_path / "s.csv")])
        scored = pd.read_csv(tmp_path / "s.csv")
        acc = (scored["prediction"] == scored["result"]).mean()
        # the curve is measured on SMOTE-balanced data in train mode, so only approximately equal
        assert abs(acc - doc["training_curve"]["accuracy"][-1]) < 0.1

    def test_wrong_feature_count(self, tmp_path, model, capsys):
        ds, _ = generate(SynthConfig(40, 5, 0.2, 4.0, 1))
        dataio.write_dataset(ds, tmp_path / "five.csv")
        assert main(["score", str(model), str(tmp_path / "five.csv")]) == 3
        assert "expects 4 features" in capsys.readouterr().err

    def test_curve_file(self, tmp_path, dataset):
        assert main(["train", str(dataset), "--model", str(tmp_path / "m.json"),
                     "--curve", str(tmp_path / "c.csv"), *FAST]) == 0
        curve = pd.read_csv(tmp_path / "c.csv")
        assert list(curve.columns) == ["epoch", "loss", "accuracy"] and len(curve) == 4

    def test_windowed_model_leaves_first_days_unscored(self, tmp_path, dataset):
        m = tmp_path / "w.json"
        assert main(["train", str(dataset), "--model", str(m), "--window", "3", *FAST]) == 0
        main(["score", str(m), str(dataset), "--out", str(tmp_path / "s.csv")])
        scored = pd.read_csv(tmp_path / "s.csv")
        assert scored["probability"].isna().sum() == 2 * 10


def test_synth_rejects_bad_rate(tmp_path, capsys):
    assert main(["synth", str(tmp_path / "x.csv"), "--rate", "0"]) == 2
    assert "tornado_rate" in capsys.readouterr().err


def test_synth_writes_truth(dataset):
    truth = json.loads(dataset.with_suffix(".truth.json").read_text())
    assert truth["n_positives"] == 60 and truth["bayes_accuracy"] > 0.97


class TestAppend:
    def test_zero_rows_keeps_bytes(self, tmp_path, dataset):
        before = dataset.read_bytes()
        header = before.decode().splitlines()[0]
        (tmp_path / "empty.csv").write_text(header + "\n")
        assert main(["append", str(dataset), str(tmp_path / "empty.csv")]) == 0
        assert dataset.read_bytes() == before

    def test_matching_rows(self, tmp_path, dataset):
        before = dataset.read_bytes()
        ds, _ = generate(SynthConfig(30, 4, 0.2, 4.0, 9, start_date="2010-01-01"))
        dataio.write_dataset(ds, tmp_path / "more.csv")
        out = tmp_path / "joined.csv"
        assert main(["append", str(dataset), str(tmp_path / "more.csv"), "--out", str(out)]) == 0
        assert out.read_bytes().startswith(before)
        assert dataset.read_bytes() == before
        assert len(dataio.read_dataset(out)) == 330

    def test_extra_column_rejected(self, tmp_path, dataset, capsys):
        frame = pd.read_csv(dataset).head(3)
        frame["gust"] = 1.0
        frame.to_csv(tmp_path / "bad.csv", index=False)
        before = dataset.read_bytes()
        assert main(["append", str(dataset), str(tmp_path / "bad.csv")]) == 3
        assert "gust" in capsys.readouterr().err
        assert dataset.read_bytes() == before


class TestCrossval:
    def test_report_records_mode(self, tmp_path, dataset):
        out = tmp_path / "cv"
        assert main(["crossval", str(dataset), "--out", str(out), "--folds", "3",
                     "--mode", "paper-faithful", *FAST]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["mode"] == "paper-faithful" and report["n_folds"] == 3
        assert len(report["dataset_sha256"]) == 64
        for k in range(3):
            assert (out / f"roc_fold_{k}.csv").is_file() and (out / f"curve_fold_{k}.csv").is_file()
        avg = pd.read_csv(out / "avg_confusion.csv")
        assert list(avg.columns) == ["actual", "predicted_0", "predicted_1"]


class TestConfig:
    def test_file_supplies_defaults(self, tmp_path, dataset):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# quick run\nhidden = 5\nepochs=2\nbatch-size = 32\nno_smote = true\n")
        m = tmp_path / "m.json"
        assert main(["train", str(dataset), "--model", str(m), "--config", str(cfg), "--epochs", "3"]) == 0
        doc = json.loads(m.read_text())
        assert doc["hidden_size"] == 5 and doc["smote"] is None
        assert doc["train_config"]["epochs"] == 3 and doc["train_config"]["batch_size"] == 32

    def test_unknown_key(self, tmp_path, dataset, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = red\n")
        assert main(["train", str(dataset), "--model", str(tmp_path / "m.json"), "--config", str(cfg)]) == 2
        assert "colour" in capsys.readouterr().err

    def test_parser(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("a = 1\nb-c=x # note\n")
        assert read_config_file(cfg) == {"a": "1", "b_c": "x"}
        cfg.write_text("oops\n")
        with pytest.raises(DataError):
            read_config_file(cfg)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tornadocast", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "crossval" in res.stdout
