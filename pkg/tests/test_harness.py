import json
import os

import numpy as np
import pytest

from cclkit.cli import EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE, main
from cclkit.harness import (
    ConfigError,
    DataSpec,
    ExperimentConfig,
    StageError,
    build_dataset,
    parse_config,
    run_baselines,
    run_pipeline,
    run_sweep,
    write_report,
    write_sweep_csv,
    SWEEP_COLUMNS,
)

SMALL_CONFIG = """\
[data]
kind = blobs
classes = 3
dim = 6
per_class = 60
spread = 1.0

[model]
hidden = 16
activation = relu

[train]
objective = spec
base = ce
concave = cql
alpha = 0.5
epochs = 8
batch_size = 32
lr = 0.1
weight_decay = 0.0

[attack]
enabled = loss,confidence,entropy
shadows = 1

[run]
seed = 3

[sweep]
alphas = 0.25,0.5,0.75
seeds = 0,1,2
"""


@pytest.fixture()
def small_config(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(SMALL_CONFIG)
    return str(path)


class TestParseConfig:
    def test_roundtrip_fields(self, small_config):
        cfg = parse_config(small_config)
        assert cfg.data.kind == "blobs" and cfg.data.classes == 3
        assert cfg.hidden == (16,)
        assert cfg.train.epochs == 8
        assert cfg.train.objective.spec.alpha == 0.5
        assert cfg.train.objective.spec.concave.kind == "cql"
        assert cfg.attack.enabled == ("loss", "confidence", "entropy")
        assert cfg.seed == 3
        assert cfg.sweep_alphas == (0.25, 0.5, 0.75)
        assert cfg.sweep_seeds == (0, 1, 2)

    def test_defaults_from_empty_file(self, tmp_path):
        path = tmp_path / "empty.ini"
        path.write_text("")
        cfg = parse_config(str(path))
        assert cfg.data.kind == "blobs"
        assert cfg.hidden == (64, 64)
        assert cfg.train.objective.spec.concave is None

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            parse_config("/nonexistent/exp.ini")

    def test_bad_number(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[train]\nepochs = soon\n")
        with pytest.raises(ConfigError, match="bad config value"):
            parse_config(str(path))

    def test_unknown_attack(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[attack]\nenabled = loss,psychic\n")
        with pytest.raises(ConfigError, match="unknown attack"):
            parse_config(str(path))

    def test_csv_kind_needs_path(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[data]\nkind = csv\n")
        with pytest.raises(ConfigError, match="needs a path"):
            parse_config(str(path))

    def test_unknown_objective(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[train]\nobjective = hinge\n")
        with pytest.raises(ConfigError, match="unknown objective"):
            parse_config(str(path))

    def test_baseline_grid_override(self, tmp_path):
        path = tmp_path / "b.ini"
        path.write_text("[baselines]\ndefenses = dropout\ndropout = 0.1,0.5\n")
        cfg = parse_config(str(path))
        assert cfg.baseline_grids["dropout"] == (0.1, 0.5)


class TestBuildDataset:
    def test_missing_csv_is_stage_error(self):
        cfg = ExperimentConfig(data=DataSpec(kind="csv", path="/nope.csv"))
        with pytest.raises(StageError, match=r"\[data\]"):
            build_dataset(cfg, 0)


class TestPipeline:
    def test_smoke_report_schema(self, small_config):
        cfg = parse_config(small_config)
        result = run_pipeline(cfg)
        rep = result.report
        assert rep["seed"] == 3
        assert 0.0 <= rep["target"]["test_acc"] <= 1.0
        assert {a["name"] for a in rep["attacks"]} == {"loss", "confidence", "entropy"}
        for a in rep["attacks"]:
            assert -1.0 <= a["adv"] <= 1.0
            assert 0.0 <= a["tpr"] <= 1.0 and 0.0 <= a["fpr"] <= 1.0
        assert rep["max_adv"] == max(a["adv"] for a in rep["attacks"])
        assert 0.0 <= rep["p1"] <= 1.0
        assert len(result.target_stats) == cfg.train.epochs

    def test_report_byte_identical_across_runs(self, small_config, tmp_path):
        cfg = parse_config(small_config)
        payloads = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            report_path, _ = write_report(run_pipeline(cfg), str(out))
            payloads.append(open(report_path, "rb").read())
        assert payloads[0] == payloads[1]

    def test_seed_changes_report(self, small_config):
        cfg = parse_config(small_config)
        a = run_pipeline(cfg, seed=3).report
        b = run_pipeline(cfg, seed=4).report
        assert a != b

    def test_write_report_files(self, small_config, tmp_path):
        cfg = parse_config(small_config)
        result = run_pipeline(cfg)
        report_path, epochs_path = write_report(result, str(tmp_path / "out"))
        rep = json.load(open(report_path))
        assert rep == result.report
        lines = open(epochs_path).read().strip().split("\n")
        assert lines[0].startswith("epoch,lr,train_loss_mean")
        assert len(lines) == 1 + cfg.train.epochs


class TestSweep:
    def test_cardinality_and_schema(self, small_config):
        cfg = parse_config(small_config)
        rows, errors = run_sweep(cfg, jobs=1)
        assert errors == []
        assert len(rows) == 9  # 3 alphas x 3 seeds
        seen = {(r["knob"], r["seed"]) for r in rows}
        assert len(seen) == 9
        for r in rows:
            assert r["defense"] == "ccl"
            assert set(SWEEP_COLUMNS) <= set(r)

    def test_needs_alphas(self, tmp_path):
        path = tmp_path / "no.ini"
        path.write_text("[train]\nconcave = cql\n")
        with pytest.raises(ConfigError, match="alphas"):
            run_sweep(parse_config(str(path)))

    def test_needs_concave_term(self, tmp_path):
        path = tmp_path / "no.ini"
        path.write_text("[sweep]\nalphas = 0.5\n")
        with pytest.raises(ConfigError, match="concave"):
            run_sweep(parse_config(str(path)))

    def test_csv_output(self, small_config, tmp_path):
        cfg = parse_config(small_config)
        rows, _ = run_sweep(cfg, jobs=1)
        path = tmp_path / "sweep.csv"
        write_sweep_csv(rows, str(path))
        lines = path.read_text().strip().split("\n")
        assert lines[0] == ",".join(SWEEP_COLUMNS)
        assert len(lines) == 10
        # numeric columns parse back
        cells = lines[1].split(",")
        float(cells[SWEEP_COLUMNS.index("test_acc")])
        float(cells[SWEEP_COLUMNS.index("max_adv")])


class TestBaselines:
    def test_label_smoothing_grid(self, tmp_path):
        path = tmp_path / "b.ini"
        path.write_text(
            SMALL_CONFIG
            + "\n[baselines]\ndefenses = label_smoothing\nlabel_smoothing = 0.2,0.6\n"
        )
        cfg = parse_config(str(path))
        rows, errors = run_baselines(cfg, jobs=1)
        assert errors == []
        assert len(rows) == 6  # 2 knobs x 3 seeds
        assert all(r["defense"] == "label_smoothing" for r in rows)

    def test_early_stop_rows(self, tmp_path):
        path = tmp_path / "b.ini"
        path.write_text(
            SMALL_CONFIG + "\n[baselines]\ndefenses = early_stop\nearly_stop = 2,5\n"
        )
        cfg = parse_config(str(path))
        rows, errors = run_baselines(cfg, jobs=1)
        assert errors == []
        assert len(rows) == 6  # 2 checkpoints x 3 seeds
        assert {int(r["knob"]) for r in rows} == {2, 5}

    def test_requires_defenses(self, small_config):
        with pytest.raises(ConfigError, match="defenses"):
            run_baselines(parse_config(small_config))


class TestCli:
    def test_run_and_outputs(self, small_config, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["run", "--config", small_config, "--out", str(out)])
        assert code == EXIT_OK
        assert os.path.exists(out / "report.json")
        assert os.path.exists(out / "epochs.csv")
        assert "max_adv=" in capsys.readouterr().out

    def test_gen_data(self, small_config, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["gen-data", "--config", small_config, "--out", str(out), "--name", "d.csv"]
        )
        assert code == EXIT_OK
        from cclkit.data import load_csv

        ds = load_csv(str(out / "d.csv"), has_header=True)
        assert len(ds) == 180 and ds.num_classes == 3

    def test_sweep_cli(self, tmp_path):
        cfg_path = tmp_path / "s.ini"
        cfg_path.write_text(SMALL_CONFIG.replace("0.25,0.5,0.75", "0.5").replace("0,1,2", "0"))
        out = tmp_path / "out"
        code = main(["sweep", "--config", str(cfg_path), "--out", str(out), "--jobs", "1"])
        assert code == EXIT_OK
        assert os.path.exists(out / "sweep.csv")

    def test_theory_cli(self, tmp_path, capsys):
        out = tmp_path / "t"
        code = main(["theory", "--seed", "0", "--samples", "200000", "--out", str(out)])
        assert code == EXIT_OK
        verdict = json.load(open(out / "theory.json"))
        assert verdict["all_passed"] is True
        assert "PASS" in capsys.readouterr().out

    def test_theory_bad_samples_is_usage(self, tmp_path, capsys):
        code = main(["theory", "--samples", "10", "--out", str(tmp_path)])
        assert code == EXIT_USAGE

    def test_missing_config_is_usage(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)])
        assert code == EXIT_USAGE
        assert "config error" in capsys.readouterr().err

    def test_bad_flag_is_usage(self, capsys):
        assert main(["run", "--config"]) == EXIT_USAGE

    def test_seed_override(self, small_config, tmp_path):
        outs = []
        for seed, sub in ((5, "a"), (6, "b")):
            out = tmp_path / sub
            assert (
                main(["run", "--config", small_config, "--seed", str(seed), "--out", str(out)])
                == EXIT_OK
            )
            outs.append(json.load(open(out / "report.json")))
        assert outs[0]["seed"] == 5 and outs[1]["seed"] == 6
