import json

import pytest
import tomli

from waldo.cli import LOCK_NAME, main
from waldo.config import RunConfig, apply_overrides, parse_classes, resolve_output_dir
from waldo.exceptions import ConfigError

TINY = ["--points", "40", "--trees", "4", "--folds", "2", "--classes", "0,1,9"]


@pytest.fixture
def tiny_config(tmp_path):
    cfg = RunConfig.from_dict({"plan": {"genuine_traces": 2, "tampered_traces": 4},
                               "explain": {"samples_per_class": 3}})
    path = tmp_path / "tiny.toml"
    cfg.dump(path)
    return path


def test_config_roundtrip_and_defaults():
    cfg = RunConfig()
    assert RunConfig.from_dict(tomli.loads(cfg.dumps())) == cfg
    assert cfg.grid.points == 500 and cfg.forest.n_trees == 100 and cfg.folds == 5
    assert sum(s.traces for s in cfg.class_plan()) == 1050
    no_vrm = RunConfig.from_dict({"board": {"vrm": False}})
    assert no_vrm.board.vrm_r is None
    assert RunConfig.from_dict(tomli.loads(no_vrm.dumps())) == no_vrm


def test_full_scale_and_overrides():
    cfg = apply_overrides(RunConfig(), full=True, trees=50, classes=(0, 3))
    assert cfg.grid.points == 5000 and cfg.forest.n_trees == 50
    assert cfg.plan.genuine_traces == 1500 and cfg.plan.tampered_traces == 750
    assert sum(s.traces for s in apply_overrides(RunConfig(), full=True).class_plan()) == 15000
    assert [s.class_id for s in cfg.class_plan()] == [0] * 5 + [3]


@pytest.mark.parametrize("bad", [{"folds": 1}, {"seed": -1}, {"grid": {"points": 1}},
                                 {"plan": {"classes": [0, 11]}}, {"nonsense": 1},
                                 {"forest": {"n_trees": 0}}])
def test_invalid_config_rejected(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_parse_classes():
    assert parse_classes("0, 3,5-7") == (0, 3, 5, 6, 7)
    with pytest.raises(ConfigError):
        parse_classes("a-b")


def test_output_dir_precedence(monkeypatch):
    cfg = RunConfig(output_dir="from-config")
    monkeypatch.delenv("WALDO_OUT", raising=False)
    assert str(resolve_output_dir(cfg)) == "from-config"
    monkeypatch.setenv("WALDO_OUT", "from-env")
    assert str(resolve_output_dir(cfg)) == "from-env"
    assert str(resolve_output_dir(cfg, "from-flag")) == "from-flag"


def test_pipeline_end_to_end(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run-all", "--config", str(tiny_config), "--out", str(out), *TINY]) == 0
    for name in ("dataset.csv", "manifest.json", "metrics.json", "model.json", "config.toml",
                 "shap_summary.csv", "shap_ranking.csv", "beeswarm_9.csv", "report.md",
                 "confusion.svg", "overlay.svg", "concordance.json"):
        assert (out / name).exists(), name
    assert not (out / LOCK_NAME).exists()
    metrics = json.loads((out / "metrics.json").read_text())
    assert len(metrics["folds"]) == 2
    assert set(metrics["folds"][0]) >= {"fold", "accuracy", "depth_min", "depth_max", "confusion"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["dataset"]["rows"] == 5 * 2 + 2 * 4
    assert set(manifest["digests"]) >= {"dataset", "model", "shap_summary"}
    summary = (out / "shap_summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 3
    snap = RunConfig.load(out / "config.toml")
    assert snap.forest.n_trees == 4 and snap.plan.classes == (0, 1, 9)
    assert "concordance" in capsys.readouterr().out


def test_rerun_is_byte_identical(tiny_config, tmp_path):
    digests = []
    for name in ("a", "b"):
        main(["run-all", "--config", str(tiny_config), "--out", str(tmp_path / name), *TINY])
        digests.append(json.loads((tmp_path / name / "manifest.json").read_text())["digests"])
    assert digests[0] == digests[1]
    main(["train", "--config", str(tiny_config), "--out", str(tmp_path / "a"), *TINY])
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["digests"] == digests[0]


def test_exit_codes(tiny_config, tmp_path):
    out = str(tmp_path / "x")
    assert main(["simulate", "--out", out, "--folds", "1"]) == 2
    (tmp_path / "broken.toml").write_text("seed = [")
    assert main(["simulate", "--config", str(tmp_path / "broken.toml"), "--out", out]) == 2
    assert main(["train", "--config", str(tiny_config), "--out", out, *TINY]) == 3
    assert main(["simulate", "--config", str(tiny_config), "--out", out, *TINY]) == 0
    # dataset grid no longer matches the config
    assert main(["train", "--config", str(tiny_config), "--out", out, "--points", "41"]) == 3
    (tmp_path / "x" / LOCK_NAME).write_text("1")
    assert main(["simulate", "--config", str(tiny_config), "--out", out, *TINY]) == 1


def test_explain_requires_model(tiny_config, tmp_path):
    out = str(tmp_path / "y")
    main(["simulate", "--config", str(tiny_config), "--out", out, *TINY])
    assert main(["explain", "--config", str(tiny_config), "--out", out, *TINY]) == 3


def test_oracle_check_command(capsys):
    assert main(["oracle-check", "--shap-cases", "20"]) == 0
    text = capsys.readouterr().out
    assert text.count("[PASS]") == 5 and "all checks passed" in text
