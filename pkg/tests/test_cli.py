# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import json
import os

import pandas as pd
import pytest

from wagegap.cli import build_parser, load_config, main
from wagegap.utils.artifacts import read_artifact

MARKET = """\
K=2
L=2
firms_per_class=12,12
type_marginals_f=0.55,0.45
type_marginals_m=0.45,0.55
class_attachment_f=0.6,0.4,0.35,0.65
class_attachment_m=0.55,0.45,0.3,0.7
transition_kernel=0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5
mu=1,1,1.6,1.6,2.2,2.2,2.8,2.8
sigma=0.1
mover_share=0.4
seed=4
"""


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in list(os.environ):
        if name.startswith("WAGEGAP_"):
            monkeypatch.delenv(name)


@pytest.fixture
def run_config(tmp_path):
    market = tmp_path / "market.conf"
    market.write_text(MARKET)
    config = tmp_path / "run.conf"
    config.write_text("\n".join([
        f"market_spec={market}", "K=2", "L=2", "seed=7", "restarts=5", "em_reps=3", "subgroups=age", "",
    ]))
    return str(config)


def stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


def manifest_digests(out):
    manifest = read_artifact(os.path.join(out, "manifest.json"), "manifest")
    return {name: stage["outputs"] for name, stage in manifest["stages"].items()}, manifest


def test_parser_knows_every_command():
    parser = build_parser()
    args = parser.parse_args(["graph", "bias", "--sigma2", "0.5", "--threads", "2"])
    assert args.command == "graph" and args.task == "bias"
    assert args.sigma2 == 0.5 and args.threads == 2
    with pytest.raises(SystemExit):
        parser.parse_args(["polish"])
    with pytest.raises(SystemExit):
        parser.parse_args(["summary", "-v", "--quiet"])


def test_pipeline_is_deterministic_across_thread_counts(run_config, tmp_path, capsys):
    first, second = str(tmp_path / "one"), str(tmp_path / "two")
    assert main(["pipeline", "--config", run_config, "--out", first]) == 0
    result = stdout_json(capsys)
    assert result["success"]
    assert main(["pipeline", "--config", run_config, "--out", second, "--threads", "2"]) == 0

    digests_one, manifest = manifest_digests(first)
    digests_two, _ = manifest_digests(second)
    assert manifest["completed"]
    assert set(manifest["stages"]) == {"simulate", "cluster", "estimate", "assign", "decompose",
                                       "counterfactual", "graph"}
    assert digests_one == digests_two
    assert "2010_2012/gap_decomposition.csv" in digests_one["counterfactual"]
    assert os.path.exists(os.path.join(first, "audit.jsonl"))


def test_stages_run_one_by_one(run_config, tmp_path, capsys):
    out = str(tmp_path / "staged")
    for command in ("simulate", "summary", "cluster", "estimate", "assign", "decompose", "counterfactual"):
        assert main([command, "--config", run_config, "--out", out]) == 0, command
        assert stdout_json(capsys)["success"]
    pair = os.path.join(out, "2010_2012")
    for name in ("classing.json", "mixture_model.json", "type_assignment.csv", "kob.csv",
                 "variance_decomposition.csv", "gap_decomposition.csv", "summary.csv"):
        assert os.path.exists(os.path.join(pair, name)), name
    assert os.path.exists(os.path.join(out, "observations.csv"))

    assert main(["graph", "components", "--config", run_config, "--out", out]) == 0
    assert "2010_2012/components.csv" in stdout_json(capsys)["files"]
    assert main(["graph", "ldcs", "--config", run_config, "--out", out]) == 0
    assert main(["graph", "exomobility", "--config", run_config, "--out", out]) == 0


def test_estimate_before_cluster_is_a_data_error(run_config, tmp_path, capsys):
    assert main(["estimate", "--config", run_config, "--out", str(tmp_path / "empty")]) == 3
    assert not stdout_json(capsys)["success"]


def test_missing_data_source_is_a_config_error(tmp_path):
    assert main(["summary", "--seed", "1", "--out", str(tmp_path)]) == 2
    assert main(["summary", "--config", str(tmp_path / "absent.conf")]) == 2


def test_invalid_market_spec_is_a_config_error(tmp_path, capsys):
    market = tmp_path / "market.conf"
    market.write_text(MARKET.replace("sigma=0.1", "sigma=0"))
    config = tmp_path / "run.conf"
    config.write_text(f"market_spec={market}\nseed=1\n")
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "out")]) == 2


def test_unreadable_input_is_a_data_error(tmp_path, capsys):
    observations = tmp_path / "observations.csv"
    observations.write_text("worker_id,year\n1,2010\n")
    config = tmp_path / "run.conf"
    config.write_text(f"input={observations}\nseed=1\n")
    assert main(["summary", "--config", str(config), "--out", str(tmp_path / "out")]) == 3


def test_graph_bias_needs_no_data(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["graph", "bias", "--seed", "1", "--out", out, "--mc-reps", "20000"]) == 0
    result = stdout_json(capsys)
    assert result["xi"] > 0
    assert abs(result["monte_carlo"]["bias"] - result["xi"]) < 4 * result["monte_carlo"]["se"]
    assert read_artifact(os.path.join(out, "bias.json"), "bias")["workers"] == 6

    assert main(["graph", "bias", "--seed", "1", "--out", out, "--sigma2", "0"]) == 0
    assert stdout_json(capsys)["xi"] == 0.0


def test_graph_bias_reads_a_design_file(tmp_path, capsys):
    design = tmp_path / "design.csv"
    design.write_text("worker,firm\n1,1\n1,2\n2,2\n2,1\n3,1\n3,1\n")
    assert main(["graph", "bias", "--seed", "1", "--out", str(tmp_path), "--design", str(design)]) == 0
    assert stdout_json(capsys)["xi"] > 0
    assert main(["graph", "bias", "--seed", "1", "--out", str(tmp_path),
                 "--design", str(tmp_path / "absent.csv")]) == 3


def test_graph_connectivity(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["graph", "connectivity", "--seed", "2", "--out", out, "--sizes", "5,50", "--reps", "200"]) == 0
    assert len(stdout_json(capsys)["inclusion_frequency"]) == 2
    assert os.path.exists(os.path.join(out, "connectivity.csv"))


def parsed_config(argv):
    return load_config(build_parser().parse_args(argv))


def test_cluster_flags_override_the_file(run_config, tmp_path):
    observations = str(tmp_path / "observations.csv")
    config = parsed_config(["cluster", "--config", run_config, "--k", "3", "--restarts", "4", "--input", observations])
    assert config.K == 3 and config.restarts == 4
    assert config.input == observations and config.market_spec is None
    assert parsed_config(["cluster", "--config", run_config]).K == 2


def test_gapstat_flags(run_config, tmp_path, capsys):
    config = parsed_config(["gapstat", "--config", run_config, "--kmin", "1", "--kmax", "3", "--B", "5"])
    assert (config.gap_kmin, config.gap_kmax, config.gap_B) == (1, 3, 5)

    out = str(tmp_path / "gap")
    assert main(["gapstat", "--config", run_config, "--out", out, "--kmin", "1", "--kmax", "3", "--B", "5"]) == 0
    assert stdout_json(capsys)["success"]
    assert read_artifact(os.path.join(out, "2010_2012", "gapstat.json"), "gap_statistic")["k"] == [1, 2, 3]


def test_estimate_flags_and_stored_classing(run_config, tmp_path, capsys):
    config = parsed_config(["estimate", "--config", run_config, "--reps", "2", "--classing", "stored.json"])
    assert config.em_reps == 2 and config.classing == "stored.json"
    assert parsed_config(["estimate", "--config", run_config]).em_reps == 3

    first, second = str(tmp_path / "first"), str(tmp_path / "second")
    assert main(["cluster", "--config", run_config, "--out", first, "--k", "3"]) == 0
    stored = os.path.join(first, "2010_2012", "classing.json")
    assert read_artifact(stored, "classing")["K"] == 3
    capsys.readouterr()

    assert main(["estimate", "--config", run_config, "--out", second, "--reps", "2", "--classing", stored]) == 0
    assert stdout_json(capsys)["success"]
    assert read_artifact(os.path.join(second, "2010_2012", "classing.json"), "classing")["K"] == 3
    assert read_artifact(os.path.join(second, "2010_2012", "mixture_model.json"), "mixture_model")["K"] == 3

    missing = str(tmp_path / "absent.json")
    assert main(["estimate", "--config", run_config, "--out", second, "--classing", missing]) == 3


def test_decompose_kind_limits_the_outputs(run_config, tmp_path, capsys):
    config = parsed_config(["decompose", "--config", run_config, "--kind", "mincer", "--kind", "theil"])
    assert config.decompose_kinds == ["mincer", "theil"]
    assert parsed_config(["decompose", "--config", run_config]).decompose_kinds == ["mincer", "cakm", "variance", "theil"]
    with pytest.raises(SystemExit):
        build_parser().parse_args(["decompose", "--kind", "oaxaca"])

    out = str(tmp_path / "kinds")
    for command in ("cluster", "estimate", "assign"):
        assert main([command, "--config", run_config, "--out", out]) == 0, command
    capsys.readouterr()
    assert main(["decompose", "--config", run_config, "--out", out, "--kind", "theil"]) == 0
    files = stdout_json(capsys)["files"]
    assert "2010_2012/theil.csv" in files
    assert "2010_2012/kob.csv" not in files
    assert "2010_2012/variance_decomposition.csv" not in files
    assert not os.path.exists(os.path.join(out, "2010_2012", "kob.csv"))


def test_counterfactual_flags(run_config, tmp_path, capsys):
    config = parsed_config(["counterfactual", "--config", run_config, "--by", "age,education",
                            "--mode", "draws", "--draws", "500"])
    assert config.subgroups == ["age", "education"]
    assert config.counterfactual_mode == "draws" and config.counterfactual_draws == 500
    assert parsed_config(["counterfactual", "--config", run_config]).subgroups == ["age"]
    assert main(["counterfactual", "--config", run_config, "--by", "height"]) == 2

    out = str(tmp_path / "draws")
    for command in ("cluster", "estimate", "assign"):
        assert main([command, "--config", run_config, "--out", out]) == 0, command
    capsys.readouterr()
    assert main(["counterfactual", "--config", run_config, "--out", out, "--by", "education",
                 "--mode", "draws", "--draws", "500"]) == 0
    assert stdout_json(capsys)["success"]
    groups = pd.read_csv(os.path.join(out, "2010_2012", "gap_decomposition.csv"))["group"].tolist()
    assert groups[0] == "All"
    assert groups[1:] and all(group.startswith("education:") for group in groups[1:])


def test_settings_are_read_from_the_config_file(tmp_path):
    config = tmp_path / "run.conf"
    config.write_text("seed=1\nsigma_floor=0.01\nhours_min=20\ngender_ratio_min=0.2\nsparse_cell=3\n")
    loaded = load_config(build_parser().parse_args(["graph", "bias", "--config", str(config)]))
    assert loaded.settings.sigma_floor == pytest.approx(0.01)
    assert loaded.settings.hours_min == pytest.approx(20.0)
    assert loaded.settings.gender_ratio_min == pytest.approx(0.2)
    assert loaded.settings.sparse_cell == 3 and isinstance(loaded.settings.sparse_cell, int)

    config.write_text("seed=1\nsigma_floor=0\n")
    assert main(["graph", "bias", "--config", str(config), "--out", str(tmp_path)]) == 2
