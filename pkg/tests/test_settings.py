# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import pytest

from wagegap import hooks
from wagegap.config.settings import (
    PipelineConfig, derive_seed, parse_bool, parse_list, parse_pairs, read_flat_config,
)
from wagegap.core.exceptions import ConfigError


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    import os
    for name in list(os.environ):
        if name.startswith("WAGEGAP_"):
            monkeypatch.delenv(name)


def write_config(tmp_path, text):
    path = tmp_path / "run.conf"
    path.write_text(text)
    return str(path)


def test_flat_config_file_and_environment_override(tmp_path, monkeypatch):
    path = write_config(tmp_path, "K=5\nL=3\nseed=1\nmarket_spec=market.conf\n")
    monkeypatch.setenv("WAGEGAP_K", "7")
    monkeypatch.setenv("WAGEGAP_SEED__CLUSTER", "99")
    values = read_flat_config(path)
    assert values["k"] == "7"
    assert values["l"] == "3"
    assert values["seed.cluster"] == "99"


def test_missing_config_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        read_flat_config(str(tmp_path / "absent.conf"))


def test_pipeline_config_from_file(tmp_path):
    path = write_config(tmp_path, "\n".join([
        "K=4", "L=2", "seed=12", "market_spec=spec.conf", "pairs=2010:2012,2011:2013",
        "subgroups=education,age", "robustness_L=2,3", "seed.estimate=5", "column.worker_id=pid",
        "run_gapstat=yes",
    ]))
    config = PipelineConfig.from_file(path, {"threads": 3, "K": None})
    assert config.K == 4
    assert config.threads == 3
    assert config.pairs == [(2010, 2012), (2011, 2013)]
    assert config.subgroups == ["education", "age"]
    assert config.robustness_L == [2, 3]
    assert config.column_map == {"worker_id": "pid"}
    assert config.run_gapstat
    assert config.stage_seed("estimate") == 5
    assert config.stage_seed("cluster") == derive_seed(12, hooks.pipeline_stages.index("cluster"))


@pytest.mark.parametrize("raw", [
    {"k": "0", "seed": "1", "market_spec": "x"},
    {"seed": "1"},
    {"market_spec": "x"},
    {"seed": "1", "market_spec": "x", "pairs": "2010:2011"},
    {"seed": "1", "market_spec": "x", "subgroups": "height"},
    {"seed": "1", "market_spec": "x", "counterfactual_mode": "guess"},
    {"seed": "1", "market_spec": "x", "seed.polish": "3"},
    {"seed": "one", "market_spec": "x"},
])
def test_invalid_configuration(raw):
    with pytest.raises(ConfigError) as excinfo:
        PipelineConfig.from_dict(raw)
    assert excinfo.value.exit_code == 2


def test_data_free_configuration():
    config = PipelineConfig.from_dict({"seed": "1"}, require_data=False)
    assert config.input is None and config.market_spec is None


def test_config_hash_ignores_threads_and_out():
    first = PipelineConfig.from_dict({"seed": "1", "market_spec": "x"}, {"threads": 1, "out": "a"})
    second = PipelineConfig.from_dict({"seed": "1", "market_spec": "x"}, {"threads": 8, "out": "b"})
    third = PipelineConfig.from_dict({"seed": "2", "market_spec": "x"})
    assert first.config_hash() == second.config_hash()
    assert first.config_hash() != third.config_hash()


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, 0) == derive_seed(1, 0)
    assert len({derive_seed(1, index) for index in range(8)}) == 8


def test_parsers():
    assert parse_list("1, 2,3", "x", cast=int) == [1, 2, 3]
    assert parse_list("", "x") == []
    assert parse_pairs("2010:2012") == [(2010, 2012)]
    assert parse_bool("on", "x") and not parse_bool("0", "x")
    with pytest.raises(ConfigError):
        parse_bool("maybe", "x")
    with pytest.raises(ConfigError):
        parse_pairs("2010-2012")
