# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import json

import numpy as np
import pandas as pd
import pytest

from wagegap.core.exceptions import ConfigError, DataError, EstimationError
from wagegap.utils.artifacts import dumps, load_schema, read_artifact, to_builtin, write_artifact
from wagegap.utils.audit import AuditLog, RunManifest
from wagegap.utils.tables import emit_tables, read_table, table_columns


def assignment_frame():
    return pd.DataFrame({
        "worker_id": [10, 11, 12],
        "post_2": [0.25, 1 / 3, 0.9],
        "type": [1, 1, 2],
        "mover": [True, False, False],
        "post_1": [0.75, 2 / 3, 0.1],
    })


def test_emit_nothing():
    assert emit_tables([], "unused") == {}


def test_table_columns_follow_the_schema():
    schema = load_schema("tables", "type_assignment")
    columns = table_columns(schema, list(assignment_frame().columns))
    assert columns == ["worker_id", "type", "mover", "post_1", "post_2"]
    with pytest.raises(DataError):
        table_columns(schema, ["worker_id", "type"])
    with pytest.raises(DataError):
        table_columns(schema, ["worker_id", "type", "mover", "colour"])


def test_emit_and_read_back(tmp_path):
    digests = emit_tables([("type_assignment", assignment_frame())], str(tmp_path))
    assert set(digests) == {"type_assignment.csv", "type_assignment.json"}
    text = (tmp_path / "type_assignment.csv").read_text()
    assert text.splitlines()[0] == "worker_id,type,mover,post_1,post_2"
    assert text.endswith("\n") and "\r" not in text

    name, frame = read_table(str(tmp_path / "type_assignment.csv"))
    assert name == "type_assignment"
    assert list(frame["worker_id"]) == ["10", "11", "12"]
    assert list(frame["mover"]) == [True, False, False]
    np.testing.assert_allclose(frame["post_1"], [0.75, 2 / 3, 0.1], rtol=1e-11)

    twin = json.loads((tmp_path / "type_assignment.json").read_text())
    assert twin["table"] == "type_assignment"
    assert twin["columns"] == list(frame.columns)
    assert twin["rows"][0]["type"] == 1


def test_reemitting_a_read_table_is_byte_identical(tmp_path):
    frame = pd.DataFrame({
        "gender": ["F", "F", "M"],
        "kind": ["type", "class", "type_given_class"],
        "k": [None, 2, 1],
        "l": [1, None, 2],
        "share": [0.123456789012345, np.nan, 1.0],
    })
    first = emit_tables([("type_proportions", frame, "shares")], str(tmp_path / "a"))
    name, back = read_table(str(tmp_path / "a" / "shares.csv"))
    second = emit_tables([(name, back, "shares")], str(tmp_path / "b"))
    assert first == second
    assert (tmp_path / "a" / "shares.json").read_bytes() == (tmp_path / "b" / "shares.json").read_bytes()
    assert back["k"].isna().tolist() == [True, False, False]


def test_read_table_errors(tmp_path):
    with pytest.raises(DataError):
        read_table(str(tmp_path / "absent.csv"))
    orphan = tmp_path / "orphan.csv"
    orphan.write_text("k,W_k,gap,s\n1,2,0,0\n")
    with pytest.raises(DataError):
        read_table(str(orphan))
    assert read_table(str(orphan), "gap_statistic")[1]["k"].tolist() == [1]
    with pytest.raises(ConfigError):
        emit_tables([("no_such_table", pd.DataFrame())], str(tmp_path))


def test_to_builtin_and_dumps():
    value = {1: np.float64(1.5), "a": np.array([1, 2]), "b": float("nan"), "c": (np.int64(3), np.inf)}
    assert to_builtin(value) == {"1": 1.5, "a": [1, 2], "b": None, "c": [3, None]}
    text = dumps({"b": 1, "a": 2})
    assert text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')


def test_artifact_round_trip_and_validation(tmp_path):
    path = str(tmp_path / "bias.json")
    digest = write_artifact("bias", {"quadratic": "var_firm", "sigma2": 1.0, "xi": np.float64(0.25),
                                     "workers": 6, "firms": 3}, path)
    assert len(digest) == 64
    record = read_artifact(path, "bias")
    assert record["version"] == 1
    assert record["xi"] == 0.25

    with pytest.raises(DataError):
        write_artifact("bias", {"quadratic": "var_firm", "sigma2": 1.0}, str(tmp_path / "partial.json"))
    stale = dict(record, version=99)
    (tmp_path / "stale.json").write_text(json.dumps(stale))
    with pytest.raises(DataError):
        read_artifact(str(tmp_path / "stale.json"), "bias")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(DataError):
        read_artifact(str(tmp_path / "broken.json"), "bias")


def test_audit_log_lines(tmp_path):
    path = tmp_path / "audit.jsonl"
    audit = AuditLog(str(path))
    audit.success("cluster", outputs=["a.csv"])
    audit.error("estimate", "no movers", "EstimationError")
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert [line["status"] for line in lines] == ["Success", "Error"]
    assert lines[1]["details"]["error"]["type"] == "EstimationError"
    AuditLog(str(path))
    assert path.read_text() == ""


def test_manifest_records_stage_outcomes(tmp_path):
    audit = AuditLog()
    manifest = RunManifest(config_hash="abc", config={"K": 2})
    with manifest.stage("cluster", audit) as outputs:
        outputs["b.csv"] = "2"
        outputs["a.csv"] = "1"
    with pytest.raises(EstimationError):
        with manifest.stage("estimate", audit):
            raise EstimationError("no movers")
    manifest.skip(["assign"])

    assert manifest.digests()["cluster"] == {"a.csv": "1", "b.csv": "2"}
    assert manifest.failed_stage == "estimate"
    assert not manifest.completed
    assert manifest.stages["assign"].status == "Skipped"
    assert [r["status"] for r in audit.records] == ["Success", "Error"]

    manifest.write(str(tmp_path / "manifest.json"))
    written = read_artifact(str(tmp_path / "manifest.json"), "manifest")
    assert written["stages"]["estimate"]["error"] == "no movers"
    assert written["config_hash"] == "abc"
