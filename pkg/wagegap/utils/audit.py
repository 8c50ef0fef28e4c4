# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

from .. import __version__, hooks
from ..core.exceptions import WageGapError
from .artifacts import to_builtin, write_artifact

logger = logging.getLogger(__name__)


class AuditLog:
    """
    Append-only JSON-lines log of pipeline stage events.

    Each record carries the stage, a status (Success or Error) and free-form
    details. Records hold no timestamps so that the log of a rerun matches.
    """

    def __init__(self, path=None):
        self.path = path
        self.records = []
        if path:
            directory = os.path.dirname(path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            open(path, "w").close()

    def record(self, stage, status, details=None):
        entry = {"stage": stage, "status": status, "details": to_builtin(details or {})}
        self.records.append(entry)
        if self.path:
            with open(self.path, "a") as f:
                f.write(json.dumps(entry, sort_keys=True) + "\n")
        return entry

    def success(self, stage, **details):
        return self.record(stage, "Success", details)

    def error(self, stage, message, error_type):
        return self.record(stage, "Error", {"error": {"message": message, "type": error_type}})


@dataclass
class StageRecord:
    status: str = "Pending"
    wall_time: float = 0.0
    outputs: dict = field(default_factory=dict)
    error: str = None

    def to_dict(self):
        data = {"status": self.status, "wall_time": self.wall_time, "outputs": dict(sorted(self.outputs.items()))}
        if self.error:
            data["error"] = self.error
        return data


@dataclass
class RunManifest:
    """Configuration hash, artifact versions and per-stage timings and output digests."""
    config_hash: str
    config: dict
    stages: dict = field(default_factory=dict)
    package_version: str = __version__
    artifact_versions: dict = field(default_factory=lambda: dict(hooks.artifact_versions))
    audit_log: str = None

    @property
    def completed(self):
        return bool(self.stages) and all(s.status == "Success" for s in self.stages.values())

    @property
    def failed_stage(self):
        for name, stage in self.stages.items():
            if stage.status == "Error":
                return name
        return None

    def digests(self):
        """Stage -> {file: digest}; equal across reruns of the same configuration."""
        return {name: dict(sorted(stage.outputs.items())) for name, stage in self.stages.items()}

    @contextmanager
    def stage(self, name, audit=None):
        """
        Time a stage and record its outcome.

        Yields the stage's output dict; callers add ``file -> digest`` entries.
        A WageGapError marks the stage as failed and propagates.
        """
        record = self.stages.setdefault(name, StageRecord())
        start = time.perf_counter()
        try:
            yield record.outputs
        except WageGapError as e:
            record.status = "Error"
            record.error = e.message
            if audit:
                audit.error(name, e.message, type(e).__name__)
            raise
        finally:
            record.wall_time = time.perf_counter() - start
        record.status = "Success"
        if audit:
            audit.success(name, outputs=sorted(record.outputs))
        logger.info("Stage %s finished in %.2fs", name, record.wall_time)

    def skip(self, names):
        for name in names:
            self.stages.setdefault(name, StageRecord()).status = "Skipped"

    def to_dict(self):
        return {
            "package_version": self.package_version,
            "config_hash": self.config_hash,
            "config": self.config,
            "artifact_versions": dict(self.artifact_versions),
            "stages": {name: stage.to_dict() for name, stage in self.stages.items()},
            "completed": self.completed,
            "failed_stage": self.failed_stage,
            "audit_log": self.audit_log,
        }

    def write(self, path):
        return write_artifact("manifest", self.to_dict(), path)
