# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import logging
import os

import pandas as pd

from . import endpoint
from .analysis_api import counterfactual_pair, decompose_pair, graph_pair
from .data_api import load_panels
from .estimation_api import assign_pair, cluster_pair, estimate_pair, gapstat_pair
from .. import hooks
from ..core.exceptions import WageGapError
from ..utils.audit import AuditLog, RunManifest
from ..utils.decompose import weighted_average
from ..utils.tables import emit_tables

logger = logging.getLogger(__name__)

AUDIT_FILE = "audit.jsonl"
MANIFEST_FILE = "manifest.json"
AVERAGES_DIR = "weighted"


def _stage_plan(config):
    first = "simulate" if config.market_spec else "ingest"
    stages = [first] + [s for s in hooks.pipeline_stages if s != "simulate"]
    if not config.run_gapstat:
        stages.remove("gapstat")
    return stages


def _weighted_tables(contexts):
    """Averages across biennials weighted by worker-years."""
    weights = [2 * context.panel.n_workers for context in contexts]
    decomposition = weighted_average([c.results["decomposition"].row() for c in contexts], weights)
    decomposition["group"] = "weighted"

    kob_rows = []
    for label in contexts[0].results["kob"]:
        row = weighted_average([c.results["kob"][label].to_dict() for c in contexts], weights)
        row.update(label=label, kind=contexts[0].results["kob"][label].kind)
        kob_rows.append(row)

    variance_rows = []
    for index, first in enumerate(contexts[0].results["variance"]):
        row = weighted_average([c.results["variance"][index] for c in contexts], weights)
        row["label"] = first["label"]
        variance_rows.append(row)

    tables = [("gap_decomposition", pd.DataFrame([decomposition]))]
    if kob_rows:
        tables.append(("kob", pd.DataFrame(kob_rows).drop(columns=["n_female", "n_male"], errors="ignore")))
    if variance_rows:
        tables.append(("variance_decomposition", pd.DataFrame(variance_rows).drop(columns=["n"], errors="ignore")))
    return tables


def run_pipeline(config, progress=False):
    """
    Run every stage in order and write the manifest.

    Stages run one after the other over all biennials: data preparation,
    firm classing, the optional gap statistic, mixture estimation, MAP
    assignment, decompositions, counterfactuals and the mobility graph.
    Every stage before assignment sees gender-blind panels. When a stage
    fails the manifest records it, later stages are marked skipped and the
    error is raised again.

    Args:
        config (PipelineConfig): Validated configuration
        progress (bool, optional): Show progress bars

    Returns:
        RunManifest: Timings and output digests of every stage
    """
    os.makedirs(config.out, exist_ok=True)
    audit = AuditLog(os.path.join(config.out, AUDIT_FILE))
    manifest = RunManifest(config_hash=config.config_hash(), config=config.to_dict(), audit_log=AUDIT_FILE)
    plan = _stage_plan(config)
    per_pair = {
        "cluster": lambda c: cluster_pair(c, config, progress),
        "gapstat": lambda c: gapstat_pair(c, config, progress),
        "estimate": lambda c: estimate_pair(c, config, progress),
        "assign": lambda c: assign_pair(c, config),
        "decompose": lambda c: decompose_pair(c, config),
        "counterfactual": lambda c: counterfactual_pair(c, config, progress),
        "graph": lambda c: graph_pair(c, config),
    }

    contexts = []
    done = 0
    try:
        for stage in plan:
            with manifest.stage(stage, audit) as outputs:
                if stage in ("simulate", "ingest"):
                    contexts = load_panels(config, outputs)
                else:
                    for context in contexts:
                        outputs.update(per_pair[stage](context))
                    if stage == "counterfactual" and len(contexts) > 1:
                        digests = emit_tables(_weighted_tables(contexts), os.path.join(config.out, AVERAGES_DIR))
                        outputs.update({f"{AVERAGES_DIR}/{name}": digest for name, digest in digests.items()})
            done += 1
    except WageGapError:
        manifest.skip(plan[done + 1:])
        manifest.write(os.path.join(config.out, MANIFEST_FILE))
        raise

    manifest.write(os.path.join(config.out, MANIFEST_FILE))
    logger.info("Pipeline finished: %d stages, config %s", len(plan), manifest.config_hash[:12])
    return manifest


@endpoint
def pipeline(config, progress=False):
    manifest = run_pipeline(config, progress)
    return {"manifest": os.path.join(config.out, MANIFEST_FILE), "digests": manifest.digests()}
