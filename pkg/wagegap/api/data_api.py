# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import logging
import os
from dataclasses import dataclass, field

from . import endpoint
from ..config.settings import derive_seed
from ..core.exceptions import ConfigError, DataError
from ..utils.artifacts import read_artifact, write_artifact
from ..utils.panel import build_biennials, clean_contracts, read_observations, summary_stats, summary_table, write_observations
from ..utils.synth import MarketSpec, generate_market
from ..utils.tables import emit_tables

logger = logging.getLogger(__name__)

OBSERVATIONS_FILE = "observations.csv"


def market_spec(config):
    """The configured MarketSpec; an explicit seed.simulate replaces the seed of the spec file."""
    spec = MarketSpec.from_file(config.market_spec)
    if "simulate" in config.seeds:
        spec.seed = config.seeds["simulate"]
    return spec


@dataclass
class PairContext:
    """A biennial panel with its output directory and the results derived so far."""
    panel: object
    directory: str
    classing: object = None
    model: object = None
    assignment: object = None
    results: dict = field(default_factory=dict)

    @property
    def label(self):
        return "{}_{}".format(*self.panel.year_pair)

    def path(self, name):
        return os.path.join(self.directory, name)

    def seed(self, config, stage):
        """Stage seed specialised to this biennial."""
        return derive_seed(config.stage_seed(stage), self.panel.year_pair[0])


def load_panels(config, outputs=None):
    """
    Build the biennial panels a configuration describes.

    A configured ``market_spec`` generates one synthetic biennial and writes
    its ground truth; otherwise ``input`` is read, cleaned and split into the
    configured pairs with the ingestion report written next to them.

    Args:
        config (PipelineConfig): Run configuration
        outputs (dict, optional): Collects ``file -> digest`` of written files

    Returns:
        list: PairContext per non-empty biennial
    """
    outputs = {} if outputs is None else outputs
    os.makedirs(config.out, exist_ok=True)
    settings = config.settings

    if config.market_spec:
        panel, truth = generate_market(market_spec(config))
        outputs["ground_truth.json"] = write_artifact(
            "ground_truth", truth.to_dict(), os.path.join(config.out, "ground_truth.json"),
        )
        panels = [panel]
    else:
        if not config.input:
            raise ConfigError("Either input or market_spec must be configured")
        raw = read_observations(config.input, config.column_map, config.delimiter)
        observations, report = clean_contracts(raw, hours_min=settings.hours_min)
        outputs["ingestion_report.json"] = write_artifact(
            "ingestion_report", report.to_dict(), os.path.join(config.out, "ingestion_report.json"),
        )
        panels = build_biennials(observations, config.pairs, ratio_min=settings.gender_ratio_min)

    contexts = []
    for panel in panels:
        if panel.is_empty:
            continue
        context = PairContext(panel=panel, directory=os.path.join(config.out, "{}_{}".format(*panel.year_pair)))
        os.makedirs(context.directory, exist_ok=True)
        contexts.append(context)
    if not contexts:
        raise DataError("No biennial panel has surviving workers")
    return contexts


@endpoint
def simulate(config):
    """
    Generate a synthetic market and write its observations and ground truth.

    Returns:
        dict: Written files with their digests
    """
    if not config.market_spec:
        raise ConfigError("simulate needs market_spec")
    panel, truth = generate_market(market_spec(config))

    os.makedirs(config.out, exist_ok=True)
    observations = os.path.join(config.out, OBSERVATIONS_FILE)
    write_observations(panel.long(), observations, config.delimiter)
    digest = write_artifact("ground_truth", truth.to_dict(), os.path.join(config.out, "ground_truth.json"))
    logger.info("Wrote %d worker-years to %s", 2 * panel.n_workers, observations)
    return {"observations": observations, "files": {"ground_truth.json": digest}, "workers": panel.n_workers}


@endpoint
def summary(config):
    """Write descriptive statistics by gender for every biennial."""
    files = {}
    for context in load_panels(config, files):
        table = summary_table(summary_stats(context.panel))
        for name, digest in emit_tables([("summary", table)], context.directory).items():
            files[f"{context.label}/{name}"] = digest
    return {"files": files}


def read_pair_artifact(context, name, filename=None):
    return read_artifact(context.path(filename or f"{name}.json"), name)
