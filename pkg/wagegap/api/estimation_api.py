# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import logging

import numpy as np

from . import endpoint
from .data_api import load_panels, read_pair_artifact
from ..core.firmcluster import FirmClassing, classing_stats, compute_ecdfs, extend_classing, gap_statistic, kmeans_classes
from ..core.mixture import MixtureModel, TypeAssignment, fit_movers, fit_stayers, map_assign
from ..utils.artifacts import read_artifact, write_artifact
from ..utils.tables import emit_tables, read_table

logger = logging.getLogger(__name__)


def _prefixed(context, digests):
    return {f"{context.label}/{name}": digest for name, digest in digests.items()}


def cluster_pair(context, config, progress=False):
    """
    Class the firms of one biennial and write the classing.

    Returns:
        dict: ``<pair>/<file> -> digest``
    """
    blind = context.panel.blind()
    ecdfs = compute_ecdfs(blind, ventiles=config.settings.ventiles)
    classing = kmeans_classes(
        ecdfs, config.K, restarts=config.restarts, seed=context.seed(config, "cluster"),
        n_jobs=config.threads, progress=progress,
    )
    context.classing = extend_classing(classing, blind, ecdfs.grid)
    digests = {"classing.json": write_artifact("classing", context.classing.to_dict(), context.path("classing.json"))}
    firm_classes = context.classing.assignment.rename_axis("firm_id").rename("class").reset_index()
    digests.update(emit_tables(
        [("firm_classes", firm_classes), ("class_stats", classing_stats(blind, context.classing))],
        context.directory,
    ))
    return _prefixed(context, digests)


def gapstat_pair(context, config, progress=False):
    """Run the gap statistic on one biennial; kmax is capped at the number of firms."""
    ecdfs = compute_ecdfs(context.panel.blind(), ventiles=config.settings.ventiles)
    kmax = min(config.gap_kmax, ecdfs.n_firms)
    kmin = min(config.gap_kmin, kmax)
    report = gap_statistic(
        ecdfs, k_range=(kmin, kmax), B=config.gap_B, seed=context.seed(config, "gapstat"),
        restarts=config.gap_restarts, n_jobs=config.threads, progress=progress,
    )
    context.results["gap_statistic"] = report
    digests = {"gapstat.json": write_artifact(
        "gap_statistic",
        {"k": report.k, "W": report.W, "gap": report.gap, "s": report.s,
         "chosen_K": report.chosen_K, "reference": report.reference},
        context.path("gapstat.json"),
    )}
    digests.update(emit_tables([("gap_statistic", report.table())], context.directory))
    return _prefixed(context, digests)


def fit_mixture(context, config, L, progress=False):
    """Mover EM then stayer shares, on the gender-blind panel."""
    settings = config.settings
    blind = context.panel.blind()
    movers = fit_movers(
        blind, context.classing, L, reps=config.em_reps, seed=context.seed(config, "estimate"),
        tol=settings.em_tol, max_iter=settings.em_max_iter, sigma_floor=settings.sigma_floor,
        sparse_cell=settings.sparse_cell, n_jobs=config.threads, progress=progress,
    )
    return fit_stayers(blind, context.classing, movers, tol=settings.em_tol, max_iter=settings.em_max_iter)


def estimate_pair(context, config, progress=False):
    context.model = fit_mixture(context, config, config.L, progress)
    return _prefixed(context, {
        "mixture_model.json": write_artifact("mixture_model", context.model.to_dict(), context.path("mixture_model.json")),
    })


def assign_pair(context, config):
    """MAP types for every worker; the panel is blinded before assignment."""
    context.assignment = map_assign(context.panel.blind(), context.classing, context.model)
    return _prefixed(context, emit_tables([("type_assignment", context.assignment.to_frame())], context.directory))


def load_classing(context, path=None):
    """The classing written for this biennial, or the stored classing at ``path``."""
    record = read_artifact(path, "classing") if path else read_pair_artifact(context, "classing")
    context.classing = FirmClassing.from_dict(record, firm_id_type=_firm_id_type(context))
    return context.classing


def load_model(context):
    context.model = MixtureModel.from_dict(read_pair_artifact(context, "mixture_model"))
    return context.model


def load_assignment(context):
    _, frame = read_table(context.path("type_assignment.csv"), "type_assignment")
    frame["worker_id"] = frame["worker_id"].astype(context.panel.frame["worker_id"].dtype)
    context.assignment = TypeAssignment.from_frame(frame)
    return context.assignment


def _firm_id_type(context):
    if context.panel.n_workers and not np.issubdtype(context.panel.frame["firm_id_1"].dtype, np.integer):
        return str
    return int


@endpoint
def cluster(config, progress=False):
    files = {}
    for context in load_panels(config):
        files.update(cluster_pair(context, config, progress))
    return {"files": files}


@endpoint
def gapstat(config, progress=False):
    files, chosen = {}, {}
    for context in load_panels(config):
        files.update(gapstat_pair(context, config, progress))
        chosen[context.label] = context.results["gap_statistic"].chosen_K
    return {"files": files, "chosen_K": chosen}


@endpoint
def estimate(config, progress=False):
    """
    Fit the mixture on every biennial.

    With ``config.classing`` set, that stored classing replaces the one the
    cluster stage wrote and is copied into the biennial's directory so the
    later stages use it too.
    """
    files = {}
    for context in load_panels(config):
        load_classing(context, config.classing)
        if config.classing:
            files.update(_prefixed(context, {"classing.json": write_artifact(
                "classing", context.classing.to_dict(), context.path("classing.json"),
            )}))
        files.update(estimate_pair(context, config, progress))
    return {"files": files}


@endpoint
def assign(config):
    files = {}
    for context in load_panels(config):
        load_classing(context)
        load_model(context)
        files.update(assign_pair(context, config))
    return {"files": files}
