# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import logging

import numpy as np
import pandas as pd

from . import endpoint
from .data_api import load_panels
from .estimation_api import _prefixed, fit_mixture, load_assignment, load_classing
from ..core.counterfactual import (
    POOLED, decompose_gap, match_moments, payment_schedules, random_reallocation, subgroup_decompose,
)
from ..core.exceptions import ConfigError
from ..core.firmcluster import compute_ecdfs, extend_classing, kmeans_classes
from ..core.mixture import map_assign, type_proportions
from ..utils.artifacts import write_artifact
from ..utils.decompose import (
    blm_fit, cakm_fit, cakm_kob, mincer_kob, theil_by_tier, theil_index, variance_decomposition,
)
from ..utils.graph import (
    TOY_DESIGN, connected_sets, connectivity_simulation, exact_lmb_bias, largest_dual_connected, ldcs_summary,
    mobility_symmetry_diagnostic, mover_graph, plugin_bias_monte_carlo,
)
from ..utils.tables import emit_tables

logger = logging.getLogger(__name__)

GRAPH_TASKS = ("components", "ldcs", "bias", "connectivity", "exomobility")


def _variance_row(label, fit):
    report = variance_decomposition(fit)
    return {"label": label, "var_w": report.var_w, **report.components,
            "identity_error": report.identity_error, "n": report.n}


def _kob_row(label, report):
    return {"label": label, **report.to_dict()}


def _kob_frame(rows):
    frame = pd.DataFrame(rows)
    return frame.drop(columns=["dropped_columns"], errors="ignore")


def _proportions_frame(proportions):
    rows = []
    for gender, tables in proportions.items():
        for l, share in tables["type"].items():
            rows.append({"gender": gender, "kind": "type", "k": None, "l": int(l), "share": float(share)})
        for k, share in tables["class"].items():
            rows.append({"gender": gender, "kind": "class", "k": int(k), "l": None, "share": float(share)})
        conditional = tables["type_given_class"]
        for k in conditional.index:
            for l in conditional.columns:
                rows.append({"gender": gender, "kind": "type_given_class", "k": int(k), "l": int(l),
                             "share": float(conditional.loc[k, l])})
    return pd.DataFrame(rows)


def decompose_pair(context, config):
    """
    KOB decompositions, variance decompositions, Theil indices and type shares.

    Runs after MAP assignment, so gender is read here. Only the kinds listed
    in ``config.decompose_kinds`` are computed; type shares are always
    written. Results are kept on the context for the weighted averages
    across biennials.
    """
    panel, classing, assignment = context.panel, context.classing, context.assignment
    kinds = config.decompose_kinds
    kob_reports, variance_rows, tables = {}, [], []

    if "mincer" in kinds:
        kob_reports["mincer"] = mincer_kob(panel)
        kob_reports["mincer_male_reference"] = mincer_kob(panel, reference="male")
    if "cakm" in kinds:
        fits = {gender: cakm_fit(panel, classing, gender) for gender in ("F", "M")}
        kob_reports["cakm"] = cakm_kob(fits["F"], fits["M"])
        context.results["fits"] = fits
    if kob_reports:
        tables.append(("kob", _kob_frame([_kob_row(label, report) for label, report in kob_reports.items()])))

    if "variance" in kinds:
        variance_rows = [
            _variance_row("cakm", cakm_fit(panel, classing)),
            _variance_row("blm", blm_fit(panel, classing, assignment)),
        ]
        tables.append(("variance_decomposition", pd.DataFrame(variance_rows)))

    if "theil" in kinds:
        counts = match_moments(panel, classing, assignment, low_support=config.settings.low_support).count[POOLED]
        tiers = theil_by_tier(counts)
        tables.append(("theil", pd.DataFrame([
            {"tier": "all", "theil": theil_index(counts)},
            {"tier": "low", "theil": tiers["low"]},
            {"tier": "high", "theil": tiers["high"]},
        ])))

    context.results.update(kob=kob_reports, variance=variance_rows)
    tables.append(("type_proportions", _proportions_frame(type_proportions(panel, classing, assignment))))

    if config.robustness_K and "cakm" in kinds:
        tables.append(("variance_decomposition", robustness_over_K(context, config), "robustness_K"))
    return _prefixed(context, emit_tables(tables, context.directory))


def robustness_over_K(context, config):
    """Clustered-AKM variance decomposition for each K in ``robustness_K``."""
    ecdfs = compute_ecdfs(context.panel.blind(), ventiles=config.settings.ventiles)
    rows = []
    for K in config.robustness_K:
        if K > ecdfs.n_firms:
            logger.warning("Skipping K=%d: only %d firms", K, ecdfs.n_firms)
            continue
        classing = kmeans_classes(ecdfs, K, restarts=config.restarts, seed=context.seed(config, "cluster"),
                                  n_jobs=config.threads)
        classing = extend_classing(classing, context.panel.blind(), ecdfs.grid)
        rows.append(_variance_row(f"K={K}", cakm_fit(context.panel, classing)))
    return pd.DataFrame(rows, columns=["label", "var_w", "var_firm", "var_worker", "var_xb", "cov_worker_firm",
                                       "cov_worker_xb", "cov_firm_xb", "var_resid", "identity_error", "n"])


def counterfactual_pair(context, config, progress=False):
    """
    Gap decomposition of the whole biennial and of each configured subgroup.

    Also writes match moments, payment schedules, the random reallocation
    scenario and, when ``robustness_L`` is set, the decomposition re-estimated
    for each number of types.
    """
    panel, classing, assignment = context.panel, context.classing, context.assignment
    seed = context.seed(config, "counterfactual")
    moments = match_moments(panel, classing, assignment, low_support=config.settings.low_support)
    overall = decompose_gap(
        moments, mode=config.counterfactual_mode, draws=config.counterfactual_draws, seed=seed,
        method=config.separable_method,
    )
    results = [overall]
    skipped = {}
    for by in config.subgroups:
        groups, missing = subgroup_decompose(
            panel, classing, assignment, by, mode=config.counterfactual_mode,
            draws=config.counterfactual_draws, seed=seed, method=config.separable_method, n_jobs=config.threads,
        )
        results.extend(groups)
        if missing:
            skipped[by] = missing
    context.results.update(decomposition=overall, subgroups=results[1:], skipped=skipped)

    random = random_reallocation(moments)
    reallocation = pd.DataFrame([
        {"scenario": "observed", "F": moments.expected_wage("F"), "M": moments.expected_wage("M"),
         "gap": moments.expected_wage("F") - moments.expected_wage("M")},
        {"scenario": "random", "F": random["F"], "M": random["M"], "gap": random["gap"]},
    ])

    tables = [
        ("gap_decomposition", pd.DataFrame([result.row() for result in results])),
        ("match_moments", moments.table()),
        ("payment_schedules", payment_schedules(moments)),
        ("reallocation", reallocation),
    ]
    if config.robustness_L:
        tables.append(("gap_decomposition", sensitivity_over_L(context, config, progress), "robustness_L"))
    return _prefixed(context, emit_tables(tables, context.directory))


def sensitivity_over_L(context, config, progress=False):
    """Re-estimate the mixture for each L in ``robustness_L`` and decompose again."""
    rows = []
    for L in config.robustness_L:
        model = fit_mixture(context, config, L, progress)
        assignment = map_assign(context.panel.blind(), context.classing, model)
        moments = match_moments(context.panel, context.classing, assignment, low_support=config.settings.low_support)
        result = decompose_gap(
            moments, mode=config.counterfactual_mode, draws=config.counterfactual_draws,
            seed=context.seed(config, "counterfactual"), method=config.separable_method, group=f"L={L}",
        )
        rows.append(result.row())
    return pd.DataFrame(rows)


def components_pair(context):
    sets = connected_sets(mover_graph(context.panel))
    rows = [
        {"firm_id": firm, "component": index + 1, "size": len(members), "largest": index == 0}
        for index, members in enumerate(sets) for firm in members
    ]
    digests = emit_tables([("components", pd.DataFrame(rows))], context.directory)
    digests["connected_sets.json"] = write_artifact(
        "components", {"sets": sets, "largest": sets[0] if sets else []}, context.path("connected_sets.json"),
    )
    return _prefixed(context, digests)


def ldcs_pair(context):
    graph = mover_graph(context.panel)
    result = largest_dual_connected(context.panel, graph)
    context.results["ldcs"] = result
    return _prefixed(context, emit_tables([("ldcs_summary", ldcs_summary(context.panel, result.firms))],
                                          context.directory))


def exomobility_pair(context):
    fits = context.results.get("fits")
    if fits is None:
        fits = {gender: cakm_fit(context.panel, context.classing, gender) for gender in ("F", "M")}
    table = mobility_symmetry_diagnostic([fits["F"], fits["M"]], context.panel)
    return _prefixed(context, emit_tables([("exomobility", table)], context.directory))


def graph_pair(context, config):
    """Connected sets, LDCS summary and, with classes, the mobility symmetry table."""
    digests = {}
    digests.update(components_pair(context))
    digests.update(ldcs_pair(context))
    if context.classing is not None:
        digests.update(exomobility_pair(context))
    return digests


def bias_report(config, out, sigma2=1.0, quadratic="var_firm", design=None, mc_reps=0):
    """
    Exact limited-mobility bias of a small design, optionally checked by Monte Carlo.

    Args:
        design (list, optional): (worker, firm) pairs; the three-firm toy design when omitted
        mc_reps (int, optional): Monte Carlo replications; 0 skips the check
    """
    result = exact_lmb_bias(design or TOY_DESIGN, sigma2, quadratic)
    record = {"quadratic": quadratic, "sigma2": sigma2, "xi": result.xi,
              "workers": len(result.workers), "firms": len(result.firms)}
    if mc_reps:
        gamma = np.linspace(-0.5, 0.5, result.A.shape[1])
        record["monte_carlo"] = plugin_bias_monte_carlo(result, gamma, reps=mc_reps, seed=config.stage_seed("graph"))
    digest = write_artifact("bias", record, f"{out}/bias.json")
    return record, {"bias.json": digest}


def connectivity_report(config, out, firm_sizes, move_prob, reps, progress=False):
    result = connectivity_simulation(firm_sizes, move_prob, reps, seed=config.stage_seed("graph"),
                                     n_jobs=config.threads, progress=progress)
    return result, emit_tables([("connectivity", result.table())], out)


@endpoint
def decompose(config):
    files = {}
    for context in load_panels(config):
        load_classing(context)
        load_assignment(context)
        files.update(decompose_pair(context, config))
    return {"files": files}


@endpoint
def counterfactual(config, progress=False):
    files, skipped = {}, {}
    for context in load_panels(config):
        load_classing(context)
        load_assignment(context)
        files.update(counterfactual_pair(context, config, progress))
        if context.results["skipped"]:
            skipped[context.label] = context.results["skipped"]
    return {"files": files, "skipped": skipped}


@endpoint
def graph(config, task, sigma2=1.0, quadratic="var_firm", design=None, mc_reps=0,
          firm_sizes=(5, 20, 80, 320), move_prob=0.02, reps=1000, progress=False):
    """
    Run one mobility-graph task.

    Args:
        task (str): components, ldcs, bias, connectivity or exomobility

    Returns:
        dict: Written files and the task's headline numbers
    """
    if task not in GRAPH_TASKS:
        raise ConfigError(f"Unknown graph task {task!r}; use one of {GRAPH_TASKS}")
    if task == "bias":
        record, files = bias_report(config, config.out, sigma2, quadratic, design, mc_reps)
        return {"files": files, "xi": record["xi"], "monte_carlo": record.get("monte_carlo")}
    if task == "connectivity":
        result, files = connectivity_report(config, config.out, firm_sizes, move_prob, reps, progress)
        return {"files": files, "inclusion_frequency": result.inclusion_frequency.tolist()}

    files, diagnostics = {}, {}
    for context in load_panels(config):
        if task == "components":
            files.update(components_pair(context))
        elif task == "ldcs":
            files.update(ldcs_pair(context))
            if context.results["ldcs"].diagnostic:
                diagnostics[context.label] = context.results["ldcs"].diagnostic
        else:
            load_classing(context)
            files.update(exomobility_pair(context))
    return {"files": files, "diagnostics": diagnostics}

