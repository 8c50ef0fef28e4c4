# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import argparse
import logging
import os
import sys

import pandas as pd

from . import __version__, hooks
from .api.analysis_api import GRAPH_TASKS, counterfactual, decompose, graph
from .api.data_api import simulate, summary
from .api.estimation_api import assign, cluster, estimate, gapstat
from .api.pipeline_api import pipeline
from .config.settings import PipelineConfig, parse_list
from .core.exceptions import DataError, WageGapError
from .utils.artifacts import dumps

logger = logging.getLogger(__name__)

# subcommands that run without input data or a market spec
DATA_FREE_TASKS = ("bias", "connectivity")

# argparse destinations that override PipelineConfig fields
CONFIG_OVERRIDES = (
    "out", "threads", "seed", "K", "L", "input", "restarts", "gap_kmin", "gap_kmax", "gap_B", "em_reps",
    "classing", "decompose_kinds", "subgroups", "counterfactual_mode", "counterfactual_draws",
)

PLAIN_HANDLERS = {"simulate": simulate, "summary": summary, "assign": assign, "decompose": decompose}
PROGRESS_HANDLERS = {
    "cluster": cluster,
    "gapstat": gapstat,
    "estimate": estimate,
    "counterfactual": counterfactual,
    "pipeline": pipeline,
}


def _global_options():
    parent = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    parent.add_argument("--config", help="flat key=value configuration file")
    parent.add_argument("--out", help="output directory")
    parent.add_argument("--threads", type=int, help="worker processes")
    parent.add_argument("--seed", type=int, help="global seed deriving every stage seed")
    parent.add_argument("--K", type=int, dest="K", help="number of firm classes")
    parent.add_argument("--L", type=int, dest="L", help="number of worker types")
    parent.add_argument("--progress", action="store_true", help="show progress bars")
    noise = parent.add_mutually_exclusive_group()
    noise.add_argument("-v", "--verbose", action="store_true")
    noise.add_argument("--quiet", action="store_true")
    return parent


def _stage_parser(commands, name, parent, text):
    return commands.add_parser(name, parents=[parent], help=text, argument_default=argparse.SUPPRESS)


def build_parser():
    parent = _global_options()
    parser = argparse.ArgumentParser(
        prog="wagegap", parents=[parent],
        description="Two-sided latent heterogeneity decomposition of gender wage gaps",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("simulate", parents=[parent], help="generate a synthetic market")
    commands.add_parser("summary", parents=[parent], help="descriptive statistics by gender")

    cluster_parser = _stage_parser(commands, "cluster", parent, "k-means firm classes")
    cluster_parser.add_argument("--k", type=int, dest="K", help="number of firm classes")
    cluster_parser.add_argument("--restarts", type=int, help="k-means restarts")
    cluster_parser.add_argument("--input", help="delimited observation file")

    gap_parser = _stage_parser(commands, "gapstat", parent, "choose K with the gap statistic")
    gap_parser.add_argument("--kmin", type=int, dest="gap_kmin")
    gap_parser.add_argument("--kmax", type=int, dest="gap_kmax")
    gap_parser.add_argument("--B", type=int, dest="gap_B", help="reference draws")

    estimate_parser = _stage_parser(commands, "estimate", parent, "fit the worker type mixture")
    estimate_parser.add_argument("--reps", type=int, dest="em_reps", help="EM restarts")
    estimate_parser.add_argument("--classing", help="stored classing artifact to estimate on")

    commands.add_parser("assign", parents=[parent], help="MAP worker types")

    decompose_parser = _stage_parser(commands, "decompose", parent, "KOB and variance decompositions")
    decompose_parser.add_argument("--kind", action="append", dest="decompose_kinds",
                                  choices=PipelineConfig.DECOMPOSE_KINDS, help="repeatable; every kind when omitted")

    counterfactual_parser = _stage_parser(commands, "counterfactual", parent, "complementarity, sorting and bargaining")
    counterfactual_parser.add_argument("--by", dest="subgroups", type=lambda value: parse_list(value, "by", cast=str),
                                       help="comma separated subgroup filters")
    counterfactual_parser.add_argument("--mode", dest="counterfactual_mode", choices=PipelineConfig.MODES)
    counterfactual_parser.add_argument("--draws", type=int, dest="counterfactual_draws")

    commands.add_parser("pipeline", parents=[parent], help="run every stage and write the manifest")

    graph_parser = commands.add_parser("graph", parents=[parent], help="mobility graph diagnostics")
    graph_parser.add_argument("task", choices=GRAPH_TASKS)
    graph_parser.add_argument("--sigma2", type=float, default=1.0, help="noise variance for bias")
    graph_parser.add_argument("--quadratic", choices=("var_firm", "cov_worker_firm"), default="var_firm")
    graph_parser.add_argument("--design", help="CSV of worker,firm rows for bias; the toy design when omitted")
    graph_parser.add_argument("--mc-reps", type=int, default=0, help="Monte Carlo check of the bias")
    graph_parser.add_argument("--sizes", default="5,20,80,320", help="firm sizes for connectivity")
    graph_parser.add_argument("--move-prob", type=float, default=0.02)
    graph_parser.add_argument("--reps", type=int, default=1000)
    return parser


def configure_logging(args):
    level = logging.INFO
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    logging.basicConfig(level=level, format=hooks.log_format)


def load_config(args):
    overrides = {name: getattr(args, name, None) for name in CONFIG_OVERRIDES}
    require_data = not (args.command == "graph" and args.task in DATA_FREE_TASKS)
    return PipelineConfig.from_file(getattr(args, "config", None), overrides, require_data=require_data)


def _read_design(path):
    if not os.path.exists(path):
        raise DataError(f"Design file not found: {path}")
    frame = pd.read_csv(path)
    if not {"worker", "firm"} <= set(frame.columns):
        raise DataError("A bias design needs worker and firm columns")
    return list(zip(frame["worker"], frame["firm"]))


def dispatch(args, config):
    progress = getattr(args, "progress", False)
    command = args.command
    if command == "graph":
        return graph(
            config, args.task, sigma2=args.sigma2, quadratic=args.quadratic,
            design=_read_design(args.design) if args.design else None, mc_reps=args.mc_reps,
            firm_sizes=parse_list(args.sizes, "sizes", cast=int), move_prob=args.move_prob,
            reps=args.reps, progress=progress,
        )
    if command in PLAIN_HANDLERS:
        return PLAIN_HANDLERS[command](config)
    return PROGRESS_HANDLERS[command](config, progress=progress)


def main(argv=None):
    """
    Command-line entry point.

    Returns:
        int: 0 on success, 2 for configuration, 3 for data and 4 for numerical errors
    """
    args = build_parser().parse_args(argv)
    configure_logging(args)
    try:
        config = load_config(args)
        result = dispatch(args, config)
    except WageGapError as e:
        logger.error(e.message)
        return e.exit_code

    sys.stdout.write(dumps(result))
    if not result.get("success"):
        logger.error("%s failed: %s", args.command, result.get("error"))
    return result.get("exit_code", hooks.exit_codes["success"])


if __name__ == "__main__":
    sys.exit(main())
