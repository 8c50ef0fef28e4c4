# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ..core.exceptions import ConfigError, DataError, DisconnectedGraphError
from .panel import GENDERS
from .parallel import ordered_map

logger = logging.getLogger(__name__)

MAX_BIAS_COLUMNS = 2000
CHUNK_SIZE = 500

# three firms in a ring of movers plus one stayer per firm, two years each
TOY_DESIGN = [
    (1, 1), (1, 2),
    (2, 2), (2, 3),
    (3, 3), (3, 1),
    (4, 1), (4, 1),
    (5, 2), (5, 2),
    (6, 3), (6, 3),
]


@dataclass
class MobilityGraph:
    """
    Undirected firm graph; an edge joins the two firms of each mover.

    ``edges`` has columns a, b (a < b) and count. ``gender_edges`` holds the
    same table per gender when the panel carries gender.
    """
    firm_ids: np.ndarray
    edges: pd.DataFrame
    gender_edges: dict = field(default_factory=dict)

    def subgraph(self, gender=None, firms=None):
        edges = self.edges if gender is None else self.gender_edges.get(gender, _empty_edges())
        firm_ids = self.firm_ids if firms is None else np.sort(np.asarray(list(firms)))
        if firms is not None:
            edges = edges[edges["a"].isin(firm_ids) & edges["b"].isin(firm_ids)]
        return MobilityGraph(firm_ids=firm_ids, edges=edges.reset_index(drop=True))


def _empty_edges():
    return pd.DataFrame({"a": pd.Series(dtype=object), "b": pd.Series(dtype=object), "count": pd.Series(dtype=int)})


def _edge_table(first, second):
    if len(first) == 0:
        return _empty_edges()
    low = np.where(first <= second, first, second)
    high = np.where(first <= second, second, first)
    table = pd.DataFrame({"a": low, "b": high}).groupby(["a", "b"], sort=True).size().rename("count")
    return table.reset_index()


def mover_graph(panel):
    """
    Mobility graph of a biennial panel.

    Args:
        panel (BiennialPanel): Balanced panel

    Returns:
        MobilityGraph: Firms of both periods and mover edges, overall and per gender
    """
    frame = panel.frame
    firm_ids = np.union1d(frame["firm_id_1"].to_numpy(), frame["firm_id_2"].to_numpy())
    movers = frame[frame["mover"]]
    graph = MobilityGraph(
        firm_ids=firm_ids,
        edges=_edge_table(movers["firm_id_1"].to_numpy(), movers["firm_id_2"].to_numpy()),
    )
    if "gender" in frame.columns:
        for gender in GENDERS:
            part = movers[movers["gender"] == gender]
            graph.gender_edges[gender] = _edge_table(part["firm_id_1"].to_numpy(), part["firm_id_2"].to_numpy())
    return graph


def connected_sets(graph):
    """
    Partition the firms of a graph into connected sets.

    Sets are sorted by decreasing size, then by smallest firm id; the first
    one is the largest connected set.

    Returns:
        list: Lists of firm ids
    """
    n = len(graph.firm_ids)
    if n == 0:
        return []
    index = pd.Series(np.arange(n), index=graph.firm_ids)
    rows = index.loc[graph.edges["a"]].to_numpy() if len(graph.edges) else np.array([], dtype=int)
    cols = index.loc[graph.edges["b"]].to_numpy() if len(graph.edges) else np.array([], dtype=int)
    matrix = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    _, labels = connected_components(matrix, directed=False)

    groups = {}
    for firm, label in zip(graph.firm_ids, labels):
        groups.setdefault(label, []).append(firm)
    components = [sorted(group) for group in groups.values()]
    return sorted(components, key=lambda group: (-len(group), group[0]))


@dataclass
class DualConnectedSet:
    firms: list
    iterations: int
    diagnostic: str = ""


def largest_dual_connected(panel, graph=None):
    """
    Largest set of firms connected by movers of each gender separately.

    Intersects the largest connected set of the male and of the female mover
    graph, restricts both graphs to the intersection and repeats until the
    set no longer changes.

    Args:
        panel (BiennialPanel): Panel with gender
        graph (MobilityGraph, optional): Precomputed mover graph

    Returns:
        DualConnectedSet: Sorted firm ids, possibly empty with a diagnostic
    """
    if panel.is_blind:
        raise DataError("largest_dual_connected needs the gender column")
    graph = graph or mover_graph(panel)
    present = set(panel.frame["gender"])
    if not set(GENDERS) <= present:
        return DualConnectedSet(firms=[], iterations=0, diagnostic="One gender is absent from the panel")

    firms = set(graph.firm_ids.tolist())
    iterations = 0
    while True:
        iterations += 1
        largest = []
        for gender in GENDERS:
            sets = connected_sets(graph.subgraph(gender, firms))
            largest.append(set(sets[0]) if sets else set())
        common = largest[0] & largest[1]
        if common == firms or not common:
            firms = common
            break
        firms = common

    if not firms:
        message = "The largest connected sets of the two genders do not overlap"
        logger.warning(message)
        return DualConnectedSet(firms=[], iterations=iterations, diagnostic=message)
    return DualConnectedSet(firms=sorted(firms), iterations=iterations)


def ldcs_summary(panel, firms):
    """
    Compare the full sample with the workers employed in a firm set in both periods.

    Returns:
        pandas.DataFrame: One row per sample with worker, firm, size and wage figures
    """
    firms = set(firms)
    inside = panel.frame["firm_id_1"].isin(firms) & panel.frame["firm_id_2"].isin(firms)
    rows = []
    for name, part in (("full", panel), ("ldcs", panel.subset(inside))):
        long = part.long()
        if len(long) == 0:
            rows.append({"sample": name, "workers": 0, "firms": 0})
            continue
        sizes = long.groupby(["period", "firm_id"]).size()
        by_gender = long.groupby("gender")["log_wage"].mean()
        rows.append({
            "sample": name,
            "workers": int(part.n_workers),
            "firms": int(long["firm_id"].nunique()),
            "mean_firm_size": float(sizes.mean()),
            "median_firm_size": float(sizes.median()),
            "mean_log_wage": float(long["log_wage"].mean()),
            "sd_log_wage": float(long["log_wage"].std(ddof=0)),
            "gender_gap": float(by_gender.get("F", np.nan) - by_gender.get("M", np.nan)),
        })
    return pd.DataFrame(rows)


@dataclass
class BiasComputation:
    """
    Design of a worker and firm effects regression and the exact plug-in bias.

    Columns of ``A`` are worker dummies followed by firm dummies without the
    first firm. ``Q`` is the quadratic form whose plug-in estimate is biased.
    """
    A: np.ndarray
    Q: np.ndarray
    sigma2: float
    xi: float
    workers: list
    firms: list
    quadratic: str = "var_firm"


def effects_design(observations):
    """
    Incidence design of worker and firm effects.

    Args:
        observations (list): (worker, firm) pairs, one per worker-year

    Returns:
        tuple: (A, worker ids, firm ids)
    """
    frame = pd.DataFrame(list(observations), columns=["worker", "firm"])
    workers = sorted(frame["worker"].unique())
    firms = sorted(frame["firm"].unique())
    n_cols = len(workers) + len(firms) - 1
    if n_cols > MAX_BIAS_COLUMNS:
        raise ConfigError(f"Design has {n_cols} columns; the exact bias is limited to {MAX_BIAS_COLUMNS}")

    A = np.zeros((len(frame), n_cols))
    worker_index = {w: i for i, w in enumerate(workers)}
    firm_index = {f: len(workers) + i - 1 for i, f in enumerate(firms)}
    for row, (w, f) in enumerate(zip(frame["worker"], frame["firm"])):
        A[row, worker_index[w]] = 1.0
        if f != firms[0]:
            A[row, firm_index[f]] = 1.0
    return A, workers, firms


def quadratic_form(A, n_workers, quadratic="var_firm"):
    """
    Q such that gamma' Q gamma is the variance of firm effects, or the
    covariance of worker and firm effects, across observations.
    """
    n = A.shape[0]
    select_worker = np.zeros_like(A)
    select_worker[:, :n_workers] = A[:, :n_workers]
    select_firm = np.zeros_like(A)
    select_firm[:, n_workers:] = A[:, n_workers:]
    demean = np.eye(n) - np.full((n, n), 1.0 / n)
    if quadratic == "var_firm":
        return select_firm.T @ demean @ select_firm / n
    if quadratic == "cov_worker_firm":
        cross = select_worker.T @ demean @ select_firm / n
        return 0.5 * (cross + cross.T)
    raise ConfigError(f"Unknown quadratic form {quadratic!r}")


def exact_lmb_bias(observations, sigma2, quadratic="var_firm"):
    """
    Exact limited-mobility bias of a plug-in variance component.

    With homoskedastic noise of variance ``sigma2`` the plug-in estimate
    gamma_hat' Q gamma_hat overstates gamma' Q gamma by
    sigma2 * trace(Q (A'A)^-1).

    Args:
        observations (list): (worker, firm) pairs
        sigma2 (float): Noise variance
        quadratic (str, optional): var_firm or cov_worker_firm

    Returns:
        BiasComputation: Design, quadratic form and the bias xi

    Raises:
        DisconnectedGraphError: If A'A is singular
    """
    if sigma2 < 0:
        raise ConfigError("sigma2 must be non-negative")
    A, workers, firms = effects_design(observations)
    Q = quadratic_form(A, len(workers), quadratic)
    gram = A.T @ A
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise DisconnectedGraphError(
            "A'A is singular: the design is not connected; restrict it to one connected set first",
        )
    xi = float(sigma2 * np.trace(Q @ np.linalg.inv(gram)))
    return BiasComputation(A=A, Q=Q, sigma2=float(sigma2), xi=xi, workers=workers, firms=firms, quadratic=quadratic)


def plugin_bias_monte_carlo(design, gamma, reps=100000, seed=None, batch=10000):
    """
    Monte Carlo mean of the plug-in bias for a design.

    Args:
        design (BiasComputation): Output of exact_lmb_bias
        gamma (numpy.ndarray): True effects
        reps (int, optional): Replications
        seed (int): Seed of the noise draws

    Returns:
        dict: ``bias`` (mean of estimate minus truth) and its Monte Carlo ``se``
    """
    if seed is None:
        raise ConfigError("plugin_bias_monte_carlo needs an explicit seed")
    A, Q = design.A, design.Q
    gamma = np.asarray(gamma, dtype=float)
    truth = gamma @ Q @ gamma
    solver = np.linalg.solve(A.T @ A, A.T)
    rng = np.random.default_rng(seed)
    estimates = []
    done = 0
    while done < reps:
        size = min(batch, reps - done)
        noise = rng.normal(0.0, np.sqrt(design.sigma2), size=(A.shape[0], size))
        gamma_hat = gamma[:, None] + solver @ noise
        estimates.append(np.einsum("ir,ij,jr->r", gamma_hat, Q, gamma_hat))
        done += size
    estimates = np.concatenate(estimates) - truth
    return {"bias": float(estimates.mean()), "se": float(estimates.std(ddof=1) / np.sqrt(reps)), "reps": reps}


@dataclass
class ConnectivityResult:
    firm_sizes: np.ndarray
    inclusion_frequency: np.ndarray
    outflow_frequency: np.ndarray
    reps: int
    move_prob: float

    @property
    def closed_form(self):
        """Probability that at least one worker of each firm leaves."""
        return 1.0 - (1.0 - self.move_prob) ** self.firm_sizes

    def standard_error(self, frequency):
        return np.sqrt(frequency * (1.0 - frequency) / self.reps)

    def table(self):
        return pd.DataFrame({
            "firm": np.arange(1, len(self.firm_sizes) + 1),
            "size": self.firm_sizes,
            "inclusion_frequency": self.inclusion_frequency,
            "outflow_frequency": self.outflow_frequency,
            "outflow_closed_form": self.closed_form,
        })


def _connectivity_chunk(chunk, sizes, move_prob, reps, seed):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(chunk)]))
    J = len(sizes)
    origin = np.repeat(np.arange(J), sizes)
    included = np.zeros(J)
    outflow = np.zeros(J)
    for _ in range(reps):
        moves = rng.random(len(origin)) < move_prob
        src = origin[moves]
        dest = rng.integers(0, J - 1, size=len(src))
        dest = dest + (dest >= src)
        outflow[np.unique(src)] += 1
        if len(src) == 0:
            continue
        matrix = sp.coo_matrix((np.ones(len(src)), (src, dest)), shape=(J, J)).tocsr()
        _, labels = connected_components(matrix, directed=False)
        sizes_by_label = np.bincount(labels)
        largest = np.argmax(sizes_by_label)
        if sizes_by_label[largest] >= 2:
            included[labels == largest] += 1
    return included, outflow


def connectivity_simulation(firm_sizes, move_prob, reps, seed, n_jobs=1, progress=False):
    """
    Simulate how often each firm ends up in the largest connected set.

    In each replication every worker moves with probability ``move_prob``
    to a uniformly drawn other firm. A firm is included when it belongs to
    the largest connected set and that set has at least two firms; it has an
    outflow when at least one of its workers moves.

    With two firms any single move joins both, so they always share one
    inclusion frequency and the size effect shows only in the outflow
    frequencies. Per-firm inclusion separates by size from three firms on.

    Args:
        firm_sizes (list): Workers per firm
        move_prob (float): Mobility probability in [0, 1]
        reps (int): Replications
        seed (int): Seed; replication chunks use (seed, chunk) substreams
        n_jobs (int, optional): Worker processes

    Returns:
        ConnectivityResult: Per-firm inclusion and outflow frequencies
    """
    if not 0.0 <= move_prob <= 1.0:
        raise ConfigError("move_prob must lie in [0, 1]")
    sizes = np.asarray(firm_sizes, dtype=int)
    if len(sizes) < 2:
        raise ConfigError("connectivity_simulation needs at least two firms")
    if reps < 1:
        raise ConfigError("reps must be at least 1")

    chunks = [(c, min(CHUNK_SIZE, reps - c * CHUNK_SIZE)) for c in range((reps + CHUNK_SIZE - 1) // CHUNK_SIZE)]
    results = ordered_map(
        partial(_run_chunk, sizes=sizes, move_prob=move_prob, seed=seed),
        chunks, n_jobs=n_jobs, progress=progress, desc="connectivity",
    )
    included = sum(r[0] for r in results)
    outflow = sum(r[1] for r in results)
    return ConnectivityResult(
        firm_sizes=sizes,
        inclusion_frequency=included / reps,
        outflow_frequency=outflow / reps,
        reps=reps,
        move_prob=move_prob,
    )


def _run_chunk(item, sizes, move_prob, seed):
    chunk, count = item
    return _connectivity_chunk(chunk, sizes, move_prob, count, seed)


def mobility_symmetry_diagnostic(fits, panel):
    """
    Mean change in residuals of movers by origin class, destination class and gender.

    Args:
        fits (FixedEffectsFit or list): clustered-AKM fits with residuals
        panel (BiennialPanel): Panel with gender

    Returns:
        pandas.DataFrame: k1, k2, gender, direction, movers, mean_resid_change
    """
    fits = fits if isinstance(fits, (list, tuple)) else [fits]
    frame = pd.concat([fit.frame for fit in fits], ignore_index=True)
    wide = frame.pivot_table(index="worker_id", columns="period", values=["resid", "k"], aggfunc="first")
    wide = wide.dropna()
    table = pd.DataFrame({
        "worker_id": wide.index,
        "k1": wide[("k", 1)].to_numpy(dtype=int),
        "k2": wide[("k", 2)].to_numpy(dtype=int),
        "change": wide[("resid", 2)].to_numpy() - wide[("resid", 1)].to_numpy(),
    })
    movers = panel.frame.loc[panel.frame["mover"], ["worker_id", "gender"]]
    table = table.merge(movers, on="worker_id", how="inner")
    table["direction"] = np.where(table["k2"] > table["k1"], "upward",
                                  np.where(table["k2"] < table["k1"], "downward", "lateral"))
    return (
        table.groupby(["k1", "k2", "gender", "direction"], sort=True)["change"]
        .agg(movers="size", mean_resid_change="mean")
        .reset_index()
    )
