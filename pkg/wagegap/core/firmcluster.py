# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import json
import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from .. import hooks
from ..utils.parallel import ordered_map
from .exceptions import ClusteringError, ConfigError, DataError, NumericalError

logger = logging.getLogger(__name__)

OBJECTIVE_SLACK = 1e-10


@dataclass
class ECDFGrid:
    """
    Firm wage eCDFs evaluated on a common grid of pooled wage ventiles.

    Rows of ``F`` follow ``firm_ids``, which are sorted.
    """
    grid: np.ndarray
    firm_ids: np.ndarray
    F: np.ndarray
    n: np.ndarray
    mean_wage: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def n_firms(self):
        return len(self.firm_ids)


def compute_ecdfs(panel, ventiles=19, firm_ids=None):
    """
    Evaluate each firm's period-1 wage eCDF at the pooled ventiles.

    Args:
        panel (BiennialPanel): Balanced panel
        ventiles (int, optional): Number of interior quantile cuts
        firm_ids (list, optional): Firms to include; firms without workers are excluded

    Returns:
        ECDFGrid: Grid, per-firm eCDF values and firm sizes

    Raises:
        DataError: If the panel is empty
    """
    if panel.is_empty:
        raise DataError("Cannot compute eCDFs on an empty panel")

    warnings = []
    wages = panel.frame["log_wage_1"].to_numpy(dtype=float)
    firms = panel.frame["firm_id_1"].to_numpy()

    levels = np.arange(1, ventiles + 1) / (ventiles + 1)
    grid = np.quantile(wages, levels, method="inverted_cdf")
    unique_grid = np.unique(grid)
    if len(unique_grid) < len(grid):
        message = f"Ventile cuts collapse from {len(grid)} to {len(unique_grid)} distinct values"
        logger.warning(message)
        warnings.append(message)
    grid = unique_grid

    below = (wages[:, None] <= grid[None, :]).astype(float)
    frame = pd.DataFrame(below, columns=range(len(grid)))
    frame["firm_id"] = firms
    frame["wage"] = wages
    grouped = frame.groupby("firm_id", sort=True)
    counts = grouped.size()

    ids = counts.index.to_numpy()
    if firm_ids is not None:
        requested = pd.Index(firm_ids)
        empty = requested.difference(counts.index)
        if len(empty):
            message = f"{len(empty)} firms without workers excluded from clustering"
            logger.warning(message)
            warnings.append(message)
        ids = np.sort(requested.intersection(counts.index).to_numpy())

    sums = grouped[list(range(len(grid)))].sum().loc[ids].to_numpy()
    n = counts.loc[ids].to_numpy().astype(float)
    return ECDFGrid(
        grid=grid,
        firm_ids=ids,
        F=sums / n[:, None],
        n=n,
        mean_wage=grouped["wage"].mean().loc[ids].to_numpy(),
        warnings=warnings,
    )


@dataclass
class FirmClassing:
    """Map from firm to class 1..K with class centroid eCDFs."""
    K: int
    firm_ids: np.ndarray
    labels: np.ndarray
    centroids: np.ndarray = None
    objective: float = float("nan")
    restart: int = -1
    class_mean_wage: np.ndarray = None

    @property
    def assignment(self):
        return pd.Series(self.labels, index=self.firm_ids, name="class")

    def class_of(self, firm_ids):
        """
        Look up the classes of a sequence of firms.

        Raises:
            DataError: If a firm has no class
        """
        classes = self.assignment.reindex(pd.Index(firm_ids))
        if classes.isna().any():
            missing = classes.index[classes.isna()][:5].tolist()
            raise DataError(f"Firms without a class: {missing}")
        return classes.to_numpy().astype(int)

    @classmethod
    def from_assignment(cls, assignment, K=None):
        """Build a classing from a firm -> class mapping."""
        series = pd.Series(assignment).sort_index()
        return cls(
            K=int(K or series.max()),
            firm_ids=series.index.to_numpy(),
            labels=series.to_numpy().astype(int),
        )

    def to_dict(self):
        return {
            "version": hooks.artifact_versions["classing"],
            "K": self.K,
            "objective": None if np.isnan(self.objective) else float(self.objective),
            "restart": int(self.restart),
            "assignment": {str(f): int(k) for f, k in zip(self.firm_ids, self.labels)},
            "centroids": None if self.centroids is None else self.centroids.tolist(),
            "class_mean_wage": None if self.class_mean_wage is None else self.class_mean_wage.tolist(),
        }

    @classmethod
    def from_dict(cls, data, firm_id_type=int):
        items = sorted((firm_id_type(f), int(k)) for f, k in data["assignment"].items())
        return cls(
            K=int(data["K"]),
            firm_ids=np.array([f for f, _ in items]),
            labels=np.array([k for _, k in items]),
            centroids=None if data.get("centroids") is None else np.asarray(data["centroids"]),
            objective=float("nan") if data.get("objective") is None else float(data["objective"]),
            restart=int(data.get("restart", -1)),
            class_mean_wage=None if data.get("class_mean_wage") is None else np.asarray(data["class_mean_wage"]),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _squared_distances(X, centroids):
    return ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _weighted_centroids(X, w, labels, K, previous):
    centroids = previous.copy()
    for k in range(K):
        members = labels == k
        if not members.any():
            continue
        weights = w[members]
        if weights.sum() > 0:
            centroids[k] = weights @ X[members] / weights.sum()
        else:
            centroids[k] = X[members].mean(axis=0)
    return centroids


def _kmeanspp_seed(X, w, K, rng):
    """Weighted k-means++ seeding; draws fall back to uniform when all masses vanish."""
    J = len(X)
    mass = w / w.sum() if w.sum() > 0 else np.full(J, 1.0 / J)
    centers = [rng.choice(J, p=mass)]
    closest = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, K):
        score = w * closest
        if score.sum() > 0:
            pick = rng.choice(J, p=score / score.sum())
        else:
            pick = rng.choice(J)
        centers.append(pick)
        closest = np.minimum(closest, ((X - X[pick]) ** 2).sum(axis=1))
    return X[centers].copy()


def _repair_empty(labels, d2, w, K):
    """Move the farthest firm (by weighted distance) into each empty cluster."""
    labels = labels.copy()
    for k in range(K):
        if (labels == k).any():
            continue
        counts = np.bincount(labels, minlength=K)
        cost = w * d2[np.arange(len(labels)), labels]
        cost[counts[labels] < 2] = -np.inf
        j = int(np.argmax(cost))
        labels[j] = k
        d2[j, k] = 0.0
    return labels


def lloyd(X, w, K, rng, max_iter=300):
    """
    One weighted k-means run from a k-means++ start.

    Args:
        X (numpy.ndarray): Firm eCDF vectors, one row per firm
        w (numpy.ndarray): Firm weights
        K (int): Number of clusters
        rng (numpy.random.Generator): Stream of this restart
        max_iter (int, optional): Iteration cap

    Returns:
        tuple: (labels 0..K-1, centroids, objective)

    Raises:
        NumericalError: If the objective increases between iterations
    """
    centroids = _kmeanspp_seed(X, w, K, rng)
    labels = None
    objective = np.inf

    for _ in range(max_iter):
        d2 = _squared_distances(X, centroids)
        new_labels = _repair_empty(np.argmin(d2, axis=1), d2, w, K)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centroids = _weighted_centroids(X, w, labels, K, centroids)
        new_objective = float(w @ ((X - centroids[labels]) ** 2).sum(axis=1))
        if new_objective > objective + OBJECTIVE_SLACK * max(1.0, objective):
            raise NumericalError(f"k-means objective increased from {objective} to {new_objective}")
        objective = new_objective

    return labels, centroids, objective


def _restart(r, X, w, K, seed, max_iter):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(r)]))
    return lloyd(X, w, K, rng, max_iter=max_iter)


def kmeans_best(X, w, K, restarts, seed, n_jobs=1, progress=False, max_iter=300):
    """
    Best weighted k-means solution over independent restarts.

    Restart ``r`` draws from ``SeedSequence([seed, r])``; ties in the
    objective go to the lowest restart index.

    Returns:
        tuple: (labels, centroids, objective, restart index)
    """
    runs = ordered_map(
        partial(_restart, X=X, w=w, K=K, seed=seed, max_iter=max_iter),
        range(restarts), n_jobs=n_jobs, progress=progress, desc=f"k-means K={K}",
    )
    best = 0
    for r, run in enumerate(runs):
        if run[2] < runs[best][2]:
            best = r
    labels, centroids, objective = runs[best]
    return labels, centroids, objective, best


def kmeans_classes(ecdfs, K, restarts=1000, seed=None, n_jobs=1, progress=False):
    """
    Class firms by size-weighted k-means on their wage eCDFs.

    Classes are relabelled so that the class mean log wage (over workers)
    increases with the class index.

    Args:
        ecdfs (ECDFGrid): Firm eCDFs
        K (int): Number of classes
        restarts (int, optional): Independent k-means++ starts
        seed (int): Seed of the restart streams
        n_jobs (int, optional): Worker processes for the restarts
        progress (bool, optional): Show a progress bar

    Returns:
        FirmClassing: Best classing over restarts

    Raises:
        ConfigError: If K, restarts or seed are invalid
        ClusteringError: If K exceeds the number of firms
    """
    if seed is None:
        raise ConfigError("kmeans_classes needs an explicit seed")
    if K < 1 or restarts < 1:
        raise ConfigError("K and restarts must be at least 1")
    if K > ecdfs.n_firms:
        raise ClusteringError(f"K={K} exceeds the number of firms ({ecdfs.n_firms})")

    order = np.argsort(ecdfs.firm_ids, kind="mergesort")
    X, w = ecdfs.F[order], ecdfs.n[order]
    labels, centroids, objective, restart = kmeans_best(X, w, K, restarts, seed, n_jobs, progress)

    wage_mass = np.bincount(labels, weights=w * ecdfs.mean_wage[order], minlength=K)
    class_mean = wage_mass / np.bincount(labels, weights=w, minlength=K)
    ranking = np.argsort(class_mean, kind="mergesort")
    relabel = np.empty(K, dtype=int)
    relabel[ranking] = np.arange(K)

    logger.info("k-means K=%d: objective %.6g from restart %d of %d", K, objective, restart, restarts)
    return FirmClassing(
        K=K,
        firm_ids=ecdfs.firm_ids[order],
        labels=relabel[labels] + 1,
        centroids=centroids[ranking],
        objective=objective,
        restart=restart,
        class_mean_wage=class_mean[ranking],
    )


def extend_classing(classing, panel, grid):
    """
    Class firms that only appear in period 2.

    Such firms have no period-1 eCDF; each takes the class whose centroid is
    nearest to its period-2 eCDF on the same grid.

    Args:
        classing (FirmClassing): Classing of the period-1 firms
        panel (BiennialPanel): Panel the classing was built on
        grid (numpy.ndarray): Wage grid of the period-1 eCDFs

    Returns:
        FirmClassing: The input classing, extended when new firms exist
    """
    frame = panel.frame[~panel.frame["firm_id_2"].isin(classing.firm_ids)]
    if frame.empty:
        return classing
    if classing.centroids is None:
        raise ClusteringError("Cannot class period-2 firms without centroids")

    wages = frame["log_wage_2"].to_numpy(dtype=float)
    below = pd.DataFrame((wages[:, None] <= np.asarray(grid)[None, :]).astype(float))
    F = below.groupby(frame["firm_id_2"].to_numpy(), sort=True).mean()
    labels = np.argmin(_squared_distances(F.to_numpy(), classing.centroids), axis=1) + 1
    logger.info("Classed %d firms seen only in period 2 by nearest centroid", len(F))

    firm_ids = np.concatenate([classing.firm_ids, F.index.to_numpy()])
    all_labels = np.concatenate([classing.labels, labels])
    order = np.argsort(firm_ids, kind="mergesort")
    return FirmClassing(
        K=classing.K,
        firm_ids=firm_ids[order],
        labels=all_labels[order],
        centroids=classing.centroids,
        objective=classing.objective,
        restart=classing.restart,
        class_mean_wage=classing.class_mean_wage,
    )


def classing_stats(panel, classing):
    """Per-class firm count, worker count and mean/variance of period-1 log wages."""
    frame = pd.DataFrame({
        "class": classing.class_of(panel.frame["firm_id_1"]),
        "firm_id": panel.frame["firm_id_1"].to_numpy(),
        "log_wage": panel.frame["log_wage_1"].to_numpy(),
    })
    grouped = frame.groupby("class")
    return pd.DataFrame({
        "firms": grouped["firm_id"].nunique(),
        "workers": grouped.size(),
        "mean_log_wage": grouped["log_wage"].mean(),
        "var_log_wage": grouped["log_wage"].var(ddof=0),
    }).reindex(range(1, classing.K + 1)).rename_axis("class").reset_index()


@dataclass
class GapStatisticReport:
    k: list
    W: list
    gap: list
    s: list
    chosen_K: int
    reference: str = "uniform"

    def table(self):
        return pd.DataFrame({"k": self.k, "W_k": self.W, "gap": self.gap, "s": self.s})


def _reference_sample(X, rng, reference):
    if reference == "observed":
        return X
    if reference == "uniform":
        lo, hi = X.min(axis=0), X.max(axis=0)
        return lo + rng.random(X.shape) * (hi - lo)
    # box aligned with the principal components of the observed vectors
    center = X.mean(axis=0)
    _, _, vt = np.linalg.svd(X - center, full_matrices=False)
    rotated = (X - center) @ vt.T
    lo, hi = rotated.min(axis=0), rotated.max(axis=0)
    return (lo + rng.random(rotated.shape) * (hi - lo)) @ vt + center


def _safe_log(value):
    return float(np.log(max(value, np.finfo(float).tiny)))


def gap_statistic(ecdfs, k_range=(1, 6), B=500, seed=None, restarts=10, reference="uniform",
                  n_jobs=1, progress=False):
    """
    Choose the number of firm classes with the gap statistic.

    Reference datasets keep the firm weights and draw eCDF vectors uniformly
    over the per-coordinate ranges of the observed vectors (``uniform``), over
    a box aligned with their principal components (``pca``) or reuse the
    observed data itself (``observed``). The chosen K is the smallest k with
    Gap(k) >= Gap(k+1) - s_{k+1}; without such k it is the top of the range.

    Args:
        ecdfs (ECDFGrid): Firm eCDFs
        k_range (tuple): Inclusive (kmin, kmax)
        B (int, optional): Number of reference datasets
        seed (int): Seed for reference draws and k-means restarts
        restarts (int, optional): k-means restarts per fit
        reference (str, optional): uniform, pca or observed
        n_jobs (int, optional): Worker processes
        progress (bool, optional): Show a progress bar

    Returns:
        GapStatisticReport: W_k, Gap(k), s_k and the chosen K
    """
    if seed is None:
        raise ConfigError("gap_statistic needs an explicit seed")
    if reference not in ("uniform", "pca", "observed"):
        raise ConfigError(f"Unknown gap statistic reference {reference!r}")
    kmin, kmax = int(k_range[0]), int(k_range[1])
    if B < 1 or kmin < 1 or kmax < kmin:
        raise ConfigError("gap_statistic needs B >= 1 and 1 <= kmin <= kmax")
    if kmax > ecdfs.n_firms:
        raise ClusteringError(f"kmax={kmax} exceeds the number of firms ({ecdfs.n_firms})")

    order = np.argsort(ecdfs.firm_ids, kind="mergesort")
    X, w = ecdfs.F[order], ecdfs.n[order]
    ks = list(range(kmin, kmax + 1))

    references = [
        _reference_sample(X, np.random.default_rng(np.random.SeedSequence([int(seed), b, 1])), reference)
        for b in range(B)
    ]

    W, gaps, sds = [], [], []
    for k in ks:
        observed = kmeans_best(X, w, k, restarts, seed, n_jobs)[2]
        ref_logs = np.array([
            _safe_log(kmeans_best(Xb, w, k, restarts, seed, n_jobs)[2])
            for Xb in tqdm(references, desc=f"gap k={k}", disable=not progress)
        ])
        W.append(observed)
        gaps.append(float(ref_logs.mean() - _safe_log(observed)))
        sds.append(float(ref_logs.std()))

    chosen = ks[-1]
    for i in range(len(ks) - 1):
        if gaps[i] >= gaps[i + 1] - sds[i + 1]:
            chosen = ks[i]
            break

    logger.info("Gap statistic over k=%d..%d chose K=%d", kmin, kmax, chosen)
    return GapStatisticReport(k=ks, W=W, gap=gaps, s=sds, chosen_K=chosen, reference=reference)
