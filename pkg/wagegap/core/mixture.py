# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import json
import logging
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .. import hooks
from ..utils.parallel import ordered_map
from .exceptions import ConfigError, EstimationError, NumericalError

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-3
MONOTONE_SLACK = 1e-9
SPARSE_CELL = 10

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def lognormpdf(y, mu, sd):
    return -LOG_SQRT_2PI - np.log(sd) - 0.5 * ((y - mu) / sd) ** 2


@dataclass
class MoverData:
    """Origin class, destination class (0-based) and both wages of each mover."""
    worker_id: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    K: int

    def __len__(self):
        return len(self.y1)

    def cell_counts(self):
        counts = np.zeros((self.K, self.K))
        np.add.at(counts, (self.k1, self.k2), 1.0)
        return counts


@dataclass
class StayerData:
    worker_id: np.ndarray
    k: np.ndarray
    y: np.ndarray
    K: int

    def __len__(self):
        return len(self.y)


def mover_data(panel, classing):
    """Extract the movers of a panel; gender is never read."""
    movers = panel.movers()
    return MoverData(
        worker_id=movers["worker_id"].to_numpy(),
        k1=classing.class_of(movers["firm_id_1"]) - 1,
        k2=classing.class_of(movers["firm_id_2"]) - 1,
        y1=movers["log_wage_1"].to_numpy(dtype=float),
        y2=movers["log_wage_2"].to_numpy(dtype=float),
        K=classing.K,
    )


def stayer_data(panel, classing):
    stayers = panel.stayers()
    return StayerData(
        worker_id=stayers["worker_id"].to_numpy(),
        k=classing.class_of(stayers["firm_id_1"]) - 1,
        y=stayers["log_wage_1"].to_numpy(dtype=float),
        K=classing.K,
    )


@dataclass
class MixtureModel:
    """
    Bilinear Gaussian mixture over firm classes and worker types.

    ``p[k, k', l]`` is the type share of movers from class k to k', ``q[k, l]``
    the type share of stayers in class k. Period-1 densities are indexed by
    the origin class, period-2 densities by the destination class.
    """
    K: int
    L: int
    p: np.ndarray
    q: np.ndarray
    mu1: np.ndarray
    sd1: np.ndarray
    mu2: np.ndarray
    sd2: np.ndarray
    loglik: float = float("nan")
    stayer_loglik: float = float("nan")
    loglik_path: list = field(default_factory=list)
    restart: int = -1
    mover_counts: np.ndarray = None
    sparse_cells: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def copy(self):
        return MixtureModel(
            K=self.K, L=self.L, p=self.p.copy(), q=self.q.copy(),
            mu1=self.mu1.copy(), sd1=self.sd1.copy(), mu2=self.mu2.copy(), sd2=self.sd2.copy(),
            loglik=self.loglik, stayer_loglik=self.stayer_loglik, loglik_path=list(self.loglik_path),
            restart=self.restart,
            mover_counts=None if self.mover_counts is None else self.mover_counts.copy(),
            sparse_cells=list(self.sparse_cells), warnings=list(self.warnings),
        )

    def permute_types(self, order):
        """Return a copy whose type l is this model's type ``order[l]``."""
        model = self.copy()
        order = np.asarray(order)
        model.p = self.p[:, :, order]
        model.q = self.q[:, order]
        for name in ("mu1", "sd1", "mu2", "sd2"):
            setattr(model, name, getattr(self, name)[:, order])
        return model

    def origin_marginal(self):
        """Type shares of movers by origin class, weighted by mover cell counts."""
        counts = self.mover_counts if self.mover_counts is not None else np.ones((self.K, self.K))
        mass = np.einsum("ab,abl->al", counts, self.p)
        totals = mass.sum(axis=1, keepdims=True)
        uniform = np.full((self.K, self.L), 1.0 / self.L)
        with np.errstate(invalid="ignore"):
            return np.where(totals > 0, mass / np.where(totals > 0, totals, 1.0), uniform)

    def to_dict(self):
        return {
            "version": hooks.artifact_versions["mixture_model"],
            "K": self.K,
            "L": self.L,
            "p": self.p.tolist(),
            "q": self.q.tolist(),
            "mu1": self.mu1.tolist(),
            "sd1": self.sd1.tolist(),
            "mu2": self.mu2.tolist(),
            "sd2": self.sd2.tolist(),
            "loglik": self.loglik,
            "stayer_loglik": None if math.isnan(self.stayer_loglik) else self.stayer_loglik,
            "restart": self.restart,
            "mover_counts": None if self.mover_counts is None else self.mover_counts.tolist(),
            "sparse_cells": [list(cell) for cell in self.sparse_cells],
        }

    @classmethod
    def from_dict(cls, data):
        arrays = {name: np.asarray(data[name], dtype=float) for name in ("p", "q", "mu1", "sd1", "mu2", "sd2")}
        return cls(
            K=int(data["K"]),
            L=int(data["L"]),
            loglik=float(data["loglik"]),
            stayer_loglik=float("nan") if data.get("stayer_loglik") is None else float(data["stayer_loglik"]),
            restart=int(data.get("restart", -1)),
            mover_counts=None if data.get("mover_counts") is None else np.asarray(data["mover_counts"]),
            sparse_cells=[tuple(cell) for cell in data.get("sparse_cells", [])],
            **arrays,
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _mover_log_terms(model, data):
    """Per-mover, per-type log joint density; shape (N, L)."""
    with np.errstate(divide="ignore"):
        log_p = np.log(model.p)
    return (
        log_p[data.k1, data.k2]
        + lognormpdf(data.y1[:, None], model.mu1[data.k1], model.sd1[data.k1])
        + lognormpdf(data.y2[:, None], model.mu2[data.k2], model.sd2[data.k2])
    )


def _stayer_log_terms(model, data):
    with np.errstate(divide="ignore"):
        log_q = np.log(model.q)
    return log_q[data.k] + lognormpdf(data.y[:, None], model.mu1[data.k], model.sd1[data.k])


def loglik(model, movers=None, stayers=None):
    """
    Mover and, optionally, stayer log-likelihood of a model.

    Each observation contributes the log-sum-exp of its type terms; the
    contributions are added with ``math.fsum`` so the value does not depend on
    summation order.

    Args:
        model (MixtureModel): Fitted or candidate model
        movers (MoverData, optional): Mover sample
        stayers (StayerData, optional): Stayer sample

    Returns:
        float: Total log-likelihood
    """
    total = 0.0
    if movers is not None and len(movers):
        total += math.fsum(logsumexp(_mover_log_terms(model, movers), axis=1))
    if stayers is not None and len(stayers):
        total += math.fsum(logsumexp(_stayer_log_terms(model, stayers), axis=1))
    return total


def _weighted_moments(index, weights, values, K, previous_mu, previous_sd, sigma_floor):
    """Responsibility weighted mean and sd per class; empty components keep their parameters."""
    mu, sd = previous_mu.copy(), previous_sd.copy()
    for l in range(weights.shape[1]):
        mass = np.bincount(index, weights=weights[:, l], minlength=K)
        first = np.bincount(index, weights=weights[:, l] * values, minlength=K)
        active = mass > 0
        mu[active, l] = first[active] / mass[active]
        resid = (values - mu[index, l]) ** 2
        second = np.bincount(index, weights=weights[:, l] * resid, minlength=K)
        sd[active, l] = np.maximum(np.sqrt(second[active] / mass[active]), sigma_floor)
    return mu, sd


def _initial_model(data, L, sigma_floor, rng=None):
    """Quantile-sliced starting values; later restarts jitter them with ``rng``."""
    K = data.K
    mu1, sd1 = np.zeros((K, L)), np.ones((K, L))
    mu2, sd2 = np.zeros((K, L)), np.ones((K, L))

    def slices(values):
        order = np.sort(values)
        bins = np.array_split(order, L)
        means = np.array([b.mean() if len(b) else order.mean() for b in bins])
        sds = np.array([b.std() if len(b) > 1 else order.std() for b in bins])
        return means, np.maximum(sds, sigma_floor)

    pooled1, pooled2 = slices(data.y1), slices(data.y2)
    for k in range(K):
        origin = data.y1[data.k1 == k]
        dest = data.y2[data.k2 == k]
        mu1[k], sd1[k] = slices(origin) if len(origin) >= L else pooled1
        mu2[k], sd2[k] = slices(dest) if len(dest) >= L else pooled2

    if rng is not None:
        mu1 = mu1 + rng.normal(0.0, 1.0, size=mu1.shape) * sd1
        mu2 = mu2 + rng.normal(0.0, 1.0, size=mu2.shape) * sd2
        sd1 = np.maximum(sd1 * np.exp(rng.uniform(-0.5, 0.5, size=sd1.shape)), sigma_floor)
        sd2 = np.maximum(sd2 * np.exp(rng.uniform(-0.5, 0.5, size=sd2.shape)), sigma_floor)

    return MixtureModel(
        K=K, L=L,
        p=np.full((K, K, L), 1.0 / L),
        q=np.full((K, L), 1.0 / L),
        mu1=mu1, sd1=sd1, mu2=mu2, sd2=sd2,
    )


def em_movers(model, data, tol=1e-8, max_iter=2000, sigma_floor=SIGMA_FLOOR):
    """
    Run EM on the mover likelihood from a starting model.

    Returns:
        MixtureModel: Converged model with its loglik path

    Raises:
        NumericalError: If the likelihood becomes non-finite or decreases
    """
    model = model.copy()
    K, L = model.K, model.L
    cell = data.k1 * K + data.k2
    path = []
    previous = None

    for _ in range(max_iter):
        # E-step
        terms = _mover_log_terms(model, data)
        lse = logsumexp(terms, axis=1)
        current = math.fsum(lse)
        if not math.isfinite(current):
            raise NumericalError("Mover log-likelihood is not finite")
        if previous is not None and current < previous - MONOTONE_SLACK:
            raise NumericalError(f"EM log-likelihood decreased from {previous!r} to {current!r}")
        path.append(current)
        if previous is not None and abs(current - previous) <= tol * abs(previous):
            break
        previous = current
        resp = np.exp(terms - lse[:, None])

        # M-step
        mass = np.stack([np.bincount(cell, weights=resp[:, l], minlength=K * K) for l in range(L)], axis=1)
        totals = mass.sum(axis=1)
        p = model.p.reshape(K * K, L).copy()
        seen = totals > 0
        p[seen] = mass[seen] / totals[seen, None]
        model.p = p.reshape(K, K, L)
        model.mu1, model.sd1 = _weighted_moments(data.k1, resp, data.y1, K, model.mu1, model.sd1, sigma_floor)
        model.mu2, model.sd2 = _weighted_moments(data.k2, resp, data.y2, K, model.mu2, model.sd2, sigma_floor)
    else:
        # iteration cap reached; score the last M-step
        path.append(loglik(model, data))

    model.loglik = path[-1]
    model.loglik_path = path
    return model


def _mover_restart(r, data, L, seed, tol, max_iter, sigma_floor):
    rng = None if r == 0 else np.random.default_rng(np.random.SeedSequence([int(seed), int(r)]))
    start = _initial_model(data, L, sigma_floor, rng)
    try:
        model = em_movers(start, data, tol=tol, max_iter=max_iter, sigma_floor=sigma_floor)
    except NumericalError as e:
        return r, None, e.message
    model.restart = r
    return r, model, None


def _canonical_order(model, data):
    """Order types by pooled expected wage over both periods."""
    share1 = np.bincount(data.k1, minlength=model.K) / len(data)
    share2 = np.bincount(data.k2, minlength=model.K) / len(data)
    expected = 0.5 * (share1 @ model.mu1 + share2 @ model.mu2)
    return np.argsort(expected, kind="mergesort")


def fit_movers(panel, classing, L, reps=50, seed=None, tol=1e-8, max_iter=2000,
               sigma_floor=SIGMA_FLOOR, sparse_cell=SPARSE_CELL, n_jobs=1, progress=False):
    """
    Fit the mover mixture by EM with several starts and keep the best.

    Start 0 uses quantile-sliced values; start r > 0 jitters them with a
    stream derived from ``(seed, r)``. Starts whose likelihood turns
    non-finite are logged and skipped.

    Args:
        panel (BiennialPanel): Panel; the gender column is never read
        classing (FirmClassing): Firm classes
        L (int): Number of worker types
        reps (int, optional): Number of EM starts
        seed (int): Seed of the start streams
        tol (float, optional): Relative log-likelihood change to stop at
        max_iter (int, optional): Iteration cap per start
        sigma_floor (float, optional): Lower bound on every sd
        sparse_cell (int, optional): Mover cells below this size are flagged
        n_jobs (int, optional): Worker processes
        progress (bool, optional): Show a progress bar

    Returns:
        MixtureModel: Best model, types ordered by pooled expected wage

    Raises:
        ConfigError: If L, reps or seed are invalid
        EstimationError: If the panel has no movers
        NumericalError: If every start fails
    """
    if seed is None:
        raise ConfigError("fit_movers needs an explicit seed")
    if L < 1 or reps < 1:
        raise ConfigError("L and reps must be at least 1")

    data = mover_data(panel, classing)
    if len(data) == 0:
        raise EstimationError("No movers in the panel; the mixture is not identified")

    results = ordered_map(
        partial(_mover_restart, data=data, L=L, seed=seed, tol=tol, max_iter=max_iter, sigma_floor=sigma_floor),
        range(reps), n_jobs=n_jobs, progress=progress, desc="EM starts",
    )

    best = None
    for r, model, error in results:
        if model is None:
            logger.warning("EM start %d aborted: %s", r, error)
            continue
        if best is None or model.loglik > best.loglik:
            best = model
    if best is None:
        raise NumericalError(f"All {reps} EM starts failed")

    best = best.permute_types(_canonical_order(best, data))
    best.mover_counts = data.cell_counts()
    best.sparse_cells = [
        (int(a) + 1, int(b) + 1)
        for a, b in zip(*np.nonzero((best.mover_counts > 0) & (best.mover_counts < sparse_cell)))
    ]
    if best.sparse_cells:
        message = f"{len(best.sparse_cells)} mover cells have fewer than {sparse_cell} movers"
        logger.warning(message)
        best.warnings.append(message)

    logger.info("Mover mixture L=%d: loglik %.6f from start %d of %d", L, best.loglik, best.restart, reps)
    return best


def fit_stayers(panel, classing, mover_model, tol=1e-8, max_iter=2000):
    """
    Estimate stayer type shares q with period-1 densities held at the mover fit.

    A class without stayers takes the mover origin-marginal of p as its q row.

    Args:
        panel (BiennialPanel): Panel; the gender column is never read
        classing (FirmClassing): Firm classes
        mover_model (MixtureModel): Output of fit_movers

    Returns:
        MixtureModel: Copy of the mover model with q filled in
    """
    model = mover_model.copy()
    data = stayer_data(panel, classing)
    K, L = model.K, model.L
    fallback = model.origin_marginal()
    model.q = fallback.copy()

    present = np.bincount(data.k, minlength=K) > 0
    for k in np.flatnonzero(~present):
        message = f"Class {k + 1} has no stayers; q uses the mover origin marginal"
        logger.warning(message)
        model.warnings.append(message)

    if len(data) == 0:
        return model

    with np.errstate(divide="ignore"):
        dens = lognormpdf(data.y[:, None], model.mu1[data.k], model.sd1[data.k])
    counts = np.bincount(data.k, minlength=K).astype(float)
    previous = None
    for _ in range(max_iter):
        with np.errstate(divide="ignore"):
            terms = np.log(model.q)[data.k] + dens
        lse = logsumexp(terms, axis=1)
        current = math.fsum(lse)
        if previous is not None and current < previous - MONOTONE_SLACK:
            raise NumericalError(f"Stayer log-likelihood decreased from {previous!r} to {current!r}")
        if previous is not None and abs(current - previous) <= tol * abs(previous):
            break
        previous = current
        resp = np.exp(terms - lse[:, None])
        mass = np.stack([np.bincount(data.k, weights=resp[:, l], minlength=K) for l in range(L)], axis=1)
        model.q = np.where(present[:, None], mass / np.where(present, counts, 1.0)[:, None], fallback)
    else:
        current = loglik(model, stayers=data)

    model.stayer_loglik = current
    return model


@dataclass
class TypeAssignment:
    """Posterior type probabilities and MAP types (1..L) per worker."""
    worker_ids: np.ndarray
    posterior: np.ndarray
    types: np.ndarray
    mover: np.ndarray

    def to_frame(self):
        frame = pd.DataFrame({"worker_id": self.worker_ids, "type": self.types, "mover": self.mover})
        for l in range(self.posterior.shape[1]):
            frame[f"post_{l + 1}"] = self.posterior[:, l]
        return frame

    def type_of(self, worker_ids):
        series = pd.Series(self.types, index=self.worker_ids)
        return series.loc[pd.Index(worker_ids)].to_numpy()

    @classmethod
    def from_frame(cls, frame):
        posts = sorted((c for c in frame.columns if c.startswith("post_")), key=lambda c: int(c[5:]))
        return cls(
            worker_ids=frame["worker_id"].to_numpy(),
            posterior=frame[posts].to_numpy(dtype=float),
            types=frame["type"].to_numpy().astype(int),
            mover=frame["mover"].to_numpy().astype(bool),
        )


def map_assign(panel, classing, model):
    """
    Assign each worker its posterior-mode type.

    Stayers use q of their class as prior and their period-1 wage. Movers use
    the p row of their (origin, destination) cell and both wages. Ties go to
    the lowest type index.

    Returns:
        TypeAssignment: Posteriors and MAP types in panel row order
    """
    frame = panel.frame
    mover = frame["mover"].to_numpy()
    k1 = classing.class_of(frame["firm_id_1"]) - 1
    k2 = classing.class_of(frame["firm_id_2"]) - 1
    y1 = frame["log_wage_1"].to_numpy(dtype=float)
    y2 = frame["log_wage_2"].to_numpy(dtype=float)

    with np.errstate(divide="ignore"):
        terms = np.log(model.q)[k1] + lognormpdf(y1[:, None], model.mu1[k1], model.sd1[k1])
        if mover.any():
            terms[mover] = (
                np.log(model.p)[k1[mover], k2[mover]]
                + lognormpdf(y1[mover, None], model.mu1[k1[mover]], model.sd1[k1[mover]])
                + lognormpdf(y2[mover, None], model.mu2[k2[mover]], model.sd2[k2[mover]])
            )
    posterior = np.exp(terms - logsumexp(terms, axis=1, keepdims=True))
    return TypeAssignment(
        worker_ids=frame["worker_id"].to_numpy(),
        posterior=posterior,
        types=np.argmax(posterior, axis=1) + 1,
        mover=mover,
    )


def align_types(model, reference_mu):
    """
    Permute types to best match reference period-1 means (Hungarian method).

    Args:
        model (MixtureModel): Estimated model
        reference_mu (numpy.ndarray): (K, L) reference means

    Returns:
        tuple: (aligned MixtureModel, permutation)
    """
    reference_mu = np.asarray(reference_mu, dtype=float)
    cost = ((model.mu1[:, :, None] - reference_mu[:, None, :]) ** 2).sum(axis=0)
    rows, cols = linear_sum_assignment(cost)
    order = np.empty(model.L, dtype=int)
    order[cols] = rows
    return model.permute_types(order), order


def type_proportions(panel, classing, assignment):
    """
    Unconditional and conditional type/class shares by gender.

    Uses period-1 classes. Needs the gender column, so it only runs after
    MAP assignment.

    Returns:
        dict: gender -> {"type": P(l), "class": P(k), "type_given_class": P(l | k)}
    """
    frame = pd.DataFrame({
        "gender": panel.frame["gender"].to_numpy(),
        "k": classing.class_of(panel.frame["firm_id_1"]),
        "l": assignment.type_of(panel.frame["worker_id"]),
    })
    result = {}
    for gender, part in frame.groupby("gender", sort=True):
        table = pd.crosstab(part["k"], part["l"])
        result[gender] = {
            "type": part["l"].value_counts(normalize=True).sort_index(),
            "class": part["k"].value_counts(normalize=True).sort_index(),
            "type_given_class": table.div(table.sum(axis=1), axis=0),
        }
    return result
