# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.linalg import qr
from scipy.sparse.csgraph import connected_components
from statsmodels.regression.linear_model import OLS, WLS

from ..core.exceptions import ConfigError, DataError, DisconnectedGraphError, EstimationError

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
CATEGORICAL_REGRESSORS = ("education", "occupation", "sector")


@dataclass
class KOBReport:
    """
    Female minus male gap split into explained and unexplained parts.

    The firm variant also carries the firm component and its sorting and
    bargaining split; there ``explained`` is the firm component.
    """
    overall: float
    explained: float
    unexplained: float
    kind: str = "mincer"
    firm_component: float = None
    sorting: float = None
    bargaining: float = None
    dropped_columns: list = field(default_factory=list)
    n_female: int = 0
    n_male: int = 0
    warnings: list = field(default_factory=list)

    @property
    def weight(self):
        return self.n_female + self.n_male

    def to_dict(self):
        data = {
            "kind": self.kind,
            "overall": self.overall,
            "explained": self.explained,
            "unexplained": self.unexplained,
            "n_female": self.n_female,
            "n_male": self.n_male,
            "dropped_columns": list(self.dropped_columns),
        }
        if self.kind == "cakm":
            data.update(firm_component=self.firm_component, sorting=self.sorting, bargaining=self.bargaining)
        return data


def mincer_design(long, levels=None):
    """
    Mincer regressors: intercept, age, age squared and one-hot job codes.

    Args:
        long (pandas.DataFrame): Worker-year rows
        levels (dict, optional): Column -> ordered levels; the first is dropped

    Returns:
        pandas.DataFrame: Design matrix
    """
    age = long["age"].to_numpy(dtype=float)
    design = pd.DataFrame({"const": 1.0, "age": age, "age2": age ** 2}, index=long.index)
    for column in CATEGORICAL_REGRESSORS:
        values = long[column].astype(str)
        column_levels = (levels or {}).get(column) or sorted(values.unique())
        for level in column_levels[1:]:
            design[f"{column}[{level}]"] = (values == str(level)).astype(float)
    return design


def collinear_columns(X, tol=RANK_TOL):
    """
    Columns that add nothing to the span of the columns to their left.

    Uses a non-pivoted QR so the leftmost of any dependent set is kept.
    """
    if X.shape[0] == 0:
        return list(range(X.shape[1]))
    r = qr(X, mode="r", pivoting=False)[0]
    diag = np.abs(np.diag(r))
    if len(diag) < X.shape[1]:
        diag = np.concatenate([diag, np.zeros(X.shape[1] - len(diag))])
    scale = diag.max() if diag.size and diag.max() > 0 else 1.0
    return [j for j, value in enumerate(diag) if value <= tol * scale]


def _split_gender(long):
    if "gender" not in long.columns:
        raise DataError("Decomposition needs the gender column")
    female = long[long["gender"] == "F"]
    male = long[long["gender"] == "M"]
    if len(female) == 0 or len(male) == 0:
        raise EstimationError("Both genders must be present for a gap decomposition")
    return female, male


def mincer_kob(panel, reference="female"):
    """
    Oaxaca-Blinder split of the female minus male mean log wage gap.

    Both periods of the panel are pooled. With ``reference="female"`` the
    explained part is (Xbar_F - Xbar_M) b_F and the unexplained part is
    Xbar_M (b_F - b_M); ``reference="male"`` swaps the coefficient roles.

    Args:
        panel (BiennialPanel): Panel with gender
        reference (str, optional): Coefficient reference group, female or male

    Returns:
        KOBReport: Overall, explained and unexplained gap

    Raises:
        EstimationError: If a gender is missing
    """
    if reference not in ("female", "male"):
        raise ConfigError(f"Unknown KOB reference {reference!r}; use female or male")
    long = panel.long()
    female, male = _split_gender(long)
    levels = {c: sorted(long[c].astype(str).unique()) for c in CATEGORICAL_REGRESSORS}
    XF, XM = mincer_design(female, levels), mincer_design(male, levels)

    dropped_idx = sorted(set(collinear_columns(XF.to_numpy())) | set(collinear_columns(XM.to_numpy())))
    dropped = [XF.columns[j] for j in dropped_idx]
    if dropped:
        logger.info("Dropping collinear Mincer columns: %s", ", ".join(dropped))
    XF, XM = XF.drop(columns=dropped), XM.drop(columns=dropped)

    yF, yM = female["log_wage"].to_numpy(dtype=float), male["log_wage"].to_numpy(dtype=float)
    bF = OLS(yF, XF.to_numpy()).fit().params
    bM = OLS(yM, XM.to_numpy()).fit().params
    xF, xM = XF.to_numpy().mean(axis=0), XM.to_numpy().mean(axis=0)

    if reference == "female":
        explained = float((xF - xM) @ bF)
        unexplained = float(xM @ (bF - bM))
    else:
        explained = float((xF - xM) @ bM)
        unexplained = float(xF @ (bF - bM))

    return KOBReport(
        overall=float(yF.mean() - yM.mean()),
        explained=explained,
        unexplained=unexplained,
        kind="mincer",
        dropped_columns=dropped,
        n_female=len(female),
        n_male=len(male),
    )


@dataclass
class FixedEffectsFit:
    """
    Worker (or type) effects, class effects and covariate effects of one sample.

    ``frame`` holds one row per worker-year with the observed wage ``y`` and
    the ``worker``, ``firm``, ``xb`` and ``resid`` parts that add up to it.
    """
    psi: np.ndarray
    reference_class: int
    beta: dict
    frame: pd.DataFrame
    kind: str = "cakm"
    gender: str = None
    type_effects: np.ndarray = None
    warnings: list = field(default_factory=list)

    @property
    def K(self):
        return len(self.psi)

    def class_shares(self):
        counts = np.bincount(self.frame["k"].to_numpy() - 1, minlength=self.K).astype(float)
        return counts / counts.sum()

    @property
    def mean_wage(self):
        return float(self.frame["y"].mean())


def _akm_covariates(long):
    age = long["age"].to_numpy(dtype=float)
    return pd.DataFrame({
        "period2": (long["period"].to_numpy() == 2).astype(float),
        "age_sq": (age - 40.0) ** 2 / 100.0,
    }, index=long.index)


def _class_graph_components(k1, k2, present, K):
    """Connected sets of classes linked by movers, restricted to present classes."""
    graph = sp.coo_matrix((np.ones(len(k1)), (k1, k2)), shape=(K, K)).tocsr()
    _, labels = connected_components(graph, directed=False)
    groups = {}
    for k in np.flatnonzero(present):
        groups.setdefault(labels[k], []).append(int(k) + 1)
    return sorted(groups.values())


def _sample(panel, classing, gender):
    long = panel.long()
    if gender is not None:
        long = long[long["gender"] == gender]
    if len(long) == 0:
        raise EstimationError(f"No worker-years for gender {gender!r}")
    long = long.reset_index(drop=True)
    long["k"] = classing.class_of(long["firm_id"])
    return long


def cakm_fit(panel, classing, gender=None):
    """
    Worker effects plus firm-class effects plus time-varying covariates.

    Class and covariate effects come from least squares on within-worker
    demeaned data; worker effects are the worker means of what is left.
    This is the fixed point of alternating worker demeaning with the
    class-covariate regression. The reference class (class 1 when present)
    has effect 0.

    Args:
        panel (BiennialPanel): Panel
        classing (FirmClassing): Firm classes
        gender (str, optional): Restrict to one gender

    Returns:
        FixedEffectsFit: Effects and the worker-year decomposition of wages

    Raises:
        DisconnectedGraphError: If movers do not connect the present classes
    """
    long = _sample(panel, classing, gender)
    K = classing.K
    warnings = []

    present = np.bincount(long["k"] - 1, minlength=K) > 0
    reference = int(np.flatnonzero(present)[0]) + 1
    if reference != 1:
        message = f"Class 1 is absent; class {reference} is the reference"
        logger.warning(message)
        warnings.append(message)

    wide = long.pivot_table(index="worker_id", columns="period", values="k", aggfunc="first")
    moved = wide.dropna()
    moved = moved[moved[1] != moved[2]]
    components = _class_graph_components(
        moved[1].to_numpy(dtype=int) - 1, moved[2].to_numpy(dtype=int) - 1, present, K,
    )
    if len(components) > 1:
        raise DisconnectedGraphError(
            f"Classes are split into {len(components)} mover-connected sets; see graph components",
            components=components,
        )

    classes = [k for k in range(1, K + 1) if present[k - 1] and k != reference]
    X = pd.concat([
        pd.DataFrame({f"class_{k}": (long["k"] == k).astype(float) for k in classes}, index=long.index),
        _akm_covariates(long),
    ], axis=1)
    y = long["log_wage"].astype(float)

    workers = long["worker_id"]
    X_within = X - X.groupby(workers).transform("mean")
    y_within = y - y.groupby(workers).transform("mean")

    keep = [c for j, c in enumerate(X.columns) if j not in collinear_columns(X_within.to_numpy())]
    if len(keep) < X.shape[1]:
        logger.info("Dropping unidentified columns: %s", ", ".join(sorted(set(X.columns) - set(keep))))
    coef = pd.Series(0.0, index=X.columns)
    if keep:
        coef[keep] = OLS(y_within.to_numpy(), X_within[keep].to_numpy()).fit().params

    psi = np.full(K, np.nan)
    psi[reference - 1] = 0.0
    for k in classes:
        psi[k - 1] = coef[f"class_{k}"]

    firm = psi[long["k"].to_numpy() - 1]
    covariates = _akm_covariates(long)
    xb = covariates.to_numpy() @ coef[covariates.columns].to_numpy()
    worker = (y - firm - xb).groupby(workers).transform("mean").to_numpy()

    frame = pd.DataFrame({
        "worker_id": workers.to_numpy(),
        "period": long["period"].to_numpy(),
        "k": long["k"].to_numpy(),
        "y": y.to_numpy(),
        "worker": worker,
        "firm": firm,
        "xb": xb,
    })
    frame["resid"] = frame["y"] - frame["worker"] - frame["firm"] - frame["xb"]

    return FixedEffectsFit(
        psi=psi,
        reference_class=reference,
        beta={c: float(coef[c]) for c in covariates.columns},
        frame=frame,
        kind="cakm",
        gender=gender,
        warnings=warnings,
    )


def blm_fit(panel, classing, assignment, gender=None):
    """
    Type effects plus class effects plus covariates at the worker-year level.

    Regressing wages on type and class dummies is the worker-count weighted
    two-way fit on (class, type) cell means, extended with the covariates.

    Args:
        panel (BiennialPanel): Panel
        classing (FirmClassing): Firm classes
        assignment (TypeAssignment): MAP worker types
        gender (str, optional): Restrict to one gender

    Returns:
        FixedEffectsFit: Fit whose worker part is the type effect
    """
    long = _sample(panel, classing, gender)
    K = classing.K
    long["l"] = assignment.type_of(long["worker_id"])
    L = int(assignment.posterior.shape[1])

    present = np.bincount(long["k"] - 1, minlength=K) > 0
    reference = int(np.flatnonzero(present)[0]) + 1
    types = sorted(long["l"].unique())
    classes = [k for k in range(1, K + 1) if present[k - 1] and k != reference]

    X = pd.concat([
        pd.DataFrame({f"type_{l}": (long["l"] == l).astype(float) for l in types}, index=long.index),
        pd.DataFrame({f"class_{k}": (long["k"] == k).astype(float) for k in classes}, index=long.index),
        _akm_covariates(long),
    ], axis=1)
    keep = [c for j, c in enumerate(X.columns) if j not in collinear_columns(X.to_numpy())]
    coef = pd.Series(0.0, index=X.columns)
    y = long["log_wage"].to_numpy(dtype=float)
    coef[keep] = OLS(y, X[keep].to_numpy()).fit().params

    type_effects = np.full(L, np.nan)
    for l in types:
        type_effects[l - 1] = coef[f"type_{l}"]
    psi = np.full(K, np.nan)
    psi[reference - 1] = 0.0
    for k in classes:
        psi[k - 1] = coef[f"class_{k}"]

    covariates = _akm_covariates(long)
    frame = pd.DataFrame({
        "worker_id": long["worker_id"].to_numpy(),
        "period": long["period"].to_numpy(),
        "k": long["k"].to_numpy(),
        "y": y,
        "worker": type_effects[long["l"].to_numpy() - 1],
        "firm": psi[long["k"].to_numpy() - 1],
        "xb": covariates.to_numpy() @ coef[covariates.columns].to_numpy(),
    })
    frame["resid"] = frame["y"] - frame["worker"] - frame["firm"] - frame["xb"]

    return FixedEffectsFit(
        psi=psi,
        reference_class=reference,
        beta={c: float(coef[c]) for c in covariates.columns},
        frame=frame,
        kind="blm",
        gender=gender,
        type_effects=type_effects,
    )


def _common_reference(psi_f, psi_m):
    both = np.flatnonzero(np.isfinite(psi_f) & np.isfinite(psi_m))
    if len(both) == 0:
        raise EstimationError("No class has effects for both genders")
    ref = both[0]
    return psi_f - psi_f[ref], psi_m - psi_m[ref]


def cakm_kob(fit_f, fit_m):
    """
    Split the firm part of the gap into sorting and bargaining.

    Sorting is the class effect weighted share difference, averaged over the
    two genders' effects; bargaining is the share weighted effect difference,
    averaged over the two genders' shares. Their sum is the firm component.

    Args:
        fit_f (FixedEffectsFit): Female fit
        fit_m (FixedEffectsFit): Male fit on the same classing

    Returns:
        KOBReport: Firm variant with sorting, bargaining and firm component
    """
    if fit_f.K != fit_m.K:
        raise EstimationError("Per-gender fits use different classings")
    warnings = []
    psi_f, psi_m = _common_reference(fit_f.psi, fit_m.psi)
    share_f, share_m = fit_f.class_shares(), fit_m.class_shares()

    for k in range(fit_f.K):
        if np.isfinite(psi_f[k]) and not np.isfinite(psi_m[k]):
            psi_m[k] = psi_f[k]
        elif np.isfinite(psi_m[k]) and not np.isfinite(psi_f[k]):
            psi_f[k] = psi_m[k]
        else:
            continue
        message = f"Class {k + 1} is present for one gender only"
        logger.warning(message)
        warnings.append(message)
    psi_f, psi_m = np.nan_to_num(psi_f), np.nan_to_num(psi_m)

    share_gap = share_f - share_m
    sorting = 0.5 * (psi_f @ share_gap + psi_m @ share_gap)
    bargaining = 0.5 * (share_f @ (psi_f - psi_m) + share_m @ (psi_f - psi_m))
    firm = sorting + bargaining
    overall = fit_f.mean_wage - fit_m.mean_wage

    return KOBReport(
        overall=overall,
        explained=firm,
        unexplained=overall - firm,
        kind="cakm",
        firm_component=firm,
        sorting=float(sorting),
        bargaining=float(bargaining),
        n_female=len(fit_f.frame),
        n_male=len(fit_m.frame),
        warnings=warnings,
    )


@dataclass
class VarDecompReport:
    var_w: float
    components: dict
    identity_error: float
    n: int = 0

    @property
    def shares(self):
        return {name: value / self.var_w for name, value in self.components.items()}

    def to_dict(self):
        return {
            "var_w": self.var_w,
            "components": dict(self.components),
            "shares": self.shares,
            "identity_error": self.identity_error,
            "n": self.n,
        }


def variance_decomposition(fit):
    """
    Variance of log wages split into effect variances and covariances.

    Seven components: Var(firm), Var(worker), Var(xb), 2Cov(worker, firm),
    2Cov(worker, xb), 2Cov(firm, xb) and Var(resid), all with ddof 0.

    Args:
        fit (FixedEffectsFit): clustered-AKM or BLM fit

    Returns:
        VarDecompReport: Components, shares and the identity error
    """
    frame = fit.frame
    var = lambda a: float(np.var(frame[a]))
    cov2 = lambda a, b: float(2.0 * np.mean((frame[a] - frame[a].mean()) * (frame[b] - frame[b].mean())))
    components = {
        "var_firm": var("firm"),
        "var_worker": var("worker"),
        "var_xb": var("xb"),
        "cov_worker_firm": cov2("worker", "firm"),
        "cov_worker_xb": cov2("worker", "xb"),
        "cov_firm_xb": cov2("firm", "xb"),
        "var_resid": var("resid"),
    }
    var_w = var("y")
    return VarDecompReport(
        var_w=var_w,
        components=components,
        identity_error=var_w - math.fsum(components.values()),
        n=len(frame),
    )


def theil_index(match_counts):
    """
    Theil index over per-match worker counts.

    Args:
        match_counts (dict or array-like): Worker counts per (class, type) cell

    Returns:
        float: T = mean of (N/Nbar) log(N/Nbar), empty cells contributing 0

    Raises:
        DataError: If there are no cells or all counts are zero
    """
    values = np.asarray(list(match_counts.values()) if isinstance(match_counts, dict) else match_counts, dtype=float).ravel()
    if values.size == 0:
        raise DataError("theil_index needs at least one cell")
    if np.any(values < 0):
        raise DataError("Match counts must be non-negative")
    mean = values.mean()
    if mean == 0:
        raise DataError("theil_index needs at least one non-zero count")
    ratio = values / mean
    terms = np.zeros_like(ratio)
    positive = ratio > 0
    terms[positive] = ratio[positive] * np.log(ratio[positive])
    return float(terms.mean())


def theil_by_tier(counts):
    """
    Theil index of the low and high halves of the class range.

    Args:
        counts (numpy.ndarray): (K, L) worker counts

    Returns:
        dict: ``low`` over classes 1..ceil(K/2), ``high`` over the rest (None when empty)
    """
    counts = np.asarray(counts, dtype=float)
    split = math.ceil(counts.shape[0] / 2)
    high = counts[split:]
    return {
        "low": theil_index(counts[:split]),
        "high": theil_index(high) if high.size and high.sum() > 0 else None,
    }


@dataclass
class AdditiveFit:
    """Type effects alpha (L), class effects psi (K) and residual match effects."""
    alpha: np.ndarray
    psi: np.ndarray
    weights: np.ndarray
    means: np.ndarray
    reference_class: int = 1

    @property
    def predicted(self):
        return self.psi[:, None] + self.alpha[None, :]

    @property
    def match_effects(self):
        return np.where(self.weights > 0, self.means - self.predicted, np.nan)


def bipartite_components(weights):
    """Connected sets of the class-type support graph; classes are 1..K, types are -1..-L."""
    K, L = weights.shape
    rows, cols = np.nonzero(weights > 0)
    graph = sp.coo_matrix((np.ones(len(rows)), (rows, K + cols)), shape=(K + L, K + L)).tocsr()
    _, labels = connected_components(graph, directed=False)
    used = np.concatenate([weights.sum(axis=1) > 0, weights.sum(axis=0) > 0])
    groups = {}
    for node in np.flatnonzero(used):
        groups.setdefault(labels[node], []).append(int(node) + 1 if node < K else -(int(node) - K + 1))
    return sorted(groups.values(), key=lambda g: (-len(g), g))


def weighted_tw_fe(moments, gender):
    """
    Worker-count weighted two-way fit of cell means on type and class effects.

    Minimises sum n_kl (mu_kl - alpha_l - psi_k)^2 with psi_1 = 0 (or the
    lowest class with workers).

    Args:
        moments (MatchMoments): Per-gender cell moments
        gender (str): F, M or pooled

    Returns:
        AdditiveFit: Effects and residual match effects

    Raises:
        DisconnectedGraphError: If the class-type support graph is disconnected
    """
    means = np.asarray(moments.mean[gender], dtype=float)
    weights = np.asarray(moments.count[gender], dtype=float)
    K, L = weights.shape
    if weights.sum() <= 0:
        raise DataError(f"No match moments for {gender!r}")

    components = bipartite_components(weights)
    if len(components) > 1:
        raise DisconnectedGraphError(
            f"Class-type support of {gender!r} splits into {len(components)} sets",
            components=components,
        )

    rows, cols = np.nonzero(weights > 0)
    classes = sorted(set(rows))
    types = sorted(set(cols))
    reference = classes[0]
    X = np.zeros((len(rows), len(types) + len(classes) - 1))
    for j, l in enumerate(types):
        X[cols == l, j] = 1.0
    for j, k in enumerate(classes[1:]):
        X[rows == k, len(types) + j] = 1.0

    params = WLS(means[rows, cols], X, weights=weights[rows, cols]).fit().params
    alpha = np.full(L, np.nan)
    psi = np.full(K, np.nan)
    alpha[types] = params[:len(types)]
    psi[reference] = 0.0
    psi[classes[1:]] = params[len(types):]
    return AdditiveFit(alpha=alpha, psi=psi, weights=weights, means=np.where(weights > 0, means, np.nan),
                       reference_class=reference + 1)


def weighted_average(records, weights):
    """Weighted average of numeric fields across per-biennial records."""
    weights = np.asarray(weights, dtype=float)
    if len(records) == 0 or weights.sum() <= 0:
        return {}
    result = {}
    for key, value in records[0].items():
        if isinstance(value, (int, float, np.floating)) and not isinstance(value, bool):
            values = np.array([record.get(key) for record in records], dtype=float)
            if np.all(np.isfinite(values)):
                result[key] = float(values @ weights / weights.sum())
    return result
