# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import pandas as pd

from ..utils.decompose import weighted_tw_fe
from ..utils.panel import AGE_BANDS, GENDERS, SIZE_BANDS, age_band, size_band
from ..utils.parallel import ordered_map
from .exceptions import ConfigError, DataError, DisconnectedGraphError

logger = logging.getLogger(__name__)

LOW_SUPPORT = 5
POOLED = "pooled"


@dataclass
class MatchMoments:
    """
    Per-gender log wage moments of every (class, type) cell.

    ``mean``, ``var`` and ``count`` map F, M and ``pooled`` to (K, L) arrays;
    means and variances are NaN in empty cells. Counts may be fractional in
    counterfactual allocations.
    """
    K: int
    L: int
    mean: dict
    var: dict
    count: dict
    low_support_threshold: int = LOW_SUPPORT
    warnings: list = field(default_factory=list)

    @property
    def genders(self):
        return [g for g in GENDERS if g in self.count]

    def low_support(self, gender):
        counts = self.count[gender]
        return (counts > 0) & (counts < self.low_support_threshold)

    def total(self, gender):
        return float(self.count[gender].sum())

    def class_marginal(self, gender):
        return self.count[gender].sum(axis=1) / self.total(gender)

    def type_marginal(self, gender):
        return self.count[gender].sum(axis=0) / self.total(gender)

    def expected_wage(self, gender):
        counts, means = self.count[gender], self.mean[gender]
        used = counts > 0
        return float((counts[used] * means[used]).sum() / counts[used].sum())

    def table(self):
        rows = []
        for gender in list(self.genders) + [POOLED]:
            for k in range(self.K):
                for l in range(self.L):
                    rows.append({
                        "gender": gender, "k": k + 1, "l": l + 1,
                        "count": self.count[gender][k, l],
                        "mean": self.mean[gender][k, l],
                        "var": self.var[gender][k, l],
                    })
        return pd.DataFrame(rows)


def _cell_stats(k, l, y, K, L):
    count = np.zeros((K, L))
    total = np.zeros((K, L))
    np.add.at(count, (k, l), 1.0)
    np.add.at(total, (k, l), y)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = total / count
        sq = np.zeros((K, L))
        np.add.at(sq, (k, l), (y - mean[k, l]) ** 2)
        var = sq / count
    return mean, var, count


def match_moments(panel, classing, assignment, periods=(1, 2), low_support=LOW_SUPPORT):
    """
    Empirical log wage moments per gender and (class, type) cell.

    Each worker-year of the chosen periods counts once, classed by the firm of
    that period and typed by the worker's MAP type.

    Args:
        panel (BiennialPanel): Panel with gender
        classing (FirmClassing): Firm classes
        assignment (TypeAssignment): MAP types
        periods (tuple, optional): Periods to pool
        low_support (int, optional): Cells below this count are flagged

    Returns:
        MatchMoments: Per-gender and pooled cell moments
    """
    if panel.is_blind:
        raise DataError("match_moments needs the gender column")
    long = panel.long()
    long = long[long["period"].isin(periods)]
    K = classing.K
    L = assignment.posterior.shape[1]
    k = classing.class_of(long["firm_id"]) - 1
    l = assignment.type_of(long["worker_id"]) - 1
    y = long["log_wage"].to_numpy(dtype=float)
    gender = long["gender"].to_numpy()

    mean, var, count = {}, {}, {}
    for g in GENDERS:
        mask = gender == g
        if mask.any():
            mean[g], var[g], count[g] = _cell_stats(k[mask], l[mask], y[mask], K, L)
    mean[POOLED], var[POOLED], count[POOLED] = _cell_stats(k, l, y, K, L)

    moments = MatchMoments(K=K, L=L, mean=mean, var=var, count=count, low_support_threshold=low_support)
    for g in moments.genders:
        flagged = int(moments.low_support(g).sum())
        if flagged:
            logger.info("%d %s cells have fewer than %d worker-years", flagged, g, low_support)
    return moments


def _additive_prediction(moments, gender):
    try:
        return weighted_tw_fe(moments, gender).predicted
    except (DisconnectedGraphError, DataError) as e:
        logger.warning("No additive fill for %s cells: %s", gender, e.message)
        return np.full((moments.K, moments.L), np.nan)


def filled_means(moments, gender):
    """
    Cell means for every cell: observed, else the gender's additive
    prediction, else the pooled observed mean, else the pooled additive
    prediction.
    """
    result = np.where(moments.count[gender] > 0, moments.mean[gender], np.nan)
    for fallback in (
        lambda: _additive_prediction(moments, gender),
        lambda: np.where(moments.count[POOLED] > 0, moments.mean[POOLED], np.nan),
        lambda: _additive_prediction(moments, POOLED),
    ):
        missing = np.isnan(result)
        if not missing.any():
            break
        result = np.where(missing, fallback(), result)
    return result


def filled_vars(moments, gender):
    result = np.where(moments.count[gender] > 0, moments.var[gender], np.nan)
    result = np.where(np.isnan(result), moments.var[POOLED], result)
    return np.nan_to_num(result)


def diagonal_fill(type_counts, slots):
    """
    Assortative allocation: the highest classes hire the highest types.

    Walks classes and types from the top, filling each class's slots with
    the best remaining workers.

    Returns:
        numpy.ndarray: (K, L) allocation with the given margins
    """
    type_left = np.asarray(type_counts, dtype=float).copy()
    slot_left = np.asarray(slots, dtype=float).copy()
    K, L = len(slot_left), len(type_left)
    alloc = np.zeros((K, L))
    k, l = K - 1, L - 1
    while k >= 0 and l >= 0:
        take = min(slot_left[k], type_left[l])
        alloc[k, l] += take
        slot_left[k] -= take
        type_left[l] -= take
        if slot_left[k] <= 1e-12 * max(1.0, take):
            k -= 1
        if type_left[l] <= 1e-12 * max(1.0, take):
            l -= 1
    return alloc


def _with_counts(moments, counts, means, warnings=None):
    return MatchMoments(
        K=moments.K, L=moments.L,
        mean={g: means[g] for g in counts},
        var={g: filled_vars(moments, g) if g in moments.count else np.zeros((moments.K, moments.L)) for g in counts},
        count=counts,
        low_support_threshold=moments.low_support_threshold,
        warnings=list(warnings or []),
    )


def separable_market(moments, method="diagonal", slots=None):
    """
    Counterfactual market without complementarities.

    ``diagonal`` keeps each gender's type counts and class slot totals and
    fills classes from the top with the highest types; realized cells take
    their wages from the baseline moments. ``additive`` keeps the observed
    allocation and prices every cell with the gender's weighted two-way
    additive fit.

    Args:
        moments (MatchMoments): Baseline moments
        method (str, optional): diagonal or additive
        slots (dict, optional): gender -> class slot counts overriding the observed ones

    Returns:
        MatchMoments: Allocation counts and cell means of the separable market
    """
    counts, means, warnings = {}, {}, []
    for g in moments.genders:
        observed = moments.count[g]
        if method == "additive":
            counts[g] = observed.copy()
            prediction = weighted_tw_fe(moments, g).predicted
            means[g] = np.where(np.isnan(prediction), filled_means(moments, g), prediction)
            continue
        if method != "diagonal":
            raise ConfigError(f"Unknown separable method {method!r}")

        type_counts = observed.sum(axis=0)
        class_slots = observed.sum(axis=1) if slots is None or g not in slots else np.asarray(slots[g], dtype=float)
        if not np.isclose(class_slots.sum(), type_counts.sum(), rtol=1e-12, atol=0.0):
            message = f"{g} slot total {class_slots.sum():g} differs from worker total {type_counts.sum():g}; slots scaled"
            logger.warning(message)
            warnings.append(message)
            class_slots = class_slots * type_counts.sum() / class_slots.sum()
        counts[g] = diagonal_fill(type_counts, class_slots)
        means[g] = filled_means(moments, g)
    return _with_counts(moments, counts, means, warnings)


@dataclass
class GapDecomposition:
    """Female minus male gap in the baseline and separable markets and its parts."""
    baseline: float
    separable: float
    complementarity: float
    sorting: float
    bargaining: float
    group: str = "All"
    mode: str = "expectation"
    method: str = "diagonal"
    weight: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def residual(self):
        return self.baseline - self.complementarity - self.sorting - self.bargaining

    def share(self, value):
        return value / self.baseline if self.baseline != 0 else float("nan")

    def row(self):
        return {
            "group": self.group,
            "baseline": self.baseline,
            "separable": self.separable,
            "complementarity": self.complementarity,
            "sorting": self.sorting,
            "bargaining": self.bargaining,
            "residual": self.residual,
            "complementarity_share": self.share(self.complementarity),
            "sorting_share": self.share(self.sorting),
            "bargaining_share": self.share(self.bargaining),
            "weight": self.weight,
        }


class _WageEvaluator:
    """Expected wage of an allocation, exactly or by seeded simulation."""

    def __init__(self, mode, draws, seed):
        if mode not in ("expectation", "draws"):
            raise ConfigError(f"Unknown counterfactual mode {mode!r}")
        if mode == "draws" and seed is None:
            raise ConfigError("Draw mode needs an explicit seed")
        self.mode = mode
        self.draws = int(draws)
        self.seed = seed
        self.calls = 0

    def __call__(self, counts, means, variances):
        used = counts > 0
        if self.mode == "expectation":
            return float((counts[used] * means[used]).sum() / counts[used].sum())
        rng = np.random.default_rng(np.random.SeedSequence([int(self.seed), self.calls]))
        self.calls += 1
        shares = counts[used] / counts[used].sum()
        cells = rng.choice(len(shares), size=self.draws, p=shares)
        wages = rng.normal(means[used][cells], np.sqrt(variances[used][cells]))
        return float(wages.mean())


def decompose_gap(moments, mode="expectation", draws=100000, seed=None, method="diagonal", group="All"):
    """
    Split the gender gap into complementarity, sorting and bargaining.

    Complementarity is the baseline gap minus the separable-market gap.
    Sorting is the separable gap minus the gap obtained when women in the
    separable market take the male class distribution (scaled to the female
    total). Bargaining is the separable gap minus the gap obtained when both
    genders are paid the pooled cell means.

    Args:
        moments (MatchMoments): Baseline moments
        mode (str, optional): expectation or draws
        draws (int, optional): Simulated workers per evaluation in draw mode
        seed (int, optional): Seed for draw mode
        method (str, optional): Separable market construction, diagonal or additive
        group (str, optional): Label of the sample

    Returns:
        GapDecomposition: Gaps and components
    """
    if any(g not in moments.count or moments.total(g) == 0 for g in GENDERS):
        raise DataError("decompose_gap needs workers of both genders")
    wage = _WageEvaluator(mode, draws, seed)

    observed_means = {g: filled_means(moments, g) for g in GENDERS}
    variances = {g: filled_vars(moments, g) for g in GENDERS}
    baseline = {g: wage(moments.count[g], observed_means[g], variances[g]) for g in GENDERS}

    separable = separable_market(moments, method=method)
    sep = {g: wage(separable.count[g], separable.mean[g], variances[g]) for g in GENDERS}
    separable_gap = sep["F"] - sep["M"]

    female_total = moments.total("F")
    male_slots = moments.class_marginal("M") * female_total
    if method == "diagonal":
        sorted_counts = separable_market(moments, slots={"F": male_slots}).count["F"]
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            factor = np.where(moments.count["F"].sum(axis=1) > 0,
                              male_slots / moments.count["F"].sum(axis=1), 0.0)
        sorted_counts = moments.count["F"] * factor[:, None]
        if not np.isclose(sorted_counts.sum(), female_total):
            # male classes without women cannot be reweighted; fall back to the diagonal fill
            sorted_counts = separable_market(moments, slots={"F": male_slots}).count["F"]
    sorting_female = wage(sorted_counts, separable.mean["F"], variances["F"])
    sorting = separable_gap - (sorting_female - sep["M"])

    pooled = filled_means(moments, POOLED)
    pooled_var = filled_vars(moments, POOLED)
    pooled_gap = (
        wage(separable.count["F"], pooled, pooled_var)
        - wage(separable.count["M"], pooled, pooled_var)
    )
    bargaining = separable_gap - pooled_gap

    baseline_gap = baseline["F"] - baseline["M"]
    return GapDecomposition(
        baseline=baseline_gap,
        separable=separable_gap,
        complementarity=baseline_gap - separable_gap,
        sorting=sorting,
        bargaining=bargaining,
        group=group,
        mode=mode,
        method=method,
        weight=moments.total("F") + moments.total("M"),
        warnings=list(separable.warnings),
    )


def random_reallocation(moments):
    """
    Gap when each gender's types and classes are matched independently.

    Returns:
        dict: expected wage per gender and the resulting gap
    """
    result = {}
    for g in GENDERS:
        counts = moments.total(g) * np.outer(moments.class_marginal(g), moments.type_marginal(g))
        result[g] = float((counts * filled_means(moments, g)).sum() / counts.sum())
    result["gap"] = result["F"] - result["M"]
    return result


def payment_schedules(moments):
    """Observed cell means next to the additive prediction, per gender."""
    rows = []
    for g in moments.genders:
        prediction = _additive_prediction(moments, g)
        for k in range(moments.K):
            for l in range(moments.L):
                rows.append({
                    "gender": g, "k": k + 1, "l": l + 1,
                    "count": moments.count[g][k, l],
                    "observed": moments.mean[g][k, l],
                    "additive": prediction[k, l],
                })
    return pd.DataFrame(rows)


SUBGROUP_FILTERS = ("education", "age", "size", "occupation")


def subgroup_labels(panel, by):
    """Partition label of every worker, from period-1 attributes."""
    frame = panel.frame
    if by == "education":
        return frame["education_1"].astype(str).to_numpy()
    if by == "occupation":
        return frame["occupation_1"].astype(str).to_numpy()
    if by == "age":
        return age_band(frame["age_1"].to_numpy())
    if by == "size":
        sizes = frame.groupby("firm_id_1")["worker_id"].transform("size").to_numpy()
        return size_band(sizes)
    raise ConfigError(f"Unknown subgroup filter {by!r}; use one of {SUBGROUP_FILTERS}")


def _group_order(by, labels):
    order = {"age": AGE_BANDS, "size": SIZE_BANDS}.get(by)
    present = set(labels)
    if order:
        return [g for g in order if g in present]
    return sorted(present)


def _decompose_group(item, mode, draws, seed, method):
    label, moments = item
    return decompose_gap(moments, mode=mode, draws=draws, seed=seed, method=method, group=label)


def subgroup_decompose(panel, classing, assignment, by, mode="expectation", draws=100000, seed=None,
                       method="diagonal", n_jobs=1):
    """
    Gap decomposition within each subgroup of a partition of the workers.

    Subgroups missing one gender are skipped with a warning.

    Args:
        panel (BiennialPanel): Panel with gender
        classing (FirmClassing): Firm classes
        assignment (TypeAssignment): MAP types
        by (str): education, age, size or occupation
        n_jobs (int, optional): Worker processes

    Returns:
        tuple: (list of GapDecomposition, list of skipped labels)
    """
    labels = subgroup_labels(panel, by)
    items, skipped = [], []
    for label in _group_order(by, labels):
        part = panel.subset(labels == label)
        genders = set(part.frame["gender"])
        if not set(GENDERS) <= genders:
            logger.warning("Subgroup %s=%s lacks one gender; skipped", by, label)
            skipped.append(label)
            continue
        items.append((f"{by}:{label}", match_moments(part, classing, assignment)))

    results = ordered_map(
        partial(_decompose_group, mode=mode, draws=draws, seed=seed, method=method),
        items, n_jobs=n_jobs,
    )
    return results, skipped
