# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import numpy as np
import pandas as pd
import pytest

from wagegap.core.counterfactual import POOLED, MatchMoments
from wagegap.core.firmcluster import FirmClassing
from wagegap.core.mixture import TypeAssignment
from wagegap.utils.panel import BiennialPanel
from wagegap.utils.synth import MarketSpec, generate_market


def observation(worker_id, firm_id, year, log_wage, gender="F", age=35, **extra):
    row = {
        "worker_id": worker_id,
        "firm_id": firm_id,
        "year": year,
        "log_wage": log_wage,
        "hours": 40.0,
        "gender": gender,
        "age": age,
        "education": "HighSchool",
        "occupation": 1,
        "sector": "Services",
        "tenure": 3.0,
        "contract_span": 365,
    }
    row.update(extra)
    return row


def make_panel(rows, year_pair=(2010, 2012)):
    """Balanced panel from (worker, gender, firm1, firm2, w1, w2[, age]) tuples."""
    first, second = [], []
    for row in rows:
        worker, gender, f1, f2, w1, w2 = row[:6]
        age = row[6] if len(row) > 6 else 30 + worker % 25
        first.append(observation(worker, f1, year_pair[0], w1, gender, age,
                                 education=("Dropout", "HighSchool", "College")[worker % 3],
                                 occupation=1 + worker % 4))
        second.append(observation(worker, f2, year_pair[1], w2, gender, age + 2,
                                  education=("Dropout", "HighSchool", "College")[worker % 3],
                                  occupation=1 + worker % 4))
    return BiennialPanel.from_periods(pd.DataFrame(first), pd.DataFrame(second), year_pair)


def separated_spec(seed=11, firms_per_class=(40, 40, 40), mover_share=0.5, **overrides):
    """Three classes and two types, every cell mean at least 0.5 apart with sd 0.1."""
    K, L = 3, 2
    kwargs = dict(
        K=K,
        L=L,
        firms_per_class=list(firms_per_class),
        type_marginals={"F": [0.55, 0.45], "M": [0.4, 0.6]},
        class_attachment={
            "F": [[0.5, 0.3, 0.2], [0.25, 0.35, 0.4]],
            "M": [[0.4, 0.35, 0.25], [0.15, 0.35, 0.5]],
        },
        transition_kernel=np.full((L, K, K), 1.0 / K),
        mu=np.array([[[1.0 * k + 0.5 * l] * 2 for l in range(L)] for k in range(K)]),
        sigma=0.1,
        seed=seed,
        mover_share=mover_share,
    )
    kwargs.update(overrides)
    return MarketSpec(**kwargs)


@pytest.fixture
def hand_panel():
    """Six workers over four firms; workers 1, 2 and 5 move."""
    return make_panel([
        (1, "F", 1, 2, 1.0, 1.4),
        (2, "M", 2, 3, 1.5, 2.1),
        (3, "F", 3, 3, 2.0, 2.1),
        (4, "M", 1, 1, 1.1, 1.2),
        (5, "M", 3, 1, 2.2, 1.3),
        (6, "F", 4, 4, 2.5, 2.6),
    ])


@pytest.fixture
def hand_classing():
    return FirmClassing.from_assignment({1: 1, 2: 1, 3: 2, 4: 2}, K=2)


@pytest.fixture(scope="session")
def separated_market():
    return generate_market(separated_spec())


@pytest.fixture(scope="session")
def additive_market():
    K, L = 3, 2
    spec = MarketSpec.additive(
        type_effects=[0.0, 0.6],
        class_effects=[1.0, 1.4, 2.0],
        firms_per_class=[30, 30, 30],
        type_marginals={"F": [0.5, 0.5], "M": [0.45, 0.55]},
        class_attachment={
            "F": [[0.4, 0.35, 0.25], [0.3, 0.35, 0.35]],
            "M": [[0.35, 0.35, 0.3], [0.25, 0.35, 0.4]],
        },
        transition_kernel=np.full((L, K, K), 1.0 / K),
        sigma=0.02,
        seed=5,
        mover_share=0.5,
    )
    return generate_market(spec)


def acceptance_spec(seed=17):
    """Five classes and three types, about 50k movers; cell means at least 3 sd apart."""
    K, L = 5, 3
    mu = np.arange(K)[:, None] * 1.0 + np.arange(L)[None, :] * 0.35
    return MarketSpec(
        K=K,
        L=L,
        firms_per_class=[1150] * K,
        type_marginals={"F": [0.3, 0.4, 0.3], "M": [0.25, 0.35, 0.4]},
        class_attachment={
            "F": [[0.3, 0.25, 0.2, 0.15, 0.1], [0.2, 0.2, 0.2, 0.2, 0.2], [0.1, 0.15, 0.2, 0.25, 0.3]],
            "M": [[0.25, 0.25, 0.2, 0.15, 0.15], [0.15, 0.2, 0.2, 0.2, 0.25], [0.1, 0.1, 0.2, 0.25, 0.35]],
        },
        transition_kernel=np.full((L, K, K), 1.0 / K),
        mu=np.repeat(mu[:, :, None], 2, axis=2),
        sigma=0.1,
        seed=seed,
        mover_share=0.5,
    )


@pytest.fixture(scope="session")
def acceptance_market():
    return generate_market(acceptance_spec())


def cell_moments(counts, means):
    """MatchMoments from per-gender (K, L) counts and means; pooled cells are count weighted."""
    counts = {g: np.asarray(c, dtype=float) for g, c in counts.items()}
    means = {g: np.where(counts[g] > 0, np.asarray(m, dtype=float), np.nan) for g, m in means.items()}
    pooled = sum(counts.values())
    mass = sum(np.nan_to_num(means[g]) * counts[g] for g in counts)
    with np.errstate(invalid="ignore"):
        means[POOLED] = np.where(pooled > 0, mass / pooled, np.nan)
    counts[POOLED] = pooled
    K, L = pooled.shape
    return MatchMoments(K=K, L=L, mean=means, var={g: np.zeros((K, L)) for g in counts}, count=counts)


def true_assignment(truth, panel):
    ids = panel.frame["worker_id"].to_numpy()
    types = truth.worker_type.loc[ids].to_numpy()
    posterior = np.eye(truth.spec.L)[types - 1]
    return TypeAssignment(worker_ids=ids, posterior=posterior, types=types, mover=panel.frame["mover"].to_numpy())
