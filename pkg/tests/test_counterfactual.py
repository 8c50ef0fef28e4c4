# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import numpy as np
import pytest

from wagegap.core.counterfactual import (
    POOLED, decompose_gap, diagonal_fill, filled_means, match_moments, payment_schedules, random_reallocation,
    separable_market, subgroup_decompose, subgroup_labels,
)
from wagegap.core.exceptions import ConfigError, DataError
from wagegap.core.firmcluster import FirmClassing
from wagegap.core.mixture import TypeAssignment
from wagegap.utils.panel import BiennialPanel
from wagegap.utils.synth import generate_market

from conftest import cell_moments, separated_spec, true_assignment

HAND_COUNTS = {"F": [[3, 1], [1, 1]], "M": [[1, 1], [1, 3]]}
HAND_MEANS = {"F": [[1.0, 1.5], [1.8, 2.6]], "M": [[1.2, 1.7], [2.0, 3.0]]}


@pytest.fixture
def hand_moments():
    return cell_moments(HAND_COUNTS, HAND_MEANS)


@pytest.fixture(scope="module")
def additive_moments(additive_market):
    panel, truth = additive_market
    classing = FirmClassing.from_assignment(truth.firm_class, K=3)
    return match_moments(panel, classing, true_assignment(truth, panel))


def test_two_by_two_market_by_hand(hand_moments):
    result = decompose_gap(hand_moments)
    # baseline F 8.9/6, M 13.9/6; separable F 9.2/6, M 14.4/6
    assert result.baseline == pytest.approx(-5 / 6, abs=1e-12)
    assert result.separable == pytest.approx(-13 / 15, abs=1e-12)
    assert result.complementarity == pytest.approx(1 / 30, abs=1e-12)
    # women take the male class mix [2, 4]: F wage 10.8/6
    assert result.sorting == pytest.approx(-4 / 15, abs=1e-12)
    # pooled cell means 1.05, 1.6, 1.9, 2.9
    assert result.bargaining == pytest.approx(-0.25, abs=1e-12)
    assert result.complementarity + result.separable == pytest.approx(result.baseline, abs=1e-15)
    assert result.weight == 12


def test_gap_row_shares(hand_moments):
    row = decompose_gap(hand_moments, group="hand").row()
    assert row["group"] == "hand"
    assert row["complementarity_share"] == pytest.approx((1 / 30) / (-5 / 6))
    assert row["residual"] == pytest.approx(row["baseline"] - row["complementarity"] - row["sorting"]
                                            - row["bargaining"])


def test_diagonal_fill_matches_top_types_to_top_classes():
    np.testing.assert_allclose(diagonal_fill([4, 2], [4, 2]), [[4, 0], [0, 2]])
    np.testing.assert_allclose(diagonal_fill([4, 2], [2, 4]), [[2, 0], [2, 2]])
    alloc = diagonal_fill([1.5, 2.5, 1.0], [3.0, 2.0])
    np.testing.assert_allclose(alloc.sum(axis=0), [1.5, 2.5, 1.0])
    np.testing.assert_allclose(alloc.sum(axis=1), [3.0, 2.0])
    np.testing.assert_allclose(alloc[1], [0.0, 1.0, 1.0])


def test_separable_market_keeps_margins(hand_moments):
    market = separable_market(hand_moments)
    for g in ("F", "M"):
        observed = hand_moments.count[g]
        np.testing.assert_allclose(market.count[g].sum(axis=0), observed.sum(axis=0))
        np.testing.assert_allclose(market.count[g].sum(axis=1), observed.sum(axis=1))


def test_separable_market_scales_mismatched_slots(hand_moments):
    market = separable_market(hand_moments, slots={"F": [1.0, 2.0]})
    assert market.count["F"].sum() == pytest.approx(6.0)
    assert market.warnings
    with pytest.raises(ConfigError):
        separable_market(hand_moments, method="greedy")


def test_exact_additive_cells_have_no_complementarity():
    a, b = np.array([0.0, 0.4, 0.9]), np.array([1.0, 1.5, 2.3])
    means = b[:, None] + a[None, :]
    moments = cell_moments(
        {"F": [[6, 2, 1], [3, 3, 2], [1, 2, 4]], "M": [[2, 1, 1], [2, 4, 3], [1, 3, 7]]},
        {"F": means, "M": means + 0.1},
    )
    for method in ("diagonal", "additive"):
        result = decompose_gap(moments, method=method)
        assert abs(result.complementarity) < 1e-9


def test_simulated_additive_market_has_no_complementarity(additive_moments):
    result = decompose_gap(additive_moments)
    assert abs(result.complementarity) < 0.005
    fit_effects = payment_schedules(additive_moments)
    used = fit_effects["count"] > 0
    deviation = (fit_effects["observed"] - fit_effects["additive"])[used].abs()
    assert deviation.max() < 0.01


def test_draw_mode_is_seeded_and_close_to_expectation(hand_moments):
    exact = decompose_gap(hand_moments)
    first = decompose_gap(hand_moments, mode="draws", draws=20000, seed=3)
    second = decompose_gap(hand_moments, mode="draws", draws=20000, seed=3)
    assert first.row() == second.row()
    # zero cell variances make draws exact up to cell sampling
    assert first.baseline == pytest.approx(exact.baseline, abs=0.03)
    with pytest.raises(ConfigError):
        decompose_gap(hand_moments, mode="draws", seed=None)
    with pytest.raises(ConfigError):
        decompose_gap(hand_moments, mode="simulate")


def test_decompose_gap_needs_both_genders():
    moments = cell_moments({"F": [[1, 1], [1, 1]]}, {"F": [[1, 2], [3, 4]]})
    with pytest.raises(DataError):
        decompose_gap(moments)


def test_filled_means_use_the_additive_prediction():
    a, b = np.array([0.0, 0.5]), np.array([1.0, 2.0, 3.0])
    means = b[:, None] + a[None, :]
    moments = cell_moments({"F": [[2, 2], [2, 0], [0, 2]], "M": [[2, 2], [2, 2], [2, 2]]}, {"F": means, "M": means})
    filled = filled_means(moments, "F")
    np.testing.assert_allclose(filled, means, atol=1e-9)
    np.testing.assert_allclose(filled_means(moments, POOLED), means, atol=1e-9)


def test_random_reallocation(hand_moments):
    result = random_reallocation(hand_moments)
    assert result["F"] == pytest.approx(52.8 / 36)
    assert result["gap"] == pytest.approx(result["F"] - result["M"])


def test_match_moments_from_a_panel(hand_panel, hand_classing):
    assignment = TypeAssignment(
        worker_ids=np.arange(1, 7), posterior=np.full((6, 2), 0.5),
        types=np.array([1, 2, 2, 1, 1, 2]), mover=hand_panel.frame["mover"].to_numpy(),
    )
    moments = match_moments(hand_panel, hand_classing, assignment)
    # worker-years of women: w1 (1.0 class 1, 1.4 class 1) type 1
    assert moments.count["F"][0, 0] == 2
    assert moments.mean["F"][0, 0] == pytest.approx(1.2)
    assert moments.count[POOLED].sum() == 12
    assert np.isnan(moments.mean["F"][0, 1])
    assert moments.low_support("F").any()
    table = moments.table()
    assert list(table.columns) == ["gender", "k", "l", "count", "mean", "var"]
    with pytest.raises(DataError):
        match_moments(hand_panel.blind(), hand_classing, assignment)


def test_subgroup_decompose_skips_single_gender_groups(separated_market):
    panel, truth = separated_market
    classing = FirmClassing.from_assignment(truth.firm_class, K=3)
    assignment = true_assignment(truth, panel)
    results, skipped = subgroup_decompose(panel, classing, assignment, "age", n_jobs=2)
    assert [r.group for r in results] == [f"age:{band}" for band in ("<=30", "31-50", ">=51")]
    assert skipped == []
    serial, _ = subgroup_decompose(panel, classing, assignment, "age")
    assert [r.row() for r in results] == [r.row() for r in serial]
    with pytest.raises(ConfigError):
        subgroup_labels(panel, "height")

    frame = panel.frame.copy()
    frame.loc[frame["education_1"] == "College", "gender"] = "F"
    women_only_college = BiennialPanel(panel.year_pair, frame)
    results, skipped = subgroup_decompose(women_only_college, classing, assignment, "education")
    assert skipped == ["College"]
    assert [r.group for r in results] == ["education:Dropout", "education:HighSchool"]


def test_subgroup_complementarity_separates_additive_from_interacting_markets(additive_market):
    panel, truth = additive_market
    classing = FirmClassing.from_assignment(truth.firm_class, K=3)
    results, _ = subgroup_decompose(panel, classing, true_assignment(truth, panel), "age")
    assert len(results) == 3
    assert all(abs(r.complementarity) < 0.01 for r in results)

    # means k + 0.5 l + k l; women sort at random while men sort positively
    K, L = 3, 2
    mu = np.array([[k + 0.5 * l + k * l for l in range(L)] for k in range(K)], dtype=float)
    spec = separated_spec(
        seed=19,
        class_attachment={
            "F": [[1 / 3, 1 / 3, 1 / 3], [1 / 3, 1 / 3, 1 / 3]],
            "M": [[0.6, 0.3, 0.1], [0.1, 0.3, 0.6]],
        },
        mu=np.repeat(mu[:, :, None], 2, axis=2),
    )
    panel, truth = generate_market(spec)
    classing = FirmClassing.from_assignment(truth.firm_class, K=3)
    results, _ = subgroup_decompose(panel, classing, true_assignment(truth, panel), "age")
    assert len(results) == 3
    assert all(r.complementarity < -0.1 for r in results)


def test_subgroup_size_bands(hand_panel):
    labels = subgroup_labels(hand_panel, "size")
    assert set(labels) == {"<10"}
