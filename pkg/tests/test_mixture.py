# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import numpy as np
import pytest

from wagegap.core.exceptions import ConfigError, EstimationError
from wagegap.core.firmcluster import FirmClassing
from wagegap.core.mixture import (
    MixtureModel, TypeAssignment, align_types, fit_movers, fit_stayers, loglik, map_assign, mover_data,
    stayer_data, type_proportions,
)
from wagegap.utils.synth import realized_type_shares

from conftest import make_panel


@pytest.fixture(scope="module")
def true_classing(separated_market):
    _, truth = separated_market
    return FirmClassing.from_assignment(truth.firm_class, K=3)


@pytest.fixture(scope="module")
def fitted(separated_market, true_classing):
    panel, truth = separated_market
    blind = panel.blind()
    movers = fit_movers(blind, true_classing, L=2, reps=4, seed=21)
    model = fit_stayers(blind, true_classing, movers)
    aligned, _ = align_types(model, truth.spec.mu[:, :, 0])
    return aligned


def two_class_model(p, mover_counts=None):
    return MixtureModel(
        K=2, L=2, p=np.asarray(p, dtype=float), q=np.full((2, 2), 0.5),
        mu1=np.array([[0.0, 1.0], [2.0, 3.0]]), sd1=np.full((2, 2), 0.1),
        mu2=np.array([[0.0, 1.0], [2.0, 3.0]]), sd2=np.full((2, 2), 0.1),
        mover_counts=None if mover_counts is None else np.asarray(mover_counts, dtype=float),
    )


def test_em_likelihood_never_decreases(fitted):
    path = np.asarray(fitted.loglik_path)
    assert len(path) >= 2
    assert np.all(np.diff(path) >= -1e-9)
    assert fitted.loglik == path[-1]


def test_mixture_recovers_type_shares(separated_market, fitted):
    panel, truth = separated_market
    realized = realized_type_shares(truth, panel)
    counts = fitted.mover_counts
    dense = counts >= 30
    assert dense.sum() >= 5
    np.testing.assert_allclose(fitted.p[dense], realized["p"][dense], atol=0.02)
    np.testing.assert_allclose(fitted.q, realized["q"], atol=0.02)


def test_mixture_recovers_wage_means(separated_market, fitted):
    _, truth = separated_market
    np.testing.assert_allclose(fitted.mu1, truth.spec.mu[:, :, 0], atol=0.03)
    np.testing.assert_allclose(fitted.mu2, truth.spec.mu[:, :, 1], atol=0.03)
    np.testing.assert_allclose(fitted.sd1, 0.1, atol=0.02)


def test_probability_tables_are_distributions(fitted):
    np.testing.assert_allclose(fitted.p.sum(axis=2), 1.0)
    np.testing.assert_allclose(fitted.q.sum(axis=1), 1.0)
    assert fitted.sd1.min() >= 1e-3


def test_map_assignment_matches_true_types(separated_market, true_classing, fitted):
    panel, truth = separated_market
    assignment = map_assign(panel.blind(), true_classing, fitted)
    true = truth.worker_type.loc[assignment.worker_ids].to_numpy()
    assert (assignment.types == true).mean() >= 0.99
    np.testing.assert_allclose(assignment.posterior.sum(axis=1), 1.0)
    np.testing.assert_array_equal(assignment.mover, panel.frame["mover"].to_numpy())


def test_fit_is_deterministic_across_thread_counts(separated_market, true_classing):
    blind = separated_market[0].blind()
    first = fit_movers(blind, true_classing, L=2, reps=3, seed=8)
    second = fit_movers(blind, true_classing, L=2, reps=3, seed=8, n_jobs=2)
    assert first.loglik == second.loglik
    np.testing.assert_array_equal(first.p, second.p)
    assert first.restart == second.restart


def test_types_are_ordered_by_expected_wage(separated_market, true_classing):
    model = fit_movers(separated_market[0].blind(), true_classing, L=2, reps=2, seed=2)
    assert np.all(model.mu1[:, 0] < model.mu1[:, 1])


def test_fit_movers_argument_checks(hand_panel, hand_classing):
    with pytest.raises(ConfigError):
        fit_movers(hand_panel, hand_classing, L=2, seed=None)
    with pytest.raises(ConfigError):
        fit_movers(hand_panel, hand_classing, L=0, seed=1)
    stayers_only = hand_panel.subset(~hand_panel.frame["mover"].to_numpy())
    with pytest.raises(EstimationError):
        fit_movers(stayers_only, hand_classing, L=2, seed=1)


def test_sparse_cells_are_flagged(hand_panel, hand_classing):
    model = fit_movers(hand_panel, hand_classing, L=1, reps=1, seed=1)
    assert model.sparse_cells
    assert model.warnings
    assert model.mover_counts.sum() == 3


def test_class_without_stayers_uses_origin_marginal():
    panel = make_panel([
        (1, "F", 1, 1, 0.0, 0.0), (2, "M", 1, 1, 1.0, 1.0),
        (3, "F", 1, 2, 0.0, 2.0), (4, "M", 2, 1, 3.0, 1.0),
    ])
    classing = FirmClassing.from_assignment({1: 1, 2: 2})
    p = [[[0.5, 0.5], [0.8, 0.2]], [[0.1, 0.9], [0.5, 0.5]]]
    model = two_class_model(p, mover_counts=[[0, 1], [3, 0]])
    np.testing.assert_allclose(model.origin_marginal(), [[0.8, 0.2], [0.1, 0.9]])
    fitted = fit_stayers(panel, classing, model)
    np.testing.assert_allclose(fitted.q[1], [0.1, 0.9])
    assert fitted.warnings
    np.testing.assert_allclose(fitted.q[0], [0.5, 0.5], atol=1e-6)


def test_loglik_of_one_mover_by_hand():
    panel = make_panel([(1, "F", 1, 2, 0.0, 2.0)])
    classing = FirmClassing.from_assignment({1: 1, 2: 2})
    model = two_class_model([[[0.5, 0.5], [0.25, 0.75]], [[0.5, 0.5], [0.5, 0.5]]])
    data = mover_data(panel, classing)
    density = 1 / (np.sqrt(2 * np.pi) * 0.1)
    # type 1 matches both wages exactly; type 2 is ten sds away in each period
    expected = np.log(0.25 * density ** 2 + 0.75 * density ** 2 * np.exp(-100.0))
    assert loglik(model, data) == pytest.approx(expected, rel=1e-12)
    assert len(stayer_data(panel, classing)) == 0


def test_map_ties_go_to_the_lowest_type():
    panel = make_panel([(1, "F", 1, 1, 0.5, 0.5)])
    classing = FirmClassing.from_assignment({1: 1, 2: 2})
    assignment = map_assign(panel, classing, two_class_model(np.full((2, 2, 2), 0.5)))
    np.testing.assert_allclose(assignment.posterior, [[0.5, 0.5]])
    assert assignment.types[0] == 1


def test_model_and_assignment_round_trip(fitted):
    back = MixtureModel.from_dict(fitted.to_dict())
    np.testing.assert_allclose(back.p, fitted.p)
    np.testing.assert_allclose(back.sd2, fitted.sd2)
    assert back.loglik == fitted.loglik

    assignment = TypeAssignment(
        worker_ids=np.array([3, 1]), posterior=np.array([[0.9, 0.1], [0.2, 0.8]]),
        types=np.array([1, 2]), mover=np.array([False, True]),
    )
    again = TypeAssignment.from_frame(assignment.to_frame())
    np.testing.assert_array_equal(again.type_of([1, 3]), [2, 1])
    np.testing.assert_allclose(again.posterior, assignment.posterior)


def test_align_types_undoes_a_permutation(fitted):
    swapped = fitted.permute_types([1, 0])
    aligned, order = align_types(swapped, fitted.mu1)
    np.testing.assert_array_equal(order, [1, 0])
    np.testing.assert_allclose(aligned.mu1, fitted.mu1)


def test_type_proportions_by_gender(hand_panel, hand_classing):
    assignment = TypeAssignment(
        worker_ids=np.arange(1, 7), posterior=np.full((6, 2), 0.5),
        types=np.array([1, 2, 2, 1, 1, 2]), mover=hand_panel.frame["mover"].to_numpy(),
    )
    shares = type_proportions(hand_panel, hand_classing, assignment)
    female = shares["F"]
    # women: worker 1 (class 1, type 1), 3 (class 2, type 2), 6 (class 2, type 2)
    assert female["type"].loc[2] == pytest.approx(2 / 3)
    assert female["class"].loc[1] == pytest.approx(1 / 3)
    assert female["type_given_class"].loc[2, 2] == pytest.approx(1.0)
    assert shares["M"]["type"].sum() == pytest.approx(1.0)


@pytest.mark.slow
def test_recovery_at_acceptance_scale(acceptance_market):
    panel, truth = acceptance_market
    assert panel.frame["mover"].sum() >= 45000
    classing = FirmClassing.from_assignment(truth.firm_class, K=5)
    blind = panel.blind()
    movers = fit_movers(blind, classing, L=3, reps=4, seed=5)
    assert np.all(np.diff(np.asarray(movers.loglik_path)) >= -1e-9)
    model, _ = align_types(fit_stayers(blind, classing, movers), truth.spec.mu[:, :, 0])

    np.testing.assert_allclose(model.mu1, truth.spec.mu[:, :, 0], atol=0.02)
    np.testing.assert_allclose(model.mu2, truth.spec.mu[:, :, 1], atol=0.02)
    realized = realized_type_shares(truth, panel)
    np.testing.assert_allclose(model.p, realized["p"], atol=0.02)
    np.testing.assert_allclose(model.q, realized["q"], atol=0.02)
