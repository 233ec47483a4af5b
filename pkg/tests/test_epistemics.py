"""Bets, Dutch books, Bayesian confirmation."""

import pytest

from branchlab.credence import CredenceTable
from branchlab.epistemics import (
    Bet,
    Payoff,
    bayes_update,
    confirm_sequence,
    dutch_book_check,
    expected_value,
)
from branchlab.errors import PartitionMismatch, ZeroEvidence
from branchlab.scenarios import builtin

HALF = CredenceTable((("up", 0.5), ("down", 0.5)))


def label(x):
    return {"label": x}


def test_the_twenty_dollar_bet_is_worth_five():
    bet = Bet(1, 20.0, (Payoff(label("down"), 50.0), Payoff(label("up"), 0.0)))
    assert expected_value(bet, HALF) == pytest.approx(5.0)


def test_zero_payoffs_cost_the_stake():
    bet = Bet(1, 7.0, (Payoff(label("down"), 0.0), Payoff(label("up"), 0.0)))
    assert expected_value(bet, HALF) == pytest.approx(-7.0)


def test_second_appendix_bet_under_even_credences():
    bet = Bet(3, 0.0, (Payoff(label("up"), 10.0), Payoff(label("down"), -20.0)))
    assert expected_value(bet, HALF) == pytest.approx(-5.0)


def test_uncovered_hypothesis_is_a_partition_mismatch():
    bet = Bet(1, 0.0, (Payoff(label("down"), 50.0),))
    with pytest.raises(PartitionMismatch):
        expected_value(bet, HALF)


def test_expected_value_is_linear_in_payoffs_and_credences():
    table = CredenceTable((("up", 0.3), ("down", 0.7)))
    def bet(a, b):
        return Bet(1, 0.0, (Payoff(label("up"), a), Payoff(label("down"), b)))
    ev1 = expected_value(bet(10.0, -4.0), table)
    ev2 = expected_value(bet(20.0, -8.0), table)
    assert ev2 == pytest.approx(2 * ev1)
    assert ev1 == pytest.approx(0.3 * 10.0 + 0.7 * -4.0)


def test_quantum_book_is_a_sure_loss_for_branch_counters():
    report = dutch_book_check(builtin("appendix_a_book"), "indifference")
    assert [d.accepted for d in report.decisions] == [True, True]
    assert [d.expected_value for d in report.decisions] == pytest.approx([0.0, 0.0])
    assert report.settlement == "branch"
    assert dict(report.nets) == pytest.approx(
        {"↑↑": -5.0, "↑↓": -5.0, "↓X": -5.0}
    )
    assert report.sure_loss


def test_quantum_book_is_harmless_under_branch_weights():
    report = dutch_book_check(builtin("appendix_a_book"), "born")
    assert report.decisions[0].accepted
    assert not report.decisions[1].accepted
    assert report.decisions[1].expected_value == pytest.approx(-5.0)
    assert not report.sure_loss


def test_duplication_book_costs_each_copy_a_hundred():
    report = dutch_book_check(builtin("dr_evil_book"), "indifference")
    assert [d.accepted for d in report.decisions] == [True, True]
    assert report.decisions[0].expected_value == pytest.approx(100.0)
    assert report.settlement == "copy"
    assert dict(report.nets) == pytest.approx({"evil": -100.0, "dup": -100.0})
    assert report.sure_loss


def test_duplication_book_under_strong_esp_is_the_same():
    # with equal weights the observer-weight rule agrees with counting
    report = dutch_book_check(builtin("dr_evil_book"), "strong-esp")
    assert report.sure_loss


def test_empty_book_is_not_a_sure_loss():
    report = dutch_book_check(builtin("once_or_twice"), "indifference", [])
    assert report.decisions == ()
    assert not report.sure_loss
    assert all(n == 0.0 for _, n in report.nets)


def test_born_rule_never_reports_a_sure_loss():
    assert not dutch_book_check(builtin("appendix_a_book"), "born").sure_loss
    # branch-weight credences say nothing about copy identity: the copy
    # book's partition is simply not covered
    with pytest.raises(PartitionMismatch):
        dutch_book_check(builtin("dr_evil_book"), "born")


# -- Bayesian confirmation ------------------------------------------------------


LIK = {"P↑": {"↑": 0.9, "↓": 0.1}, "P↓": {"↑": 0.1, "↓": 0.9}}


def test_single_up_observation_moves_half_to_nine_tenths():
    post = bayes_update({"P↑": 0.5, "P↓": 0.5}, LIK, "↑")
    assert post["P↑"] == pytest.approx(0.9, abs=1e-12)
    assert post["P↓"] == pytest.approx(0.1, abs=1e-12)


def test_identical_likelihood_rows_leave_priors_alone():
    lik = {"A": {"x": 0.5, "y": 0.5}, "B": {"x": 0.5, "y": 0.5}}
    post = bayes_update({"A": 0.3, "B": 0.7}, lik, "x")
    assert post == pytest.approx({"A": 0.3, "B": 0.7})


def test_ten_up_observations_fold_into_the_likelihood_product():
    outcomes = ["↑"] * 10
    trajectory = confirm_sequence({"P↑": 0.5, "P↓": 0.5}, LIK, outcomes)
    expected = 0.9**10 * 0.5 / (0.9**10 * 0.5 + 0.1**10 * 0.5)
    assert trajectory[-1]["P↑"] == pytest.approx(expected, abs=1e-12)
    # trajectory is monotone towards the favored theory here
    ups = [t["P↑"] for t in trajectory]
    assert all(b > a for a, b in zip(ups, ups[1:]))


def test_zero_evidence_is_an_error():
    lik = {"A": {"x": 1.0, "y": 0.0}, "B": {"x": 1.0, "y": 0.0}}
    with pytest.raises(ZeroEvidence):
        bayes_update({"A": 0.5, "B": 0.5}, lik, "y")


def test_posteriors_survive_common_likelihood_rescaling():
    # scaling every theory's probability for the observed outcome cancels
    post1 = bayes_update({"P↑": 0.5, "P↓": 0.5}, LIK, "↑")
    scaled = {
        "P↑": {"↑": 0.45, "↓": 0.55},
        "P↓": {"↑": 0.05, "↓": 0.95},
    }
    post2 = bayes_update({"P↑": 0.5, "P↓": 0.5}, scaled, "↑")
    assert post1 == pytest.approx(post2)


def test_three_trials_with_one_down():
    trajectory = confirm_sequence({"P↑": 0.5, "P↓": 0.5}, LIK, ["↑", "↑", "↓"])
    up_mass = 0.9 * 0.9 * 0.1 * 0.5
    down_mass = 0.1 * 0.1 * 0.9 * 0.5
    assert trajectory[-1]["P↑"] == pytest.approx(up_mass / (up_mass + down_mass))


def test_born_typical_data_confirms_the_branch_weight_theory():
    import numpy as np

    rng = np.random.default_rng(61)
    lik = {"weights": {"↑": 0.8, "↓": 0.2}, "counting": {"↑": 0.5, "↓": 0.5}}
    outcomes = ["↑" if rng.random() < 0.8 else "↓" for _ in range(200)]
    trajectory = confirm_sequence({"weights": 0.5, "counting": 0.5}, lik,
                                  outcomes)
    assert trajectory[-1]["weights"] > 0.999


def test_single_trial_equal_likelihoods_is_flat():
    lik = {"A": {"x": 0.5, "y": 0.5}, "B": {"x": 0.5, "y": 0.5}}
    trajectory = confirm_sequence({"A": 0.5, "B": 0.5}, lik, ["x"])
    assert trajectory == [pytest.approx({"A": 0.5, "B": 0.5})]
