"""Probability rules, rational refinement, proof replays, swap checks."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchlab.branching import branch_decompose
from branchlab.credence import (
    General,
    HalfHalf,
    ObserverCopy,
    OneThirdTwoThirds,
    PageObserver,
    RationalWeights,
    born_credences,
    equal_amplitude_refine,
    esp_invariance_check,
    indifference_credences,
    page_aggregate,
    rationalize,
    refine_and_count,
    replay_proof,
    strong_esp,
    swap_check,
    table_deviation,
)
from branchlab.errors import (
    ApproximationFailed,
    NoCopies,
    NoSupport,
    NotEnvironmentOnly,
    NotSwappable,
    WeightMismatch,
)
from branchlab.qstate import (
    StateVector,
    SubsystemLabel,
    UnitaryOp,
    apply_unitary,
    haar_unitary,
    operator_deviation,
    reduced_density,
)

R = 1.0 / math.sqrt(2.0)


def branchy_state(weights, phases=None, outcomes=None, n_out=None):
    """Post-measurement canonical form: agent x detector x environment."""
    n = len(weights)
    phases = phases or [0.0] * n
    outcomes = outcomes if outcomes is not None else list(range(n))
    n_out = n_out or (max(outcomes) + 1)
    a = SubsystemLabel("A", 1)
    det = SubsystemLabel("D", n_out)
    env = SubsystemLabel("E", n)
    arr = np.zeros((1, n_out, n), dtype=complex)
    for k in range(n):
        arr[0, outcomes[k], k] = math.sqrt(weights[k]) * np.exp(1j * phases[k])
    return StateVector((a, det, env), arr.reshape(-1)), det, env


# -- branch-weight rule ---------------------------------------------------------


def test_born_half_half():
    s, det, env = branchy_state([0.5, 0.5])
    table = born_credences(reduced_density(s, ["A", "D"]), ["D"],
                           names={"D": ("↑", "↓")})
    assert table.as_dict() == pytest.approx({"↑": 0.5, "↓": 0.5})


def test_born_two_thirds():
    s, det, env = branchy_state([2 / 3, 1 / 3])
    table = born_credences(reduced_density(s, ["A", "D"]), ["D"],
                           names={"D": ("↑", "↓")})
    assert table.as_dict() == pytest.approx({"↑": 2 / 3, "↓": 1 / 3})


def test_born_single_branch():
    s, det, env = branchy_state([1.0])
    table = born_credences(reduced_density(s, ["A", "D"]), ["D"])
    assert table.as_dict() == pytest.approx({"0": 1.0})


# -- copy counting ----------------------------------------------------------------


def _three_branch_set():
    s, det, env = branchy_state([0.25, 0.25, 0.5])
    return branch_decompose(reduced_density(s, ["A", "D"]), ["D"],
                            names={"D": ("↑↑", "↑↓", "↓X")})


def test_indifference_counts_branches_not_weights():
    bs = _three_branch_set()
    table = indifference_credences(bs, {"↑↑": 1, "↑↓": 1, "↓X": 1})
    assert table.as_dict() == pytest.approx(
        {"↑↑": 1 / 3, "↑↓": 1 / 3, "↓X": 1 / 3}
    )


def test_indifference_weights_extra_copies():
    bs = _three_branch_set()
    table = indifference_credences(bs, {"↑↑": 2, "↑↓": 1, "↓X": 1})
    assert table["↑↑"] == pytest.approx(0.5)


def test_indifference_without_copies_is_an_error():
    with pytest.raises(NoCopies):
        indifference_credences(_three_branch_set(), {})


# -- rationalization ----------------------------------------------------------------


def _rationalize_oracle(weights, max_denominator):
    """Exhaustive floor/ceil allocation search; independent of the greedy path."""
    n = len(weights)
    best = None
    for t_sq in range(n, max_denominator + 1):
        lo = [max(1, math.floor(w * t_sq)) for w in weights]
        hi = [max(1, math.ceil(w * t_sq)) for w in weights]
        for combo in itertools.product(*[(l, h) for l, h in zip(lo, hi)]):
            if sum(combo) != t_sq:
                continue
            err = max(abs(w - c / t_sq) for w, c in zip(weights, combo))
            if best is None or err < best[0] - 1e-15:
                best = (err, t_sq, combo)
    return best


def test_rationalize_exact_two_thirds():
    rw = rationalize([2 / 3, 1 / 3], max_denominator=100)
    assert rw.c_sq == (2, 1)
    assert rw.t_sq == 3
    assert rw.approximation_error < 1e-15


def test_rationalize_equal_pair():
    rw = rationalize([0.5, 0.5], max_denominator=100)
    assert rw.c_sq == (1, 1)
    assert rw.t_sq == 2


def test_rationalize_near_sevenths_against_oracle():
    weights = [0.285714, 0.714286]
    rw = rationalize(weights, max_denominator=100)
    assert rw.c_sq == (2, 5)
    assert rw.t_sq == 7
    err, t_sq, combo = _rationalize_oracle(weights, 100)
    assert rw.t_sq == t_sq
    assert rw.approximation_error == pytest.approx(err, abs=1e-12)


def test_rationalize_matches_oracle_on_random_weights():
    rng = np.random.default_rng(31)
    for _ in range(10):
        n = int(rng.integers(2, 5))
        w = rng.dirichlet(np.ones(n) * 3.0)
        w = [float(x) for x in w]
        rw = rationalize(w, max_denominator=40)
        err, t_sq, _ = _rationalize_oracle(w, 40)
        assert rw.approximation_error == pytest.approx(err, abs=1e-12)
        assert rw.t_sq == t_sq


def test_rationalize_failure_when_denominators_are_too_small():
    with pytest.raises(ApproximationFailed):
        rationalize([0.5, 0.25, 0.25], max_denominator=2)


@given(st.lists(st.integers(min_value=1, max_value=12), min_size=2, max_size=5))
@settings(max_examples=50, deadline=None)
def test_rationalize_recovers_exact_rationals(c_sq):
    t_sq = sum(c_sq)
    weights = [c / t_sq for c in c_sq]
    rw = rationalize(weights, max_denominator=t_sq)
    assert rw.approximation_error < 1e-12
    assert [c / rw.t_sq for c in rw.c_sq] == pytest.approx(weights, abs=1e-12)


# -- equal-amplitude refinement --------------------------------------------------------


def _component_patterns(s, env_names):
    axes = [s.axis(n) for n in env_names]
    mass = (np.abs(s.array()) ** 2).sum(
        axis=tuple(a for a in range(len(s.dims)) if a not in axes)
    )
    return {tuple(int(x) for x in p): float(mass[tuple(p)])
            for p in np.argwhere(mass > 1e-30)}


def test_refine_two_thirds_splits_into_three_components():
    s, det, env = branchy_state([2 / 3, 1 / 3])
    rw = rationalize([2 / 3, 1 / 3], max_denominator=10)
    refined = equal_amplitude_refine(s, rw, env)
    comps = _component_patterns(refined, ["E", "E'"])
    assert len(comps) == 3
    assert all(w == pytest.approx(1 / 3) for w in comps.values())
    up_components = [p for p in comps if p[0] == 0]
    assert len(up_components) == 2


def test_refine_leaves_equal_amplitudes_alone():
    s, det, env = branchy_state([0.5, 0.5])
    rw = rationalize([0.5, 0.5], max_denominator=10)
    refined = equal_amplitude_refine(s, rw, env)
    comps = _component_patterns(refined, ["E", "E'"])
    assert len(comps) == 2


def test_refine_preserves_the_reduced_operator_and_counts():
    rng = np.random.default_rng(41)
    for _ in range(5):
        c_sq = [int(x) for x in rng.integers(1, 7, size=4)]
        t_sq = sum(c_sq)
        weights = [c / t_sq for c in c_sq]
        phases = [float(p) for p in rng.uniform(0, 2 * np.pi, size=4)]
        s, det, env = branchy_state(weights, phases)
        rw = rationalize(weights, max_denominator=t_sq)
        refined = equal_amplitude_refine(s, rw, env)
        dev = operator_deviation(
            reduced_density(s, ["A", "D"]), reduced_density(refined, ["A", "D"])
        )
        assert dev < 1e-12
        comps = _component_patterns(refined, ["E", "E'"])
        per_record = {}
        for (e, _), w in comps.items():
            per_record[e] = per_record.get(e, 0) + 1
        assert [per_record[k] for k in range(4)] == list(rw.c_sq)


def test_refine_preserves_phases():
    phases = [0.9, 2.1]
    s, det, env = branchy_state([0.5, 0.5], phases)
    rw = rationalize([0.5, 0.5], max_denominator=4)
    refined = equal_amplitude_refine(s, rw, env)
    arr = refined.array()
    for k, theta in enumerate(phases):
        amp = arr[0, k, k, 0]
        assert np.angle(amp) == pytest.approx(theta)


def test_refine_rejects_mismatched_weights():
    s, det, env = branchy_state([0.6, 0.4])
    with pytest.raises(WeightMismatch):
        equal_amplitude_refine(s, RationalWeights((1, 1), 2, 0.0), env)


def test_refine_and_count_two_thirds():
    s, det, env = branchy_state([2 / 3, 1 / 3])
    table = refine_and_count(s, det, env, names={"D": ("↑", "↓")})
    assert table.as_dict() == pytest.approx({"↑": 2 / 3, "↓": 1 / 3})


def test_refine_and_count_half_half():
    s, det, env = branchy_state([0.5, 0.5])
    table = refine_and_count(s, det, env, names={"D": ("↑", "↓")})
    assert table.as_dict() == pytest.approx({"↑": 0.5, "↓": 0.5})


def test_refine_and_count_merges_repeated_outcomes():
    # two distinct records show the same detector outcome: probabilities add
    s, det, env = branchy_state([0.25, 0.25, 0.5], outcomes=[0, 1, 0], n_out=2)
    table = refine_and_count(s, det, env, names={"D": ("↑", "↓")})
    assert table.as_dict() == pytest.approx({"↑": 0.75, "↓": 0.25})


def test_refine_and_count_agrees_with_born_on_random_rational_states():
    rng = np.random.default_rng(43)
    for _ in range(10):
        n = int(rng.integers(2, 6))
        c_sq = [int(x) for x in rng.integers(1, 9, size=n)]
        t_sq = sum(c_sq)
        weights = [c / t_sq for c in c_sq]
        phases = [float(p) for p in rng.uniform(0, 2 * np.pi, size=n)]
        s, det, env = branchy_state(weights, phases)
        table = refine_and_count(s, det, env, max_denominator=t_sq)
        born = born_credences(reduced_density(s, ["A", "D"]), ["D"])
        assert table_deviation(table, born) < 1e-9


# -- invariance checks -------------------------------------------------------------------


def test_esp_invariance_under_random_environment_unitaries():
    rng = np.random.default_rng(47)
    s, det, env = branchy_state([0.3, 0.2, 0.5],
                                phases=[0.1, 1.1, 2.2])
    for _ in range(10):
        u = UnitaryOp((env,), haar_unitary(rng, 3))
        rep = esp_invariance_check(s, u, ["A", "D"], ["D"])
        assert rep.passed
        assert rep.max_deviation < 1e-10


def test_esp_invariance_identity_is_exact():
    s, det, env = branchy_state([0.5, 0.5])
    rep = esp_invariance_check(s, UnitaryOp((env,), np.eye(2)), ["A", "D"], ["D"])
    assert rep.max_deviation == 0.0


def test_esp_check_refuses_agent_touching_unitaries():
    s, det, env = branchy_state([0.5, 0.5])
    with pytest.raises(NotEnvironmentOnly):
        esp_invariance_check(s, UnitaryOp((det,), np.eye(2)), ["A", "D"], ["D"])


def test_wiring_flip_preserves_both_reduced_operators():
    # the two display wirings of the equal-amplitude argument
    a = SubsystemLabel("A", 1)
    d1 = SubsystemLabel("D1", 2)
    d2 = SubsystemLabel("D2", 2)
    sp = SubsystemLabel("s", 2)
    env = SubsystemLabel("E", 2)
    arr1 = np.zeros((1, 2, 2, 2, 2), dtype=complex)
    arr1[0, 0, 0, 0, 0] = R
    arr1[0, 1, 1, 1, 1] = R
    psi1 = StateVector((a, d1, d2, sp, env), arr1.reshape(-1))
    arr2 = np.zeros((1, 2, 2, 2, 2), dtype=complex)
    arr2[0, 0, 1, 0, 0] = R
    arr2[0, 1, 0, 1, 1] = R
    psi2 = StateVector((a, d1, d2, sp, env), arr2.reshape(-1))
    for keep in (["A", "D1"], ["A", "D2"]):
        assert operator_deviation(
            reduced_density(psi1, keep), reduced_density(psi2, keep)
        ) < 1e-12


# -- proof replays ----------------------------------------------------------------------


def test_half_half_replay_has_four_passing_steps():
    rep = replay_proof(HalfHalf())
    assert len(rep.steps) == 4
    assert rep.all_passed()
    assert rep.conclusion.as_dict() == pytest.approx({"↑": 0.5, "↓": 0.5},
                                                     abs=1e-10)


def test_one_third_two_thirds_replay():
    rep = replay_proof(OneThirdTwoThirds())
    assert rep.all_passed()
    assert rep.conclusion.as_dict() == pytest.approx(
        {"↑": 2 / 3, "↓": 1 / 3}, abs=1e-10
    )


def test_general_replay_matches_the_branch_weights():
    rng = np.random.default_rng(53)
    for _ in range(3):
        n = int(rng.integers(2, 6))
        c_sq = [1] * n
        for _ in range(int(rng.integers(0, 9 - n))):
            c_sq[int(rng.integers(0, n))] += 1
        t_sq = sum(c_sq)
        weights = tuple(c / t_sq for c in c_sq)
        phases = tuple(float(p) for p in rng.uniform(0, 2 * np.pi, size=n))
        rep = replay_proof(General(weights, phases, max_denominator=16))
        assert rep.all_passed()
        s, det, env = branchy_state(list(weights), list(phases))
        born = born_credences(reduced_density(s, ["A", "D"]), ["D"])
        assert table_deviation(rep.conclusion, born) < 1e-9


def test_general_replay_merges_repeated_outcomes():
    rep = replay_proof(General((0.25, 0.25, 0.5), (0.0, 0.0, 0.0),
                               outcomes=(0, 1, 0), max_denominator=8))
    assert rep.conclusion.as_dict() == pytest.approx({"0": 0.75, "1": 0.25})


def test_proof_report_document_round_trips():
    from branchlab.report import proof_report_from_dict, proof_report_to_dict

    rep = replay_proof(HalfHalf())
    doc = proof_report_to_dict(rep)
    assert proof_report_from_dict(doc) == rep
    assert doc["conclusion"][0]["probability"] == pytest.approx(0.5)


def test_replay_fails_loudly_on_unequal_witness_amplitudes():
    from branchlab.errors import PremiseFailed

    # weights forced through denominator 2 carry a 0.02 approximation error,
    # so the equal-amplitude display premises cannot hold at 1e-10
    with pytest.raises(PremiseFailed) as err:
        replay_proof(General((0.52, 0.48), (0.0, 0.0), max_denominator=2))
    assert "display" in str(err.value.step_id)
    assert err.value.deviation > 1e-3


# -- observer weights ----------------------------------------------------------------------


def test_strong_esp_thirder():
    copies = [
        ObserverCopy("M↑", "↑", 2, 0.5),
        ObserverCopy("T↑", "↑", 4, 0.5),
        ObserverCopy("M↓", "↓", 2, 0.5),
    ]
    table = strong_esp(copies)
    assert table.as_dict() == pytest.approx(
        {"M↑": 1 / 3, "T↑": 1 / 3, "M↓": 1 / 3}
    )


def test_strong_esp_recovers_branch_weights_with_one_copy_per_branch():
    copies = [
        ObserverCopy("M↑", "↑↑", 3, 0.25),
        ObserverCopy("T↑", "↑↓", 4, 0.25),
        ObserverCopy("M↓", "↓X", 3, 0.5),
    ]
    assert strong_esp(copies).as_dict() == pytest.approx(
        {"M↑": 0.25, "T↑": 0.25, "M↓": 0.5}
    )


def test_strong_esp_duplicates_on_one_branch():
    copies = [ObserverCopy("evil", "", 1, 1.0), ObserverCopy("dup", "", 1, 1.0)]
    assert strong_esp(copies).as_dict() == pytest.approx(
        {"evil": 0.5, "dup": 0.5}
    )


def test_strong_esp_rejects_zero_support():
    with pytest.raises(NoSupport):
        strong_esp([ObserverCopy("a", "", 0, 0.0)])


def test_strong_esp_refuses_open_ended_iterators():
    def forever():
        i = 0
        while True:
            yield ObserverCopy(f"c{i}", "b", 0, 1.0)
            i += 1

    with pytest.raises(TypeError):
        strong_esp(forever())


def test_page_aggregate_passes_zero_support_through():
    c = ObserverCopy("o", "b", 0, 0.0)
    with pytest.raises(NoSupport):
        page_aggregate([PageObserver(c, 1.0, 0.0)])


@given(
    st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=1, max_size=6),
    st.floats(min_value=1e-3, max_value=1e3),
)
@settings(max_examples=60, deadline=None)
def test_strong_esp_scale_invariance(weights, lam):
    copies = [ObserverCopy(f"c{i}", f"b{i}", 0, w) for i, w in enumerate(weights)]
    scaled = [ObserverCopy(c.id, c.branch, c.time, c.weight * lam)
              for c in copies]
    assert table_deviation(strong_esp(copies), strong_esp(scaled)) < 1e-12


def test_page_aggregate_symmetric_pair():
    copies = [ObserverCopy("o1", "b", 0, 1.0), ObserverCopy("o2", "b", 0, 1.0)]
    observers = [
        PageObserver(copies[0], 0.9, 0.1),
        PageObserver(copies[1], 0.1, 0.9),
    ]
    assert page_aggregate(observers) == pytest.approx(0.5)


def test_page_aggregate_single_observer():
    c = ObserverCopy("o", "b", 0, 2.0)
    assert page_aggregate([PageObserver(c, 1.0, 0.0)]) == pytest.approx(1.0)


def test_page_aggregate_weighted_sum():
    copies = [ObserverCopy("o1", "b1", 0, 2.0), ObserverCopy("o2", "b2", 0, 1.0)]
    observers = [
        PageObserver(copies[0], 0.9, 0.1),
        PageObserver(copies[1], 0.36, 0.64),
    ]
    # (2/3) * 0.9 + (1/3) * 0.36
    assert page_aggregate(observers) == pytest.approx(0.72)


# -- swap checks -------------------------------------------------------------------------


def test_swap_check_on_equal_branches():
    s, det, env = branchy_state([0.5, 0.5])
    rep = swap_check(s, 0, 1, ["E"], ["A", "D"])
    assert rep.passed
    assert rep.max_deviation < 1e-12
    assert rep.entailment == ("0", "1")


def test_swap_branch_with_itself_is_trivial():
    s, det, env = branchy_state([0.5, 0.5])
    rep = swap_check(s, 0, 0, ["E"], ["A", "D"])
    assert rep.passed


def test_swap_check_rejects_unequal_weights():
    s, det, env = branchy_state([2 / 3, 1 / 3])
    with pytest.raises(NotSwappable):
        swap_check(s, 0, 1, ["E"], ["A", "D"])


def test_swap_closure_over_refined_components():
    s, det, env = branchy_state([2 / 3, 1 / 3])
    rw = rationalize([2 / 3, 1 / 3], max_denominator=10)
    refined = equal_amplitude_refine(s, rw, env)
    for i in range(3):
        for j in range(i + 1, 3):
            rep = swap_check(refined, i, j, ["E", "E'"], ["A", "D"])
            assert rep.passed


def test_phase_twists_never_move_branch_credences():
    rng = np.random.default_rng(59)
    s, det, env = branchy_state([0.2, 0.3, 0.5])
    before = born_credences(reduced_density(s, ["A", "D"]), ["D"])
    for _ in range(10):
        diag = np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, size=3)))
        twisted = apply_unitary(s, UnitaryOp((env,), diag))
        after = born_credences(reduced_density(twisted, ["A", "D"]), ["D"])
        assert table_deviation(before, after) < 1e-12
