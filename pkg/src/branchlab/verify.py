"""Seeded randomized invariance suites behind ``branchlab verify``.

Each trial derives its generator from (seed + index, suite tag), so the
failing trial k of ``--seed S`` reruns alone as ``--trials 1 --seed S+k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .credence import (
    General,
    HalfHalf,
    ObserverCopy,
    OneThirdTwoThirds,
    born_credences,
    equal_amplitude_refine,
    rationalize,
    refine_and_count,
    replay_proof,
    strong_esp,
    swap_check,
    table_deviation,
)
from .qstate import (
    StateVector,
    SubsystemLabel,
    UnitaryOp,
    apply_unitary,
    haar_unitary,
    operator_deviation,
    random_state,
    reduced_density,
)

SUITES = ("appendix-b", "appendix-c", "proofs", "strong-esp")

_TAGS = {name: i + 1 for i, name in enumerate(SUITES)}


@dataclass(frozen=True)
class TrialResult:
    index: int
    max_deviation: float
    passed: bool
    detail: str


@dataclass(frozen=True)
class SuiteResult:
    suite: str
    trials: tuple[TrialResult, ...]

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.trials)

    def first_failure(self) -> TrialResult | None:
        for t in self.trials:
            if not t.passed:
                return t
        return None


def _rng(suite: str, seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed + index, _TAGS[suite]])


def _random_branchy_state(rng, n_branches: int, n_outcomes: int | None = None):
    """A post-measurement style state: agent x detector x environment."""
    n_out = n_outcomes or n_branches
    a = SubsystemLabel("A", 1)
    det = SubsystemLabel("D", n_out)
    env = SubsystemLabel("E", n_branches)
    w = rng.dirichlet(np.ones(n_branches))
    phases = rng.uniform(0, 2 * np.pi, size=n_branches)
    outcomes = list(range(n_out))
    while len(outcomes) < n_branches:
        outcomes.append(int(rng.integers(0, n_out)))
    rng.shuffle(outcomes)
    arr = np.zeros((1, n_out, n_branches), dtype=complex)
    for k in range(n_branches):
        arr[0, outcomes[k], k] = math.sqrt(w[k]) * np.exp(1j * phases[k])
    return StateVector((a, det, env), arr.reshape(-1)), w, outcomes


def _trial_appendix_b(rng) -> TrialResult:
    dims_a = [int(rng.integers(2, 4)) for _ in range(2)]
    dims_b = [int(rng.integers(2, 4)) for _ in range(2)]
    space = tuple(
        SubsystemLabel(name, d)
        for name, d in zip(("A1", "A2", "B1", "B2"), dims_a + dims_b)
    )
    s = random_state(rng, space)
    da = dims_a[0] * dims_a[1]
    db = dims_b[0] * dims_b[1]
    u_a = haar_unitary(rng, da)
    u_b = haar_unitary(rng, db)
    op_a = UnitaryOp(space[:2], u_a)
    op_b = UnitaryOp(space[2:], u_b)
    evolved = apply_unitary(apply_unitary(s, op_a), op_b)
    lhs = reduced_density(evolved, ["A1", "A2"]).mat
    rho_a = reduced_density(s, ["A1", "A2"]).mat
    rhs = u_a @ rho_a @ u_a.conj().T
    dev = float(np.max(np.abs(lhs - rhs)))
    # environment-only transformations leave the reduced state untouched
    env_only = apply_unitary(s, op_b)
    dev_env = operator_deviation(
        reduced_density(s, ["A1", "A2"]), reduced_density(env_only, ["A1", "A2"])
    )
    dev = max(dev, dev_env)
    # branch credences are blind to environment unitaries on record states
    qm2 = _trial_esp_qm2(rng)
    passed = dev < 1e-12 and qm2.passed
    return TrialResult(0, max(dev, qm2.max_deviation), passed,
                       "reduced dynamics, env invariance, credence invariance")


def _trial_appendix_c(rng) -> TrialResult:
    n = int(rng.integers(2, 7))
    t_sq = int(rng.integers(n, 51))
    c_sq = [1] * n
    for _ in range(t_sq - n):
        c_sq[int(rng.integers(0, n))] += 1
    weights = [c / t_sq for c in c_sq]
    phases = rng.uniform(0, 2 * np.pi, size=n)
    n_out = n if rng.random() > 0.3 else max(2, n - 1)
    outcomes = [k % n_out for k in range(n)]

    a = SubsystemLabel("A", 1)
    det = SubsystemLabel("D", n_out)
    env = SubsystemLabel("E", n)
    arr = np.zeros((1, n_out, n), dtype=complex)
    for k in range(n):
        arr[0, outcomes[k], k] = math.sqrt(weights[k]) * np.exp(1j * phases[k])
    s = StateVector((a, det, env), arr.reshape(-1))

    rw = rationalize(weights, max_denominator=100)
    refined = equal_amplitude_refine(s, rw, env)
    rho_dev = operator_deviation(
        reduced_density(s, ["A", "D"]), reduced_density(refined, ["A", "D"])
    )
    counted = refine_and_count(s, det, env, max_denominator=100)
    born = born_credences(reduced_density(s, ["A", "D"]), ["D"])
    count_dev = table_deviation(counted, born)
    passed = rho_dev < 1e-12 and count_dev < 1e-9
    return TrialResult(
        0, max(rho_dev, count_dev), passed,
        f"N={n} T2={t_sq}: refine-and-count vs branch weights",
    )


def _trial_esp_qm2(rng) -> TrialResult:
    n = int(rng.integers(2, 6))
    s, _, _ = _random_branchy_state(rng, n)
    u_env = UnitaryOp((s.space[2],), haar_unitary(rng, n))
    before = born_credences(reduced_density(s, ["A", "D"]), ["D"])
    after = born_credences(
        reduced_density(apply_unitary(s, u_env), ["A", "D"]), ["D"]
    )
    dev = table_deviation(before, after)
    return TrialResult(0, dev, dev < 1e-10, f"env unitary on {n}-branch state")


def _trial_proofs(rng, index: int) -> TrialResult:
    if index == 0:
        rep = replay_proof(HalfHalf())
        dev = table_deviation(rep.conclusion, _table({"↑": 0.5, "↓": 0.5}))
        return TrialResult(index, dev, rep.all_passed() and dev < 1e-10,
                           "half-half replay")
    if index == 1:
        rep = replay_proof(OneThirdTwoThirds())
        dev = table_deviation(
            rep.conclusion, _table({"↑": 2.0 / 3.0, "↓": 1.0 / 3.0})
        )
        return TrialResult(index, dev, rep.all_passed() and dev < 1e-10,
                           "one-third-two-thirds replay")
    n = int(rng.integers(2, 5))
    t_sq = int(rng.integers(n, 9))
    c_sq = [1] * n
    for _ in range(t_sq - n):
        c_sq[int(rng.integers(0, n))] += 1
    weights = tuple(c / t_sq for c in c_sq)
    phases = tuple(float(p) for p in rng.uniform(0, 2 * np.pi, size=n))
    rep = replay_proof(General(weights, phases, max_denominator=64))
    expected = {}
    for k, w in enumerate(weights):
        expected[str(k)] = expected.get(str(k), 0.0) + w
    dev = table_deviation(rep.conclusion, _table(expected))
    return TrialResult(index, dev, rep.all_passed() and dev < 1e-9,
                       f"general replay N={n} T2={t_sq}")


def _table(d):
    from .credence import CredenceTable

    return CredenceTable(tuple(d.items()))


def _trial_strong_esp(rng) -> TrialResult:
    devs = []
    # uniform limit: equal weights reduce to plain counting
    k = int(rng.integers(2, 7))
    w = float(rng.uniform(0.1, 5.0))
    copies = [ObserverCopy(f"c{i}", f"b{i}", 0, w) for i in range(k)]
    t = strong_esp(copies)
    devs.append(max(abs(p - 1.0 / k) for _, p in t.entries))

    # branch-weight limit: one copy per branch with weight = branch weight
    n = int(rng.integers(2, 6))
    s, weights, outcomes = _random_branchy_state(rng, n, n_outcomes=n)
    born = born_credences(reduced_density(s, ["A", "D"]), ["D"])
    per_branch = [
        ObserverCopy(f"c{k}", str(outcomes[k]), 0, float(weights[k]))
        for k in range(n)
    ]
    t2 = strong_esp(per_branch)
    devs.append(
        max(abs(t2[f"c{k}"] - born[str(outcomes[k])]) for k in range(n))
    )

    # scale invariance
    lam = float(rng.uniform(0.01, 100.0))
    scaled = [ObserverCopy(c.id, c.branch, c.time, c.weight * lam)
              for c in per_branch]
    devs.append(table_deviation(strong_esp(scaled), t2))

    # phase invariance of branch credences
    phase_diag = np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, size=n)))
    twisted = apply_unitary(s, UnitaryOp((s.space[2],), phase_diag))
    devs.append(
        table_deviation(
            born, born_credences(reduced_density(twisted, ["A", "D"]), ["D"])
        )
    )

    # swap closure on an equal-amplitude state
    m = int(rng.integers(2, 6))
    eq = StateVector(
        (SubsystemLabel("A", 1), SubsystemLabel("D", m), SubsystemLabel("E", m)),
        np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, size=m))).reshape(1, m, m)
        .reshape(-1) / math.sqrt(m),
    )
    for i in range(m):
        for j in range(i + 1, m):
            rep = swap_check(eq, i, j, ["E"], ["A", "D"])
            devs.append(rep.max_deviation)
            if not rep.passed:
                devs.append(1.0)
    dev = max(devs)
    return TrialResult(0, dev, dev < 1e-10, "observer-weight rule properties")


def run_suite(suite: str, trials: int, seed: int) -> SuiteResult:
    if suite not in SUITES:
        raise ValueError(f"suite must be one of {SUITES}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    out = []
    for i in range(trials):
        rng = _rng(suite, seed, i)
        if suite == "appendix-b":
            r = _trial_appendix_b(rng)
        elif suite == "appendix-c":
            r = _trial_appendix_c(rng)
        elif suite == "proofs":
            r = _trial_proofs(rng, i)
        else:
            r = _trial_strong_esp(rng)
        out.append(TrialResult(i, r.max_deviation, r.passed, r.detail))
    return SuiteResult(suite, tuple(out))
