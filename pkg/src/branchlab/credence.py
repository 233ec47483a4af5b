"""Probability rules over branches and observer copies.

Three rules live here: branch weights read off a reduced density operator,
plain copy counting, and the observer-weight rule that covers mixed
classical/quantum self-location.  The module also hosts the machinery that
replays the equiprobability proofs mechanically: rational approximation of
branch weights, the equal-amplitude refinement of environment records, and
a union-find driven label chase over witness states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .branching import BranchSet, branch_decompose
from .errors import (
    ApproximationFailed,
    NoCopies,
    NoSupport,
    NotEnvironmentOnly,
    NotSwappable,
    PremiseFailed,
    WeightMismatch,
)
from .qstate import (
    DensityOperator,
    StateVector,
    SubsystemLabel,
    UnitaryOp,
    apply_unitary,
    operator_deviation,
    reduced_density,
)


@dataclass(frozen=True)
class CredenceTable:
    """Normalized probabilities keyed by hypothesis label."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        labels = [k for k, _ in self.entries]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate hypothesis labels in {labels}")
        for k, p in self.entries:
            if not -1e-10 <= p <= 1.0 + 1e-10:
                raise ValueError(f"probability {p} for {k!r} outside [0, 1]")
        total = sum(p for _, p in self.entries)
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {total}, not 1")

    @staticmethod
    def of(mapping: Mapping[str, float]) -> "CredenceTable":
        return CredenceTable(tuple(mapping.items()))

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)

    def __getitem__(self, label: str) -> float:
        for k, p in self.entries:
            if k == label:
                return p
        raise KeyError(label)

    def get(self, label: str, default: float = 0.0) -> float:
        for k, p in self.entries:
            if k == label:
                return p
        return default


def table_deviation(a: CredenceTable, b: CredenceTable) -> float:
    labels = {k for k, _ in a.entries} | {k for k, _ in b.entries}
    return max(abs(a.get(k) - b.get(k)) for k in labels)


@dataclass(frozen=True)
class RationalWeights:
    """Branch weights approximated as c_k^2 / T^2 over a common denominator."""

    c_sq: tuple[int, ...]
    t_sq: int
    approximation_error: float

    def __post_init__(self):
        if any(c < 1 for c in self.c_sq):
            raise ValueError("every squared numerator must be a positive integer")
        if sum(self.c_sq) != self.t_sq:
            raise ValueError("squared numerators must sum to the denominator")

    def fractions(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(c, self.t_sq) for c in self.c_sq)


@dataclass(frozen=True)
class ObserverCopy:
    """A self-locating hypothesis: a copy of an observer on a branch at a time."""

    id: str
    branch: str
    time: int
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"copy {self.id!r} has negative weight {self.weight}")


@dataclass(frozen=True)
class PageObserver:
    """A copy about to measure its own spin, with per-copy outcome amplitudes."""

    copy: ObserverCopy
    up_amp_sq: float
    down_amp_sq: float

    def __post_init__(self):
        if abs(self.up_amp_sq + self.down_amp_sq - 1.0) > 1e-12:
            raise ValueError("per-copy outcome weights must sum to 1")


# -- rule 1: branch weights -------------------------------------------------------


def born_credences(
    rho: DensityOperator,
    pointer_labels: Sequence[SubsystemLabel | str],
    names: Mapping[str, Sequence[str]] | None = None,
    eps: float | None = None,
) -> CredenceTable:
    """Probability per branch equals its weight in the reduced operator."""
    bs = branch_decompose(rho, pointer_labels, names=names, eps=eps, source="born")
    total = bs.total_weight()
    return CredenceTable(tuple((b.label, b.weight / total) for b in bs.branches))


# -- rule 2: copy counting --------------------------------------------------------


def indifference_credences(
    bs: BranchSet, copies_per_branch: Mapping[str, int]
) -> CredenceTable:
    """Equal credence per copy; branch weights are deliberately ignored."""
    counts = {b.label: int(copies_per_branch.get(b.label, 0)) for b in bs.branches}
    if any(c < 0 for c in counts.values()):
        raise ValueError("copy counts must be >= 0")
    total = sum(counts.values())
    if total == 0:
        raise NoCopies("no copies on any branch")
    return CredenceTable(tuple((k, c / total) for k, c in counts.items()))


# -- rule 3: observer weights -----------------------------------------------------


def copy_keys(copies: Sequence[ObserverCopy]) -> list[str]:
    """Stable display keys; disambiguate ids by branch and time as needed."""
    ids = [c.id for c in copies]
    keys = []
    for c in copies:
        key = c.id
        if ids.count(c.id) > 1:
            key = f"{c.id}[{c.branch}]"
            if sum(1 for o in copies if o.id == c.id and o.branch == c.branch) > 1:
                key = f"{key}@t{c.time}"
        keys.append(key)
    if len(set(keys)) != len(keys):
        raise ValueError(f"copies are not unique by (id, branch, time): {keys}")
    return keys


def strong_esp(copies: Sequence[ObserverCopy]) -> CredenceTable:
    """P(copy i) = w_i / sum_j w_j; the weights need not sum to one.

    Only sized sequences are accepted: the rule is defined for finite
    member sets, so an open-ended iterator is refused rather than drained.
    """
    if not hasattr(copies, "__len__"):
        raise TypeError("copy class must be a finite sized sequence")
    copies = list(copies)
    if not copies:
        raise NoCopies("empty copy class")
    total = sum(c.weight for c in copies)
    if total <= 0.0:
        raise NoSupport("all copy weights are zero")
    keys = copy_keys(copies)
    return CredenceTable(tuple((k, c.weight / total) for k, c in zip(keys, copies)))


def page_aggregate(observers: Sequence[PageObserver]) -> float:
    """Pre-observation probability of spin-up aggregated over identical copies."""
    observers = list(observers)
    if not observers:
        raise NoCopies("no observers to aggregate over")
    table = strong_esp([o.copy for o in observers])
    keys = copy_keys([o.copy for o in observers])
    return float(sum(table[k] * o.up_amp_sq for k, o in zip(keys, observers)))


# -- rational approximation --------------------------------------------------------


def rationalize(
    weights: Sequence[float], max_denominator: int = 10_000
) -> RationalWeights:
    """Best common-denominator approximation c_k^2 / T^2 of the weights.

    Exhaustive search over T^2 up to ``max_denominator`` minimizing the max
    per-weight error; ties go to the smallest denominator.  Every numerator
    stays >= 1 because every branch in the input actually exists.
    """
    w = [float(x) for x in weights]
    n = len(w)
    if n == 0:
        raise ValueError("at least one weight required")
    if any(x <= 0 for x in w):
        raise ValueError("weights must be positive")
    if abs(sum(w) - 1.0) > 1e-8:
        raise ValueError(f"weights sum to {sum(w)}, not 1")
    if max_denominator < 1:
        raise ValueError("max_denominator must be >= 1")

    best: tuple[float, int, list[int]] | None = None
    for t_sq in range(n, max_denominator + 1):
        ks = [max(1, round(x * t_sq)) for x in w]
        diff = t_sq - sum(ks)
        while diff != 0:
            if diff > 0:
                i = max(range(n), key=lambda i: w[i] * t_sq - ks[i])
                ks[i] += 1
                diff -= 1
            else:
                cand = [i for i in range(n) if ks[i] > 1]
                if not cand:
                    break
                i = max(cand, key=lambda i: ks[i] - w[i] * t_sq)
                ks[i] -= 1
                diff += 1
        if diff != 0:
            continue
        err = max(abs(x - k / t_sq) for x, k in zip(w, ks))
        if best is None or err < best[0]:
            best = (err, t_sq, list(ks))
    if best is None or best[0] >= 1.0 / max_denominator:
        raise ApproximationFailed(
            f"no denominator <= {max_denominator} reaches error "
            f"< {1.0 / max_denominator}"
        )
    err, t_sq, ks = best
    return RationalWeights(tuple(ks), t_sq, err)


# -- equal-amplitude refinement -----------------------------------------------------


def _env_components(s: StateVector, env: SubsystemLabel) -> list[int]:
    ax = s.axis(env.name)
    arr = np.abs(s.array()) ** 2
    mass = arr.sum(axis=tuple(i for i in range(len(s.space)) if i != ax))
    return [int(i) for i in np.nonzero(mass > 1e-30)[0]]


def branch_weights_by_record(s: StateVector, env: SubsystemLabel) -> list[float]:
    """Squared amplitude per environment record, in record-index order."""
    ax = s.axis(env.name)
    arr = np.abs(s.array()) ** 2
    mass = arr.sum(axis=tuple(i for i in range(len(s.space)) if i != ax))
    return [float(mass[e]) for e in _env_components(s, env)]


def equal_amplitude_refine(
    s: StateVector,
    rw: RationalWeights,
    env: SubsystemLabel,
    ancilla_name: str | None = None,
    tol: float = 1e-8,
) -> StateVector:
    """Split record k into c_k^2 equal orthogonal pieces on a fresh ancilla.

    Implements the record-conditioned unitary that takes |E_k>|0> to
    |E_k> (1/c_k) sum_j |j>: after it, every component has squared
    amplitude 1/T^2 with its phase intact, and the reduced state of
    everything outside env+ancilla is untouched.
    """
    records = _env_components(s, env)
    if len(records) != len(rw.c_sq):
        raise WeightMismatch(
            f"state has {len(records)} records, rational weights have {len(rw.c_sq)}"
        )
    weights = branch_weights_by_record(s, env)
    bound = tol + rw.approximation_error
    for w, c in zip(weights, rw.c_sq):
        if abs(w - c / rw.t_sq) > bound:
            raise WeightMismatch(
                f"record weight {w} vs rational {c}/{rw.t_sq} beyond {bound:.2e}"
            )
    anc = SubsystemLabel(ancilla_name or f"{env.name}'", max(rw.c_sq))
    env_ax = s.axis(env.name)
    arr = s.array()
    out = np.zeros(s.dims + (anc.dim,), dtype=complex)
    for e, c_sq in zip(records, rw.c_sq):
        piece = np.take(arr, e, axis=env_ax)
        c = math.sqrt(c_sq)
        for j in range(c_sq):
            idx = [slice(None)] * len(s.dims)
            idx[env_ax] = e
            out[tuple(idx) + (j,)] = piece / c
    return StateVector(s.space + (anc,), out.reshape(-1))


def record_of_component(
    s: StateVector, env_axes: Sequence[int], pattern: tuple[int, ...], axis: int
) -> int:
    """The single index carrying support on ``axis`` within one env component."""
    arr = s.array()
    idx = [slice(None)] * len(s.dims)
    for a, i in zip(env_axes, pattern):
        idx[a] = i
    piece = arr[tuple(idx)]
    kept = [a for a in range(len(s.dims)) if a not in env_axes]
    ax_local = kept.index(axis)
    mass = (np.abs(piece) ** 2).sum(
        axis=tuple(i for i in range(piece.ndim) if i != ax_local)
    )
    hits = np.nonzero(mass > 1e-30)[0]
    if len(hits) != 1:
        raise ValueError(f"component {pattern} has no definite record on axis {axis}")
    return int(hits[0])


def refine_and_count(
    s: StateVector,
    detector: SubsystemLabel,
    env: SubsystemLabel,
    names: Mapping[str, Sequence[str]] | None = None,
    max_denominator: int = 10_000,
) -> CredenceTable:
    """Branch probabilities by counting equal-amplitude refined components.

    Rationalizes the record weights, refines, then counts components per
    detector record with exact integer arithmetic.  The result is checked
    against the branch-weight rule and must agree within the approximation
    error; disagreement means the refinement went wrong and raises.
    """
    weights = branch_weights_by_record(s, env)
    rw = rationalize(weights, max_denominator=max_denominator)
    refined = equal_amplitude_refine(s, rw, env)

    det_ax = refined.axis(detector.name)
    env_axes = [refined.axis(env.name), len(refined.space) - 1]
    arr = np.abs(refined.array()) ** 2
    mass = arr.sum(
        axis=tuple(i for i in range(len(refined.dims)) if i not in env_axes)
    )
    counts: dict[int, int] = {}
    for pattern in np.argwhere(mass > 1e-30):
        pattern = tuple(int(i) for i in pattern)
        rec = record_of_component(refined, env_axes, pattern, det_ax)
        counts[rec] = counts.get(rec, 0) + 1
    if sum(counts.values()) != rw.t_sq:
        raise WeightMismatch(
            f"refined state has {sum(counts.values())} components, expected {rw.t_sq}"
        )

    def symbol(index: int) -> str:
        seq = (names or {}).get(detector.name)
        return seq[index] if seq is not None else str(index)

    table = CredenceTable(
        tuple(
            (symbol(rec), float(Fraction(c, rw.t_sq)))
            for rec, c in sorted(counts.items())
        )
    )
    born = born_credences(
        reduced_density(s, [detector.name]), [detector.name], names=names
    )
    dev = table_deviation(table, born)
    if dev > rw.approximation_error + 1e-10:
        raise WeightMismatch(
            f"counting deviates from branch weights by {dev:.3e}"
        )
    return table


# -- invariance checks ----------------------------------------------------------------


@dataclass(frozen=True)
class EspReport:
    """Outcome of an environment-invariance check on branch credences."""

    max_deviation: float
    passed: bool
    before: CredenceTable
    after: CredenceTable


def esp_invariance_check(
    s: StateVector,
    u_env: UnitaryOp,
    agent_detector_labels: Sequence[SubsystemLabel | str],
    pointer_labels: Sequence[SubsystemLabel | str],
    names: Mapping[str, Sequence[str]] | None = None,
    eps: float | None = None,
    tol: float = 1e-10,
) -> EspReport:
    """Branch credences must be untouched by unitaries on the environment."""
    keep = {
        l.name if isinstance(l, SubsystemLabel) else l
        for l in agent_detector_labels
    }
    touched = {t.name for t in u_env.targets}
    if keep & touched:
        raise NotEnvironmentOnly(
            f"unitary touches agent/detector factors {sorted(keep & touched)}"
        )
    before = born_credences(
        reduced_density(s, keep), pointer_labels, names=names, eps=eps
    )
    after = born_credences(
        reduced_density(apply_unitary(s, u_env), keep),
        pointer_labels,
        names=names,
        eps=eps,
    )
    dev = table_deviation(before, after)
    return EspReport(dev, dev < tol, before, after)


@dataclass(frozen=True)
class SwapReport:
    """Outcome of an environment-record swap between two equal-weight branches."""

    branch_i: str
    branch_j: str
    max_deviation: float
    passed: bool
    entailment: tuple[str, str]


def swap_check(
    s: StateVector,
    i: int,
    j: int,
    env_labels: Sequence[SubsystemLabel | str],
    keep_labels: Sequence[SubsystemLabel | str],
    tol: float = 1e-12,
) -> SwapReport:
    """Swap two equal-weight branches' records and verify the reduced state.

    Branches are the joint environment-record patterns in ascending index
    order.  A passing check records the entailment that the two branches
    must be equiprobable.
    """
    env_names = [l.name if isinstance(l, SubsystemLabel) else l for l in env_labels]
    env_axes = [s.axis(n) for n in env_names]
    arr = np.abs(s.array()) ** 2
    mass = arr.sum(axis=tuple(a for a in range(len(s.dims)) if a not in env_axes))
    patterns = [tuple(int(x) for x in p) for p in np.argwhere(mass > 1e-30)]
    if not 0 <= i < len(patterns) or not 0 <= j < len(patterns):
        raise IndexError(f"branch ordinals must be < {len(patterns)}")
    wi = float(mass[patterns[i]])
    wj = float(mass[patterns[j]])
    if abs(wi - wj) > 1e-12:
        raise NotSwappable(f"branch weights {wi} and {wj} differ beyond 1e-12")

    env_space = tuple(s.space[a] for a in env_axes)
    d = math.prod(l.dim for l in env_space)

    def flat(pattern):
        out = 0
        for l, x in zip(env_space, pattern):
            out = out * l.dim + x
        return out

    perm = np.eye(d, dtype=complex)
    a, b = flat(patterns[i]), flat(patterns[j])
    perm[[a, b]] = perm[[b, a]]
    swapped = apply_unitary(s, UnitaryOp(env_space, perm))

    rho = reduced_density(s, keep_labels)
    rho_swapped = reduced_density(swapped, keep_labels)
    dev = operator_deviation(rho, rho_swapped)
    label_i = "|".join(str(x) for x in patterns[i])
    label_j = "|".join(str(x) for x in patterns[j])
    return SwapReport(label_i, label_j, dev, dev <= tol, (label_i, label_j))


# -- mechanical proof replay -----------------------------------------------------------


@dataclass(frozen=True)
class HalfHalf:
    """The two-branch equal-amplitude case with a second wired display."""


@dataclass(frozen=True)
class OneThirdTwoThirds:
    """The unequal two-outcome case replayed with three displays."""


@dataclass(frozen=True)
class General:
    """Arbitrary rational squared-amplitudes and phases."""

    weights: tuple[float, ...]
    phases: tuple[float, ...]
    outcomes: tuple[int, ...] | None = None  # detector record per branch
    max_denominator: int = 10_000


@dataclass(frozen=True)
class ProofStep:
    step_id: str
    description: str
    left: str
    right: str
    max_deviation: float
    passed: bool


@dataclass(frozen=True)
class ProofReport:
    case: str
    steps: tuple[ProofStep, ...]
    conclusion: CredenceTable | None

    def all_passed(self) -> bool:
        return all(s.passed for s in self.steps)


class _Union:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


@dataclass
class _Witness:
    """A wave function built from explicit components with definite records."""

    tag: str
    space: tuple[SubsystemLabel, ...]
    comps: list[tuple[complex, dict[str, int]]]

    def state(self) -> StateVector:
        dims = tuple(l.dim for l in self.space)
        arr = np.zeros(dims, dtype=complex)
        for amp, rec in self.comps:
            idx = tuple(rec[l.name] for l in self.space)
            arr[idx] += amp
        return StateVector(self.space, arr.reshape(-1))

    def support(self, factor: str, index: int) -> frozenset[int]:
        return frozenset(
            k for k, (_, rec) in enumerate(self.comps) if rec[factor] == index
        )


def _esp_premise(
    steps: list[ProofStep],
    uf: _Union,
    wa: _Witness,
    wb: _Witness,
    focus: str,
    keep: Sequence[str],
    step_id: str,
    description: str,
    tol: float,
) -> None:
    """Check a reduced-operator equality and record its probability equations."""
    rho_a = reduced_density(wa.state(), keep)
    rho_b = reduced_density(wb.state(), keep)
    dev = operator_deviation(rho_a, rho_b)
    passed = dev < tol
    steps.append(
        ProofStep(
            step_id,
            description,
            f"rho_{{{','.join(keep)}}}({wa.tag})",
            f"rho_{{{','.join(keep)}}}({wb.tag})",
            dev,
            passed,
        )
    )
    if not passed:
        raise PremiseFailed(step_id, dev)
    dim = next(l.dim for l in wa.space if l.name == focus)
    for v in range(dim):
        sa = wa.support(focus, v)
        sb = wb.support(focus, v)
        if sa and sb:
            uf.union((wa.tag, sa), (wb.tag, sb))
        elif sa or sb:
            raise PremiseFailed(step_id, float("inf"))


def _conclude(
    case: str,
    steps: list[ProofStep],
    uf: _Union,
    target: _Witness,
    outcome_factor: str,
    outcome_names: Mapping[int, str],
    step_id: str,
) -> ProofReport:
    n = len(target.comps)
    roots = {uf.find((target.tag, frozenset([k]))) for k in range(n)}
    closed = len(roots) == 1
    steps.append(
        ProofStep(
            step_id,
            "all components fall in one equiprobability class",
            f"{n} components of {target.tag}",
            f"{len(roots)} classes",
            0.0,
            closed,
        )
    )
    if not closed:
        raise PremiseFailed(step_id, float(len(roots)))
    probs: dict[str, Fraction] = {}
    for k, (_, rec) in enumerate(target.comps):
        name = outcome_names[rec[outcome_factor]]
        probs[name] = probs.get(name, Fraction(0)) + Fraction(1, n)
    table = CredenceTable(tuple((k, float(v)) for k, v in probs.items()))
    return ProofReport(case, tuple(steps), table)


def _replay_half_half(tol: float) -> ProofReport:
    a = SubsystemLabel("A", 1)
    d1 = SubsystemLabel("D1", 2)
    d2 = SubsystemLabel("D2", 2)
    sp = SubsystemLabel("s", 2)
    env = SubsystemLabel("E", 2)
    space = (a, d1, d2, sp, env)
    r = 1.0 / math.sqrt(2.0)
    psi1 = _Witness(
        "Psi1",
        space,
        [
            (r, {"A": 0, "D1": 0, "D2": 0, "s": 0, "E": 0}),
            (r, {"A": 0, "D1": 1, "D2": 1, "s": 1, "E": 1}),
        ],
    )
    psi2 = _Witness(
        "Psi2",
        space,
        [
            (r, {"A": 0, "D1": 0, "D2": 1, "s": 0, "E": 0}),
            (r, {"A": 0, "D1": 1, "D2": 0, "s": 1, "E": 1}),
        ],
    )
    steps: list[ProofStep] = []
    uf = _Union()
    _esp_premise(
        steps, uf, psi1, psi2, "D1", ["A", "D1"], "s1",
        "agent+first-display reduced operators agree; outcome credences carry over",
        tol,
    )
    _esp_premise(
        steps, uf, psi1, psi2, "D2", ["A", "D2"], "s2",
        "agent+second-display reduced operators agree; symbol credences carry over",
        tol,
    )
    # the wired display picks out exactly one outcome branch per symbol
    chase_ok = (
        psi1.support("D2", 0) == psi1.support("D1", 0)
        and psi2.support("D2", 0) == psi2.support("D1", 1)
    )
    steps.append(
        ProofStep(
            "s3",
            "display symbols coincide with outcome branches (label chase)",
            "heart branches", "up/down branches", 0.0, chase_ok,
        )
    )
    if not chase_ok:
        raise PremiseFailed("s3", float("inf"))
    return _conclude(
        "half-half", steps, uf, psi1, "D1", {0: "↑", 1: "↓"}, "s4"
    )


def _replay_one_third(tol: float) -> ProofReport:
    a = SubsystemLabel("A", 1)
    d1 = SubsystemLabel("D1", 2)
    d2 = SubsystemLabel("D2", 2)
    d3 = SubsystemLabel("D3", 2)
    sp = SubsystemLabel("s", 2)
    env = SubsystemLabel("E", 3)
    space = (a, d1, d2, d3, sp, env)
    r = 1.0 / math.sqrt(3.0)
    # D2 index 0 = heart, 1 = diamond; D3 index 0 = club, 1 = spade
    alpha = _Witness(
        "PsiAlpha",
        space,
        [
            (r, {"A": 0, "D1": 0, "D2": 1, "D3": 0, "s": 0, "E": 0}),
            (r, {"A": 0, "D1": 0, "D2": 0, "D3": 1, "s": 0, "E": 1}),
            (r, {"A": 0, "D1": 1, "D2": 0, "D3": 0, "s": 1, "E": 2}),
        ],
    )
    beta = _Witness(
        "PsiBeta",
        space,
        [
            (r, {"A": 0, "D1": 0, "D2": 0, "D3": 0, "s": 0, "E": 0}),
            (r, {"A": 0, "D1": 0, "D2": 0, "D3": 0, "s": 0, "E": 1}),
            (r, {"A": 0, "D1": 1, "D2": 1, "D3": 1, "s": 1, "E": 2}),
        ],
    )
    steps: list[ProofStep] = []
    uf = _Union()

    # anchor: both witnesses carry the 2/3-1/3 agent+detector reduced operator
    plain = _Witness(
        "PsiPlain",
        (a, d1, sp, SubsystemLabel("E", 2)),
        [
            (math.sqrt(2.0 / 3.0), {"A": 0, "D1": 0, "s": 0, "E": 0}),
            (math.sqrt(1.0 / 3.0), {"A": 0, "D1": 1, "s": 1, "E": 1}),
        ],
    )
    rho_plain = reduced_density(plain.state(), ["A", "D1"])
    rho_alpha = reduced_density(alpha.state(), ["A", "D1"])
    dev = operator_deviation(rho_plain, rho_alpha)
    steps.append(
        ProofStep(
            "anchor",
            "three-display witness reproduces the measured 2/3-1/3 reduced operator",
            "rho_{A,D1}(PsiPlain)", "rho_{A,D1}(PsiAlpha)", dev, dev < tol,
        )
    )
    if dev >= tol:
        raise PremiseFailed("anchor", dev)

    _esp_premise(
        steps, uf, alpha, beta, "D1", ["A", "D1"], "ss1",
        "first-display reduced operators agree; down credences carry over",
        tol,
    )
    _esp_premise(
        steps, uf, alpha, beta, "D2", ["A", "D2"], "ss2",
        "second-display reduced operators agree; diamond credences carry over",
        tol,
    )
    _esp_premise(
        steps, uf, alpha, beta, "D3", ["A", "D3"], "ss3",
        "third-display reduced operators agree; spade credences carry over",
        tol,
    )
    return _conclude(
        "one-third-two-thirds", steps, uf, alpha, "D1", {0: "↑", 1: "↓"}, "ss4"
    )


def _replay_general(case: General, tol: float) -> ProofReport:
    n = len(case.weights)
    if len(case.phases) != n:
        raise ValueError("one phase per weight required")
    outcomes = case.outcomes or tuple(range(n))
    n_out = max(outcomes) + 1
    rw = rationalize(case.weights, max_denominator=case.max_denominator)

    a = SubsystemLabel("A", 1)
    det = SubsystemLabel("D", n_out)
    env = SubsystemLabel("E", n)
    base = _Witness(
        "Psi0",
        (a, det, env),
        [
            (
                math.sqrt(case.weights[k]) * complex(math.cos(case.phases[k]),
                                                     math.sin(case.phases[k])),
            {"A": 0, "D": outcomes[k], "E": k},
            )
            for k in range(n)
        ],
    )
    steps: list[ProofStep] = []
    uf = _Union()

    refined = equal_amplitude_refine(base.state(), rw, env)
    dev = operator_deviation(
        reduced_density(base.state(), ["A", "D"]),
        reduced_density(refined, ["A", "D"]),
    )
    steps.append(
        ProofStep(
            "refine",
            "splitting records into equal-amplitude pieces preserves rho_{A,D}",
            "rho_{A,D}(Psi0)", "rho_{A,D}(Psi_eqamp)", dev, dev < 1e-12,
        )
    )
    if dev >= 1e-12:
        raise PremiseFailed("refine", dev)

    # flatten the refined components: piece j of record k keeps outcome d_k
    m = rw.t_sq
    flat_outcomes: list[int] = []
    flat_amp: list[complex] = []
    for k in range(n):
        amp = base.comps[k][0] / math.sqrt(rw.c_sq[k])
        for _ in range(rw.c_sq[k]):
            flat_outcomes.append(outcomes[k])
            flat_amp.append(amp)

    # witness pair per display; displays not under focus fold into the record
    env_m = SubsystemLabel("E", m)
    disp = SubsystemLabel("S", 2)
    space = (a, det, disp, env_m)
    worst = 0.0
    for k in range(m):
        wa = _Witness(
            "PsiAlpha",
            space,
            [
                (flat_amp[j], {"A": 0, "D": flat_outcomes[j],
                               "S": 1 if j == k else 0, "E": j})
                for j in range(m)
            ],
        )
        wb = _Witness(
            "PsiBeta",
            space,
            [
                (flat_amp[j], {"A": 0, "D": flat_outcomes[j],
                               "S": 1 if j == m - 1 else 0, "E": j})
                for j in range(m)
            ],
        )
        rho_a = reduced_density(wa.state(), ["A", "S"])
        rho_b = reduced_density(wb.state(), ["A", "S"])
        d_k = operator_deviation(rho_a, rho_b)
        worst = max(worst, d_k)
        if d_k >= tol:
            steps.append(
                ProofStep(
                    f"display-{k}",
                    "agent+display reduced operators agree across the witness pair",
                    "rho_{A,S_k}(PsiAlpha)", "rho_{A,S_k}(PsiBeta)", d_k, False,
                )
            )
            raise PremiseFailed(f"display-{k}", d_k)
        uf.union(("PsiAlpha", frozenset([k])), ("PsiBeta", frozenset([m - 1])))
    steps.append(
        ProofStep(
            "displays",
            f"all {m} agent+display reduced-operator premises hold",
            "rho_{A,S_k}(PsiAlpha)", "rho_{A,S_k}(PsiBeta)", worst, True,
        )
    )

    target = _Witness(
        "PsiAlpha",
        (a, det, env_m),
        [(flat_amp[j], {"A": 0, "D": flat_outcomes[j], "E": j}) for j in range(m)],
    )
    return _conclude(
        "general", steps, uf, target, "D",
        {v: str(v) for v in range(n_out)}, "closure",
    )


def replay_proof(
    case: HalfHalf | OneThirdTwoThirds | General, tol: float = 1e-10
) -> ProofReport:
    """Re-derive the equiprobability conclusion from checked premises.

    Every reduced-density-operator equality the argument leans on is
    evaluated numerically on freshly constructed witness states; the
    equiprobability conclusion is then chased through branch labels with
    no appeal to the rule being derived.
    """
    if isinstance(case, HalfHalf):
        return _replay_half_half(tol)
    if isinstance(case, OneThirdTwoThirds):
        return _replay_one_third(tol)
    if isinstance(case, General):
        return _replay_general(case, tol)
    raise TypeError(f"unknown proof case {case!r}")
