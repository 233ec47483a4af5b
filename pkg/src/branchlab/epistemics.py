"""Bet evaluation, Dutch-book detection and Bayesian theory confirmation.

Money is linear: a bet is accepted exactly when its expected value under
the agent's credences at the offering tick is nonnegative (a fair bet is
taken).  Accepted bets settle per branch when payoffs depend only on
records, per copy when any payoff mentions copy identity.  A book is a
sure loss when every settlement unit ends up strictly negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .credence import CredenceTable
from .errors import PartitionMismatch, ZeroEvidence

_EV_TOL = 1e-9


@dataclass(frozen=True)
class Payoff:
    hypothesis: dict  # predicate document (see scenarios)
    amount: float


@dataclass(frozen=True)
class Bet:
    offered_at: int
    cost: float
    payoffs: tuple[Payoff, ...]
    observer: str | None = None  # defaults to the scenario's first observer


def _mentions_copy(pred: Mapping) -> bool:
    if "copy" in pred:
        return True
    for key in ("all", "any"):
        if key in pred and any(_mentions_copy(c) for c in pred[key]):
            return True
    return "not" in pred and _mentions_copy(pred["not"])


def bet_kind(b: Bet) -> str:
    return "copy" if any(_mentions_copy(p.hypothesis) for p in b.payoffs) else "branch"


def _payoff_for(b: Bet, records, copy_id, label) -> float:
    from .scenarios import eval_predicate

    hits = [
        p for p in b.payoffs
        if eval_predicate(p.hypothesis, records, copy_id, label)
    ]
    if len(hits) != 1:
        raise PartitionMismatch(
            f"{len(hits)} payoff hypotheses match records={records} "
            f"copy={copy_id!r}; expected exactly one"
        )
    return hits[0].amount


def expected_value(b: Bet, c: CredenceTable) -> float:
    """EV = sum P(h) * payoff(h) - cost, over the credence table's labels."""
    from .scenarios import eval_predicate

    total = 0.0
    for label, prob in c.entries:
        hits = [
            p for p in b.payoffs
            if eval_predicate(p.hypothesis, None, label, label)
        ]
        if len(hits) != 1:
            raise PartitionMismatch(
                f"{len(hits)} payoff hypotheses match table entry {label!r}; "
                "expected exactly one"
            )
        total += prob * hits[0].amount
    return total - b.cost


@dataclass(frozen=True)
class BetDecision:
    index: int
    offered_at: int
    expected_value: float
    accepted: bool
    credences: CredenceTable


@dataclass(frozen=True)
class BookReport:
    rule: str
    decisions: tuple[BetDecision, ...]
    settlement: str  # "branch" or "copy"
    nets: tuple[tuple[str, float], ...]
    sure_loss: bool


def _credences_at(sc, rule: str, tick: int, observer: str):
    """The rule's credences for the live copy class / branches at a tick.

    Returns (table, units) where each unit is (key, records, copy_id).
    """
    from .credence import copy_keys, strong_esp
    from .scenarios import enumerate_copies, run

    if rule == "born":
        ws = run(sc, tick)
        branches = ws.branches()
        table = CredenceTable(
            tuple((b.label, b.weight / sum(x.weight for x in branches))
                  for b in branches)
        )
        units = [(b.label, dict(b.records), None) for b in branches]
        return table, units
    ws = run(sc, sc.end())
    cls = enumerate_copies(ws, observer, tick)
    copies = [c.as_observer_copy() for c in cls.members]
    keys = copy_keys(copies)
    if rule == "strong-esp":
        table = strong_esp(copies)
    else:
        n = len(copies)
        table = CredenceTable(tuple((k, 1.0 / n) for k in keys))
    units = [
        (k, dict(c.records), c.copy_id) for k, c in zip(keys, cls.members)
    ]
    return table, units


def dutch_book_check(sc, rule: str, book: Sequence[Bet] | None = None) -> BookReport:
    """Accept each bet the rule finds fair, settle, and look for a sure loss."""
    from .scenarios import run

    bets = list(book) if book is not None else list(sc.bets)
    default_observer = sc.observers[0].id if sc.observers else None
    decisions = []
    accepted: list[Bet] = []
    for i, b in enumerate(bets):
        observer = b.observer or default_observer
        table, units = _credences_at(sc, rule, b.offered_at, observer)
        ev = -b.cost
        for key, records, copy_id in units:
            ev += table[key] * _payoff_for(b, records, copy_id, key)
        ok = ev >= -_EV_TOL
        decisions.append(BetDecision(i, b.offered_at, ev, ok, table))
        if ok:
            accepted.append(b)

    settlement = "copy" if any(bet_kind(b) == "copy" for b in bets) else "branch"
    ws = run(sc, sc.end())
    if settlement == "branch":
        units = [(b.label, dict(b.records), None) for b in ws.branches()]
    else:
        final = [c for c in ws.copies if c.time == ws.tick]
        units = [(c.copy_id, dict(c.records), c.copy_id) for c in final]
    nets = []
    for key, records, copy_id in units:
        net = 0.0
        for b in accepted:
            net += _payoff_for(b, records, copy_id, key) - b.cost
        nets.append((key, net))
    sure_loss = bool(nets) and all(n < -_EV_TOL for _, n in nets)
    return BookReport(rule, tuple(decisions), settlement, tuple(nets), sure_loss)


# -- Bayesian confirmation ----------------------------------------------------------


def bayes_update(
    priors: Mapping[str, float],
    likelihoods: Mapping[str, Mapping[str, float]],
    observed: str,
) -> dict[str, float]:
    """Conditionalize the theory priors on one observed outcome."""
    if abs(math.fsum(priors.values()) - 1.0) > 1e-10:
        raise ValueError(f"priors sum to {math.fsum(priors.values())}, not 1")
    for theory in priors:
        row = likelihoods[theory]
        if abs(math.fsum(row.values()) - 1.0) > 1e-10:
            raise ValueError(f"likelihood row for {theory!r} does not sum to 1")
    evidence = math.fsum(
        priors[t] * likelihoods[t].get(observed, 0.0) for t in priors
    )
    if evidence <= 0.0:
        raise ZeroEvidence(f"outcome {observed!r} has probability 0")
    return {
        t: priors[t] * likelihoods[t].get(observed, 0.0) / evidence for t in priors
    }


def confirm_sequence(
    priors: Mapping[str, float],
    likelihoods: Mapping[str, Mapping[str, float]],
    outcomes: Sequence[str],
) -> list[dict[str, float]]:
    """Posterior trajectory over a sequence of independent trials."""
    current = dict(priors)
    trajectory = []
    for o in outcomes:
        current = bayes_update(current, likelihoods, o)
        trajectory.append(dict(current))
    return trajectory
