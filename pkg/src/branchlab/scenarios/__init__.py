"""Declarative measurement/duplication scenarios and their execution.

A scenario is a timeline of events over declared subsystems: quantum
measurements (plain and conditional), display wirings, observations,
memory erasures, classical duplications, scheduled wakings and no-op
relocations.  Running one produces a world state: the wave function, the
per-detector record names, and a registry of observer copies.  "Internally
qualitatively identical" is operationalized as an evidence label: awake
copies accumulate a token per tick, observations append the observed
record, waking appends a wake token, and erasure truncates.  Copy weights
are squared branch amplitudes taken at each copy's own tick.

Bundled scenario documents live as JSON files next to this module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping, Sequence

import numpy as np

from ..branching import (
    MeasurementBasis,
    NO_MEASUREMENT,
    READY,
    apply_wiring,
    measure as _measure,
    conditional_measure as _conditional_measure,
    Wiring,
)
from ..cosmo import BranchHistory, history_from_dict, history_to_dict
from ..credence import (
    CredenceTable,
    ObserverCopy,
    born_credences,
    copy_keys,
    strong_esp,
)
from ..epistemics import Bet, Payoff
from ..errors import (
    EventError,
    LinkError,
    NoCopies,
    ParseError,
    UnknownScenario,
)
from ..qstate import (
    StateVector,
    SubsystemLabel,
    UnitaryOp,
    apply_unitary,
    ket,
    product_state,
    reduced_density,
)

RULES = ("born", "indifference", "strong-esp")

WAKE_TOKEN = "wake"


# -- hypothesis / condition predicates -------------------------------------------


def parse_predicate(obj: Any, path: str, subsystems: set[str]) -> dict:
    """Validate a predicate document; returns it as a plain dict."""
    if obj is True or obj == {"always": True}:
        return {"always": True}
    if not isinstance(obj, dict):
        raise ParseError("predicate must be an object or true", path)
    keys = set(obj)
    if keys == {"detector", "is"}:
        if obj["detector"] not in subsystems:
            raise LinkError(f"unknown subsystem {obj['detector']!r}", path)
        return {"detector": str(obj["detector"]), "is": str(obj["is"])}
    if keys == {"copy"}:
        return {"copy": str(obj["copy"])}
    if keys == {"label"}:
        return {"label": str(obj["label"])}
    if keys == {"all"} or keys == {"any"}:
        (kind,) = keys
        children = obj[kind]
        if not isinstance(children, list) or not children:
            raise ParseError(f"{kind!r} needs a nonempty list", path)
        return {
            kind: [
                parse_predicate(c, f"{path}.{kind}[{i}]", subsystems)
                for i, c in enumerate(children)
            ]
        }
    if keys == {"not"}:
        return {"not": parse_predicate(obj["not"], f"{path}.not", subsystems)}
    if keys == {"always"}:
        return {"always": True}
    raise ParseError(f"unrecognized predicate keys {sorted(keys)}", path)


def eval_predicate(
    pred: Mapping[str, Any],
    records: Mapping[str, str] | None = None,
    copy_id: str | None = None,
    label: str | None = None,
) -> bool:
    if "always" in pred:
        return True
    if "detector" in pred:
        return records is not None and records.get(pred["detector"]) == pred["is"]
    if "copy" in pred:
        return copy_id == pred["copy"]
    if "label" in pred:
        return label == pred["label"]
    if "all" in pred:
        return all(eval_predicate(c, records, copy_id, label) for c in pred["all"])
    if "any" in pred:
        return any(eval_predicate(c, records, copy_id, label) for c in pred["any"])
    if "not" in pred:
        return not eval_predicate(pred["not"], records, copy_id, label)
    raise ValueError(f"malformed predicate {pred!r}")


def predicate_label(pred: Mapping[str, Any]) -> str:
    if "always" in pred:
        return "always"
    if "detector" in pred:
        return f"{pred['detector']}={pred['is']}"
    if "copy" in pred:
        return f"copy:{pred['copy']}"
    if "label" in pred:
        return pred["label"]
    if "all" in pred:
        return "(" + " & ".join(predicate_label(c) for c in pred["all"]) + ")"
    if "any" in pred:
        return "(" + " | ".join(predicate_label(c) for c in pred["any"]) + ")"
    if "not" in pred:
        return "!" + predicate_label(pred["not"])
    raise ValueError(f"malformed predicate {pred!r}")


# -- scenario model ----------------------------------------------------------------


@dataclass(frozen=True)
class ObserverSpec:
    id: str
    subsystem: str
    starts_asleep: bool = False


@dataclass(frozen=True)
class Query:
    time: int
    observer: str
    rule: str
    hypothesis: dict | None = None
    label: str | None = None


@dataclass(frozen=True)
class PrepareEvent:
    time: int
    subsystem: str
    amplitudes: tuple[complex, ...]


@dataclass(frozen=True)
class MeasureEvent:
    time: int
    system: str
    detector: str
    env: str
    basis_names: tuple[str, ...]
    basis_vectors: tuple[tuple[complex, ...], ...] | None = None
    leakage: float = 0.0


@dataclass(frozen=True)
class ConditionalMeasureEvent:
    time: int
    condition: dict
    system: str
    detector: str
    env: str
    basis_names: tuple[str, ...]
    basis_vectors: tuple[tuple[complex, ...], ...] | None = None


@dataclass(frozen=True)
class WireEvent:
    time: int
    detector: str
    display: str
    wiring: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class ObserveEvent:
    time: int
    observer: str
    detector: str


@dataclass(frozen=True)
class EraseMemoryEvent:
    time: int
    observer: str
    condition: dict
    keep: int = 0


@dataclass(frozen=True)
class DuplicateEvent:
    time: int
    observer: str
    copy_id: str
    condition: dict = field(default_factory=lambda: {"always": True})


@dataclass(frozen=True)
class WakeOnEvent:
    time: int
    observer: str
    wakes: tuple[tuple[dict, str], ...]  # (condition, copy label)


@dataclass(frozen=True)
class RelocateEvent:
    time: int
    observer: str
    shift: tuple[tuple[str, float], ...] = ()  # symmetry parameters; no effect


Event = (
    PrepareEvent
    | MeasureEvent
    | ConditionalMeasureEvent
    | WireEvent
    | ObserveEvent
    | EraseMemoryEvent
    | DuplicateEvent
    | WakeOnEvent
    | RelocateEvent
)


@dataclass(frozen=True)
class Scenario:
    name: str
    subsystems: tuple[SubsystemLabel, ...]
    initial: tuple[tuple[str, tuple[complex, ...]], ...]
    events: tuple[Event, ...]
    observers: tuple[ObserverSpec, ...]
    bets: tuple[Bet, ...] = ()
    queries: tuple[Query, ...] = ()
    cosmo: tuple[BranchHistory, ...] = ()

    def subsystem(self, name: str) -> SubsystemLabel:
        for s in self.subsystems:
            if s.name == name:
                return s
        raise LinkError(f"unknown subsystem {name!r}")

    def observer(self, oid: str) -> ObserverSpec:
        for o in self.observers:
            if o.id == oid:
                return o
        raise LinkError(f"unknown observer {oid!r}")

    def last_event_time(self) -> int:
        return max((e.time for e in self.events), default=0)

    def end(self) -> int:
        return self.last_event_time() + 1


# -- parsing -------------------------------------------------------------------------


def _require(doc: Mapping, keys: set[str], optional: set[str], path: str) -> None:
    extra = set(doc) - keys - optional
    if extra:
        raise ParseError(f"unknown keys {sorted(extra)}", path)
    missing = keys - set(doc)
    if missing:
        raise ParseError(f"missing keys {sorted(missing)}", path)


def _complexes(items: Any, path: str) -> tuple[complex, ...]:
    if not isinstance(items, list) or not items:
        raise ParseError("amplitude list must be a nonempty list", path)
    out = []
    for i, a in enumerate(items):
        if not isinstance(a, dict):
            raise ParseError("amplitude must be {re, im}", f"{path}[{i}]")
        _require(a, {"re"}, {"im"}, f"{path}[{i}]")
        out.append(complex(float(a["re"]), float(a.get("im", 0.0))))
    return tuple(out)


def _basis_fields(obj: Any, path: str):
    if obj == "z":
        return ("↑", "↓"), None
    if isinstance(obj, dict):
        _require(obj, {"names"}, {"vectors"}, path)
        names = tuple(str(n) for n in obj["names"])
        vectors = None
        if "vectors" in obj:
            vectors = tuple(
                _complexes(v, f"{path}.vectors[{i}]")
                for i, v in enumerate(obj["vectors"])
            )
        return names, vectors
    raise ParseError("basis must be 'z' or {names, vectors}", path)


def _basis_doc(names, vectors):
    if names == ("↑", "↓") and vectors is None:
        return "z"
    doc: dict[str, Any] = {"names": list(names)}
    if vectors is not None:
        doc["vectors"] = [
            [{"re": a.real, "im": a.imag} for a in row] for row in vectors
        ]
    return doc


def _parse_event(doc: Mapping, path: str, subs: set[str], observers: set[str]) -> Event:
    if "kind" not in doc or "time" not in doc:
        raise ParseError("event needs 'time' and 'kind'", path)
    kind = doc["kind"]
    time = int(doc["time"])
    if time < 1:
        raise ParseError("event times start at 1", path)

    def sub(key):
        name = doc.get(key)
        if name not in subs:
            raise LinkError(f"{key}={name!r} is not a declared subsystem", path)
        return str(name)

    def obs(key="observer"):
        name = doc.get(key)
        if name not in observers:
            raise LinkError(f"{key}={name!r} is not a declared observer", path)
        return str(name)

    if kind == "prepare":
        _require(doc, {"time", "kind", "subsystem", "amplitudes"}, set(), path)
        return PrepareEvent(time, sub("subsystem"),
                            _complexes(doc["amplitudes"], f"{path}.amplitudes"))
    if kind == "measure":
        _require(doc, {"time", "kind", "system", "detector", "env", "basis"},
                 {"leakage"}, path)
        names, vectors = _basis_fields(doc["basis"], f"{path}.basis")
        return MeasureEvent(time, sub("system"), sub("detector"), sub("env"),
                            names, vectors, float(doc.get("leakage", 0.0)))
    if kind == "conditional_measure":
        _require(doc, {"time", "kind", "condition", "system", "detector", "env",
                       "basis"}, set(), path)
        names, vectors = _basis_fields(doc["basis"], f"{path}.basis")
        cond = parse_predicate(doc["condition"], f"{path}.condition", subs)
        if "detector" not in cond:
            raise ParseError("condition must be a detector record test",
                             f"{path}.condition")
        return ConditionalMeasureEvent(time, cond, sub("system"), sub("detector"),
                                       sub("env"), names, vectors)
    if kind == "wire":
        _require(doc, {"time", "kind", "detector", "display", "wiring"}, set(), path)
        wiring = doc["wiring"]
        if not isinstance(wiring, dict) or not wiring:
            raise ParseError("wiring must be a nonempty outcome->symbol map", path)
        return WireEvent(time, sub("detector"), sub("display"),
                         tuple((str(k), str(v)) for k, v in wiring.items()))
    if kind == "observe":
        _require(doc, {"time", "kind", "observer", "detector"}, set(), path)
        return ObserveEvent(time, obs(), sub("detector"))
    if kind == "erase_memory":
        _require(doc, {"time", "kind", "observer", "condition"}, {"keep"}, path)
        return EraseMemoryEvent(time, obs(),
                                parse_predicate(doc["condition"],
                                                f"{path}.condition", subs),
                                int(doc.get("keep", 0)))
    if kind == "duplicate":
        _require(doc, {"time", "kind", "observer", "copy_id"}, {"condition"}, path)
        cond = parse_predicate(doc.get("condition", True), f"{path}.condition", subs)
        return DuplicateEvent(time, obs(), str(doc["copy_id"]), cond)
    if kind == "wake_on":
        _require(doc, {"time", "kind", "observer", "wakes"}, set(), path)
        wakes = doc["wakes"]
        if not isinstance(wakes, list) or not wakes:
            raise ParseError("wakes must be a nonempty list", path)
        parsed = []
        for i, w in enumerate(wakes):
            _require(w, {"condition", "label"}, set(), f"{path}.wakes[{i}]")
            parsed.append(
                (parse_predicate(w["condition"], f"{path}.wakes[{i}].condition",
                                 subs), str(w["label"]))
            )
        return WakeOnEvent(time, obs(), tuple(parsed))
    if kind == "relocate":
        _require(doc, {"time", "kind", "observer"}, {"shift"}, path)
        shift = doc.get("shift", {})
        return RelocateEvent(time, obs(),
                             tuple((str(k), float(v)) for k, v in shift.items()))
    raise ParseError(f"unknown event kind {kind!r}", path)


def _event_doc(e: Event) -> dict:
    if isinstance(e, PrepareEvent):
        return {"time": e.time, "kind": "prepare", "subsystem": e.subsystem,
                "amplitudes": [{"re": a.real, "im": a.imag} for a in e.amplitudes]}
    if isinstance(e, MeasureEvent):
        doc = {"time": e.time, "kind": "measure", "system": e.system,
               "detector": e.detector, "env": e.env,
               "basis": _basis_doc(e.basis_names, e.basis_vectors)}
        if e.leakage:
            doc["leakage"] = e.leakage
        return doc
    if isinstance(e, ConditionalMeasureEvent):
        return {"time": e.time, "kind": "conditional_measure",
                "condition": e.condition, "system": e.system,
                "detector": e.detector, "env": e.env,
                "basis": _basis_doc(e.basis_names, e.basis_vectors)}
    if isinstance(e, WireEvent):
        return {"time": e.time, "kind": "wire", "detector": e.detector,
                "display": e.display, "wiring": dict(e.wiring)}
    if isinstance(e, ObserveEvent):
        return {"time": e.time, "kind": "observe", "observer": e.observer,
                "detector": e.detector}
    if isinstance(e, EraseMemoryEvent):
        doc = {"time": e.time, "kind": "erase_memory", "observer": e.observer,
               "condition": e.condition}
        if e.keep:
            doc["keep"] = e.keep
        return doc
    if isinstance(e, DuplicateEvent):
        doc = {"time": e.time, "kind": "duplicate", "observer": e.observer,
               "copy_id": e.copy_id}
        if e.condition != {"always": True}:
            doc["condition"] = e.condition
        return doc
    if isinstance(e, WakeOnEvent):
        return {"time": e.time, "kind": "wake_on", "observer": e.observer,
                "wakes": [{"condition": c, "label": l} for c, l in e.wakes]}
    if isinstance(e, RelocateEvent):
        doc = {"time": e.time, "kind": "relocate", "observer": e.observer}
        if e.shift:
            doc["shift"] = dict(e.shift)
        return doc
    raise TypeError(f"unknown event {e!r}")


def parse_scenario(doc: Mapping | str) -> Scenario:
    """Validate a scenario document (mapping or JSON text) into a Scenario."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ParseError("scenario document must be an object")
    _require(doc, {"name"},
             {"subsystems", "initial", "events", "observers", "bets", "queries",
              "cosmo"}, "$")

    subsystems = []
    for i, s in enumerate(doc.get("subsystems", [])):
        _require(s, {"label", "dim"}, set(), f"$.subsystems[{i}]")
        subsystems.append(SubsystemLabel(str(s["label"]), int(s["dim"])))
    names = [s.name for s in subsystems]
    if len(set(names)) != len(names):
        raise ParseError(f"duplicate subsystem labels {names}", "$.subsystems")
    subs = set(names)

    initial = []
    for i, item in enumerate(doc.get("initial", [])):
        _require(item, {"subsystem", "amplitudes"}, set(), f"$.initial[{i}]")
        name = item["subsystem"]
        if name not in subs:
            raise LinkError(f"initial references unknown subsystem {name!r}",
                            f"$.initial[{i}].subsystem")
        amps = _complexes(item["amplitudes"], f"$.initial[{i}].amplitudes")
        dim = next(s.dim for s in subsystems if s.name == name)
        if len(amps) != dim:
            raise ParseError(f"{len(amps)} amplitudes for dim-{dim} subsystem",
                             f"$.initial[{i}].amplitudes")
        norm = math.fsum(abs(a) ** 2 for a in amps)
        if abs(norm - 1.0) > 1e-8:
            raise ParseError(f"amplitudes have squared norm {norm}, not 1",
                             f"$.initial[{i}].amplitudes")
        initial.append((str(name), amps))
    if len({n for n, _ in initial}) != len(initial):
        raise ParseError("a subsystem may appear at most once", "$.initial")

    observers = []
    for i, o in enumerate(doc.get("observers", [])):
        _require(o, {"id", "subsystem"}, {"starts_asleep"}, f"$.observers[{i}]")
        if o["subsystem"] not in subs:
            raise LinkError(f"observer references unknown subsystem "
                            f"{o['subsystem']!r}", f"$.observers[{i}].subsystem")
        observers.append(ObserverSpec(str(o["id"]), str(o["subsystem"]),
                                      bool(o.get("starts_asleep", False))))
    oids = [o.id for o in observers]
    if len(set(oids)) != len(oids):
        raise ParseError(f"duplicate observer ids {oids}", "$.observers")

    events = [
        _parse_event(e, f"$.events[{i}]", subs, set(oids))
        for i, e in enumerate(doc.get("events", []))
    ]
    times = [e.time for e in events]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ParseError(f"event times must be strictly increasing, got {times}",
                         "$.events")

    bets = []
    for i, b in enumerate(doc.get("bets", [])):
        _require(b, {"offered_at", "cost", "payoffs"}, {"observer"}, f"$.bets[{i}]")
        payoffs = []
        for j, p in enumerate(b["payoffs"]):
            _require(p, {"hypothesis", "amount"}, set(), f"$.bets[{i}].payoffs[{j}]")
            payoffs.append(Payoff(
                parse_predicate(p["hypothesis"],
                                f"$.bets[{i}].payoffs[{j}].hypothesis", subs),
                float(p["amount"]),
            ))
        observer = b.get("observer")
        if observer is not None and observer not in oids:
            raise LinkError(f"bet references unknown observer {observer!r}",
                            f"$.bets[{i}].observer")
        bets.append(Bet(int(b["offered_at"]), float(b["cost"]), tuple(payoffs),
                        observer=observer))

    queries = []
    for i, q in enumerate(doc.get("queries", [])):
        _require(q, {"time", "observer", "rule"}, {"hypothesis", "label"},
                 f"$.queries[{i}]")
        if q["observer"] not in oids:
            raise LinkError(f"query references unknown observer {q['observer']!r}",
                            f"$.queries[{i}].observer")
        if q["rule"] not in RULES:
            raise ParseError(f"rule must be one of {RULES}", f"$.queries[{i}].rule")
        hyp = None
        if "hypothesis" in q:
            hyp = parse_predicate(q["hypothesis"], f"$.queries[{i}].hypothesis", subs)
        label = str(q["label"]) if "label" in q else None
        queries.append(Query(int(q["time"]), str(q["observer"]), str(q["rule"]),
                             hyp, label))

    cosmo = tuple(
        history_from_dict(h, f"$.cosmo[{i}]")
        for i, h in enumerate(doc.get("cosmo", []))
    )

    return Scenario(str(doc["name"]), tuple(subsystems), tuple(initial),
                    tuple(events), tuple(observers), tuple(bets), tuple(queries),
                    cosmo)


def scenario_to_dict(sc: Scenario) -> dict:
    """Serialize a scenario back to its document form."""
    doc: dict[str, Any] = {
        "name": sc.name,
        "subsystems": [{"label": s.name, "dim": s.dim} for s in sc.subsystems],
    }
    if sc.initial:
        doc["initial"] = [
            {"subsystem": n,
             "amplitudes": [{"re": a.real, "im": a.imag} for a in amps]}
            for n, amps in sc.initial
        ]
    if sc.events:
        doc["events"] = [_event_doc(e) for e in sc.events]
    if sc.observers:
        doc["observers"] = [
            {"id": o.id, "subsystem": o.subsystem,
             **({"starts_asleep": True} if o.starts_asleep else {})}
            for o in sc.observers
        ]
    if sc.bets:
        doc["bets"] = [
            {"offered_at": b.offered_at, "cost": b.cost,
             "payoffs": [{"hypothesis": p.hypothesis, "amount": p.amount}
                         for p in b.payoffs],
             **({"observer": b.observer} if b.observer else {})}
            for b in sc.bets
        ]
    if sc.queries:
        doc["queries"] = [
            {"time": q.time, "observer": q.observer, "rule": q.rule,
             **({"hypothesis": q.hypothesis} if q.hypothesis else {}),
             **({"label": q.label} if q.label else {})}
            for q in sc.queries
        ]
    if sc.cosmo:
        doc["cosmo"] = [history_to_dict(h) for h in sc.cosmo]
    return doc


# -- world state ------------------------------------------------------------------


@dataclass(frozen=True)
class CopyRecord:
    """One observer copy: a (lineage, branch, tick) snapshot with its evidence."""

    copy_id: str
    observer: str
    branch: str
    records: tuple[tuple[str, str], ...]
    time: int
    weight: float
    evidence: tuple[str, ...]

    def as_observer_copy(self) -> ObserverCopy:
        return ObserverCopy(self.copy_id, self.branch, self.time, self.weight)


@dataclass(frozen=True)
class BranchInfo:
    label: str
    records: tuple[tuple[str, str], ...]
    weight: float


@dataclass(frozen=True)
class WorldState:
    scenario: str
    tick: int
    state: StateVector
    record_names: tuple[tuple[str, tuple[str, ...]], ...]
    fired: tuple[str, ...]
    copies: tuple[CopyRecord, ...]
    log: tuple[str, ...]

    def names_map(self) -> dict[str, tuple[str, ...]]:
        return dict(self.record_names)

    def branches(self) -> tuple[BranchInfo, ...]:
        return _branches(self.state, self.fired, self.names_map())


def _branches(state: StateVector, fired: Sequence[str],
              names: Mapping[str, Sequence[str]]) -> tuple[BranchInfo, ...]:
    if not fired:
        return (BranchInfo("", (), 1.0),)
    axes = [state.axis(f) for f in fired]
    mass = (np.abs(state.array()) ** 2).sum(
        axis=tuple(a for a in range(len(state.dims)) if a not in axes)
    )
    out = []
    for pattern in np.argwhere(mass > 1e-30):
        pattern = tuple(int(i) for i in pattern)
        records = tuple(
            (f, names[f][i]) for f, i in zip(fired, pattern)
        )
        label = "".join(sym for _, sym in records)
        out.append(BranchInfo(label, records, float(mass[pattern])))
    return tuple(out)


@dataclass
class _Lineage:
    lid: str
    observer: str
    condition: dict
    evidence: tuple[str, ...]
    awake: bool
    label_for_tick: str | None = None

    def matches(self, branch: BranchInfo) -> bool:
        return eval_predicate(self.condition, dict(branch.records), self.lid,
                              branch.label)


def _conjoin(a: dict, b: dict) -> dict:
    if "always" in a:
        return b
    if "always" in b:
        return a
    return {"all": [a, b]}


def _negate(p: dict) -> dict:
    if "always" in p:
        return {"not": {"always": True}}
    return {"not": p}


class _Runner:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.names: dict[str, tuple[str, ...]] = {}
        self.fired: list[str] = []
        self.copies: list[CopyRecord] = []
        self.log: list[str] = []
        self.lineages: list[_Lineage] = []
        self.state = self._initial_state()
        for o in sc.observers:
            self.lineages.append(
                _Lineage(o.id, o.id, {"always": True}, (), not o.starts_asleep)
            )

    def _initial_state(self) -> StateVector:
        explicit = dict(self.sc.initial)
        factors = []
        for s in self.sc.subsystems:
            if s.name in explicit:
                factors.append(ket(s, explicit[s.name]))
            else:
                amps = np.zeros(s.dim, dtype=complex)
                amps[0] = 1.0
                factors.append(ket(s, amps))
        return product_state(factors)

    # -- helpers -----------------------------------------------------------------

    def branches(self) -> tuple[BranchInfo, ...]:
        return _branches(self.state, self.fired, self.names)

    def _basis(self, names, vectors, system: SubsystemLabel) -> MeasurementBasis:
        if vectors is None:
            return MeasurementBasis.computational(system.dim, names)
        return MeasurementBasis(names, np.array(vectors, dtype=complex))

    def _register(self, detector: str, names: tuple[str, ...]):
        if detector in self.names:
            raise EventError(f"detector {detector!r} already carries records")
        self.names[detector] = names
        self.fired.append(detector)

    def _split_lineages(self, observer: str, cond: dict, mutate,
                        only: str | None = None) -> None:
        """Split each matching lineage of ``observer`` by ``cond``.

        ``mutate(lineage)`` edits the matching child in place; the
        non-matching child is left as it was.  ``only`` restricts which
        lineages the event touches ("awake" or "asleep").  Children
        matching no current branch are dropped.
        """
        branches = self.branches()
        out = []
        for lin in self.lineages:
            skip = (
                lin.observer != observer
                or (only == "awake" and not lin.awake)
                or (only == "asleep" and lin.awake)
            )
            if skip:
                out.append(lin)
                continue
            matching = [
                b for b in branches
                if lin.matches(b)
                and eval_predicate(cond, dict(b.records), lin.lid, b.label)
            ]
            staying = [
                b for b in branches
                if lin.matches(b)
                and not eval_predicate(cond, dict(b.records), lin.lid, b.label)
            ]
            if matching:
                child = _Lineage(lin.lid, lin.observer,
                                 _conjoin(lin.condition, cond),
                                 lin.evidence, lin.awake, lin.label_for_tick)
                mutate(child)
                out.append(child)
            if staying:
                out.append(_Lineage(lin.lid, lin.observer,
                                    _conjoin(lin.condition, _negate(cond)),
                                    lin.evidence, lin.awake, lin.label_for_tick))
        self.lineages = out

    # -- event application ---------------------------------------------------------

    def apply(self, e: Event) -> None:
        if isinstance(e, PrepareEvent):
            self._prepare(e)
        elif isinstance(e, MeasureEvent):
            system = self.sc.subsystem(e.system)
            basis = self._basis(e.basis_names, e.basis_vectors, system)
            self.state = _measure(
                self.state, system, self.sc.subsystem(e.detector),
                self.sc.subsystem(e.env), basis, leakage=e.leakage,
            )
            self._register(e.detector, (READY,) + e.basis_names)
            self.log.append(f"t{e.time}: measured {e.system} into {e.detector}")
        elif isinstance(e, ConditionalMeasureEvent):
            det = e.condition["detector"]
            if det not in self.names:
                raise EventError(f"condition detector {det!r} has no records")
            sym = e.condition["is"]
            if sym not in self.names[det]:
                raise EventError(f"{sym!r} is not a record of {det!r}")
            system = self.sc.subsystem(e.system)
            basis = self._basis(e.basis_names, e.basis_vectors, system)
            self.state = _conditional_measure(
                self.state,
                (self.sc.subsystem(det), self.names[det].index(sym)),
                system, self.sc.subsystem(e.detector), self.sc.subsystem(e.env),
                basis,
            )
            self._register(e.detector,
                           (READY,) + e.basis_names + (NO_MEASUREMENT,))
            self.log.append(
                f"t{e.time}: measured {e.system} into {e.detector} if {det}={sym}"
            )
        elif isinstance(e, WireEvent):
            det = e.detector
            if det not in self.names:
                raise EventError(f"wired detector {det!r} has no records")
            targets = []
            for _, v in e.wiring:
                if v not in targets:
                    targets.append(v)
            display_names = (READY,) + tuple(targets)
            self.state = apply_wiring(
                self.state, Wiring(e.wiring), self.sc.subsystem(e.display),
                self.sc.subsystem(det), self.names[det], display_names,
            )
            self._register(e.display, display_names)
            self.log.append(f"t{e.time}: wired {det} to display {e.display}")
        elif isinstance(e, ObserveEvent):
            self._observe(e)
        elif isinstance(e, EraseMemoryEvent):
            def erase(lin: _Lineage):
                lin.evidence = lin.evidence[: e.keep]
                lin.awake = False
            self._split_lineages(e.observer, e.condition, erase)
            self.log.append(f"t{e.time}: erased memory of {e.observer}")
        elif isinstance(e, DuplicateEvent):
            # clones the observer's original body; a duplicate of a duplicate
            # would need its own observer declaration
            clones = []
            branches = self.branches()
            for lin in self.lineages:
                if lin.lid != e.observer:
                    continue
                if not any(
                    lin.matches(b)
                    and eval_predicate(e.condition, dict(b.records), lin.lid,
                                       b.label)
                    for b in branches
                ):
                    continue
                clones.append(
                    _Lineage(e.copy_id, lin.observer,
                             _conjoin(lin.condition, e.condition),
                             lin.evidence, lin.awake)
                )
            if not clones:
                raise EventError(
                    f"duplicate of {e.observer!r} matches no live lineage"
                )
            self.lineages.extend(clones)
            self.log.append(f"t{e.time}: duplicated {e.observer} as {e.copy_id}")
        elif isinstance(e, WakeOnEvent):
            for cond, label in e.wakes:
                def wake(lin: _Lineage, label=label):
                    lin.awake = True
                    lin.evidence = lin.evidence + (WAKE_TOKEN,)
                    lin.label_for_tick = label
                self._split_lineages(e.observer, cond, wake, only="asleep")
            self.log.append(f"t{e.time}: woke {e.observer}")
        elif isinstance(e, RelocateEvent):
            # a pure symmetry transformation: no state or weight change
            self.log.append(
                f"t{e.time}: relocated {e.observer} by {dict(e.shift)}"
            )
        else:
            raise EventError(f"unknown event {e!r}")

    def _prepare(self, e: PrepareEvent) -> None:
        sub = self.sc.subsystem(e.subsystem)
        if len(e.amplitudes) != sub.dim:
            raise EventError(
                f"{len(e.amplitudes)} amplitudes for dim-{sub.dim} subsystem"
            )
        if abs(math.fsum(abs(a) ** 2 for a in e.amplitudes) - 1.0) > 1e-8:
            raise EventError("prepared amplitudes are not normalized")
        rho = reduced_density(self.state, [sub.name])
        purity = float(np.trace(rho.mat @ rho.mat).real)
        if purity < 1.0 - 1e-10:
            raise EventError(
                f"cannot re-prepare {sub.name!r}: entangled with the rest "
                f"(purity {purity:.6f})"
            )
        vals, vecs = np.linalg.eigh(rho.mat)
        current = vecs[:, int(np.argmax(vals))]
        ax = self.state.axis(sub.name)
        arr = self.state.array()
        rest = np.tensordot(current.conj(), arr, axes=([0], [ax]))
        target = np.asarray(e.amplitudes, dtype=complex)
        shape = [1] * len(self.state.dims)
        shape[ax] = sub.dim
        new = np.expand_dims(rest, ax) * target.reshape(shape)
        self.state = self.state.with_amps(new.reshape(-1))
        self.log.append(f"t{e.time}: prepared {sub.name}")

    def _observe(self, e: ObserveEvent) -> None:
        if e.detector not in self.names:
            raise EventError(f"observed detector {e.detector!r} has no records")
        spec = self.sc.observer(e.observer)
        det = self.sc.subsystem(e.detector)
        body = self.sc.subsystem(spec.subsystem)
        det_names = self.names[e.detector]
        arr = self.state.array()
        det_ax = self.state.axis(det.name)
        mass = (np.abs(arr) ** 2).sum(
            axis=tuple(i for i in range(arr.ndim) if i != det_ax)
        )
        present = [int(i) for i in np.nonzero(mass > 1e-30)[0]]
        if any(i >= body.dim for i in present):
            raise EventError(
                f"observer body {body.name!r} too small to register "
                f"{e.detector!r} records"
            )
        # copy the record into the observer's body: swap ready with record i
        d = det.dim * body.dim
        u = np.zeros((d, d), dtype=complex)
        for i in range(det.dim):
            perm = np.eye(body.dim)
            if i in present and i != 0:
                perm[[0, i]] = perm[[i, 0]]
            u[i * body.dim:(i + 1) * body.dim,
              i * body.dim:(i + 1) * body.dim] = perm
        self.state = apply_unitary(self.state, UnitaryOp((det, body), u))
        # evidence: each awake lineage learns the record on its branches
        for i in present:
            if i == 0:
                continue
            sym = det_names[i]
            cond = {"detector": e.detector, "is": sym}
            def learn(lin: _Lineage, sym=sym):
                lin.evidence = lin.evidence + (f"{e.detector}={sym}",)
            self._split_lineages(e.observer, cond, learn, only="awake")
        self.log.append(f"t{e.time}: {e.observer} observed {e.detector}")

    # -- the clock ------------------------------------------------------------------

    def snapshot(self, tick: int) -> None:
        branches = self.branches()
        for lin in self.lineages:
            if not lin.awake:
                continue
            for b in branches:
                if not lin.matches(b):
                    continue
                self.copies.append(
                    CopyRecord(
                        copy_id=lin.label_for_tick or lin.lid,
                        observer=lin.observer,
                        branch=b.label,
                        records=b.records,
                        time=tick,
                        weight=b.weight,
                        evidence=lin.evidence,
                    )
                )
            lin.label_for_tick = None
        # drop lineages stranded on vanished branches
        self.lineages = [
            lin for lin in self.lineages if any(lin.matches(b) for b in branches)
        ]

    def advance(self, tick: int, event: Event | None) -> None:
        for lin in self.lineages:
            if lin.awake:
                lin.evidence = lin.evidence + (f"t{tick}",)
        if event is not None:
            self.apply(event)
        self.snapshot(tick)


def run(sc: Scenario, until: int) -> WorldState:
    """Execute the timeline through tick ``until`` and return the world state."""
    if until < 0:
        raise EventError("until must be >= 0")
    if until > sc.end():
        raise EventError(
            f"until={until} is past the last event time + 1 = {sc.end()}"
        )
    runner = _Runner(sc)
    runner.snapshot(0)
    by_time = {e.time: e for e in sc.events}
    for t in range(1, until + 1):
        runner.advance(t, by_time.get(t))
    return WorldState(
        scenario=sc.name,
        tick=until,
        state=runner.state,
        record_names=tuple(sorted(runner.names.items())),
        fired=tuple(runner.fired),
        copies=tuple(runner.copies),
        log=tuple(runner.log),
    )


# -- copy classes and credences ---------------------------------------------------------


@dataclass(frozen=True)
class CopyClass:
    """All copies of an observer sharing one evidence label."""

    observer: str
    evidence: tuple[str, ...]
    members: tuple[CopyRecord, ...]


def enumerate_copies(ws: WorldState, observer: str, time: int) -> CopyClass:
    """Copies matching the evidence of the observer's copies at ``time``.

    Membership spans the whole registry, not just the queried tick: a copy
    waking later with the same evidence belongs to the class.
    """
    now = [c for c in ws.copies if c.observer == observer and c.time == time]
    if not now:
        raise NoCopies(f"no copy of {observer!r} at tick {time}")
    labels = {c.evidence for c in now}
    if len(labels) > 1:
        raise EventError(
            f"copies of {observer!r} at tick {time} have distinct evidence "
            f"labels; the query is ambiguous"
        )
    evidence = labels.pop()
    members = tuple(
        c for c in ws.copies if c.observer == observer and c.evidence == evidence
    )
    return CopyClass(observer, evidence, members)


def _hypothesis_table(entries, hypothesis, label) -> CredenceTable:
    p = math.fsum(prob for prob, match in entries if match)
    name = label or predicate_label(hypothesis)
    p = min(max(p, 0.0), 1.0)
    return CredenceTable(((name, p), (f"not {name}", 1.0 - p)))


def solve(sc: Scenario, q: Query) -> CredenceTable:
    """Answer a query under its rule.

    Without a hypothesis, the full table (per branch for the weight rule,
    per copy otherwise).  With one, a two-entry table for the hypothesis
    and its complement.
    """
    if q.rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}, got {q.rule!r}")
    if q.rule == "born":
        ws = run(sc, q.time)
        spec = sc.observer(q.observer)
        if not ws.fired:
            table = CredenceTable((("", 1.0),))
            branch_entries = [(1.0, ())]
        else:
            keep = [spec.subsystem] + list(ws.fired)
            rho = reduced_density(ws.state, keep)
            table = born_credences(rho, list(ws.fired), names=ws.names_map())
            branch_entries = [
                (b.weight, b.records) for b in ws.branches()
            ]
        if q.hypothesis is None:
            return table
        entries = [
            (w, eval_predicate(q.hypothesis, dict(recs), None,
                               "".join(s for _, s in recs)))
            for w, recs in branch_entries
        ]
        return _hypothesis_table(entries, q.hypothesis, q.label)

    ws = run(sc, sc.end())
    cls = enumerate_copies(ws, q.observer, q.time)
    copies = [c.as_observer_copy() for c in cls.members]
    keys = copy_keys(copies)
    if q.rule == "strong-esp":
        table = strong_esp(copies)
    else:
        n = len(copies)
        table = CredenceTable(tuple((k, 1.0 / n) for k in keys))
    if q.hypothesis is None:
        return table
    entries = [
        (table[k],
         eval_predicate(q.hypothesis, dict(c.records), c.copy_id, c.branch))
        for k, c in zip(keys, cls.members)
    ]
    return _hypothesis_table(entries, q.hypothesis, q.label)


# -- bundled corpus ----------------------------------------------------------------------

BUILTIN_NAMES = (
    "once",
    "once_or_twice",
    "two_branch_beauty",
    "three_branch_beauty",
    "dr_evil",
    "what_wave_function",
    "appendix_a_book",
    "dr_evil_book",
)


def builtin(name: str) -> Scenario:
    """Load a bundled scenario from the corpus directory."""
    if name not in BUILTIN_NAMES:
        raise UnknownScenario(
            f"unknown scenario {name!r}; bundled: {', '.join(BUILTIN_NAMES)}"
        )
    text = (resources.files(__package__) / f"{name}.json").read_text("utf-8")
    return parse_scenario(text)
