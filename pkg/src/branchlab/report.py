"""Machine-readable report documents and their human-readable rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

from .credence import CredenceTable, ProofReport, ProofStep
from .epistemics import BookReport
from .errors import ParseError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class QueryReport:
    time: int
    observer: str
    rule: str
    table: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class RunReport:
    scenario: str
    rule: str
    at: int
    summary: tuple[tuple[str, float], ...]
    queries: tuple[QueryReport, ...]
    version: str
    seed: int | None = None
    schema_version: int = SCHEMA_VERSION


def run_report_to_dict(r: RunReport) -> dict:
    return {
        "schema_version": r.schema_version,
        "scenario": r.scenario,
        "rule": r.rule,
        "at": r.at,
        "summary": [{"branch": k, "weight": w} for k, w in r.summary],
        "queries": [
            {
                "time": q.time,
                "observer": q.observer,
                "rule": q.rule,
                "table": [{"hypothesis": k, "probability": p} for k, p in q.table],
            }
            for q in r.queries
        ],
        "version": r.version,
        "seed": r.seed,
    }


def run_report_from_dict(doc: Mapping[str, Any]) -> RunReport:
    try:
        return RunReport(
            scenario=str(doc["scenario"]),
            rule=str(doc["rule"]),
            at=int(doc["at"]),
            summary=tuple(
                (str(s["branch"]), float(s["weight"])) for s in doc["summary"]
            ),
            queries=tuple(
                QueryReport(
                    time=int(q["time"]),
                    observer=str(q["observer"]),
                    rule=str(q["rule"]),
                    table=tuple(
                        (str(t["hypothesis"]), float(t["probability"]))
                        for t in q["table"]
                    ),
                )
                for q in doc["queries"]
            ),
            version=str(doc["version"]),
            seed=None if doc.get("seed") is None else int(doc["seed"]),
            schema_version=int(doc["schema_version"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed run report: {exc}") from exc


def proof_report_to_dict(r: ProofReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "case": r.case,
        "steps": [
            {"id": s.step_id, "description": s.description, "left": s.left,
             "right": s.right, "max_deviation": s.max_deviation,
             "passed": s.passed}
            for s in r.steps
        ],
        "conclusion": None if r.conclusion is None else [
            {"hypothesis": k, "probability": p} for k, p in r.conclusion.entries
        ],
    }


def proof_report_from_dict(doc: Mapping[str, Any]) -> ProofReport:
    try:
        conclusion = doc["conclusion"]
        return ProofReport(
            case=str(doc["case"]),
            steps=tuple(
                ProofStep(
                    step_id=str(s["id"]),
                    description=str(s["description"]),
                    left=str(s["left"]),
                    right=str(s["right"]),
                    max_deviation=float(s["max_deviation"]),
                    passed=bool(s["passed"]),
                )
                for s in doc["steps"]
            ),
            conclusion=None if conclusion is None else CredenceTable(tuple(
                (str(c["hypothesis"]), float(c["probability"]))
                for c in conclusion
            )),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed proof report: {exc}") from exc


def book_report_from_dict(doc: Mapping[str, Any]) -> BookReport:
    from .epistemics import BetDecision

    try:
        return BookReport(
            rule=str(doc["rule"]),
            settlement=str(doc["settlement"]),
            decisions=tuple(
                BetDecision(
                    index=int(d["index"]),
                    offered_at=int(d["offered_at"]),
                    expected_value=float(d["expected_value"]),
                    accepted=bool(d["accepted"]),
                    credences=CredenceTable(tuple(
                        (str(c["hypothesis"]), float(c["probability"]))
                        for c in d["credences"]
                    )),
                )
                for d in doc["decisions"]
            ),
            nets=tuple((str(n["unit"]), float(n["net"])) for n in doc["nets"]),
            sure_loss=bool(doc["sure_loss"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed book report: {exc}") from exc


def book_report_to_dict(r: BookReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "rule": r.rule,
        "settlement": r.settlement,
        "decisions": [
            {
                "index": d.index,
                "offered_at": d.offered_at,
                "expected_value": d.expected_value,
                "accepted": d.accepted,
                "credences": [
                    {"hypothesis": k, "probability": p}
                    for k, p in d.credences.entries
                ],
            }
            for d in r.decisions
        ],
        "nets": [{"unit": k, "net": v} for k, v in r.nets],
        "sure_loss": r.sure_loss,
    }


# -- plain-text tables ---------------------------------------------------------------


def format_rows(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(r) for r in rows)
    return "\n".join(out)


def display_label(label: str) -> str:
    return label if label else "(initial)"
