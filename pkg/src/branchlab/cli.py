"""Command-line interface: run scenarios, verify invariants, check books,
compute observer measures.  Human tables go to stdout; machine reports to
``--out``; figures render next to the delimited output when asked for."""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import replace

import click
import numpy as np

from . import __version__
from .cosmo import ExponentialHistory, exponential_integrand, normalize_families
from .errors import BranchlabError, ParseError
from .epistemics import Bet, Payoff, dutch_book_check
from .report import (
    QueryReport,
    RunReport,
    book_report_to_dict,
    display_label,
    format_rows,
    run_report_to_dict,
)
from .scenarios import RULES, Query, builtin, parse_scenario, run, solve
from .verify import SUITES, run_suite

EXIT_FAILURE = 1
EXIT_INPUT = 2


def _load_scenario(ref: str):
    if ref.startswith("builtin:"):
        return builtin(ref[len("builtin:"):])
    try:
        with open(ref, "r", encoding="utf-8") as fh:
            return parse_scenario(fh.read())
    except OSError as exc:
        raise ParseError(f"cannot read scenario {ref!r}: {exc}") from exc


@click.group()
@click.version_option(__version__, prog_name="branchlab")
def main():
    """Wave-function branching simulator and self-locating credence engine."""


@main.command("run")
@click.argument("scenario")
@click.option("--rule", type=click.Choice(RULES), default=None,
              help="Override the rule of every query.")
@click.option("--at", type=int, default=None,
              help="Tick to evaluate at (default: end of scenario).")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the machine-readable report here.")
@click.option("--plot", type=click.Path(dir_okay=False), default=None,
              help="Render the branch-weight figure here.")
def cmd_run(scenario, rule, at, out, plot):
    """Run a scenario and report credence tables per query."""
    try:
        sc = _load_scenario(scenario)
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    try:
        tick = at if at is not None else sc.end()
        ws = run(sc, tick)
        summary = tuple((b.label, b.weight) for b in ws.branches())

        queries = list(sc.queries)
        if not queries and sc.observers:
            queries = [Query(tick, sc.observers[0].id, rule or "born")]
        resolved = []
        for q in queries:
            if rule is not None:
                q = replace(q, rule=rule)
            if at is not None:
                q = replace(q, time=at)
            if q not in resolved:  # overrides can collapse queries together
                resolved.append(q)

        query_reports = []
        for q in resolved:
            table = solve(sc, q)
            query_reports.append(
                QueryReport(q.time, q.observer, q.rule, table.entries)
            )
        report = RunReport(
            scenario=sc.name,
            rule=rule or "per-query",
            at=tick,
            summary=summary,
            queries=tuple(query_reports),
            version=__version__,
        )
    except BranchlabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FAILURE)

    click.echo(f"scenario {sc.name} at t={tick}")
    click.echo(format_rows(
        ["branch", "weight"],
        [[display_label(k), f"{w:.10f}"] for k, w in summary],
    ))
    for qr in query_reports:
        click.echo(f"\nquery t={qr.time} observer={qr.observer} rule={qr.rule}")
        click.echo(format_rows(
            ["hypothesis", "probability"],
            [[display_label(k), f"{p:.10f}"] for k, p in qr.table],
        ))
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(run_report_to_dict(report), fh, ensure_ascii=False, indent=2)
        click.echo(f"\nreport written to {out}")
    if plot:
        from .plotting import save_probability_bars

        entries = query_reports[0].table if query_reports else summary
        save_probability_bars(plot, entries, f"{sc.name} at t={tick}")
        click.echo(f"figure written to {plot}")


@main.command("verify")
@click.option("--suite", type=click.Choice(SUITES), default=None,
              help="Run one suite (default: all).")
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_verify(suite, trials, seed):
    """Run the seeded invariance suites; exit 0 only if every trial passes."""
    if trials < 1:
        click.echo("error: --trials must be >= 1", err=True)
        sys.exit(EXIT_INPUT)
    names = [suite] if suite else list(SUITES)
    failed = False
    for name in names:
        result = run_suite(name, trials, seed)
        for t in result.trials:
            status = "pass" if t.passed else "FAIL"
            click.echo(
                f"{name} trial {t.index:03d} max_dev {t.max_deviation:.3e} "
                f"{status}  ({t.detail})"
            )
        n_pass = sum(1 for t in result.trials if t.passed)
        click.echo(f"suite {name}: {n_pass}/{len(result.trials)} passed")
        bad = result.first_failure()
        if bad is not None:
            failed = True
            click.echo(
                "reproduce with: branchlab verify "
                f"--suite {name} --trials 1 --seed {seed + bad.index}",
                err=True,
            )
    sys.exit(EXIT_FAILURE if failed else 0)


def _load_book(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read book {path!r}: {exc}") from exc
    if isinstance(doc, dict):
        doc = doc.get("bets")
    if not isinstance(doc, list):
        raise ParseError("book must be a list of bets or {'bets': [...]}")
    bets = []
    for i, b in enumerate(doc):
        extra = set(b) - {"offered_at", "cost", "payoffs", "observer"}
        if extra:
            raise ParseError(f"unknown bet keys {sorted(extra)}", f"$[{i}]")
        payoffs = tuple(
            Payoff(dict(p["hypothesis"]), float(p["amount"])) for p in b["payoffs"]
        )
        bets.append(Bet(int(b["offered_at"]), float(b["cost"]), payoffs,
                        observer=b.get("observer")))
    return bets


@main.command("dutchbook")
@click.argument("scenario")
@click.argument("book", required=False)
@click.option("--rule", type=click.Choice(RULES), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--plot", type=click.Path(dir_okay=False), default=None,
              help="Render the per-unit net payoffs here.")
def cmd_dutchbook(scenario, book, rule, out, plot):
    """Evaluate a book of bets under a rule; the verdict is data, not an error."""
    try:
        sc = _load_scenario(scenario)
        bets = _load_book(book) if book else None
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    try:
        report = dutch_book_check(sc, rule, bets)
    except BranchlabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)

    click.echo(f"book under rule {rule} ({report.settlement} settlement)")
    click.echo(format_rows(
        ["bet", "offered_at", "expected_value", "accepted"],
        [[str(d.index), str(d.offered_at), f"{d.expected_value:+.4f}",
          "yes" if d.accepted else "no"] for d in report.decisions],
    ))
    click.echo(format_rows(
        [report.settlement, "net"],
        [[display_label(k), f"{v:+.4f}"] for k, v in report.nets],
    ))
    click.echo(f"sure loss: {'YES' if report.sure_loss else 'no'}")
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(book_report_to_dict(report), fh, ensure_ascii=False, indent=2)
        click.echo(f"report written to {out}")
    if plot:
        from .plotting import save_net_bars

        save_net_bars(plot, report.nets, f"{sc.name} under {rule}")
        click.echo(f"figure written to {plot}")
    sys.exit(0)


@main.command("measure")
@click.argument("config")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Write integrand samples here for external tooling.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--plot", type=click.Path(dir_okay=False), default=None,
              help="Render the integrand curves here.")
def cmd_measure(config, csv_path, out, plot):
    """Compute the observer measure per branch family and normalize."""
    try:
        sc = _load_scenario(config)
        if not sc.cosmo:
            raise ParseError("config has no cosmo section")
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(EXIT_INPUT)

    outcome = normalize_families(sc.cosmo)
    rows = []
    for r in outcome.results:
        value = "DIVERGENT" if r.divergent else f"{r.value:.10g}"
        rows.append([r.name, r.method, value, f"{r.error_estimate:.2e}"])
    click.echo(format_rows(["family", "method", "measure", "error"], rows))
    if outcome.divergent:
        click.echo(
            "divergent families: " + ", ".join(outcome.divergent_families)
        )
        click.echo("no probability table: normalization is undefined")
    else:
        click.echo(format_rows(
            ["family", "probability"],
            [[k, f"{p:.10f}"] for k, p in outcome.probabilities],
        ))

    samples = _integrand_samples(sc.cosmo)
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["family", "t", "integrand"])
            for name, (ts, ys) in samples.items():
                for t, y in zip(ts, ys):
                    writer.writerow([name, repr(float(t)), repr(float(y))])
        click.echo(f"samples written to {csv_path}")
    if out:
        doc = {
            "schema_version": 1,
            "families": [
                {"name": r.name, "method": r.method,
                 "value": None if r.divergent else r.value,
                 "error_estimate": r.error_estimate,
                 "divergent": r.divergent}
                for r in outcome.results
            ],
            "probabilities": None if outcome.divergent else [
                {"family": k, "probability": p} for k, p in outcome.probabilities
            ],
            "divergent_families": list(outcome.divergent_families),
        }
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, ensure_ascii=False, indent=2)
        click.echo(f"report written to {out}")
    if plot:
        from .plotting import save_curves

        xs = {k: v[0] for k, v in samples.items()}
        ys = {k: v[1] for k, v in samples.items()}
        save_curves(plot, xs, ys, "observer-measure integrands")
        click.echo(f"figure written to {plot}")
    sys.exit(0)


def _integrand_samples(histories, points: int = 200):
    out = {}
    for h in histories:
        if isinstance(h, ExponentialHistory):
            if math.isinf(h.t1):
                rate = h.omega - 2.0 * h.gamma
                if rate < 0:
                    horizon = h.t0 + math.log(
                        max(h.amp_scale**2 / (1e-8 * -rate), 2.0)
                    ) / -rate
                else:
                    horizon = h.t0 + 10.0
            else:
                horizon = h.t1
            ts = np.linspace(h.t0, horizon, points)
            ys = exponential_integrand(h)(ts)
        else:
            ts = np.asarray(h.ts)
            ys = np.asarray(h.alphas) ** 2 * np.asarray(h.ns)
        out[h.name] = (ts.tolist(), np.asarray(ys).tolist())
    return out


if __name__ == "__main__":
    main()
