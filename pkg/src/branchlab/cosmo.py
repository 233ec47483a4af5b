"""Observer measure over amplitude-decaying branch families.

A family's weight is the time integral of squared branch amplitude times
observer density.  Exponential families get the closed form, with
divergence decided analytically (a decay rate at or below half the
observer growth rate never converges); tabulated families go through
quadrature with a reported error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson, trapezoid

from .errors import InvalidDensity, NoSupport, ParseError


@dataclass(frozen=True)
class ExponentialHistory:
    """|alpha(t)| = A e^(-gamma t), n(t) = e^(omega t) over [t0, t1]."""

    name: str
    amp_scale: float  # A
    gamma: float
    omega: float
    t0: float = 0.0
    t1: float = math.inf

    def __post_init__(self):
        if self.amp_scale <= 0:
            raise ValueError("amplitude scale must be positive")


@dataclass(frozen=True)
class TabulatedHistory:
    """Sampled |alpha| and observer density on a shared increasing grid."""

    name: str
    ts: tuple[float, ...]
    alphas: tuple[float, ...]
    ns: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.ts) == len(self.alphas) == len(self.ns)):
            raise ValueError("ts, alphas and ns must have equal lengths")
        if len(self.ts) < 3:
            raise ValueError("need at least 3 samples")
        if any(b <= a for a, b in zip(self.ts, self.ts[1:])):
            raise ValueError("ts must be strictly increasing")
        if any(n < 0 for n in self.ns):
            raise InvalidDensity("observer density samples must be >= 0")
        if any(a < 0 for a in self.alphas):
            raise ValueError("amplitude magnitudes must be >= 0")


BranchHistory = ExponentialHistory | TabulatedHistory


@dataclass(frozen=True)
class MeasureResult:
    name: str
    value: float | None  # None marks divergence
    method: str
    error_estimate: float

    @property
    def divergent(self) -> bool:
        return self.value is None


def branch_measure(h: BranchHistory) -> MeasureResult:
    """Integral of |alpha(t)|^2 n(t) dt, or a divergence verdict."""
    if isinstance(h, ExponentialHistory):
        rate = h.omega - 2.0 * h.gamma
        a2 = h.amp_scale**2
        if math.isinf(h.t1):
            if rate >= 0.0:
                return MeasureResult(h.name, None, "closed-form", 0.0)
            value = a2 * math.exp(rate * h.t0) / (2.0 * h.gamma - h.omega)
            return MeasureResult(h.name, value, "closed-form", 0.0)
        if rate == 0.0:
            value = a2 * (h.t1 - h.t0)
        else:
            value = a2 * (math.exp(rate * h.t1) - math.exp(rate * h.t0)) / rate
        return MeasureResult(h.name, value, "closed-form", 0.0)

    ts = np.asarray(h.ts, dtype=float)
    integrand = np.asarray(h.alphas, dtype=float) ** 2 * np.asarray(h.ns, dtype=float)
    value = float(simpson(integrand, x=ts))
    crude = float(trapezoid(integrand, x=ts))
    return MeasureResult(h.name, max(value, 0.0), "quadrature", abs(value - crude))


def adaptive_simpson(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float = 1e-8,
    min_step: float = 1e-6,
) -> tuple[float, float]:
    """Composite Simpson with interval halving until the estimate settles.

    Returns (value, error_estimate); the error is the Richardson difference
    between the last two refinements.  Stops refining at ``min_step``.
    """
    n = 16
    prev = None
    while True:
        xs = np.linspace(a, b, n + 1)
        ys = f(xs)
        val = float(simpson(ys, x=xs))
        if prev is not None:
            err = abs(val - prev) / 15.0
            if err < tol or (b - a) / n < min_step:
                return val, err
        prev = val
        n *= 2


def exponential_integrand(h: ExponentialHistory) -> Callable[[np.ndarray], np.ndarray]:
    rate = h.omega - 2.0 * h.gamma
    return lambda t: h.amp_scale**2 * np.exp(rate * t)


def exponential_tail_bound(h: ExponentialHistory, horizon: float) -> float:
    """Upper bound on the discarded tail past ``horizon`` (convergent case)."""
    rate = h.omega - 2.0 * h.gamma
    if rate >= 0:
        return math.inf
    return h.amp_scale**2 * math.exp(rate * horizon) / (-rate)


@dataclass(frozen=True)
class FamilyMeasures:
    """Normalization outcome across families; divergence poisons the table."""

    results: tuple[MeasureResult, ...]
    probabilities: tuple[tuple[str, float], ...] | None
    divergent_families: tuple[str, ...]

    @property
    def divergent(self) -> bool:
        return bool(self.divergent_families)


def normalize_families(hs: Sequence[BranchHistory]) -> FamilyMeasures:
    """Normalize finite measures into probabilities across declared families."""
    hs = list(hs)
    if not hs:
        raise ValueError("at least one branch history required")
    results = tuple(branch_measure(h) for h in hs)
    bad = tuple(r.name for r in results if r.divergent)
    if bad:
        return FamilyMeasures(results, None, bad)
    total = math.fsum(r.value for r in results)
    if total <= 0.0:
        raise NoSupport("every family has zero measure")
    probs = tuple((r.name, r.value / total) for r in results)
    return FamilyMeasures(results, probs, ())


# -- document form (the scenario schema's `cosmo` section) -------------------------


def history_from_dict(doc, path: str = "$") -> BranchHistory:
    if not isinstance(doc, dict):
        raise ParseError("cosmo family must be an object", path)
    form = doc.get("form")
    if form == "exponential":
        allowed = {"form", "name", "A", "gamma", "omega", "t0", "t1"}
        extra = set(doc) - allowed
        if extra:
            raise ParseError(f"unknown keys {sorted(extra)}", path)
        missing = {"A", "gamma", "omega"} - set(doc)
        if missing:
            raise ParseError(f"missing keys {sorted(missing)}", path)
        t1 = doc.get("t1", None)
        return ExponentialHistory(
            name=str(doc.get("name", "family")),
            amp_scale=float(doc["A"]),
            gamma=float(doc["gamma"]),
            omega=float(doc["omega"]),
            t0=float(doc.get("t0", 0.0)),
            t1=math.inf if t1 is None else float(t1),
        )
    if form == "tabulated":
        allowed = {"form", "name", "ts", "alphas", "ns"}
        extra = set(doc) - allowed
        if extra:
            raise ParseError(f"unknown keys {sorted(extra)}", path)
        missing = {"ts", "alphas", "ns"} - set(doc)
        if missing:
            raise ParseError(f"missing keys {sorted(missing)}", path)
        return TabulatedHistory(
            name=str(doc.get("name", "family")),
            ts=tuple(float(t) for t in doc["ts"]),
            alphas=tuple(float(a) for a in doc["alphas"]),
            ns=tuple(float(n) for n in doc["ns"]),
        )
    raise ParseError(f"form must be 'exponential' or 'tabulated', got {form!r}", path)


def history_to_dict(h: BranchHistory) -> dict:
    if isinstance(h, ExponentialHistory):
        doc = {
            "form": "exponential",
            "name": h.name,
            "A": h.amp_scale,
            "gamma": h.gamma,
            "omega": h.omega,
        }
        if h.t0 != 0.0:
            doc["t0"] = h.t0
        if not math.isinf(h.t1):
            doc["t1"] = h.t1
        return doc
    return {
        "form": "tabulated",
        "name": h.name,
        "ts": list(h.ts),
        "alphas": list(h.alphas),
        "ns": list(h.ns),
    }
