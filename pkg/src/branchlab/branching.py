"""Measurement as entanglement with pointer records, and branch decomposition.

A measurement entangles each eigencomponent of the measured system with a
distinct detector pointer state and a fresh orthogonal environment record.
Record states are exact basis states of a dedicated environment factor; an
optional leakage parameter builds records with a controlled overlap to
exercise the not-decohered path.  Branches of a reduced density operator
are read off the declared pointer records, never re-diagonalized.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionTooSmall,
    IncompleteWiring,
    NoRecord,
    NotDecohered,
)
from .qstate import (
    DensityOperator,
    StateVector,
    SubsystemLabel,
    UnitaryOp,
    apply_unitary,
)

READY = "R"
NO_MEASUREMENT = "X"

_SUPPORT_SQ = 1e-30  # squared-amplitude floor below which a component is absent


def decoherence_eps() -> float:
    """Decoherence threshold; BRANCHLAB_EPS overrides the 1e-10 default."""
    return float(os.environ.get("BRANCHLAB_EPS", "1e-10"))


@dataclass(frozen=True)
class MeasurementBasis:
    """Orthonormal measurement basis with one outcome name per vector."""

    names: tuple[str, ...]
    vectors: np.ndarray  # shape (n_outcomes, system_dim)

    def __post_init__(self):
        vec = np.array(self.vectors, dtype=complex)
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "names", tuple(self.names))
        if vec.shape[0] != len(self.names):
            raise ValueError("one name per basis vector required")
        gram = vec @ vec.conj().T
        if np.max(np.abs(gram - np.eye(vec.shape[0]))) > 1e-10:
            raise ValueError("measurement basis is not orthonormal")

    @staticmethod
    def computational(dim: int, names: Sequence[str]) -> "MeasurementBasis":
        return MeasurementBasis(tuple(names), np.eye(dim, dtype=complex))


def z_basis() -> MeasurementBasis:
    return MeasurementBasis.computational(2, ("↑", "↓"))


@dataclass(frozen=True)
class Branch:
    """One outcome-labeled branch of a decomposed density operator."""

    label: str
    records: tuple[tuple[str, str], ...]  # (subsystem, symbol) in pointer order
    weight: float
    component: np.ndarray  # diagonal block embedded in the source space

    def __post_init__(self):
        comp = np.array(self.component, dtype=complex)
        comp.setflags(write=False)
        object.__setattr__(self, "component", comp)


@dataclass(frozen=True)
class BranchSet:
    branches: tuple[Branch, ...]
    source: str

    def __post_init__(self):
        labels = [b.label for b in self.branches]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate branch labels in {labels}")

    def weights(self) -> dict[str, float]:
        return {b.label: b.weight for b in self.branches}

    def total_weight(self) -> float:
        return sum(b.weight for b in self.branches)


@dataclass(frozen=True)
class Wiring:
    """Total map from detector outcome symbols to display symbols."""

    mapping: tuple[tuple[str, str], ...]

    @staticmethod
    def of(mapping: Mapping[str, str]) -> "Wiring":
        return Wiring(tuple(mapping.items()))

    def as_dict(self) -> dict[str, str]:
        return dict(self.mapping)


# -- environment record bookkeeping ---------------------------------------------


def used_env_indices(s: StateVector, env: SubsystemLabel) -> list[int]:
    ax = s.axis(env.name)
    arr = np.abs(s.array()) ** 2
    other = tuple(i for i in range(len(s.space)) if i != ax)
    mass = arr.sum(axis=other)
    return [int(i) for i in np.nonzero(mass > _SUPPORT_SQ)[0]]


def free_env_indices(s: StateVector, env: SubsystemLabel) -> list[int]:
    used = set(used_env_indices(s, env))
    return [i for i in range(s.label(env.name).dim) if i not in used]


def _take_fresh(pool: list[int], count: int, env: SubsystemLabel):
    if len(pool) < count:
        raise DimensionTooSmall(
            f"environment {env.name!r} has {len(pool)} unused record states, "
            f"needs {count}"
        )
    fresh, rest = pool[:count], pool[count:]
    return fresh, rest


# -- measurement ------------------------------------------------------------------


def _axis_support(arr: np.ndarray, axis: int) -> list[int]:
    mass = (np.abs(arr) ** 2).sum(axis=tuple(i for i in range(arr.ndim) if i != axis))
    return [int(i) for i in np.nonzero(mass > _SUPPORT_SQ)[0]]


def _entangle(
    arr: np.ndarray,
    out: np.ndarray,
    space: tuple[SubsystemLabel, ...],
    sys_ax: int,
    det_ax: int,
    env_ax: int,
    basis: MeasurementBasis,
    pool: list[int],
    env: SubsystemLabel,
    leakage: float,
) -> list[int]:
    """Write the measured version of ``arr`` into ``out``; returns the pool left."""
    n = arr.ndim
    # project out each eigencomponent; comp axes = original order minus system
    comp = np.tensordot(basis.vectors.conj(), arr, axes=([1], [sys_ax]))
    reduced_axes = [ax for ax in range(n) if ax != sys_ax]
    env_red = reduced_axes.index(env_ax)
    det_red = reduced_axes.index(det_ax)
    target_axes = [ax for ax in range(n) if ax not in (det_ax, env_ax)]
    sys_pos = target_axes.index(sys_ax)

    shared_for: dict[int, int] = {}
    if leakage > 0.0:
        if not 0.0 < leakage < 1.0:
            raise ValueError("leakage must lie in (0, 1)")
        c = math.sqrt(leakage / (1.0 - leakage))
        scale_main = 1.0 / math.sqrt(1.0 + c * c)
        scale_shared = c * scale_main

    for k in range(basis.vectors.shape[0]):
        ck = comp[k]
        if float((np.abs(ck) ** 2).sum()) <= _SUPPORT_SQ:
            continue
        for e in _axis_support(ck, env_red):
            piece = np.take(ck, e, axis=env_red)
            det_now = det_red if det_red < env_red else det_red - 1
            piece = np.take(piece, 0, axis=det_now)
            if leakage > 0.0 and e not in shared_for:
                [sh], pool = _take_fresh(pool, 1, env)
                shared_for[e] = sh
            [fresh], pool = _take_fresh(pool, 1, env)
            vk = basis.vectors[k].reshape(
                [space[ax].dim if ax == sys_ax else 1 for ax in target_axes]
            )
            block = np.expand_dims(piece, sys_pos) * vk
            idx = [slice(None)] * n
            idx[det_ax] = k + 1
            if leakage > 0.0:
                idx[env_ax] = fresh
                out[tuple(idx)] += scale_main * block
                idx[env_ax] = shared_for[e]
                out[tuple(idx)] += scale_shared * block
            else:
                idx[env_ax] = fresh
                out[tuple(idx)] += block
    return pool


def measure(
    s: StateVector,
    system: SubsystemLabel,
    detector: SubsystemLabel,
    env: SubsystemLabel,
    basis: MeasurementBasis,
    leakage: float = 0.0,
) -> StateVector:
    """Entangle the system's eigencomponents with pointer and record states.

    The detector must be in its ready state (index 0) everywhere; pointer
    state ``k + 1`` records outcome ``basis.names[k]``.  Every surviving
    (outcome, prior-record) pair consumes a fresh environment basis state,
    so records on distinct branches stay exactly orthogonal.
    """
    sys_ax = s.axis(system.name)
    det_ax = s.axis(detector.name)
    env_ax = s.axis(env.name)
    n_out = basis.vectors.shape[0]
    if basis.vectors.shape != (s.space[sys_ax].dim, s.space[sys_ax].dim):
        raise ValueError("measurement basis must be complete over the system")
    if s.space[det_ax].dim < n_out + 1:
        raise DimensionTooSmall(
            f"detector {detector.name!r} needs dim >= {n_out + 1}"
        )
    arr = s.array()
    if [i for i in _axis_support(arr, det_ax) if i != 0]:
        raise ValueError(f"detector {detector.name!r} is not in its ready state")
    pool = free_env_indices(s, env)
    out = np.zeros_like(arr)
    _entangle(arr, out, s.space, sys_ax, det_ax, env_ax, basis, pool, env, leakage)
    return s.with_amps(out.reshape(-1))


def conditional_measure(
    s: StateVector,
    condition: tuple[SubsystemLabel, int],
    system: SubsystemLabel,
    detector: SubsystemLabel,
    env: SubsystemLabel,
    basis: MeasurementBasis,
    leakage: float = 0.0,
) -> StateVector:
    """Measure only on branches where the condition detector shows the record.

    Branches failing the condition keep the system untouched; their new
    detector moves to the no-measurement record (one past the outcome
    pointers) and the environment still takes a fresh record of the
    non-event.
    """
    cond_label, cond_index = condition
    cond_ax = s.axis(cond_label.name)
    arr = s.array()
    support = _axis_support(arr, cond_ax)
    if support == [0] or not support:
        raise NoRecord(f"detector {cond_label.name!r} carries no records")

    sys_ax = s.axis(system.name)
    det_ax = s.axis(detector.name)
    env_ax = s.axis(env.name)
    n_out = basis.vectors.shape[0]
    if basis.vectors.shape != (s.space[sys_ax].dim, s.space[sys_ax].dim):
        raise ValueError("measurement basis must be complete over the system")
    if s.space[det_ax].dim < n_out + 2:
        raise DimensionTooSmall(
            f"detector {detector.name!r} needs dim >= {n_out + 2} "
            "(outcomes, ready and no-measurement records)"
        )
    if [i for i in _axis_support(arr, det_ax) if i != 0]:
        raise ValueError(f"detector {detector.name!r} is not in its ready state")

    sat = np.zeros_like(arr)
    sel = [slice(None)] * arr.ndim
    sel[cond_ax] = cond_index
    sat[tuple(sel)] = arr[tuple(sel)]
    unsat = arr - sat

    pool = free_env_indices(s, env)
    out = np.zeros_like(arr)
    if float((np.abs(sat) ** 2).sum()) > _SUPPORT_SQ:
        pool = _entangle(
            sat, out, s.space, sys_ax, det_ax, env_ax, basis, pool, env, leakage
        )
    # non-matching branches: no-measurement pointer, fresh record per prior record
    x_index = n_out + 1
    for e in _axis_support(unsat, env_ax):
        piece = np.take(unsat, e, axis=env_ax)
        det_now = det_ax if det_ax < env_ax else det_ax - 1
        piece = np.take(piece, 0, axis=det_now)
        [fresh], pool = _take_fresh(pool, 1, env)
        idx = [slice(None)] * arr.ndim
        idx[det_ax] = x_index
        idx[env_ax] = fresh
        out[tuple(idx)] += piece
    return s.with_amps(out.reshape(-1))


# -- branch decomposition ----------------------------------------------------------


def branch_decompose(
    rho: DensityOperator,
    pointer_labels: Sequence[SubsystemLabel | str],
    names: Mapping[str, Sequence[str]] | None = None,
    eps: float | None = None,
    source: str = "rho",
) -> BranchSet:
    """Split a reduced operator into branches keyed by joint pointer records.

    One branch per joint pointer index with nonzero diagonal weight; the
    label concatenates the record symbols in the order ``pointer_labels``
    were given.  Off-diagonal blocks above ``eps`` mean the operator has
    not decohered in the declared records and we refuse to guess.
    """
    if eps is None:
        eps = decoherence_eps()
    names = dict(names or {})
    ptr_names = [p.name if isinstance(p, SubsystemLabel) else p for p in pointer_labels]
    if not ptr_names:
        raise ValueError("at least one pointer subsystem required")
    axes = [rho.axis(p) for p in ptr_names]
    n = len(rho.space)
    dims = rho.dims
    arr = rho.mat.reshape(dims + dims)
    ptr_dims = [dims[a] for a in axes]
    other_axes = [i for i in range(n) if i not in axes]

    def block(p, q):
        idx = [slice(None)] * (2 * n)
        for a, i in zip(axes, p):
            idx[a] = i
        for a, j in zip(axes, q):
            idx[n + a] = j
        return arr[tuple(idx)]

    patterns = list(itertools.product(*[range(d) for d in ptr_dims]))
    weights = {}
    for p in patterns:
        blk = block(p, p)
        m = len(other_axes)
        sub = "".join(
            "abcdefghijklm"[i] for i in list(range(m)) + list(range(m))
        ) or ""
        w = float(np.einsum(sub + "->", blk).real) if m else float(blk.real)
        weights[p] = w
    for p, q in itertools.combinations(patterns, 2):
        if weights[p] < eps and weights[q] < eps:
            continue
        mag = float(np.max(np.abs(block(p, q)))) if patterns else 0.0
        if mag > eps:
            raise NotDecohered(mag, eps)

    def symbol(sub_name, index):
        seq = names.get(sub_name)
        return seq[index] if seq is not None else str(index)

    branches = []
    for p in patterns:
        if weights[p] < eps:
            continue
        records = tuple((ptr_names[i], symbol(ptr_names[i], p[i])) for i in range(len(p)))
        label = "".join(sym for _, sym in records)
        embedded = np.zeros_like(rho.mat).reshape(dims + dims)
        idx = [slice(None)] * (2 * n)
        for a, i in zip(axes, p):
            idx[a] = i
            idx[n + a] = i
        embedded[tuple(idx)] = block(p, p)
        branches.append(
            Branch(
                label=label,
                records=records,
                weight=weights[p],
                component=embedded.reshape(rho.mat.shape),
            )
        )
    return BranchSet(tuple(branches), source=source)


# -- displays ------------------------------------------------------------------------


def apply_wiring(
    s: StateVector,
    wiring: Wiring,
    display: SubsystemLabel,
    detector: SubsystemLabel,
    detector_names: Sequence[str],
    display_names: Sequence[str],
) -> StateVector:
    """Set a ready display per branch according to the outcome wiring.

    Acts as a unitary on detector ⊗ display, so the reduced state of
    everything else is untouched.  Every detector record with support
    must be wired; the ready record passes through.
    """
    det_ax = s.axis(detector.name)
    disp_ax = s.axis(display.name)
    arr = s.array()
    if [i for i in _axis_support(arr, disp_ax) if i != 0]:
        raise ValueError(f"display {display.name!r} is not in its ready state")
    mapping = wiring.as_dict()
    d_det = s.space[det_ax].dim
    d_disp = s.space[disp_ax].dim
    blocks = []
    for i in _axis_support(arr, det_ax):
        sym = detector_names[i]
        if sym not in mapping:
            if i == 0 and sym == READY:
                continue
            raise IncompleteWiring(f"detector record {sym!r} has no display symbol")
        target = mapping[sym]
        if target not in display_names:
            raise IncompleteWiring(f"display symbol {target!r} not a display state")
        blocks.append((i, display_names.index(target)))
    u = np.zeros((d_det * d_disp, d_det * d_disp), dtype=complex)
    for i in range(d_det):
        perm = np.eye(d_disp)
        for j, t in blocks:
            if j == i and t != 0:
                perm = np.eye(d_disp)
                perm[[0, t]] = perm[[t, 0]]
        u[i * d_disp : (i + 1) * d_disp, i * d_disp : (i + 1) * d_disp] = perm
    op = UnitaryOp((s.space[det_ax], s.space[disp_ax]), u)
    return apply_unitary(s, op)
