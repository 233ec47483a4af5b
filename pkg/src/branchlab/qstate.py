"""Dense complex linear algebra over labeled tensor-factored spaces.

States, density operators and unitaries are immutable values over an
ordered sequence of named finite-dimensional factors.  Joint basis
indices are row-major over the label sequence: the first label varies
slowest.  Everything is double-precision dense; the joint dimension is
capped at ``MAX_JOINT_DIM`` because this library targets desk-scale
states, not circuit simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionTooLarge,
    EmptyKeepSet,
    LabelCollision,
    LabelMissing,
    NotNormalized,
    NotUnitary,
)

MAX_JOINT_DIM = 2 ** 14

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class SubsystemLabel:
    """A named tensor factor with a fixed dimension."""

    name: str
    dim: int

    def __post_init__(self):
        if not self.name:
            raise ValueError("subsystem name must be nonempty")
        if self.dim < 1:
            raise ValueError(f"subsystem {self.name!r} needs dim >= 1")


def _check_space(space: Sequence[SubsystemLabel]) -> tuple[SubsystemLabel, ...]:
    space = tuple(space)
    if not space:
        raise ValueError("a space needs at least one subsystem")
    names = [s.name for s in space]
    if len(set(names)) != len(names):
        raise LabelCollision(f"duplicate subsystem names in {names}")
    if joint_dim(space) > MAX_JOINT_DIM:
        raise DimensionTooLarge(
            f"joint dimension {joint_dim(space)} exceeds cap {MAX_JOINT_DIM}"
        )
    return space


def joint_dim(space: Sequence[SubsystemLabel]) -> int:
    return math.prod(s.dim for s in space)


def _frozen_array(data, shape=None) -> np.ndarray:
    arr = np.array(data, dtype=complex)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitudes over the joint basis of an ordered label sequence."""

    space: tuple[SubsystemLabel, ...]
    amps: np.ndarray

    def __post_init__(self):
        space = _check_space(self.space)
        amps = _frozen_array(self.amps, shape=(joint_dim(space),))
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "amps", amps)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.space)

    @property
    def dim(self) -> int:
        return self.amps.shape[0]

    def axis(self, name: str) -> int:
        for i, s in enumerate(self.space):
            if s.name == name:
                return i
        raise LabelMissing(f"no subsystem named {name!r}")

    def label(self, name: str) -> SubsystemLabel:
        return self.space[self.axis(name)]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def array(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per subsystem."""
        return self.amps.reshape(self.dims)

    def with_amps(self, amps) -> "StateVector":
        return StateVector(self.space, amps)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian unit-trace operator over a labeled subsystem subset."""

    space: tuple[SubsystemLabel, ...]
    mat: np.ndarray

    def __post_init__(self):
        space = _check_space(self.space)
        d = joint_dim(space)
        mat = _frozen_array(self.mat, shape=(d, d))
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "mat", mat)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.space)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def axis(self, name: str) -> int:
        for i, s in enumerate(self.space):
            if s.name == name:
                return i
        raise LabelMissing(f"no subsystem named {name!r}")

    def trace(self) -> float:
        return float(np.trace(self.mat).real)

    def check(self, tol: float = DEFAULT_TOL) -> None:
        """Verify the density-operator invariants, raising on violation."""
        dev = float(np.max(np.abs(self.mat - self.mat.conj().T)))
        if dev > 1e-12:
            raise ValueError(f"not Hermitian: deviation {dev:.3e}")
        if abs(self.trace() - 1.0) > 1e-12:
            raise ValueError(f"trace {self.trace()} differs from 1")
        lo = float(np.min(np.linalg.eigvalsh(self.mat)))
        if lo < -1e-10:
            raise ValueError(f"negative eigenvalue {lo:.3e}")


@dataclass(frozen=True, eq=False)
class UnitaryOp:
    """Unitary acting on a subset of subsystems, row-major over ``targets``."""

    targets: tuple[SubsystemLabel, ...]
    mat: np.ndarray

    def __post_init__(self):
        targets = _check_space(self.targets)
        d = joint_dim(targets)
        mat = _frozen_array(self.mat, shape=(d, d))
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "mat", mat)

    def check_unitary(self, tol: float = 1e-10) -> None:
        d = self.mat.shape[0]
        dev = float(np.max(np.abs(self.mat.conj().T @ self.mat - np.eye(d))))
        if dev > tol:
            raise NotUnitary(f"U†U deviates from identity by {dev:.3e}")


# -- constructors --------------------------------------------------------------


def basis_state(space: Sequence[SubsystemLabel], indices: Sequence[int]) -> StateVector:
    """Joint basis state |i0 i1 ...> over the given factors."""
    space = tuple(space)
    if len(indices) != len(space):
        raise ValueError("one basis index per subsystem required")
    amps = np.zeros(joint_dim(space), dtype=complex)
    flat = 0
    for label, idx in zip(space, indices):
        if not 0 <= idx < label.dim:
            raise ValueError(f"index {idx} out of range for {label.name!r}")
        flat = flat * label.dim + idx
    amps[flat] = 1.0
    return StateVector(space, amps)


def ket(label: SubsystemLabel, amplitudes: Sequence[complex]) -> StateVector:
    """Single-factor state with the given amplitudes."""
    return StateVector((label,), np.asarray(amplitudes, dtype=complex))


def normalize(s: StateVector, tol: float = DEFAULT_TOL) -> StateVector:
    n = s.norm()
    if n < tol:
        raise NotNormalized("cannot normalize a (near-)zero vector")
    return s.with_amps(s.amps / n)


# -- operations ----------------------------------------------------------------


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Tensor product; joint space is the concatenation of the factor spaces."""
    overlap = {s.name for s in a.space} & {s.name for s in b.space}
    if overlap:
        raise LabelCollision(f"labels {sorted(overlap)} appear on both sides")
    return StateVector(a.space + b.space, np.kron(a.amps, b.amps))


def product_state(factors: Iterable[StateVector]) -> StateVector:
    factors = list(factors)
    out = factors[0]
    for f in factors[1:]:
        out = tensor(out, f)
    return out


def apply_unitary(s: StateVector, u: UnitaryOp, tol: float = 1e-10) -> StateVector:
    """Apply ``u`` to its target factors, leaving the rest untouched."""
    u.check_unitary(tol)
    axes = [s.axis(t.name) for t in u.targets]
    for t, ax in zip(u.targets, axes):
        if s.space[ax].dim != t.dim:
            raise LabelMissing(
                f"target {t.name!r} has dim {t.dim}, state has {s.space[ax].dim}"
            )
    tdims = tuple(t.dim for t in u.targets)
    arr = s.array()
    u_nd = u.mat.reshape(tdims + tdims)
    k = len(axes)
    arr = np.tensordot(u_nd, arr, axes=(list(range(k, 2 * k)), axes))
    # tensordot put the target axes in front; move them home
    arr = np.moveaxis(arr, list(range(k)), axes)
    return s.with_amps(arr.reshape(-1))


def _resolve_keep(space: Sequence[SubsystemLabel], keep) -> list[int]:
    names = {k.name if isinstance(k, SubsystemLabel) else k for k in keep}
    if not names:
        raise EmptyKeepSet("keep set must be nonempty")
    have = {s.name for s in space}
    missing = names - have
    if missing:
        raise LabelMissing(f"keep labels {sorted(missing)} not in space")
    return [i for i, s in enumerate(space) if s.name in names]


_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def partial_trace(rho: DensityOperator, keep, tol: float = DEFAULT_TOL) -> DensityOperator:
    """Trace out every factor not in ``keep``; result is re-Hermitized."""
    keep_idx = _resolve_keep(rho.space, keep)
    n = len(rho.space)
    dims = rho.dims
    arr = rho.mat.reshape(dims + dims)
    row = list(_LETTERS[:n])
    col = []
    out = []
    nxt = n
    for i in range(n):
        if i in keep_idx:
            col.append(_LETTERS[nxt])
            nxt += 1
        else:
            col.append(row[i])
    for i in keep_idx:
        out.append(row[i])
    for i in keep_idx:
        out.append(col[i])
    sub = "".join(row) + "".join(col) + "->" + "".join(out)
    kept_space = tuple(rho.space[i] for i in keep_idx)
    d = joint_dim(kept_space)
    reduced = np.einsum(sub, arr).reshape(d, d)
    reduced = (reduced + reduced.conj().T) / 2.0
    return DensityOperator(kept_space, reduced)


def density_of(s: StateVector, tol: float = DEFAULT_TOL) -> DensityOperator:
    """Outer product |s><s| as a rank-1 density operator."""
    if abs(s.norm() - 1.0) > tol:
        raise NotNormalized(f"state norm {s.norm()} differs from 1")
    return DensityOperator(s.space, np.outer(s.amps, s.amps.conj()))


def reduced_density(s: StateVector, keep, tol: float = DEFAULT_TOL) -> DensityOperator:
    """Reduced density operator of a pure state without forming the full matrix."""
    if abs(s.norm() - 1.0) > tol:
        raise NotNormalized(f"state norm {s.norm()} differs from 1")
    keep_idx = _resolve_keep(s.space, keep)
    n = len(s.space)
    arr = s.array()
    row = list(_LETTERS[:n])
    col = []
    nxt = n
    for i in range(n):
        if i in keep_idx:
            col.append(_LETTERS[nxt])
            nxt += 1
        else:
            col.append(row[i])
    out = [row[i] for i in keep_idx] + [col[i] for i in keep_idx]
    sub = "".join(row) + "," + "".join(col) + "->" + "".join(out)
    kept_space = tuple(s.space[i] for i in keep_idx)
    d = joint_dim(kept_space)
    reduced = np.einsum(sub, arr, arr.conj()).reshape(d, d)
    reduced = (reduced + reduced.conj().T) / 2.0
    return DensityOperator(kept_space, reduced)


# -- comparisons ----------------------------------------------------------------


def states_close(a: StateVector, b: StateVector, tol: float = DEFAULT_TOL) -> bool:
    if [s.name for s in a.space] != [s.name for s in b.space]:
        return False
    return float(np.max(np.abs(a.amps - b.amps))) <= tol


def operators_close(a: DensityOperator, b: DensityOperator, tol: float = DEFAULT_TOL) -> bool:
    return operator_deviation(a, b) <= tol


def operator_deviation(a: DensityOperator, b: DensityOperator) -> float:
    if [s.name for s in a.space] != [s.name for s in b.space]:
        raise LabelMissing("operators live on different spaces")
    return float(np.max(np.abs(a.mat - b.mat)))


# -- randomized helpers (seeded; used by property suites) -----------------------


def haar_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian matrix."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    phases = np.diag(r).copy()
    phases /= np.abs(phases)
    return q * phases


def random_state(rng: np.random.Generator, space: Sequence[SubsystemLabel]) -> StateVector:
    """Normalized state with complex Gaussian amplitudes."""
    d = joint_dim(tuple(space))
    amps = rng.normal(size=d) + 1j * rng.normal(size=d)
    amps /= np.linalg.norm(amps)
    return StateVector(tuple(space), amps)
