"""State algebra: tensor products, unitaries, partial traces."""

import math

import numpy as np
import pytest

from branchlab.errors import (
    DimensionTooLarge,
    EmptyKeepSet,
    LabelCollision,
    LabelMissing,
    NotNormalized,
    NotUnitary,
)
from branchlab.qstate import (
    StateVector,
    SubsystemLabel,
    UnitaryOp,
    apply_unitary,
    basis_state,
    density_of,
    haar_unitary,
    ket,
    operator_deviation,
    partial_trace,
    product_state,
    random_state,
    reduced_density,
    tensor,
)

R = 1.0 / math.sqrt(2.0)


def qubit(name):
    return SubsystemLabel(name, 2)


def test_tensor_of_basis_states_hits_the_row_major_index():
    out = tensor(basis_state([qubit("x")], [0]), basis_state([qubit("y")], [1]))
    assert out.dim == 4
    assert out.amps[1] == 1.0
    assert np.count_nonzero(out.amps) == 1


def test_tensor_distributes_over_superpositions():
    plus = ket(qubit("x"), [R, R])
    zero = basis_state([qubit("y")], [0])
    out = tensor(plus, zero)
    np.testing.assert_allclose(out.amps, [R, 0, R, 0], atol=1e-15)


def test_tensor_reproduces_the_ready_product_state():
    a = basis_state([SubsystemLabel("A", 2)], [0])
    d = basis_state([SubsystemLabel("D", 3)], [0])
    spin = ket(SubsystemLabel("a", 2), [R, R])
    env = basis_state([SubsystemLabel("E", 3)], [0])
    state = product_state([a, d, spin, env])
    assert [s.name for s in state.space] == ["A", "D", "a", "E"]
    arr = state.array()
    assert arr[0, 0, 0, 0] == pytest.approx(R)
    assert arr[0, 0, 1, 0] == pytest.approx(R)
    assert np.count_nonzero(arr) == 2


def test_tensor_rejects_duplicate_labels():
    with pytest.raises(LabelCollision):
        tensor(basis_state([qubit("x")], [0]), basis_state([qubit("x")], [0]))


def test_joint_dimension_cap():
    labels = [SubsystemLabel(f"q{i}", 2) for i in range(15)]
    with pytest.raises(DimensionTooLarge):
        basis_state(labels, [0] * 15)


def test_identity_leaves_any_state_alone():
    rng = np.random.default_rng(1)
    s = random_state(rng, [qubit("x"), qubit("y")])
    u = UnitaryOp((qubit("y"),), np.eye(2))
    np.testing.assert_allclose(apply_unitary(s, u).amps, s.amps, atol=1e-15)


def test_environment_swap_exchanges_records():
    spin = qubit("s")
    env = qubit("E")
    state = StateVector((spin, env), [0.0, R, R, 0.0])  # up E2 + down E1
    swap = UnitaryOp((env,), np.array([[0, 1], [1, 0]], dtype=complex))
    swapped = apply_unitary(state, swap)
    np.testing.assert_allclose(swapped.amps, [R, 0.0, 0.0, R], atol=1e-15)


def test_random_unitaries_preserve_norm():
    rng = np.random.default_rng(7)
    space = [qubit("x"), SubsystemLabel("y", 3), qubit("z")]
    for _ in range(25):
        s = random_state(rng, space)
        u = UnitaryOp(tuple(space[:2]), haar_unitary(rng, 6))
        assert apply_unitary(s, u).norm() == pytest.approx(1.0, abs=1e-12)


def test_non_unitary_matrix_is_rejected():
    s = basis_state([qubit("x")], [0])
    with pytest.raises(NotUnitary):
        apply_unitary(s, UnitaryOp((qubit("x"),), np.array([[1, 1], [0, 1.0]])))


def test_unknown_target_label_is_rejected():
    s = basis_state([qubit("x")], [0])
    with pytest.raises(LabelMissing):
        apply_unitary(s, UnitaryOp((qubit("nope"),), np.eye(2)))


def _post_measurement_state():
    """Equal superposition of up/down with observer, detector and records."""
    space = (
        SubsystemLabel("A", 3),
        SubsystemLabel("D", 3),
        SubsystemLabel("a", 2),
        SubsystemLabel("E", 3),
    )
    arr = np.zeros((3, 3, 2, 3), dtype=complex)
    arr[1, 1, 0, 1] = R  # up record, environment E1
    arr[2, 2, 1, 2] = R  # down record, environment E2
    return StateVector(space, arr.reshape(-1))


def test_partial_trace_drops_cross_terms_for_orthogonal_records():
    rho = reduced_density(_post_measurement_state(), ["A", "D", "a"])
    arr = rho.mat.reshape(3, 3, 2, 3, 3, 2)
    assert arr[1, 1, 0, 1, 1, 0] == pytest.approx(0.5)
    assert arr[2, 2, 1, 2, 2, 1] == pytest.approx(0.5)
    assert arr[1, 1, 0, 2, 2, 1] == pytest.approx(0.0, abs=1e-15)
    rho.check()


def test_partial_trace_of_product_state_is_rank_one():
    rng = np.random.default_rng(3)
    a = random_state(rng, [qubit("x")])
    b = random_state(rng, [SubsystemLabel("y", 3)])
    rho = reduced_density(tensor(a, b), ["x"])
    assert rho.trace() == pytest.approx(1.0, abs=1e-12)
    evals = np.linalg.eigvalsh(rho.mat)
    assert evals[-1] == pytest.approx(1.0, abs=1e-12)


def _ptrace_oracle(s: StateVector, keep_names):
    """Explicit index summation, independent of the einsum path."""
    dims = s.dims
    n = len(dims)
    keep = [i for i, l in enumerate(s.space) if l.name in keep_names]
    traced = [i for i in range(n) if i not in keep]
    keep_dims = [dims[i] for i in keep]
    d = int(np.prod(keep_dims))
    rho = np.zeros((d, d), dtype=complex)
    for flat_i, amp_i in enumerate(s.amps):
        idx_i = np.unravel_index(flat_i, dims)
        for flat_j, amp_j in enumerate(s.amps):
            idx_j = np.unravel_index(flat_j, dims)
            if all(idx_i[t] == idx_j[t] for t in traced):
                r = np.ravel_multi_index([idx_i[k] for k in keep], keep_dims)
                c = np.ravel_multi_index([idx_j[k] for k in keep], keep_dims)
                rho[r, c] += amp_i * np.conj(amp_j)
    return rho


def test_partial_trace_matches_index_summation_oracle():
    rng = np.random.default_rng(11)
    space = [qubit("x"), SubsystemLabel("y", 3), qubit("z")]
    for _ in range(5):
        s = random_state(rng, space)
        got = reduced_density(s, ["x", "z"]).mat
        expected = _ptrace_oracle(s, {"x", "z"})
        np.testing.assert_allclose(got, expected, atol=1e-12)
        via_full = partial_trace(density_of(s), ["x", "z"]).mat
        np.testing.assert_allclose(via_full, expected, atol=1e-12)


def test_partial_trace_composition():
    rng = np.random.default_rng(13)
    space = [qubit("w"), qubit("x"), SubsystemLabel("y", 3), qubit("z")]
    s = random_state(rng, space)
    rho = density_of(s)
    one_step = partial_trace(rho, ["w", "x"])
    two_step = partial_trace(partial_trace(rho, ["w", "x", "y"]), ["w", "x"])
    assert operator_deviation(one_step, two_step) < 1e-12


def test_empty_keep_set_rejected():
    rho = density_of(basis_state([qubit("x"), qubit("y")], [0, 0]))
    with pytest.raises(EmptyKeepSet):
        partial_trace(rho, [])


def test_density_of_basis_state_is_a_projector():
    rho = density_of(basis_state([qubit("x")], [0]))
    np.testing.assert_allclose(rho.mat, [[1, 0], [0, 0]], atol=1e-15)


def test_density_of_uniform_superposition():
    rho = density_of(ket(qubit("x"), [R, R]))
    np.testing.assert_allclose(rho.mat, np.full((2, 2), 0.5), atol=1e-15)


def test_density_of_random_state_is_idempotent():
    rng = np.random.default_rng(17)
    s = random_state(rng, [qubit("x"), SubsystemLabel("y", 3)])
    rho = density_of(s)
    np.testing.assert_allclose(rho.mat @ rho.mat, rho.mat, atol=1e-12)


def test_density_of_rejects_unnormalized_vectors():
    with pytest.raises(NotNormalized):
        density_of(StateVector((qubit("x"),), [0.0, 0.0]))


def test_reduced_dynamics_commutes_with_local_evolution():
    rng = np.random.default_rng(19)
    space = (qubit("A1"), qubit("A2"), SubsystemLabel("B", 3))
    for _ in range(10):
        s = random_state(rng, space)
        u_a = haar_unitary(rng, 4)
        u_b = haar_unitary(rng, 3)
        evolved = apply_unitary(
            apply_unitary(s, UnitaryOp(space[:2], u_a)),
            UnitaryOp(space[2:], u_b),
        )
        lhs = reduced_density(evolved, ["A1", "A2"]).mat
        rhs = u_a @ reduced_density(s, ["A1", "A2"]).mat @ u_a.conj().T
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_environment_unitaries_leave_the_reduced_state_alone():
    rng = np.random.default_rng(23)
    space = (qubit("A"), SubsystemLabel("E1", 3), qubit("E2"))
    for _ in range(10):
        s = random_state(rng, space)
        u = UnitaryOp(space[1:], haar_unitary(rng, 6))
        before = reduced_density(s, ["A"])
        after = reduced_density(apply_unitary(s, u), ["A"])
        assert operator_deviation(before, after) < 1e-12
