import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from akgray.tensor import (DenseTensor, Subspace, VarianceError, adapted_frame, complement, contract,
                           intersect_residual, j_action, j_invariance_residual, kernel, span,
                           split_two_form, to_frame)

seeds = st.integers(0, 2**31 - 1)


def _spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


def _std_J(n):
    J = np.zeros((n, n))
    for k in range(0, n, 2):
        J[k + 1, k], J[k, k + 1] = 1.0, -1.0
    return J


def _compatible(rng, n):
    """A random (g, J) pair with J^2 = -1 and g J-invariant."""
    P = rng.normal(size=(n, n)) + n * np.eye(n)
    J = P @ _std_J(n) @ np.linalg.inv(P)
    g0 = _spd(rng, n)
    g = 0.5 * (g0 + J.T @ g0 @ J)
    return g, J


# -- contraction -----------------------------------------------------------------

def test_trace_of_identity():
    n = 4
    t = DenseTensor(np.eye(n), ("u", "l"))
    assert contract(t, 0, 1).components == n


def test_metric_contracted_with_inverse():
    g = _spd(np.random.default_rng(0), 6)
    t = DenseTensor(g, ("l", "l"))
    assert contract(t, 0, 1, DenseTensor(g, ("l", "l"))).components == pytest.approx(6.0)


@given(seeds)
def test_rank3_contraction_matches_loops(seed):
    rng = np.random.default_rng(seed)
    n = 4
    T = rng.normal(size=(n, n, n))
    out = contract(DenseTensor(T, ("u", "l", "l")), 0, 2).components
    ref = np.zeros(n)
    for j in range(n):
        for i in range(n):
            ref[j] += T[i, j, i]
    assert np.allclose(out, ref, rtol=0, atol=1e-13)
    g = _spd(rng, n)
    gi = np.linalg.inv(g)
    out = contract(DenseTensor(T, ("l", "l", "l")), 0, 1, DenseTensor(g, ("l", "l"))).components
    ref = np.zeros(n)
    for k in range(n):
        for i in range(n):
            for j in range(n):
                ref[k] += gi[i, j] * T[i, j, k]
    assert np.allclose(out, ref, atol=1e-12)


def test_contraction_errors():
    t = DenseTensor(np.zeros((4, 4, 4)), ("l", "l", "u"))
    with pytest.raises(VarianceError):
        contract(t, 0, 0)
    with pytest.raises(VarianceError):
        contract(t, 0, 3)
    with pytest.raises(VarianceError):
        contract(t, 0, 1)  # same variance without a metric
    with pytest.raises(VarianceError):
        DenseTensor(np.zeros((4, 4)), ("u",))
    with pytest.raises(VarianceError):
        DenseTensor(np.zeros((4, 4)), ("u", "x"))


# -- subspaces -------------------------------------------------------------------

def test_kernel_of_zero_map_is_everything():
    assert kernel(np.zeros((16, 4))).rank == 4


def test_kernel_of_invertible_map_is_trivial():
    assert kernel(np.random.default_rng(1).normal(size=(4, 4)) + 4 * np.eye(4)).rank == 0


def test_kernel_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        kernel(np.eye(4), 0.0)
    with pytest.raises(ValueError):
        kernel(np.eye(4), 1.0)


@given(seeds, st.integers(0, 6))
def test_kernel_of_known_rank_map(seed, r):
    rng = np.random.default_rng(seed)
    n = 6
    g = _spd(rng, n)
    M = rng.normal(size=(9, r)) @ rng.normal(size=(r, n))
    K = kernel(M, 1e-8, g)
    assert K.rank == n - r
    assert K.orthonormality_residual() < 1e-10
    if K.rank:
        assert np.abs(M @ K.basis).max() < 1e-8 * max(1.0, np.abs(M).max())


@given(seeds, st.integers(0, 6))
def test_projector_properties(seed, k):
    rng = np.random.default_rng(seed)
    n = 6
    g = _spd(rng, n)
    s = span(rng.normal(size=(n, k)), g)
    P = s.projector()
    assert np.abs(P @ P - P).max() < 1e-12 * max(1, np.abs(P).max()) ** 2 * 10
    assert np.abs(g @ P - (g @ P).T).max() < 1e-10  # g-self-adjoint
    c = complement(s)
    assert s.rank + c.rank == n
    assert np.abs(P + c.projector() - np.eye(n)).max() < 1e-12 * 100
    assert np.abs(s.basis.T @ g @ c.basis).max() < 1e-10 if k and k < n else True


def test_complement_extremes():
    g = np.eye(4)
    full = Subspace(np.eye(4), g)
    assert complement(full).rank == 0
    assert complement(Subspace(np.zeros((4, 0)), g)).rank == 4


def test_intersection_and_invariance_residuals():
    g = np.eye(4)
    a = span(np.eye(4)[:, :1], g)
    b = span(np.eye(4)[:, :2], g)
    assert intersect_residual(a, b) == 0.0
    assert intersect_residual(b, a) == pytest.approx(1.0)
    J = _std_J(4)
    assert j_invariance_residual(b, J) == 0.0
    assert j_invariance_residual(span(np.eye(4)[:, 1:3], g), J) == pytest.approx(1.0)


@given(seeds)
def test_adapted_frame_is_orthonormal_and_J_adapted(seed):
    rng = np.random.default_rng(seed)
    g, J = _compatible(rng, 6)
    F = adapted_frame(g, J)
    assert np.abs(F.T @ g @ F - np.eye(6)).max() < 1e-10
    for k in range(0, 6, 2):
        assert np.abs(J @ F[:, k] - F[:, k + 1]).max() < 1e-10
    # the frame components of g and J are the standard ones
    assert np.abs(to_frame(g, "ll", F) - np.eye(6)).max() < 1e-10
    assert np.abs(to_frame(J, "ul", F) - _std_J(6)).max() < 1e-10


# -- two-forms -------------------------------------------------------------------

def test_kaehler_form_is_invariant():
    g, J = _compatible(np.random.default_rng(3), 4)
    omega = J.T @ g  # omega(X, Y) = g(JX, Y)
    s = split_two_form(omega, J)
    assert np.abs(s.anti_part).max() < 1e-12
    assert np.abs(s.invariant_part - omega).max() < 1e-12


def test_anti_invariant_pattern_has_no_invariant_part():
    rng = np.random.default_rng(4)
    g, J = _compatible(rng, 4)
    A = rng.normal(size=(4, 4))
    B = A - A.T
    # alpha(X, Y) = B(JX, Y) + B(X, JY) is anti-invariant under the J action
    alpha = J.T @ B + B @ J
    alpha = 0.5 * (alpha - alpha.T)
    s = split_two_form(alpha, J)
    assert np.abs(s.invariant_part).max() < 1e-10 * max(1, np.abs(alpha).max())


@given(seeds)
def test_split_invariants(seed):
    rng = np.random.default_rng(seed)
    g, J = _compatible(rng, 6)
    A = rng.normal(size=(6, 6))
    alpha = A - A.T
    s = split_two_form(alpha, J)
    scale = np.abs(alpha).max() * np.abs(J).max() ** 2
    assert np.array_equal(s.invariant_part + s.anti_part, alpha) or \
        np.abs(s.invariant_part + s.anti_part - alpha).max() <= 4 * np.finfo(float).eps * scale
    assert np.abs(j_action(s.invariant_part, J) - s.invariant_part).max() < 1e-12 * scale
    assert np.abs(j_action(s.anti_part, J) + s.anti_part).max() < 1e-12 * scale
    again = split_two_form(s.invariant_part, J)
    assert np.abs(again.anti_part).max() < 1e-12 * scale
    # parts are orthogonal for the metric induced on two-forms
    gi = np.linalg.inv(g)
    ip = np.einsum("ab,cd,ac,bd->", s.invariant_part, s.anti_part, gi, gi)
    assert abs(ip) < 1e-10 * scale ** 2


def test_split_rejects_non_antisymmetric():
    with pytest.raises(ValueError):
        split_two_form(np.eye(4), _std_J(4))
