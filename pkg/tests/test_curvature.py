import json
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from akgray.chart import sample_points
from akgray.classify import hermitian_curvature_residual, japply
from akgray.connection import PointState
from akgray.curvature import (CONVENTION, NotJInvariantError, bianchi_residuals, curvature_bar,
                              curvature_set, cyclic_sum, d_nabla_u, hermitian_ricci, riemann,
                              sectional_curvature)
from akgray.decompose import kahler_nullity, vertical_space
from akgray.registry import BATTERY, get_chart
from akgray.tensor import Subspace, span

GOLDEN = Path(__file__).parent / "golden" / "sphere_holonomy.json"
KT = "kodaira_thurston"


def _scale(R):
    return np.abs(R).max() + 1.0


def test_flat_curvature_vanishes():
    st = PointState(get_chart("flat_kahler_4"), [0.1, 0.2, 0.3, 0.4])
    cs = curvature_set(st)
    assert not cs.R.any() and not cs.Rbar.any() and not cs.du.any()
    assert cs.convention == CONVENTION


def test_sphere_block_sectional_curvature_is_one():
    chart = get_chart("sphere_block")
    for p in sample_points(chart, 20, 1):
        st = PointState(chart, p, order=2)
        assert sectional_curvature(st, [1, 0, 0, 0], [0, 1, 0, 0]) == pytest.approx(1.0, abs=1e-12)
        assert sectional_curvature(st, [1, 0, 0, 0], [0, 0, 1, 0]) == pytest.approx(0.0, abs=1e-12)


def _loop_defect(chart, p, eps):
    def leg(start, d, V):
        f = lambda s, y: -np.einsum("i,ijk,j->k", d, PointState(chart, start + s * d, order=1).christoffel, y)
        return solve_ivp(f, (0, 1), V, rtol=1e-12, atol=1e-14, method="DOP853").y[:, -1]

    X, Y = np.array([eps, 0, 0, 0]), np.array([0, eps, 0, 0])
    V, q = np.array([0, 1.0, 0, 0]), np.array(p, dtype=float)
    for d in (X, Y, -X, -Y):
        V = leg(q, d, V)
        q = q + d
    g = chart.values(p)[0]
    return float(((V - [0, 1, 0, 0]) @ g)[0] / eps ** 2)


def test_sign_convention_against_holonomy_golden():
    gold = json.loads(GOLDEN.read_text())
    chart = get_chart(gold["chart"])
    h1, h2 = (_loop_defect(chart, gold["point"], e) for e in gold["steps"])
    limit = 2 * h2 - h1  # the loop starts at a corner, so the leading error is linear in eps
    assert limit == pytest.approx(gold["holonomy_d0_component_over_eps2"], abs=1e-5)
    R = riemann(PointState(chart, gold["point"], order=2))
    assert R[0, 1, 1, 0] == pytest.approx(gold["R_0110"], abs=1e-13)
    assert np.sign(R[0, 1, 1, 0]) * np.sign(limit) == gold["sign_relation"]
    assert abs(R[0, 1, 1, 0] - limit) < 1e-4


def _kt_left_invariant_frame(p):
    E = np.eye(4)
    E[3, 1] = p[0]  # E2 = d1 + x0 d3
    return E


def test_kt_sectional_curvatures_follow_the_heisenberg_formula():
    chart = get_chart(KT)
    expected = {(0, 1): -0.75, (0, 3): 0.25, (1, 3): 0.25, (0, 2): 0.0, (1, 2): 0.0, (2, 3): 0.0}
    for p in sample_points(chart, 10, 4):
        st = PointState(chart, p, order=2)
        E = _kt_left_invariant_frame(p)
        for (a, b), k in expected.items():
            assert sectional_curvature(st, E[:, a], E[:, b]) == pytest.approx(k, abs=1e-12)


@pytest.mark.parametrize("name", BATTERY)
def test_riemann_symmetries(name):
    chart = get_chart(name)
    for p in sample_points(chart, 100, 7):
        st = PointState(chart, p, order=2)
        R = st.in_frame(riemann(st), "llll")
        s = _scale(R)
        assert np.abs(R + R.transpose(1, 0, 2, 3)).max() / s < 1e-8
        assert np.abs(R + R.transpose(0, 1, 3, 2)).max() / s < 1e-8
        assert np.abs(R - R.transpose(2, 3, 0, 1)).max() / s < 1e-8
        assert np.abs(cyclic_sum(R)).max() / s < 1e-8


@pytest.mark.parametrize("name", BATTERY)
def test_hermitian_connection_curvature_and_du_symmetries(name):
    chart = get_chart(name)
    for p in sample_points(chart, 30, 8):
        st = PointState(chart, p, order=2)
        J = st.J_frame
        Rb = st.in_frame(curvature_bar(st), "llll")
        assert np.abs(japply(Rb, J, (2, 3)) - Rb).max() / _scale(Rb) < 1e-8
        du = d_nabla_u(st)
        assert np.array_equal(du, -du.transpose(1, 0, 2, 3)) or \
            np.abs(du + du.transpose(1, 0, 2, 3)).max() < 1e-13 * _scale(du)
        duf = st.in_frame(du, "llll")
        # [du(X, Y)] anticommutes with J: <du(X,Y) J Z, U> = <J du(X,Y) Z, ...>
        assert np.abs(japply(duf, J, (2, 3)) + duf).max() < 1e-10 * _scale(duf)


@pytest.mark.parametrize("name", ["flat_kahler_4", "product:kahler_surfaces:flat_kahler_4"])
def test_kaehler_curvatures_coincide(name):
    chart = get_chart(name)
    for p in sample_points(chart, 20, 1):
        st = PointState(chart, p, order=2)
        assert np.abs(curvature_bar(st) - riemann(st)).max() < 1e-10
        du = st.in_frame(d_nabla_u(st), "llll")
        assert np.abs(du).max() < 1e-10
        assert np.abs(du.transpose(2, 3, 0, 1) - du).max() < 1e-8
        b = bianchi_residuals(st)
        assert b["bianchi1"] < 1e-10 and b["lemma3.2"] < 1e-10


def test_kt_hermitian_curvature_identity_at_100_points():
    chart = get_chart(KT)
    assert max(hermitian_curvature_residual(PointState(chart, p, order=2)) for p in sample_points(chart, 100, 7)) < 1e-8


@pytest.mark.parametrize("name", [KT, "perturbed:flat_kahler_4:0.1:42", "perturbed:flat_kahler_6:0.1:3"])
def test_levi_civita_bianchi_is_universal(name):
    chart = get_chart(name)
    for p in sample_points(chart, 20, 9):
        st = PointState(chart, p, order=2)
        assert bianchi_residuals(st)["bianchi1"] / _scale(st.in_frame(riemann(st), "llll")) < 1e-8


def test_hermitian_ricci_flat_is_zero():
    st = PointState(get_chart("flat_kahler_4"), [0.1, 0.2, 0.3, 0.4])
    full = Subspace(np.eye(4), st.g)
    hr = hermitian_ricci(st, full, full)
    assert not np.abs(hr.rho).max() > 0 and hr.symmetry_residual == 0.0


def _random_rotation_unitary(rng, V: Subspace, J):
    """Rotate an orthonormal basis of a J-invariant subspace by a random unitary map."""
    k = V.rank // 2
    # J-adapted basis v, Jv, w, Jw, ... then a random U(k) action
    B = V.basis
    Z = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    U, _ = np.linalg.qr(Z)
    Re, Im = U.real, U.imag
    M = np.zeros((2 * k, 2 * k))
    M[0::2, 0::2], M[1::2, 1::2] = Re, Re
    M[1::2, 0::2], M[0::2, 1::2] = Im, -Im
    A = np.column_stack([B[:, 2 * i] for i in range(k)])
    adapted = np.column_stack([c for a in A.T for c in (a, J @ a)])
    return Subspace(adapted @ M, V.metric)


def test_hermitian_ricci_basis_independence_on_kt():
    chart = get_chart(KT)
    rng = np.random.default_rng(11)
    for p in sample_points(chart, 5, 2):
        st = PointState(chart, p, order=2)
        H, _ = kahler_nullity(st)
        V, _ = vertical_space(st, H)
        full = Subspace(np.eye(4), st.g)
        base = hermitian_ricci(st, V, full)
        for _ in range(3):
            # an arbitrary orthonormal basis of V, not just a unitary one
            Q, _ = np.linalg.qr(rng.normal(size=(V.rank, V.rank)))
            rot = Subspace(V.basis @ Q, st.g)
            assert np.abs(hermitian_ricci(st, rot, full).rho - base.rho).max() < 1e-9
            rot = _random_rotation_unitary(rng, V, st.J)
            assert rot.orthonormality_residual() < 1e-12
            assert np.abs(hermitian_ricci(st, rot, full).rho - base.rho).max() < 1e-9


def test_hermitian_ricci_rejects_non_invariant_space():
    st = PointState(get_chart(KT), np.zeros(4))
    line = span(np.eye(4)[:, :1], st.g)
    with pytest.raises(NotJInvariantError):
        hermitian_ricci(st, line, line)
