"""Kaehler nullity, vertical space and the finer splittings of the vertical space.

Everything is computed at a single point.  Statements about distributions
(parallelism, integrability, configuration tensors) need first derivatives of
the projector fields; these are taken by a five-point central difference of
the pointwise construction, which is smooth near regular points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .chart import ChartSpec, sample_points, validate_chart
from .classify import (TOL_GATED, TOL_VALIDATE, TOL_VERDICT, ChartValidationError,
                       condition_residuals, torsion_identity_residual, map_points)
from .connection import PointState
from .curvature import HermitianRicci, hermitian_ricci
from .tensor import (DEFAULT_RANK_TOL, Subspace, complement, intersect_residual, j_invariance_residual,
                     kernel, relative_complement, span)

FD_STEP = 1e-3


class GateError(ValueError):
    """A construction was asked for on a chart that fails its hypothesis."""


class CrossCheckError(ValueError):
    pass


def _ev(t: np.ndarray, *bases: np.ndarray) -> np.ndarray:
    """Contract slot k of a lowered tensor with the columns of ``bases[k]``."""
    out = t
    for k, B in enumerate(bases):
        out = np.moveaxis(np.tensordot(out, B, axes=([k], [0])), -1, k)
    return out


def _mabs(a: np.ndarray) -> float:
    return float(np.abs(a).max()) if a.size else 0.0


def _ref_scale(vectors: np.ndarray, g: np.ndarray) -> float:
    """Largest g-singular value of a set of columns, floored at one."""
    if vectors.size == 0:
        return 1.0
    L = np.linalg.cholesky(g)
    return max(1.0, float(np.linalg.norm(L.T @ vectors, 2)))


def _span_abs(vectors: np.ndarray, g: np.ndarray, tol: float) -> Subspace:
    vectors = np.asarray(vectors, dtype=float).reshape(g.shape[0], -1)
    return span(vectors, g, tol, scale=_ref_scale(vectors, g))


def _pairs(fn, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Columns fn(a, b) for every column a of A and b of B."""
    n = A.shape[0]
    if A.shape[1] == 0 or B.shape[1] == 0:
        return np.zeros((n, 0))
    return np.column_stack([fn(a, b) for a in A.T for b in B.T])


def span_equality(vectors: np.ndarray, target: Subspace, tol: float) -> float:
    """Zero iff the span of ``vectors`` equals ``target`` (containment both ways)."""
    s = _span_abs(vectors, target.metric, tol)
    return max(intersect_residual(s, target), intersect_residual(target, s))


# -- pointwise algebraic construction ------------------------------------------------

@dataclass(frozen=True)
class Decomposition:
    H: Subspace
    V: Subspace
    V0: Subspace
    V1: Subspace
    E1: Subspace
    E2: Subspace
    rank_tol: float
    regular: bool
    stabilized: bool
    residuals: dict = field(default_factory=dict)

    def ranks(self) -> dict[str, int]:
        return {k: getattr(self, k).rank for k in ("H", "V", "V0", "V1", "E1", "E2")}


def _eta_map(state: PointState) -> np.ndarray:
    """Matrix of v -> eta_v with the output in orthonormal frame components."""
    F = state.frame
    E = np.einsum("iju,ja,ub->iab", state.eta_lower, F, F, optimize=True)
    return E.reshape(state.n, -1).T


def kahler_nullity(state: PointState, rank_tol: float = DEFAULT_RANK_TOL) -> tuple[Subspace, bool]:
    """H = {v : eta_v = 0} and a regularity flag.

    Singular values are compared with ``rank_tol * max(sigma_max, 1)``; the
    point is flagged non-regular if any of them falls within a factor 10 of
    that threshold.
    """
    M = _eta_map(state)
    L = np.linalg.cholesky(state.g)
    s = np.linalg.svd(np.linalg.solve(L, M.T).T, compute_uv=False)
    ref = max(1.0, float(s[0]) if s.size else 0.0)
    thr = rank_tol * ref
    regular = not bool(np.any((s > thr / 10) & (s < thr * 10)))
    return kernel(M, rank_tol, metric=state.g, scale=ref), regular


def torsion_value(T: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("i,j,ijk->k", u, v, T)


def eta_value(eta: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("i,j,ijk->k", u, v, eta)


def vertical_space(state: PointState, H: Subspace, rank_tol: float = DEFAULT_RANK_TOL,
                   gate_tol: float = TOL_VERDICT) -> tuple[Subspace, float]:
    """V = H^perp, cross-checked against the span of all torsion values.

    Returns ``(V, residual)``.  Refuses charts failing the closed-Kaehler-form
    gate, since V = span T(TM, TM) relies on it.
    """
    resid = torsion_identity_residual(state)
    if resid >= gate_tol:
        raise GateError(f"torsion identity of almost Kaehler structures fails (residual {resid:.3e}); "
                        "the vertical space is only defined for almost Kaehler charts")
    V = complement(H)
    n = state.n
    I = np.eye(n)
    Tspan = _span_abs(_pairs(lambda a, b: torsion_value(state.torsion, a, b), I, I), state.g, rank_tol)
    residual = max(intersect_residual(Tspan, V), intersect_residual(V, Tspan))
    if Tspan.rank != V.rank:
        residual = max(residual, 1.0)
    return V, residual


def _torsion_iteration(T: np.ndarray, V: Subspace, rank_tol: float, max_iter: int):
    D = V
    g = V.metric
    for _ in range(max_iter):
        if D.rank == 0:
            return D, True
        nxt = _span_abs(_pairs(lambda a, b: torsion_value(T, a, b), D.basis, D.basis), g, rank_tol)
        if nxt.rank == D.rank and intersect_residual(nxt, D) < math.sqrt(rank_tol):
            return nxt, True
        D = nxt
    return D, False


def split_v0_v1(state: PointState, V: Subspace,
                rank_tol: float = DEFAULT_RANK_TOL) -> tuple[Subspace, Subspace, dict, bool]:
    """V0 as the limit of D_{k+1} = span T(D_k, D_k), V1 its complement in V.

    Returns the two subspaces, the residual map and whether the iteration
    stabilized.
    """
    T, eta, eta_l, g = state.torsion, state.eta, state.eta_lower, state.g
    F = state.frame
    V0, ok = _torsion_iteration(T, V, rank_tol, 2 * state.n)
    V1 = relative_complement(V0, V)
    H = complement(V)
    res = {
        "eq4.2_TV0V0": span_equality(_pairs(lambda a, b: torsion_value(T, a, b), V0.basis, V0.basis),
                                     V0, rank_tol),
        "eq4.2_etaV1V1_in_H": _mabs(_ev(eta_l, V1.basis, V1.basis, V.basis)),
        "eq4.2_etaV1V0": _mabs(_ev(eta_l, V1.basis, V0.basis, F)),
        "cor4.1_etaV1H": span_equality(_pairs(lambda a, b: eta_value(eta, a, b), V1.basis, H.basis),
                                       V1, rank_tol),
        "cor4.1_etaV0V1": _mabs(_ev(eta_l, V0.basis, V1.basis, F)),
    }
    return V0, V1, res, ok


def split_e1_e2(state: PointState, V0: Subspace, H: Subspace,
                rank_tol: float = DEFAULT_RANK_TOL) -> tuple[Subspace, Subspace, dict]:
    """E2 = eta_{V0} H (projected into V0), E1 its complement in V0."""
    eta, eta_l, T, F = state.eta, state.eta_lower, state.torsion, state.frame
    raw = _pairs(lambda a, b: eta_value(eta, a, b), V0.basis, H.basis)
    P0 = V0.projector()
    E2 = _span_abs(P0 @ raw, state.g, rank_tol) if raw.size else _span_abs(raw, state.g, rank_tol)
    E1 = relative_complement(E2, V0)
    res = {
        "E2_in_V0": _mabs(F.T @ state.g @ (raw - P0 @ raw)) if raw.size else 0.0,
        "lemma4.6_etaE2E1": _mabs(_ev(eta_l, E2.basis, E1.basis, F)),
        "lemma4.6_etaE1E2": _mabs(_ev(eta_l, E1.basis, E2.basis, F)),
        "lemma4.6_TE1E1": span_equality(_pairs(lambda a, b: torsion_value(T, a, b), E1.basis, E1.basis),
                                        E1, rank_tol),
        "lemma4.6_TE2E2": span_equality(_pairs(lambda a, b: torsion_value(T, a, b), E2.basis, E2.basis),
                                        E2, rank_tol),
        "eq4.4": _mabs(_ev(eta_l, E1.basis, H.basis, F)),
        "eq4.5": _mabs(_ev(eta_l, E1.basis, E2.basis, F)),
    }
    return E1, E2, res


def algebraic_decomposition(state: PointState, rank_tol: float = DEFAULT_RANK_TOL,
                            gate_tol: float = TOL_VERDICT) -> Decomposition:
    H, regular = kahler_nullity(state, rank_tol)
    V, vres = vertical_space(state, H, rank_tol, gate_tol)
    V0, V1, res, ok = split_v0_v1(state, V, rank_tol)
    E1, E2, eres = split_e1_e2(state, V0, H, rank_tol)
    res = {"vertical_cross_check": vres, **res, **eres}
    J = state.J
    res["j_invariance"] = max(j_invariance_residual(s, J) for s in (H, V, V0, V1, E1, E2))
    res["orthogonality"] = max(_mabs(a.basis.T @ state.g @ b.basis) for a, b in ((H, V), (V0, V1), (E1, E2)))
    return Decomposition(H, V, V0, V1, E1, E2, rank_tol, regular and ok, ok, res)


# -- derivatives of projector fields ---------------------------------------------------

def block_projectors(chart: ChartSpec, state: PointState) -> dict[str, np.ndarray]:
    """g-orthogonal projectors onto the coordinate blocks of a product chart."""
    out = {}
    start = 0
    for k, d in enumerate(chart.blocks):
        B = np.zeros((chart.dim, d))
        B[start:start + d] = np.eye(d)
        out[f"block{k}"] = span(B, state.g).projector()
        start += d
    return out


def projector_fields(chart: ChartSpec, point, rank_tol: float,
                     gate_tol: float) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    st = PointState(chart, point, order=1)
    dec = algebraic_decomposition(st, rank_tol, gate_tol)
    P = {"H": dec.H.projector(), "V0": dec.V0.projector(), **block_projectors(chart, st)}
    return P, dec.ranks()


def projector_derivatives(chart: ChartSpec, point, ranks: dict, rank_tol: float,
                          gate_tol: float, h: float = FD_STEP):
    """Coordinate derivatives ``dP[name][a]`` by a five-point stencil.

    Returns ``None`` when the ranks change inside the stencil.
    """
    point = np.asarray(point, dtype=float)
    n = chart.dim
    out: dict[str, np.ndarray] = {}
    for a in range(n):
        samples = []
        for s in (2, 1, -1, -2):
            q = point.copy()
            q[a] += s * h
            P, r = projector_fields(chart, q, rank_tol, gate_tol)
            if r != ranks:
                return None
            samples.append(P)
        for name in samples[0]:
            d = (-samples[0][name] + 8 * samples[1][name] - 8 * samples[2][name] + samples[3][name]) / (12 * h)
            out.setdefault(name, np.zeros((n, n, n)))[a] = d
    return out


def covariant_projector(dP: np.ndarray, P: np.ndarray, conn: np.ndarray) -> np.ndarray:
    """(nabla_a P)^k_j = d_a P^k_j + C^k_{am} P^m_j - C^m_{aj} P^k_m."""
    M = conn.transpose(0, 2, 1)  # M[a, k, m] = C[a, m, k]
    return dP + np.einsum("akm,mj->akj", M, P) - np.einsum("km,amj->akj", P, M)


# -- configuration tensors ---------------------------------------------------------------

@dataclass(frozen=True)
class ConfigurationTensors:
    A: np.ndarray  # A[x, y, v] = <A_{h_x} h_y, v_v>
    B: np.ndarray  # B[x, v, y] = <B_{h_x} v_v, h_y>
    duality_residual: float
    commutator_residual: float


def configuration_tensors(state: PointState, H: Subspace, V: Subspace,
                          nbar_PH: np.ndarray) -> ConfigurationTensors:
    """A_X Y = P_V nabla-bar_X Y and B_X V = P_H nabla-bar_X V on H-valued and V-valued fields.

    ``nbar_PH[a]`` is the covariant derivative of the projector onto H; the
    derivative of the projector onto V is its negative, and the two tensors
    are assembled separately from each.
    """
    g, J = state.g, state.J
    PH, PV = H.projector(), V.projector()
    nbar_PV = -nbar_PH
    BH, BV = H.basis, V.basis
    A = np.zeros((BH.shape[1], BH.shape[1], BV.shape[1]))
    Bt = np.zeros((BH.shape[1], BV.shape[1], BH.shape[1]))
    comm = 0.0
    Finv = state.frame_inv
    for x, hx in enumerate(BH.T):
        DH = np.einsum("a,akj->kj", hx, nbar_PH)
        DV = np.einsum("a,akj->kj", hx, nbar_PV)
        AX = PV @ DH @ PH
        BX = PH @ DV @ PV
        A[x] = BH.T @ AX.T @ g @ BV
        Bt[x] = BV.T @ BX.T @ g @ BH
        comm = max(comm, _mabs(Finv @ (AX @ J - J @ AX) @ state.frame))
    dual = _mabs(A + Bt.transpose(0, 2, 1)) if A.size else 0.0
    return ConfigurationTensors(A, Bt, dual, comm)


# -- structure diagnostics ----------------------------------------------------------------

GATE_OF = {
    "vertical_cross_check": "almost_kahler",
    "config_duality": "almost_kahler",
    "config_commutator": "almost_kahler",
    "j_invariance": "none",
    "orthogonality": "none",
    "def4.1_special": "none",
}


def _dist_parallel(nP: np.ndarray, P: np.ndarray, F: np.ndarray, Finv: np.ndarray) -> float:
    """max over frame directions e of |(I - P)(nabla_e P) P| in frame components."""
    n = P.shape[0]
    Q = np.eye(n) - P
    worst = 0.0
    for e in F.T:
        D = np.einsum("a,akj->kj", e, nP)
        worst = max(worst, _mabs(Finv @ Q @ D @ P @ F))
    return worst


def structure_diagnostics(state: PointState, dec: Decomposition,
                          dP: Optional[dict] = None, blocks: Optional[dict] = None) -> dict[str, float]:
    """Residuals of the structure identities of the vertical splitting.

    ``state`` must carry third-order jets.  ``dP`` holds coordinate
    derivatives of the projector fields; parallelism entries are skipped when
    it is ``None`` (non-regular point).
    """
    g, J, F, Finv = state.g, state.J, state.frame, state.frame_inv
    H, V, V0, V1, E1, E2 = dec.H, dec.V, dec.V0, dec.V1, dec.E1, dec.E2
    BH, BV, BV0, BE1, BE2 = H.basis, V.basis, V0.basis, E1.basis, E2.basis
    eta, eta_l, T = state.eta, state.eta_lower, state.torsion
    Rb = state.curvature_bar_jet.value
    Rb_up = state.curvature_bar_up_jet.value
    C = state.eta_commutator
    N = np.einsum("aijk,ku->aiju", state.nabla_bar_eta, g)
    dRb = state.nabla_bar(state.curvature_bar_jet, "llll").value
    scale = _mabs(state.in_frame(state.riemann_jet.value, "llll")) + 1.0
    res: dict[str, float] = {}

    res["eq4.1"] = _mabs(_ev(N, BV, F, F, F))
    # (Rbar(V1, V2) . eta)(X, Y) = G(eta_X Y) - eta_{GX} Y - eta_X (G Y)
    G = np.einsum("ijkl,ia,jb->abkl", Rb_up, BV, BV)  # G[a, b, k, l]: l-component of G d_k
    act = (np.einsum("abml,xym->abxyl", G, eta) - np.einsum("abxm,myl->abxyl", G, eta)
           - np.einsum("abym,xml->abxyl", G, eta))
    act = np.einsum("abxyl,lu,xp,yq,ur->abpqr", act, g, F, F, F)
    res["lemma4.1iii"] = _mabs(act) / scale
    res["lemma4.3i"] = _mabs(_ev(Rb, BV, BV, BV, BH)) / scale
    Cv = _ev(C, BV, BV, BH, BV).transpose(2, 3, 0, 1)  # <[eta_V2, eta_V3] X, V1> as [x, v1, v2, v3]
    res["lemma4.3ii"] = _mabs(_ev(Rb, BH, BV, BV, BV) + Cv) / scale
    res["lemma4.3iii"] = _mabs(_ev(dRb, BV, BH, BV, BV, BV)) / scale
    EVX = np.einsum("ijk,ia,jx->axk", eta, BV, BH)  # eta_{v_a} h_x
    TV = np.einsum("ijk,ia,jb->abk", T, BV, BV)
    t1 = np.einsum("bxp,pqrs,qa,rc,sd->abcdx", EVX, Rb, BV, BV, BV)
    t3 = np.einsum("pqrs,pc,qd,rx,abs->abcdx", C, BV, BV, BH, TV)
    res["eq4.3"] = _mabs(t1 - t1.transpose(1, 0, 2, 3, 4) + t3) / scale
    res["prop4.2ii"] = _mabs(_ev(dRb, BH, BV, BV, BV, BV)) / scale

    # D1 = V0, D2 its complement, assumed parallel
    D2 = complement(V0).basis
    TD2 = np.einsum("ijk,ia,jb->abk", T, D2, D2)
    res["lemma4.4i"] = _mabs(np.einsum("ijl,ia,bcj,lu,ud->abcd", eta, BV0, TD2, g, F))
    T_WX = np.einsum("ijk,iw,jx->wxk", T, BV0, D2)  # T(W, X)
    TT1 = np.einsum("wxk,kvl->vwxl", T_WX, np.einsum("kjl,jv->kvl", T, BV0))  # T_{T_W X} V
    T_XV = np.einsum("ijk,ix,jv->xvk", T, D2, BV0)  # T(X, V)
    TT2 = np.einsum("xvk,kwl->vwxl", T_XV, np.einsum("kjl,jw->kwl", T, BV0))  # T_{T_X V} W
    rhs = np.einsum("vwxl,lu,uy->vwxy", TT1 + TT2, g, D2)
    res["lemma4.4ii"] = _mabs(_ev(Rb, BV0, BV0, D2, D2) + rhs) / scale
    res["lemma4.7"] = _mabs(_ev(dRb, F, BE2, BE2, BE2, BE2)) / scale

    ric: Optional[HermitianRicci] = None
    try:
        ric = hermitian_ricci(state, E2, V0, tol=1e-6)
    except ValueError:
        pass
    if ric is not None and BV0.size and BH.size:
        S = ric.S
        lhs = np.einsum("kl,ijl->ijk", S, np.einsum("ijl,ia,jx->axl", eta, BV0, BH))
        rhs = np.einsum("ijk,ia,jx->axk", eta, S @ BV0, BH)
        res["eq4.7"] = _mabs(np.einsum("axk,ku,ub->axb", lhs + rhs, g, F))
        res["ricci_S_symmetry"] = ric.symmetry_residual
        res["ricci_S_commutes_J"] = ric.commutation_residual
    else:
        res["eq4.7"] = 0.0
        res["ricci_S_symmetry"] = 0.0
        res["ricci_S_commutes_J"] = 0.0

    res["def4.1_special"] = _mabs(_ev(eta_l, BV, BV, BV))

    if dP is not None:
        Gam, Cbar = state.christoffel, state.conn_bar
        PH, P0 = H.projector(), V0.projector()
        nbar_PH = covariant_projector(dP["H"], PH, Cbar)
        nbar_P0 = covariant_projector(dP["V0"], P0, Cbar)
        lc_PH = covariant_projector(dP["H"], PH, Gam)
        lc_P0 = covariant_projector(dP["V0"], P0, Gam)
        PV = np.eye(state.n) - PH
        worst_i = worst_ii = 0.0
        for v in BV.T:
            D = np.einsum("a,akj->kj", v, nbar_PH)
            worst_i = max(worst_i, _mabs(Finv @ PH @ (-D) @ PV @ F))  # nabla-bar_V W leaving V
            worst_i = max(worst_i, _mabs(Finv @ PV @ D @ PH @ F))  # nabla-bar_V X leaving H
        for v in BV.T:
            for w in BV.T:
                Dv = -np.einsum("a,akj->kj", v, lc_PH)
                Dw = -np.einsum("a,akj->kj", w, lc_PH)
                br = Dv @ w - Dw @ v  # H-part of [v, w] for V-valued extensions
                worst_ii = max(worst_ii, _mabs(Finv @ PH @ br))
        res["lemma4.1i"] = worst_i
        res["lemma4.1ii"] = worst_ii
        res["lemma4.2"] = _dist_parallel(nbar_P0, P0, F, Finv)
        res["thm1.1_V0_parallel"] = _dist_parallel(lc_P0, P0, F, Finv)
        Q0 = np.eye(state.n) - P0
        res["thm1.1_complement_parallel"] = _dist_parallel(-lc_P0, Q0, F, Finv)
        cfg = configuration_tensors(state, H, V, nbar_PH)
        res["config_duality"] = cfg.duality_residual
        res["config_commutator"] = cfg.commutator_residual
        for name in (blocks or {}):
            lc = covariant_projector(dP[name], blocks[name], Gam)
            res[f"factor_parallel_{name}"] = _dist_parallel(lc, blocks[name], F, Finv)
    return res


def gate_of(key: str) -> str:
    if key in GATE_OF:
        return GATE_OF[key]
    if key.startswith("factor_parallel"):
        return "product"
    return "almost_kahler+G3"


def decompose_point(chart: ChartSpec, point, rank_tol: float = DEFAULT_RANK_TOL,
                    tol: float = TOL_VERDICT, gated_tol: float = TOL_GATED) -> dict:
    """Full decomposition report at one point (JSON-ready)."""
    point = [float(x) for x in point]
    val = validate_chart(chart, point, TOL_VALIDATE)
    if not val.passed:
        raise ChartValidationError(chart.name, point, val)
    state = PointState(chart, point, order=3)
    cond = condition_residuals(state)
    gates = {
        "almost_kahler": cond["domega"] < tol and cond["eq2.1"] < tol,
        "G3": cond["G3"] < tol,
    }
    gates["almost_kahler+G3"] = gates["almost_kahler"] and gates["G3"]
    dec = algebraic_decomposition(state, rank_tol, tol)
    blocks = block_projectors(chart, state)
    dP = projector_derivatives(chart, point, dec.ranks(), rank_tol, tol) if dec.regular else None
    regular = dec.regular and dP is not None
    residuals = {**dec.residuals, **structure_diagnostics(state, dec, dP, blocks)}
    residuals = {k: float(v) for k, v in sorted(residuals.items())}
    return {
        "chart": chart.name,
        "point": point,
        "rank_tol": rank_tol,
        "ranks": dec.ranks(),
        "regular": bool(regular),
        "strict": dec.H.rank == 0,
        "special": residuals["def4.1_special"] < tol,
        "residuals": residuals,
        "gate_of": {k: gate_of(k) for k in residuals},
        "gates": gates,
        "gate_residuals": {"domega": cond["domega"], "eq2.1": cond["eq2.1"], "G3": cond["G3"]},
        "tolerances": {"verdict": tol, "gated": gated_tol, "rank": rank_tol, "fd_step": FD_STEP},
        "note": "parallelism and configuration entries use five-point differences of the "
                "pointwise projectors; they are omitted at non-regular points",
    }


def _stats(values) -> dict:
    values = list(values)
    if not values:
        return {"min": None, "max": None, "mean": None}
    return {"min": min(values), "max": max(values), "mean": math.fsum(values) / len(values)}


def decompose_chart(chart: ChartSpec, n_samples: int = 50, seed: int = 0,
                    rank_tol: float = DEFAULT_RANK_TOL, tol: float = TOL_VERDICT,
                    gated_tol: float = TOL_GATED, workers: Optional[int] = None) -> dict:
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    pts = list(sample_points(chart, n_samples, seed))
    reps = map_points(decompose_point, chart, pts, rank_tol, tol, gated_tol, workers=workers)
    regular = [r for r in reps if r["regular"]]
    rank_sets = sorted({tuple(sorted(r["ranks"].items())) for r in regular})
    keys = sorted({k for r in regular for k in r["residuals"]})
    gate_keys = reps[0]["gates"].keys()
    gates = {k: all(r["gates"][k] for r in reps) for k in gate_keys}
    gate_of_map = {k: gate_of(k) for k in keys}
    applies = {k: gate_of_map[k] == "none" or gate_of_map[k] == "product" or gates.get(gate_of_map[k], False)
               for k in keys}
    residuals = {k: _stats(r["residuals"][k] for r in regular if k in r["residuals"]) for k in keys}
    return {
        "chart": chart.name,
        "seed": seed,
        "n_samples": n_samples,
        "regular_fraction": len(regular) / len(reps),
        "ranks": [dict(rs) for rs in rank_sets],
        "ranks_constant": len(rank_sets) <= 1,
        "residuals": residuals,
        "gate_of": gate_of_map,
        "gates": gates,
        "asserted": {k: applies[k] for k in keys},
        "tolerances": {"verdict": tol, "gated": gated_tol, "rank": rank_tol, "fd_step": FD_STEP},
    }
