"""Pointwise residuals of the almost-Hermitian conditions and curvature identities.

Every residual is a max-abs over tuples of vectors from the J-adapted
orthonormal frame at the point.  Curvature-level residuals are divided by
``max|R| + 1`` (``max|Rbar| + 1`` for the connection-curvature comparison) so
they are scale free.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chart import ChartSpec, sample_points, validate_chart
from .connection import PointState
from .curvature import bianchi_residuals, curvature_bar, riemann
from .tensor import lambda2_j_operator, two_form_basis

TOL_VERDICT = 1e-8
TOL_GATED = 1e-6
TOL_VALIDATE = 1e-10

CONDITION_IDS = ("qk", "domega", "eq2.1", "eq2.2", "eq2.3", "eq2.4", "G1", "G2", "G3", "lambda2",
                 "bianchi1", "nabla_g", "nablabar_g", "nablabar_J")
G3_IDENTITY_IDS = ("eq3.1", "lemma3.1b", "cor3.1i", "cor3.1ii", "eq3.2", "prop3.1b", "eq3.3")
GAP_IDS = ("lemma3.2",)


class ChartValidationError(ValueError):
    def __init__(self, chart: str, point, report):
        self.chart, self.point, self.report = chart, list(map(float, point)), report
        super().__init__(f"chart {chart!r} is not almost Hermitian at {self.point}: {report.to_dict()}")


def jslot(t: np.ndarray, J: np.ndarray, slot: int) -> np.ndarray:
    """Insert J into one slot of a lowered tensor: t(..., J X, ...)."""
    return np.moveaxis(np.tensordot(J, t, axes=([0], [slot])), 0, slot)


def japply(t: np.ndarray, J: np.ndarray, slots: Sequence[int]) -> np.ndarray:
    for s in slots:
        t = jslot(t, J, s)
    return t


def _mabs(a: np.ndarray) -> float:
    return float(np.abs(a).max()) if a.size else 0.0


@dataclass
class ResidualReport:
    chart: str
    point: list
    residuals: dict
    tolerances: dict
    verdicts: dict = field(default_factory=dict)
    hypothesis_gap: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"chart": self.chart, "point": self.point, "residuals": self.residuals,
                "tolerances": self.tolerances, "verdicts": self.verdicts,
                "hypothesis_gap": self.hypothesis_gap}


# -- frame-level pieces (cached on the state) ---------------------------------------

class _Frame:
    def __init__(self, state: PointState):
        self.state = state
        self.J = state.J_frame
        self.R = state.in_frame(riemann(state), "llll")
        self.Rb = state.in_frame(curvature_bar(state), "llll")
        self.du = state.in_frame(state.du, "llll")
        self.C = state.in_frame(state.eta_commutator, "llll")
        self.eta = state.in_frame(state.eta_lower, "lll")
        self.eta_up = state.in_frame(state.eta, "llu")
        self.T = state.in_frame(state.torsion, "llu")
        self.nJ = state.in_frame(state.nabla_J, "lul")
        self.scale = _mabs(self.R) + 1.0
        self.scale_bar = _mabs(self.Rb) + 1.0


def _frame(state: PointState) -> _Frame:
    f = state.__dict__.get("_classify_frame")
    if f is None:
        f = state.__dict__["_classify_frame"] = _Frame(state)
    return f


def hermitian_curvature_residual(state: PointState) -> float:
    """Coefficient curvature of the Hermitian connection against R + [eta, eta] - du."""
    f = _frame(state)
    return _mabs(f.Rb - f.R - f.C + f.du) / f.scale_bar


def gray_tensors(R: np.ndarray, J: np.ndarray) -> dict[str, np.ndarray]:
    """Defects of the three Gray identities for a lowered R in a J-adapted frame."""
    return {
        "G1": japply(R, J, (2, 3)) - R,
        "G2": R - japply(R, J, (0, 1)) - japply(R, J, (0, 2)) - japply(R, J, (0, 3)),
        "G3": japply(R, J, (0, 1, 2, 3)) - R,
    }


def gray_residuals(state: PointState) -> dict[str, float]:
    f = _frame(state)
    return {k: _mabs(v) / f.scale for k, v in gray_tensors(f.R, f.J).items()}


def curvature_operator(R: np.ndarray) -> np.ndarray:
    """Matrix of R on two-forms, basis e_a ^ e_b (a < b) of an orthonormal frame."""
    pairs = two_form_basis(R.shape[0])
    a, b = np.array(pairs).T
    return R[a, b][:, a, b]


def lambda2_offblock(R: np.ndarray, J: np.ndarray) -> float:
    """Frobenius norm of the block of R mapping Lambda^{1,1} into [[Lambda^{2,0}]]."""
    jop = lambda2_j_operator(J)
    eye = np.eye(jop.shape[0])
    P_inv, P_anti = 0.5 * (eye + jop), 0.5 * (eye - jop)
    return float(np.linalg.norm(P_anti @ curvature_operator(R) @ P_inv))


def lambda2_block_test(state: PointState) -> float:
    f = _frame(state)
    return lambda2_offblock(f.R, f.J) / f.scale


def condition_residuals(state: PointState) -> dict[str, float]:
    f = _frame(state)
    J, nJ = f.J, f.nJ
    # (nabla_{JX} J) J Y + (nabla_X J) Y, nJ[a, k, j] = (nabla_a J)^k_j
    qk = np.einsum("ax,akm,my->xyk", J, nJ, J) + nJ.transpose(0, 2, 1)
    omega = _omega_jet(state)
    dw = omega.d1  # dw[a, b, c] = d_c omega_ab
    # domega[a, b, c] = d_a w_bc + d_b w_ca + d_c w_ab
    domega = dw.transpose(2, 0, 1) + dw.transpose(1, 2, 0) + dw
    domega = state.in_frame(domega, "lll")
    R, Rb, du, C = f.R, f.Rb, f.du, f.C
    out = {
        "qk": _mabs(qk),
        "domega": _mabs(domega),
        "eq2.1": torsion_identity_residual(state),
        "eq2.2": hermitian_curvature_residual(state),
        "eq2.3": _mabs(R - japply(R, J, (2, 3)) - 2 * du) / f.scale,
        "eq2.4": _mabs(R - japply(R, J, (0, 1)) - 2 * du.transpose(2, 3, 0, 1)) / f.scale,
    }
    out.update(gray_residuals(state))
    out["lambda2"] = lambda2_block_test(state)
    out["bianchi1"] = bianchi_residuals(state)["bianchi1"] / f.scale
    out.update(metricity_residuals(state))
    return out


def torsion_identity_residual(state: PointState) -> float:
    """max |<T_X Y, Z> + <eta_Z X, Y>| over the orthonormal frame."""
    Tl = np.einsum("xyk,ku->xyu", state.torsion, state.g)
    return _mabs(state.in_frame(Tl + state.eta_lower.transpose(1, 2, 0), "lll"))


def _omega_jet(state: PointState):
    from .jet import einsum
    return einsum("ka,kb->ab", state.J_jet, state.g_jet)


def metricity_residuals(state: PointState) -> dict[str, float]:
    g, J = state.g_jet, state.J_jet
    return {
        "nabla_g": _mabs(state.nabla(g, "ll").value),
        "nablabar_g": _mabs(state.nabla_bar(g, "ll").value),
        "nablabar_J": _mabs(state.nabla_bar(J, "ul").value),
    }


def section3_suite(state: PointState) -> dict[str, float]:
    f = _frame(state)
    J, R, Rb, du, C, T = f.J, f.R, f.Rb, f.du, f.C, f.T
    N = state.in_frame(np.einsum("aijk,ku->aiju", state.nabla_bar_eta, state.g), "llll")
    etaT = np.einsum("xym,mzw->xyzw", T, f.eta)  # <eta_{T_XY} Z, W>
    out = {
        "eq3.1": _mabs(du.transpose(2, 3, 0, 1) - du),
        "lemma3.1b": _mabs(japply(du, J, (0, 1)) + du),
        "cor3.1i": _mabs(Rb - Rb.transpose(2, 3, 0, 1) - C + C.transpose(2, 3, 0, 1)),
        "cor3.1ii": _mabs(japply(Rb, J, (0, 1)) - Rb),
        "eq3.2": _mabs(japply(N, J, (0, 1)) + N),
        "prop3.1b": _mabs(etaT - etaT.transpose(2, 3, 0, 1)),
        "eq3.3": _mabs(np.einsum("xym,mijk->xyijk", T, N)),
    }
    return {k: v / f.scale for k, v in out.items()}


def qk_bianchi_gap_residual(state: PointState) -> float:
    f = _frame(state)
    return bianchi_residuals(state)["lemma3.2"] / f.scale


# -- per-point and per-chart drivers -------------------------------------------------

def _gate(res: dict, *keys) -> float:
    return sum(res[k] for k in keys)


def point_report(chart: ChartSpec, point, tol: float = TOL_VERDICT,
                 gated_tol: float = TOL_GATED) -> ResidualReport:
    val = validate_chart(chart, point, TOL_VALIDATE)
    if not val.passed:
        raise ChartValidationError(chart.name, point, val)
    state = PointState(chart, point, order=2)
    res = condition_residuals(state)
    res.update(section3_suite(state))
    gap = {
        "lemma3.2": qk_bianchi_gap_residual(state),
        "gate_qk_G3": _gate(res, "qk", "G3"),
        "gate_ak_G3": _gate(res, "domega", "G3"),
    }
    verdicts = {
        "almost_hermitian": True,
        "quasi_kahler": res["qk"] < tol,
        "almost_kahler": res["domega"] < tol,
        "G1": res["G1"] < tol,
        "G2": res["G2"] < tol,
        "G3": res["G3"] < tol,
    }
    return ResidualReport(chart.name, [float(x) for x in point], res,
                          {"verdict": tol, "gated": gated_tol, "validation": TOL_VALIDATE},
                          verdicts, gap)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("AKGRAY_WORKERS", "1")))
    except ValueError:
        return 1


def map_points(fn: Callable, chart: ChartSpec, points, *args, workers: int | None = None) -> list:
    """Apply ``fn(chart, point, *args)`` to every point, keeping input order."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(points) < 2:
        return [fn(chart, p, *args) for p in points]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, chart, p, *args) for p in points]
        return [f.result() for f in futs]


def _stats(values: Sequence[float]) -> dict[str, float]:
    return {"min": float(min(values)), "max": float(max(values)),
            "mean": math.fsum(values) / len(values)}


def aggregate(reports: Sequence[ResidualReport], tol: float = TOL_VERDICT,
              gated_tol: float = TOL_GATED) -> dict:
    ids = list(reports[0].residuals)
    residuals = {k: _stats([r.residuals[k] for r in reports]) for k in ids}
    verdicts = {k: all(r.verdicts[k] for r in reports) for k in reports[0].verdicts}

    # conclusions of the G3 identities, audited only where their hypotheses hold
    gated_pts = [r for r in reports if _gate(r.residuals, "qk", "G3") < tol]
    gated = {
        "gate": "qk + G3 < verdict tolerance",
        "points": len(gated_pts),
        "max": {k: max((r.residuals[k] for r in gated_pts), default=0.0) for k in G3_IDENTITY_IDS},
    }
    gated["holds"] = all(v < gated_tol for v in gated["max"].values())

    gap = {}
    for gate in ("gate_qk_G3", "gate_ak_G3"):
        pts = [r for r in reports if r.hypothesis_gap[gate] < tol]
        gap[gate] = {"points": len(pts),
                     "max": max((r.hypothesis_gap["lemma3.2"] for r in pts), default=0.0)}
    gap["all_points"] = _stats([r.hypothesis_gap["lemma3.2"] for r in reports])
    return {"residuals": residuals, "verdicts": verdicts, "g3_identities_gated": gated,
            "hypothesis_gap": {"lemma3.2": gap}}


def classify_chart(chart: ChartSpec, n_samples: int = 100, seed: int = 0,
                   tol: float = TOL_VERDICT, gated_tol: float = TOL_GATED,
                   workers: int | None = None) -> dict:
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    pts = sample_points(chart, n_samples, seed)
    reports = map_points(point_report, chart, list(pts), tol, gated_tol, workers=workers)
    out = {"chart": chart.name, "seed": seed, "n_samples": n_samples,
           "tolerances": {"verdict": tol, "gated": gated_tol, "validation": TOL_VALIDATE}}
    out.update(aggregate(reports, tol, gated_tol))
    return out
