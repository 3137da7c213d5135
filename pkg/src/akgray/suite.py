"""The acceptance battery: eleven numbered checks over the built-in charts.

Each ``criterion_*`` function returns a :class:`CriterionResult`; ``run_suite``
evaluates all of them except determinism, which needs two separate runs and
is checked by invoking the command line twice.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import fdcheck
from .chart import sample_points
from .classify import G3_IDENTITY_IDS, hermitian_curvature_residual, map_points, point_report
from .connection import PointState
from .decompose import decompose_point, kahler_nullity, vertical_space
from .registry import BATTERY, get_chart

PERTURBED = tuple(c for c in BATTERY if c.startswith("perturbed:"))
PRODUCT_KT = "product:flat_kahler_4:kodaira_thurston"

# regression floor, frozen after the first verified run (measured minimum 0.32)
KT_G1_FLOOR = 0.3


@dataclass
class CriterionResult:
    id: int
    title: str
    passed: bool
    measured: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"criterion {self.id:2d} [{'PASS' if self.passed else 'FAIL'}] {self.title}"


def _reports(charts, n, seed, workers):
    return {c: map_points(point_report, get_chart(c), list(sample_points(get_chart(c), n, seed)),
                          workers=workers) for c in charts}


def _max(reports, key):
    return max(r.residuals[key] for r in reports)


def criterion_1(seed: int = 7, n: int = 100, workers=None) -> CriterionResult:
    worst = {}
    for c in BATTERY:
        chart = get_chart(c)
        pts = list(sample_points(chart, n, seed))
        vals = map_points(_hermitian_curvature_at, chart, pts, workers=workers)
        worst[c] = max(vals)
    return CriterionResult(1, "connection curvature equals R + [eta, eta] - du (< 1e-8)",
                           all(v < 1e-8 for v in worst.values()), {"max": worst})


def _hermitian_curvature_at(chart, point):
    return hermitian_curvature_residual(PointState(chart, point, order=2))


def criterion_2(reports) -> CriterionResult:
    worst = {c: {k: _max(r, k) for k in ("eq2.3", "eq2.4")} for c, r in reports.items()}
    ok = all(v < 1e-8 for d in worst.values() for v in d.values())
    return CriterionResult(2, "failure of J-invariance of R equals twice du (< 1e-8)", ok, {"max": worst})


def criterion_3(reports) -> CriterionResult:
    keys = ("nabla_g", "nablabar_g", "nablabar_J")
    worst = {c: {k: _max(r, k) for k in keys} for c, r in reports.items()}
    ok = all(v < 1e-10 for d in worst.values() for v in d.values())
    return CriterionResult(3, "metric and Hermitian connection contract (< 1e-10)", ok, {"max": worst})


def criterion_4(seed: int = 7, n: int = 50) -> CriterionResult:
    res = {c: fdcheck.check_chart(get_chart(c), n, seed) for c in BATTERY}
    return CriterionResult(4, "jets agree with finite differences (rel < 1e-5)",
                           all(r["passed"] for r in res.values()),
                           {c: r["max_rel_error"] for c, r in res.items()})


def criterion_5(reports, seed: int = 7) -> CriterionResult:
    chart = get_chart("flat_kahler_4")
    worst = {"eta": 0.0, "torsion": 0.0, "Rbar-R": 0.0}
    h_full = True
    for p in sample_points(chart, 20, seed):
        st = PointState(chart, p, order=2)
        worst["eta"] = max(worst["eta"], float(np.abs(st.eta).max()))
        worst["torsion"] = max(worst["torsion"], float(np.abs(st.torsion).max()))
        worst["Rbar-R"] = max(worst["Rbar-R"],
                              float(np.abs(st.curvature_bar_jet.value - st.riemann_jet.value).max()))
        h_full &= decompose_point(chart, p)["ranks"]["H"] == chart.dim
    r = reports["flat_kahler_4"]
    for k in ("G1", "G2", "G3") + G3_IDENTITY_IDS:
        worst[k] = _max(r, k)
    worst["lemma3.2"] = max(x.hypothesis_gap["lemma3.2"] for x in r)
    ok = h_full and all(v < 1e-10 for v in worst.values())
    return CriterionResult(5, "flat Kaehler chart is degenerate in every respect (< 1e-10)", ok,
                           {"max": worst, "H_is_full": h_full})


def criterion_6(reports) -> CriterionResult:
    r = reports["kodaira_thurston"]
    dw, e21, g1 = _max(r, "domega"), _max(r, "eq2.1"), _max(r, "G1")
    ok = dw < 1e-10 and e21 < 1e-10 and g1 > 1e-4 and g1 > KT_G1_FLOOR
    return CriterionResult(6, "Kodaira-Thurston is almost Kaehler but violates G1", ok,
                           {"domega_max": dw, "eq2.1_max": e21, "G1_max": g1, "G1_floor": KT_G1_FLOOR})


def criterion_7(reports) -> CriterionResult:
    worst = {}
    ok = True
    for c, rs in reports.items():
        m12 = max(r.residuals["G2"] - 4 * r.residuals["G1"] for r in rs)
        m23 = max(r.residuals["G3"] - 4 * r.residuals["G2"] for r in rs)
        worst[c] = {"G2-4G1": m12, "G3-4G2": m23}
        ok &= m12 <= 1e-10 and m23 <= 1e-10
    return CriterionResult(7, "G1 => G2 => G3 residual dominance with constant 4", ok, {"max": worst})


def criterion_8(reports) -> CriterionResult:
    mismatches = 0
    floors = {}
    for c, rs in reports.items():
        for r in rs:
            mismatches += (r.residuals["lambda2"] < 1e-8) != (r.residuals["G3"] < 1e-8)
    for c in PERTURBED:
        rs = reports[c]
        floors[c] = {"G3_min": min(r.residuals["G3"] for r in rs),
                     "lambda2_min": min(r.residuals["lambda2"] for r in rs)}
    ok = mismatches == 0 and all(v > 1e-4 for d in floors.values() for v in d.values())
    return CriterionResult(8, "two-form block test agrees with G3", ok,
                           {"mismatched_points": mismatches, "perturbed_minima": floors})


def criterion_9(reports) -> CriterionResult:
    gated = {}
    for c, rs in reports.items():
        pts = [r for r in rs if r.residuals["qk"] + r.residuals["G3"] < 1e-8]
        gated[c] = {"points": len(pts),
                    "max": max((max(r.residuals[k] for k in G3_IDENTITY_IDS) for r in pts), default=0.0)}
    ok = all(d["max"] < 1e-6 for d in gated.values())
    return CriterionResult(9, "G3 identities hold wherever quasi-Kaehler and G3 hold (< 1e-6)", ok,
                           {"gated": gated})


def criterion_10(seed: int = 7, n: int = 50, workers=None) -> CriterionResult:
    chart = get_chart(PRODUCT_KT)
    pts = list(sample_points(chart, n, seed))
    reps = map_points(_product_check, chart, pts, workers=workers)
    keys = reps[0].keys()
    worst = {k: max(r[k] for r in reps) for k in keys}
    ok = (worst["H_contains_factor"] < 1e-8 and worst["V_in_second_factor"] < 1e-8
          and worst["vertical_cross_check"] < 1e-8 and worst["config_duality"] < 1e-9
          and worst["factor_parallel_block0"] < 1e-8 and worst["non_regular"] == 0)
    return CriterionResult(10, "product decomposition separates the Kaehler factor", ok, {"max": worst})


def _product_check(chart, point):
    rep = decompose_point(chart, point)
    st = PointState(chart, point, order=1)
    H, _ = kahler_nullity(st)
    V, _ = vertical_space(st, H)
    PH, PV = H.projector(), V.projector()
    first = np.eye(chart.dim)[:, :chart.blocks[0]]
    return {
        "H_contains_factor": float(np.abs(first - PH @ first).max()),
        "V_in_second_factor": float(np.abs(PV @ first).max()),
        "vertical_cross_check": rep["residuals"]["vertical_cross_check"],
        "config_duality": rep["residuals"].get("config_duality", np.inf),
        "factor_parallel_block0": rep["residuals"].get("factor_parallel_block0", np.inf),
        "non_regular": 0 if rep["regular"] else 1,
    }


def run_suite(seed: int = 7, n: int = 100, workers: Optional[int] = None):
    """Evaluate every single-run criterion; returns the JSON document and the results."""
    reports = _reports(BATTERY, n, seed, workers)
    results = [
        criterion_1(seed, n, workers),
        criterion_2(reports),
        criterion_3(reports),
        criterion_4(seed, max(1, n // 2)),
        criterion_5(reports, seed),
        criterion_6(reports),
        criterion_7(reports),
        criterion_8(reports),
        criterion_9(reports),
        criterion_10(seed, max(1, n // 2), workers),
    ]
    return {"seed": seed, "n_samples": n, "charts": list(BATTERY),
            "criteria": [asdict(r) for r in results],
            "passed": all(r.passed for r in results),
            "note": "determinism is checked by comparing two separate runs"}, results
