"""Canonical Hermitian connection, Gray conditions and Kaehler-nullity decompositions
on coordinate charts of almost-Hermitian manifolds."""

from .chart import ChartSpec, chart_from_dict, load_chart, parse_expression, sample_points, validate_chart
from .classify import classify_chart, condition_residuals, point_report
from .connection import PointState
from .curvature import curvature_set, hermitian_ricci, sectional_curvature
from .decompose import algebraic_decomposition, decompose_chart, decompose_point
from .registry import BATTERY, get_chart

__all__ = [
    "BATTERY", "ChartSpec", "PointState", "algebraic_decomposition", "chart_from_dict",
    "classify_chart", "condition_residuals", "curvature_set", "decompose_chart", "decompose_point",
    "get_chart", "hermitian_ricci", "load_chart", "parse_expression", "point_report",
    "sample_points", "sectional_curvature", "validate_chart",
]
__version__ = "0.1.0"
