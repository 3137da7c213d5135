import numpy as np
import pytest
from hypothesis import given

from akgray.chart import chart_from_matrices, parse_expression
from akgray.fdcheck import FD_REL_TOL, check_chart, evaluate_batch, fd_derivatives, jet_fd_errors
from akgray.registry import get_chart

from conftest import expressions, tree_eval


@given(expressions())
def test_batch_evaluator_matches_tree_walker(e):
    X = np.random.default_rng(0).uniform(-1, 1, size=(5, 4))
    with np.errstate(all="ignore"):
        out = evaluate_batch(e, X)
    for row, v in zip(X, out):
        ref = tree_eval(e, row)
        assert np.isclose(v, ref, rtol=1e-12, atol=1e-12) or (np.isnan(ref) and np.isnan(v))


def _poly_chart():
    g = [["1 + x0^2", "0", "0", "0"], ["0", "1 + x0^2", "0", "0"],
         ["0", "0", "exp(x1)", "0"], ["0", "0", "0", "exp(x1)"]]
    J = [["0", "-1", "0", "0"], ["1", "0", "0", "0"], ["0", "0", "0", "-1"], ["0", "0", "1", "0"]]
    return chart_from_matrices("poly", g, J, [(-1, 1)] * 4)


def test_fd_derivatives_of_known_functions():
    p = np.array([0.3, -0.2, 0.1, 0.0])
    fd = fd_derivatives(_poly_chart(), p)
    # d/dx0 (1 + x0^2) = 2 x0, second 2, third 0
    assert fd[1][(0,)][0, 0, 0] == pytest.approx(2 * p[0], abs=1e-9)
    assert fd[2][(0, 0)][0, 0, 0] == pytest.approx(2.0, abs=1e-7)
    assert fd[3][(0, 0, 0)][0, 0, 0] == pytest.approx(0.0, abs=1e-6)
    e = np.exp(p[1])
    for k, idx in ((1, (1,)), (2, (1, 1)), (3, (1, 1, 1))):
        assert fd[k][idx][0, 2, 2] == pytest.approx(e, rel=1e-6)
    assert np.abs(fd[1][(2,)]).max() < 1e-10  # nothing depends on x2, only roundoff remains


def test_jet_errors_are_small_on_battery_charts():
    for name in ("kodaira_thurston", "perturbed:flat_kahler_4:0.1:42"):
        err = jet_fd_errors(get_chart(name), np.array([0.1, 0.2, -0.3, 0.4]))
        assert max(err.values()) < FD_REL_TOL


def test_fd_oracle_detects_a_wrong_jet():
    chart = _poly_chart()
    good = chart.jets
    p = np.array([0.3, -0.2, 0.1, 0.0])

    def bad(point, order):
        g, J = good(point, order)
        g.coeffs[2][0, 0, 0, 0] += 1e-3
        return g, J

    object.__setattr__(chart, "jets", bad)
    assert jet_fd_errors(chart, p)[2] > FD_REL_TOL


def test_check_chart_report():
    rep = check_chart(get_chart("flat_kahler_4"), 3, 0)
    assert rep["passed"] and set(rep["max_rel_error"]) == {"d1", "d2", "d3"}
    assert rep["max_rel_error"]["d1"] == 0.0
