import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from akgray.chart import (ChartError, Const, EvaluationDomainError, ExpressionSyntaxError, Var,
                          chart_from_dict, chart_from_matrices, evaluate, evaluate_jet, load_chart,
                          parse_expression, pretty, sample_points, validate_chart)
from akgray.registry import BATTERY, get_chart

from conftest import expressions, tree_eval


# -- parsing ---------------------------------------------------------------------

def test_constant_parses_to_constant_node():
    assert parse_expression("1", 4) == Const(1.0)


def test_polynomial_value():
    e = parse_expression("x0*x0 + 2*x1", 4)
    assert evaluate(e, [3, 1, 0, 0]) == 11.0


def test_sin_exp_at_origin():
    e = parse_expression("sin(x2)*exp(x3)", 4)
    assert evaluate(e, [0, 0, 0, 0]) == 0.0


def test_second_evaluator_agrees_on_1000_points(rng):
    e = parse_expression("sin(x2)*exp(x3) + x0^3/(2 + cos(x1)) - sqrt(1 + x3*x3)", 4)
    for x in rng.uniform(-2, 2, size=(1000, 4)):
        a, b = evaluate(e, x), tree_eval(e, x)
        assert abs(a - b) <= 1e-14 * max(1.0, abs(b))


def test_unary_minus_binds_to_base():
    # -x0^2 is (-x0)^2 under this grammar
    assert evaluate(parse_expression("-x0^2", 4), [3, 0, 0, 0]) == 9.0
    assert evaluate(parse_expression("0 - x0^2", 4), [3, 0, 0, 0]) == -9.0


def test_precedence_and_associativity():
    assert evaluate(parse_expression("8 - 3 - 2", 4), [0] * 4) == 3.0
    assert evaluate(parse_expression("8 / 4 / 2", 4), [0] * 4) == 1.0
    assert evaluate(parse_expression("2 + 3 * x1 ^ 2", 4), [0, 2, 0, 0]) == 14.0
    assert evaluate(parse_expression("1.5e1 + .5", 4), [0] * 4) == 15.5


@pytest.mark.parametrize("text, offset", [
    ("x0 +", 4), ("(x0", 3), ("x0 ** 2", 4), ("2 $ 3", 2), ("sin x0", 4), ("x0^-1", 3),
])
def test_syntax_errors_carry_offset(text, offset):
    with pytest.raises(ExpressionSyntaxError) as ei:
        parse_expression(text, 4)
    assert ei.value.offset == offset


def test_unknown_identifier():
    with pytest.raises(ExpressionSyntaxError, match="unknown identifier 'tan'"):
        parse_expression("tan(x0)", 4)


def test_variable_out_of_range():
    with pytest.raises(ExpressionSyntaxError, match="out of range") as ei:
        parse_expression("1 + x4", 4)
    assert ei.value.offset == 4


@given(expressions())
def test_pretty_roundtrip_is_identity(tree):
    assert parse_expression(pretty(tree), 4) == tree


# -- jets ------------------------------------------------------------------------

def test_constant_jet():
    j = evaluate_jet(Const(5.0), [0.1, 0.2, 0.3, 0.4])
    assert j.value == 5.0
    assert not j.d1.any() and not j.d2.any() and not j.d3.any()


def test_sin_jet_at_zero():
    j = evaluate_jet(parse_expression("sin(x0)", 4), [0, 0, 0, 0])
    assert j.value == 0.0
    assert np.array_equal(j.d1, [1, 0, 0, 0])
    assert not j.d2.any()
    assert j.d3[0, 0, 0] == -1.0
    assert np.count_nonzero(j.d3) == 1


def test_jet_of_known_polynomial():
    # f = x0^2 x1 + 3 x2 x3^3
    j = evaluate_jet(parse_expression("x0^2*x1 + 3*x2*x3^3", 4), [1.0, 2.0, -1.0, 0.5])
    assert j.value == pytest.approx(2.0 - 3 * 0.125)
    assert np.allclose(j.d1, [4.0, 1.0, 3 * 0.125, 3 * -1.0 * 3 * 0.25])
    assert j.d2[0, 0] == pytest.approx(4.0) and j.d2[0, 1] == pytest.approx(2.0)
    assert j.d3[0, 0, 1] == pytest.approx(2.0)
    assert j.d3[3, 3, 3] == pytest.approx(3 * -1.0 * 6)
    assert j.d3[2, 3, 3] == pytest.approx(3 * 6 * 0.5)


def _fd_check(expr, x, dim):
    """Central differences at steps 1e-4/1e-3/1e-2 for orders 1/2/3."""
    f = lambda p: tree_eval(expr, p)
    j = evaluate_jet(expr, x)
    E = np.eye(dim)
    h1, h2, h3 = 1e-4, 1e-3, 1e-2
    for a in range(dim):
        fd1 = (f(x + h1 * E[a]) - f(x - h1 * E[a])) / (2 * h1)
        assert abs(fd1 - j.d1[a]) < 1e-5 * max(1.0, abs(fd1))
        for b in range(dim):
            fd2 = (f(x + h2 * (E[a] + E[b])) - f(x + h2 * (E[a] - E[b]))
                   - f(x - h2 * (E[a] - E[b])) + f(x - h2 * (E[a] + E[b]))) / (4 * h2 * h2)
            assert abs(fd2 - j.d2[a, b]) < 1e-5 * max(1.0, abs(fd2))
    for a in range(dim):
        # pure third derivative along a coordinate
        fd3 = (f(x + 2 * h3 * E[a]) - 2 * f(x + h3 * E[a]) + 2 * f(x - h3 * E[a])
               - f(x - 2 * h3 * E[a])) / (2 * h3 ** 3)
        assert abs(fd3 - j.d3[a, a, a]) < 1e-5 * max(1.0, abs(fd3)) * 30  # O(h^2) truncation


def test_random_polynomial_matches_finite_differences(rng):
    # cubic polynomials have constant third derivatives, so the stencils are exact up to rounding
    for _ in range(20):
        c = rng.uniform(-1, 1, size=6)
        text = (f"{abs(c[0]):.6f}*x0^3 + {abs(c[1]):.6f}*x0*x1*x2 + {abs(c[2]):.6f}*x3^2*x1"
                f" + {abs(c[3]):.6f}*x2 + {abs(c[4]):.6f}*x1^2 + {abs(c[5]):.6f}")
        e = parse_expression(text, 4)
        _fd_check(e, rng.uniform(-1, 1, size=4), 4)


@given(expressions(max_leaves=8), st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_jet_derivatives_are_bitwise_symmetric(tree, x):
    j = evaluate_jet(tree, x)
    assert np.array_equal(j.d2, j.d2.T)
    for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0), (2, 0, 1)]:
        assert np.array_equal(j.d3, j.d3.transpose(perm))


@given(expressions(max_leaves=8), st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_jet_value_matches_plain_evaluation(tree, x):
    v = tree_eval(tree, x)
    j = evaluate_jet(tree, x)
    assert j.value == pytest.approx(v, rel=1e-12, abs=1e-12)


def test_domain_errors_name_the_subexpression():
    with pytest.raises(EvaluationDomainError) as ei:
        evaluate_jet(parse_expression("1 + 1/(x0 - x1)", 4), [1, 1, 0, 0])
    assert "x0" in str(ei.value) and "division by zero" in str(ei.value)
    with pytest.raises(EvaluationDomainError, match="sqrt"):
        evaluate(parse_expression("sqrt(x0 - 2)", 4), [1, 0, 0, 0])
    with pytest.raises(EvaluationDomainError, match="sqrt"):
        evaluate_jet(parse_expression("sqrt(x0)", 4), [0, 0, 0, 0])


# -- charts ----------------------------------------------------------------------

def test_flat_chart_validates_with_zero_residuals():
    chart = get_chart("flat_kahler_4")
    r = validate_chart(chart, [0.3, -0.2, 0.1, 0.0])
    assert r.passed
    assert r.residual_J_square == 0.0 and r.residual_compat == 0.0 and r.residual_g_spd == 1.0


def test_identity_J_fails_with_residual_two():
    ident = [["1" if i == j else "0" for j in range(4)] for i in range(4)]
    chart = chart_from_matrices("idJ", ident, ident, [(-1, 1)] * 4)
    r = validate_chart(chart, [0, 0, 0, 0])
    assert r.residual_J_square == 2.0
    assert not r.passed


@pytest.mark.parametrize("name", BATTERY)
def test_registry_charts_validate_at_100_points(name):
    chart = get_chart(name)
    for p in sample_points(chart, 100, 7):
        r = validate_chart(chart, p)
        assert r.passed, (name, p, r.to_dict())
        if name == "kodaira_thurston":
            assert r.residual_J_square < 1e-12 and r.residual_compat < 1e-12


def test_validation_residuals_nonnegative():
    chart = get_chart("sphere_block")
    for p in sample_points(chart, 10, 0):
        d = validate_chart(chart, p).to_dict()
        assert d["residual_J_square"] >= 0 and d["residual_compat"] >= 0


def test_chart_document_roundtrip(tmp_path):
    chart = get_chart("kodaira_thurston")
    doc = chart.to_dict()
    path = tmp_path / "kt.json"
    path.write_text(json.dumps(doc))
    again = load_chart(path)
    assert again.g == chart.g and again.J == chart.J and again.domain == chart.domain
    for p in sample_points(chart, 5, 1):
        g1, J1 = chart.values(p)
        g2, J2 = again.values(p)
        assert np.array_equal(g1, g2) and np.array_equal(J1, J2)


def test_chart_document_symmetric_completion():
    doc = {"name": "c", "dim": 4, "domain": [[-1, 1]] * 4,
           "g": [{"i": i, "j": i, "expr": "1"} for i in range(4)] + [{"i": 0, "j": 1, "expr": "x2/10"}],
           "J": [{"i": 1, "j": 0, "expr": "1"}, {"i": 0, "j": 1, "expr": "-1"},
                 {"i": 3, "j": 2, "expr": "1"}, {"i": 2, "j": 3, "expr": "-1"}]}
    chart = chart_from_dict(doc)
    g, _ = chart.values([0, 0, 0.5, 0])
    assert g[1, 0] == g[0, 1] == 0.05


@pytest.mark.parametrize("doc, msg", [
    ({"name": "c", "dim": 3, "domain": [[0, 1]] * 3, "g": [], "J": []}, "even"),
    ({"name": "c", "dim": 4, "domain": [[0, 1]] * 4, "g": [{"i": 5, "j": 0, "expr": "1"}], "J": []},
     "out of range"),
    ({"name": "c", "dim": 4, "g": [], "J": []}, "malformed"),
    ({"name": "c", "dim": 4, "domain": [[1, 0]] * 4, "g": [], "J": []}, "interval"),
])
def test_malformed_chart_documents(doc, msg):
    with pytest.raises(ChartError, match=msg):
        chart_from_dict(doc)


def test_chart_file_syntax_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ChartError):
        load_chart(p)


def test_sampling_is_seeded_and_inside_the_box():
    chart = get_chart("kodaira_thurston")
    a, b = sample_points(chart, 50, 3), sample_points(chart, 50, 3)
    assert np.array_equal(a, b)
    lo = np.array([iv[0] for iv in chart.domain])
    hi = np.array([iv[1] for iv in chart.domain])
    assert ((a >= lo) & (a <= hi)).all()
    with pytest.raises(ValueError):
        sample_points(chart, 0, 3)
