import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from akgray.chart import Binary, Const, Pow, Unary, Var

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def tree_eval(node, x):
    """Second, independent evaluator: plain recursion over the node types."""
    kind = type(node).__name__
    if kind == "Const":
        return node.value
    if kind == "Var":
        return x[node.index]
    if kind == "Unary":
        a = tree_eval(node.arg, x)
        return {"neg": lambda v: -v, "sin": math.sin, "cos": math.cos,
                "exp": math.exp, "sqrt": math.sqrt}[node.op](a)
    if kind == "Binary":
        a, b = tree_eval(node.left, x), tree_eval(node.right, x)
        return {"add": a + b, "sub": a - b, "mul": a * b}.get(node.op, a / b if b else math.nan)
    return tree_eval(node.base, x) ** node.exponent


def expressions(dim=4, max_leaves=12, smooth_only=True):
    """Random expression trees over x0..x{dim-1}; no div/sqrt when smooth_only."""
    leaves = st.one_of(
        st.builds(Const, st.floats(0.0, 3.0, allow_nan=False).map(lambda v: round(v, 3))),
        st.builds(Var, st.integers(0, dim - 1)),
    )

    def extend(children):
        ops = [
            st.builds(Unary, st.sampled_from(["neg", "sin", "cos"]), children),
            st.builds(Binary, st.sampled_from(["add", "sub", "mul"]), children, children),
            st.builds(Pow, children, st.integers(0, 3)),
        ]
        return st.one_of(*ops)

    return st.recursive(leaves, extend, max_leaves=max_leaves)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, shown at the end of the run
CRITERION_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERION_LINES):
            terminalreporter.write_line(CRITERION_LINES[k])
