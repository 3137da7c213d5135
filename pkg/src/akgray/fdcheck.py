"""Finite-difference oracle for chart jets.

A separate, vectorized tree walker evaluates every component function on a
whole batch of stencil points at once; derivatives come from tensor-product
central stencils with one Richardson step.
"""

from __future__ import annotations

from collections import Counter
from itertools import combinations_with_replacement

import numpy as np

from .chart import Binary, ChartSpec, Const, Expression, Unary, Var, sample_points

# base step per derivative order
FD_STEPS = {1: 1e-4, 2: 1e-3, 3: 1e-2}
FD_REL_TOL = 1e-5

_STENCILS = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
}


def evaluate_batch(node: Expression, X: np.ndarray, memo: dict | None = None) -> np.ndarray:
    """Evaluate ``node`` at every row of ``X`` (shape m x dim)."""
    if memo is None:
        memo = {}
    key = id(node)
    if key in memo:
        return memo[key]
    if isinstance(node, Const):
        out = np.full(X.shape[0], node.value)
    elif isinstance(node, Var):
        out = X[:, node.index]
    elif isinstance(node, Unary):
        a = evaluate_batch(node.arg, X, memo)
        out = -a if node.op == "neg" else getattr(np, node.op)(a)
    elif isinstance(node, Binary):
        a, b = evaluate_batch(node.left, X, memo), evaluate_batch(node.right, X, memo)
        out = {"add": np.add, "sub": np.subtract, "mul": np.multiply, "div": np.divide}[node.op](a, b)
    else:
        out = evaluate_batch(node.base, X, memo) ** node.exponent
    memo[key] = out
    return out


def _stencil(idx: tuple[int, ...], h: float, dim: int):
    """Offsets (rows) and weights of the product stencil for d^|idx| / dx_idx."""
    offs = [np.zeros(dim)]
    wts = [1.0]
    for var, m in sorted(Counter(idx).items()):
        new_o, new_w = [], []
        for o, w in zip(offs, wts):
            for step, c in _STENCILS[m]:
                q = o.copy()
                q[var] += step * h
                new_o.append(q)
                new_w.append(w * c / h ** m)
        offs, wts = new_o, new_w
    return np.array(offs), np.array(wts)


def fd_derivatives(chart: ChartSpec, point) -> dict[int, dict[tuple, np.ndarray]]:
    """Richardson-extrapolated derivatives of all g and J components.

    Returns ``{order: {index tuple: (2, dim, dim) array}}`` with g then J.
    """
    point = np.asarray(point, dtype=float)
    n = chart.dim
    exprs = [e for mat in (chart.g, chart.J) for row in mat for e in row]
    rows, plan = [], []
    for order in (1, 2, 3):
        for idx in combinations_with_replacement(range(n), order):
            for h in (FD_STEPS[order], FD_STEPS[order] / 2):
                o, w = _stencil(idx, h, n)
                plan.append((order, idx, h, len(rows), len(o), w))
                rows.extend(point + o)
    X = np.array(rows)
    memo: dict = {}
    with np.errstate(all="ignore"):
        vals = np.stack([evaluate_batch(e, X, memo) for e in exprs], axis=1)  # (m, 2 n^2)
    raw: dict = {}
    for order, idx, h, start, cnt, w in plan:
        raw[(order, idx, h)] = w @ vals[start:start + cnt]
    out: dict[int, dict] = {1: {}, 2: {}, 3: {}}
    for order in (1, 2, 3):
        h = FD_STEPS[order]
        for idx in combinations_with_replacement(range(n), order):
            d = (4 * raw[(order, idx, h / 2)] - raw[(order, idx, h)]) / 3
            out[order][idx] = d.reshape(2, n, n)
    return out


def jet_fd_errors(chart: ChartSpec, point) -> dict[int, float]:
    """Largest error per order, ``|jet - fd| / max(1, |fd|)``."""
    g, J = chart.jets(point, 3)
    fd = fd_derivatives(chart, point)
    worst = {}
    for order in (1, 2, 3):
        err = 0.0
        for idx, ref in fd[order].items():
            ex = np.stack([g.coeffs[order][(slice(None), slice(None)) + idx],
                           J.coeffs[order][(slice(None), slice(None)) + idx]])
            err = max(err, float((np.abs(ex - ref) / np.maximum(1.0, np.abs(ref))).max()))
        worst[order] = err
    return worst


def check_chart(chart: ChartSpec, n_samples: int = 50, seed: int = 0) -> dict:
    worst = {1: 0.0, 2: 0.0, 3: 0.0}
    for p in sample_points(chart, n_samples, seed):
        e = jet_fd_errors(chart, p)
        worst = {k: max(worst[k], e[k]) for k in worst}
    return {"chart": chart.name, "max_rel_error": {f"d{k}": v for k, v in worst.items()},
            "tolerance": FD_REL_TOL, "passed": all(v < FD_REL_TOL for v in worst.values())}
