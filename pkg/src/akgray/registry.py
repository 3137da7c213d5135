"""Built-in charts and the ``product:`` / ``perturbed:`` name grammar."""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .chart import (ONE, ZERO, Binary, ChartError, ChartSpec, Const, Expression, Unary, Var,
                    chart_from_matrices, validate_chart, sample_points)

# -- expression builders with constant folding -------------------------------------


def _c(v: float) -> Expression:
    if v < 0:
        return Unary("neg", Const(-float(v)))
    return Const(float(v))


def _const_value(e: Expression):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Unary) and e.op == "neg" and isinstance(e.arg, Const):
        return -e.arg.value
    return None


def add(a: Expression, b: Expression) -> Expression:
    va, vb = _const_value(a), _const_value(b)
    if va is not None and vb is not None:
        return _c(va + vb)
    if va == 0.0:
        return b
    if vb == 0.0:
        return a
    return Binary("add", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    vb = _const_value(b)
    if vb is not None:
        return add(a, _c(-vb))
    return add(a, neg(b)) if _const_value(a) == 0.0 else Binary("sub", a, b)


def neg(a: Expression) -> Expression:
    va = _const_value(a)
    if va is not None:
        return _c(-va)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def mul(a: Expression, b: Expression) -> Expression:
    va, vb = _const_value(a), _const_value(b)
    if va is not None and vb is not None:
        return _c(va * vb)
    if va == 0.0 or vb == 0.0:
        return ZERO
    if va == 1.0:
        return b
    if vb == 1.0:
        return a
    if va == -1.0:
        return neg(b)
    if vb == -1.0:
        return neg(a)
    return Binary("mul", a, b)


def total(terms: Sequence[Expression]) -> Expression:
    out: Expression = ZERO
    for t in terms:
        out = add(out, t)
    return out


def matmul(A, B):
    n, m, p = len(A), len(B), len(B[0])
    return [[total([mul(A[i][k], B[k][j]) for k in range(m)]) for j in range(p)] for i in range(n)]


def transpose(A):
    return [list(r) for r in zip(*A)]


# -- built-in charts ---------------------------------------------------------------------


def standard_J(n: int, sign: float = 1.0) -> list[list[Expression]]:
    J = [[ZERO] * n for _ in range(n)]
    for k in range(0, n, 2):
        J[k + 1][k] = _c(sign)
        J[k][k + 1] = _c(-sign)
    return J


def flat_kahler(n: int) -> ChartSpec:
    g = [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]
    return chart_from_matrices(f"flat_kahler_{n}", g, standard_J(n), [(-1.0, 1.0)] * n)


def kodaira_thurston() -> ChartSpec:
    # coframe dx0, dx1, dx2, dx3 - x0 dx1; J: E1->E3, E2->E4 on the dual frame
    g = [["1", "0", "0", "0"],
         ["0", "1 + x0^2", "0", "-x0"],
         ["0", "0", "1", "0"],
         ["0", "-x0", "0", "1"]]
    J = [["0", "0", "-1", "0"],
         ["0", "x0", "0", "-1"],
         ["1", "0", "0", "0"],
         ["0", "1 + x0^2", "0", "-x0"]]
    return chart_from_matrices("kodaira_thurston", g, J, [(-1.0, 1.0)] * 4)


def kahler_surfaces() -> ChartSpec:
    """Product of two conformally flat surfaces with their rotation J (curved Kaehler)."""
    f1 = "exp(sin(x0)*cos(x1)/2)"
    f2 = "exp((x2^2 + x3^2)/4)"
    g = [[f1, "0", "0", "0"], ["0", f1, "0", "0"], ["0", "0", f2, "0"], ["0", "0", "0", f2]]
    J = standard_J(4)
    return chart_from_matrices("kahler_surfaces", g, J, [(-1.0, 1.0)] * 4)


def sphere_block() -> ChartSpec:
    """Round 2-sphere block padded with flat directions; J is not compatible."""
    g = [["1", "0", "0", "0"], ["0", "sin(x0)^2", "0", "0"], ["0", "0", "1", "0"], ["0", "0", "0", "1"]]
    return chart_from_matrices("sphere_block", g, standard_J(4),
                               [(0.4, np.pi - 0.4), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)])


def _shift(e: Expression, k: int) -> Expression:
    if isinstance(e, Var):
        return Var(e.index + k)
    if isinstance(e, Const):
        return e
    if isinstance(e, Unary):
        return Unary(e.op, _shift(e.arg, k))
    if isinstance(e, Binary):
        return Binary(e.op, _shift(e.left, k), _shift(e.right, k))
    return type(e)(_shift(e.base, k), e.exponent)


def product(a: ChartSpec, b: ChartSpec, name: str | None = None) -> ChartSpec:
    """Block-diagonal Riemannian product; coordinates of ``b`` follow those of ``a``."""
    n = a.dim + b.dim
    cache: dict[int, Expression] = {}

    def sh(e):
        key = id(e)
        if key not in cache:
            cache[key] = _shift(e, a.dim)
        return cache[key]

    def block(A, B):
        M = [[ZERO] * n for _ in range(n)]
        for i in range(a.dim):
            for j in range(a.dim):
                M[i][j] = A[i][j]
        for i in range(b.dim):
            for j in range(b.dim):
                M[a.dim + i][a.dim + j] = sh(B[i][j])
        return M

    return chart_from_matrices(name or f"product:{a.name}:{b.name}", block(a.g, b.g),
                               block(a.J, b.J), list(a.domain) + list(b.domain),
                               blocks=(a.blocks or (a.dim,)) + (b.blocks or (b.dim,)))


def perturbed(base: ChartSpec, eps: float, seed: int, name: str | None = None) -> ChartSpec:
    """Seeded polynomial perturbation that stays almost Hermitian.

    ``J`` is conjugated by the unipotent gauge ``I + eps N`` with ``N = a b^T``
    and ``b^T a = 0``, so ``J^2 = -Id`` holds identically.  The perturbed metric
    is averaged over ``J`` to restore compatibility.
    """
    n = base.dim
    rng = np.random.default_rng(seed)
    xs = [Var(i) for i in range(n)]

    def affine(coefs):
        return total([_c(coefs[0])] + [mul(_c(c), x) for c, x in zip(coefs[1:], xs)])

    b = rng.normal(size=n)
    b /= np.linalg.norm(b)
    w = [affine(rng.uniform(-1, 1, size=n + 1)) for _ in range(n)]
    t = total([mul(_c(b[k]), w[k]) for k in range(n)])
    a = [sub(w[i], mul(_c(b[i]), t)) for i in range(n)]  # b . a == 0 identically

    J0 = [list(r) for r in base.J]
    c = [total([mul(_c(b[k]), J0[k][j]) for k in range(n)]) for j in range(n)]  # J0^T b
    d = [total([mul(J0[i][k], a[k]) for k in range(n)]) for i in range(n)]  # J0 a
    s = total([mul(_c(b[i]), d[i]) for i in range(n)])  # b^T J0 a
    e2 = _c(eps * eps)
    J = [[add(sub(add(J0[i][j], mul(_c(eps), sub(mul(a[i], c[j]), mul(d[i], _c(b[j]))))),
                  mul(e2, mul(s, mul(a[i], _c(b[j]))))), ZERO)
          for j in range(n)] for i in range(n)]

    G = rng.uniform(-1, 1, size=(n, n, n + 1))
    G = 0.5 * (G + G.transpose(1, 0, 2))
    quad = rng.integers(0, n, size=(n, n, 2, 2))
    qc = rng.uniform(-1, 1, size=(n, n, 2))
    gp = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            pert = total([affine(G[i][j])] + [mul(_c(qc[i, j, m]), mul(xs[quad[i, j, m, 0]], xs[quad[i, j, m, 1]]))
                                              for m in range(2)])
            gp[i][j] = gp[j][i] = add(base.g[i][j], mul(_c(eps), pert))
    gpJ = matmul(gp, J)
    JtgJ = matmul(transpose(J), gpJ)
    half = _c(0.5)
    g = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            g[i][j] = g[j][i] = mul(half, add(gp[i][j], JtgJ[i][j]))
    label = name or f"perturbed:{base.name}:{eps:g}:{seed}"
    return chart_from_matrices(label, g, J, base.domain)  # perturbation couples the factors


# -- registry --------------------------------------------------------------------------

BUILTINS: dict[str, Callable[[], ChartSpec]] = {
    "flat_kahler_4": lambda: flat_kahler(4),
    "flat_kahler_6": lambda: flat_kahler(6),
    "kodaira_thurston": kodaira_thurston,
    "kahler_surfaces": kahler_surfaces,
    "sphere_block": sphere_block,
}

# charts that are expected to fail almost-Hermitian validation
CALIBRATION_ONLY = frozenset({"sphere_block"})

# the acceptance battery
BATTERY = (
    "flat_kahler_4",
    "flat_kahler_6",
    "kodaira_thurston",
    "product:flat_kahler_4:kodaira_thurston",
    "product:kahler_surfaces:flat_kahler_4",
    "perturbed:flat_kahler_4:0.1:42",
    "perturbed:kodaira_thurston:0.1:7",
    "perturbed:flat_kahler_6:0.1:3",
)


def _split_name(name: str) -> list[str]:
    return name.split(":")


@lru_cache(maxsize=64)
def get_chart(name: str) -> ChartSpec:
    """Resolve a registry name, including ``product:a:b`` and ``perturbed:a:eps:seed``.

    Component names inside ``product:`` must be plain built-ins.
    """
    if name in BUILTINS:
        return BUILTINS[name]()
    parts = _split_name(name)
    if parts[0] == "product" and len(parts) == 3:
        return product(get_chart(parts[1]), get_chart(parts[2]), name)
    if parts[0] == "perturbed" and len(parts) == 4:
        try:
            eps, seed = float(parts[2]), int(parts[3])
        except ValueError as exc:
            raise ChartError(f"bad perturbation parameters in {name!r}") from exc
        return perturbed(get_chart(parts[1]), eps, seed, name)
    raise ChartError(f"unknown chart {name!r}")


def check_registry_entry(name: str, n_samples: int = 100, seed: int = 0, tol: float = 1e-10) -> bool:
    chart = get_chart(name)
    return all(validate_chart(chart, p, tol).passed for p in sample_points(chart, n_samples, seed))
