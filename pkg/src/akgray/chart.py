"""Closed-form chart components: expression language, exact jets, validation.

Grammar (whitespace is ignored)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' uint)?
    base   := number | 'x' uint | func '(' expr ')' | '(' expr ')' | '-' base
    func   := sin | cos | exp | sqrt

Note that ``-x0^2`` parses as ``(-x0)^2`` because the unary minus binds at the
``base`` level.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .jet import MAX_ORDER, Jet


class ExpressionSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EvaluationDomainError(ArithmeticError):
    def __init__(self, message: str, subexpression: "Expression"):
        super().__init__(f"{message} in {pretty(subexpression)}")
        self.subexpression = subexpression


class ChartError(ValueError):
    """Malformed chart document or chart/point mismatch."""


# -- expression tree -----------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Unary:
    op: str  # neg, sin, cos, exp, sqrt
    arg: "Expression"


@dataclass(frozen=True)
class Binary:
    op: str  # add, sub, mul, div
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: int


Expression = Union[Const, Var, Unary, Binary, Pow]

FUNCS = ("sin", "cos", "exp", "sqrt")
_BINOPS = {"+": "add", "-": "sub", "*": "mul", "/": "div"}
_BINSYM = {v: k for k, v in _BINOPS.items()}
_NUMBER = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_UINT = re.compile(r"\d+")
_IDENT = re.compile(r"[A-Za-z_]+")


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.pos = 0

    def _skip(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expect(self, ch: str) -> None:
        if self._peek() != ch:
            found = self._peek() or "end of input"
            raise ExpressionSyntaxError(f"expected {ch!r}, found {found!r}", self.pos)
        self.pos += 1

    def _uint(self) -> int:
        self._skip()
        m = _UINT.match(self.text, self.pos)
        if not m:
            raise ExpressionSyntaxError("expected unsigned integer", self.pos)
        self.pos = m.end()
        return int(m.group())

    def parse(self) -> Expression:
        node = self.expr()
        if self._peek():
            raise ExpressionSyntaxError(f"unexpected {self._peek()!r}", self.pos)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self._peek() in ("+", "-"):
            op = _BINOPS[self.text[self.pos]]
            self.pos += 1
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.factor()
        while self._peek() in ("*", "/"):
            op = _BINOPS[self.text[self.pos]]
            self.pos += 1
            node = Binary(op, node, self.factor())
        return node

    def factor(self) -> Expression:
        node = self.base()
        if self._peek() == "^":
            self.pos += 1
            node = Pow(node, self._uint())
        return node

    def base(self) -> Expression:
        ch = self._peek()
        start = self.pos
        if not ch:
            raise ExpressionSyntaxError("unexpected end of input", self.pos)
        if ch == "-":
            self.pos += 1
            return Unary("neg", self.base())
        if ch == "(":
            self.pos += 1
            node = self.expr()
            self._expect(")")
            return node
        if ch.isdigit() or ch == ".":
            m = _NUMBER.match(self.text, self.pos)
            if not m:
                raise ExpressionSyntaxError("malformed number", self.pos)
            self.pos = m.end()
            return Const(float(m.group()))
        m = _IDENT.match(self.text, self.pos)
        if not m:
            raise ExpressionSyntaxError(f"unexpected {ch!r}", self.pos)
        name = m.group()
        if name == "x":
            self.pos = m.end()
            idx = self._uint()
            if idx >= self.dim:
                raise ExpressionSyntaxError(f"variable x{idx} out of range for dimension {self.dim}", start)
            return Var(idx)
        if name in FUNCS:
            self.pos = m.end()
            self._expect("(")
            node = self.expr()
            self._expect(")")
            return Unary(name, node)
        raise ExpressionSyntaxError(f"unknown identifier {name!r}", start)


def parse_expression(text: str, dim: int) -> Expression:
    """Parse ``text`` into an expression tree over coordinates ``x0..x{dim-1}``."""
    return _Parser(text, dim).parse()


def pretty(node: Expression) -> str:
    """Fully parenthesised text that parses back to the same tree."""
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"-({pretty(node.arg)})"
        return f"{node.op}({pretty(node.arg)})"
    if isinstance(node, Binary):
        return f"({pretty(node.left)} {_BINSYM[node.op]} {pretty(node.right)})"
    if isinstance(node, Pow):
        return f"({pretty(node.base)})^{node.exponent}"
    raise TypeError(f"not an expression node: {node!r}")


def max_variable(node: Expression, memo: dict | None = None) -> int:
    """Largest coordinate index used by ``node`` (-1 for constants); shared subtrees are visited once."""
    if memo is None:
        memo = {}
    hit = memo.get(id(node))
    if hit is not None:
        return hit[1]
    if isinstance(node, Var):
        out = node.index
    elif isinstance(node, Const):
        out = -1
    elif isinstance(node, Unary):
        out = max_variable(node.arg, memo)
    elif isinstance(node, Binary):
        out = max(max_variable(node.left, memo), max_variable(node.right, memo))
    else:
        out = max_variable(node.base, memo)
    memo[id(node)] = (node, out)
    return out


# -- evaluation ----------------------------------------------------------------

def evaluate(node: Expression, point: Sequence[float], memo: dict | None = None) -> float:
    """Plain float evaluation; ``memo`` shares results between repeated subtrees."""
    if memo is None:
        memo = {}
    hit = memo.get(id(node))
    if hit is not None:
        return hit[1]
    value = _evaluate(node, point, memo)
    memo[id(node)] = (node, value)
    return value


def _evaluate(node: Expression, point: Sequence[float], memo: dict) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return float(point[node.index])
    if isinstance(node, Unary):
        v = evaluate(node.arg, point, memo)
        if node.op == "neg":
            return -v
        if node.op == "sqrt":
            if v < 0:
                raise EvaluationDomainError("sqrt of negative value", node)
            return math.sqrt(v)
        return getattr(math, node.op)(v)
    if isinstance(node, Binary):
        a = evaluate(node.left, point, memo)
        b = evaluate(node.right, point, memo)
        if node.op == "add":
            return a + b
        if node.op == "sub":
            return a - b
        if node.op == "mul":
            return a * b
        if b == 0.0:
            raise EvaluationDomainError("division by zero", node)
        return a / b
    return evaluate(node.base, point, memo) ** node.exponent


def _pow_derivs(x: float, p: int, order: int) -> list[float]:
    out = []
    for k in range(order + 1):
        if k > p:
            out.append(0.0)
            continue
        ff = math.prod(range(p - k + 1, p + 1))
        out.append(ff * x ** (p - k))
    return out


def _unary_derivs(op: str, x: float, node: Expression, order: int) -> list[float]:
    if op == "sin":
        s, c = math.sin(x), math.cos(x)
        return [s, c, -s, -c][: order + 1]
    if op == "cos":
        s, c = math.sin(x), math.cos(x)
        return [c, -s, -c, s][: order + 1]
    if op == "exp":
        e = math.exp(x)
        return [e] * (order + 1)
    if op == "sqrt":
        if x <= 0:
            raise EvaluationDomainError("sqrt of non-positive value", node)
        r = math.sqrt(x)
        return [r, 0.5 / r, -0.25 / (r * x), 0.375 / (r * x * x)][: order + 1]
    raise ValueError(f"unknown function {op}")


# Scalar jets are plain coefficient lists [f, df, d2f, d3f] here: a chart has
# hundreds of expression nodes and wrapping each in a Jet costs more than the
# arithmetic.  The rules are the scalar cases of Jet products and compositions.

def _cadd(a: list, b: list) -> list:
    return [x + y for x, y in zip(a, b)]


def _cscale(a: list, c: float) -> list:
    return [x * c for x in a]


def _cmul(a: list, b: list) -> list:
    out = [a[0] * b[0]]
    if len(a) > 1:
        out.append(a[0] * b[1] + b[0] * a[1])
    if len(a) > 2:
        o = np.multiply.outer(a[1], b[1])
        out.append(a[0] * b[2] + b[0] * a[2] + o + o.T)
    if len(a) > 3:
        t = np.multiply.outer(a[1], b[2]) + np.multiply.outer(b[1], a[2])
        out.append(a[0] * b[3] + b[0] * a[3] + t + t.transpose(1, 0, 2) + t.transpose(1, 2, 0))
    return out


def _ccompose(a: list, d: Sequence[float]) -> list:
    """Faa di Bruno: derivatives of f(a) given f and its derivatives ``d`` at a[0]."""
    out = [d[0]]
    if len(a) > 1:
        out.append(d[1] * a[1])
    if len(a) > 2:
        out.append(d[2] * np.multiply.outer(a[1], a[1]) + d[1] * a[2])
    if len(a) > 3:
        o2 = np.multiply.outer(a[2], a[1])  # [i, j, k] = a2_ij a1_k
        mix = o2 + o2.transpose(0, 2, 1) + o2.transpose(2, 0, 1)
        out.append(d[3] * np.multiply.outer(np.multiply.outer(a[1], a[1]), a[1]) + d[2] * mix + d[1] * a[3])
    return out


def _jet(node: Expression, point: np.ndarray, order: int, memo: dict) -> list:
    key = id(node)
    hit = memo.get(key)
    if hit is not None:
        return hit[1]
    n = len(point)
    if isinstance(node, Const):
        out = [node.value] + [np.zeros((n,) * m) for m in range(1, order + 1)]
    elif isinstance(node, Var):
        out = [float(point[node.index])] + [np.zeros((n,) * m) for m in range(1, order + 1)]
        if order >= 1:
            out[1][node.index] = 1.0
    elif isinstance(node, Unary):
        a = _jet(node.arg, point, order, memo)
        if node.op == "neg":
            out = _cscale(a, -1.0)
        else:
            out = _ccompose(a, _unary_derivs(node.op, a[0], node, order))
    elif isinstance(node, Binary):
        a = _jet(node.left, point, order, memo)
        b = _jet(node.right, point, order, memo)
        if node.op == "add":
            out = _cadd(a, b)
        elif node.op == "sub":
            out = [x - y for x, y in zip(a, b)]
        elif node.op == "mul":
            if isinstance(node.left, Const):
                out = _cscale(b, node.left.value)
            elif isinstance(node.right, Const):
                out = _cscale(a, node.right.value)
            else:
                out = _cmul(a, b)
        else:
            if b[0] == 0.0:
                raise EvaluationDomainError("division by zero", node)
            if isinstance(node.right, Const):
                out = _cscale(a, 1.0 / node.right.value)
            else:
                out = _cmul(a, _ccompose(b, _reciprocal_scalar(b[0])))
    else:
        a = _jet(node.base, point, order, memo)
        out = _ccompose(a, _pow_derivs(a[0], node.exponent, order))
    # keep node alive so id() stays unique for the lifetime of memo
    memo[key] = (node, out)
    return out


def _reciprocal_scalar(x: float) -> list[float]:
    return [1.0 / x, -1.0 / x**2, 2.0 / x**3, -6.0 / x**4]


def evaluate_jet(expr: Expression, point: Sequence[float], order: int = MAX_ORDER) -> Jet:
    """Value and exact partial derivatives up to ``order`` of ``expr`` at ``point``.

    The returned higher derivative tensors are exactly symmetric.
    """
    p = np.asarray(point, dtype=float)
    return Jet(_jet(expr, p, order, {}), len(p)).mirrored()


# -- charts --------------------------------------------------------------------

ZERO = Const(0.0)
ONE = Const(1.0)


def _is_zero(node: Expression) -> bool:
    return isinstance(node, Const) and node.value == 0.0


@dataclass(frozen=True)
class ChartSpec:
    """A single coordinate chart carrying metric and almost-complex components.

    ``J[i][j]`` is the component ``J^i_j``, i.e. ``J`` acts on column vectors.
    """

    name: str
    dim: int
    g: tuple[tuple[Expression, ...], ...]
    J: tuple[tuple[Expression, ...], ...]
    domain: tuple[tuple[float, float], ...]
    source: dict = field(default_factory=dict, compare=False, repr=False)
    blocks: tuple[int, ...] = ()  # factor dimensions when built as a product

    def __post_init__(self):
        if self.dim < 4 or self.dim % 2:
            raise ChartError(f"chart dimension must be even and >= 4, got {self.dim}")
        seen: dict = {}
        for mat, label in ((self.g, "g"), (self.J, "J")):
            if len(mat) != self.dim or any(len(r) != self.dim for r in mat):
                raise ChartError(f"{label} must be {self.dim}x{self.dim}")
            for row in mat:
                for e in row:
                    if max_variable(e, seen) >= self.dim:
                        raise ChartError(f"{label} references a coordinate beyond dimension {self.dim}")
        for i in range(self.dim):
            for j in range(i):
                if self.g[i][j] is not self.g[j][i] and self.g[i][j] != self.g[j][i]:
                    raise ChartError("metric expression matrix must be symmetric")
        if len(self.domain) != self.dim:
            raise ChartError("domain needs one interval per coordinate")
        for lo, hi in self.domain:
            if not lo <= hi:
                raise ChartError(f"bad domain interval [{lo}, {hi}]")

    def jets(self, point: Sequence[float], order: int = MAX_ORDER) -> tuple[Jet, Jet]:
        """Matrix-valued jets of ``g`` and ``J`` at ``point``."""
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dim,):
            raise ChartError(f"point must have {self.dim} coordinates")
        memo: dict = {}
        n = self.dim
        zero = [0.0] + [np.zeros((n,) * m) for m in range(1, order + 1)]

        def build(mat):
            comps = [zero if _is_zero(e) else _jet(e, p, order, memo) for row in mat for e in row]
            cs = [np.stack([c[m] for c in comps]).reshape((n, n) + (n,) * m) for m in range(order + 1)]
            return Jet(cs, n).mirrored()

        return build(self.g), build(self.J)

    def values(self, point: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        p = np.asarray(point, dtype=float)
        memo: dict = {}
        g = np.array([[evaluate(e, p, memo) for e in row] for row in self.g])
        J = np.array([[evaluate(e, p, memo) for e in row] for row in self.J])
        return g, J

    def components(self):
        """Yield ``(label, i, j, expr)`` for every non-zero component."""
        for label, mat in (("g", self.g), ("J", self.J)):
            for i in range(self.dim):
                for j in range(self.dim):
                    if label == "g" and j < i:
                        continue
                    if not _is_zero(mat[i][j]):
                        yield label, i, j, mat[i][j]

    def to_dict(self) -> dict:
        def entries(mat, sym):
            out = []
            for i in range(self.dim):
                for j in range(self.dim):
                    if sym and j < i:
                        continue
                    if not _is_zero(mat[i][j]):
                        out.append({"i": i, "j": j, "expr": pretty(mat[i][j])})
            return out

        return {
            "name": self.name,
            "dim": self.dim,
            "domain": [list(iv) for iv in self.domain],
            "g": entries(self.g, True),
            "J": entries(self.J, False),
        }


def chart_from_matrices(name: str, g, J, domain, blocks: Sequence[int] = ()) -> ChartSpec:
    """Build a chart from (dim x dim) nested lists of text or Expression."""
    dim = len(g)

    def conv(e):
        if isinstance(e, str):
            return parse_expression(e, dim)
        if isinstance(e, (int, float)):
            return Const(float(e))
        return e

    gm = [[conv(e) for e in row] for row in g]
    for i in range(dim):
        for j in range(i):
            gm[i][j] = gm[j][i]
    Jm = tuple(tuple(conv(e) for e in row) for row in J)
    return ChartSpec(name, dim, tuple(tuple(r) for r in gm), Jm,
                     tuple((float(a), float(b)) for a, b in domain), blocks=tuple(blocks))


def chart_from_dict(doc: dict) -> ChartSpec:
    try:
        name = str(doc["name"])
        dim = int(doc["dim"])
        domain = [tuple(map(float, iv)) for iv in doc["domain"]]
        g = [[ZERO] * dim for _ in range(dim)]
        J = [[ZERO] * dim for _ in range(dim)]
        for mat, key, sym in ((g, "g", True), (J, "J", False)):
            for ent in doc[key]:
                i, j = int(ent["i"]), int(ent["j"])
                if not (0 <= i < dim and 0 <= j < dim):
                    raise ChartError(f"{key} entry ({i},{j}) out of range")
                e = parse_expression(str(ent["expr"]), dim)
                mat[i][j] = e
                if sym:
                    mat[j][i] = e
    except (KeyError, TypeError) as exc:
        raise ChartError(f"malformed chart document: {exc}") from exc
    return chart_from_matrices(name, g, J, domain)


def load_chart(path: Union[str, Path]) -> ChartSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ChartError(f"{path}: {exc}") from exc
    return chart_from_dict(doc)


# -- validation ----------------------------------------------------------------

@dataclass
class ValidationReport:
    residual_g_spd: float
    residual_J_square: float
    residual_compat: float
    tol: float

    @property
    def passed(self) -> bool:
        return (self.residual_g_spd > self.tol and self.residual_J_square < self.tol
                and self.residual_compat < self.tol)

    def to_dict(self) -> dict:
        return {
            "residual_g_spd": self.residual_g_spd,
            "residual_J_square": self.residual_J_square,
            "residual_compat": self.residual_compat,
            "pass": self.passed,
        }


def validate_chart(chart: ChartSpec, point: Sequence[float], tol: float = 1e-10) -> ValidationReport:
    g, J = chart.values(point)
    n = chart.dim
    spd = float(np.linalg.eigvalsh(0.5 * (g + g.T)).min())
    jsq = float(np.abs(J @ J + np.eye(n)).max())
    compat = float(np.abs(J.T @ g @ J - g).max())
    return ValidationReport(spd, jsq, compat, tol)


def sample_points(chart: ChartSpec, n_samples: int, seed: int) -> np.ndarray:
    """Seeded uniform samples from the chart's domain box."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in chart.domain])
    hi = np.array([b for _, b in chart.domain])
    return rng.uniform(lo, hi, size=(n_samples, chart.dim))
