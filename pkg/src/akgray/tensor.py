"""Dense pointwise tensor algebra, metric subspaces and two-form splitting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

DEFAULT_RANK_TOL = 1e-8


class VarianceError(ValueError):
    pass


@dataclass(frozen=True)
class DenseTensor:
    """Components in row-major order plus one variance flag ('u'/'l') per slot."""

    components: np.ndarray
    variance: tuple[str, ...]

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=float)
        object.__setattr__(self, "components", comp)
        object.__setattr__(self, "variance", tuple(self.variance))
        if comp.ndim != len(self.variance):
            raise VarianceError("one variance flag per slot required")
        if comp.ndim > 6:
            raise VarianceError("rank above 6 is not supported")
        if comp.ndim and len(set(comp.shape)) != 1:
            raise VarianceError("all slots must share the tangent dimension")
        if any(v not in ("u", "l") for v in self.variance):
            raise VarianceError("variance flags must be 'u' or 'l'")

    @property
    def rank(self) -> int:
        return self.components.ndim

    @property
    def dim(self) -> int:
        return self.components.shape[0] if self.rank else 0


def contract(t: DenseTensor, slot_a: int, slot_b: int,
             metric: Optional[DenseTensor] = None) -> DenseTensor:
    """Contract two slots, pairing through ``g`` or ``g^-1`` when variances agree."""
    r = t.rank
    if slot_a == slot_b or not (0 <= slot_a < r and 0 <= slot_b < r):
        raise VarianceError(f"invalid slots ({slot_a}, {slot_b}) for rank {r}")
    va, vb = t.variance[slot_a], t.variance[slot_b]
    comp = t.components
    if va == vb:
        if metric is None:
            raise VarianceError("contracting two slots of equal variance needs a metric")
        g = metric.components
        pair = np.linalg.inv(g) if va == "l" else g
        comp = np.tensordot(comp, pair, axes=([slot_a], [0]))
        # the paired slot reappears as the last axis; trace it against slot_b
        b = slot_b - (1 if slot_b > slot_a else 0)
        out = np.trace(comp, axis1=b, axis2=comp.ndim - 1)
    else:
        out = np.trace(comp, axis1=slot_a, axis2=slot_b)
    keep = tuple(v for i, v in enumerate(t.variance) if i not in (slot_a, slot_b))
    return DenseTensor(np.asarray(out), keep)


# -- subspaces -----------------------------------------------------------------

def _chol(metric: Optional[np.ndarray], n: int) -> np.ndarray:
    if metric is None:
        return np.eye(n)
    return np.linalg.cholesky(np.asarray(metric, dtype=float))


@dataclass(frozen=True)
class Subspace:
    """A g-orthonormal basis (columns, coordinate components) of a subspace."""

    basis: np.ndarray
    metric: np.ndarray
    tol: float = DEFAULT_RANK_TOL
    spectrum: tuple[float, ...] = field(default=(), compare=False)

    @property
    def dim_ambient(self) -> int:
        return self.metric.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        """g-orthogonal projector as a (1,1) tensor, ``P @ v`` projects ``v``."""
        return self.basis @ self.basis.T @ self.metric

    def orthonormality_residual(self) -> float:
        if self.rank == 0:
            return 0.0
        gram = self.basis.T @ self.metric @ self.basis
        return float(np.abs(gram - np.eye(self.rank)).max())

    def contains(self, v: np.ndarray) -> float:
        """Norm of the component of ``v`` orthogonal to this subspace."""
        r = v - self.projector() @ v
        return float(np.sqrt(max(r @ self.metric @ r, 0.0)))


def _from_orthonormal(y: np.ndarray, L: np.ndarray, metric: np.ndarray, tol: float,
                      spectrum=()) -> Subspace:
    basis = np.linalg.solve(L.T, y) if y.size else np.zeros((L.shape[0], 0))
    return Subspace(basis, metric, tol, tuple(float(s) for s in spectrum))


def kernel(linear_map: np.ndarray, tol_rel: float = DEFAULT_RANK_TOL,
           metric: Optional[np.ndarray] = None, scale: Optional[float] = None) -> Subspace:
    """Kernel of ``linear_map`` (shape m x n, acting on tangent vectors).

    Singular values at or below ``tol_rel * scale`` count as zero (``scale``
    defaults to sigma_max); with ``metric`` given the SVD is taken in
    g-orthonormal coordinates.
    """
    if not 0.0 < tol_rel < 1.0:
        raise ValueError("tol_rel must lie in (0, 1)")
    M = np.asarray(linear_map, dtype=float)
    n = M.shape[1]
    g = np.eye(n) if metric is None else np.asarray(metric, dtype=float)
    L = _chol(g, n)
    A = np.linalg.solve(L, M.T).T  # M L^{-T}
    _, s, wt = np.linalg.svd(A)
    ref = (s[0] if s.size else 0.0) if scale is None else scale
    keep = np.ones(n, dtype=bool)
    if ref > 0:
        keep[: s.size] = s <= tol_rel * ref
    return _from_orthonormal(wt[keep].T, L, g, tol_rel, s)


def span(vectors: np.ndarray, metric: Optional[np.ndarray] = None,
         tol_rel: float = DEFAULT_RANK_TOL, scale: Optional[float] = None) -> Subspace:
    """Span of the columns of ``vectors``.

    Directions with singular value below ``tol_rel * scale`` are dropped;
    ``scale`` defaults to the largest singular value of ``vectors``.
    """
    V = np.asarray(vectors, dtype=float)
    n = V.shape[0]
    g = np.eye(n) if metric is None else np.asarray(metric, dtype=float)
    L = _chol(g, n)
    if V.size == 0:
        return _from_orthonormal(np.zeros((n, 0)), L, g, tol_rel)
    Y = L.T @ V
    u, s, _ = np.linalg.svd(Y, full_matrices=False)
    ref = (s[0] if s.size else 0.0) if scale is None else scale
    keep = s > tol_rel * ref if ref > 0 else np.zeros(s.size, dtype=bool)
    return _from_orthonormal(u[:, keep], L, g, tol_rel, s)


def complement(s: Subspace, metric: Optional[np.ndarray] = None) -> Subspace:
    """g-orthogonal complement of ``s`` in the full tangent space."""
    g = s.metric if metric is None else np.asarray(metric, dtype=float)
    n = g.shape[0]
    L = _chol(g, n)
    if s.rank == 0:
        return _from_orthonormal(np.eye(n), L, g, s.tol)
    Y = L.T @ s.basis
    u, _, _ = np.linalg.svd(Y, full_matrices=True)
    return _from_orthonormal(u[:, s.rank:], L, g, s.tol)


def relative_complement(inner: Subspace, outer: Subspace) -> Subspace:
    """Complement of ``inner`` inside ``outer`` (``inner`` assumed contained)."""
    P_in = inner.projector()
    W = outer.basis - P_in @ outer.basis
    k = outer.rank - inner.rank
    g = outer.metric
    L = _chol(g, g.shape[0])
    if k <= 0:
        return _from_orthonormal(np.zeros((g.shape[0], 0)), L, g, outer.tol)
    u, _, _ = np.linalg.svd(L.T @ W, full_matrices=False)
    return _from_orthonormal(u[:, :k], L, g, outer.tol)


def intersect_residual(a: Subspace, b: Subspace) -> float:
    """Largest distance from a unit vector of ``a`` to ``b`` (0 iff a is inside b)."""
    if a.rank == 0:
        return 0.0
    R = a.basis - b.projector() @ a.basis
    return float(np.sqrt(max(np.linalg.eigvalsh(R.T @ a.metric @ R).max(), 0.0)))


def j_invariance_residual(s: Subspace, J: np.ndarray) -> float:
    P = s.projector()
    return float(np.abs((np.eye(P.shape[0]) - P) @ J @ P).max())


# -- frames ---------------------------------------------------------------------

def adapted_frame(g: np.ndarray, J: np.ndarray) -> np.ndarray:
    """g-orthonormal frame (columns) with ``J e_{2k} = e_{2k+1}``.

    Candidates are coordinate directions, picked greedily by remaining norm.
    """
    n = g.shape[0]
    cols: list[np.ndarray] = []
    for _ in range(n // 2):
        best, best_norm = None, -1.0
        for c in np.eye(n):
            r = c.copy()
            for e in cols:
                r = r - (e @ g @ r) * e
            nr = float(np.sqrt(max(r @ g @ r, 0.0)))
            if nr > best_norm + 1e-12:
                best, best_norm = r, nr
        e = best / best_norm
        je = J @ e
        # J is g-orthogonal and skew, so je is already unit and orthogonal to e;
        # re-orthogonalize against the frame to suppress rounding drift
        for f in cols:
            je = je - (f @ g @ je) * f
        je = je - (e @ g @ je) * e
        je = je / np.sqrt(je @ g @ je)
        cols += [e, je]
    return np.column_stack(cols)


def to_frame(arr: np.ndarray, variance: Sequence[str], frame: np.ndarray,
             frame_inv: Optional[np.ndarray] = None) -> np.ndarray:
    """Components of a tensor in the basis given by the columns of ``frame``."""
    if frame_inv is None:
        frame_inv = np.linalg.inv(frame)
    out = arr
    for axis, v in enumerate(variance):
        M = frame if v == "l" else frame_inv.T
        out = np.moveaxis(np.tensordot(out, M, axes=([axis], [0])), -1, axis)
    return out


# -- two-forms -------------------------------------------------------------------

@dataclass(frozen=True)
class TwoFormSplit:
    invariant_part: np.ndarray
    anti_part: np.ndarray


def j_action(alpha: np.ndarray, J: np.ndarray) -> np.ndarray:
    """(J alpha)(X, Y) = alpha(JX, JY) in components."""
    return J.T @ alpha @ J


def split_two_form(alpha: np.ndarray, J: np.ndarray, tol: float = 1e-12) -> TwoFormSplit:
    alpha = np.asarray(alpha, dtype=float)
    scale = max(1.0, float(np.abs(alpha).max()))
    if np.abs(alpha + alpha.T).max() > tol * scale:
        raise ValueError("two-form must be antisymmetric")
    ja = j_action(alpha, J)
    return TwoFormSplit(0.5 * (alpha + ja), 0.5 * (alpha - ja))


def two_form_basis(n: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(n) for b in range(a + 1, n)]


def lambda2_j_operator(J: np.ndarray) -> np.ndarray:
    """Matrix of alpha -> J alpha on the basis e^a ^ e^b (a < b) of an orthonormal frame."""
    n = J.shape[0]
    pairs = two_form_basis(n)
    M = np.zeros((len(pairs), len(pairs)))
    for col, (a, b) in enumerate(pairs):
        alpha = np.zeros((n, n))
        alpha[a, b], alpha[b, a] = 1.0, -1.0
        ja = j_action(alpha, J)
        for row, (c, d) in enumerate(pairs):
            M[row, col] = ja[c, d]
    return M
