"""Levi-Civita and first canonical Hermitian connection at a point.

Storage conventions used throughout the package:

* a (1,1) tensor ``A`` is a matrix with ``A[k, j] = A^k_j`` (acts on columns);
* connection-like (1,2) tensors keep the output index last:
  ``C[i, j, k] = C^k_{ij}`` with ``nabla_i d_j = C[i, j, k] d_k``;
  the same layout holds for ``eta[i, j, k]`` (direction, argument, output)
  and for the torsion;
* covariant derivatives put the differentiation direction first.
"""

from __future__ import annotations

from functools import cached_property
from typing import Sequence

import numpy as np

from . import jet as jetlib
from .chart import ChartSpec
from .jet import MAX_ORDER, Jet, JetOrderError
from .tensor import adapted_frame, to_frame

_SLOT_LETTERS = "bcdefghi"


class SingularMetricError(ValueError):
    pass


def levi_civita(g: Jet) -> Jet:
    """Christoffel symbols ``G[i, j, k] = Gamma^k_{ij}`` as a jet one order below ``g``."""
    dg = g.diff()  # dg[j, l, i] = d_i g_{jl}
    koszul = dg.transpose(2, 0, 1) + dg.transpose(0, 2, 1) - dg
    # koszul[i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
    return jetlib.einsum("ijl,lk->ijk", koszul, g.inv()) * 0.5


def covariant_derivative(field: Jet, variance: str, conn: Jet) -> Jet:
    """Covariant derivative of a tensor-field jet along the connection ``conn``.

    ``variance`` has one 'u' or 'l' per value axis of ``field``; the result has
    the differentiation direction as its first axis.
    """
    r = len(field.shape)
    if len(variance) != r:
        raise ValueError("one variance flag per slot required")
    if field.order < 1:
        raise JetOrderError("field jet has no derivatives left")
    d = field.diff().transpose(r, *range(r))
    slots = _SLOT_LETTERS[:r]
    out = d
    for p, v in enumerate(variance):
        src = slots[:p] + "z" + slots[p + 1:]
        if v == "u":
            term = jetlib.einsum(f"az{slots[p]},{src}->a{slots}", conn, field)
            out = out + term
        else:
            term = jetlib.einsum(f"a{slots[p]}z,{src}->a{slots}", conn, field)
            out = out - term
    return out


def curvature_from_connection(conn: Jet) -> Jet:
    """Curvature ``Rup[i, j, k, l]``: component l of R(d_i, d_j) d_k.

    Sign convention: R(X, Y) = -[nabla_X, nabla_Y] + nabla_[X, Y].
    """
    dC = conn.diff()  # dC[i, j, k, a] = d_a C[i, j, k]
    lin = dC.transpose(3, 0, 1, 2) - dC.transpose(0, 3, 1, 2)
    quad = jetlib.einsum("jkm,iml->ijkl", conn, conn) - jetlib.einsum("ikm,jml->ijkl", conn, conn)
    return -(lin + quad)


class PointState:
    """Lazily computed pointwise geometry of a chart.

    ``order`` is the jet order requested for ``g`` and ``J``; order 2 suffices
    for curvature and order 3 is needed for derivatives of curvature.
    """

    def __init__(self, chart: ChartSpec, point: Sequence[float], order: int = MAX_ORDER):
        self.chart = chart
        self.point = np.asarray(point, dtype=float)
        self.order = order
        self.n = chart.dim

    # -- raw jets ---------------------------------------------------------------
    @cached_property
    def _jets(self) -> tuple[Jet, Jet]:
        return self.chart.jets(self.point, self.order)

    @property
    def g_jet(self) -> Jet:
        return self._jets[0]

    @property
    def J_jet(self) -> Jet:
        return self._jets[1]

    @cached_property
    def g(self) -> np.ndarray:
        g = self.g_jet.value
        if np.linalg.cond(g) > 1e12:
            raise SingularMetricError(f"metric is numerically singular at {self.point.tolist()}")
        return g

    @cached_property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @property
    def J(self) -> np.ndarray:
        return self.J_jet.value

    # -- Levi-Civita -------------------------------------------------------------
    @cached_property
    def gamma_jet(self) -> Jet:
        self.g  # singularity check
        return levi_civita(self.g_jet)

    @property
    def christoffel(self) -> np.ndarray:
        return self.gamma_jet.value

    @cached_property
    def nabla_J_jet(self) -> Jet:
        """``nJ[a, k, j] = (nabla_a J)^k_j``."""
        G, J = self.gamma_jet, self.J_jet
        dJ = J.diff().transpose(2, 0, 1)
        return dJ + jetlib.einsum("alk,lj->akj", G, J) - jetlib.einsum("ajl,kl->akj", G, J)

    @property
    def nabla_J(self) -> np.ndarray:
        return self.nabla_J_jet.value

    # -- canonical Hermitian connection -----------------------------------------
    @cached_property
    def eta_jet(self) -> Jet:
        """``eta[i, j, k]``: component k of eta_{d_i} d_j = 1/2 (nabla_i J) J d_j."""
        return jetlib.einsum("ikl,lj->ijk", self.nabla_J_jet, self.J_jet) * 0.5

    @property
    def eta(self) -> np.ndarray:
        return self.eta_jet.value

    @cached_property
    def eta_lower(self) -> np.ndarray:
        return np.einsum("ijk,kl->ijl", self.eta, self.g)

    @cached_property
    def torsion_jet(self) -> Jet:
        e = self.eta_jet
        return e - e.transpose(1, 0, 2)

    @property
    def torsion(self) -> np.ndarray:
        return self.torsion_jet.value

    @cached_property
    def conn_bar_jet(self) -> Jet:
        return self.gamma_jet + self.eta_jet

    @property
    def conn_bar(self) -> np.ndarray:
        return self.conn_bar_jet.value

    def nabla(self, field: Jet, variance: str) -> Jet:
        return covariant_derivative(field, variance, self.gamma_jet)

    def nabla_bar(self, field: Jet, variance: str) -> Jet:
        return covariant_derivative(field, variance, self.conn_bar_jet)

    @cached_property
    def nabla_bar_eta_jet(self) -> Jet:
        """``N[a, i, j, k]`` = component k of (nabla-bar_a eta)(d_i, d_j)."""
        return self.nabla_bar(self.eta_jet, "llu")

    @property
    def nabla_bar_eta(self) -> np.ndarray:
        return self.nabla_bar_eta_jet.value

    @cached_property
    def nabla_bar_torsion(self) -> np.ndarray:
        return self.nabla_bar(self.torsion_jet, "llu").value

    # -- curvature (filled by the curvature module's routines) ------------------
    @cached_property
    def riemann_up_jet(self) -> Jet:
        return curvature_from_connection(self.gamma_jet)

    @cached_property
    def riemann_jet(self) -> Jet:
        return jetlib.einsum("ijkl,lu->ijku", self.riemann_up_jet, self.g_jet)

    @cached_property
    def curvature_bar_up_jet(self) -> Jet:
        return curvature_from_connection(self.conn_bar_jet)

    @cached_property
    def curvature_bar_jet(self) -> Jet:
        return jetlib.einsum("ijkl,lu->ijku", self.curvature_bar_up_jet, self.g_jet)

    @cached_property
    def du_up(self) -> np.ndarray:
        """``du[x, y, z, k]``: component k of [d u(X, Y)] Z for the twisted differential."""
        N = self.nabla_bar_eta
        return (N - N.transpose(1, 0, 2, 3)
                + np.einsum("xym,mzk->xyzk", self.torsion, self.eta))

    @cached_property
    def du(self) -> np.ndarray:
        return np.einsum("xyzk,ku->xyzu", self.du_up, self.g)

    @cached_property
    def eta_commutator(self) -> np.ndarray:
        """``C[x, y, z, u] = <[eta_X, eta_Y] Z, U>``."""
        e = self.eta
        up = np.einsum("yzm,xmk->xyzk", e, e) - np.einsum("xzm,ymk->xyzk", e, e)
        return np.einsum("xyzk,ku->xyzu", up, self.g)

    # -- orthonormal frame ---------------------------------------------------------
    @cached_property
    def frame(self) -> np.ndarray:
        return adapted_frame(self.g, self.J)

    @cached_property
    def frame_inv(self) -> np.ndarray:
        return np.linalg.inv(self.frame)

    def in_frame(self, arr: np.ndarray, variance: str) -> np.ndarray:
        return to_frame(arr, variance, self.frame, self.frame_inv)

    @cached_property
    def J_frame(self) -> np.ndarray:
        return self.in_frame(self.J, "ul")


def christoffel(state: PointState) -> np.ndarray:
    return state.christoffel


def eta(state: PointState) -> np.ndarray:
    return state.eta


def torsion(state: PointState) -> np.ndarray:
    return state.torsion


def covariant_derivative_bar(state: PointState, field: Jet, variance: str) -> Jet:
    return state.nabla_bar(field, variance)
