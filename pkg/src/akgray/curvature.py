"""Curvature of the Levi-Civita and canonical Hermitian connections.

All rank-4 tensors returned here are fully lowered, ``R[x, y, z, u] =
<R(X, Y) Z, U>`` with ``R(X, Y) = -[nabla_X, nabla_Y] + nabla_[X, Y]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connection import PointState
from .tensor import Subspace, j_invariance_residual

CONVENTION = "R(X,Y) = -[D_X, D_Y] + D_[X,Y]"


@dataclass(frozen=True)
class CurvatureSet:
    R: np.ndarray
    Rbar: np.ndarray
    du: np.ndarray
    convention: str = CONVENTION


def riemann(state: PointState) -> np.ndarray:
    return state.riemann_jet.value


def curvature_bar(state: PointState) -> np.ndarray:
    return state.curvature_bar_jet.value


def d_nabla_u(state: PointState) -> np.ndarray:
    """``du[x, y, z, u] = <[d u(X, Y)] Z, U>``."""
    return state.du


def curvature_set(state: PointState) -> CurvatureSet:
    return CurvatureSet(riemann(state), curvature_bar(state), d_nabla_u(state))


def sectional_curvature(state: PointState, X, Y) -> float:
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    g = state.g
    num = np.einsum("ijku,i,j,k,u->", riemann(state), X, Y, X, Y)
    den = (X @ g @ X) * (Y @ g @ Y) - (X @ g @ Y) ** 2
    return float(num / den)


def cyclic_sum(t: np.ndarray) -> np.ndarray:
    """Cyclic sum over the first three slots."""
    return t + t.transpose(1, 2, 0, 3) + t.transpose(2, 0, 1, 3)


# -- partial Hermitian Ricci -----------------------------------------------------

class NotJInvariantError(ValueError):
    pass


@dataclass(frozen=True)
class HermitianRicci:
    subspace: Subspace
    restrict_to: Subspace
    rho: np.ndarray  # (1,1) tensor in coordinates, restricted
    S: np.ndarray
    symmetry_residual: float
    commutation_residual: float


def hermitian_ricci(state: PointState, sum_space: Subspace, restrict_to: Subspace,
                    tol: float = 1e-8) -> HermitianRicci:
    """rho = sum_k Rbar(v_k, J v_k) over an orthonormal basis of ``sum_space``.

    The result is compressed to ``restrict_to`` and factored as rho = S J.
    """
    J = state.J
    err = j_invariance_residual(sum_space, J) if sum_space.rank else 0.0
    if err > tol:
        raise NotJInvariantError(f"summation space is not J-invariant (residual {err:.3e})")
    Rup = state.curvature_bar_up_jet.value  # [i, j, k, l]
    V = sum_space.basis
    rho = np.einsum("ik,jk,ijml->lm", V, J @ V, Rup) if V.size else np.zeros_like(J)
    P = restrict_to.projector()
    rho = P @ rho @ P
    S = -rho @ J
    S = P @ S @ P
    gS = state.g @ S
    sym = float(np.abs(gS - gS.T).max())
    comm = float(np.abs(P @ (S @ J - J @ S) @ P).max())
    return HermitianRicci(sum_space, restrict_to, rho, S, sym, comm)


# -- Bianchi-type residuals ---------------------------------------------------------

def bianchi_residuals(state: PointState) -> dict[str, float]:
    """First Bianchi for R and the torsion-corrected cyclic sum for Rbar.

    Both are max-abs over the adapted orthonormal frame, unnormalized.
    """
    R = state.in_frame(riemann(state), "llll")
    Rb = state.in_frame(curvature_bar(state), "llll")
    T = state.in_frame(state.torsion, "llu")
    TT = np.einsum("xym,mzu->xyzu", T, T)  # <T_{T_XY} Z, U> in the orthonormal frame
    return {
        "bianchi1": float(np.abs(cyclic_sum(R)).max()),
        "lemma3.2": float(np.abs(cyclic_sum(Rb + TT)).max()),
    }
