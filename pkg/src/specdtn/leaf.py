"""Per-leaf solution and boundary-flux operators.

For a leaf with collocation matrix A (interior rows collocated, exterior
rows replaced by the boundary lift), four dense maps are built:

    S : Gauss boundary data        -> solution on the full Chebyshev grid
    T : Gauss boundary data        -> boundary fluxes at the Gauss nodes
    F : interior body-load samples -> zero-boundary particular solution
    H : interior body-load samples -> fluxes of that particular solution

A single LU factorization of the interior block backs both solves. In
economy mode nothing is retained per leaf: T is produced for the parent
merge and the solve stage refactors the leaf from scratch each time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import get_lapack_funcs, lu_factor, lu_solve

from . import spectral
from .model import LeafMatrix, ProblemSpec, assemble_leaf_matrix

__all__ = [
    "LeafSingularError",
    "LeafGeometry",
    "LeafOperators",
    "leaf_geometry",
    "assemble_for_leaf",
    "factor_interior",
    "build_leaf_operators",
    "leaf_residual_check",
]

RCOND_FLOOR = 1e-13


class LeafSingularError(RuntimeError):
    """Interior collocation block is (numerically) singular on some leaf."""


@dataclass(frozen=True)
class LeafGeometry:
    """Shape-only operators shared by every leaf of the same size.

    Cached per (p, q, width, height): differentiation matrices and their
    second-order products, the Gauss->Chebyshev boundary lift, and the flux
    extractor are all translation invariant.
    """

    p: int
    q: int
    stencil0: spectral.LeafStencil   # stencil of the box anchored at (0, 0)
    d1: np.ndarray
    d2: np.ndarray
    products: tuple
    lift: np.ndarray
    flux: np.ndarray


_GEOMETRY_CACHE: dict = {}


def leaf_geometry(p: int, q: int, width: float, height: float) -> LeafGeometry:
    if p < q + 1:
        raise ValueError(f"leaf order must satisfy p >= q+1, got p={p}, q={q}")
    key = (p, q, width, height)
    geo = _GEOMETRY_CACHE.get(key)
    if geo is None:
        box = (0.0, width, 0.0, height)
        stencil = spectral.leaf_stencil(p, q, box)
        d1, d2 = spectral.tensor_diff_matrices(p, box)
        products = (d1 @ d1, d1 @ d2, d2 @ d2)
        lift = spectral.build_boundary_lift(p, q, box)
        flux = spectral.build_flux_extractor(stencil, d1, d2)
        geo = LeafGeometry(p, q, stencil, d1, d2, products, lift, flux)
        _GEOMETRY_CACHE[key] = geo
    return geo


def stencil_for(bounds, geo: LeafGeometry) -> spectral.LeafStencil:
    """Translate the cached origin stencil to the leaf's actual position."""
    s0 = geo.stencil0
    shift = np.array([bounds.x1lo, bounds.x2lo])
    return spectral.LeafStencil(
        s0.p, s0.q,
        (bounds.x1lo, bounds.x1hi, bounds.x2lo, bounds.x2hi),
        s0.cheb_x1 + shift[0], s0.cheb_x2 + shift[1],
        s0.gauss_x1 + shift[0], s0.gauss_x2 + shift[1],
        s0.cheb2d + shift, s0.gauss_edges + shift,
        s0.i_ce, s0.i_ci, s0.i_s, s0.i_e, s0.i_n, s0.i_w)


def assemble_for_leaf(bounds, spec: ProblemSpec, p: int, q: int):
    """(geometry, positioned stencil, collocation LeafMatrix) for one leaf."""
    geo = leaf_geometry(p, q, bounds.width, bounds.height)
    stencil = stencil_for(bounds, geo)
    lm = assemble_leaf_matrix(spec, stencil, geo.d1, geo.d2, geo.products)
    return geo, stencil, lm


def factor_interior(lm: LeafMatrix, label="leaf"):
    """LU-factor A(I_ci, I_ci) with a 1-norm condition estimate.

    Raises LeafSingularError when the estimated condition number exceeds
    1/RCOND_FLOOR, which signals an interior Dirichlet resonance or an
    unresolved operator rather than a recoverable roundoff issue.
    """
    a_ii = lm.interior
    anorm = np.linalg.norm(a_ii, 1)
    lu, piv = lu_factor(a_ii)
    gecon = get_lapack_funcs(("gecon",), (lu,))[0]
    rcond, info = gecon(lu, anorm)
    if info != 0 or not np.isfinite(rcond) or rcond < RCOND_FLOOR:
        cond = np.inf if rcond == 0 else 1.0 / max(rcond, np.finfo(float).tiny)
        raise LeafSingularError(
            f"interior collocation block of {label} is numerically singular "
            f"(condition estimate {cond:.2e})")
    return (lu, piv), rcond


@dataclass
class LeafOperators:
    """Dense leaf maps; in economy mode S, F, H are None."""

    S: np.ndarray | None
    T: np.ndarray | None
    F: np.ndarray | None
    H: np.ndarray | None
    rcond: float

    def retained_floats(self) -> int:
        return sum(m.size for m in (self.S, self.F, self.H) if m is not None)


def build_leaf_operators(leaf, spec: ProblemSpec, p: int, q: int,
                         mode: str = "stored") -> LeafOperators:
    """Build S, T, F, H for one leaf box (BoxNode or Rect-like bounds).

    mode 'stored' keeps all four maps. mode 'econ' computes T (and nothing
    else) so the parent merge can proceed; solves later redo the small
    dense factorization on the fly. Within one leaf the interior LU
    factorization is computed once and reused for both S and F.
    """
    bounds = getattr(leaf, "bounds", leaf)
    label = f"leaf {leaf.id}" if hasattr(leaf, "id") else "leaf"
    geo, stencil, lm = assemble_for_leaf(bounds, spec, p, q)
    lu_piv, rcond = factor_interior(lm, label)
    pp = p * p
    s_full = np.empty((pp, 4 * q))
    s_full[stencil.i_ce] = geo.lift
    s_full[stencil.i_ci] = lu_solve(lu_piv, -(lm.coupling @ geo.lift))
    t_full = geo.flux @ s_full
    if mode == "econ":
        return LeafOperators(S=None, T=t_full, F=None, H=None, rcond=rcond)
    if mode != "stored":
        raise ValueError(f"unknown mode {mode!r}")
    f_full = np.zeros((pp, stencil.i_ci.size))
    f_full[stencil.i_ci] = lu_solve(lu_piv, np.eye(stencil.i_ci.size))
    h_full = geo.flux @ f_full
    return LeafOperators(S=s_full, T=t_full, F=f_full, H=h_full, rcond=rcond)


@dataclass
class ResidualReport:
    """Max-norm residuals of the defining algebraic identities.

    interior_homogeneous : ||A(I_ci,:) S||        (should vanish)
    interior_particular  : ||A(I_ci,:) F - I||    (should vanish)
    exterior_particular  : ||F(I_ce,:)||          (zero boundary data)
    exterior_homogeneous : ||S(I_ce,:) - lift||   (boundary rows are the lift)
    """

    interior_homogeneous: float
    interior_particular: float
    exterior_particular: float
    exterior_homogeneous: float
    a_scale: float

    def scaled(self) -> dict:
        s = self.a_scale if self.a_scale > 0 else 1.0
        return {
            "interior_homogeneous": self.interior_homogeneous / s,
            "interior_particular": self.interior_particular / s,
            "exterior_particular": self.exterior_particular,
            "exterior_homogeneous": self.exterior_homogeneous,
        }

    def max_scaled(self) -> float:
        return max(self.scaled().values())


def leaf_residual_check(ops: LeafOperators, lm: LeafMatrix,
                        lift: np.ndarray) -> ResidualReport:
    """Verify the four identities the leaf construction promises."""
    if ops.S is None or ops.F is None:
        raise ValueError("residual check needs stored-mode leaf operators")
    a_int = lm.A[lm.i_ci]
    r1 = np.abs(a_int @ ops.S).max()
    r2 = np.abs(a_int @ ops.F - np.eye(lm.i_ci.size)).max()
    r3 = np.abs(ops.F[lm.i_ce]).max() if lm.i_ce.size else 0.0
    r4 = np.abs(ops.S[lm.i_ce] - lift).max()
    return ResidualReport(r1, r2, r3, r4, np.abs(lm.A).max())
