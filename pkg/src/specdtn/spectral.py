"""Spectral grids, differentiation matrices, and interpolation operators.

This module builds the one- and two-dimensional collocation primitives the
multidomain solver is made of:

* Chebyshev extreme points (endpoints included) carry the local ``p x p``
  tensor-product grids on which the differential operator is collocated.
* Gauss-Legendre points carry the boundary skeleton through which
  neighbouring boxes talk to each other.
* Every interpolation operator is formed in barycentric Lagrange form,
  which stays well conditioned at the high orders (p ~ 20-40) this kind of
  solver is meant to run at.

Layout conventions, frozen here and relied on by every other module:

* 2D tensor grids are ordered with the x1 index fastest: node
  ``k = i1 + p*i2`` sits at ``(x[i1], y[i2])``.
* Edge data travels side by side in the order south, east, north, west,
  each side ascending in its running coordinate.
* The Chebyshev exterior index list assigns each grid corner to exactly one
  side: SW->south, SE->east, NE->north, NW->west.

All matrices are plain float64 ``numpy.ndarray`` objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

__all__ = [
    "Interval",
    "ChebyshevGrid1D",
    "GaussGrid1D",
    "LeafStencil",
    "chebyshev_nodes",
    "gauss_nodes",
    "diff_matrix_1d",
    "tensor_points",
    "tensor_diff_matrices",
    "barycentric_weights",
    "interp_matrix",
    "leaf_stencil",
    "build_boundary_lift",
    "build_flux_extractor",
    "build_edge_interpolators",
]

SOUTH, EAST, NORTH, WEST = 0, 1, 2, 3
SIDE_NAMES = ("south", "east", "north", "west")


@dataclass(frozen=True)
class Interval:
    """Coordinate interval with positive length."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"degenerate interval [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def from_reference(self, t: np.ndarray) -> np.ndarray:
        """Affine map of reference coordinates t in [-1, 1] into the interval.

        The endpoints t = -1, +1 map to lo and hi exactly (no roundoff), so
        node sets on shared box edges agree bitwise.
        """
        s = 0.5 * (np.asarray(t, dtype=float) + 1.0)
        return self.lo * (1.0 - s) + self.hi * s


@dataclass(frozen=True)
class ChebyshevGrid1D:
    p: int
    interval: Interval
    nodes: np.ndarray


@dataclass(frozen=True)
class GaussGrid1D:
    q: int
    interval: Interval
    nodes: np.ndarray


def chebyshev_reference(p: int) -> np.ndarray:
    """Chebyshev extreme points on [-1, 1], ascending.

    Uses the sine form so the set is exactly symmetric (x[k] == -x[p-1-k]
    bitwise) and the midpoint of an odd grid is exactly zero.
    """
    if p < 2:
        raise ValueError(f"Chebyshev grid needs p >= 2, got {p}")
    k = np.arange(p)
    return np.sin(0.5 * np.pi * (2 * k - (p - 1)) / (p - 1))


def gauss_reference(q: int) -> np.ndarray:
    """Gauss-Legendre points on (-1, 1), ascending."""
    if q < 1:
        raise ValueError(f"Gauss grid needs q >= 1, got {q}")
    nodes, _ = np.polynomial.legendre.leggauss(q)
    return nodes


def chebyshev_nodes(p: int, interval: Interval) -> ChebyshevGrid1D:
    """p Chebyshev extreme points mapped to the interval, ascending."""
    nodes = interval.from_reference(chebyshev_reference(p))
    return ChebyshevGrid1D(p, interval, nodes)


def gauss_nodes(q: int, interval: Interval) -> GaussGrid1D:
    """q Gauss-Legendre points mapped to the interval, strictly interior."""
    nodes = interval.from_reference(gauss_reference(q))
    return GaussGrid1D(q, interval, nodes)


def barycentric_weights(x: np.ndarray) -> np.ndarray:
    """Barycentric weights for the (distinct) nodes x, normalized to max 1.

    The pairwise differences are rescaled by 4/width before taking products
    so the weights stay in floating-point range at high order.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 1:
        return np.ones(1)
    scale = 4.0 / (x.max() - x.min())
    diff = (x[:, None] - x[None, :]) * scale
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise ValueError("interpolation nodes must be pairwise distinct")
    w = 1.0 / diff.prod(axis=1)
    return w / np.abs(w).max()


def interp_matrix(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Lagrange interpolation matrix taking values on src to values on dst.

    Row i holds the cardinal weights l_j(dst[i]); the product reproduces any
    polynomial of degree <= len(src)-1 exactly. dst may lie outside the hull
    of src (extrapolation), which the corner rule of the boundary lift uses.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    w = barycentric_weights(src)
    d = dst[:, None] - src[None, :]
    hit_row, hit_col = np.nonzero(d == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = w[None, :] / d
        mat = ratio / ratio.sum(axis=1, keepdims=True)
    # dst points that coincide with a source node get an exact cardinal row
    if hit_row.size:
        mat[hit_row] = 0.0
        mat[hit_row, hit_col] = 1.0
    return mat


def diff_matrix_1d(grid: ChebyshevGrid1D) -> np.ndarray:
    """Spectral differentiation matrix on the grid's nodes.

    Exact (in exact arithmetic) on polynomials of degree <= p-1. The
    diagonal is the negated row sum, which makes constants differentiate to
    exactly zero.
    """
    x = np.asarray(grid.nodes, dtype=float)
    w = barycentric_weights(x)
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, 1.0)
    mat = (w[None, :] / w[:, None]) / d
    np.fill_diagonal(mat, 0.0)
    np.fill_diagonal(mat, -mat.sum(axis=1))
    return mat


def _box_intervals(box) -> tuple[Interval, Interval]:
    x1lo, x1hi, x2lo, x2hi = box
    if not (x1lo < x1hi and x2lo < x2hi):
        raise ValueError(f"degenerate box {box}")
    return Interval(x1lo, x1hi), Interval(x2lo, x2hi)


def tensor_points(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Tensor grid (len(x)*len(y), 2) in the k = i1 + p*i2 ordering."""
    pts = np.empty((x.size * y.size, 2))
    pts[:, 0] = np.tile(x, y.size)
    pts[:, 1] = np.repeat(y, x.size)
    return pts


def tensor_diff_matrices(p: int, box) -> tuple[np.ndarray, np.ndarray]:
    """p^2 x p^2 differentiation matrices along x1 and x2 on the box.

    box is (x1lo, x1hi, x2lo, x2hi). The interval scaling is inherited from
    the 1D matrices built on the mapped nodes.
    """
    ix, iy = _box_intervals(box)
    dx = diff_matrix_1d(chebyshev_nodes(p, ix))
    dy = diff_matrix_1d(chebyshev_nodes(p, iy))
    eye = np.eye(p)
    return np.kron(eye, dx), np.kron(dy, eye)


@dataclass(frozen=True)
class LeafStencil:
    """Node sets and index bookkeeping for one leaf box.

    cheb2d holds the p x p tensor grid (x1-fastest ordering); gauss_edges
    holds the 4q edge nodes side by side (S, E, N, W, each ascending).
    i_ce walks the grid boundary in the same side order with each corner
    assigned to exactly one side; i_s/i_e/i_n/i_w are the full p-node sides
    (both corners included) used by the flux extractor.
    """

    p: int
    q: int
    box: tuple
    cheb_x1: np.ndarray
    cheb_x2: np.ndarray
    gauss_x1: np.ndarray
    gauss_x2: np.ndarray
    cheb2d: np.ndarray
    gauss_edges: np.ndarray
    i_ce: np.ndarray
    i_ci: np.ndarray
    i_s: np.ndarray
    i_e: np.ndarray
    i_n: np.ndarray
    i_w: np.ndarray


def _exterior_indices(p: int) -> tuple[np.ndarray, ...]:
    idx = np.arange(p * p)
    a = idx % p       # x1 index
    b = idx // p      # x2 index
    i_s = idx[b == 0]
    i_e = idx[a == p - 1]
    i_n = idx[b == p - 1]
    i_w = idx[a == 0]
    # one corner per side: SW->S, SE->E, NE->N, NW->W
    i_ce = np.concatenate([i_s[:-1], i_e[:-1], i_n[1:], i_w[1:]])
    interior = (a > 0) & (a < p - 1) & (b > 0) & (b < p - 1)
    i_ci = idx[interior]
    return i_ce, i_ci, i_s, i_e, i_n, i_w


def leaf_stencil(p: int, q: int, box) -> LeafStencil:
    """Build the Chebyshev/Gauss node sets and index lists for one box."""
    if p < 3:
        raise ValueError(f"leaf stencil needs p >= 3, got {p}")
    if q < 2:
        raise ValueError(f"leaf stencil needs q >= 2, got {q}")
    ix, iy = _box_intervals(box)
    cx = chebyshev_nodes(p, ix).nodes
    cy = chebyshev_nodes(p, iy).nodes
    gx = gauss_nodes(q, ix).nodes
    gy = gauss_nodes(q, iy).nodes
    cheb2d = tensor_points(cx, cy)
    x1lo, x1hi, x2lo, x2hi = box
    ge = np.empty((4 * q, 2))
    ge[0 * q:1 * q, 0] = gx
    ge[0 * q:1 * q, 1] = x2lo
    ge[1 * q:2 * q, 0] = x1hi
    ge[1 * q:2 * q, 1] = gy
    ge[2 * q:3 * q, 0] = gx
    ge[2 * q:3 * q, 1] = x2hi
    ge[3 * q:4 * q, 0] = x1lo
    ge[3 * q:4 * q, 1] = gy
    i_ce, i_ci, i_s, i_e, i_n, i_w = _exterior_indices(p)
    return LeafStencil(p, q, tuple(box), cx, cy, gx, gy, cheb2d, ge,
                       i_ce, i_ci, i_s, i_e, i_n, i_w)


def build_boundary_lift(p: int, q: int, box) -> np.ndarray:
    """Map Gauss edge data (4q, S/E/N/W order) to Chebyshev exterior data.

    Non-corner rows interpolate from the q Gauss nodes of the matching edge
    alone, so away from the four corner rows the matrix is 4x4 block
    diagonal. Each corner row averages the two extrapolations from the
    Gauss nodes of the edges meeting at that corner.
    """
    if p < 3 or q < 2:
        raise ValueError("boundary lift needs p >= 3 and q >= 2")
    ix, iy = _box_intervals(box)
    cx = chebyshev_nodes(p, ix).nodes
    cy = chebyshev_nodes(p, iy).nodes
    gx = gauss_nodes(q, ix).nodes
    gy = gauss_nodes(q, iy).nodes
    mx = interp_matrix(gx, cx)   # p x q, includes extrapolation to endpoints
    my = interp_matrix(gy, cy)
    m = p - 1
    lift = np.zeros((4 * m, 4 * q))
    cs, ce, cn, cw = (slice(0, q), slice(q, 2 * q),
                      slice(2 * q, 3 * q), slice(3 * q, 4 * q))
    # south rows: i1 = 0..p-2; row 0 is the SW corner
    lift[0:m, cs] = mx[:m]
    lift[0, cs] = 0.5 * mx[0]
    lift[0, cw] = 0.5 * my[0]
    # east rows: i2 = 0..p-2; row 0 is the SE corner
    lift[m:2 * m, ce] = my[:m]
    lift[m, ce] = 0.5 * my[0]
    lift[m, cs] = 0.5 * mx[p - 1]
    # north rows: i1 = 1..p-1; last row is the NE corner
    lift[2 * m:3 * m, cn] = mx[1:]
    lift[3 * m - 1, cn] = 0.5 * mx[p - 1]
    lift[3 * m - 1, ce] = 0.5 * my[p - 1]
    # west rows: i2 = 1..p-1; last row is the NW corner
    lift[3 * m:4 * m, cw] = my[1:]
    lift[4 * m - 1, cw] = 0.5 * my[p - 1]
    lift[4 * m - 1, cn] = 0.5 * mx[0]
    return lift


def build_flux_extractor(stencil: LeafStencil, d1: np.ndarray,
                         d2: np.ndarray) -> np.ndarray:
    """Map a Chebyshev tabulation to boundary fluxes at the Gauss edge nodes.

    The flux is d/dx1 on the vertical (east/west) sides and d/dx2 on the
    horizontal (south/north) sides, with the same sign on opposite sides.
    Rows stack S, E, N, W; each block interpolates the p derivative values
    on the full side down to that side's q Gauss nodes.
    """
    p, q = stencil.p, stencil.q
    if d1.shape != (p * p, p * p) or d2.shape != (p * p, p * p):
        raise ValueError("differentiation matrices do not match the stencil")
    lx = interp_matrix(stencil.cheb_x1, stencil.gauss_x1)   # q x p
    ly = interp_matrix(stencil.cheb_x2, stencil.gauss_x2)
    return np.vstack([
        lx @ d2[stencil.i_s, :],
        ly @ d1[stencil.i_e, :],
        lx @ d2[stencil.i_n, :],
        ly @ d1[stencil.i_w, :],
    ])


def build_edge_interpolators(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Interpolators between one coarse edge and its two half-edges.

    Returns (p_up, p_down). p_up (2q x q) maps q coarse-edge Gauss values to
    the 2q fine values, as two stacked q x q blocks each interpolating from
    all q coarse nodes. p_down (q x 2q) maps fine to coarse as a block
    diagonal of two (q/2) x q blocks: the coarse nodes falling in each half
    are interpolated from that half's fine nodes only. Fine data is ordered
    lower half then upper half, each ascending, i.e. ascending overall.
    """
    if q < 2 or q % 2:
        raise ValueError(
            f"edge interpolators need an even q >= 2 (two q/2 blocks); got q={q}")
    g = gauss_reference(q)
    fine_lo = 0.5 * (g - 1.0)   # q Gauss nodes on [-1, 0]
    fine_hi = 0.5 * (g + 1.0)   # q Gauss nodes on [0, 1]
    p_up = np.vstack([interp_matrix(g, fine_lo), interp_matrix(g, fine_hi)])
    h = q // 2
    # q even => exactly q/2 coarse nodes in each open half interval
    p_down = block_diag(interp_matrix(fine_lo, g[:h]),
                        interp_matrix(fine_hi, g[h:]))
    return p_up, p_down
