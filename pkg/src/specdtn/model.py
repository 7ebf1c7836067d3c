"""Coefficient fields, problem catalog, and leaf collocation assembly.

The elliptic operator acts as

    A u = -c11 u_x1x1 - 2 c12 u_x1x2 - c22 u_x2x2 + c1 u_x1 + c2 u_x2 + c u

with all six coefficients functions of position. Note the minus signs on
the second-order block: the Laplace entry (c11 = c22 = 1) realizes -Delta,
so its tabulation on u = x1^2 + x2^2 is the constant -4.

Problems come from a fixed catalog (plus a manufactured-solution generator
driven by sympy) rather than a runtime expression parser; every entry is
fully reconstructible from its name and parameter dict, which is what the
operator archive relies on.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .spectral import LeafStencil

__all__ = [
    "CoefficientField",
    "ProblemSpec",
    "LeafMatrix",
    "catalog",
    "catalog_names",
    "assemble_leaf_matrix",
    "evaluate_boundary",
]

X1, X2 = sp.symbols("x1 x2", real=True)


def _as_field_func(value):
    """Normalize a constant / sympy expression / callable to f(pts)->(m,)."""
    if callable(value) and not isinstance(value, sp.Expr):
        return value, None
    expr = sp.sympify(value, locals={"x1": X1, "x2": X2})
    lam = sp.lambdify((X1, X2), expr, "numpy")

    def func(pts, _lam=lam):
        pts = np.asarray(pts, dtype=float)
        out = _lam(pts[:, 0], pts[:, 1])
        out = np.asarray(out, dtype=float)
        if out.shape != (pts.shape[0],):
            out = np.broadcast_to(out, (pts.shape[0],)).copy()
        return out

    return func, expr


class CoefficientField:
    """The six coefficient functions of the operator, vectorized over points.

    Each of c11, c12, c22, c1, c2, c accepts an (m, 2) array and returns an
    (m,) array. Constants and sympy expressions in x1, x2 are accepted and
    wrapped; expressions are kept so the manufactured-solution generator
    can differentiate through them.
    """

    __slots__ = ("c11", "c12", "c22", "c1", "c2", "c", "exprs")

    _NAMES = ("c11", "c12", "c22", "c1", "c2", "c")

    def __init__(self, c11=1, c12=0, c22=1, c1=0, c2=0, c=0):
        values = (c11, c12, c22, c1, c2, c)
        self.exprs = {}
        for name, value in zip(self._NAMES, values):
            func, expr = _as_field_func(value)
            setattr(self, name, func)
            if expr is not None:
                self.exprs[name] = expr

    def symbolic(self) -> dict:
        """Sympy expressions per coefficient; raises if any is a raw callable."""
        missing = [n for n in self._NAMES if n not in self.exprs]
        if missing:
            raise ValueError(f"coefficients {missing} have no symbolic form")
        return dict(self.exprs)

    def check_ellipticity(self, pts, label=""):
        """Warn (never raise) if the second-order block loses definiteness.

        Helmholtz-type entries are indefinite in the zeroth-order term by
        design; only c11, c22 and the 2x2 determinant are inspected.
        """
        pts = np.asarray(pts, dtype=float)
        a, b, d = self.c11(pts), self.c12(pts), self.c22(pts)
        bad = (a <= 0) | (d <= 0) | (a * d - b * b <= 0)
        if np.any(bad):
            k = int(np.argmax(bad))
            warnings.warn(
                f"second-order coefficients are not positive definite at sampled "
                f"point {tuple(pts[k])}{' (' + label + ')' if label else ''}",
                stacklevel=2)


def _zero(pts):
    return np.zeros(len(pts))


@dataclass
class ProblemSpec:
    """A boundary value problem the solver can be built for.

    body_load and dirichlet are vectorized callables over (m, 2) point
    arrays (None means identically zero). For parabolic catalog entries the
    coefficients encode the spatial generator of du/dt = A u in the same
    sign convention as above, and ``initial`` holds u(., 0).
    """

    name: str
    coefficients: CoefficientField
    body_load: object | None = None
    dirichlet: object | None = None
    params: dict = field(default_factory=dict)
    u_exact: object | None = None
    initial: object | None = None
    catalog_key: tuple | None = None

    def load(self, pts) -> np.ndarray:
        return self.body_load(pts) if self.body_load is not None else _zero(pts)

    def boundary(self, pts) -> np.ndarray:
        return self.dirichlet(pts) if self.dirichlet is not None else _zero(pts)


@dataclass
class LeafMatrix:
    """Collocation matrix of the operator on one leaf, with its partitions."""

    A: np.ndarray
    i_ci: np.ndarray
    i_ce: np.ndarray

    @property
    def interior(self) -> np.ndarray:
        """A(I_ci, I_ci)."""
        return self.A[np.ix_(self.i_ci, self.i_ci)]

    @property
    def coupling(self) -> np.ndarray:
        """A(I_ci, I_ce)."""
        return self.A[np.ix_(self.i_ci, self.i_ce)]


def assemble_leaf_matrix(spec: ProblemSpec, stencil: LeafStencil,
                         d1: np.ndarray, d2: np.ndarray,
                         products=None) -> LeafMatrix:
    """Collocate the operator on the stencil's Chebyshev grid.

    A = -C11 D1^2 - 2 C12 D1 D2 - C22 D2^2 + C1 D1 + C2 D2 + C with the
    coefficient samples on the diagonal. The mixed term multiplies D1 after
    D2, exactly as written. ``products`` may carry precomputed
    (D1^2, D1 D2, D2^2) since they depend only on the box shape.
    """
    pts = stencil.cheb2d
    cf = spec.coefficients
    if products is None:
        products = (d1 @ d1, d1 @ d2, d2 @ d2)
    d11, d12, d22 = products
    a = -(cf.c11(pts)[:, None] * d11)
    a -= 2.0 * cf.c12(pts)[:, None] * d12
    a -= cf.c22(pts)[:, None] * d22
    a += cf.c1(pts)[:, None] * d1
    a += cf.c2(pts)[:, None] * d2
    a[np.diag_indices_from(a)] += cf.c(pts)
    if not np.all(np.isfinite(a)):
        raise ValueError(
            f"non-finite coefficient evaluation on leaf {stencil.box}")
    return LeafMatrix(a, stencil.i_ci, stencil.i_ce)


def evaluate_boundary(spec: ProblemSpec, points, domain=None) -> np.ndarray:
    """Tabulate the Dirichlet data at boundary points.

    If ``domain`` is given (a Rect or an iterable of Rects for union
    domains) every point is checked to lie on the outline within 1e-12 of
    the domain width.
    """
    points = np.asarray(points, dtype=float)
    if domain is not None:
        rects = [domain] if hasattr(domain, "as_tuple") else list(domain)
        width = max(max(r.width, r.height) for r in rects)
        tol = 1e-12 * width
        on_edge = np.zeros(len(points), dtype=bool)
        interior = np.zeros(len(points), dtype=bool)
        x, y = points[:, 0], points[:, 1]
        for r in rects:
            inside_x = (x > r.x1lo - tol) & (x < r.x1hi + tol)
            inside_y = (y > r.x2lo - tol) & (y < r.x2hi + tol)
            edge = ((np.abs(x - r.x1lo) <= tol) | (np.abs(x - r.x1hi) <= tol)) & inside_y
            edge |= ((np.abs(y - r.x2lo) <= tol) | (np.abs(y - r.x2hi) <= tol)) & inside_x
            on_edge |= edge
            interior |= ((x > r.x1lo + tol) & (x < r.x1hi - tol)
                         & (y > r.x2lo + tol) & (y < r.x2hi - tol))
        # the open part of an edge two rectangles share is union interior
        for i, a in enumerate(rects):
            for b in rects[i + 1:]:
                for side_a in range(4):
                    la, lo_a, hi_a = a.side_interval(side_a)
                    for side_b in range(4):
                        lb, lo_b, hi_b = b.side_interval(side_b)
                        horizontal = side_a in (0, 2)
                        if horizontal != (side_b in (0, 2)) or abs(la - lb) > tol:
                            continue
                        lo, hi = max(lo_a, lo_b), min(hi_a, hi_b)
                        if hi - lo <= tol:
                            continue
                        run, line = (x, y) if horizontal else (y, x)
                        interior |= ((np.abs(line - la) <= tol)
                                     & (run > lo + tol) & (run < hi - tol))
        bad = ~(on_edge & ~interior)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise ValueError(f"point {tuple(points[k])} is not on the domain boundary")
    return spec.boundary(points)


# ---------------------------------------------------------------------------
# Catalog


def _gaussian_expr(alpha, center):
    return sp.exp(-alpha * ((X1 - center[0]) ** 2 + (X2 - center[1]) ** 2))


def _gaussian(alpha, center):
    cx, cy = center

    def g(pts):
        pts = np.asarray(pts, dtype=float)
        return np.exp(-alpha * ((pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2))

    return g


def _build_laplace(params):
    return ProblemSpec("laplace", CoefficientField(1, 0, 1), params=dict(params))


def _build_helmholtz(params):
    kappa = params["kappa"]
    cf = CoefficientField(1, 0, 1, c=-(kappa ** 2))
    return ProblemSpec("helmholtz", cf, params=dict(params))


def _build_varcoef_helmholtz(params):
    p = {"kappa": 40.0, "alpha": 300.0, "xhat": (0.25, 0.75),
         "alpha2": 200.0, "alpha3": 200.0,
         "xhat2": (7 / 20, 6 / 10), "xhat3": (6 / 10, 9 / 20)}
    p.update(params)
    scatter_expr = (sp.Rational(1, 2) * _gaussian_expr(p["alpha2"], p["xhat2"])
                    + sp.Rational(1, 2) * _gaussian_expr(p["alpha3"], p["xhat3"]))
    kappa = p["kappa"]
    cf = CoefficientField(1, 0, 1, c=-kappa ** 2 * (1 - scatter_expr))
    s1 = _gaussian(p["alpha2"], p["xhat2"])
    s2 = _gaussian(p["alpha3"], p["xhat3"])
    p["scattering"] = lambda pts: 0.5 * s1(pts) + 0.5 * s2(pts)
    return ProblemSpec("varcoef_helmholtz", cf,
                       body_load=_gaussian(p["alpha"], p["xhat"]), params=p)


def _build_concentrated_helmholtz(params):
    p = {"kappa": 20.0, "alpha": 3000.0, "xhat": (0.5, 0.5)}
    p.update(params)
    cf = CoefficientField(1, 0, 1, c=-p["kappa"] ** 2)
    return ProblemSpec("concentrated_helmholtz", cf,
                       body_load=_gaussian(p["alpha"], p["xhat"]), params=p)


def _build_indicator_poisson(params):
    p = {"support": (0.25, 0.5, 0.25, 0.5)}
    p.update(params)
    a, b, c, d = p["support"]

    def g(pts):
        pts = np.asarray(pts, dtype=float)
        inside = ((pts[:, 0] >= a) & (pts[:, 0] <= b)
                  & (pts[:, 1] >= c) & (pts[:, 1] <= d))
        return inside.astype(float)

    return ProblemSpec("indicator_poisson", CoefficientField(1, 0, 1),
                       body_load=g, params=p)


def _build_convection_diffusion(params):
    p = {"epsilon": 1 / 200, "alpha": 50.0, "xhat": (0.25, 0.25)}
    p.update(params)
    eps = p["epsilon"]
    # spatial generator of du/dt = (eps Lap - d/dx1) u in the A-convention
    cf = CoefficientField(-eps, 0, -eps, c1=-1.0)
    return ProblemSpec("convection_diffusion", cf,
                       initial=_gaussian(p["alpha"], p["xhat"]), params=p)


def _build_manufactured(params):
    p = {"operator": "laplace"}
    p.update(params)
    if "u" not in p:
        raise ValueError("manufactured entry needs a solution expression 'u'")
    u_expr = sp.sympify(p["u"], locals={"x1": X1, "x2": X2})
    op_params = {k: v for k, v in p.items() if k not in ("u", "operator")}
    base = catalog(p["operator"], **op_params)
    ce = base.coefficients.symbolic()
    g_expr = (-ce["c11"] * sp.diff(u_expr, X1, 2)
              - 2 * ce["c12"] * sp.diff(u_expr, X1, X2)
              - ce["c22"] * sp.diff(u_expr, X2, 2)
              + ce["c1"] * sp.diff(u_expr, X1)
              + ce["c2"] * sp.diff(u_expr, X2)
              + ce["c"] * u_expr)
    g, _ = _as_field_func(sp.simplify(g_expr))
    u, _ = _as_field_func(u_expr)
    return ProblemSpec("manufactured", base.coefficients, body_load=g,
                       dirichlet=u, u_exact=u, params=p)


_CATALOG = {
    "laplace": _build_laplace,
    "helmholtz": _build_helmholtz,
    "varcoef_helmholtz": _build_varcoef_helmholtz,
    "concentrated_helmholtz": _build_concentrated_helmholtz,
    "indicator_poisson": _build_indicator_poisson,
    "convection_diffusion": _build_convection_diffusion,
    "manufactured": _build_manufactured,
}


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


def catalog(name: str, **params) -> ProblemSpec:
    """Fully populated problem from the catalog.

    Entries: laplace; helmholtz(kappa); varcoef_helmholtz (kappa=40,
    Gaussian load, two-bump scattering potential); concentrated_helmholtz
    (kappa=20, alpha=3000); indicator_poisson (unit load on [1/4,1/2]^2);
    convection_diffusion (parabolic generator, eps=1/200); manufactured
    (u='<sympy expr>', operator=<entry name>, ...). Calls are pure: the
    same name and parameters always produce identical functions.
    """
    try:
        builder = _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown catalog entry {name!r}; "
                       f"known: {', '.join(catalog_names())}") from None
    try:
        spec = builder(params)
    except KeyError as exc:
        raise ValueError(f"catalog entry {name!r} is missing parameter {exc}") from None
    json_params = {k: v for k, v in spec.params.items() if not callable(v)}
    spec.catalog_key = (name, json_params)
    return spec
