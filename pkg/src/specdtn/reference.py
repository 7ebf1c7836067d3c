"""Reference solutions and the boundary-node error metric.

Errors are measured in the max norm over all Chebyshev nodes on leaf
boundaries. References are either analytic (manufactured solutions) or a
strictly finer self-convergence solve whose per-leaf Chebyshev tabulations
are interpolated to arbitrary query points.
"""

from __future__ import annotations

import numpy as np

from . import leaf as leaf_mod
from . import solver as solver_mod
from .geometry import DomainTree
from .model import ProblemSpec
from .solver import SolveState
from .spectral import interp_matrix

__all__ = [
    "ReferenceSolution",
    "boundary_probe_points",
    "state_boundary_values",
    "linf_error",
    "compute_reference",
]


class ReferenceSolution:
    """Evaluate a reference field at arbitrary points in the domain."""

    def __init__(self, evaluate, meta=None):
        self._evaluate = evaluate
        self.meta = meta or {}

    def evaluate(self, pts) -> np.ndarray:
        return self._evaluate(np.asarray(pts, dtype=float))

    @staticmethod
    def analytic(u_exact, meta=None) -> "ReferenceSolution":
        return ReferenceSolution(lambda pts: np.asarray(u_exact(pts), dtype=float),
                                 meta={"kind": "analytic", **(meta or {})})

    @staticmethod
    def from_state(state: SolveState, meta=None) -> "ReferenceSolution":
        """Per-leaf tensor barycentric interpolation of a solved state."""
        tree, p = state.tree, state.p

        def evaluate(pts):
            out = np.empty(len(pts))
            by_leaf: dict[int, list[int]] = {}
            for j, pt in enumerate(pts):
                by_leaf.setdefault(tree.descend(pt).id, []).append(j)
            for nid, rows in by_leaf.items():
                rows = np.asarray(rows)
                node = tree.nodes[nid]
                geo = leaf_mod.leaf_geometry(p, state.q, node.bounds.width,
                                             node.bounds.height)
                st = leaf_mod.stencil_for(node.bounds, geo)
                wx = interp_matrix(st.cheb_x1, pts[rows, 0])
                wy = interp_matrix(st.cheb_x2, pts[rows, 1])
                vals = state.leaf_solutions[nid].reshape(p, p)  # [i2, i1]
                out[rows] = np.einsum("mi,mj,ji->m", wx, wy, vals)
            return out

        return ReferenceSolution(evaluate, meta={"kind": "self", **(meta or {})})


def boundary_probe_points(tree: DomainTree, p: int, q: int) -> np.ndarray:
    """All Chebyshev nodes on leaf boundaries (shared nodes appear per leaf)."""
    pts = []
    for node in tree.leaves():
        geo = leaf_mod.leaf_geometry(p, q, node.bounds.width, node.bounds.height)
        st = leaf_mod.stencil_for(node.bounds, geo)
        pts.append(st.cheb2d[st.i_ce])
    return np.concatenate(pts)


def state_boundary_values(state: SolveState) -> tuple[np.ndarray, np.ndarray]:
    """(points, values) of the solution at every leaf-boundary Chebyshev node."""
    tree, p, q = state.tree, state.p, state.q
    pts, vals = [], []
    for node in tree.leaves():
        geo = leaf_mod.leaf_geometry(p, q, node.bounds.width, node.bounds.height)
        st = leaf_mod.stencil_for(node.bounds, geo)
        pts.append(st.cheb2d[st.i_ce])
        vals.append(state.leaf_solutions[node.id][st.i_ce])
    return np.concatenate(pts), np.concatenate(vals)


def linf_error(state: SolveState, reference: ReferenceSolution) -> float:
    """Max absolute deviation on all leaf-boundary Chebyshev nodes."""
    pts, vals = state_boundary_values(state)
    return float(np.abs(vals - reference.evaluate(pts)).max())


def compute_reference(spec: ProblemSpec, tree: DomainTree, n: int, p: int, q: int,
                      ref_tree: DomainTree | None = None,
                      ref_n: int | None = None, ref_p: int | None = None,
                      ref_q: int | None = None,
                      mode: str = "econ") -> ReferenceSolution:
    """Reference for an experiment run at (n, p, q) on ``tree``.

    Manufactured problems return the exact solution. Otherwise a strictly
    finer self-convergence solve is performed: by default the mesh doubles
    (ref_n = 2n, same refinements); a custom budget must still exceed the
    experiment's by at least 2x in n or +4 in q, or it is rejected.
    """
    if spec.u_exact is not None:
        return ReferenceSolution.analytic(spec.u_exact, meta={"p": p, "q": q})
    from .geometry import MeshSpec, build_mesh

    ref_p = ref_p if ref_p is not None else (p if ref_q is None else ref_q + 1)
    ref_q = ref_q if ref_q is not None else ref_p - 1
    if ref_n is None:
        ref_n = 2 * n
    if not (ref_n >= 2 * n or ref_q >= q + 4):
        raise ValueError(
            f"reference budget (n={ref_n}, q={ref_q}) must exceed the "
            f"experiment budget (n={n}, q={q}) by 2x in n or +4 in q")
    if ref_tree is None:
        base = tree.mesh_spec
        if base is None:
            raise ValueError("tree has no mesh spec; pass ref_tree explicitly")
        ref_tree = build_mesh(MeshSpec(rects=list(base.rects), n=ref_n,
                                       refinements=list(base.refinements),
                                       merge_script=list(base.merge_script)))
    ref_solver = solver_mod.build_stage(ref_tree, spec, ref_p, ref_q, mode)
    ref_state = ref_solver.solve()
    return ReferenceSolution.from_state(
        ref_state, meta={"n": ref_n, "p": ref_p, "q": ref_q})
