"""Self-contained invariant suite, runnable from an installed package.

Each check returns (name, passed, detail); the CLI ``verify`` subcommand
prints one line per check and exits nonzero on any failure. The pytest
suite reuses these checks so the two never drift apart.
"""

from __future__ import annotations

import numpy as np

from . import spectral
from .geometry import (RefinementSpec, build_uniform_tree, classify_edges,
                       count_chebyshev_dofs, enumerate_gauss_nodes,
                       refine_near_point)
from .model import catalog
from .solver import build_stage, merge_siblings
from .spectral import Interval

__all__ = ["run_checks", "all_checks"]


def check_differentiation_exactness():
    """D is exact on polynomials of degree <= p-1 (relative 1e-11)."""
    worst = 0.0
    for p in (6, 12, 20):
        grid = spectral.chebyshev_nodes(p, Interval(0.3, 1.9))
        d = spectral.diff_matrix_1d(grid)
        x = grid.nodes
        for deg in range(p):
            u = x ** deg
            du = deg * x ** (deg - 1) if deg else np.zeros_like(x)
            scale = max(np.abs(du).max(), 1.0)
            worst = max(worst, np.abs(d @ u - du).max() / scale)
    return worst <= 1e-11, f"max relative defect {worst:.2e}"


def check_interp_row_sums():
    """Every interpolation matrix reproduces constants (row sums 1)."""
    worst = 0.0
    for p, q in ((8, 7), (17, 16), (21, 20)):
        src = spectral.chebyshev_nodes(p, Interval(-1.0, 2.0)).nodes
        dst = spectral.gauss_nodes(q, Interval(-1.0, 2.0)).nodes
        m = spectral.interp_matrix(src, dst)
        worst = max(worst, np.abs(m.sum(axis=1) - 1.0).max())
        lift = spectral.build_boundary_lift(p, q, (0.0, 1.0, 0.0, 2.0))
        worst = max(worst, np.abs(lift.sum(axis=1) - 1.0).max())
    return worst <= 1e-13, f"max row-sum defect {worst:.2e}"


def check_lift_block_structure():
    """Away from the 4 corner rows the boundary lift is 4x4 block diagonal."""
    p, q = 11, 10
    lift = spectral.build_boundary_lift(p, q, (0.0, 1.0, 0.0, 1.0))
    m = p - 1
    corner_rows = {0, m, 3 * m - 1, 4 * m - 1}
    ok = True
    for row in range(4 * m):
        if row in corner_rows:
            continue
        side = row // m
        mask = np.ones(4 * q, dtype=bool)
        mask[side * q:(side + 1) * q] = False
        ok &= not np.any(lift[row, mask])
    return ok, "off-block entries exactly zero on non-corner rows"


def check_edge_interpolator_identity():
    """P_down P_up = I entrywise to 1e-12 for q up to 20."""
    worst = 0.0
    for q in (4, 8, 12, 16, 20):
        p_up, p_down = spectral.build_edge_interpolators(q)
        worst = max(worst, np.abs(p_down @ p_up - np.eye(q)).max())
    return worst <= 1e-12, f"max deviation from identity {worst:.2e}"


def check_flux_sign_convention():
    """u = x1 gives +1 on both vertical sides; u = x2 likewise horizontal."""
    p, q = 9, 8
    box = (0.0, 1.0, 0.0, 1.0)
    st = spectral.leaf_stencil(p, q, box)
    d1, d2 = spectral.tensor_diff_matrices(p, box)
    flux = spectral.build_flux_extractor(st, d1, d2)
    v1 = flux @ st.cheb2d[:, 0]
    v2 = flux @ st.cheb2d[:, 1]
    vertical = np.r_[v1[q:2 * q], v1[3 * q:4 * q]]
    horizontal = np.r_[v2[0:q], v2[2 * q:3 * q]]
    off1 = np.r_[v1[0:q], v1[2 * q:3 * q]]
    off2 = np.r_[v2[q:2 * q], v2[3 * q:4 * q]]
    err = max(np.abs(vertical - 1).max(), np.abs(horizontal - 1).max(),
              np.abs(off1).max(), np.abs(off2).max())
    return err <= 1e-12, f"max defect {err:.2e}"


def check_index_discipline():
    """I_gi sets partition the skeleton (with the root exterior) on uniform trees."""
    for n in (1, 2, 4):
        tree = build_uniform_tree((0.0, 1.0, 0.0, 1.0), n)
        plan = enumerate_gauss_nodes(tree, 6)
        seen = list(plan.root_exterior())
        for node in tree.nodes:
            if not node.is_leaf:
                seen.extend(plan.node[node.id].j3)
        if sorted(seen) != list(range(plan.n_gauss)):
            return False, f"index cover broken on n={n}"
    return True, "interior sets + root exterior tile every node exactly once"


def check_dof_count_formula():
    """Unique Chebyshev nodes follow (n(p-1)+1)^2 on uniform grids."""
    p = 7
    for n in (1, 2, 4, 8):
        tree = build_uniform_tree((0.0, 1.0, 0.0, 1.0), n)
        expect = (n * (p - 1) + 1) ** 2
        got = count_chebyshev_dofs(tree, p)
        if got != expect:
            return False, f"n={n}: counted {got}, formula gives {expect}"
    return True, "matches n^2(p-1)^2 + 2n(p-1) + 1 for n in {1,2,4,8}"


def check_refined_edge_classification():
    """One refined leaf produces nonconforming sides; uniform trees none."""
    tree = build_uniform_tree((0.0, 1.0, 0.0, 1.0), 2)
    plan = enumerate_gauss_nodes(tree, 4)
    labels = dict(classify_edges(plan))
    if any(v == "nonconforming" for v in labels.values()):
        return False, "uniform tree classified nonconforming"
    tree = build_uniform_tree((0.0, 1.0, 0.0, 1.0), 2)
    refine_near_point(tree, RefinementSpec((0.125, 0.125), 1))
    plan = enumerate_gauss_nodes(tree, 4)
    labels = dict(classify_edges(plan))
    refined = [nid for nid in range(len(tree.nodes)) if tree.nodes[nid].refined]
    want = {"nonconforming", "boundary"}
    got = {labels[(refined[0], side)] for side in range(4)}
    return got == want, f"refined leaf sides classified {sorted(got)}"


def check_two_leaf_merge_oracle():
    """Merged boundary-to-flux map reproduces analytic harmonic fluxes."""
    p, q = 16, 15
    tree = build_uniform_tree((0.0, 1.0, 0.0, 1.0), 2)
    plan = enumerate_gauss_nodes(tree, q)
    spec = catalog("laplace")
    from .leaf import build_leaf_operators
    # level-1 west box: children are its two leaves
    west = tree.nodes[tree.nodes[tree.root].children[0]]
    ca, cb = (tree.nodes[c] for c in west.children)
    t_a = build_leaf_operators(ca, spec, p, q).T
    t_b = build_leaf_operators(cb, spec, p, q).T
    entry = plan.node[west.id]
    pops = merge_siblings(t_a, t_b, entry)
    pts = plan.coords[entry.ext_mergeorder]
    u = pts[:, 0] ** 2 - pts[:, 1] ** 2
    flux = pops.t_ge_ge @ u
    vertical = np.isclose(pts[:, 0], west.bounds.x1lo) | np.isclose(pts[:, 0], west.bounds.x1hi)
    exact = np.where(vertical, 2 * pts[:, 0], -2 * pts[:, 1])
    err = np.abs(flux - exact).max()
    return err <= 1e-9, f"flux defect {err:.2e}"


def check_harmonic_end_to_end():
    """f = trace of x1^2 - x2^2 reproduces the solution on every leaf."""
    tree = build_uniform_tree((0.0, 1.0, 0.0, 1.0), 2)
    solver = build_stage(tree, catalog("laplace"), 10, 9)
    state = solver.solve(f=lambda pts: pts[:, 0] ** 2 - pts[:, 1] ** 2)
    err = 0.0
    from .leaf import leaf_geometry, stencil_for
    for node in tree.leaves():
        st = stencil_for(node.bounds, leaf_geometry(10, 9, node.bounds.width,
                                                    node.bounds.height))
        exact = st.cheb2d[:, 0] ** 2 - st.cheb2d[:, 1] ** 2
        err = max(err, np.abs(state.leaf_solutions[node.id] - exact).max())
    return err <= 1e-10, f"max tabulation defect {err:.2e}"


def all_checks():
    return [
        ("differentiation exactness", check_differentiation_exactness),
        ("interpolation row sums", check_interp_row_sums),
        ("boundary lift block structure", check_lift_block_structure),
        ("edge interpolator identity", check_edge_interpolator_identity),
        ("flux sign convention", check_flux_sign_convention),
        ("gauss index discipline", check_index_discipline),
        ("chebyshev dof count formula", check_dof_count_formula),
        ("refined edge classification", check_refined_edge_classification),
        ("two-leaf merge oracle", check_two_leaf_merge_oracle),
        ("harmonic end-to-end solve", check_harmonic_end_to_end),
    ]


def run_checks(stream=None) -> bool:
    """Run every check, print PASS/FAIL lines, return overall success."""
    import sys
    stream = stream or sys.stdout
    ok = True
    for name, fn in all_checks():
        try:
            passed, detail = fn()
        except Exception as exc:   # a crashed check is a failed check
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}", file=stream)
    return ok
