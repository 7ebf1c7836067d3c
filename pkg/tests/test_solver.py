import numpy as np
import pytest

from specdtn.geometry import (RefinementSpec, build_forest, build_uniform_tree,
                              enumerate_gauss_nodes, refine_near_point)
from specdtn.leaf import build_leaf_operators, leaf_geometry, stencil_for
from specdtn.model import catalog
from specdtn.reference import ReferenceSolution, linf_error
from specdtn.solver import (MergeSingularError, build_stage, downward_pass,
                            merge_siblings, solve, upward_pass)

UNIT = (0.0, 1.0, 0.0, 1.0)


def leaf_points(tree, p, q, nid):
    node = tree.nodes[nid]
    geo = leaf_geometry(p, q, node.bounds.width, node.bounds.height)
    return stencil_for(node.bounds, geo).cheb2d


def tabulation_error(state, u_exact):
    err = 0.0
    for nid, vals in state.leaf_solutions.items():
        pts = leaf_points(state.tree, state.p, state.q, nid)
        err = max(err, np.abs(vals - u_exact(pts)).max())
    return err


class TestMergeSiblings:
    def setup_method(self):
        self.p, self.q = 16, 15
        self.tree = build_uniform_tree(UNIT, 2)
        self.plan = enumerate_gauss_nodes(self.tree, self.q)
        self.spec = catalog("laplace")
        west = self.tree.nodes[self.tree.nodes[self.tree.root].children[0]]
        self.parent = west
        ca, cb = (self.tree.nodes[c] for c in west.children)
        self.t_a = build_leaf_operators(ca, self.spec, self.p, self.q).T
        self.t_b = build_leaf_operators(cb, self.spec, self.p, self.q).T
        self.entry = self.plan.node[west.id]
        self.ops = merge_siblings(self.t_a, self.t_b, self.entry)

    def test_harmonic_fluxes_on_outer_boundary(self):
        pts = self.plan.coords[self.entry.ext_mergeorder]
        u = pts[:, 0] ** 2 - pts[:, 1] ** 2
        flux = self.ops.t_ge_ge @ u
        b = self.parent.bounds
        vertical = np.isclose(pts[:, 0], b.x1lo) | np.isclose(pts[:, 0], b.x1hi)
        exact = np.where(vertical, 2 * pts[:, 0], -2 * pts[:, 1])
        np.testing.assert_allclose(flux, exact, atol=1e-9)

    def test_interface_reconstruction_linear(self):
        pts = self.plan.coords[self.entry.ext_mergeorder]
        u3 = self.ops.s_gi_ge @ pts[:, 1]     # u = x2, interface values
        ipts = self.plan.coords[self.entry.j3]
        np.testing.assert_allclose(u3, ipts[:, 1], atol=1e-10)

    def test_zero_load_gives_zero_interface(self):
        w = self.ops.solve_interface(np.zeros(self.entry.j3.size))
        np.testing.assert_array_equal(w, 0.0)

    def test_swap_invariance(self):
        # swapping the roles of the two children leaves X(h_b - h_a) alone
        swapped = type(self.entry)(
            ext=self.entry.ext, ext_mergeorder=self.entry.ext_mergeorder,
            j1=self.entry.j2, j2=self.entry.j1, j3=self.entry.j3,
            pos1_a=self.entry.pos2_b, pos3_a=self.entry.pos3_b,
            pos2_b=self.entry.pos1_a, pos3_b=self.entry.pos3_a)
        ops2 = merge_siblings(self.t_b, self.t_a, swapped)
        rng = np.random.default_rng(3)
        ha = rng.standard_normal(self.entry.j3.size)
        hb = rng.standard_normal(self.entry.j3.size)
        w1 = self.ops.solve_interface(hb - ha)
        w2 = ops2.solve_interface(ha - hb)
        np.testing.assert_allclose(w1, w2, atol=1e-11)

    def test_x_materialization(self):
        x = self.ops.materialize_x()
        p3 = self.entry.pos3_a
        t33a = self.t_a[np.ix_(p3, p3)]
        p3b = self.entry.pos3_b
        t33b = self.t_b[np.ix_(p3b, p3b)]
        np.testing.assert_allclose(x @ (t33a - t33b), np.eye(p3.size), atol=1e-9)

    def test_singular_interface_raises(self):
        # craft a sibling whose interface block cancels exactly
        t_fake = np.zeros_like(self.t_b)
        p3a, p3b = self.entry.pos3_a, self.entry.pos3_b
        t_fake[np.ix_(p3b, p3b)] = self.t_a[np.ix_(p3a, p3a)]
        with pytest.raises(MergeSingularError, match="resonance"):
            merge_siblings(self.t_a, t_fake, self.entry)


class TestBuildSolve:
    def test_single_leaf_tree(self):
        tree = build_uniform_tree(UNIT, 1)
        solver = build_stage(tree, catalog("laplace"), 10, 9)
        state = solver.solve(f=lambda pts: pts[:, 0])
        assert tabulation_error(state, lambda pts: pts[:, 0]) <= 1e-12

    def test_harmonic_reproduction_n4(self):
        tree = build_uniform_tree(UNIT, 4)
        solver = build_stage(tree, catalog("laplace"), 9, 8)
        state = solver.solve(f=lambda pts: pts[:, 0])
        assert tabulation_error(state, lambda pts: pts[:, 0]) <= 1e-11

    def test_zero_data_zero_solution(self):
        tree = build_uniform_tree(UNIT, 2)
        solver = build_stage(tree, catalog("laplace"), 9, 8)
        state = solver.solve()
        assert np.abs(state.u).max() == 0.0

    def test_linearity(self):
        tree = build_uniform_tree(UNIT, 2)
        spec = catalog("manufactured", u="sin(pi*x1)*sin(pi*x2)")
        solver = build_stage(tree, spec, 9, 8)
        full = solver.solve()
        f_only = solver.solve(g=lambda pts: np.zeros(len(pts)))
        g_only = solver.solve(f=lambda pts: np.zeros(len(pts)))
        combined = f_only.u + g_only.u
        scale = max(np.abs(full.u).max(), 1.0)
        assert np.abs(full.u - combined).max() / scale <= 1e-12

    def test_boundary_data_set_exactly(self):
        tree = build_uniform_tree(UNIT, 2)
        solver = build_stage(tree, catalog("laplace"), 9, 8)
        f = lambda pts: np.cos(3 * pts[:, 0]) + pts[:, 1]
        state = solver.solve(f=f)
        ext = solver.plan.root_exterior()
        np.testing.assert_array_equal(state.u[ext],
                                      f(solver.plan.coords[ext]))

    def test_manufactured_poisson(self):
        spec = catalog("manufactured", u="sin(pi*x1)*sin(pi*x2)")
        tree = build_uniform_tree(UNIT, 2)
        solver = build_stage(tree, spec, 17, 16)
        state = solver.solve()
        assert tabulation_error(state, spec.u_exact) <= 1e-9

    def test_upward_root_fluxes_manufactured(self):
        spec = catalog("manufactured", u="sin(pi*x1)*sin(pi*x2)")
        tree = build_uniform_tree(UNIT, 2)
        solver = build_stage(tree, spec, 17, 16)
        state = upward_pass(solver)
        pts = solver.plan.coords[solver.plan.root_exterior()]
        pi = np.pi
        vertical = np.isclose(pts[:, 0], 0.0) | np.isclose(pts[:, 0], 1.0)
        exact = np.where(vertical,
                         pi * np.cos(pi * pts[:, 0]) * np.sin(pi * pts[:, 1]),
                         pi * np.sin(pi * pts[:, 0]) * np.cos(pi * pts[:, 1]))
        np.testing.assert_allclose(state.h_root, exact, atol=1e-9)

    def test_upward_interface_particular_solution(self):
        spec = catalog("manufactured", u="sin(pi*x1)*sin(pi*x2)")
        tree = build_uniform_tree(UNIT, 2)
        solver = build_stage(tree, spec, 17, 16)
        state = upward_pass(solver)
        j3 = solver.plan.node[tree.root].j3
        pts = solver.plan.coords[j3]
        exact = np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])
        np.testing.assert_allclose(state.w[j3], exact, atol=1e-9)
        state = downward_pass(solver, None, state)
        assert tabulation_error(state, spec.u_exact) <= 1e-9

    def test_zero_load_upward_all_zero(self):
        tree = build_uniform_tree(UNIT, 4)
        solver = build_stage(tree, catalog("laplace"), 9, 8)
        state = upward_pass(solver)
        assert np.abs(state.h_root).max() == 0.0
        assert np.abs(state.w).max() == 0.0

    def test_module_level_solve(self):
        tree = build_uniform_tree(UNIT, 2)
        solver = build_stage(tree, catalog("laplace"), 9, 8)
        state = solve(solver, f=lambda pts: pts[:, 1])
        assert tabulation_error(state, lambda pts: pts[:, 1]) <= 1e-11

    def test_interface_continuity(self):
        # tabulations from both sides of every conforming edge agree
        spec = catalog("manufactured", u="sin(pi*x1)*sin(pi*x2)")
        tree = build_uniform_tree(UNIT, 4)
        p, q = 13, 12
        solver = build_stage(tree, spec, p, q)
        state = solver.solve()
        by_edge = {}
        for leaf in tree.leaves():
            geo = leaf_geometry(p, q, leaf.bounds.width, leaf.bounds.height)
            st = stencil_for(leaf.bounds, geo)
            vals = state.leaf_solutions[leaf.id]
            for side, idx in (("s", st.i_s), ("e", st.i_e),
                              ("n", st.i_n), ("w", st.i_w)):
                pts = st.cheb2d[idx]
                key = tuple(np.round(pts, 12).ravel())
                by_edge.setdefault(key, []).append(vals[idx])
        worst = 0.0
        shared = 0
        for copies in by_edge.values():
            if len(copies) == 2:
                shared += 1
                worst = max(worst, np.abs(copies[0] - copies[1]).max())
        assert shared == 24          # interior edges of the 4x4 mesh
        assert worst <= 1e-8


class TestShuffledOrder:
    def test_results_independent_of_merge_order(self):
        spec = catalog("varcoef_helmholtz", kappa=10.0)
        tree = build_uniform_tree(UNIT, 4)
        solver_a = build_stage(tree, spec, 9, 8)
        rng = np.random.default_rng(11)
        order = list(rng.permutation(len(tree.nodes)))
        # repair into a valid topological order: children before parents
        order.sort(key=lambda nid: -tree.nodes[nid].level)
        solver_b = build_stage(tree, spec, 9, 8, order=order)
        f = lambda pts: np.sin(2 * pts[:, 0] + pts[:, 1])
        ua, ub = solver_a.solve(f=f).u, solver_b.solve(f=f).u
        assert np.abs(ua - ub).max() <= 1e-13

    def test_invalid_order_rejected(self):
        tree = build_uniform_tree(UNIT, 2)
        with pytest.raises(ValueError, match="before its children"):
            build_stage(tree, catalog("laplace"), 9, 8,
                        order=range(len(tree.nodes)))


class TestEconomyMode:
    def test_solutions_match_stored(self):
        spec = catalog("varcoef_helmholtz", kappa=8.0)
        tree = build_uniform_tree(UNIT, 4)
        stored = build_stage(tree, spec, 9, 8, "stored")
        econ = build_stage(tree, spec, 9, 8, "econ")
        us, ue = stored.solve().u, econ.solve().u
        assert np.abs(us - ue).max() <= 1e-12
        for nid in stored.leaf_ops:
            np.testing.assert_allclose(
                stored.solve().leaf_solutions[nid],
                econ.solve().leaf_solutions[nid], atol=1e-12)
            break

    def test_memory_strictly_smaller(self):
        tree = build_uniform_tree(UNIT, 4)
        spec = catalog("laplace")
        stored = build_stage(tree, spec, 9, 8, "stored")
        econ = build_stage(tree, spec, 9, 8, "econ")
        assert econ.memory_floats() < stored.memory_floats()
        assert econ.leaf_memory_floats() == 0
        assert stored.leaf_memory_floats() > 0


class TestRefinedMeshes:
    def test_wrapped_solve_matches_manufactured(self):
        spec = catalog("manufactured", u="sin(pi*x1)*sin(pi*x2)")
        tree = build_uniform_tree(UNIT, 4)
        refine_near_point(tree, RefinementSpec((0.5, 0.5), 1))
        solver = build_stage(tree, spec, 9, 8)
        state = solver.solve()
        assert tabulation_error(state, spec.u_exact) <= 1e-8

    def test_nested_refinement_two_rounds(self):
        spec = catalog("manufactured", u="sin(pi*x1)*sin(pi*x2)")
        tree = build_uniform_tree(UNIT, 4)
        refine_near_point(tree, RefinementSpec((0.5, 0.5), 2))
        solver = build_stage(tree, spec, 9, 8)
        state = solver.solve()
        assert tabulation_error(state, spec.u_exact) <= 1e-8

    def test_harmonic_exactness_through_wraps(self):
        tree = build_uniform_tree(UNIT, 2)
        refine_near_point(tree, RefinementSpec((0.1, 0.1), 1))
        solver = build_stage(tree, catalog("laplace"), 9, 8)
        f = lambda pts: pts[:, 0] ** 2 - pts[:, 1] ** 2
        state = solver.solve(f=f)
        assert tabulation_error(state, f) <= 1e-10

    def test_wrap_against_unrefined_reference(self):
        # refining a smooth problem must not hurt: error stays comparable
        spec = catalog("manufactured", u="sin(pi*x1)*sin(pi*x2)")
        base = build_uniform_tree(UNIT, 4)
        flat = build_stage(base, spec, 9, 8).solve()
        tree = build_uniform_tree(UNIT, 4)
        refine_near_point(tree, RefinementSpec((0.5, 0.5), 1))
        refined = build_stage(tree, spec, 9, 8).solve()
        ref = ReferenceSolution.analytic(spec.u_exact)
        assert linf_error(refined, ref) <= 5 * linf_error(flat, ref)

    def test_econ_on_refined_mesh(self):
        spec = catalog("manufactured", u="sin(pi*x1)*sin(pi*x2)")
        tree = build_uniform_tree(UNIT, 4)
        refine_near_point(tree, RefinementSpec((0.5, 0.5), 1))
        us = build_stage(tree, spec, 9, 8, "stored").solve().u
        ue = build_stage(tree, spec, 9, 8, "econ").solve().u
        assert np.abs(us - ue).max() <= 1e-12


class TestUnionDomains:
    L = ((0.0, 1.0, 0.0, 1.0), (1.0, 2.0, 0.0, 1.0), (0.0, 1.0, 1.0, 2.0))

    def test_harmonic_on_lshape(self):
        tree = build_forest(self.L, 2)
        solver = build_stage(tree, catalog("laplace"), 10, 9)
        f = lambda pts: pts[:, 0] ** 2 - pts[:, 1] ** 2
        state = solver.solve(f=f)
        assert tabulation_error(state, f) <= 1e-10

    def test_corner_refined_lshape(self):
        tree = build_forest(self.L, 2)
        refine_near_point(tree, RefinementSpec((1.0, 1.0), 1))
        solver = build_stage(tree, catalog("laplace"), 9, 8)
        f = lambda pts: pts[:, 0] ** 2 - pts[:, 1] ** 2
        state = solver.solve(f=f)
        assert tabulation_error(state, f) <= 1e-10
