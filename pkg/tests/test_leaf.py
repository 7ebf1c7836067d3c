import numpy as np
import pytest

from specdtn.geometry import Rect, build_uniform_tree
from specdtn.leaf import (LeafSingularError, assemble_for_leaf,
                          build_leaf_operators, leaf_geometry,
                          leaf_residual_check, stencil_for)
from specdtn.model import catalog

UNIT = Rect(0.0, 1.0, 0.0, 1.0)


def unit_leaf():
    tree = build_uniform_tree(UNIT.as_tuple(), 1)
    return tree.nodes[0]


class TestLeafOperators:
    def setup_method(self):
        self.p, self.q = 12, 11
        self.leaf = unit_leaf()
        self.spec = catalog("laplace")
        self.ops = build_leaf_operators(self.leaf, self.spec, self.p, self.q)
        self.geo = leaf_geometry(self.p, self.q, 1.0, 1.0)
        self.st = stencil_for(self.leaf.bounds, self.geo)

    def test_dimensions(self):
        p, q = self.p, self.q
        assert self.ops.S.shape == (p * p, 4 * q)
        assert self.ops.T.shape == (4 * q, 4 * q)
        assert self.ops.F.shape == (p * p, (p - 2) ** 2)
        assert self.ops.H.shape == (4 * q, (p - 2) ** 2)

    def test_linear_dirichlet_data(self):
        d = self.st.gauss_edges[:, 0]
        np.testing.assert_allclose(self.ops.S @ d, self.st.cheb2d[:, 0],
                                   atol=1e-11)
        v = self.ops.T @ d
        q = self.q
        np.testing.assert_allclose(v[q:2 * q], 1.0, atol=1e-11)    # east
        np.testing.assert_allclose(v[3 * q:], 1.0, atol=1e-11)     # west
        np.testing.assert_allclose(v[:q], 0.0, atol=1e-11)
        np.testing.assert_allclose(v[2 * q:3 * q], 0.0, atol=1e-11)

    def test_harmonic_fluxes(self):
        d = self.st.gauss_edges[:, 0] ** 2 - self.st.gauss_edges[:, 1] ** 2
        v = self.ops.T @ d
        ge, q = self.st.gauss_edges, self.q
        expect = np.r_[-2 * ge[:q, 1], 2 * ge[q:2 * q, 0],
                       -2 * ge[2 * q:3 * q, 1], 2 * ge[3 * q:, 0]]
        np.testing.assert_allclose(v, expect, atol=1e-10)

    def test_zero_load_linearity(self):
        z = np.zeros((self.p - 2) ** 2)
        np.testing.assert_array_equal(self.ops.F @ z, 0.0)
        np.testing.assert_array_equal(self.ops.H @ z, 0.0)

    def test_residuals_small(self):
        _, _, lm = assemble_for_leaf(self.leaf.bounds, self.spec, self.p, self.q)
        report = leaf_residual_check(self.ops, lm, self.geo.lift)
        assert report.max_scaled() <= 1e-9
        assert report.exterior_particular == 0.0
        assert report.exterior_homogeneous == 0.0

    def test_requires_p_above_q(self):
        with pytest.raises(ValueError, match="p >= q\\+1"):
            build_leaf_operators(self.leaf, self.spec, 8, 8)


class TestResidualsAcrossProblems:
    @pytest.mark.parametrize("p", [16, 24])
    def test_laplace_residuals(self, p):
        leaf = unit_leaf()
        spec = catalog("laplace")
        ops = build_leaf_operators(leaf, spec, p, p - 1)
        geo, _, lm = assemble_for_leaf(leaf.bounds, spec, p, p - 1)
        assert leaf_residual_check(ops, lm, geo.lift).max_scaled() <= 1e-9

    def test_helmholtz_small_leaf(self):
        tree = build_uniform_tree(UNIT.as_tuple(), 16)
        leaf = tree.leaves()[37]
        spec = catalog("helmholtz", kappa=40.0)
        p = 16
        ops = build_leaf_operators(leaf, spec, p, p - 1)
        geo, _, lm = assemble_for_leaf(leaf.bounds, spec, p, p - 1)
        assert leaf_residual_check(ops, lm, geo.lift).max_scaled() <= 1e-9


class TestPolynomialExactness:
    def test_constant_coefficient_reproduction(self):
        # u of per-variable degree <= p-3 driven end-to-end through one leaf
        p, q = 10, 9
        leaf = unit_leaf()
        spec = catalog("manufactured",
                       u="x1**7 - 3*x1**2*x2**5 + x2**4 - 2*x1*x2 + 1")
        ops = build_leaf_operators(leaf, spec, p, q)
        geo = leaf_geometry(p, q, 1.0, 1.0)
        st = stencil_for(leaf.bounds, geo)
        u_exact = spec.u_exact(st.cheb2d)
        d = spec.u_exact(st.gauss_edges)
        g = spec.load(st.cheb2d[st.i_ci])
        u_num = ops.S @ d + ops.F @ g
        scale = np.abs(u_exact).max()
        assert np.abs(u_num - u_exact).max() / scale <= 1e-9


class TestEconomyMode:
    def test_econ_returns_only_t(self):
        leaf = unit_leaf()
        ops = build_leaf_operators(leaf, catalog("laplace"), 9, 8, mode="econ")
        assert ops.S is None and ops.F is None and ops.H is None
        assert ops.T is not None
        assert ops.retained_floats() == 0

    def test_econ_t_matches_stored(self):
        leaf = unit_leaf()
        spec = catalog("helmholtz", kappa=7.0)
        t_stored = build_leaf_operators(leaf, spec, 9, 8, mode="stored").T
        t_econ = build_leaf_operators(leaf, spec, 9, 8, mode="econ").T
        np.testing.assert_allclose(t_econ, t_stored, atol=1e-12)

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="unknown mode"):
            build_leaf_operators(unit_leaf(), catalog("laplace"), 9, 8,
                                 mode="compressed")


class TestSingularityDetection:
    def test_resonant_helmholtz_raises(self):
        # first Dirichlet eigenvalue of the unit square is 2 pi^2
        leaf = unit_leaf()
        kappa = np.sqrt(2.0) * np.pi
        with pytest.raises(LeafSingularError, match="singular"):
            build_leaf_operators(leaf, catalog("helmholtz", kappa=kappa), 20, 19)
