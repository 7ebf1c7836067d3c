import numpy as np
import pytest

from specdtn.experiments import heat_exact, heat_problem
from specdtn.geometry import build_uniform_tree
from specdtn.leaf import leaf_geometry, stencil_for
from specdtn.model import CoefficientField, catalog
from specdtn.reference import ReferenceSolution, linf_error
from specdtn.timestepping import (ParabolicProblem, TimeStepConfig,
                                  cn_elliptic_spec, cn_rhs, cn_run,
                                  make_rhs_context)

UNIT = (0.0, 1.0, 0.0, 1.0)
PTS = np.array([[0.3, 0.4], [0.8, 0.1]])


class TestEllipticSpec:
    def test_heat_mapping(self):
        spec = cn_elliptic_spec(heat_problem(), 0.1)
        np.testing.assert_allclose(spec.coefficients.c11(PTS), 0.5)
        np.testing.assert_allclose(spec.coefficients.c22(PTS), 0.5)
        np.testing.assert_allclose(spec.coefficients.c(PTS), 10.0)

    def test_convection_diffusion_mapping(self):
        prob = ParabolicProblem.from_spec(catalog("convection_diffusion"))
        spec = cn_elliptic_spec(prob, 0.01)
        np.testing.assert_allclose(spec.coefficients.c11(PTS), 1 / 400)
        np.testing.assert_allclose(spec.coefficients.c22(PTS), 1 / 400)
        np.testing.assert_allclose(spec.coefficients.c1(PTS), 0.5)
        np.testing.assert_allclose(spec.coefficients.c2(PTS), 0.0)
        np.testing.assert_allclose(spec.coefficients.c(PTS), 100.0)

    def test_deterministic(self):
        a = cn_elliptic_spec(heat_problem(), 0.25)
        b = cn_elliptic_spec(heat_problem(), 0.25)
        np.testing.assert_array_equal(a.coefficients.c(PTS), b.coefficients.c(PTS))

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            cn_elliptic_spec(heat_problem(), 0.0)

    def test_callable_coefficients_route(self):
        op = CoefficientField(lambda pts: -np.ones(len(pts)), 0, -1.0)
        prob = ParabolicProblem(operator=op, initial=lambda pts: np.zeros(len(pts)))
        spec = cn_elliptic_spec(prob, 0.5)
        np.testing.assert_allclose(spec.coefficients.c11(PTS), 0.5)
        np.testing.assert_allclose(spec.coefficients.c(PTS), 2.0)


class TestRhs:
    def tabulate(self, tree, p, q, func):
        tabs = {}
        for node in tree.leaves():
            geo = leaf_geometry(p, q, node.bounds.width, node.bounds.height)
            tabs[node.id] = func(stencil_for(node.bounds, geo).cheb2d)
        return tabs

    def test_zero_state(self):
        tree = build_uniform_tree(UNIT, 2)
        prob = heat_problem()
        ctx = make_rhs_context(prob, tree, 9, 8)
        tabs = self.tabulate(tree, 9, 8, lambda pts: np.zeros(len(pts)))
        out = cn_rhs(prob, 0.1, tabs, ctx)
        assert all(np.abs(v).max() == 0.0 for v in out.values())

    def test_linear_state(self):
        tree = build_uniform_tree(UNIT, 2)
        prob = heat_problem()
        k = 0.2
        ctx = make_rhs_context(prob, tree, 9, 8)
        tabs = self.tabulate(tree, 9, 8, lambda pts: pts[:, 0])
        out = cn_rhs(prob, k, tabs, ctx)
        for node in tree.leaves():
            geo = leaf_geometry(9, 8, node.bounds.width, node.bounds.height)
            st = stencil_for(node.bounds, geo)
            expect = st.cheb2d[st.i_ci, 0] / k
            np.testing.assert_allclose(out[node.id], expect, atol=1e-10)

    def test_sine_mode(self):
        tree = build_uniform_tree(UNIT, 4)
        prob = heat_problem()
        k = 0.05
        p, q = 13, 12
        ctx = make_rhs_context(prob, tree, p, q)
        func = lambda pts: np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])
        tabs = self.tabulate(tree, p, q, func)
        out = cn_rhs(prob, k, tabs, ctx)
        for node in tree.leaves():
            geo = leaf_geometry(p, q, node.bounds.width, node.bounds.height)
            st = stencil_for(node.bounds, geo)
            expect = (1 / k - np.pi**2) * func(st.cheb2d[st.i_ci])
            np.testing.assert_allclose(out[node.id], expect, atol=1e-9)


class TestRun:
    def test_zero_everything_stays_zero(self):
        prob = ParabolicProblem(operator=CoefficientField(-1.0, 0.0, -1.0),
                                initial=lambda pts: np.zeros(len(pts)))
        tree = build_uniform_tree(UNIT, 2)
        run = cn_run(prob, tree, TimeStepConfig(0.05, 0.2, (0.1, 0.2)), 9, 8)
        for state in run.states.values():
            assert max(np.abs(v).max() for v in state.leaf_solutions.values()) == 0.0

    def test_single_build_many_steps(self):
        tree = build_uniform_tree(UNIT, 2)
        run = cn_run(heat_problem(), tree, TimeStepConfig(0.01, 0.1), 9, 8)
        assert run.build_count == 1
        assert len(run.step_seconds) == 10

    def test_second_order_convergence(self):
        t_end = 0.1
        errs = []
        ks = [1 / 20, 1 / 40, 1 / 80]
        for k in ks:
            tree = build_uniform_tree(UNIT, 4)
            run = cn_run(heat_problem(), tree,
                         TimeStepConfig(k, t_end, (t_end,)), 9, 8)
            ref = ReferenceSolution.analytic(lambda pts: heat_exact(pts, t_end))
            errs.append(linf_error(run.states[t_end], ref))
        slope = np.polyfit(np.log(ks), np.log(errs), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.3)
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.3)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.3)

    def test_errors_strictly_decrease_with_k(self):
        t_end = 0.1
        errs = []
        for k in (1 / 40, 1 / 80, 1 / 160):
            tree = build_uniform_tree(UNIT, 4)
            run = cn_run(heat_problem(), tree,
                         TimeStepConfig(k, t_end, (t_end,)), 11, 10)
            ref = ReferenceSolution.analytic(lambda pts: heat_exact(pts, t_end))
            errs.append(linf_error(run.states[t_end], ref))
        assert errs[0] > errs[1] > errs[2]

    def test_csv_snapshots(self, tmp_path):
        tree = build_uniform_tree(UNIT, 2)
        run = cn_run(heat_problem(), tree, TimeStepConfig(0.05, 0.1, (0.05, 0.1)),
                     9, 8)
        out = tmp_path / "traj.csv"
        run.write_csv(out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "time,x1,x2,u"
        n = run.solver.plan.n_gauss
        assert len(lines) == 1 + 2 * n

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TimeStepConfig(-0.1, 1.0)
        cfg = TimeStepConfig(0.25, 1.0, (0.3, 1.0))
        assert cfg.steps == 4
        assert cfg.record_steps() == {1, 4}
