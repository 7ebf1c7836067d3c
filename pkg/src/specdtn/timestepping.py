"""Crank-Nicolson driver on top of one reusable elliptic factorization.

For du/dt = A u with time-independent coefficients, each step solves

    (1/k I - 1/2 A) u_{n+1} = (1/k I + 1/2 A) u_n

so the elliptic operator is the same every step: one build, many solves.
The right-hand side is evaluated spectrally on the per-leaf Chebyshev
tabulations the previous solve already produced, batched across leaves of
equal size. Dirichlet data is sampled at t_{n+1} for the implicit solve.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import leaf as leaf_mod
from . import solver as solver_mod
from .geometry import DomainTree
from .model import CoefficientField, ProblemSpec
from .solver import FactorizedSolver, SolveState

__all__ = [
    "TimeStepConfig",
    "ParabolicProblem",
    "cn_elliptic_spec",
    "cn_rhs",
    "cn_run",
    "CnRun",
]


@dataclass(frozen=True)
class TimeStepConfig:
    """Step size, final time, and the times at which states are recorded.

    Record times are snapped to the nearest step multiple of k.
    """

    k: float
    t_end: float
    record_times: tuple = ()

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"step size must be positive, got {self.k}")
        if self.t_end < 0:
            raise ValueError("final time must be nonnegative")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.k))

    def record_steps(self) -> set[int]:
        return {min(self.steps, max(0, int(round(t / self.k))))
                for t in self.record_times}


@dataclass
class ParabolicProblem:
    """Initial value problem du/dt = A u, u(.,0) given, Dirichlet data f(x,t).

    ``operator`` encodes A in the elliptic sign convention
    (A u = -c11 u_11 - ... + c u); e.g. the heat generator A = Lap is
    CoefficientField(-1, 0, -1) and eps*Lap - d/dx1 is
    CoefficientField(-eps, 0, -eps, c1=-1). Coefficients must be
    time-independent; that is what makes the factorization reusable.
    """

    operator: CoefficientField
    initial: object
    dirichlet: object | None = None    # f(pts, t)
    name: str = "parabolic"
    params: dict = field(default_factory=dict)

    @staticmethod
    def from_spec(spec: ProblemSpec, dirichlet=None) -> "ParabolicProblem":
        """Adopt a parabolic catalog entry (e.g. convection_diffusion)."""
        if spec.initial is None:
            raise ValueError(f"catalog entry {spec.name!r} has no initial condition")
        return ParabolicProblem(operator=spec.coefficients, initial=spec.initial,
                                dirichlet=dirichlet, name=spec.name,
                                params=dict(spec.params))


def cn_elliptic_spec(problem: ParabolicProblem, k: float) -> ProblemSpec:
    """Coefficients of the implicit-side operator (1/k) I - (1/2) A.

    In the elliptic convention this negates and halves each coefficient of
    A and adds 1/k to the zeroth-order term: for A = eps Lap - d/dx1 the
    result is c11 = c22 = eps/2, c1 = 1/2, c = 1/k.
    """
    if not k > 0:
        raise ValueError(f"step size must be positive, got {k}")
    a = problem.operator
    try:
        ce = a.symbolic()
        cf = CoefficientField(
            c11=-ce["c11"] / 2, c12=-ce["c12"] / 2, c22=-ce["c22"] / 2,
            c1=-ce["c1"] / 2, c2=-ce["c2"] / 2, c=1.0 / k - ce["c"] / 2)
    except ValueError:
        def half_neg(fn):
            return lambda pts, _fn=fn: -0.5 * _fn(pts)

        cf = CoefficientField(
            half_neg(a.c11), half_neg(a.c12), half_neg(a.c22),
            half_neg(a.c1), half_neg(a.c2),
            lambda pts, _fn=a.c: 1.0 / k - 0.5 * _fn(pts))
    return ProblemSpec(name=f"cn:{problem.name}", coefficients=cf,
                       params={"k": k, **problem.params})


class _RhsContext:
    """Per-mesh cache for the explicit-side evaluation (1/k + A/2) u_n.

    Leaves of equal size share differentiation matrices, so the five
    derivative products become a handful of batched GEMMs; the coefficient
    samples of A at each leaf's Chebyshev nodes are stored stacked.
    """

    def __init__(self, problem: ParabolicProblem, tree: DomainTree, p: int, q: int):
        self.p = p
        groups: dict = {}
        for node in tree.leaves():
            key = (node.bounds.width, node.bounds.height)
            groups.setdefault(key, []).append(node)
        self.groups = []
        a = problem.operator
        for (w, h), nodes in groups.items():
            geo = leaf_mod.leaf_geometry(p, q, w, h)
            ids = [n.id for n in nodes]
            coeffs = np.empty((6, len(ids), p * p))
            for j, n in enumerate(nodes):
                pts = leaf_mod.stencil_for(n.bounds, geo).cheb2d
                for ci, fn in enumerate((a.c11, a.c12, a.c22, a.c1, a.c2, a.c)):
                    coeffs[ci, j] = fn(pts)
            self.groups.append((ids, geo, coeffs))

    def apply(self, k: float, u_tabs: dict) -> dict:
        out = {}
        inv_k = 1.0 / k
        for ids, geo, cf in self.groups:
            u = np.stack([u_tabs[i] for i in ids])
            d11, d12, d22 = geo.products
            au = -(cf[0] * (u @ d11.T)) - 2.0 * cf[1] * (u @ d12.T) \
                - cf[2] * (u @ d22.T) + cf[3] * (u @ geo.d1.T) \
                + cf[4] * (u @ geo.d2.T) + cf[5] * u
            rhs = inv_k * u + 0.5 * au
            ci = geo.stencil0.i_ci
            for j, i in enumerate(ids):
                out[i] = rhs[j, ci]
        return out


def cn_rhs(problem: ParabolicProblem, k: float, u_tabs: dict,
           ctx: _RhsContext) -> dict:
    """Interior tabulations of (1/k) u_n + (1/2) A u_n, per leaf.

    u_tabs maps leaf id -> values on the full Chebyshev grid (exactly what
    the downward pass produces); the returned mapping feeds straight into
    the next solve as its body load.
    """
    return ctx.apply(k, u_tabs)


def make_rhs_context(problem: ParabolicProblem, tree: DomainTree,
                     p: int, q: int) -> _RhsContext:
    return _RhsContext(problem, tree, p, q)


@dataclass
class CnRun:
    """Trajectory and bookkeeping of one Crank-Nicolson integration."""

    config: TimeStepConfig
    times: list
    states: dict            # recorded time -> SolveState
    build_count: int
    build_seconds: float
    step_seconds: list
    solver: FactorizedSolver

    def write_csv(self, path):
        """Snapshot rows (time, x1, x2, u) at the recorded times."""
        coords = self.solver.plan.coords
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "x1", "x2", "u"])
            for t in sorted(self.states):
                u = self.states[t].u
                for j in range(coords.shape[0]):
                    writer.writerow([t, coords[j, 0], coords[j, 1], u[j]])


def cn_run(problem: ParabolicProblem, tree: DomainTree, config: TimeStepConfig,
           p: int, q: int, mode: str = "stored") -> CnRun:
    """Integrate with Crank-Nicolson, building the elliptic solver once.

    Every step performs one explicit-side evaluation and one solve against
    the prebuilt factorization; per-step wall time is recorded so callers
    can compare it with a standalone solve.
    """
    builds_before = solver_mod.BUILD_COUNT
    spec = cn_elliptic_spec(problem, config.k)
    solver = solver_mod.build_stage(tree, spec, p, q, mode)
    ctx = make_rhs_context(problem, tree, p, q)

    u_tabs = {}
    for node in tree.leaves():
        geo = leaf_mod.leaf_geometry(p, q, node.bounds.width, node.bounds.height)
        pts = leaf_mod.stencil_for(node.bounds, geo).cheb2d
        u_tabs[node.id] = np.asarray(problem.initial(pts), dtype=float)

    record = config.record_steps()
    states: dict = {}
    step_seconds = []
    if 0 in record:
        states[0.0] = _initial_state(solver, u_tabs)
    for step in range(1, config.steps + 1):
        t_next = step * config.k
        t0 = time.perf_counter()
        g_tabs = cn_rhs(problem, config.k, u_tabs, ctx)
        if problem.dirichlet is None:
            f = None
        else:
            f = lambda pts, _t=t_next: problem.dirichlet(pts, _t)
        state = solver.solve(f, g_tabs)
        step_seconds.append(time.perf_counter() - t0)
        u_tabs = state.leaf_solutions
        if step in record:
            states[t_next] = state
    return CnRun(config=config, times=[s * config.k for s in sorted(record)],
                 states=states,
                 build_count=solver_mod.BUILD_COUNT - builds_before,
                 build_seconds=solver.build_seconds,
                 step_seconds=step_seconds, solver=solver)


def _initial_state(solver: FactorizedSolver, u_tabs: dict) -> SolveState:
    """Wrap the initial tabulation in a state so t=0 can be recorded."""
    state = SolveState(u=np.full(solver.plan.n_gauss, np.nan),
                       w=np.zeros(solver.plan.n_gauss),
                       tree=solver.tree, p=solver.p, q=solver.q)
    state.leaf_solutions = dict(u_tabs)
    return state
