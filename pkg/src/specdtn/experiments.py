"""Desk-scale experiment drivers with CSV output.

Each driver reproduces one study: build/solve timing and memory versus
problem size, variable-coefficient Helmholtz accuracy versus edge order,
local refinement versus uniform refinement for a concentrated load, an
edge-aligned discontinuous load, corner refinement on an L-shaped domain,
and the Crank-Nicolson order study. Rows share one schema; failed runs
keep their row with NaN metrics so sweeps always produce complete tables.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from . import solver as solver_mod
from .geometry import (MeshSpec, RefinementSpec, build_forest, build_mesh,
                       build_uniform_tree, count_chebyshev_dofs,
                       refine_near_point, MeshConformityError)
from .leaf import LeafSingularError
from .model import catalog
from .reference import ReferenceSolution, linf_error
from .solver import MergeSingularError
from .timestepping import ParabolicProblem, TimeStepConfig, cn_run

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "ROW_COLUMNS",
    "run_experiment",
    "write_csv",
    "EXPERIMENTS",
]

ROW_COLUMNS = ("N", "p", "q", "n", "n_ref", "build_seconds", "solve_seconds",
               "memory_floats", "linf_error", "mode")

SOLVER_ERRORS = (LeafSingularError, MergeSingularError, MeshConformityError)


@dataclass
class ResultRow:
    N: int
    p: int
    q: int
    n: int
    n_ref: int
    build_seconds: float
    solve_seconds: float
    memory_floats: int
    linf_error: float
    mode: str

    def as_list(self):
        return [getattr(self, c) for c in ROW_COLUMNS]


@dataclass
class ExperimentConfig:
    """One experiment invocation.

    p and q default to each other through q = p - 1; params carries
    problem parameters and per-experiment extras (e.g. "ns" for the speed
    sweep). Flags parsed by the CLI override file-loaded values.
    """

    experiment: str
    p: int | None = None
    q: int | None = None
    n: int | None = None
    n_ref: int = 0
    mode: str = "stored"
    out: str | None = None
    repetitions: int = 3
    params: dict = field(default_factory=dict)

    def orders(self, default_q: int) -> tuple[int, int]:
        p, q = self.p, self.q
        if p is None and q is None:
            q = default_q
        if q is None:
            q = p - 1
        if p is None:
            p = q + 1
        if p < q + 1:
            raise ValueError(f"config needs p >= q+1, got p={p}, q={q}")
        return p, q

    @staticmethod
    def from_file(path) -> "ExperimentConfig":
        with open(path) as fh:
            doc = json.load(fh)
        known = {"experiment", "p", "q", "n", "n_ref", "mode", "out", "repetitions"}
        kwargs = {k: doc[k] for k in known if k in doc}
        kwargs["params"] = doc.get("params", {})
        return ExperimentConfig(**kwargs)


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROW_COLUMNS)
        for row in rows:
            writer.writerow(row.as_list())


def _timed_run(tree, spec, p, q, mode, reps, f=None, g=None):
    """Median build/solve timings; the last build and solve are returned."""
    builds, solves = [], []
    solver = state = None
    for _ in range(max(1, reps)):
        solver = solver_mod.build_stage(tree, spec, p, q, mode)
        builds.append(solver.build_seconds)
    for _ in range(max(1, reps)):
        state = solver.solve(f, g)
        solves.append(state.solve_seconds)
    return solver, state, statistics.median(builds), statistics.median(solves)


def _failed_row(p, q, n, n_ref, mode) -> ResultRow:
    return ResultRow(N=0, p=p, q=q, n=n, n_ref=n_ref,
                     build_seconds=math.nan, solve_seconds=math.nan,
                     memory_floats=0, linf_error=math.nan, mode=mode)


def _error_run(tree, spec, p, q, mode, reps, reference, n, n_ref):
    try:
        solver, state, tb, ts = _timed_run(tree, spec, p, q, mode, reps)
        err = linf_error(state, reference)
        return ResultRow(N=count_chebyshev_dofs(tree, p), p=p, q=q, n=n,
                         n_ref=n_ref, build_seconds=tb, solve_seconds=ts,
                         memory_floats=solver.memory_floats(),
                         linf_error=err, mode=mode)
    except SOLVER_ERRORS as exc:
        print(f"run (n={n}, n_ref={n_ref}, q={q}) failed: {exc}")
        return _failed_row(p, q, n, n_ref, mode)


UNIT = (0.0, 1.0, 0.0, 1.0)


def speed(config: ExperimentConfig) -> list[ResultRow]:
    """Build/solve wall time and retained memory over a uniform-mesh sweep.

    The operator is Laplace with harmonic boundary data u = x1, so the
    error column doubles as an end-to-end sanity value; timing does not
    depend on the coefficient choice.
    """
    p, q = config.orders(default_q=8)
    ns = config.params.get("ns", [8, 16, 32, 64, 128])
    spec = catalog("laplace")
    reference = ReferenceSolution.analytic(lambda pts: pts[:, 0])
    rows = []
    for n in ns:
        reps = config.repetitions if n <= 32 else min(config.repetitions, 1)
        tree = build_uniform_tree(UNIT, n)
        try:
            solver, state, tb, ts = _timed_run(
                tree, spec, p, q, config.mode, reps, f=lambda pts: pts[:, 0])
            rows.append(ResultRow(
                N=count_chebyshev_dofs(tree, p), p=p, q=q, n=n, n_ref=0,
                build_seconds=tb, solve_seconds=ts,
                memory_floats=solver.memory_floats(),
                linf_error=linf_error(state, reference), mode=config.mode))
            del solver, state
        except SOLVER_ERRORS as exc:
            print(f"speed run n={n} failed: {exc}")
            rows.append(_failed_row(p, q, n, 0, config.mode))
    return rows


def varcoef(config: ExperimentConfig) -> list[ResultRow]:
    """Variable-coefficient Helmholtz accuracy versus edge order q.

    A fixed n x n mesh is swept over q; the reference is a self-convergence
    solve at twice the mesh and the largest q.
    """
    config.orders(default_q=16)    # reject inconsistent p/q flags early
    n = config.n or 16
    if "qs" in config.params:
        qs = config.params["qs"]
    elif config.q is not None:
        qs = [config.q]
    else:
        qs = [4, 8, 12, 16]
    prob = {k: v for k, v in config.params.items() if k not in ("qs", "ref_n")}
    spec = catalog("varcoef_helmholtz", **prob)
    ref_n = config.params.get("ref_n", 2 * n)
    ref_q = max(max(qs), 16)
    ref_solver = solver_mod.build_stage(build_uniform_tree(UNIT, ref_n), spec,
                                        ref_q + 1, ref_q, "econ")
    reference = ReferenceSolution.from_state(ref_solver.solve(),
                                             meta={"n": ref_n, "q": ref_q})
    del ref_solver
    rows = []
    for q in qs:
        tree = build_uniform_tree(UNIT, n)
        rows.append(_error_run(tree, spec, q + 1, q, config.mode,
                               config.repetitions, reference, n, 0))
    return rows


def _refined_tree(n, n_ref, xhat):
    tree = build_uniform_tree(UNIT, n)
    if n_ref:
        refine_near_point(tree, RefinementSpec(xhat, n_ref))
    return tree


def concentrated(config: ExperimentConfig) -> list[ResultRow]:
    """Concentrated Gaussian load: local refinement versus uniform meshes.

    Runs (n, n_ref) pairs; one refinement round around the load center on
    the n=4 mesh lands on the same local grid as the uniform n=8 mesh.
    """
    p, q = config.orders(default_q=16)
    prob = {k: v for k, v in config.params.items() if k not in ("runs", "ref")}
    spec = catalog("concentrated_helmholtz", **prob)
    xhat = tuple(spec.params["xhat"])
    runs = config.params.get("runs", [(4, 0), (4, 1), (4, 2), (8, 0), (8, 1)])
    ref_n, ref_nref = config.params.get("ref", (16, 1))
    ref_tree = _refined_tree(ref_n, ref_nref, xhat)
    ref_solver = solver_mod.build_stage(ref_tree, spec, p, q, "econ")
    reference = ReferenceSolution.from_state(ref_solver.solve(),
                                             meta={"n": ref_n, "n_ref": ref_nref})
    del ref_solver
    rows = []
    for n, n_ref in runs:
        tree = _refined_tree(n, n_ref, xhat)
        rows.append(_error_run(tree, spec, p, q, config.mode,
                               config.repetitions, reference, n, n_ref))
    return rows


def discontinuous(config: ExperimentConfig) -> list[ResultRow]:
    """Poisson with an indicator load whose jumps align with leaf edges."""
    p, q = config.orders(default_q=16)
    spec = catalog("indicator_poisson")
    ns = config.params.get("ns", [8, 16])
    ref_n = config.params.get("ref_n", 2 * max(ns))
    ref_solver = solver_mod.build_stage(build_uniform_tree(UNIT, ref_n), spec,
                                        p, q, "econ")
    reference = ReferenceSolution.from_state(ref_solver.solve(),
                                             meta={"n": ref_n, "q": q})
    del ref_solver
    rows = []
    for n in ns:
        tree = build_uniform_tree(UNIT, n)
        rows.append(_error_run(tree, spec, p, q, config.mode,
                               config.repetitions, reference, n, 0))
    return rows


L_RECTS = ((0.0, 1.0, 0.0, 1.0), (1.0, 2.0, 0.0, 1.0), (0.0, 1.0, 1.0, 2.0))
L_CORNER = (1.0, 1.0)


def _lshape_tree(n, n_ref):
    tree = build_forest(L_RECTS, n)
    if n_ref:
        refine_near_point(tree, RefinementSpec(L_CORNER, n_ref))
    return tree


def lshape_corner(config: ExperimentConfig) -> list[ResultRow]:
    """Re-entrant corner study on [0,2]^2 minus [1,2]^2.

    Helmholtz with a Gaussian body load and zero Dirichlet data; the corner
    limits convergence, and corner refinement rounds recover accuracy until
    the singularity itself dominates (a qualitative plateau).
    """
    p, q = config.orders(default_q=16)
    prob = {"kappa": 15.0, "alpha": 300.0, "xhat": (0.5, 0.75)}
    prob.update({k: v for k, v in config.params.items()
                 if k in ("kappa", "alpha", "xhat")})
    spec = catalog("concentrated_helmholtz", **prob)
    ns = config.params.get("ns", [4, 8])            # per unit square: h = 1/n
    nrefs = config.params.get("nrefs", [0, 1, 2])
    ref_n, ref_nref = config.params.get("ref", (2 * max(ns), max(nrefs) + 1))
    ref_solver = solver_mod.build_stage(_lshape_tree(ref_n, ref_nref), spec,
                                        p, q, "econ")
    reference = ReferenceSolution.from_state(ref_solver.solve(),
                                             meta={"n": ref_n, "n_ref": ref_nref})
    del ref_solver
    rows = []
    for n in ns:
        for n_ref in nrefs:
            tree = _lshape_tree(n, n_ref)
            rows.append(_error_run(tree, spec, p, q, config.mode,
                                   config.repetitions, reference, n, n_ref))
    return rows


HEAT_DECAY = 2 * math.pi ** 2


def heat_problem() -> ParabolicProblem:
    """Manufactured heat problem u = exp(-2 pi^2 t) sin(pi x1) sin(pi x2)."""
    from .model import CoefficientField

    def initial(pts):
        return np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])

    def dirichlet(pts, t):
        return np.zeros(len(pts))

    return ParabolicProblem(operator=CoefficientField(-1.0, 0.0, -1.0),
                            initial=initial, dirichlet=dirichlet, name="heat")


def heat_exact(pts, t):
    return (math.exp(-HEAT_DECAY * t)
            * np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1]))


def parabolic(config: ExperimentConfig) -> list[ResultRow]:
    """Crank-Nicolson order study on the manufactured heat problem.

    One row per step size; linf_error is measured at t_end against the
    exact decaying mode, solve_seconds is the mean per-step time.
    """
    p, q = config.orders(default_q=8)
    n = config.n or 8
    t_end = config.params.get("t_end", 0.1)
    ks = config.params.get("ks", [1 / 40, 1 / 80, 1 / 160, 1 / 320])
    problem = heat_problem()
    rows = []
    for k in ks:
        tree = build_uniform_tree(UNIT, n)
        run = cn_run(problem, tree, TimeStepConfig(k, t_end, (t_end,)), p, q,
                     config.mode)
        state = run.states[t_end]
        reference = ReferenceSolution.analytic(lambda pts: heat_exact(pts, t_end))
        rows.append(ResultRow(
            N=count_chebyshev_dofs(tree, p), p=p, q=q, n=n, n_ref=0,
            build_seconds=run.build_seconds,
            solve_seconds=float(np.mean(run.step_seconds)),
            memory_floats=run.solver.memory_floats(),
            linf_error=linf_error(state, reference), mode=config.mode))
    return rows


def verify_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """Run the invariant suite; represented as a single pass/fail row."""
    from . import verify

    ok = verify.run_checks()
    p, q = config.orders(default_q=8)
    return [ResultRow(N=0, p=p, q=q, n=0, n_ref=0, build_seconds=0.0,
                      solve_seconds=0.0, memory_floats=0,
                      linf_error=0.0 if ok else math.nan, mode=config.mode)]


EXPERIMENTS = {
    "speed": speed,
    "varcoef": varcoef,
    "concentrated": concentrated,
    "discontinuous": discontinuous,
    "lshape-corner": lshape_corner,
    "parabolic": parabolic,
    "verify": verify_experiment,
}


def run_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """Dispatch one experiment and append its CSV if configured."""
    try:
        driver = EXPERIMENTS[config.experiment]
    except KeyError:
        raise ValueError(f"unknown experiment {config.experiment!r}; "
                         f"known: {', '.join(sorted(EXPERIMENTS))}") from None
    rows = driver(config)
    if config.out:
        write_csv(rows, config.out)
    return rows
