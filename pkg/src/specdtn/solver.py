"""Hierarchical build and solve stages.

The build stage sweeps the tree once, children before parents. Leaves get
their dense solution/flux operators; each parent eliminates the interface
shared by its two children:

    X = (T^a_33 - T^b_33)^{-1}          (held as an LU factorization)
    S = X [ -T^a_31 | T^b_32 ]          boundary data -> interface values
    T = diag(T^a_11, T^b_22) + [T^a_13; T^b_23] S

Refined parents whose boundary nodes no longer match an unrefined
neighbour are wrapped right after their internal merges: T and S are
re-expressed on the coarse neighbour grid through block-diagonal edge
interpolators, before any higher merge sees them.

The solve stage makes two passes per right-hand side: an upward pass
accumulating the boundary fluxes of local particular solutions (leaves
apply H, parents solve with X and the saved couplings), then a downward
pass that starts from the Dirichlet data on the root and propagates
interface values with S, finishing with per-leaf Chebyshev tabulations.

A built solver is immutable; distinct solves do not share mutable state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag, get_lapack_funcs, lu_factor, lu_solve

from . import leaf as leaf_mod
from . import spectral
from .geometry import DomainTree, MergePlan, NodePlan, enumerate_gauss_nodes
from .model import ProblemSpec

__all__ = [
    "MergeSingularError",
    "ParentOperators",
    "WrapOperators",
    "SolveState",
    "FactorizedSolver",
    "merge_siblings",
    "wrap_nonconforming",
    "build_stage",
    "upward_pass",
    "downward_pass",
    "solve",
]

RCOND_FLOOR = 1e-13

# incremented by every build_stage call; lets drivers assert operator reuse
BUILD_COUNT = 0


class MergeSingularError(RuntimeError):
    """The interface operator difference is numerically singular."""


@dataclass
class WrapOperators:
    """Assembled edge interpolators for one refined parent.

    p_up maps the coarse (wrapped) boundary representation to the fine
    side-blocked one; p_down maps fine to coarse. perm reorders the
    merge-order exterior into the fine side-blocked order.
    """

    p_up: np.ndarray
    p_down: np.ndarray
    perm: np.ndarray
    fine: np.ndarray   # global indices of the fine nodes, side-blocked order


@dataclass
class ParentOperators:
    """Operators retained for one parent box.

    lu_piv factors (T^a_33 - T^b_33); s_gi_ge and t_ei are the interface
    solution map and the edge-from-interface coupling [T^a_13; T^b_23].
    t_ge_ge holds the merged boundary-to-flux map only until the
    grandparent has consumed it. For wrapped parents s_gi_ge acts on the
    coarse representation and wrap carries the interpolators.
    """

    lu_piv: tuple
    s_gi_ge: np.ndarray
    t_ei: np.ndarray
    t_ge_ge: np.ndarray | None = None
    wrap: WrapOperators | None = None

    def solve_interface(self, rhs: np.ndarray) -> np.ndarray:
        return lu_solve(self.lu_piv, rhs)

    def materialize_x(self) -> np.ndarray:
        """Dense X = (T^a_33 - T^b_33)^{-1}; for tests and inspection."""
        return lu_solve(self.lu_piv, np.eye(self.lu_piv[0].shape[0]))

    def retained_floats(self) -> int:
        total = self.lu_piv[0].size + self.s_gi_ge.size + self.t_ei.size
        if self.wrap is not None:
            total += self.wrap.p_up.size + self.wrap.p_down.size
        return total


def _factor_interface(delta: np.ndarray, label: str) -> tuple:
    anorm = np.linalg.norm(delta, 1)
    lu, piv = lu_factor(delta)
    gecon = get_lapack_funcs(("gecon",), (lu,))[0]
    rcond, info = gecon(lu, anorm)
    if info != 0 or not np.isfinite(rcond) or rcond < RCOND_FLOOR:
        cond = np.inf if rcond == 0 else 1.0 / max(rcond, np.finfo(float).tiny)
        raise MergeSingularError(
            f"interface operator of {label} is numerically singular "
            f"(condition estimate {cond:.2e}); the merged box has an "
            "interface resonance")
    return (lu, piv)


def merge_siblings(t_a: np.ndarray, t_b: np.ndarray, entry: NodePlan,
                   label: str = "parent") -> ParentOperators:
    """Eliminate the shared interface of two sibling boundary operators.

    entry supplies the index partition: pos1_a/pos3_a locate the private
    and shared nodes inside child a's exterior (likewise pos2_b/pos3_b for
    b), with the shared positions aligned so both children address the same
    physical Gauss nodes in the same order.
    """
    p1a, p3a, p2b, p3b = entry.pos1_a, entry.pos3_a, entry.pos2_b, entry.pos3_b
    t33a = t_a[np.ix_(p3a, p3a)]
    t33b = t_b[np.ix_(p3b, p3b)]
    lu_piv = _factor_interface(t33a - t33b, label)
    rhs = np.hstack([-t_a[np.ix_(p3a, p1a)], t_b[np.ix_(p3b, p2b)]])
    s_gi_ge = lu_solve(lu_piv, rhs)
    t_ei = np.vstack([t_a[np.ix_(p1a, p3a)], t_b[np.ix_(p2b, p3b)]])
    n1 = p1a.size
    t_new = t_ei @ s_gi_ge
    t_new[:n1, :n1] += t_a[np.ix_(p1a, p1a)]
    t_new[n1:, n1:] += t_b[np.ix_(p2b, p2b)]
    return ParentOperators(lu_piv=lu_piv, s_gi_ge=s_gi_ge, t_ei=t_ei,
                           t_ge_ge=t_new)


_EDGE_INTERP_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _edge_interpolators(q: int):
    mats = _EDGE_INTERP_CACHE.get(q)
    if mats is None:
        mats = spectral.build_edge_interpolators(q)
        _EDGE_INTERP_CACHE[q] = mats
    return mats


def assemble_wrap_operators(wrap_plan, q: int) -> WrapOperators:
    """Block-diagonal side interpolators for one refined parent.

    Sides run S, E, N, W; conforming or boundary stretches contribute
    identity blocks, each 2:1 fine pair contributes the q<->2q pair.
    """
    pu_ref, pd_ref = _edge_interpolators(q)
    ups, downs = [], []
    for blk in wrap_plan.blocks:
        if blk[0] == "identity":
            eye = np.eye(blk[1])
            ups.append(eye)
            downs.append(eye)
        else:
            ups.append(pu_ref)
            downs.append(pd_ref)
    return WrapOperators(p_up=block_diag(*ups), p_down=block_diag(*downs),
                         perm=wrap_plan.perm, fine=wrap_plan.fine)


def wrap_nonconforming(ops: ParentOperators, wrap: WrapOperators) -> ParentOperators:
    """Re-express a refined parent's boundary maps on the coarse grid.

    T -> P_down T P_up and S -> S P_up (after permuting the merge-order
    exterior into side-blocked order). All-identity wraps are never built,
    so this always changes the representation.
    """
    perm = wrap.perm
    ops.t_ge_ge = wrap.p_down @ ops.t_ge_ge[np.ix_(perm, perm)] @ wrap.p_up
    ops.s_gi_ge = ops.s_gi_ge[:, perm] @ wrap.p_up
    ops.wrap = wrap
    return ops


@dataclass
class SolveState:
    """Result of one solve: skeleton values plus per-leaf tabulations.

    u holds the solution at every global Gauss node (fine nodes behind a
    wrapped edge included); w holds the interface values of the local
    particular solutions on each parent's eliminated nodes; leaf_solutions
    maps leaf id -> values on that leaf's full Chebyshev grid.
    """

    u: np.ndarray
    w: np.ndarray | None = None
    leaf_solutions: dict = field(default_factory=dict)
    g_tab: dict = field(default_factory=dict)
    h_root: np.ndarray | None = None
    solve_seconds: float = 0.0
    tree: DomainTree | None = None
    p: int = 0
    q: int = 0
    scratch: dict | None = None


class FactorizedSolver:
    """Built hierarchy of operators for one problem on one mesh."""

    def __init__(self, tree: DomainTree, plan: MergePlan, spec: ProblemSpec,
                 p: int, q: int, mode: str):
        self.tree = tree
        self.plan = plan
        self.spec = spec
        self.p = p
        self.q = q
        self.mode = mode
        self.leaf_ops: dict[int, leaf_mod.LeafOperators] = {}
        self.parent_ops: dict[int, ParentOperators] = {}
        self.build_seconds = 0.0

    # -- accounting ---------------------------------------------------------

    def memory_floats(self) -> int:
        """Float entries retained for the solve stage (pivot ints excluded)."""
        total = sum(ops.retained_floats() for ops in self.leaf_ops.values())
        total += sum(ops.retained_floats() for ops in self.parent_ops.values())
        return total

    def leaf_memory_floats(self) -> int:
        return sum(ops.retained_floats() for ops in self.leaf_ops.values())

    # -- solve stage --------------------------------------------------------

    def _leaf_load(self, nid: int, stencil, g) -> np.ndarray:
        if g is None:
            g = self.spec.body_load
        if g is None:
            return np.zeros(stencil.i_ci.size)
        if callable(g):
            return np.asarray(g(stencil.cheb2d[stencil.i_ci]), dtype=float)
        g_ci = np.asarray(g[nid], dtype=float)
        if g_ci.shape != (stencil.i_ci.size,):
            raise ValueError(
                f"leaf {nid} load has shape {g_ci.shape}, expected "
                f"({stencil.i_ci.size},)")
        return g_ci

    def _upward(self, state: SolveState, g):
        plan = self.plan
        h: dict[int, np.ndarray] = {}
        econ = self.mode == "econ"
        for nid in range(len(self.tree.nodes) - 1, -1, -1):
            node = self.tree.nodes[nid]
            entry = plan.node[nid]
            if node.is_leaf:
                if econ:
                    geo, stencil, lm = leaf_mod.assemble_for_leaf(
                        node.bounds, self.spec, self.p, self.q)
                    lu_piv, _ = leaf_mod.factor_interior(lm, f"leaf {nid}")
                    g_ci = self._leaf_load(nid, stencil, g)
                    w_c = np.zeros(self.p * self.p)
                    w_c[stencil.i_ci] = lu_solve(lu_piv, g_ci)
                    h[nid] = geo.flux @ w_c
                    state.scratch[nid] = (geo, stencil, lu_piv, lm.coupling)
                else:
                    geo = leaf_mod.leaf_geometry(self.p, self.q,
                                                 node.bounds.width,
                                                 node.bounds.height)
                    stencil = leaf_mod.stencil_for(node.bounds, geo)
                    g_ci = self._leaf_load(nid, stencil, g)
                    h[nid] = self.leaf_ops[nid].H @ g_ci
                state.g_tab[nid] = g_ci
                continue
            ca, cb = node.children
            ha, hb = h.pop(ca), h.pop(cb)
            ops = self.parent_ops[nid]
            w3 = ops.solve_interface(hb[entry.pos3_b] - ha[entry.pos3_a])
            hge = np.concatenate([ha[entry.pos1_a], hb[entry.pos2_b]])
            hge += ops.t_ei @ w3
            if ops.wrap is not None:
                hge = ops.wrap.p_down @ hge[ops.wrap.perm]
            state.w[entry.j3] = w3
            h[nid] = hge
        state.h_root = h[self.tree.root]

    def _downward(self, state: SolveState, f):
        plan = self.plan
        u = state.u
        root = self.tree.root
        root_ext = plan.node[root].ext
        if f is None:
            f = self.spec.dirichlet
        if f is None:
            f_vals = np.zeros(root_ext.size)
        elif callable(f):
            f_vals = np.asarray(f(plan.coords[root_ext]), dtype=float)
        else:
            f_vals = np.asarray(f, dtype=float)
            if f_vals.shape != (root_ext.size,):
                raise ValueError(
                    f"boundary data has shape {f_vals.shape}, expected "
                    f"({root_ext.size},)")
        u[root_ext] = f_vals
        econ = self.mode == "econ"
        for nid in range(len(self.tree.nodes)):
            node = self.tree.nodes[nid]
            entry = plan.node[nid]
            if node.is_leaf:
                u_ge = u[entry.ext]
                if econ:
                    geo, stencil, lu_piv, coupling = state.scratch[nid]
                    u_c = np.empty(self.p * self.p)
                    u_ce = geo.lift @ u_ge
                    u_c[stencil.i_ce] = u_ce
                    u_c[stencil.i_ci] = lu_solve(
                        lu_piv, state.g_tab[nid] - coupling @ u_ce)
                else:
                    ops = self.leaf_ops[nid]
                    u_c = ops.S @ u_ge + ops.F @ state.g_tab[nid]
                state.leaf_solutions[nid] = u_c
                continue
            ops = self.parent_ops[nid]
            if ops.wrap is not None:
                u_ext = u[entry.ext]
                u[ops.wrap.fine] = ops.wrap.p_up @ u_ext
            else:
                u_ext = u[entry.ext_mergeorder]
            u[entry.j3] = ops.s_gi_ge @ u_ext + state.w[entry.j3]

    def solve(self, f=None, g=None) -> SolveState:
        """Two-pass solve for Dirichlet data f and body load g.

        f: callable over (m, 2) boundary points, an array over the root's
        exterior Gauss nodes, or None (falls back to the spec's data).
        g: callable over interior points, a mapping leaf id -> interior
        tabulation, or None (falls back to the spec's body load).
        """
        t0 = time.perf_counter()
        n = self.plan.n_gauss
        state = SolveState(u=np.zeros(n), w=np.zeros(n), tree=self.tree,
                           p=self.p, q=self.q,
                           scratch={} if self.mode == "econ" else None)
        self._upward(state, g)
        self._downward(state, f)
        state.scratch = None
        state.solve_seconds = time.perf_counter() - t0
        return state


def build_stage(tree: DomainTree, spec: ProblemSpec, p: int, q: int,
                mode: str = "stored", plan: MergePlan | None = None,
                order=None) -> FactorizedSolver:
    """Single children-before-parents sweep building all operators.

    order may supply any topological ordering of the node ids (children
    first); results are independent of the ordering among disjoint
    subtrees. Merged boundary operators are freed as soon as the parent's
    parent has consumed them, so only solve-stage operators are retained.
    """
    global BUILD_COUNT
    if mode not in ("stored", "econ"):
        raise ValueError(f"unknown mode {mode!r}")
    if p < q + 1:
        raise ValueError(f"leaf order must satisfy p >= q+1, got p={p}, q={q}")
    t0 = time.perf_counter()
    if plan is None:
        plan = enumerate_gauss_nodes(tree, q)
    rng_pts = np.stack([np.linspace(0.05, 0.95, 13), np.linspace(0.1, 0.9, 13)], axis=1)
    sample = tree.nodes[tree.root].bounds
    sample_pts = np.column_stack([
        sample.x1lo + rng_pts[:, 0] * sample.width,
        sample.x2lo + rng_pts[:, 1] * sample.height])
    spec.coefficients.check_ellipticity(sample_pts, label=spec.name)
    solver = FactorizedSolver(tree, plan, spec, p, q, mode)
    if order is None:
        order = range(len(tree.nodes) - 1, -1, -1)
    order = list(order)
    if sorted(order) != list(range(len(tree.nodes))):
        raise ValueError("order must be a permutation of the node ids")
    t_map: dict[int, np.ndarray] = {}
    done: set[int] = set()
    for nid in order:
        node = tree.nodes[nid]
        if node.is_leaf:
            ops = leaf_mod.build_leaf_operators(node, spec, p, q, mode)
            t_map[nid] = ops.T
            ops.T = None
            if mode == "stored":
                solver.leaf_ops[nid] = ops
        else:
            if not all(c in done for c in node.children):
                raise ValueError(
                    f"order processes box {nid} before its children")
            ca, cb = node.children
            entry = plan.node[nid]
            pops = merge_siblings(t_map.pop(ca), t_map.pop(cb), entry,
                                  label=f"box {nid}")
            if entry.wrap is not None:
                pops = wrap_nonconforming(
                    pops, assemble_wrap_operators(entry.wrap, q))
            t_map[nid] = pops.t_ge_ge
            pops.t_ge_ge = None
            solver.parent_ops[nid] = pops
        done.add(nid)
    del t_map
    solver.build_seconds = time.perf_counter() - t0
    BUILD_COUNT += 1
    return solver


def upward_pass(solver: FactorizedSolver, g=None) -> SolveState:
    """Run only the upward (particular solution) pass; returns the state."""
    n = solver.plan.n_gauss
    state = SolveState(u=np.zeros(n), w=np.zeros(n), tree=solver.tree,
                       p=solver.p, q=solver.q,
                       scratch={} if solver.mode == "econ" else None)
    solver._upward(state, g)
    return state


def downward_pass(solver: FactorizedSolver, f, state: SolveState) -> SolveState:
    """Complete a state produced by upward_pass with the Dirichlet sweep."""
    solver._downward(state, f)
    state.scratch = None
    return state


def solve(solver: FactorizedSolver, f=None, g=None) -> SolveState:
    """Both passes; equivalent to solver.solve(f, g)."""
    return solver.solve(f, g)
