"""Box hierarchies, local refinement, and the Gauss-node merge plan.

A domain is a rectangle (or a glued union of rectangles) split into a
binary tree of boxes. Leaves carry q Gauss-Legendre nodes per edge; shared
conforming edges reference a single node set, while a refined/unrefined
interface keeps distinct fine and coarse sets linked 2:1. This module owns
all of that bookkeeping and precomputes, for every parent box, the index
partition its sibling merge will use, plus the interpolation layout for
nonconforming sides — the solver then only does linear algebra.

Coordinates stay exact: every cut is the midpoint of bounds that both
neighbours derive from the same ancestors, so shared edges compare equal
bitwise and can be used directly as dictionary keys.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .spectral import SOUTH, EAST, NORTH, WEST, SIDE_NAMES, Interval

__all__ = [
    "Rect",
    "BoxNode",
    "DomainTree",
    "RefinementSpec",
    "MeshSpec",
    "MeshConformityError",
    "build_uniform_tree",
    "build_forest",
    "build_mesh",
    "refine_near_point",
    "enumerate_gauss_nodes",
    "classify_edges",
    "count_chebyshev_dofs",
    "MergePlan",
]


class MeshConformityError(RuntimeError):
    """The mesh violates an assumption the merge machinery relies on."""


@dataclass(frozen=True)
class Rect:
    x1lo: float
    x1hi: float
    x2lo: float
    x2hi: float

    def __post_init__(self):
        if not (self.x1lo < self.x1hi and self.x2lo < self.x2hi):
            raise ValueError(f"degenerate rectangle {self.as_tuple()}")

    def as_tuple(self):
        return (self.x1lo, self.x1hi, self.x2lo, self.x2hi)

    @property
    def width(self) -> float:
        return self.x1hi - self.x1lo

    @property
    def height(self) -> float:
        return self.x2hi - self.x2lo

    def contains(self, pt) -> bool:
        x, y = pt
        return (self.x1lo <= x <= self.x1hi) and (self.x2lo <= y <= self.x2hi)

    def distance_to(self, pt) -> float:
        """Euclidean distance from pt to the closed rectangle (0 inside)."""
        x, y = pt
        dx = max(self.x1lo - x, 0.0, x - self.x1hi)
        dy = max(self.x2lo - y, 0.0, y - self.x2hi)
        return math.hypot(dx, dy)

    def side_interval(self, side: int) -> tuple[float, float, float]:
        """(line, lo, hi) of one side; lo/hi run along the side."""
        if side == SOUTH:
            return self.x2lo, self.x1lo, self.x1hi
        if side == NORTH:
            return self.x2hi, self.x1lo, self.x1hi
        if side == WEST:
            return self.x1lo, self.x2lo, self.x2hi
        if side == EAST:
            return self.x1hi, self.x2lo, self.x2hi
        raise ValueError(f"bad side {side}")


class BoxNode:
    """One box in the hierarchy.

    ``union`` marks glue nodes whose region is a union of rectangles (their
    ``bounds`` is only the bounding box). ``refined`` marks boxes that were
    leaves until local refinement split them 2x2; these are the (only)
    candidates for nonconforming-edge wrapping.
    """

    __slots__ = ("id", "bounds", "parent", "children", "level", "refined", "union")

    def __init__(self, id, bounds, parent, level, union=False):
        self.id = id
        self.bounds = bounds
        self.parent = parent
        self.children = []
        self.level = level
        self.refined = False
        self.union = union

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __repr__(self):
        kind = "leaf" if self.is_leaf else "box"
        return f"<{kind} {self.id} {self.bounds.as_tuple()} level={self.level}>"


def _cut(rect: Rect) -> tuple[Rect, Rect]:
    """Halve the rectangle across its longer extent (ties cut x1)."""
    if rect.width >= rect.height:
        mid = 0.5 * (rect.x1lo + rect.x1hi)
        return (Rect(rect.x1lo, mid, rect.x2lo, rect.x2hi),
                Rect(mid, rect.x1hi, rect.x2lo, rect.x2hi))
    mid = 0.5 * (rect.x2lo + rect.x2hi)
    return (Rect(rect.x1lo, rect.x1hi, rect.x2lo, mid),
            Rect(rect.x1lo, rect.x1hi, mid, rect.x2hi))


class DomainTree:
    """Binary hierarchy over one or more rectangles.

    Node ids are topological: a parent's id is always smaller than its
    children's, so iterating ids in reverse visits children before parents.
    """

    def __init__(self):
        self.nodes: list[BoxNode] = []
        self.root: int | None = None
        self.mesh_spec: MeshSpec | None = None

    def add_node(self, bounds, parent, level, union=False) -> BoxNode:
        node = BoxNode(len(self.nodes), bounds, parent, level, union)
        self.nodes.append(node)
        if parent is not None:
            self.nodes[parent].children.append(node.id)
        return node

    def leaves(self) -> list[BoxNode]:
        return [n for n in self.nodes if n.is_leaf]

    def split(self, node_id: int) -> tuple[BoxNode, BoxNode]:
        node = self.nodes[node_id]
        if not node.is_leaf:
            raise ValueError(f"box {node_id} is not a leaf")
        lo, hi = _cut(node.bounds)
        return (self.add_node(lo, node_id, node.level + 1),
                self.add_node(hi, node_id, node.level + 1))

    def descend(self, pt) -> BoxNode:
        """Leaf whose closed box contains pt (ties resolve to the first child)."""
        node = self.nodes[self.root]
        if not (node.union or node.bounds.contains(pt)):
            raise ValueError(f"point {pt} outside the domain")
        while not node.is_leaf:
            for cid in node.children:
                child = self.nodes[cid]
                if child.union or child.bounds.contains(pt):
                    node = child
                    break
            else:
                raise ValueError(f"point {pt} outside the domain")
        return node

    def renumber(self):
        """Reassign ids in breadth-first order from the root (parent < child)."""
        order = [self.root]
        for nid in order:
            order.extend(self.nodes[nid].children)
        remap = {old: new for new, old in enumerate(order)}
        new_nodes = [None] * len(self.nodes)
        for old, node in enumerate(self.nodes):
            node.id = remap[old]
            node.parent = None if node.parent is None else remap[node.parent]
            node.children = [remap[c] for c in node.children]
            new_nodes[node.id] = node
        self.nodes = new_nodes
        self.root = 0


@dataclass(frozen=True)
class RefinementSpec:
    """n_ref rounds of 2x2 splitting around target, with closeness factor t.

    A leaf of half-side l is split when its distance to the target is at
    most t*l; the default t = sqrt(2) also splits every leaf whose closed
    box contains the target (distance zero).
    """

    target: tuple
    levels: int
    threshold: float = math.sqrt(2.0)

    def __post_init__(self):
        if self.levels < 0:
            raise ValueError("refinement levels must be >= 0")
        if not self.threshold > 0:
            raise ValueError("refinement threshold must be positive")


@dataclass
class MeshSpec:
    """Serializable mesh description: rectangles, depth, refinements, gluing.

    For a single rectangle the merge script is empty. For a union domain,
    script entry (a, b) merges assemblies a and b (0..len(rects)-1 are the
    rectangle trees, len(rects)+k is the result of script entry k).
    """

    rects: list
    n: int
    refinements: list = field(default_factory=list)
    merge_script: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "rects": [list(Rect(*r).as_tuple()) if not isinstance(r, Rect) else list(r.as_tuple())
                      for r in self.rects],
            "n": self.n,
            "refinements": [
                {"target": list(r.target), "levels": r.levels, "threshold": r.threshold}
                for r in self.refinements
            ],
            "merge_script": [list(pair) for pair in self.merge_script],
        }, indent=2)

    @staticmethod
    def from_json(text: str) -> "MeshSpec":
        doc = json.loads(text)
        return MeshSpec(
            rects=[tuple(r) for r in doc["rects"]],
            n=doc["n"],
            refinements=[
                RefinementSpec(tuple(r["target"]), r["levels"], r.get("threshold", math.sqrt(2.0)))
                for r in doc.get("refinements", [])
            ],
            merge_script=[tuple(p) for p in doc.get("merge_script", [])],
        )


def _depth_for(n: int) -> int:
    if n < 1 or (n & (n - 1)):
        raise ValueError(f"leaves-per-side n must be a power of two, got {n}")
    return 2 * int(round(math.log2(n)))


def _grow_uniform(tree: DomainTree, root_id: int, depth: int):
    frontier = [root_id]
    for _ in range(depth):
        nxt = []
        for nid in frontier:
            a, b = tree.split(nid)
            nxt.extend((a.id, b.id))
        frontier = nxt


def build_uniform_tree(domain, n: int) -> DomainTree:
    """Binary tree over one rectangle with n^2 equal leaves (n a power of 2).

    Cuts alternate across the longer extent, so a square domain ends with
    square leaves of side width/n at level 2*log2(n).
    """
    domain = domain if isinstance(domain, Rect) else Rect(*domain)
    depth = _depth_for(n)
    tree = DomainTree()
    tree.add_node(domain, None, 0)
    tree.root = 0
    _grow_uniform(tree, 0, depth)
    tree.mesh_spec = MeshSpec(rects=[domain.as_tuple()], n=n)
    return tree


def build_forest(rects, n: int, merge_script=None) -> DomainTree:
    """Union-of-rectangles domain: per-rectangle trees glued by a merge script.

    Each rectangle gets its own uniform tree of depth 2*log2(n); the script
    then introduces glue parents pairwise. The default script folds left:
    (0,1), (result,2), ... Rectangles must abut along matching coordinates;
    a merge whose children share no Gauss nodes is rejected later, when the
    nodes are enumerated.
    """
    rects = [r if isinstance(r, Rect) else Rect(*r) for r in rects]
    if not rects:
        raise ValueError("need at least one rectangle")
    depth = _depth_for(n)
    tree = DomainTree()
    assembly = []
    for r in rects:
        root = tree.add_node(r, None, 0)
        assembly.append(root.id)
        _grow_uniform(tree, root.id, depth)
    if merge_script is None:
        merge_script = [(0, 1)]
        for k in range(2, len(rects)):
            merge_script.append((len(rects) + k - 2, k))
    merge_script = [tuple(p) for p in merge_script]
    for a, b in merge_script:
        ida, idb = assembly[a], assembly[b]
        ba, bb = tree.nodes[ida].bounds, tree.nodes[idb].bounds
        bbox = Rect(min(ba.x1lo, bb.x1lo), max(ba.x1hi, bb.x1hi),
                    min(ba.x2lo, bb.x2lo), max(ba.x2hi, bb.x2hi))
        glue = tree.add_node(bbox, None, min(tree.nodes[ida].level, tree.nodes[idb].level) - 1,
                             union=True)
        tree.nodes[ida].parent = glue.id
        tree.nodes[idb].parent = glue.id
        glue.children = [ida, idb]
        assembly.append(glue.id)
    roots = [nd.id for nd in tree.nodes if nd.parent is None]
    if len(roots) != 1:
        raise ValueError("merge script must glue the forest into a single tree")
    tree.root = roots[0]
    tree.renumber()
    tree.mesh_spec = MeshSpec(rects=[r.as_tuple() for r in rects], n=n,
                              merge_script=merge_script)
    return tree


def refine_near_point(tree: DomainTree, spec: RefinementSpec) -> DomainTree:
    """Split leaves near spec.target into 2x2, spec.levels rounds, in place.

    Each round re-evaluates closeness against the current leaves, so the
    refinement cascades geometrically toward the target. The 2x2 split is
    realized as two binary levels (the standard cut applied twice), keeping
    every merge strictly binary.
    """
    target = tuple(spec.target)
    if not any(leaf.bounds.contains(target) for leaf in tree.leaves()):
        raise ValueError(f"refinement target {target} outside the domain")
    for _ in range(spec.levels):
        close = []
        for leaf in tree.leaves():
            half = 0.5 * max(leaf.bounds.width, leaf.bounds.height)
            if leaf.bounds.distance_to(target) <= spec.threshold * half:
                close.append(leaf.id)
        for nid in close:
            tree.nodes[nid].refined = True
            a, b = tree.split(nid)
            tree.split(a.id)
            tree.split(b.id)
    if tree.mesh_spec is not None:
        tree.mesh_spec.refinements.append(spec)
    return tree


def build_mesh(mesh_spec: MeshSpec) -> DomainTree:
    """Deterministically rebuild a tree from its serializable description."""
    if len(mesh_spec.rects) == 1 and not mesh_spec.merge_script:
        tree = build_uniform_tree(Rect(*mesh_spec.rects[0]), mesh_spec.n)
    else:
        tree = build_forest(mesh_spec.rects, mesh_spec.n, mesh_spec.merge_script)
    tree.mesh_spec = MeshSpec(rects=list(mesh_spec.rects), n=mesh_spec.n)
    if mesh_spec.merge_script:
        tree.mesh_spec.merge_script = list(mesh_spec.merge_script)
    for rspec in mesh_spec.refinements:
        refine_near_point(tree, rspec)
    return tree


# ---------------------------------------------------------------------------
# Gauss-node enumeration and the merge plan


class Segment:
    """One leaf-edge interval carrying q Gauss nodes.

    axis 0: runs along x1 (a south/north edge at x2 == line);
    axis 1: runs along x2 (an east/west edge at x1 == line).
    Global node indices are start .. start+q-1, ascending along the run.
    A conforming shared edge is a single segment with two adjacent leaves.
    On a 2:1 interface the coarse segment records its two fine halves in
    ``fine`` and each half points back through ``coarse``.
    """

    __slots__ = ("index", "axis", "line", "lo", "hi", "start", "adj", "coarse", "fine")

    def __init__(self, index, axis, line, lo, hi):
        self.index = index
        self.axis = axis
        self.line = line
        self.lo = lo
        self.hi = hi
        self.start = -1
        self.adj = []
        self.coarse = None
        self.fine = None

    @property
    def is_boundary(self) -> bool:
        return len(self.adj) == 1 and self.coarse is None and self.fine is None

    def nodes(self, q: int) -> np.ndarray:
        return np.arange(self.start, self.start + q)


@dataclass
class WrapPlan:
    """Per-side interpolation layout for one refined parent.

    ``perm`` reorders the merge-order exterior into side-blocked fine order
    (S, E, N, W, ascending within each side). ``blocks`` lists, in that
    order, ('identity', m) runs and ('interp',) runs (one 2q fine pair onto
    q coarse nodes). ``fine`` and ``ext`` are the global indices before and
    after wrapping, in side-blocked order.
    """

    perm: np.ndarray
    blocks: list
    fine: np.ndarray
    ext: np.ndarray
    side_of_block: list


@dataclass
class NodePlan:
    """Index data one box contributes to the build and solve sweeps."""

    ext: np.ndarray                 # exterior Gauss indices, post-wrap order
    ext_mergeorder: np.ndarray      # [J1; J2] order (leaves: == ext)
    j1: np.ndarray | None = None
    j2: np.ndarray | None = None
    j3: np.ndarray | None = None
    pos1_a: np.ndarray | None = None
    pos3_a: np.ndarray | None = None
    pos2_b: np.ndarray | None = None
    pos3_b: np.ndarray | None = None
    wrap: WrapPlan | None = None


class MergePlan:
    """Global Gauss skeleton plus per-node index sets for the tree.

    Attributes:
        coords: (N, 2) Gauss node coordinates.
        segments: list of Segment (node j lives on segments[j // q]).
        node: dict box id -> NodePlan. For a parent, ext_mergeorder is
            J1+J2 and j3 the eliminated interface; for the root, ext is the
            domain boundary skeleton.
        seg_of: dict (leaf id, side) -> segment index (edge provenance).
    """

    def __init__(self, tree, q, coords, segments, seg_of, node_plans):
        self.tree = tree
        self.q = q
        self.coords = coords
        self.segments = segments
        self.seg_of = seg_of
        self.node = node_plans

    @property
    def n_gauss(self) -> int:
        return self.coords.shape[0]

    def root_exterior(self) -> np.ndarray:
        return self.node[self.tree.root].ext

    def boundary_segments(self) -> list[Segment]:
        return [s for s in self.segments if s.is_boundary]


def _collect_segments(tree: DomainTree, q: int):
    segments: list[Segment] = []
    by_key: dict = {}
    seg_of: dict = {}
    for leaf in tree.leaves():
        for side in (SOUTH, EAST, NORTH, WEST):
            line, lo, hi = leaf.bounds.side_interval(side)
            axis = 0 if side in (SOUTH, NORTH) else 1
            key = (axis, line, lo, hi)
            seg = by_key.get(key)
            if seg is None:
                seg = Segment(len(segments), axis, line, lo, hi)
                segments.append(seg)
                by_key[key] = seg
            if len(seg.adj) >= 2:
                raise MeshConformityError(
                    f"edge {key} touched by more than two leaves")
            seg.adj.append((leaf.id, side))
            seg_of[(leaf.id, side)] = seg.index
    return segments, seg_of


def _link_segments(segments: list[Segment]):
    """Pair each coarse segment with the two fine halves that tile it.

    Any other overlap pattern means the mesh has a refinement ratio above
    2:1 across an edge, which the interpolation machinery cannot express.
    """
    lines: dict = {}
    for seg in segments:
        lines.setdefault((seg.axis, seg.line), []).append(seg)
    for (axis, line), segs in lines.items():
        segs.sort(key=lambda s: (s.lo, -(s.hi - s.lo)))
        i = 0
        while i < len(segs):
            s = segs[i]
            if i + 1 < len(segs) and segs[i + 1].lo < s.hi:
                f1, f2 = segs[i + 1], (segs[i + 2] if i + 2 < len(segs) else None)
                mid = 0.5 * (s.lo + s.hi)
                ok = (f2 is not None and f1.lo == s.lo and f1.hi == mid
                      and f2.lo == mid and f2.hi == s.hi
                      and len(s.adj) == 1 and len(f1.adj) == 1 and len(f2.adj) == 1)
                if not ok:
                    raise MeshConformityError(
                        f"edge at axis={axis} line={line} spans [{s.lo}, {s.hi}] "
                        "with a refinement ratio above 2:1; only one level of "
                        "mismatch per edge is supported")
                s.fine = (f1.index, f2.index)
                f1.coarse = s.index
                f2.coarse = s.index
                i += 3
            else:
                i += 1


def _side_of_segment(seg: Segment, bounds: Rect) -> int:
    if seg.axis == 0:
        if seg.line == bounds.x2lo:
            return SOUTH
        if seg.line == bounds.x2hi:
            return NORTH
    else:
        if seg.line == bounds.x1lo:
            return WEST
        if seg.line == bounds.x1hi:
            return EAST
    raise MeshConformityError(
        f"segment at line {seg.line} is not on the boundary of {bounds.as_tuple()}")


def _wrap_plan(node: BoxNode, ext_mo: np.ndarray, segments, q: int) -> WrapPlan | None:
    # exteriors are always concatenations of whole segments (q nodes each)
    seg_ids = ext_mo[::q] // q
    # group this box's exterior segments by side, ascending along each side
    per_side = {s: [] for s in (SOUTH, EAST, NORTH, WEST)}
    for pos, sid in enumerate(seg_ids):
        seg = segments[sid]
        per_side[_side_of_segment(seg, node.bounds)].append((seg.lo, pos, seg))
    blocks = []
    side_of_block = []
    fine_parts = []
    ext_parts = []
    any_interp = False
    for side in (SOUTH, EAST, NORTH, WEST):
        entries = sorted(per_side[side], key=lambda e: e[0])
        i = 0
        while i < len(entries):
            _, pos, seg = entries[i]
            paired = (seg.coarse is not None and i + 1 < len(entries)
                      and entries[i + 1][2].coarse == seg.coarse
                      and seg.lo == segments[seg.coarse].lo)
            if paired:
                coarse = segments[seg.coarse]
                blocks.append(("interp",))
                side_of_block.append(side)
                fine_parts.append(np.concatenate([seg.nodes(q), entries[i + 1][2].nodes(q)]))
                ext_parts.append(coarse.nodes(q))
                any_interp = True
                i += 2
            else:
                if seg.coarse is not None:
                    raise MeshConformityError(
                        f"box {node.id}: fine edge segment [{seg.lo}, {seg.hi}] has a "
                        "coarse partner but its sibling half is missing from the side")
                blocks.append(("identity", q))
                side_of_block.append(side)
                fine_parts.append(seg.nodes(q))
                ext_parts.append(seg.nodes(q))
                i += 1
    if not any_interp:
        return None
    fine = np.concatenate(fine_parts)
    order = np.argsort(ext_mo, kind="stable")
    perm = order[np.searchsorted(ext_mo[order], fine)]
    return WrapPlan(perm=perm, blocks=blocks, fine=fine,
                    ext=np.concatenate(ext_parts), side_of_block=side_of_block)


def enumerate_gauss_nodes(tree: DomainTree, q: int) -> MergePlan:
    """Place q Gauss nodes per leaf edge and derive every box's index sets.

    Conforming shared edges reference one shared node set; 2:1 interfaces
    keep distinct fine and coarse sets, linked so that refined parents can
    re-express their boundary operators on the coarse neighbour's nodes.
    Returns the MergePlan consumed by the build and solve stages.
    """
    if q < 2:
        raise ValueError(f"need q >= 2 Gauss nodes per edge, got {q}")
    segments, seg_of = _collect_segments(tree, q)
    _link_segments(segments)
    coords = np.empty((len(segments) * q, 2))
    for seg in segments:
        seg.start = seg.index * q
        run = spectral.gauss_nodes(q, Interval(seg.lo, seg.hi)).nodes
        sl = slice(seg.start, seg.start + q)
        coords[sl, seg.axis] = run
        coords[sl, 1 - seg.axis] = seg.line
    node_plans: dict[int, NodePlan] = {}
    for nid in range(len(tree.nodes) - 1, -1, -1):
        node = tree.nodes[nid]
        if node.is_leaf:
            ext = np.concatenate([segments[seg_of[(nid, side)]].nodes(q)
                                  for side in (SOUTH, EAST, NORTH, WEST)])
            node_plans[nid] = NodePlan(ext=ext, ext_mergeorder=ext)
            continue
        if len(node.children) != 2:
            raise MeshConformityError(f"box {nid} has {len(node.children)} children")
        ca, cb = node.children
        ea, eb = node_plans[ca].ext, node_plans[cb].ext
        shared_a = np.isin(ea, eb)
        pos3_a = np.nonzero(shared_a)[0]
        pos1_a = np.nonzero(~shared_a)[0]
        j3 = ea[pos3_a]
        if j3.size == 0:
            raise MeshConformityError(
                f"boxes {ca} and {cb} share no interface nodes; check the merge script")
        order_b = np.argsort(eb, kind="stable")
        pos3_b = order_b[np.searchsorted(eb[order_b], j3)]
        mask_b = np.zeros(eb.size, dtype=bool)
        mask_b[pos3_b] = True
        pos2_b = np.nonzero(~mask_b)[0]
        j1, j2 = ea[pos1_a], eb[pos2_b]
        ext_mo = np.concatenate([j1, j2])
        plan = NodePlan(ext=ext_mo, ext_mergeorder=ext_mo, j1=j1, j2=j2, j3=j3,
                        pos1_a=pos1_a, pos3_a=pos3_a, pos2_b=pos2_b, pos3_b=pos3_b)
        if node.refined:
            plan.wrap = _wrap_plan(node, ext_mo, segments, q)
            if plan.wrap is not None:
                plan.ext = plan.wrap.ext
        node_plans[nid] = plan
    return MergePlan(tree, q, coords, segments, seg_of, node_plans)


def classify_edges(plan: MergePlan) -> list[tuple[tuple[int, int], str]]:
    """Classify each side of each merged (parent) box.

    Returns [(box id, side), label] entries with label 'boundary' (side on
    the domain boundary, or no aligned peer), 'conforming' (nodes shared
    with the adjacent region), or 'nonconforming' (side carries a 2:1 fine
    pair that needs interpolation). Union glue boxes are skipped.
    """
    q = plan.q
    out = []
    for node in plan.tree.nodes:
        if node.is_leaf or node.union:
            continue
        entry = plan.node[node.id]
        per_side: dict[int, list[Segment]] = {s: [] for s in range(4)}
        for sid in np.unique(entry.ext_mergeorder // q):
            seg = plan.segments[sid]
            per_side[_side_of_segment(seg, node.bounds)].append(seg)
        for side in (SOUTH, EAST, NORTH, WEST):
            segs = per_side[side]
            if not segs:
                continue
            if any(s.coarse is not None for s in segs):
                label = "nonconforming"
            elif all(s.is_boundary for s in segs):
                label = "boundary"
            else:
                label = "conforming"
            out.append(((node.id, side), label))
    return out


def count_chebyshev_dofs(tree: DomainTree, p: int) -> int:
    """Number of distinct Chebyshev nodes over all leaf tensor grids.

    Shared conforming edges contribute each node once (their coordinates
    agree bitwise by construction). On a uniform n x n grid this equals
    (n*(p-1) + 1)^2.
    """
    pts = []
    for leaf in tree.leaves():
        b = leaf.bounds
        cx = spectral.chebyshev_nodes(p, Interval(b.x1lo, b.x1hi)).nodes
        cy = spectral.chebyshev_nodes(p, Interval(b.x2lo, b.x2hi)).nodes
        pts.append(spectral.tensor_points(cx, cy))
    allpts = np.concatenate(pts)
    return np.unique(allpts[:, 0] + 1j * allpts[:, 1]).size
