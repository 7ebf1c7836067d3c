"""Binary persistence of a built solver.

Layout (all integers little-endian):

    magic  b"SDTNARC1"
    u64 header length | header JSON bytes | u32 crc32(header)
    per array section, in header order:
        u64 payload length | raw array bytes | u32 crc32(payload)

The header records the mode, orders, the serialized mesh description, the
problem's catalog key, and every array's key/dtype/shape. Geometry is
rebuilt deterministically from the mesh description on load, so index sets
match bit for bit and a loaded solver reproduces in-memory solves exactly.
Economy-mode archives omit all leaf operators (they are refactored at
solve time) and therefore require a catalog-reconstructible problem.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .geometry import MeshSpec, build_mesh, enumerate_gauss_nodes
from .model import catalog
from .solver import FactorizedSolver, ParentOperators, assemble_wrap_operators
from . import leaf as leaf_mod

__all__ = ["ArchiveError", "persist_operators", "load_operators"]

MAGIC = b"SDTNARC1"


class ArchiveError(RuntimeError):
    """Archive is malformed, truncated, or from an incompatible version."""


def _mem_order(arr: np.ndarray) -> str:
    """Memory layout to preserve: LAPACK outputs are Fortran ordered, and
    reloading them in a different order would change the BLAS summation
    path (and hence the last bits) of later solves."""
    return "F" if (arr.flags.f_contiguous and not arr.flags.c_contiguous) else "C"


def _solver_arrays(solver: FactorizedSolver) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for nid, ops in solver.leaf_ops.items():
        arrays[f"leaf/{nid}/S"] = ops.S
        arrays[f"leaf/{nid}/F"] = ops.F
        arrays[f"leaf/{nid}/H"] = ops.H
    for nid, ops in solver.parent_ops.items():
        arrays[f"parent/{nid}/lu"] = ops.lu_piv[0]
        arrays[f"parent/{nid}/piv"] = ops.lu_piv[1]
        arrays[f"parent/{nid}/S"] = ops.s_gi_ge
        arrays[f"parent/{nid}/Tei"] = ops.t_ei
    # archives are little-endian regardless of host byte order
    for key, arr in arrays.items():
        if arr.dtype.byteorder == ">":
            arrays[key] = arr.astype(arr.dtype.newbyteorder("<"))
    return arrays


def persist_operators(solver: FactorizedSolver, path) -> None:
    """Write the solver to ``path`` (bit-exact, checksummed sections)."""
    if solver.tree.mesh_spec is None:
        raise ArchiveError("solver's tree carries no mesh description")
    spec_key = solver.spec.catalog_key
    if spec_key is None and solver.mode == "econ":
        raise ArchiveError(
            "economy-mode archives need a catalog-reconstructible problem "
            "(coefficient callables cannot be serialized)")
    arrays = _solver_arrays(solver)
    order = sorted(arrays)
    header = {
        "version": 1,
        "mode": solver.mode,
        "p": solver.p,
        "q": solver.q,
        "mesh": json.loads(solver.tree.mesh_spec.to_json()),
        "spec": None if spec_key is None else {"name": spec_key[0],
                                               "params": spec_key[1]},
        "build_seconds": solver.build_seconds,
        "arrays": [{"key": k,
                    "dtype": arrays[k].dtype.str,
                    "shape": list(arrays[k].shape),
                    "order": _mem_order(arrays[k])} for k in order],
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        blob = json.dumps(header).encode()
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(blob)))
        for key in order:
            arr = arrays[key]
            if not (arr.flags.c_contiguous or arr.flags.f_contiguous):
                arr = np.ascontiguousarray(arr)
            payload = arr.tobytes(order="A")
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload)))


def _read_exact(fh, size: int, what: str) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise ArchiveError(f"archive truncated while reading {what}")
    return data


def load_operators(path, spec=None) -> FactorizedSolver:
    """Rebuild a solver from an archive written by persist_operators.

    A ProblemSpec may be passed explicitly for stored-mode archives whose
    problem was not catalog-built (only load/solve data tabulation uses
    it); otherwise the archived catalog key is replayed.
    """
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC), "magic") != MAGIC:
            raise ArchiveError("not a solver archive (bad magic)")
        (hlen,) = struct.unpack("<Q", _read_exact(fh, 8, "header length"))
        blob = _read_exact(fh, hlen, "header")
        (crc,) = struct.unpack("<I", _read_exact(fh, 4, "header checksum"))
        if zlib.crc32(blob) != crc:
            raise ArchiveError("header checksum mismatch")
        header = json.loads(blob)
        if header.get("version") != 1:
            raise ArchiveError(f"unsupported archive version {header.get('version')}")
        arrays: dict[str, np.ndarray] = {}
        for meta in header["arrays"]:
            (plen,) = struct.unpack("<Q", _read_exact(fh, 8, meta["key"]))
            payload = _read_exact(fh, plen, meta["key"])
            (crc,) = struct.unpack("<I", _read_exact(fh, 4, meta["key"] + " checksum"))
            if zlib.crc32(payload) != crc:
                raise ArchiveError(f"checksum mismatch in section {meta['key']}")
            arr = np.frombuffer(payload, dtype=np.dtype(meta["dtype"]))
            arr = arr.reshape(meta["shape"], order=meta.get("order", "C"))
            arrays[meta["key"]] = arr.copy(order="A")

    mesh = MeshSpec.from_json(json.dumps(header["mesh"]))
    tree = build_mesh(mesh)
    plan = enumerate_gauss_nodes(tree, header["q"])
    if spec is None:
        if header["spec"] is None:
            raise ArchiveError(
                "archive has no catalog key; pass the problem spec explicitly")
        spec = catalog(header["spec"]["name"], **header["spec"]["params"])
    solver = FactorizedSolver(tree, plan, spec, header["p"], header["q"],
                              header["mode"])
    solver.build_seconds = header.get("build_seconds", 0.0)
    for node in tree.nodes:
        nid = node.id
        if node.is_leaf:
            if solver.mode == "stored":
                try:
                    solver.leaf_ops[nid] = leaf_mod.LeafOperators(
                        S=arrays[f"leaf/{nid}/S"], T=None,
                        F=arrays[f"leaf/{nid}/F"], H=arrays[f"leaf/{nid}/H"],
                        rcond=np.nan)
                except KeyError as exc:
                    raise ArchiveError(f"archive is missing section {exc}") from None
            continue
        try:
            pops = ParentOperators(
                lu_piv=(arrays[f"parent/{nid}/lu"],
                        arrays[f"parent/{nid}/piv"].astype(np.int32)),
                s_gi_ge=arrays[f"parent/{nid}/S"],
                t_ei=arrays[f"parent/{nid}/Tei"])
        except KeyError as exc:
            raise ArchiveError(f"archive is missing section {exc}") from None
        entry = plan.node[nid]
        if entry.wrap is not None:
            pops.wrap = assemble_wrap_operators(entry.wrap, header["q"])
        solver.parent_ops[nid] = pops
    return solver
