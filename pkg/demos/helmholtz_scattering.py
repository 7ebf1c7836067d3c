"""Variable-coefficient Helmholtz: accuracy versus local order q.

The operator is -Lap - kappa^2 (1 - c(x)) with a two-bump scattering
potential c and a Gaussian body load. There is no closed-form solution, so
the error is estimated against a solve on a twice-finer mesh at the
largest order (self-convergence). Low order resolves nothing at this
wavenumber; raising q recovers digits rapidly.

Scaled to kappa = 20 on an 8 x 8 mesh so the demo runs in seconds; pass
the full paper-scale study through some patience or the CLI:
    specdtn varcoef --out varcoef.csv
"""

from specdtn import build_stage, build_uniform_tree, catalog, linf_error
from specdtn.reference import ReferenceSolution

KAPPA = 20.0
N = 8
UNIT = (0.0, 1.0, 0.0, 1.0)

spec = catalog("varcoef_helmholtz", kappa=KAPPA)

ref_solver = build_stage(build_uniform_tree(UNIT, 2 * N), spec, 17, 16, mode="econ")
reference = ReferenceSolution.from_state(ref_solver.solve())
del ref_solver

print(f"kappa={KAPPA}, {N}x{N} leaves, reference on {2*N}x{2*N} at q=16")
print(f"{'q':>4} {'N':>8} {'linf error':>12}")
for q in (4, 8, 12, 16):
    tree = build_uniform_tree(UNIT, N)
    solver = build_stage(tree, spec, q + 1, q)
    err = linf_error(solver.solve(), reference)
    print(f"{q:>4} {(N * q + 1) ** 2:>8} {err:>12.3e}")
