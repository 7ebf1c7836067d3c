"""Implicit time stepping with one reusable elliptic factorization.

Crank-Nicolson turns du/dt = Lap u into one elliptic solve per step with a
fixed operator, so the hierarchical factorization is built once and then
applied at every step. The manufactured mode u = exp(-2 pi^2 t) sin sin
makes the spatial error negligible; the observed error halves twice per
halving of the step (second order in k).
"""

import numpy as np

from specdtn import TimeStepConfig, build_uniform_tree, cn_run, linf_error
from specdtn.experiments import heat_exact, heat_problem
from specdtn.reference import ReferenceSolution

T_END = 0.1
problem = heat_problem()

print(f"{'k':>8} {'steps':>6} {'builds':>7} {'ms/step':>8} {'error(t=0.1)':>13}")
errs, ks = [], [1 / 40, 1 / 80, 1 / 160, 1 / 320]
for k in ks:
    tree = build_uniform_tree((0.0, 1.0, 0.0, 1.0), 8)
    run = cn_run(problem, tree, TimeStepConfig(k, T_END, (T_END,)), p=9, q=8)
    ref = ReferenceSolution.analytic(lambda pts: heat_exact(pts, T_END))
    err = linf_error(run.states[T_END], ref)
    errs.append(err)
    print(f"{k:>8.4f} {len(run.step_seconds):>6} {run.build_count:>7} "
          f"{1e3 * np.mean(run.step_seconds):>8.2f} {err:>13.3e}")

slope = np.polyfit(np.log(ks), np.log(errs), 1)[0]
print(f"\nfitted order in k: {slope:.2f} (Crank-Nicolson is 2)")
