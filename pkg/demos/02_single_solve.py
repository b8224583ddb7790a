"""Solve one horizon problem and inspect the solution's active set.

From states deep in the feasible set the optimizer is interior; from states
near the boundary the first inputs pin to a bound.  That bound pattern is
what the reuse controller later exploits.

Run:  python demos/02_single_solve.py
"""
import numpy as np

from satmpc import (SolverConfig, benchmark_model, benchmark_ocp,
                    saturated_prefix, solve)

spec = benchmark_ocp()
model = benchmark_model()
cfg = SolverConfig()

print(f"horizon N={spec.N}, input box [{spec.u_lower[0]}, {spec.u_upper[0]}], "
      f"terminal set x'Px <= {spec.alpha}")

for x0 in (np.array([0.3, -0.3]), np.array([1.004, -0.6015])):
    sol = solve(spec, model, x0, cfg)
    print(f"\nx0 = {x0}")
    print(f"  status={sol.status}  V*={sol.V_star:.6f}  "
          f"kkt={sol.kkt_residual:.2e}  feas={sol.feas_violation:.2e}")
    with np.printoptions(precision=4, suppress=True):
        print(f"  U* = {sol.U_star}")
    low = sol.active_set.input_lower[:, 0]
    up = sol.active_set.input_upper[:, 0]
    marks = "".join("L" if l else "U" if u else "." for l, u in zip(low, up))
    print(f"  active input bounds over the horizon: {marks}")
    win = saturated_prefix(sol.active_set, spec)
    if win is None:
        print("  no reuse window: the first input is not saturated")
    else:
        print(f"  reuse window: side={win.bound_side[0]}, "
              f"{win.length} future steps can skip their solves")
