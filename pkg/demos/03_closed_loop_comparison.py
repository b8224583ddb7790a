"""Classic NMPC vs saturated-prefix reuse on the same initial state.

The classic controller solves one NLP per step.  The reuse controller
inspects each solution: when the plan starts with a run of inputs pinned at
one bound, it applies those bound values open loop and skips the solves.

Run:  python demos/03_closed_loop_comparison.py
"""
import numpy as np

from satmpc import (CLASSIC, REUSE_SATURATED, ControllerMode, SolverConfig,
                    benchmark_model, benchmark_ocp, run_closed_loop)

spec = benchmark_ocp()
model = benchmark_model()
cfg = SolverConfig()
x0 = np.array([1.004, -0.6015])

classic = run_closed_loop(model, spec, cfg, x0, ControllerMode(CLASSIC))
reuse = run_closed_loop(model, spec, cfg, x0, ControllerMode(REUSE_SATURATED))

print(f"start: x0 = {x0}\n")
print("  k | classic u  solved | reuse u    solved")
print("  --+--------------------+------------------")
for k in range(max(len(classic.inputs), len(reuse.inputs))):
    cu = f"{classic.inputs[k][0]:+.4f}   {'yes' if classic.nlp_solved[k] else ' no'}" \
        if k < len(classic.inputs) else "   (done)"
    ru = f"{reuse.inputs[k][0]:+.4f}   {'yes' if reuse.nlp_solved[k] else ' no'}" \
        if k < len(reuse.inputs) else "   (done)"
    print(f"  {k:2d} | {cu:18s} | {ru}")

for name, res in (("classic", classic), ("reuse", reuse)):
    print(f"\n{name}: {res.status} after {len(res.inputs)} steps, "
          f"{res.n_nlp_solved} NLPs solved, accumulated cost {res.V_hat:.6f}")

saved = classic.n_nlp_solved - reuse.n_nlp_solved
extra = 100.0 * (reuse.V_hat - classic.V_hat) / classic.V_hat
print(f"\nreuse skipped {saved} solves "
      f"({100.0 * saved / classic.n_nlp_solved:.1f}%) "
      f"for {extra:+.2f}% cost difference")
