"""Map the feasible set and its saturation classes, then render it.

Every cell of a grid over the state box is classified by solving the horizon
problem from it: infeasible, inside the terminal set, or feasible with the
first input at the lower bound / upper bound / strictly inside.

Run:  python demos/04_feasible_map.py          (writes demo_out/feasible_map.svg)
"""
import os
from collections import Counter

from satmpc import ExperimentConfig, benchmark_model, benchmark_ocp
from satmpc.experiments import approximate_feasible_boundary, render_grid_svg

spec = benchmark_ocp()
model = benchmark_model()
cfg = ExperimentConfig(n_samples=1, rng_seed=0)

RES = 31
print(f"classifying a {RES}x{RES} grid over the state box "
      f"({RES * RES} solves)...")
grid = approximate_feasible_boundary(spec, model, cfg, RES)

counts = Counter(grid["labels"].ravel())
total = RES * RES
print("\ncell classes:")
for label in ("infeasible", "lower", "upper", "other", "terminal"):
    c = counts.get(label, 0)
    print(f"  {label:10s} {c:5d}  ({100.0 * c / total:5.1f}%)")

os.makedirs("demo_out", exist_ok=True)
out = os.path.join("demo_out", "feasible_map.svg")
render_grid_svg(grid, spec, out)
print(f"\nwrote {out}")

# a text rendering, rows from high x2 to low, one character per cell
chars = {"infeasible": ".", "lower": "l", "upper": "u", "other": "o",
         "terminal": "T"}
print("\n  x2 high")
for j in range(RES - 1, -1, -1):
    print("  " + "".join(chars[grid["labels"][i, j]] for i in range(RES)))
print("  x2 low    (x1 runs left to right)")
