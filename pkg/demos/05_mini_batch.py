"""A miniature version of the full benchmark study (fast enough to watch).

Draws 150 feasible initial states, compares the classic and reuse
controllers on each (nominal and disturbed), classifies a coarse grid, and
writes every report file into demo_out/mini_batch/.

The full-size study (5000 samples, 61x61 grid) is the `satmpc batch`
command; this is the same pipeline at toy scale.

Run:  python demos/05_mini_batch.py
"""
from satmpc import ExperimentConfig, benchmark_model, benchmark_ocp, run_full_pipeline

spec = benchmark_ocp()
model = benchmark_model()
cfg = ExperimentConfig(n_samples=150, rng_seed=0, disturbed=True,
                       grid_resolution=21, output_dir="demo_out/mini_batch")

print("running the pipeline (sampling, paired runs, disturbed runs, grid)...")
result = run_full_pipeline(spec, model, cfg)

samples = result["samples"]
total = len(samples)
print(f"\nsampled {total} feasible states:")
for label in ("lower", "upper", "other"):
    c = sum(s.label == label for s in samples)
    print(f"  first input {label:5s}: {c:4d}  ({100.0 * c / total:.1f}%)")

for scenario, by_group in result["stats"].items():
    print(f"\n{scenario}:")
    for gname, st in by_group.items():
        if st.n_samples == 0:
            continue
        print(f"  {gname:15s} n={st.n_samples:4d}  "
              f"NLPs {st.mean_nlp_classic:7.4f} -> {st.mean_nlp_heuristic:7.4f} "
              f"(saved {st.nlp_saving_pct:6.3f}%)  "
              f"cost {st.cost_delta_pct:+.4f}%"
              + (f"  excluded={st.n_excluded_infeasible}"
                 if st.n_excluded_infeasible else ""))

if result["exemplar"] is not None:
    ex = result["exemplar"]
    win = ex["reuse"].windows[0][1]
    print(f"\nexemplar trajectory: reuse window of {win.length} steps; "
          f"classic solved {ex['classic'].n_nlp_solved} NLPs, "
          f"reuse solved {ex['reuse'].n_nlp_solved}")

print(f"\nwrote {len(result['paths'])} files to {cfg.output_dir}:")
for p in result["paths"]:
    print(f"  {p}")
