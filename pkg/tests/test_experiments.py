"""Batch harness: sampling, paired comparisons, aggregation, reports."""
import json

import numpy as np
import pytest

from satmpc import (BatchStats, ClassifiedSample, ControllerMode,
                    DisturbanceBounds, ExperimentConfig, OcpSpec,
                    approximate_feasible_boundary, disturbance_sequence,
                    emit_reports, run_batch, run_closed_loop,
                    run_disturbed_batch, run_full_pipeline, sample_feasible)
from satmpc.control import CLASSIC, REUSE_SATURATED
from satmpc.experiments import (CLASS_INFEASIBLE, CLASS_LOWER, CLASS_OTHER,
                                CLASS_TERMINAL, CLASS_UPPER, GROUP_ALL,
                                GROUP_LOWER, GROUP_UPPER, config_hash,
                                read_grid_csv, read_runs_csv, read_samples_csv,
                                select_exemplar, write_grid_csv, write_runs_csv,
                                write_samples_csv, write_table1)

SEED = 0
N_SAMPLES = 40


@pytest.fixture(scope="module")
def experiment_cfg():
    return ExperimentConfig(n_samples=N_SAMPLES, rng_seed=SEED, max_steps=200)


@pytest.fixture(scope="module")
def samples(spec, model, experiment_cfg):
    rng = np.random.default_rng(SEED)
    return sample_feasible(spec, model, experiment_cfg, N_SAMPLES, rng)


@pytest.fixture(scope="module")
def nominal_batch(samples, spec, model, experiment_cfg):
    return run_batch(samples, spec, model, experiment_cfg)


@pytest.fixture(scope="module")
def disturbed_batch(samples, spec, model, experiment_cfg):
    return run_disturbed_batch(samples, spec, model, experiment_cfg)


# --- config / sample types ------------------------------------------------------


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(n_samples=0)
    with pytest.raises(ValueError):
        ExperimentConfig(max_steps=0)
    with pytest.raises(ValueError):
        ExperimentConfig(jobs=0)
    with pytest.raises(ValueError):
        ExperimentConfig(reuse_scope="sometimes")


def test_classified_sample_rejects_unknown_label():
    with pytest.raises(ValueError):
        ClassifiedSample(x0=np.zeros(2), label="mystery", solution=None)


# --- sampling --------------------------------------------------------------------


def test_sampling_deterministic_and_partitioned(spec, model, experiment_cfg,
                                                samples):
    again = sample_feasible(spec, model, experiment_cfg, N_SAMPLES,
                            np.random.default_rng(SEED))
    assert len(samples) == len(again) == N_SAMPLES
    for a, b in zip(samples, again):
        assert np.array_equal(a.x0, b.x0)
        assert a.label == b.label
    labels = {s.label for s in samples}
    assert labels <= {CLASS_LOWER, CLASS_UPPER, CLASS_OTHER}
    # each class present at the expected order of magnitude for this seed
    assert sum(s.label == CLASS_LOWER for s in samples) >= 1
    assert sum(s.label == CLASS_UPPER for s in samples) >= 1
    assert sum(s.label == CLASS_OTHER for s in samples) >= 1


def test_samples_carry_their_classifying_solution(samples):
    for s in samples:
        assert s.solution is not None and s.solution.status == "optimal"
        low = s.solution.active_set.input_lower[0]
        up = s.solution.active_set.input_upper[0]
        expected = (CLASS_LOWER if low.all()
                    else CLASS_UPPER if up.all() else CLASS_OTHER)
        assert s.label == expected
        assert not (low.any() and up.any())


def test_sampling_stall_aborts(model):
    # a horizon-1 problem with a microscopic terminal set and almost no input
    # authority: essentially nothing is feasible, so sampling must bail out
    tiny = OcpSpec(N=1, Q=np.eye(2) * 0.05, R=np.eye(1) * 0.1,
                   P=np.array([[5.9353, 5.2774], [5.2774, 5.9353]]),
                   alpha=1e-8,
                   x_lower=np.array([-2.0, -2.0]), x_upper=np.array([2.0, 2.0]),
                   u_lower=np.array([-1e-3]), u_upper=np.array([1e-3]))
    cfg = ExperimentConfig(n_samples=2, rng_seed=0)
    with pytest.raises(RuntimeError, match="stall"):
        sample_feasible(tiny, model, cfg, 2, np.random.default_rng(0))


# --- nominal batch ----------------------------------------------------------------


def test_batch_records_schema_and_statuses(nominal_batch, samples):
    stats, records = nominal_batch
    assert set(stats) == {GROUP_LOWER, GROUP_UPPER, GROUP_ALL}
    assert len(records) == len(samples)
    for rec, s in zip(records, samples):
        assert rec["scenario"] == "nominal"
        assert rec["label"] == s.label
        assert rec["x1"] == s.x0[0] and rec["x2"] == s.x0[1]
        if not rec["excluded"]:
            assert rec["status_classic"] == "reached_terminal"
            assert rec["status_heuristic"] == "reached_terminal"
            assert rec["nlps_classic"] == rec["k_classic"]


def test_batch_stats_match_independent_reaggregation(nominal_batch):
    stats, records = nominal_batch
    groups = {GROUP_LOWER: (CLASS_LOWER,), GROUP_UPPER: (CLASS_UPPER,),
              GROUP_ALL: (CLASS_LOWER, CLASS_UPPER, CLASS_OTHER)}
    for gname, classes in groups.items():
        rows = [r for r in records if r["label"] in classes and not r["excluded"]]
        st = stats[gname]
        assert st.n_samples == len(rows)
        if not rows:
            continue
        mc = sum(r["nlps_classic"] for r in rows) / len(rows)
        mh = sum(r["nlps_heuristic"] for r in rows) / len(rows)
        cc = sum(r["cost_classic"] for r in rows) / len(rows)
        ch = sum(r["cost_heuristic"] for r in rows) / len(rows)
        assert st.mean_nlp_classic == pytest.approx(mc, abs=1e-9)
        assert st.mean_nlp_heuristic == pytest.approx(mh, abs=1e-9)
        assert st.mean_cost_classic == pytest.approx(cc, abs=1e-9)
        assert st.mean_cost_heuristic == pytest.approx(ch, abs=1e-9)
        assert st.nlp_saving_pct == pytest.approx(100 * (mc - mh) / mc, abs=1e-9)
        assert st.cost_delta_pct == pytest.approx(100 * (ch - cc) / cc, abs=1e-9)


def test_unsaturated_samples_produce_identical_pairs(nominal_batch):
    _, records = nominal_batch
    others = [r for r in records if r["label"] == CLASS_OTHER]
    assert others
    for r in others:
        assert r["window_length"] == 0
        assert r["nlps_heuristic"] == r["nlps_classic"]
        assert r["cost_heuristic"] == r["cost_classic"]
        assert r["k_heuristic"] == r["k_classic"]


def test_saturated_windows_save_solves(nominal_batch):
    _, records = nominal_batch
    windowed = [r for r in records
                if r["label"] in (CLASS_LOWER, CLASS_UPPER)
                and not r["excluded"] and r["window_length"] > 0]
    assert windowed
    for r in windowed:
        # the heuristic run skips its window's solves, at the price of at
        # most one extra closed-loop step in these runs
        assert r["nlps_heuristic"] + r["window_length"] <= r["nlps_classic"] + 1
        assert r["nlps_heuristic"] < r["nlps_classic"]


def test_nominal_classic_descent_accounted(nominal_batch):
    stats, records = nominal_batch
    assert stats[GROUP_ALL].descent_checks == sum(
        r["descent_checks"] for r in records if not r["excluded"])
    assert stats[GROUP_ALL].descent_checks > 0
    assert stats[GROUP_ALL].descent_violations == 0


# --- disturbed batch ---------------------------------------------------------------


def test_disturbed_batch_covers_saturated_samples_only(disturbed_batch, samples):
    stats, records = disturbed_batch
    assert set(stats) == {GROUP_LOWER, GROUP_UPPER}
    expected = [i for i, s in enumerate(samples)
                if s.label in (CLASS_LOWER, CLASS_UPPER)]
    assert [r["index"] for r in records] == expected
    assert all(r["scenario"] == "disturbed" for r in records)
    # no descent accounting under disturbances
    assert all(r["descent_checks"] == 0 for r in records)


def test_disturbed_replay_fairness(disturbed_batch, samples, spec, model,
                                   experiment_cfg):
    """Re-derive a few disturbed pairs from scratch: the same per-sample
    stream, replayed through both controllers, must reproduce the records."""
    _, records = disturbed_batch
    bounds = DisturbanceBounds(np.full(2, -0.01), np.full(2, 0.01))
    for r in records[:3]:
        idx = r["index"]
        wrng = np.random.default_rng(np.random.SeedSequence((SEED, 2, idx)))
        wseq = disturbance_sequence(bounds, wrng, experiment_cfg.max_steps)
        s = samples[idx]
        res_c = run_closed_loop(model, spec, experiment_cfg.solver, s.x0,
                                ControllerMode(CLASSIC), disturbances=wseq,
                                max_steps=experiment_cfg.max_steps,
                                first_solution=s.solution)
        res_h = run_closed_loop(model, spec, experiment_cfg.solver, s.x0,
                                ControllerMode(REUSE_SATURATED),
                                disturbances=wseq,
                                max_steps=experiment_cfg.max_steps,
                                first_solution=s.solution)
        assert r["nlps_classic"] == res_c.n_nlp_solved
        assert r["nlps_heuristic"] == res_h.n_nlp_solved
        assert r["k_classic"] == (res_c.k_hat if res_c.k_hat is not None else "")
        assert r["k_heuristic"] == (res_h.k_hat if res_h.k_hat is not None else "")
        if not r["excluded"]:
            assert r["cost_classic"] == pytest.approx(res_c.V_hat, abs=1e-12)
            assert r["cost_heuristic"] == pytest.approx(res_h.V_hat, abs=1e-12)


# --- parallel execution --------------------------------------------------------------


def test_parallel_jobs_match_serial_records(samples, spec, model):
    subset = samples[:8]
    serial_cfg = ExperimentConfig(n_samples=len(subset), rng_seed=SEED, jobs=1)
    parallel_cfg = ExperimentConfig(n_samples=len(subset), rng_seed=SEED, jobs=2)
    _, serial = run_batch(subset, spec, model, serial_cfg)
    _, parallel = run_batch(subset, spec, model, parallel_cfg)
    assert serial == parallel


# --- grid classification ---------------------------------------------------------------


def test_grid_classification_smoke(spec, model, experiment_cfg):
    # an odd resolution puts a grid point exactly at the origin
    grid = approximate_feasible_boundary(spec, model, experiment_cfg, 17)
    xs, ys, labels = grid["x1"], grid["x2"], grid["labels"]
    assert xs[0] == spec.x_lower[0] and xs[-1] == spec.x_upper[0]
    assert labels.shape == (17, 17)
    seen = set(labels.ravel())
    assert seen <= {CLASS_LOWER, CLASS_UPPER, CLASS_OTHER, CLASS_TERMINAL,
                    CLASS_INFEASIBLE}
    assert labels[0, 0] == CLASS_INFEASIBLE and labels[-1, -1] == CLASS_INFEASIBLE
    assert labels[8, 8] == CLASS_TERMINAL and xs[8] == 0.0


def test_grid_classification_preconditions(spec, model, experiment_cfg):
    with pytest.raises(ValueError):
        approximate_feasible_boundary(spec, model, experiment_cfg, 8)
    scalar = OcpSpec(N=2, Q=np.array([[1.0]]), R=np.array([[1.0]]),
                     P=np.array([[1.0]]), alpha=0.01,
                     x_lower=np.array([-1.0]), x_upper=np.array([1.0]),
                     u_lower=np.array([-1.0]), u_upper=np.array([1.0]))
    with pytest.raises(ValueError):
        approximate_feasible_boundary(scalar, model, experiment_cfg, 16)


# --- persistence round trips --------------------------------------------------------------


def test_samples_csv_round_trip(samples, tmp_path):
    path = tmp_path / "samples.csv"
    write_samples_csv(samples, str(path))
    back = read_samples_csv(str(path))
    assert len(back) == len(samples)
    for a, b in zip(samples, back):
        assert np.array_equal(a.x0, b.x0)
        assert a.label == b.label
        assert b.solution is None


def test_table1_counts_and_percent(samples, tmp_path):
    path = tmp_path / "table1.csv"
    write_table1(samples, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "class,count,percent"
    rows = [ln.split(",") for ln in lines[1:]]
    assert [r[0] for r in rows] == [CLASS_LOWER, CLASS_UPPER, CLASS_OTHER]
    assert sum(int(r[1]) for r in rows) == len(samples)
    assert sum(float(r[2]) for r in rows) == pytest.approx(100.0, abs=1e-9)


def test_runs_csv_round_trip(nominal_batch, disturbed_batch, tmp_path):
    _, nominal = nominal_batch
    _, disturbed = disturbed_batch
    records = nominal + disturbed
    path = tmp_path / "runs.csv"
    write_runs_csv(records, str(path))
    back = read_runs_csv(str(path))
    assert len(back) == len(records)
    for orig, rec in zip(records, back):
        for key in ("scenario", "index", "label", "window_length", "excluded",
                    "status_classic", "k_classic", "nlps_classic",
                    "cost_classic", "status_heuristic", "k_heuristic",
                    "nlps_heuristic", "cost_heuristic", "descent_checks",
                    "descent_violations"):
            assert rec[key] == orig[key], key


def test_grid_csv_round_trip(spec, model, experiment_cfg, tmp_path):
    grid = approximate_feasible_boundary(spec, model, experiment_cfg, 16)
    path = tmp_path / "grid.csv"
    write_grid_csv(grid, str(path))
    back = read_grid_csv(str(path))
    assert np.array_equal(back["x1"], grid["x1"])
    assert np.array_equal(back["x2"], grid["x2"])
    assert (back["labels"] == grid["labels"]).all()


# --- configuration hash --------------------------------------------------------------------


def test_config_hash_tracks_semantic_fields(spec, model):
    base = ExperimentConfig(n_samples=10, rng_seed=0)
    assert config_hash(spec, model, base) == config_hash(spec, model, base)
    assert (config_hash(spec, model, ExperimentConfig(n_samples=10, rng_seed=1))
            != config_hash(spec, model, base))
    # execution details that cannot change results do not alter the hash
    relocated = ExperimentConfig(n_samples=10, rng_seed=0, output_dir="elsewhere",
                                 jobs=4)
    assert config_hash(spec, model, relocated) == config_hash(spec, model, base)


# --- exemplar selection ---------------------------------------------------------------------


def _mk_record(index, label, window, k_c=12, k_h=12, excluded=False):
    return {"scenario": "nominal", "index": index, "label": label,
            "window_length": window, "excluded": excluded,
            "status_classic": "reached_terminal",
            "status_heuristic": "reached_terminal",
            "k_classic": k_c, "k_heuristic": k_h}


def test_select_exemplar_prefers_long_lower_windows():
    records = [_mk_record(0, CLASS_UPPER, 5), _mk_record(1, CLASS_LOWER, 3)]
    assert select_exemplar(records) == 1
    records = [_mk_record(0, CLASS_UPPER, 5), _mk_record(1, CLASS_LOWER, 2)]
    assert select_exemplar(records) == 0
    records = [_mk_record(0, CLASS_OTHER, 0), _mk_record(1, CLASS_UPPER, 1)]
    assert select_exemplar(records) == 1
    # a long window does not qualify when the reuse run arrives too late
    records = [_mk_record(0, CLASS_LOWER, 4, k_c=10, k_h=13)]
    assert select_exemplar(records) is None
    assert select_exemplar([_mk_record(0, CLASS_OTHER, 0)]) is None


# --- report emission ---------------------------------------------------------------------------


def test_emit_reports_is_deterministic(nominal_batch, disturbed_batch, samples,
                                       spec, model, experiment_cfg, tmp_path):
    stats = {"nominal": nominal_batch[0], "disturbed": disturbed_batch[0]}
    records = {"nominal": nominal_batch[1], "disturbed": disturbed_batch[1]}
    grid = approximate_feasible_boundary(spec, model, experiment_cfg, 16)
    extra = {"seed": SEED, "config_hash": config_hash(spec, model, experiment_cfg)}
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    paths_a = emit_reports(stats, records, grid, str(out_a), samples=samples,
                           spec=spec, manifest_extra=extra)
    paths_b = emit_reports(stats, records, grid, str(out_b), samples=samples,
                           spec=spec, manifest_extra=extra)
    names = sorted(p.rsplit("/", 1)[1] for p in paths_a)
    assert names == ["figure1.svg", "figure3.svg", "grid.csv", "manifest.json",
                     "runs.csv", "samples.csv", "table1.csv", "table2.csv",
                     "table3.csv", "table4.csv", "table5.csv"]
    for pa, pb in zip(sorted(paths_a), sorted(paths_b)):
        assert open(pa, "rb").read() == open(pb, "rb").read()


def test_comparison_table_schema(nominal_batch, disturbed_batch, tmp_path):
    stats = {"nominal": nominal_batch[0], "disturbed": disturbed_batch[0]}
    records = {"nominal": nominal_batch[1], "disturbed": disturbed_batch[1]}
    emit_reports(stats, records, None, str(tmp_path))
    for name in ("table2.csv", "table3.csv", "table4.csv", "table5.csv"):
        lines = (tmp_path / name).read_text().splitlines()
        assert lines[0] == "metric,classic,heuristic,percent"
        assert lines[1].startswith("nlps_solved,")
        assert lines[2].startswith("cost_performance,")
        assert len(lines) == 3


def test_manifest_contents(nominal_batch, spec, model, experiment_cfg, tmp_path):
    stats = {"nominal": nominal_batch[0]}
    records = {"nominal": nominal_batch[1]}
    extra = {"seed": SEED, "config_hash": config_hash(spec, model, experiment_cfg)}
    emit_reports(stats, records, None, str(tmp_path), manifest_extra=extra)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["seed"] == SEED
    assert len(doc["config_hash"]) == 64
    assert doc["version"]


# --- end-to-end pipeline --------------------------------------------------------------------------


def test_full_pipeline_smoke(spec, model, tmp_path):
    cfg = ExperimentConfig(n_samples=12, rng_seed=3, grid_resolution=16,
                           output_dir=str(tmp_path / "out"))
    result = run_full_pipeline(spec, model, cfg)
    assert set(result) == {"samples", "stats", "records", "grid", "exemplar",
                           "paths"}
    assert len(result["samples"]) == 12
    assert set(result["stats"]) == {"nominal", "disturbed"}
    for p in result["paths"]:
        assert open(p, "rb").read(), p
    doc = json.loads(open(tmp_path / "out" / "manifest.json").read())
    assert doc["n_samples"] == 12
    assert doc["class_counts"][CLASS_LOWER] + doc["class_counts"][CLASS_UPPER] \
        + doc["class_counts"][CLASS_OTHER] == 12
    assert set(doc["stats"]) == {"nominal", "disturbed"}
    stats_all = doc["stats"]["nominal"]["all"]
    assert isinstance(stats_all["mean_nlp_classic"], (int, float))
    for st in result["stats"]["nominal"].values():
        assert isinstance(st, BatchStats)
