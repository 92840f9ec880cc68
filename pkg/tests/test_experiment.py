import csv
import json
import math

import numpy as np
import pytest

from unimodal_drcc.errors import ValidationError
from unimodal_drcc.experiment import (
    ExperimentConfig,
    ResultRow,
    SyntheticSpec,
    evaluate_rows,
    generate_synthetic_pool,
    reliability_floor,
    run_experiment,
)
from unimodal_drcc.uncertainty import ScenarioPool, estimate_mode_histogram, estimate_moments


def test_same_seed_same_bytes():
    spec = SyntheticSpec(size=500)
    a = generate_synthetic_pool(spec, 42).samples
    b = generate_synthetic_pool(spec, 42).samples
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, generate_synthetic_pool(spec, 43).samples)


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_generator_moments_match_closed_form(alpha):
    spec = SyntheticSpec(alpha=alpha)
    pool = generate_synthetic_pool(spec, 7, size=200_000)
    mom = estimate_moments(pool)
    se = np.sqrt(np.diag(spec.true_covariance) / len(pool))
    assert np.all(np.abs(mom.mu - spec.true_mean) <= 4 * se)
    assert mom.covariance == pytest.approx(spec.true_covariance, rel=0.03)


def test_symmetric_spec_has_mode_at_mean():
    spec = SyntheticSpec(mode=(1.0, -1.0), drift=(0.0, 0.0))
    pool = generate_synthetic_pool(spec, 3, size=20_000)
    se = np.sqrt(np.diag(spec.true_covariance) / len(pool))
    assert np.all(np.abs(pool.samples.mean(axis=0) - spec.true_mode) <= 3 * se)


def test_skewed_spec_mode_below_mean():
    spec = SyntheticSpec()
    pool = generate_synthetic_pool(spec, 3, size=20_000)
    mode = estimate_mode_histogram(pool, 15)
    assert np.all(mode < pool.samples.mean(axis=0))


def test_spec_validation():
    with pytest.raises(ValidationError):
        SyntheticSpec(shape=((1.0, 2.0), (2.0, 1.0)))
    with pytest.raises(ValidationError):
        SyntheticSpec.from_dict({"mode": [0, 0], "skew": 1})


def test_floor_value():
    assert reliability_floor(0.05, 5000) == pytest.approx(0.059247, abs=1e-6)


def test_reliability_with_huge_slack():
    pool = ScenarioPool(np.random.default_rng(0).normal(size=(1000, 2)))
    rep = evaluate_rows(np.eye(2), [1e6, 1e6], pool, 4, 250)
    assert rep.min == rep.max == 100.0
    assert rep.worst_row_frequency() == 0.0


def test_reliability_at_zero_scenarios():
    pool = ScenarioPool(np.zeros((100, 2)))
    rep = evaluate_rows([[1.0, 2.0], [-3.0, 1.0]], [0.0, 0.0], pool, 2, 50)
    assert rep.avg == 100.0


def test_reliability_counts_rows_separately():
    xs = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [1.0, 1.0]])
    rep = evaluate_rows(np.eye(2), [0.5, 0.5], ScenarioPool(xs), 1, 4, ["a", "b"])
    assert rep.joint[0] == pytest.approx(25.0)
    assert rep.row_violation[0] == pytest.approx([0.5, 0.5])
    assert rep.to_dict()["rows"]["a"] == [0.5]


def ring_config(tmp_path, **extra):
    data = {
        "case": "case3ring",
        "load_scale": 1.0,
        "line_limits": [],
        "wind": [[2, 20.0]],
        "synthetic": {"mode": [-1.0], "drift": [2.0], "shape": [[9.0]], "size": 4000},
        "n_data": 300, "n_groups": 20, "n_bins": 10,
        "variants": ["D1", "D2", {"kind": "D3", "name": "D3_ell", "support_shape": "ellipsoid"},
                     "D4", "D5"],
        "batches": 4, "batch_size": 500,
        "output_dir": str(tmp_path / "out"),
        "seed": 5,
    }
    data.update(extra)
    return ExperimentConfig.from_dict(data)


@pytest.fixture(scope="module")
def ring_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ring")
    return tmp, run_experiment(ring_config(tmp))


def test_ring_run_outputs(ring_run):
    tmp, rep = ring_run
    out = tmp / "out"
    names = [r.name for r in rep.rows]
    assert names == ["D1", "D2", "D3_ell", "D4", "D5"]
    for f in ("results.csv", "summary.json", "mode_estimates.csv", "histogram.csv"):
        assert (out / f).exists()
    with open(out / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ResultRow.columns()
    summary = json.loads((out / "summary.json").read_text())
    assert {"seed", "epsilon", "pool_size", "moments", "base_support", "results"} <= set(summary)
    sol = json.loads((out / "solution_D3_ell.json").read_text())
    assert len(sol["rows"]) == 3 * 2 + 2 * 4 and set(sol["decision"]) == {"P_G", "R_up", "R_dn", "d_G"}


def test_ring_run_costs(ring_run):
    _, rep = ring_run
    for r in rep.rows:
        assert r.status == "converged", r.error
        assert r.total_cost == pytest.approx(r.generation_cost + r.reserve_cost, rel=1e-12)
    d1 = rep.row("D1").total_cost
    assert max(r.total_cost for r in rep.rows) == pytest.approx(d1, rel=1e-6)


def test_ring_run_is_deterministic(ring_run, tmp_path):
    _, rep = ring_run
    again = run_experiment(ring_config(tmp_path), write=False)
    for a, b in zip(rep.rows, again.rows):
        assert (a.total_cost, a.iterations, a.reliability_avg) == (b.total_cost, b.iterations, b.reliability_avg)


def test_variant_order_does_not_change_results(ring_run, tmp_path):
    _, rep = ring_run
    cfg = ring_config(tmp_path, variants=["D5", {"kind": "D3", "name": "D3_ell", "support_shape": "ellipsoid"}])
    again = run_experiment(cfg, write=False)
    assert again.row("D3_ell").total_cost == rep.row("D3_ell").total_cost
    assert again.row("D5").total_cost == rep.row("D5").total_cost


def test_config_rejects_unknown_keys():
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({"epsilon": 0.05, "epsilon_typo": 1})
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({"variants": ["D1", "D1"]})


def test_config_paths_resolve_relative_to_file(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"pool_file": "pool.csv", "output_dir": "res"}))
    cfg = ExperimentConfig.from_json(tmp_path / "cfg.json")
    assert cfg.pool_file == str(tmp_path / "pool.csv")
    assert cfg.output_dir == str(tmp_path / "res")


def test_pool_file_and_failed_variant_reported(tmp_path):
    pool = generate_synthetic_pool(SyntheticSpec(mode=(-1.0,), drift=(2.0,), shape=((9.0,),)), 1, 3000)
    pool.to_csv(tmp_path / "pool.csv")
    # a tiny line limit makes every variant infeasible; errors become result rows
    cfg = ring_config(tmp_path, pool_file=str(tmp_path / "pool.csv"), variants=["D1"],
                      line_limits=[[1, 2, 0.01], [1, 3, 0.01], [3, 2, 0.01]], batches=2)
    rep = run_experiment(cfg, write=False)
    assert rep.rows[0].status == "failed"
    assert rep.rows[0].error.startswith("MasterInfeasible")
    assert math.isnan(rep.rows[0].total_cost)
