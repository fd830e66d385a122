import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abssgd.config import ExperimentConfig, parse_config
from abssgd.numeric import ContractViolation
from abssgd.runner import (
    build,
    compare_policies,
    emit_csv,
    format_table,
    read_csv,
    run_experiment,
    write_comparison_csv,
)


def small(**kw):
    base = dict(seed=5, iterations=40, samples=200, theory_report=False)
    base.update(kw)
    return ExperimentConfig(**base)


def test_same_config_gives_byte_identical_csv(tmp_path):
    cfg = small(policy="abs")
    for name in ("a.csv", "b.csv"):
        records, _ = run_experiment(cfg)
        emit_csv(records, tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_different_seed_changes_trajectory():
    a, _ = run_experiment(small(seed=1))
    b, _ = run_experiment(small(seed=2))
    assert [r.train_loss for r in a] != [r.train_loss for r in b]


@pytest.mark.parametrize("policy", ["abs", "bsp", "dbs", "asp", "ssp"])
def test_infinite_threshold_converges_at_first_record(policy):
    records, summary = run_experiment(small(policy=policy, threshold=math.inf, iterations=5))
    assert summary.converged_time == records[0].sim_time
    assert summary.converged_step == records[0].t


def test_unreachable_threshold_is_not_reached():
    _, summary = run_experiment(small(threshold=-1.0, iterations=5))
    assert summary.converged_time is None
    assert "converged_time=not reached" in summary.as_text()


def test_record_invariants_for_abs():
    cfg = small(iterations=60)
    records, summary = run_experiment(cfg)
    times = [r.sim_time for r in records]
    assert all(b > a for a, b in zip(times, times[1:]))
    n = cfg.n_workers
    assert all(n * cfg.ref_batch <= r.total_batch <= cfg.k_max * n * cfg.ref_batch for r in records)
    assert summary.observed_K == max(r.total_batch for r in records) / cfg.ref_batch


def test_abs_summary_carries_theory_report():
    cfg = small(iterations=30, theory_report=True, theory_gd_iters=2000, theory_probes=20, theory_sigma_samples=200)
    _, summary = run_experiment(cfg)
    text = summary.as_text()
    assert summary.theory is not None
    for key in ("theory.criterion=", "theory.bound=", "theory.satisfied=", "theory.K="):
        assert key in text
    _, bsp = run_experiment(cfg.replace(policy="bsp"))
    assert bsp.theory is None


def test_empty_csv_is_header_only(tmp_path):
    emit_csv([], tmp_path / "e.csv", n_workers=3)
    assert (tmp_path / "e.csv").read_text() == "t,sim_time,total_batch,train_loss,grad_norm_sq,k_1,k_2,k_3\n"
    assert read_csv(tmp_path / "e.csv") == []


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 25), st.integers(1, 7))
def test_record_count_follows_cadence(T, cadence):
    records, _ = run_experiment(small(iterations=T, cadence=cadence, samples=50))
    assert len(records) == math.ceil(T / cadence)


def test_csv_round_trip_is_exact(tmp_path):
    for policy in ("abs", "dbs", "asp"):
        records, _ = run_experiment(small(policy=policy, iterations=15))
        emit_csv(records, tmp_path / f"{policy}.csv")
        assert read_csv(tmp_path / f"{policy}.csv") == records


def test_csv_uses_plain_decimal_points(tmp_path):
    records, _ = run_experiment(small(iterations=3))
    emit_csv(records, tmp_path / "r.csv")
    body = (tmp_path / "r.csv").read_text().splitlines()[1:]
    assert all("," in line and ";" not in line for line in body)
    assert "." in body[0].split(",")[1]


def test_csv_write_error_names_the_path(tmp_path):
    bad = tmp_path / "missing" / "x.csv"
    with pytest.raises(OSError, match="missing"):
        emit_csv([], bad, n_workers=1)


def test_parse_config_round_trip():
    cfg = small(policy="ssp", cluster="custom", static_factors=(0.0, 1.5), dynamic_ranges=(0.1, 0.2))
    assert parse_config(cfg.to_text()) == cfg


@pytest.mark.parametrize(
    "text, match",
    [
        ("policy = abs\n", "missing required key 'seed'"),
        ("seed = 1\nbogus = 2\n", "unknown key 'bogus'"),
        ("seed = 1\nseed = 2\n", "duplicate key"),
        ("seed = 1\nlr\n", "expected 'key = value'"),
        ("seed = x\n", "cannot parse"),
        ("seed = 1\ncluster = static-9999\n", "cluster"),
        ("seed = 1\npolicy = sgd\n", "policy"),
        ("seed = 1\nthreshold_metric = test_accuracy\n", "holdout"),
    ],
)
def test_parse_config_errors(text, match):
    with pytest.raises(ContractViolation, match=match):
        parse_config(text)


def test_parse_config_ignores_comments_and_blank_lines():
    cfg = parse_config("# a run\n\nseed = 3  # fixed\npolicy = bsp\n")
    assert cfg.seed == 3 and cfg.policy == "bsp"


def test_holdout_split_and_accuracy_threshold():
    cfg = small(holdout=0.25, threshold_metric="test_accuracy", threshold=0.0, iterations=3)
    s = build(cfg)
    assert s.train.size == 150 and s.test.size == 50
    _, summary = run_experiment(cfg)
    assert summary.converged_step == 0


def test_self_comparison_is_one():
    cfg = small(threshold=0.69)
    rows = compare_policies([cfg, cfg.replace(label="again")])
    assert rows[0].speedup == 1.0 and rows[1].speedup == 1.0
    assert rows[1].speedup_text == "1.00x"


def test_not_reached_is_reported_as_na(tmp_path):
    cfg = small(threshold=0.69)
    rows = compare_policies([cfg, cfg.replace(policy="bsp", iterations=1)])
    assert rows[1].speedup is None and rows[1].speedup_text == "n/a"
    write_comparison_csv(rows, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[2].endswith("n/a,n/a")
    assert "inf" not in format_table(rows)


def test_mismatched_comparison_keys_raise():
    with pytest.raises(ContractViolation, match="samples"):
        compare_policies([small(), small(samples=300, policy="bsp")])


def test_table_rows_use_cluster_labels():
    cfgs = [small(policy=p, cluster=c, threshold=math.inf, iterations=2)
            for c in ("static-1234", "dynamic-50", "both") for p in ("abs", "bsp", "dbs", "asp", "ssp")]
    table = format_table(compare_policies(cfgs))
    lines = table.splitlines()
    assert lines[0].split()[:2] == ["Cluster", "heterogeneity"]
    assert [l.split("  ")[0] for l in lines[1:]] == ["Only static", "Only dynamic", "Both static and dynamic"]
    for p in ("ABS-SGD", "BSP-SGD", "DBS-SGD", "ASP-SGD", "SSP-SGD"):
        assert p in lines[0]


def test_parallel_compare_matches_serial():
    cfgs = [small(policy=p, threshold=0.69) for p in ("abs", "bsp")]
    assert compare_policies(cfgs, jobs=2) == compare_policies(cfgs)


def test_static_preset_mean_batch_times_are_1234():
    s = build(small(cluster="static-1234"))
    means = [np.mean([s.cluster.batch_time(i) for _ in range(50)]) for i in range(4)]
    assert [m / means[0] for m in means] == [1.0, 2.0, 3.0, 4.0]


def test_abs_fast_worker_computes_more_on_average():
    records, _ = run_experiment(small(iterations=100))
    k = np.array([r.k for r in records], dtype=float).mean(axis=0)
    assert k[0] > k[3]
    assert list(k) == sorted(k, reverse=True)
