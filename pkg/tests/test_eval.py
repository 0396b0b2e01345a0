import csv
import io

import numpy as np
import pytest

import annforest.evaluation as ev
from annforest import ForestParams, RandomPartitionForest, evaluate, ground_truth, sweep
from annforest.evaluation import CSV_COLUMNS, EvalReport
from annforest.exceptions import ParameterError
from annforest.rng import derive
from annforest.search import exact_knn_batch


@pytest.fixture()
def data(rng):
    X = rng.normal(size=(300, 8)).astype(np.float32)
    Q = rng.normal(size=(40, 8)).astype(np.float32)
    return X, Q


def test_ground_truth_matches_exact_scan(data):
    X, Q = data
    ids, dists = ground_truth(X, Q, k=3)
    ref_ids, ref_d = exact_knn_batch(X, Q, k=3)
    np.testing.assert_array_equal(ids, ref_ids)
    np.testing.assert_array_equal(dists, ref_d)


def test_ground_truth_cache_round_trip(data, tmp_path, monkeypatch):
    X, Q = data
    ids1, d1 = ground_truth(X, Q, cache_dir=tmp_path)
    files = list(tmp_path.glob("truth-*.bin"))
    assert len(files) == 1
    # second call must be served from disk alone
    monkeypatch.setattr(
        ev, "exact_knn_batch", lambda *a, **k: pytest.fail("cache miss")
    )
    ids2, d2 = ground_truth(X, Q, cache_dir=tmp_path)
    np.testing.assert_array_equal(ids1, ids2)
    np.testing.assert_array_equal(d1, d2)


def test_ground_truth_cache_distinguishes_inputs(data, tmp_path):
    X, Q = data
    ground_truth(X, Q, cache_dir=tmp_path)
    ground_truth(X[:200], Q, cache_dir=tmp_path)
    ground_truth(X, Q, metric="euclidean", k=2, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("truth-*.bin"))) == 3


def test_evaluate_record_fields(data):
    X, Q = data
    params = ForestParams(n_trees=4, leaf_capacity=8, seed=5)
    report = evaluate(X, Q, params, trials=2)
    assert report.n_samples == 300 and report.n_queries == 40
    assert len(report.records) == 2
    assert [r.trial for r in report.records] == [0, 1]
    assert [r.seed for r in report.records] == [derive(5, 0), derive(5, 1)]
    for r in report.records:
        assert r.n_trees == 4
        assert 0.0 <= r.recall_at_1 <= 1.0
        assert 0.0 < r.candidate_fraction <= 1.0
        assert r.mean_query_us > 0 and r.build_ms > 0
    assert report.tree_counts() == [4]
    assert report.mean_recall(4) == pytest.approx(
        np.mean([r.recall_at_1 for r in report.records])
    )
    with pytest.raises(ParameterError):
        report.mean_recall(9)


def test_sweep_argument_validation(data):
    X, Q = data
    params = ForestParams(n_trees=4, seed=1)
    for bad in ([], [0], [4, 2], [2, 2]):
        with pytest.raises(ParameterError):
            sweep(X, Q, params, bad)
    with pytest.raises(ParameterError):
        sweep(X, Q, params, [2], trials=0)


def test_sweep_prefix_matches_standalone_forest(data):
    X, Q = data
    params = ForestParams(n_trees=4, leaf_capacity=8, seed=42)
    report = sweep(X, Q, params, [1, 2, 4], trials=1)
    assert [r.n_trees for r in report.records] == [1, 2, 4]
    truth_ids, _ = ground_truth(X, Q)
    for rec in report.records:
        # a forest built outright with n_trees=L and the trial seed must give
        # the same recall and candidate cost as the sweep's prefix pass
        f = RandomPartitionForest(
            n_trees=rec.n_trees, leaf_capacity=8, seed=rec.seed
        ).fit(X)
        hits = sum(
            int(f.query(q, 1).ids[0] == truth_ids[j, 0]) for j, q in enumerate(Q)
        )
        frac = np.mean([len(f.retrieve(q)) for q in Q]) / 300.0
        assert rec.recall_at_1 == hits / 40.0
        assert rec.candidate_fraction == frac


def test_sweep_recall_and_cost_monotone_in_tree_count(data):
    X, Q = data
    params = ForestParams(n_trees=8, leaf_capacity=6, seed=7)
    report = sweep(X, Q, params, [1, 2, 4, 8], trials=2)
    for trial in (0, 1):
        recs = [r for r in report.records if r.trial == trial]
        recalls = [r.recall_at_1 for r in recs]
        fracs = [r.candidate_fraction for r in recs]
        builds = [r.build_ms for r in recs]
        assert recalls == sorted(recalls)
        assert fracs == sorted(fracs)
        assert builds == sorted(builds)
        assert recalls[-1] > recalls[0]  # more trees must actually help here


def test_csv_shape_and_round_trip(data, tmp_path):
    X, Q = data
    params = ForestParams(n_trees=2, leaf_capacity=8, seed=3)
    report = sweep(X, Q, params, [1, 2], trials=1)

    buf = io.StringIO()
    report.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "L,r,C,K,trial,seed,recall_at_1,candidate_fraction,mean_query_us,build_ms"
    assert len(lines) == 1 + len(report.records)

    path = tmp_path / "report.csv"
    report.write_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    for rec, row in zip(report.records, rows):
        assert int(row["L"]) == rec.n_trees
        assert int(row["C"]) == rec.leaf_capacity
        assert int(row["K"]) == rec.proj_dims
        assert int(row["trial"]) == rec.trial
        assert int(row["seed"]) == rec.seed
        # repr floats survive the text round trip exactly
        assert float(row["recall_at_1"]) == rec.recall_at_1
        assert float(row["candidate_fraction"]) == rec.candidate_fraction
        assert float(row["r"]) == rec.split_ratio


def test_csv_columns_enumerate_record_fields():
    assert CSV_COLUMNS == (
        "L", "r", "C", "K", "trial", "seed",
        "recall_at_1", "candidate_fraction", "mean_query_us", "build_ms",
    )
    assert EvalReport().records == []
