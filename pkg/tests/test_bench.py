"""Benchmark harness tests: splits, comparators, tasks, and the runner."""

import numpy as np
import pytest

from finnets import bench, engine, nets, signals
from finnets.errors import (
    CorpusDegenerateError,
    IngestError,
    ShapeError,
    SplitError,
)
from finnets.rng import derive_seed, rng_for


def toy_dataset(n_items=60, n_channels=1, tf_dim=8, seed=0, n_subjects=None):
    """Separable 2-class data: class sign written into feature 0."""
    rng = rng_for(seed, "toy")
    labels = np.arange(n_items) % 2
    inputs = rng.normal(size=(n_items, n_channels, tf_dim)) * 0.3
    inputs[:, :, 0] += np.where(labels == 1, 2.0, -2.0)[:, None]
    subjects = np.arange(n_items) % n_subjects if n_subjects else None
    return bench.LabeledDataset(inputs, labels, 2, subject_ids=subjects)


def fake_artifact(feature, width, seed, in_dim=8):
    net = nets.init_random(
        nets.Topology((in_dim, 8, width), ("relu", "linear")), seed
    )
    return engine.FinArtifact(
        feature=feature,
        net=net,
        norm_lo=np.zeros(width),
        norm_hi=np.ones(width),
        gen_spec_digest="0" * 64,
        history_summary={"best_val_loss": 0.1, "epochs": 1},
    )


# ---------------------------------------------------------------------------
# dataset container
# ---------------------------------------------------------------------------

def test_dataset_validation_errors():
    good = np.zeros((8, 1, 4))
    labels = np.array([0, 1] * 4)
    with pytest.raises(ShapeError):
        bench.LabeledDataset(np.zeros((8, 4)), labels, 2)
    with pytest.raises(ShapeError):
        bench.LabeledDataset(good, labels[:5], 2)
    with pytest.raises(ValueError):
        bench.LabeledDataset(good, labels, 1)
    with pytest.raises(ValueError):
        bench.LabeledDataset(good, labels + 1, 2)
    with pytest.raises(ValueError):
        # class 1 has a single item
        bench.LabeledDataset(good, np.array([0, 0, 0, 0, 0, 0, 0, 1]), 2)
    with pytest.raises(ShapeError):
        bench.LabeledDataset(good, labels, 2, subject_ids=np.arange(3))


def test_dataset_properties():
    data = toy_dataset(n_items=10, n_channels=3, tf_dim=5)
    assert (data.n_items, data.n_channels, data.tf_dim) == (10, 3, 5)
    assert data.labels.dtype == np.int64
    assert data.inputs.dtype == np.float64


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def test_split_repeated_partitions():
    data = toy_dataset(n_items=200)
    plan = bench.SplitPlan(mode="repeated_random", repeats=50, seed=31)
    for k in range(50):
        train, val, test = bench.split_repeated(data, plan, k)
        assert len(test) == 30  # round(0.15 * 200)
        assert len(val) == 26  # round(0.15 * 170)
        assert len(train) == 144
        merged = np.concatenate([train, val, test])
        assert np.array_equal(np.sort(merged), np.arange(200))
        for part in (train, val, test):
            assert np.array_equal(part, np.sort(part))
            assert len(np.unique(data.labels[part])) == 2


def test_split_repeated_is_seeded():
    data = toy_dataset(n_items=100)
    plan = bench.SplitPlan(mode="repeated_random", repeats=5, seed=7)
    a = bench.split_repeated(data, plan, 2)
    b = bench.split_repeated(data, plan, 2)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    c = bench.split_repeated(data, plan, 3)
    assert not np.array_equal(a[2], c[2])
    with pytest.raises(ValueError):
        bench.split_repeated(data, plan, 5)


def test_split_repeated_too_small_raises():
    data = toy_dataset(n_items=4)
    plan = bench.SplitPlan(mode="repeated_random", repeats=1, seed=0)
    with pytest.raises(SplitError):
        bench.split_repeated(data, plan, 0)


def test_split_repeated_class_coverage():
    # a 2-member class cannot reach all three partitions, any seed
    labels = np.zeros(40, dtype=np.int64)
    labels[:2] = 1
    inputs = np.zeros((40, 1, 4))
    inputs[:, 0, 0] = labels
    data = bench.LabeledDataset(inputs, labels, 2)
    for seed in range(5):
        plan = bench.SplitPlan(mode="repeated_random", repeats=1, seed=seed)
        with pytest.raises(SplitError):
            bench.split_repeated(data, plan, 0)


def test_split_plan_validation():
    with pytest.raises(ValueError):
        bench.SplitPlan(mode="bootstrap")
    with pytest.raises(ValueError):
        bench.SplitPlan(test_frac=0.0)
    with pytest.raises(ValueError):
        bench.SplitPlan(test_frac=0.6, val_frac=0.5)
    with pytest.raises(ValueError):
        bench.SplitPlan(repeats=0)
    with pytest.raises(ValueError):
        bench.SplitPlan(fractions=(0.4, 0.2))
    with pytest.raises(ValueError):
        bench.SplitPlan(fractions=(0.2, 1.5))
    with pytest.raises(ValueError):
        bench.SplitPlan(mode="fraction_sweep", fractions=())


def test_split_leave_subjects_out():
    data = toy_dataset(n_items=60, n_subjects=6)
    train, val, test = bench.split_leave_subjects_out(data, 2, 4)
    assert np.all(data.subject_ids[val] == 2)
    assert np.all(data.subject_ids[test] == 4)
    held = set(val) | set(test)
    assert held.isdisjoint(train)
    assert len(train) + len(val) + len(test) == 60
    with pytest.raises(SplitError):
        bench.split_leave_subjects_out(toy_dataset(n_items=20), 0, 1)
    with pytest.raises(SplitError):
        bench.split_leave_subjects_out(data, 3, 3)
    with pytest.raises(SplitError):
        bench.split_leave_subjects_out(data, 0, 99)
    two = toy_dataset(n_items=20, n_subjects=2)
    with pytest.raises(SplitError):
        bench.split_leave_subjects_out(two, 0, 1)


def test_loso_enumerates_ordered_pairs():
    data = toy_dataset(n_items=40, n_subjects=4)
    plan = bench.SplitPlan(mode="leave_subjects_out", seed=3)
    cfg = nets.TrainConfig(
        learning_rate=0.1, momentum=0.9, batch_size=8, max_epochs=2,
        patience=2, seed=0,
    )
    report = bench.run_benchmark(data, plan, [bench.KnnModel(k=1)], cfg)
    assert len(report.runs) == 12  # 4 * 3 ordered subject pairs
    assert [r.split_index for r in report.runs] == list(range(12))


def test_stratified_subsample_counts():
    labels = np.array([0] * 30 + [1] * 20)
    train_idx = np.arange(50)
    sub = bench.stratified_subsample(labels, train_idx, 0.5, (9, "subsample", 0, 500))
    assert len(sub) == 25
    assert (labels[sub] == 0).sum() == 15
    assert (labels[sub] == 1).sum() == 10
    assert np.array_equal(sub, np.sort(sub))
    assert set(sub) <= set(train_idx)
    again = bench.stratified_subsample(labels, train_idx, 0.5, (9, "subsample", 0, 500))
    assert np.array_equal(sub, again)
    other = bench.stratified_subsample(labels, train_idx, 0.5, (9, "subsample", 1, 500))
    assert not np.array_equal(sub, other)
    full = bench.stratified_subsample(labels, train_idx, 1.0, (9, "subsample", 0, 1000))
    assert np.array_equal(full, train_idx)


def test_stratified_subsample_errors():
    labels = np.array([0] * 30 + [1] * 20)
    idx = np.arange(50)
    with pytest.raises(ValueError):
        bench.stratified_subsample(labels, idx, 0.0, (0,))
    with pytest.raises(ValueError):
        bench.stratified_subsample(labels, idx, 1.5, (0,))
    with pytest.raises(SplitError):
        bench.stratified_subsample(labels, idx, 0.01, (0,))


# ---------------------------------------------------------------------------
# classical comparators
# ---------------------------------------------------------------------------

def ref_knn(train_x, train_y, test_x, k):
    """Double-loop nearest-neighbour vote with the same tie rule."""
    out = []
    for t in test_x:
        dists = [float(np.sum((t - p) ** 2)) for p in train_x]
        order = sorted(range(len(train_x)), key=lambda j: (dists[j], j))
        votes = {}
        for j in order[:k]:
            votes[train_y[j]] = votes.get(train_y[j], 0) + 1
        top = max(votes.values())
        tied = {c for c, v in votes.items() if v == top}
        for j in order[:k]:
            if train_y[j] in tied:
                out.append(train_y[j])
                break
    return np.array(out, dtype=np.int64)


def test_knn_matches_bruteforce():
    for seed in range(3):
        rng = rng_for(seed, "knn")
        train_x = rng.normal(size=(50, 3))
        train_y = rng.integers(0, 3, size=50)
        # continuous coordinates make exact distance ties negligible
        test_x = rng.normal(size=(20, 3))
        for k in (1, 3, 5):
            got = bench.knn_classify(train_x, train_y, test_x, k)
            want = ref_knn(train_x, train_y, test_x, k)
            assert np.array_equal(got, want)


def test_knn_vote_tie_goes_to_nearest():
    train_x = np.array([[1.0], [2.0], [3.0], [4.0]])
    train_y = np.array([0, 1, 1, 0])
    got = bench.knn_classify(train_x, train_y, np.array([[0.0]]), 4)
    assert got[0] == 0  # 2-2 vote, nearest point has label 0
    got = bench.knn_classify(train_x, train_y, np.array([[0.0]]), 2)
    assert got[0] == 0  # 1-1 vote


def test_knn_edges():
    rng = rng_for(4, "knn-edges")
    train_x = rng.normal(size=(10, 2))
    train_y = np.array([0, 1] * 5)
    dup = bench.knn_classify(train_x, train_y, train_x[3], 1)
    assert dup[0] == train_y[3]
    maj = bench.knn_classify(train_x, train_y, rng.normal(size=(4, 2)), 10)
    assert maj.shape == (4,)
    with pytest.raises(ValueError):
        bench.knn_classify(train_x, train_y, train_x, 0)
    with pytest.raises(ValueError):
        bench.knn_classify(train_x, train_y, train_x, 11)


def test_linear_margin_separable_and_deterministic():
    rng = rng_for(11, "margin")
    n = 60
    y = np.arange(n) % 3
    x = rng.normal(size=(n, 4)) * 0.2
    for c in range(3):
        x[y == c, c] += 3.0
    preds = bench.linear_margin_classify(x, y, x)
    assert float(np.mean(preds == y)) == 1.0
    again = bench.linear_margin_classify(x, y, x)
    assert np.array_equal(preds, again)


@pytest.mark.filterwarnings("ignore:overflow encountered")
@pytest.mark.filterwarnings("ignore:invalid value encountered")
def test_linear_margin_huge_reg_collapses():
    rng = rng_for(12, "margin-reg")
    x = rng.normal(size=(40, 3))
    y = np.arange(40) % 2
    x[y == 1] += 4.0
    preds = bench.linear_margin_classify(x, y, x, reg=1e9)
    # the penalty term swamps the update; the classifier degenerates
    assert len(np.unique(preds)) == 1


# ---------------------------------------------------------------------------
# synthetic tasks
# ---------------------------------------------------------------------------

SMALL_GEN = signals.GenSpec(length=64, seed=404)


def test_threshold_task_labels_and_oracle():
    data = bench.make_feature_threshold_task(
        "entropy", n_items=24, rho=0.0, seed=5, gen=SMALL_GEN, n_subjects=5
    )
    assert data.n_items == 24 and data.n_channels == 1
    assert data.oracle_scores.shape == (24,)
    rule = (data.oracle_scores > data.oracle_threshold).astype(np.int64)
    assert np.array_equal(data.labels, rule)
    assert np.array_equal(data.subject_ids, np.arange(24) % 5)
    assert data.meta["task"] == "feature_threshold:entropy"


def test_threshold_task_label_noise_is_seeded():
    data = bench.make_feature_threshold_task(
        "entropy", n_items=24, rho=0.3, seed=5, gen=SMALL_GEN
    )
    rule = (data.oracle_scores > data.oracle_threshold).astype(np.int64)
    flip = rng_for(5, "label-noise").random(24) < 0.3
    assert np.array_equal(data.labels, np.where(flip, 1 - rule, rule))


def test_threshold_task_validation():
    with pytest.raises(ValueError):
        bench.make_feature_threshold_task("entropy", n_items=24, rho=0.5, gen=SMALL_GEN)
    with pytest.raises(ValueError):
        bench.make_feature_threshold_task("entropy", n_items=24, rho=-0.1, gen=SMALL_GEN)


def test_multi_feature_task_rule():
    data = bench.make_multi_feature_task(
        ("entropy", "kurtosis"), n_channels=2, n_items=20, rho=0.0, seed=8,
        gen=SMALL_GEN,
    )
    assert data.inputs.shape[:2] == (20, 2)
    rule = (data.oracle_scores > data.oracle_threshold).astype(np.int64)
    assert np.array_equal(data.labels, rule)
    weights = data.meta["weights"]
    assert set(weights) == {"entropy", "kurtosis"}
    for w in weights.values():
        assert 0.5 <= abs(w) <= 1.0


def test_multi_feature_task_errors():
    with pytest.raises(ValueError):
        bench.make_multi_feature_task(("entropy",), n_items=20, gen=SMALL_GEN)
    with pytest.raises(ValueError):
        bench.make_multi_feature_task(
            ("entropy", "kurtosis"), n_items=20, rho=0.7, gen=SMALL_GEN
        )
    # f0 never fires on pure noise, so its z-score denominator collapses
    noise_gen = signals.GenSpec(
        family_weights={"white_noise": 1.0}, seed=321
    )
    with pytest.raises(CorpusDegenerateError):
        bench.make_multi_feature_task(
            ("entropy", "f0"), n_items=16, rho=0.0, seed=1, gen=noise_gen
        )


# ---------------------------------------------------------------------------
# models and runner
# ---------------------------------------------------------------------------

FAST_CFG = nets.TrainConfig(
    learning_rate=0.3, momentum=0.9, batch_size=8, max_epochs=12,
    patience=12, seed=0,
)


def test_model_constructor_validation():
    with pytest.raises(ValueError):
        bench.RandomDenseModel("bad", nets.Topology((8, 4, 2), ("relu", "relu")))
    with pytest.raises(ValueError):
        bench.EnsembleFinModel("empty", [])


def test_dense_models_reject_bad_shapes():
    data = toy_dataset(n_items=20, n_channels=2)
    cfg = FAST_CFG
    fin = bench.TransferFinModel("fin", fake_artifact("entropy", 3, 1))
    with pytest.raises(ShapeError):
        fin.fit(data, np.arange(10), np.arange(10, 16), 0, cfg)
    one = toy_dataset(n_items=20, tf_dim=8)
    wrong_in = bench.RandomDenseModel(
        "base", nets.Topology((9, 4, 2), ("relu", "softmax"))
    )
    with pytest.raises(ShapeError):
        wrong_in.fit(one, np.arange(10), np.arange(10, 16), 0, cfg)
    wrong_out = bench.RandomDenseModel(
        "base", nets.Topology((8, 4, 3), ("relu", "softmax"))
    )
    with pytest.raises(ShapeError):
        wrong_out.fit(one, np.arange(10), np.arange(10, 16), 0, cfg)


def test_oracle_model_requires_scores():
    data = toy_dataset(n_items=20)
    with pytest.raises(ValueError):
        bench.OracleThresholdModel().fit(data, np.arange(10), np.arange(10, 16), 0, FAST_CFG)


def test_oracle_model_matches_noise_rate():
    data = bench.make_feature_threshold_task(
        "entropy", n_items=40, rho=0.0, seed=5, gen=SMALL_GEN
    )
    plan = bench.SplitPlan(mode="repeated_random", repeats=3, seed=2)
    report = bench.run_benchmark(data, plan, [bench.OracleThresholdModel()], FAST_CFG)
    for r in report.runs:
        assert r.accuracy == 1.0  # noiseless labels equal the rule


def test_knn_model_clamps_k():
    data = toy_dataset(n_items=20)
    model = bench.KnnModel(k=999)
    predict, history = model.fit(data, np.arange(12), np.arange(12, 16), 0, FAST_CFG)
    assert history is None
    preds = predict(data, np.arange(16, 20))
    assert preds.shape == (4,)


def test_ensemble_model_runs():
    data = toy_dataset(n_items=40, n_channels=2)
    arts = [fake_artifact("entropy", 3, 1), fake_artifact("kurtosis", 2, 2)]
    model = bench.EnsembleFinModel("ens", arts)
    plan = bench.SplitPlan(mode="repeated_random", repeats=1, seed=6)
    report = bench.run_benchmark(data, plan, [model], FAST_CFG)
    assert len(report.runs) == 1
    assert report.runs[0].accuracy >= 0.7
    assert report.runs[0].history is not None


def run_small_benchmark(workers):
    data = toy_dataset(n_items=60, seed=3)
    models = [
        bench.TransferFinModel("fin", fake_artifact("entropy", 3, 21)),
        bench.RandomDenseModel(
            "base", nets.Topology((8, 8, 2), ("relu", "softmax"))
        ),
        bench.KnnModel(k=3),
    ]
    plan = bench.SplitPlan(mode="repeated_random", repeats=2, seed=14)
    return bench.run_benchmark(data, plan, models, FAST_CFG, workers=workers)


def test_run_benchmark_models_learn_and_workers_match():
    serial = run_small_benchmark(workers=1)
    threaded = run_small_benchmark(workers=3)
    for tag in ("fin", "base", "knn"):
        assert serial.aggregates[tag]["mean_accuracy"] >= 0.8
    assert len(serial.runs) == 6
    for a, b in zip(serial.runs, threaded.runs):
        assert a.model_tag == b.model_tag
        assert a.split_index == b.split_index
        assert a.fraction == b.fraction
        assert a.accuracy == b.accuracy
        assert a.n_train == b.n_train
        if a.history is not None:
            assert np.array_equal(a.history.val_losses, b.history.val_losses)


def test_run_benchmark_nan_poisoned_test_partition():
    data = toy_dataset(n_items=60, seed=3)
    plan = bench.SplitPlan(mode="repeated_random", repeats=1, seed=14)
    models = [
        bench.TransferFinModel("fin", fake_artifact("entropy", 3, 21)),
        bench.RandomDenseModel(
            "base", nets.Topology((8, 8, 2), ("relu", "softmax"))
        ),
    ]
    clean = bench.run_benchmark(data, plan, models, FAST_CFG)

    _, _, test_idx = bench.split_repeated(data, plan, 0)
    poisoned = bench.LabeledDataset(
        data.inputs.copy(), data.labels, 2, meta=dict(data.meta)
    )
    poisoned.inputs[test_idx] = np.nan
    report = bench.run_benchmark(poisoned, plan, models, FAST_CFG)
    # training and selection never touch the test partition
    for a, b in zip(clean.runs, report.runs):
        assert np.array_equal(a.history.val_losses, b.history.val_losses)
        assert np.all(np.isfinite(b.history.train_losses))


def test_fraction_one_matches_plain_split():
    data = toy_dataset(n_items=60, seed=9)
    models = [bench.KnnModel(k=3), bench.LinearMarginModel()]
    plain = bench.run_benchmark(
        data,
        bench.SplitPlan(mode="repeated_random", repeats=2, seed=5),
        models,
        FAST_CFG,
    )
    sweep = bench.run_benchmark(
        data,
        bench.SplitPlan(mode="fraction_sweep", fractions=(1.0,), repeats=2, seed=5),
        models,
        FAST_CFG,
    )
    assert [r.accuracy for r in plain.runs] == [r.accuracy for r in sweep.runs]


def test_run_benchmark_validation():
    data = toy_dataset(n_items=30)
    plan = bench.SplitPlan(mode="repeated_random", repeats=1, seed=0)
    dup = [bench.KnnModel(tag="m", k=1), bench.LinearMarginModel(tag="m")]
    with pytest.raises(ValueError):
        bench.run_benchmark(data, plan, dup, FAST_CFG)
    with pytest.raises(ValueError):
        bench.run_benchmark(data, plan, [bench.KnnModel()], FAST_CFG, workers=0)


# ---------------------------------------------------------------------------
# aggregates
# ---------------------------------------------------------------------------

def make_run(i, tag, k, fraction, acc, sec):
    return bench.RunRecord(i, tag, k, fraction, acc, sec, n_train=10)


def test_aggregate_runs_recompute():
    accs = {"a": [0.5, 0.7, 0.9], "b": [0.6, 0.6]}
    secs = {"a": [1.0, 2.0, 3.0], "b": [4.0, 5.0]}
    runs = []
    for tag in ("a", "b"):
        for acc, sec in zip(accs[tag], secs[tag]):
            runs.append(make_run(len(runs), tag, 0, 1.0, acc, sec))
    agg = bench.aggregate_runs(runs)
    for tag in ("a", "b"):
        assert agg[tag]["n_runs"] == len(accs[tag])
        assert abs(agg[tag]["mean_accuracy"] - np.mean(accs[tag])) < 1e-12
        assert abs(agg[tag]["std_accuracy"] - np.std(accs[tag], ddof=1)) < 1e-12
        assert abs(agg[tag]["mean_train_seconds"] - np.mean(secs[tag])) < 1e-12
    single = bench.aggregate_runs([make_run(0, "solo", 0, 1.0, 0.5, 1.0)])
    assert single["solo"]["std_accuracy"] == 0.0


def test_aggregate_fractions_order():
    runs = [
        make_run(0, "b", 0, 0.4, 0.8, 1.0),
        make_run(1, "a", 0, 0.4, 0.7, 1.0),
        make_run(2, "b", 0, 0.2, 0.6, 1.0),
        make_run(3, "a", 0, 0.2, 0.5, 1.0),
        make_run(4, "b", 1, 0.2, 0.7, 1.0),
    ]
    table = bench.aggregate_fractions(runs)
    keys = [(row["fraction"], row["model_tag"]) for row in table]
    assert keys == [(0.2, "b"), (0.2, "a"), (0.4, "b"), (0.4, "a")]
    row = table[0]
    assert row["n_runs"] == 2
    assert abs(row["mean_accuracy"] - 0.65) < 1e-12


# ---------------------------------------------------------------------------
# baseline topology search
# ---------------------------------------------------------------------------

def test_sample_search_candidates():
    cands = bench.sample_search_candidates(16, 3, 30, seed=99)
    assert len(cands) == 30
    for topo in cands:
        assert topo.layer_sizes[0] == 16
        assert topo.layer_sizes[-1] == 3
        depth = len(topo.layer_sizes) - 1
        assert 2 <= depth <= 10
        assert all(w in bench.SEARCH_WIDTHS for w in topo.layer_sizes[1:-1])
        assert topo.activations[-1] == "softmax"
        assert set(topo.activations[:-1]) <= {"relu", "tanh"}
    again = bench.sample_search_candidates(16, 3, 30, seed=99)
    assert cands == again


def test_baseline_search_prefers_fewer_params_on_tie():
    data = toy_dataset(n_items=48, seed=5150)
    cfg = nets.TrainConfig(
        learning_rate=0.5, momentum=0.9, batch_size=8, max_epochs=20,
        patience=20, seed=0,
    )
    cands = [
        nets.Topology((8, 16, 2), ("relu", "softmax")),
        nets.Topology((8, 2), ("softmax",)),
    ]
    winner, records = bench.baseline_search(
        data, cfg, seed=77, candidates=cands, n_search_splits=2
    )
    assert all(r["val_accuracy"] == 1.0 for r in records)
    assert winner == cands[1]  # tie on accuracy, fewer parameters
    assert len(records) == 4
    assert {r["candidate"] for r in records} == {0, 1}


@pytest.mark.filterwarnings("ignore:overflow encountered")
@pytest.mark.filterwarnings("ignore:invalid value encountered")
def test_baseline_search_diverged_candidate_scores_zero():
    data = toy_dataset(n_items=48, seed=5150)
    cfg = nets.TrainConfig(
        learning_rate=1e4, momentum=0.9, batch_size=8, max_epochs=20,
        patience=20, seed=0,
    )
    cands = [
        nets.Topology((8, 16, 2), ("relu", "softmax")),
        nets.Topology((8, 2), ("softmax",)),
    ]
    winner, records = bench.baseline_search(
        data, cfg, seed=77, candidates=cands, n_search_splits=2
    )
    first = [r for r in records if r["candidate"] == 0]
    assert all(r["diverged"] and r["val_accuracy"] == 0.0 for r in first)
    assert winner == cands[1]


def test_baseline_search_empty_candidates():
    data = toy_dataset(n_items=48)
    with pytest.raises(ValueError):
        bench.baseline_search(data, FAST_CFG, seed=0, candidates=[])


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

def test_export_ingest_roundtrip(tmp_path):
    for n_subjects in (None, 4):
        data = toy_dataset(n_items=12, n_channels=2, tf_dim=5, n_subjects=n_subjects)
        path = tmp_path / f"ds_{n_subjects}.csv"
        bench.export_dataset_csv(data, path)
        back = bench.ingest_dataset_csv(path)
        assert np.array_equal(back.inputs, data.inputs)  # %.17g is exact
        assert np.array_equal(back.labels, data.labels)
        assert back.n_classes == 2
        if n_subjects is None:
            assert back.subject_ids is None
        else:
            assert np.array_equal(back.subject_ids, data.subject_ids)


def write_csv(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def ingest_error(tmp_path, name, text):
    with pytest.raises(IngestError) as info:
        bench.ingest_dataset_csv(write_csv(tmp_path, name, text))
    return info.value.row


HEADER = "item_id,subject_id,label,channel,v0,v1\n"


def test_ingest_error_rows(tmp_path):
    assert ingest_error(tmp_path, "empty.csv", "") == 1
    assert ingest_error(tmp_path, "head.csv", "a,b,c,d,v0\n") == 1
    assert ingest_error(tmp_path, "cols.csv", "item_id,subject_id,label,channel,v0,v2\n") == 1
    assert ingest_error(tmp_path, "nodata.csv", HEADER) == 2
    assert ingest_error(tmp_path, "short.csv", HEADER + "0,,0,0,1.0\n") == 2
    assert ingest_error(tmp_path, "numeric.csv", HEADER + "0,,zero,0,1.0,2.0\n") == 2
    assert ingest_error(tmp_path, "neglabel.csv", HEADER + "0,,-1,0,1.0,2.0\n") == 2
    two_rows = HEADER + "0,,0,0,1.0,2.0\n0,,0,1,1.0,2.0\n"
    assert ingest_error(tmp_path, "adjacent.csv", two_rows + "1,,1,0,1.0,2.0\n0,,0,2,1.0,2.0\n") == 5
    assert ingest_error(tmp_path, "subject.csv", HEADER + "0,1,0,0,1.0,2.0\n0,2,0,1,1.0,2.0\n") == 3
    assert ingest_error(tmp_path, "label.csv", HEADER + "0,,0,0,1.0,2.0\n0,,1,1,1.0,2.0\n") == 3
    assert ingest_error(tmp_path, "chanorder.csv", HEADER + "0,,0,1,1.0,2.0\n") == 2
    ragged = HEADER + "0,,0,0,1.0,2.0\n0,,0,1,1.0,2.0\n1,,1,0,1.0,2.0\n"
    ragged += "2,,0,0,1.0,2.0\n2,,0,1,1.0,2.0\n3,,1,0,1.0,2.0\n3,,1,1,1.0,2.0\n"
    assert ingest_error(tmp_path, "ragged.csv", ragged) == 2
    mixed = HEADER + "0,,0,0,1.0,2.0\n1,7,1,0,1.0,2.0\n"
    assert ingest_error(tmp_path, "mixed.csv", mixed) == 2
    badsub = HEADER + "0,x,0,0,1.0,2.0\n1,y,1,0,1.0,2.0\n"
    assert ingest_error(tmp_path, "badsub.csv", badsub) == 2
