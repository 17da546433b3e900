"""k-means, logistic training, the routed ensemble, zero-shot, metrics."""

import math

import numpy as np
import pytest

from revkit.classifier import (
    EnsembleModel,
    LogisticHead,
    TrainConfig,
    build_zero_shot_prompt,
    evaluate_classifier,
    kmeans,
    load_model,
    logistic_loss_and_grad,
    model_from_dict,
    model_to_dict,
    parse_zero_shot_reply,
    predict,
    save_model,
    split_train_val,
    train_ensemble,
    train_logistic,
    zero_shot_classify,
)
from revkit.corpus import Label
from revkit.embedding import EmbeddingRecord, EmbeddingVector
from revkit.errors import (
    DimMismatch,
    EmptyTestSet,
    MalformedLLMOutput,
    TooFewPoints,
    ValidationError,
)
from revkit.providers import ScriptedLLMClient

from conftest import build_store, make_revision


def _vec(values, model_id="m"):
    return EmbeddingVector(values=np.asarray(values, dtype=np.float32), model_id=model_id)


def _record(rid, values, label, provision="1"):
    return EmbeddingRecord(
        revision_id=rid, vector=_vec(values), label=label, provision_number=provision
    )


class TestKMeans:
    def test_k_equals_n_gives_zero_inertia(self):
        X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
        result = kmeans(X, K=4, seed=0)
        assert result.inertia == pytest.approx(0.0, abs=1e-12)
        assert sorted(result.assignments.tolist()) == [0, 1, 2, 3]

    def test_two_separated_blobs(self):
        rng = np.random.RandomState(0)
        blob_a = rng.randn(50, 2) * 0.1 + np.array([10.0, 0.0])
        blob_b = rng.randn(50, 2) * 0.1 + np.array([-10.0, 0.0])
        X = np.vstack([blob_a, blob_b])
        result = kmeans(X, K=2, seed=3)
        first_half = set(result.assignments[:50].tolist())
        second_half = set(result.assignments[50:].tolist())
        assert len(first_half) == 1
        assert len(second_half) == 1
        assert first_half != second_half

    def test_deterministic_bitwise(self):
        rng = np.random.RandomState(1)
        X = rng.randn(100, 4)
        a = kmeans(X, K=5, seed=42)
        b = kmeans(X, K=5, seed=42)
        assert a.centroids.tobytes() == b.centroids.tobytes()
        assert np.array_equal(a.assignments, b.assignments)

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            kmeans(np.zeros((2, 3)), K=5)

    def test_duplicate_points_degenerate_case(self):
        # only 2 distinct values for K=3: duplicate centroids are unavoidable,
        # but every point must still sit on a centroid (zero inertia)
        X = np.vstack([np.ones((6, 2)), np.zeros((3, 2))])
        result = kmeans(X, K=3, seed=0)
        assert result.inertia == pytest.approx(0.0, abs=1e-12)
        assert len(set(result.assignments.tolist())) >= 2

    def test_ensemble_survives_duplicate_heavy_data(self):
        records = [
            _record(f"a{i}", [1.0, 0.0], Label.ACCEPTABLE) for i in range(18)
        ] + [
            _record(f"u{i}", [-1.0, 0.0], Label.UNACCEPTABLE) for i in range(2)
        ]
        model = train_ensemble(records, TrainConfig(K=3, seed=0, epochs=50))
        prediction = predict(model, _vec([1.0, 0.0]))
        assert prediction.label is Label.ACCEPTABLE


def _separable_fixture(n=60, seed=0):
    rng = np.random.RandomState(seed)
    angles_pos = rng.uniform(0.2, 1.3, n // 2)
    angles_neg = rng.uniform(-1.3, -0.2, n // 2)
    X = np.vstack(
        [
            np.column_stack([np.cos(angles_pos), np.sin(angles_pos)]),
            np.column_stack([np.cos(angles_neg), np.sin(angles_neg)]),
        ]
    )
    y = np.concatenate([np.ones(n // 2), np.zeros(n // 2)])
    return X, y


class TestTrainLogistic:
    def test_separable_fixture_reaches_full_accuracy(self):
        X, y = _separable_fixture()
        head = train_logistic(X, y, TrainConfig(K=1, epochs=500))
        predictions = [1.0 if head.probability(row) >= 0.5 else 0.0 for row in X]
        assert predictions == y.tolist()

    def test_gradient_matches_finite_differences(self):
        rng = np.random.RandomState(7)
        for _ in range(5):
            n, d = 12, 5
            X = rng.randn(n, d)
            X /= np.linalg.norm(X, axis=1, keepdims=True)
            y = (rng.rand(n) > 0.5).astype(float)
            w = rng.randn(d) * 0.5
            b = float(rng.randn())
            lam = 1e-3
            _, grad_w, grad_b = logistic_loss_and_grad(w, b, X, y, lam)
            eps = 1e-5
            for j in range(d):
                w_plus, w_minus = w.copy(), w.copy()
                w_plus[j] += eps
                w_minus[j] -= eps
                numeric = (
                    logistic_loss_and_grad(w_plus, b, X, y, lam)[0]
                    - logistic_loss_and_grad(w_minus, b, X, y, lam)[0]
                ) / (2 * eps)
                rel = abs(grad_w[j] - numeric) / max(abs(grad_w[j]) + abs(numeric), 1e-3)
                assert rel < 1e-4
            numeric_b = (
                logistic_loss_and_grad(w, b + eps, X, y, lam)[0]
                - logistic_loss_and_grad(w, b - eps, X, y, lam)[0]
            ) / (2 * eps)
            rel_b = abs(grad_b - numeric_b) / max(abs(grad_b) + abs(numeric_b), 1e-3)
            assert rel_b < 1e-4

    def test_loss_monotone_nonincreasing(self):
        X, y = _separable_fixture(n=80, seed=3)
        head = train_logistic(X, y, TrainConfig(K=1, epochs=300))
        history = head.loss_history
        assert len(history) == 301
        for earlier, later in zip(history, history[1:]):
            assert later <= earlier + 1e-9

    def test_single_class_constant_head(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
        head = train_logistic(X, np.ones(3), TrainConfig(K=1))
        assert np.all(head.weights == 0.0)
        assert head.probability(np.array([5.0, -3.0])) == pytest.approx(0.99, abs=1e-12)
        head = train_logistic(X, np.zeros(3), TrainConfig(K=1))
        assert head.probability(np.array([1.0, 1.0])) == pytest.approx(0.01, abs=1e-12)

    def test_bad_labels_rejected(self):
        with pytest.raises(ValidationError):
            train_logistic(np.eye(2), np.array([0.0, 2.0]), TrainConfig(K=1))


def _circle_records(n, seed, two_cluster=False):
    """Unit-circle fixture; two_cluster plants opposing boundaries."""
    rng = np.random.RandomState(seed)
    records = []
    for i in range(n):
        right = i % 2 == 0
        center = 0.0 if right else math.pi
        angle = center + rng.uniform(-1.0, 1.0)
        x = np.array([math.cos(angle), math.sin(angle)])
        above = x[1] > 0
        if two_cluster:
            acceptable = above if right else not above
        else:
            acceptable = above
        records.append(
            _record(
                f"p{i:04d}", x,
                Label.ACCEPTABLE if acceptable else Label.UNACCEPTABLE,
                provision=str(i % 3),
            )
        )
    return records


class TestTrainEnsemble:
    def test_k1_reduces_to_plain_logistic_bitwise(self):
        records = _circle_records(500, seed=11)
        config = TrainConfig(K=1, seed=5, epochs=200)
        model = train_ensemble(records, config)
        train_idx, _val_idx = split_train_val(len(records), config.val_fraction, config.seed)
        X = np.stack([r.vector.values.astype(np.float64) for r in records])
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        y = np.array([1.0 if r.label is Label.ACCEPTABLE else 0.0 for r in records])
        plain = train_logistic(X[train_idx], y[train_idx], config)
        for record in records:
            ensemble_p = predict(model, record.vector).probability_acceptable
            x = record.vector.values.astype(np.float64)
            plain_p = plain.probability(x / np.linalg.norm(x))
            assert ensemble_p == plain_p  # bitwise

    def test_two_cluster_mixture_beats_k1_by_ten_points(self):
        records = _circle_records(400, seed=2, two_cluster=True)
        k1 = train_ensemble(records, TrainConfig(K=1, seed=9, epochs=300))
        k2 = train_ensemble(records, TrainConfig(K=2, seed=9, epochs=300))
        assert (
            k2.metrics["val_accuracy"] - k1.metrics["val_accuracy"] >= 0.10
        )

    def test_too_few_points(self):
        records = _circle_records(10, seed=0)
        with pytest.raises(TooFewPoints):
            train_ensemble(records, TrainConfig(K=8))

    def test_metrics_recorded(self):
        records = _circle_records(100, seed=4)
        model = train_ensemble(records, TrainConfig(K=2, seed=1, epochs=100))
        assert model.metrics["train_count"] == 90
        assert model.metrics["val_count"] == 10
        assert len(model.metrics["per_cluster"]) == 2
        assert sum(c["count"] for c in model.metrics["per_cluster"]) == 90

    def test_unlabeled_records_rejected(self):
        records = _circle_records(20, seed=0)
        bad = _record("x", [1.0, 0.0], Label.UNLABELED)
        with pytest.raises(ValidationError):
            train_ensemble(records + [bad], TrainConfig(K=1))


def _hand_model(weights, bias, centroids=None, model_id="m"):
    weights = np.asarray(weights, dtype=np.float64)
    centroids = (
        np.asarray(centroids, dtype=np.float64)
        if centroids is not None
        else weights.reshape(1, -1)
    )
    heads = tuple(
        LogisticHead(weights=weights, bias=bias, final_loss=0.0)
        for _ in range(len(centroids))
    )
    return EnsembleModel(
        model_id=model_id,
        dim=weights.shape[0],
        centroids=centroids,
        heads=heads,
        train_config=TrainConfig(K=len(centroids)),
        metrics={},
    )


class TestPredict:
    def test_vector_equal_to_centroid_routes_there(self):
        centroids = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        model = _hand_model([0.5, 0.5], 0.0, centroids=centroids)
        assert predict(model, _vec([0.0, 1.0])).cluster_id == 1
        assert predict(model, _vec([-2.0, 0.0])).cluster_id == 2

    def test_routing_tie_takes_lowest_cluster_id(self):
        centroids = np.array([[1.0, 0.0], [1.0, 0.0]])
        model = _hand_model([1.0, 0.0], 0.0, centroids=centroids)
        assert predict(model, _vec([3.0, 0.0])).cluster_id == 0

    def test_hand_computed_sigmoid(self):
        model = _hand_model([2.0, -1.0], 0.5)
        # hand computation starts from the stored float32 values
        x = np.array([0.6, 0.8], dtype=np.float32).astype(np.float64)
        x_hat = x / np.linalg.norm(x)
        expected = 1.0 / (1.0 + math.exp(-(2.0 * x_hat[0] - 1.0 * x_hat[1] + 0.5)))
        prediction = predict(model, _vec([0.6, 0.8]))
        assert prediction.probability_acceptable == pytest.approx(expected, abs=1e-9)

    def test_label_threshold(self):
        model = _hand_model([1.0, 0.0], 0.0)
        assert predict(model, _vec([1.0, 0.0])).label is Label.ACCEPTABLE
        assert predict(model, _vec([-1.0, 0.0])).label is Label.UNACCEPTABLE

    def test_scale_invariance(self):
        model = _hand_model([1.3, -0.4], 0.2)
        small = predict(model, _vec([0.01, 0.02]))
        large = predict(model, _vec([1000.0, 2000.0]))
        assert small.probability_acceptable == pytest.approx(
            large.probability_acceptable, abs=1e-12
        )
        assert small.cluster_id == large.cluster_id

    def test_dim_mismatch(self):
        model = _hand_model([1.0, 0.0], 0.0)
        with pytest.raises(DimMismatch):
            predict(model, _vec([1.0, 0.0, 0.0]))


class TestZeroShot:
    def _store_and_texts(self, fallback):
        revisions = [
            make_revision(f"a{i}", f"payment due within {30 + i} days of invoice", Label.ACCEPTABLE, "2")
            for i in range(3)
        ] + [
            make_revision(f"u{i}", f"payment deferred indefinitely case {i}", Label.UNACCEPTABLE, "2")
            for i in range(3)
        ]
        return build_store(revisions, fallback), {r.id: r.text for r in revisions}

    def test_acceptable_reply(self, fallback):
        store, texts = self._store_and_texts(fallback)
        llm = ScriptedLLMClient(["Label: ACCEPTABLE\nJustification: mirrors precedent"])
        revision = make_revision("q", "payment due within 45 days of invoice", Label.UNLABELED, "2", )
        out = zero_shot_classify(
            llm, store, revision, k_demos=2, texts=texts, provider=fallback
        )
        assert out["label"] is Label.ACCEPTABLE
        assert out["justification"] == "mirrors precedent"

    def test_lowercase_dashed_reply(self, fallback):
        store, texts = self._store_and_texts(fallback)
        llm = ScriptedLLMClient(["label: unacceptable — shifts all liability"])
        revision = make_revision("q", "payment maybe someday", Label.UNLABELED, "2")
        out = zero_shot_classify(
            llm, store, revision, k_demos=2, texts=texts, provider=fallback
        )
        assert out["label"] is Label.UNACCEPTABLE

    def test_no_label_line_raises(self, fallback):
        store, texts = self._store_and_texts(fallback)
        llm = ScriptedLLMClient(["I think this looks fine."])
        revision = make_revision("q", "payment text", Label.UNLABELED, "2")
        with pytest.raises(MalformedLLMOutput):
            zero_shot_classify(
                llm, store, revision, k_demos=2, texts=texts, provider=fallback
            )

    def test_insufficient_demos_rejected(self, fallback):
        store, texts = self._store_and_texts(fallback)
        revision = make_revision("q", "payment text", Label.UNLABELED, "2")
        with pytest.raises(ValidationError):
            zero_shot_classify(
                ScriptedLLMClient([]), store, revision, k_demos=5,
                texts=texts, provider=fallback,
            )

    def test_prompt_interleaves_demos(self, fallback):
        store, texts = self._store_and_texts(fallback)
        llm = ScriptedLLMClient(["Label: ACCEPTABLE"])
        revision = make_revision("q", "payment due within 31 days of invoice", Label.UNLABELED, "2")
        zero_shot_classify(llm, store, revision, k_demos=2, texts=texts, provider=fallback)
        prompt = llm.prompts[0]
        assert prompt.count("Demonstration") == 4
        assert prompt.count("Label: ACCEPTABLE") >= 2
        assert prompt.count("Label: UNACCEPTABLE") == 2
        assert "Query Revision:" in prompt

    def test_parse_reply_direct(self):
        label, justification = parse_zero_shot_reply(
            "Some preamble\nLabel: Acceptable\nJustification: consistent with precedent\n"
        )
        assert label is Label.ACCEPTABLE
        assert justification == "consistent with precedent"

    def test_build_prompt_layout(self):
        prompt = build_zero_shot_prompt(
            [("text a", Label.ACCEPTABLE), ("text b", Label.UNACCEPTABLE)], "query text"
        )
        assert prompt.index("Demonstration 1") < prompt.index("Demonstration 2")
        assert prompt.index("Demonstration 2") < prompt.index("Query Revision: query text")


class TestEvaluateClassifier:
    def test_perfect_predictions(self):
        model = _hand_model([1.0, 0.0], 0.0)
        records = [
            _record(f"a{i}", [1.0, 0.1 * i], Label.ACCEPTABLE) for i in range(5)
        ] + [
            _record(f"u{i}", [-1.0, 0.1 * i], Label.UNACCEPTABLE) for i in range(5)
        ]
        metrics = evaluate_classifier(model, records)
        assert metrics["accuracy"] == 1.0
        assert metrics["f1_acceptable"] == 1.0
        assert metrics["f1_unacceptable"] == 1.0
        assert metrics["macro_f1"] == 1.0

    def test_hand_confusion_matrix(self):
        model = _hand_model([1.0, 0.0], 0.0)
        records = (
            [_record(f"tp{i}", [1.0, 0.0], Label.ACCEPTABLE) for i in range(8)]
            + [_record(f"fn{i}", [-1.0, 0.0], Label.ACCEPTABLE) for i in range(2)]
            + [_record(f"fp{i}", [1.0, 0.0], Label.UNACCEPTABLE) for i in range(2)]
            + [_record(f"tn{i}", [-1.0, 0.0], Label.UNACCEPTABLE) for i in range(8)]
        )
        metrics = evaluate_classifier(model, records)
        assert metrics["confusion"] == {"tp": 8, "fp": 2, "fn": 2, "tn": 8}
        assert metrics["accuracy"] == pytest.approx(0.8)
        assert metrics["f1_acceptable"] == pytest.approx(0.8)
        assert metrics["f1_unacceptable"] == pytest.approx(0.8)

    def test_degenerate_all_acceptable_predictor(self):
        prior = math.log(0.99 / 0.01)
        model = _hand_model([0.0, 0.0], prior)
        records = [
            _record(f"a{i}", [1.0, float(i + 1)], Label.ACCEPTABLE) for i in range(10)
        ] + [
            _record(f"u{i}", [-1.0, float(i + 1)], Label.UNACCEPTABLE) for i in range(10)
        ]
        metrics = evaluate_classifier(model, records)
        assert metrics["accuracy"] == pytest.approx(0.5)
        assert metrics["f1_unacceptable"] == 0.0

    def test_empty_test_set(self):
        model = _hand_model([1.0, 0.0], 0.0)
        with pytest.raises(EmptyTestSet):
            evaluate_classifier(model, [])


class TestSerialization:
    def test_roundtrip_preserves_predictions_bitwise(self, tmp_path):
        records = _circle_records(120, seed=8)
        model = train_ensemble(records, TrainConfig(K=3, seed=2, epochs=150))
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        rng = np.random.RandomState(0)
        for _ in range(50):
            probe = _vec(rng.randn(2))
            a = predict(model, probe)
            b = predict(loaded, probe)
            assert a.probability_acceptable == b.probability_acceptable
            assert a.cluster_id == b.cluster_id
            assert a.label is b.label

    def test_version_field_mandatory(self):
        records = _circle_records(50, seed=8)
        model = train_ensemble(records, TrainConfig(K=1, epochs=50))
        doc = model_to_dict(model)
        assert doc["version"] == 1
        del doc["version"]
        with pytest.raises(ValidationError):
            model_from_dict(doc)

    def test_train_config_roundtrips(self):
        records = _circle_records(60, seed=1)
        config = TrainConfig(K=2, seed=77, epochs=80, learning_rate=0.05)
        model = train_ensemble(records, config)
        restored = model_from_dict(model_to_dict(model))
        assert restored.train_config == config
        assert restored.metrics == model.metrics


class TestTrainConfig:
    def test_defaults_match_reference_settings(self):
        config = TrainConfig()
        assert config.K == 8
        assert config.val_fraction == 0.1

    def test_val_fraction_bounds(self):
        with pytest.raises(ValidationError):
            TrainConfig(val_fraction=1.0)

    def test_split_deterministic_and_disjoint(self):
        train_a, val_a = split_train_val(100, 0.1, seed=3)
        train_b, val_b = split_train_val(100, 0.1, seed=3)
        assert train_a == train_b and val_a == val_b
        assert len(val_a) == 10
        assert set(train_a) | set(val_a) == set(range(100))
        assert not set(train_a) & set(val_a)
