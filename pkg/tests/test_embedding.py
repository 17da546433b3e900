"""Vector math, exact-NN queries vs brute force, store persistence."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revkit.corpus import Label
from revkit.embedding import (
    EmbeddingRecord,
    EmbeddingVector,
    Metric,
    VectorStore,
    cosine,
    embed_texts,
    l2,
)
from revkit.errors import (
    DimMismatch,
    EmptyStore,
    ProviderError,
    ValidationError,
    ZeroVector,
)
from revkit.providers import FallbackEmbedder


def vec(*values, model_id="m"):
    return EmbeddingVector(values=np.array(values, dtype=np.float32), model_id=model_id)


class StubProvider:
    def __init__(self, vectors):
        self._vectors = vectors

    def embed(self, texts):
        return self._vectors


finite_floats = st.floats(
    min_value=-100, max_value=100, allow_nan=False, allow_infinity=False
)


class TestCosine:
    def test_identity(self):
        v = vec(1.0, 2.0, 3.0)
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine(vec(1, 0), vec(0, 1)) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed(self):
        # 32 / (sqrt(14) * sqrt(77))
        assert cosine(vec(1, 2, 3), vec(4, 5, 6)) == pytest.approx(0.974631846, abs=1e-6)

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine(vec(0, 0), vec(1, 1))

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            cosine(vec(1, 2), vec(1, 2, 3))

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(finite_floats, min_size=3, max_size=3),
        st.lists(finite_floats, min_size=3, max_size=3),
        st.integers(min_value=-8, max_value=8),
    )
    def test_symmetry_and_scale_invariance(self, a_vals, b_vals, exponent):
        a, b = vec(*a_vals), vec(*b_vals)
        if np.linalg.norm(a.values) < 1e-3 or np.linalg.norm(b.values) < 1e-3:
            return
        assert cosine(a, b) == pytest.approx(cosine(b, a), abs=1e-9)
        # power-of-two scaling is exact in float32, isolating the math from
        # storage quantization
        alpha = 2.0 ** exponent
        scaled = vec(*[alpha * x for x in a_vals])
        assert cosine(scaled, b) == pytest.approx(cosine(a, b), abs=1e-9)


class TestL2:
    def test_identity(self):
        v = vec(1, 2, 3)
        assert l2(v, v) == 0.0

    def test_three_four_five(self):
        assert l2(vec(0, 0), vec(3, 4)) == pytest.approx(5.0, abs=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            l2(vec(1), vec(1, 2))

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(finite_floats, min_size=4, max_size=4),
        st.lists(finite_floats, min_size=4, max_size=4),
        st.lists(finite_floats, min_size=4, max_size=4),
    )
    def test_triangle_inequality(self, a_vals, b_vals, c_vals):
        a, b, c = vec(*a_vals), vec(*b_vals), vec(*c_vals)
        assert l2(a, c) <= l2(a, b) + l2(b, c) + 1e-9


class TestEmbedTexts:
    def test_single_text_mock(self):
        provider = StubProvider([vec(0.6, 0.8)])
        out = embed_texts(provider, ["a"])
        assert len(out) == 1
        assert out[0].dim == 2

    def test_order_preserved_over_100_texts(self):
        # mock echoes index-tagged vectors: vector i is [i, 1]
        vectors = [vec(float(i), 1.0) for i in range(100)]
        out = embed_texts(StubProvider(vectors), [f"text {i}" for i in range(100)])
        assert [int(v.values[0]) for v in out] == list(range(100))

    def test_count_mismatch_is_provider_error(self):
        provider = StubProvider([vec(1, 2), vec(3, 4), vec(5, 6)])
        with pytest.raises(ProviderError):
            embed_texts(provider, ["a", "b", "c", "d"])

    def test_empty_texts_rejected(self):
        with pytest.raises(ValidationError):
            embed_texts(StubProvider([]), [])

    def test_inconsistent_dims(self):
        provider = StubProvider([vec(1, 2), vec(1, 2, 3)])
        with pytest.raises(DimMismatch):
            embed_texts(provider, ["a", "b"])


def _record(rid, values, label=Label.ACCEPTABLE, provision="1"):
    return EmbeddingRecord(
        revision_id=rid, vector=vec(*values), label=label, provision_number=provision
    )


def _random_store(n=1000, dim=16, seed=42):
    rng = np.random.RandomState(seed)
    store = VectorStore()
    rows = rng.randn(n, dim).astype(np.float32)
    for i in range(n):
        store.add(
            EmbeddingRecord(
                revision_id=f"r{i:05d}",
                vector=EmbeddingVector(values=rows[i], model_id="m"),
                label=Label.ACCEPTABLE if i % 2 == 0 else Label.UNACCEPTABLE,
                provision_number=str(i % 7),
            )
        )
    return store, rows


def _brute_force(store, query, metric, top_k):
    scored = []
    for record in store.records:
        if metric is Metric.COSINE:
            score = cosine(record.vector, query)
            key = (-score, record.revision_id)
        else:
            score = l2(record.vector, query)
            key = (score, record.revision_id)
        scored.append((key, record.revision_id, score))
    scored.sort(key=lambda t: t[0])
    return [(rid, score) for _, rid, score in scored[:top_k]]


class TestQuery:
    def test_self_retrieval(self):
        store = VectorStore()
        store.add(_record("a", [1, 2, 3]))
        store.add(_record("b", [-3, 1, 0]))
        hits = store.query(vec(1, 2, 3), Metric.COSINE, top_k=1)
        assert hits[0].record.revision_id == "a"
        assert hits[0].score == pytest.approx(1.0, abs=1e-9)

    def test_tie_break_ascending_id(self):
        store = VectorStore()
        store.add(_record("zz", [1, 0]))
        store.add(_record("aa", [2, 0]))  # same direction, same cosine
        hits = store.query(vec(1, 0), Metric.COSINE, top_k=2)
        assert [h.record.revision_id for h in hits] == ["aa", "zz"]

    @pytest.mark.parametrize("metric", [Metric.COSINE, Metric.L2])
    def test_matches_brute_force_oracle(self, metric):
        store, _rows = _random_store(n=1000)
        rng = np.random.RandomState(7)
        for _ in range(5):
            query = EmbeddingVector(
                values=rng.randn(16).astype(np.float32), model_id="m"
            )
            hits = store.query(query, metric, top_k=10)
            expected = _brute_force(store, query, metric, 10)
            assert [(h.record.revision_id) for h in hits] == [rid for rid, _ in expected]
            for hit, (_, score) in zip(hits, expected):
                assert hit.score == pytest.approx(score, abs=1e-9)

    def test_results_are_prefix_of_full_order(self):
        store, _ = _random_store(n=200, dim=8)
        query = vec(*np.ones(8))
        full = store.query(query, Metric.COSINE, top_k=200)
        partial = store.query(query, Metric.COSINE, top_k=7)
        assert [h.record.revision_id for h in partial] == [
            h.record.revision_id for h in full[:7]
        ]

    def test_filter_and_empty_after_filter(self):
        store = VectorStore()
        store.add(_record("a", [1, 0], label=Label.ACCEPTABLE))
        store.add(_record("b", [0, 1], label=Label.UNACCEPTABLE))
        hits = store.query(
            vec(1, 1), Metric.COSINE, top_k=5,
            filter=lambda r: r.label is Label.UNACCEPTABLE,
        )
        assert [h.record.revision_id for h in hits] == ["b"]
        with pytest.raises(EmptyStore):
            store.query(vec(1, 1), top_k=5, filter=lambda r: False)

    def test_empty_store(self):
        with pytest.raises(EmptyStore):
            VectorStore().query(vec(1, 2), top_k=3)

    def test_dim_mismatch(self):
        store = VectorStore()
        store.add(_record("a", [1, 2, 3]))
        with pytest.raises(DimMismatch):
            store.query(vec(1, 2), top_k=1)

    def test_exactly_min_topk_matching(self):
        store = VectorStore()
        store.add(_record("a", [1, 0]))
        store.add(_record("b", [0, 1]))
        assert len(store.query(vec(1, 1), top_k=10)) == 2

    def test_duplicate_id_rejected(self):
        store = VectorStore()
        store.add(_record("a", [1, 0]))
        with pytest.raises(ValidationError):
            store.add(_record("a", [0, 1]))

    def test_model_mismatch_rejected(self):
        store = VectorStore()
        store.add(_record("a", [1, 0]))
        with pytest.raises(ValidationError):
            store.add(
                EmbeddingRecord(
                    revision_id="b",
                    vector=vec(1, 1, model_id="other"),
                    label=Label.ACCEPTABLE,
                    provision_number="1",
                )
            )


class TestPersistence:
    def test_roundtrip_bytes_and_queries(self, tmp_path):
        store, _ = _random_store(n=50, dim=8)
        base = tmp_path / "emb"
        store.save(base)
        loaded = VectorStore.open(base)
        assert len(loaded) == 50
        for original, reloaded in zip(store.records, loaded.records):
            assert original.revision_id == reloaded.revision_id
            assert original.vector.values.tobytes() == reloaded.vector.values.tobytes()
            assert original.label is reloaded.label
        query = vec(*np.ones(8))
        before = [(h.record.revision_id, h.score) for h in store.query(query, top_k=10)]
        after = [(h.record.revision_id, h.score) for h in loaded.query(query, top_k=10)]
        assert before == after

    def test_append_while_attached(self, tmp_path):
        base = tmp_path / "emb"
        store = VectorStore.open(base)
        store.add(_record("a", [1, 2]))
        store.add(_record("b", [3, 4]))
        reloaded = VectorStore.open(base)
        assert [r.revision_id for r in reloaded.records] == ["a", "b"]

    def test_trailing_garbage_in_bin_is_ignored(self, tmp_path):
        base = tmp_path / "emb"
        store = VectorStore.open(base)
        store.add(_record("a", [1, 2]))
        # simulate a torn write: vector bytes landed, index line did not
        with (tmp_path / "emb.bin").open("ab") as fh:
            fh.write(b"\x00" * 5)
        reloaded = VectorStore.open(base)
        assert [r.revision_id for r in reloaded.records] == ["a"]


class TestFallbackEmbedder:
    def test_deterministic_across_instances(self):
        a = FallbackEmbedder().embed(["indemnify the buyer"])[0]
        b = FallbackEmbedder().embed(["indemnify the buyer"])[0]
        assert a.values.tobytes() == b.values.tobytes()

    def test_unit_norm(self):
        v = FallbackEmbedder().embed(["payment due in thirty days"])[0]
        assert math.isclose(float(np.linalg.norm(v.values)), 1.0, abs_tol=1e-5)

    def test_dim_and_model_id(self):
        v = FallbackEmbedder().embed(["x"])[0]
        assert v.dim == 256
        assert v.model_id == "fallback-hash-256"

    def test_similar_texts_closer_than_unrelated(self):
        embedder = FallbackEmbedder()
        base, paraphrase, unrelated = embedder.embed([
            "supplier shall maintain liability insurance of one million dollars",
            "supplier shall maintain liability insurance of two million dollars",
            "all notices must be sent by certified mail to the listed address",
        ])
        assert cosine(base, paraphrase) > cosine(base, unrelated)

    def test_empty_text_embeds_without_zero_vector(self):
        v = FallbackEmbedder().embed(["...."])[0]
        assert float(np.linalg.norm(v.values)) > 0
