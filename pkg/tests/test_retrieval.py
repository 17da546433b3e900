"""Precedent retrieval, graded pairs, reranking, clause dependencies."""

import json

import pytest

from revkit.corpus import Contract, ContractKind, Label, Provision
from revkit.embedding import VectorStore
from revkit.errors import (
    EmptyStore,
    InsufficientData,
    MalformedLLMOutput,
    ScorerUnavailable,
    UnknownGoldId,
    ValidationError,
)
from revkit.providers import FallbackEmbedder, ScriptedLLMClient
from revkit.retrieval import (
    GradedPairConfig,
    RankedCandidate,
    ScoredPair,
    build_graded_pairs,
    evaluate_retrieval,
    export_graded_pairs,
    extract_clause_dependencies,
    related_clauses,
    rerank,
    retrieve_precedents,
)

from conftest import build_store, make_revision


class OracleScorer:
    """Deterministic scorer over a (query, text) -> score table."""

    def __init__(self, table, default=0.0):
        self.table = table
        self.default = default

    def score(self, query, texts):
        return [self.table.get((query, t), self.default) for t in texts]


class ConstantScorer:
    def score(self, query, texts):
        return [0.5] * len(texts)


class FailingScorer:
    def score(self, query, texts):
        raise ScorerUnavailable("scorer endpoint down")


@pytest.fixture
def precedent_store(fallback):
    revisions = [
        make_revision("r1", "Supplier shall maintain liability insurance of one million dollars.", provision="4"),
        make_revision("r2", "Payment is due within ninety days of invoice receipt.", provision="2", label=Label.UNACCEPTABLE),
        make_revision("r3", "Either party may terminate upon sixty days written notice.", provision="3"),
        make_revision("r4", "All notices must be sent by certified mail.", provision="6"),
    ]
    return build_store(revisions, fallback), {r.id: r for r in revisions}


class TestRetrievePrecedents:
    def test_exact_duplicate_ranked_first(self, fallback, precedent_store):
        store, revisions = precedent_store
        query = make_revision(
            "q", "Supplier shall maintain liability insurance of one million dollars.",
            provision="4",
        )
        hits = retrieve_precedents(store, query, top_k=3, provider=fallback)
        assert hits[0].record.revision_id == "r1"
        assert hits[0].score == pytest.approx(1.0, abs=1e-6)

    def test_paraphrase_source_in_top_results(self, fallback, precedent_store):
        store, _ = precedent_store
        # rule-based synonym swap of r3
        query = make_revision(
            "q", "Either party may terminate upon sixty days advance notice.",
            provision="3",
        )
        hits = retrieve_precedents(store, query, top_k=10, provider=fallback)
        assert "r3" in [h.record.revision_id for h in hits[:10]]
        assert hits[0].record.revision_id == "r3"

    def test_query_excludes_own_id(self, fallback, precedent_store):
        store, revisions = precedent_store
        hits = retrieve_precedents(store, revisions["r1"], top_k=10)
        assert "r1" not in [h.record.revision_id for h in hits]

    def test_empty_store(self, fallback):
        query = make_revision("q", "anything")
        with pytest.raises(EmptyStore):
            retrieve_precedents(VectorStore(), query, top_k=5, provider=fallback)


def _graded_fixture():
    revisions = [
        make_revision("a1", "Payment due in sixty days.", Label.ACCEPTABLE, "2"),
        make_revision("a2", "Payment due in forty-five days.", Label.ACCEPTABLE, "2"),
        make_revision("u1", "Payment due in one year.", Label.UNACCEPTABLE, "2"),
        make_revision("a3", "Confidentiality survives five years.", Label.ACCEPTABLE, "9"),
        make_revision("u2", "No confidentiality obligations.", Label.UNACCEPTABLE, "9"),
    ]
    paraphrases = {"a1": "Payment is owed within sixty days."}
    return revisions, paraphrases


class TestBuildGradedPairs:
    def test_labels_by_relation(self):
        revisions, paraphrases = _graded_fixture()
        pairs = build_graded_pairs(revisions, paraphrases, GradedPairConfig(per_class=100, seed=1))
        by_label = {}
        for pair in pairs:
            by_label.setdefault(pair.label, []).append(pair)
        assert {p.text_b for p in by_label[1.0]} == {"Payment is owed within sixty days."}
        assert {frozenset((p.text_a, p.text_b)) for p in by_label[0.5]} == {
            frozenset(("Payment due in sixty days.", "Payment due in forty-five days."))
        }
        assert len(by_label[0.3]) == 3  # (a1,u1), (a2,u1), (a3,u2)
        assert len(by_label[0.0]) == 6  # cross-provision combinations

    def test_balanced_sampling_caps_classes(self):
        revisions, paraphrases = _graded_fixture()
        pairs = build_graded_pairs(revisions, paraphrases, GradedPairConfig(per_class=2, seed=0))
        counts = {}
        for pair in pairs:
            counts[pair.label] = counts.get(pair.label, 0) + 1
        assert counts[0.0] == 2
        assert counts[0.3] == 2
        assert counts[0.5] == 1  # only one candidate exists
        assert counts[1.0] == 1

    def test_deterministic_given_seed(self):
        revisions, paraphrases = _graded_fixture()
        config = GradedPairConfig(per_class=2, seed=42)
        first = build_graded_pairs(revisions, paraphrases, config)
        second = build_graded_pairs(revisions, paraphrases, config)
        assert first == second

    def test_missing_class_raises(self):
        revisions, _ = _graded_fixture()
        with pytest.raises(InsufficientData):
            build_graded_pairs(revisions, {}, GradedPairConfig(per_class=2))

    def test_single_provision_has_no_unrelated(self):
        revisions = [
            make_revision("a1", "text one", Label.ACCEPTABLE, "2"),
            make_revision("a2", "text two", Label.ACCEPTABLE, "2"),
            make_revision("u1", "text three", Label.UNACCEPTABLE, "2"),
        ]
        with pytest.raises(InsufficientData):
            build_graded_pairs(revisions, {"a1": "paraphrase"}, GradedPairConfig())

    def test_invalid_label_rejected(self):
        with pytest.raises(ValidationError):
            ScoredPair("a", "b", 0.7)

    def test_export_jsonl(self, tmp_path):
        pairs = [ScoredPair("alpha", "beta", 0.5), ScoredPair("x", "y", 0.0)]
        path = tmp_path / "pairs.jsonl"
        export_graded_pairs(pairs, path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert rows == [
            {"text_a": "alpha", "text_b": "beta", "label": 0.5},
            {"text_a": "x", "text_b": "y", "label": 0.0},
        ]


class TestRerank:
    def _candidates(self):
        return [
            RankedCandidate("c1", "unrelated clause about notices", 0.9),
            RankedCandidate("c2", "same provision acceptable text", 0.8),
            RankedCandidate("c3", "paraphrase of the query", 0.7),
        ]

    def test_graded_oracle_ordering(self):
        query = "the query revision"
        scorer = OracleScorer(
            {
                (query, "paraphrase of the query"): 1.0,
                (query, "same provision acceptable text"): 0.5,
                (query, "unrelated clause about notices"): 0.0,
            }
        )
        out = rerank(scorer, query, self._candidates(), keep=3)
        assert [c.revision_id for c in out] == ["c3", "c2", "c1"]

    def test_constant_scorer_gives_id_order(self):
        out = rerank(ConstantScorer(), "q", self._candidates(), keep=3)
        assert [c.revision_id for c in out] == ["c1", "c2", "c3"]

    def test_keep_one_is_argmax(self):
        candidates = [RankedCandidate(f"c{i}", f"text {i}", 0.0) for i in range(10)]
        table = {("q", f"text {i}"): (7 - i) % 10 / 10 for i in range(10)}
        scorer = OracleScorer(table)
        out = rerank(scorer, "q", candidates, keep=1)
        best = max(candidates, key=lambda c: table[("q", c.text)])
        assert out[0].revision_id == best.revision_id

    def test_never_adds_or_drops_besides_truncation(self):
        candidates = self._candidates()
        out = rerank(ConstantScorer(), "q", candidates, keep=2)
        assert len(out) == 2
        assert {c.revision_id for c in out} <= {c.revision_id for c in candidates}

    def test_empty_candidates_rejected(self):
        with pytest.raises(ValidationError):
            rerank(ConstantScorer(), "q", [], keep=1)

    def test_keep_bounds(self):
        with pytest.raises(ValidationError):
            rerank(ConstantScorer(), "q", self._candidates(), keep=4)

    def test_scorer_failure_propagates(self):
        with pytest.raises(ScorerUnavailable):
            rerank(FailingScorer(), "q", self._candidates(), keep=1)


def _contract_with_references():
    provisions = (
        Provision(number="1", title="Term", text="The term lasts twelve months."),
        Provision(number="2", title="Payment", text="Payment due per the rates in Section 5."),
        Provision(number="5", title="Rates", text="Rates are fixed for the term."),
        Provision(number="7", title="Notices", text="Notices must be written."),
    )
    return Contract(id="c-ref", kind=ContractKind.SERVICE, provisions=provisions)


class TestClauseDependencies:
    def test_mock_llm_evidence_parsed(self):
        contract = _contract_with_references()
        llm = ScriptedLLMClient(
            ['{"keywords":["indemnity"],"key_phrases":[],"references":["Section 5"]}']
        )
        evidence = extract_clause_dependencies(llm, contract, contract.provisions[1])
        assert evidence == {
            "keywords": ["indemnity"],
            "key_phrases": [],
            "references": ["Section 5"],
        }

    def test_prose_wrapped_json_extracted(self):
        contract = _contract_with_references()
        llm = ScriptedLLMClient(
            [
                'Sure! Here is the analysis you asked for:\n'
                '{"keywords": ["payment", "rates"], "key_phrases": ["per the rates"],'
                ' "references": ["Section 5"]}\nLet me know if you need more.'
            ]
        )
        evidence = extract_clause_dependencies(llm, contract, contract.provisions[1])
        assert evidence["keywords"] == ["payment", "rates"]
        assert evidence["references"] == ["Section 5"]

    def test_no_json_retries_once_then_raises(self):
        contract = _contract_with_references()
        llm = ScriptedLLMClient(["no json here", "still no json"])
        with pytest.raises(MalformedLLMOutput):
            extract_clause_dependencies(llm, contract, contract.provisions[1])
        assert len(llm.prompts) == 2

    def test_retry_recovers(self):
        contract = _contract_with_references()
        llm = ScriptedLLMClient(
            ["garbage", '{"keywords":[],"key_phrases":[],"references":[]}']
        )
        evidence = extract_clause_dependencies(llm, contract, contract.provisions[1])
        assert evidence["keywords"] == []


class TestRelatedClauses:
    def test_zero_threshold_returns_all_others(self):
        contract = _contract_with_references()
        deps = related_clauses(ConstantScorer(), contract, contract.provisions[0], threshold=0.0)
        assert {d.target_number for d in deps} == {"2", "5", "7"}

    def test_reference_override_beats_threshold(self):
        contract = _contract_with_references()
        evidence = {"keywords": [], "key_phrases": [], "references": ["Section 5"]}
        deps = related_clauses(
            ConstantScorer(), contract, contract.provisions[1],
            threshold=1.01, evidence=evidence,
        )
        assert [d.target_number for d in deps] == ["5"]

    def test_hand_set_scores_filtered(self):
        contract = _contract_with_references()
        target = contract.provisions[0]
        table = {
            (target.text, "Payment due per the rates in Section 5."): 0.9,
            (target.text, "Rates are fixed for the term."): 0.6,
            (target.text, "Notices must be written."): 0.1,
        }
        deps = related_clauses(OracleScorer(table), contract, target, threshold=0.5)
        assert [(d.target_number, d.score) for d in deps] == [("2", 0.9), ("5", 0.6)]

    def test_requires_two_provisions(self):
        contract = Contract(
            id="tiny", kind=ContractKind.OTHER,
            provisions=(Provision(number="1", title="T", text="only clause"),),
        )
        with pytest.raises(ValidationError):
            related_clauses(ConstantScorer(), contract, contract.provisions[0])


class TestEvaluateRetrieval:
    def test_self_retrieval_is_perfect(self, fallback):
        revisions = [
            make_revision(f"r{i}", text, provision=str(i))
            for i, text in enumerate(
                [
                    "Supplier shall maintain insurance.",
                    "Payment due in thirty days.",
                    "Either party may terminate for breach.",
                ]
            )
        ]
        store = build_store(revisions, fallback)
        result = evaluate_retrieval(store, [(r.id, r.id) for r in revisions], ks=[1, 3])
        assert result["top_k_accuracy"][1] == 1.0
        assert result["top_k_accuracy"][3] == 1.0
        assert result["provision_accuracy"] == 1.0

    def test_twenty_queries_three_misses(self, fallback):
        revisions = [
            make_revision(f"r{i:02d}", f"clause about topic {i} with unique term t{i}", provision=str(i))
            for i in range(20)
        ]
        store = build_store(revisions, fallback)
        pairs = [(r.id, r.id) for r in revisions[:17]]
        # three constructed misses: the query text matches a different record
        for i, (query_source, gold) in enumerate(
            [("r00", "r17"), ("r01", "r18"), ("r02", "r19")]
        ):
            pairs.append((revisions[i].text, gold))
        result = evaluate_retrieval(store, pairs, ks=[1], provider=fallback)
        assert result["top_k_accuracy"][1] == pytest.approx(0.85)

    def test_unknown_gold_id(self, fallback):
        revisions = [make_revision("r1", "some clause text")]
        store = build_store(revisions, fallback)
        with pytest.raises(UnknownGoldId):
            evaluate_retrieval(store, [("r1", "missing")], ks=[1])

    def test_graded_rerank_beats_constant_scorer(self, fallback):
        # paraphrase fixture: queries share few tokens with gold, so raw
        # embedding order is imperfect; the graded oracle knows the pairs
        revisions = [
            make_revision("r1", "Notices shall be provided in writing to the parties.", provision="6"),
            make_revision("r2", "Supplier shall maintain commercial liability insurance coverage.", provision="4"),
            make_revision("r3", "Payment of invoices is due within thirty days of receipt.", provision="2"),
            make_revision("r4", "Either party may terminate this agreement for material breach.", provision="3"),
        ]
        store = build_store(revisions, fallback)
        texts = {r.id: r.text for r in revisions}
        queries = [
            ("The vendor must carry coverage for liability events.", "r2"),
            ("Invoices must be settled inside one month of receipt.", "r3"),
            ("The parties can end the agreement on serious violation.", "r4"),
        ]
        oracle = OracleScorer(
            {(q, texts[gold]): 1.0 for q, gold in queries}, default=0.2
        )
        with_oracle = evaluate_retrieval(
            store, queries, ks=[1], provider=fallback,
            scorer=oracle, texts=texts, rerank_depth=4,
        )
        with_constant = evaluate_retrieval(
            store, queries, ks=[1], provider=fallback,
            scorer=ConstantScorer(), texts=texts, rerank_depth=4,
        )
        assert with_oracle["top_k_accuracy"][1] == 1.0
        assert with_oracle["top_k_accuracy"][1] > with_constant["top_k_accuracy"][1]
