"""Precedent retrieval, cross-encoder reranking, and clause dependencies.

Cosine retrieval supplies candidate precedents; a pluggable scorer endpoint
reorders them. Cross-encoder training itself is delegated: this module only
builds the graded-similarity training pairs (1.0 paraphrase, 0.5 same
provision both acceptable, 0.3 same provision cross-label, 0.0 unrelated)
and exports them as JSONL.
"""

from __future__ import annotations

import itertools
import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Contract, Label, Provision, Revision
from .embedding import EmbeddingVector, Hit, Metric, VectorStore
from .errors import (
    EmptyStore,
    InsufficientData,
    MalformedLLMOutput,
    UnknownGoldId,
    ValidationError,
)
from .providers import extract_json_object

GRADED_LABELS = (1.0, 0.5, 0.3, 0.0)

_CLAUSE_NUMBER_RE = re.compile(r"\d+(?:\.\d+)*")


@dataclass(frozen=True)
class ScoredPair:
    text_a: str
    text_b: str
    label: float

    def __post_init__(self):
        if self.label not in GRADED_LABELS:
            raise ValidationError(f"label must be one of {GRADED_LABELS}, got {self.label}")


@dataclass(frozen=True)
class ClauseDependency:
    source_number: str
    target_number: str
    score: float
    evidence: dict

    def __post_init__(self):
        if self.source_number == self.target_number:
            raise ValidationError("clause cannot depend on itself")


@dataclass(frozen=True)
class RankedCandidate:
    revision_id: str
    text: str
    score: float


@dataclass(frozen=True)
class GradedPairConfig:
    per_class: int = 500
    seed: int = 0


def retrieve_precedents(
    store: VectorStore,
    query_revision: Revision,
    top_k: int = 10,
    *,
    provider=None,
    query_vector: EmbeddingVector | None = None,
) -> list[Hit]:
    """Cosine query over the store, excluding the query revision itself."""
    vec = query_vector
    if vec is None:
        stored = store.get(query_revision.id)
        vec = stored.vector if stored is not None else None
    if vec is None:
        if provider is None:
            raise ValidationError(
                "query revision is not in the store; pass query_vector or provider"
            )
        vec = provider.embed([query_revision.text])[0]
    return store.query(
        vec,
        metric=Metric.COSINE,
        top_k=top_k,
        filter=lambda r: r.revision_id != query_revision.id,
    )


def build_graded_pairs(
    revisions: Sequence[Revision],
    paraphrase_map: Mapping[str, str],
    config: GradedPairConfig = GradedPairConfig(),
) -> list[ScoredPair]:
    """Construct graded-similarity training pairs, balanced across classes.

    ``paraphrase_map`` maps revision id to its paraphrase text. Sampling is
    seeded and deterministic; a class with zero candidate pairs raises
    InsufficientData.
    """
    ordered = sorted(revisions, key=lambda r: r.id)
    rng = random.Random(config.seed)
    by_provision: dict[str, list[Revision]] = {}
    for rev in ordered:
        by_provision.setdefault(rev.provision_number, []).append(rev)

    paraphrases = [
        ScoredPair(rev.text, paraphrase_map[rev.id], 1.0)
        for rev in ordered
        if rev.id in paraphrase_map
    ]

    def same_provision_pairs(label_pred) -> list[ScoredPair]:
        pairs = []
        for group in by_provision.values():
            for a, b in itertools.combinations(group, 2):
                value = label_pred(a, b)
                if value is not None:
                    pairs.append(ScoredPair(a.text, b.text, value))
        return pairs

    both_acceptable = same_provision_pairs(
        lambda a, b: 0.5
        if a.label is Label.ACCEPTABLE and b.label is Label.ACCEPTABLE
        else None
    )
    cross_label = same_provision_pairs(
        lambda a, b: 0.3
        if {a.label, b.label} == {Label.ACCEPTABLE, Label.UNACCEPTABLE}
        else None
    )
    unrelated = _sample_unrelated(ordered, rng, config.per_class)

    classes = {
        "paraphrase (1.0)": paraphrases,
        "same-provision acceptable (0.5)": both_acceptable,
        "same-provision cross-label (0.3)": cross_label,
        "unrelated (0.0)": unrelated,
    }
    out: list[ScoredPair] = []
    for name, candidates in classes.items():
        if not candidates:
            raise InsufficientData(f"no candidate pairs for class {name}")
        if len(candidates) > config.per_class:
            candidates = rng.sample(candidates, config.per_class)
        out.extend(candidates)
    return out


def _sample_unrelated(
    ordered: Sequence[Revision], rng: random.Random, per_class: int
) -> list[ScoredPair]:
    provisions = {r.provision_number for r in ordered}
    if len(provisions) < 2:
        return []
    n = len(ordered)
    if n * (n - 1) // 2 <= 4 * per_class:
        return [
            ScoredPair(a.text, b.text, 0.0)
            for a, b in itertools.combinations(ordered, 2)
            if a.provision_number != b.provision_number
        ]
    # corpus too large to enumerate: seeded rejection sampling
    seen: set[tuple[int, int]] = set()
    pairs: list[ScoredPair] = []
    attempts = 0
    while len(pairs) < per_class and attempts < per_class * 50:
        attempts += 1
        i, j = rng.randrange(n), rng.randrange(n)
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key in seen:
            continue
        seen.add(key)
        a, b = ordered[key[0]], ordered[key[1]]
        if a.provision_number != b.provision_number:
            pairs.append(ScoredPair(a.text, b.text, 0.0))
    return pairs


def export_graded_pairs(pairs: Sequence[ScoredPair], path: str | Path) -> None:
    """Write graded pairs as JSONL training data for an external reranker."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {"text_a": pair.text_a, "text_b": pair.text_b, "label": pair.label},
                    ensure_ascii=False,
                )
                + "\n"
            )


def rerank(
    scorer,
    query: str,
    candidates: Sequence[RankedCandidate],
    keep: int,
) -> list[RankedCandidate]:
    """Reorder candidates by scorer(query, text) descending; truncate to keep.

    Equal scores fall back to ascending revision id, so a constant scorer
    yields a pure id ordering. A scorer failure surfaces as
    ScorerUnavailable; falling back to the retrieval order is the caller's
    call, never automatic.
    """
    if not candidates:
        raise ValidationError("candidates must be non-empty")
    if keep < 1 or keep > len(candidates):
        raise ValidationError(f"keep must be in [1, {len(candidates)}], got {keep}")
    scores = scorer.score(query, [c.text for c in candidates])
    rescored = [
        RankedCandidate(revision_id=c.revision_id, text=c.text, score=float(s))
        for c, s in zip(candidates, scores)
    ]
    rescored.sort(key=lambda c: (-c.score, c.revision_id))
    return rescored[:keep]


DEPENDENCY_PROMPT = """Given the contract text below, analyze the specified clause to extract:
(1) The key terms and phrases that summarize its content.
(2) Any explicit or implicit references to other clauses within the same contract (e.g. "as described in Section 5", "subject to Clause 10").
Return the output in JSON format with the keys "keywords", "key_phrases", and "references". Do not modify the text of the clause.

Full Contract:
{contract_text}

Target Clause:
{clause_text}

Output:
"""


def build_dependency_prompt(contract: Contract, target: Provision) -> str:
    contract_text = "\n".join(
        f"{p.number}. {p.title}\n{p.text.strip()}" for p in contract.provisions
    )
    return DEPENDENCY_PROMPT.format(
        contract_text=contract_text, clause_text=target.text.strip()
    )


def extract_clause_dependencies(llm, contract: Contract, target: Provision) -> dict:
    """Ask the LLM for keywords, key phrases, and clause references.

    The reply may wrap the JSON in prose; the first balanced-braces object
    is parsed. One retry on malformed output, then the error surfaces.
    """
    prompt = build_dependency_prompt(contract, target)
    last_error: MalformedLLMOutput | None = None
    for _attempt in range(2):
        reply = llm.complete(prompt)
        try:
            parsed = extract_json_object(reply)
        except MalformedLLMOutput as exc:
            last_error = exc
            continue
        return {
            key: [str(item) for item in parsed.get(key, []) or []]
            for key in ("keywords", "key_phrases", "references")
        }
    raise last_error or MalformedLLMOutput("no JSON object in reply")


def _referenced_numbers(evidence: dict, contract: Contract) -> set[str]:
    known = {p.number for p in contract.provisions}
    found: set[str] = set()
    for reference in evidence.get("references", []):
        for number in _CLAUSE_NUMBER_RE.findall(reference):
            if number in known:
                found.add(number)
    return found


def related_clauses(
    scorer,
    contract: Contract,
    target: Provision,
    threshold: float = 0.5,
    *,
    evidence: dict | None = None,
    llm=None,
) -> list[ClauseDependency]:
    """Score the target clause against every other clause in the contract.

    Clauses scoring at or above the threshold are returned in descending
    score order. Clauses the evidence explicitly references are always
    included, whatever their score.
    """
    if len(contract.provisions) < 2:
        raise ValidationError("contract must have at least 2 provisions")
    if evidence is None:
        evidence = (
            extract_clause_dependencies(llm, contract, target)
            if llm is not None
            else {"keywords": [], "key_phrases": [], "references": []}
        )
    others = [p for p in contract.provisions if p.number != target.number]
    scores = scorer.score(target.text, [p.text for p in others])
    forced = _referenced_numbers(evidence, contract)
    deps = [
        ClauseDependency(
            source_number=target.number,
            target_number=p.number,
            score=float(s),
            evidence=evidence,
        )
        for p, s in zip(others, scores)
        if s >= threshold or p.number in forced
    ]
    deps.sort(key=lambda d: (-d.score, d.target_number))
    return deps


def evaluate_retrieval(
    store: VectorStore,
    eval_pairs: Sequence[tuple[str, str]],
    ks: Sequence[int],
    *,
    provider=None,
    scorer=None,
    texts: Mapping[str, str] | None = None,
    rerank_depth: int = 10,
) -> dict:
    """Top-k and provision retrieval accuracy over (query, gold_id) pairs.

    A query string that names a stored revision id reuses its vector;
    anything else is embedded through ``provider``. Passing a scorer
    reranks the top ``rerank_depth`` hits first (requires ``texts`` to map
    revision ids to their text).
    """
    if len(store) == 0:
        raise EmptyStore("cannot evaluate retrieval over an empty store")
    if not eval_pairs:
        raise ValidationError("eval_pairs must be non-empty")
    ks = sorted(set(int(k) for k in ks))
    depth = max(max(ks), rerank_depth if scorer is not None else 0)
    gold_provisions = {}
    for _query, gold_id in eval_pairs:
        record = store.get(gold_id)
        if record is None:
            raise UnknownGoldId(f"gold id {gold_id!r} not in store")
        gold_provisions[gold_id] = record.provision_number

    hits_at_k = {k: 0 for k in ks}
    provision_hits = 0
    for query, gold_id in eval_pairs:
        stored = store.get(query)
        if stored is not None:
            vec = stored.vector
        else:
            if provider is None:
                raise ValidationError(
                    f"query {query!r} is not a stored id and no provider was given"
                )
            vec = provider.embed([query])[0]
        hits = store.query(vec, metric=Metric.COSINE, top_k=depth)
        if scorer is not None:
            if texts is None:
                raise ValidationError("rerank evaluation requires a texts mapping")
            query_text = texts.get(query, query)
            pool = hits[: min(rerank_depth, len(hits))]
            candidates = [
                RankedCandidate(h.record.revision_id, texts[h.record.revision_id], h.score)
                for h in pool
            ]
            reranked = rerank(scorer, query_text, candidates, keep=len(candidates))
            ranking = [c.revision_id for c in reranked]
            ranking_provisions = [
                store.get(rid).provision_number for rid in ranking
            ]
        else:
            ranking = [h.record.revision_id for h in hits]
            ranking_provisions = [h.record.provision_number for h in hits]
        for k in ks:
            if gold_id in ranking[:k]:
                hits_at_k[k] += 1
        if ranking_provisions and ranking_provisions[0] == gold_provisions[gold_id]:
            provision_hits += 1

    n = len(eval_pairs)
    return {
        "count": n,
        "provision_accuracy": provision_hits / n,
        "top_k_accuracy": {k: hits_at_k[k] / n for k in ks},
    }
