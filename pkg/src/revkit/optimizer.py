"""Reward-guided revision optimization (retrieval-augmented best-of-N).

For each flagged revision: pull the most similar unacceptable->acceptable
demonstration pairs from the store, add contextually related clauses from
the same contract, sample N rewrite candidates, and keep the one the
acceptability classifier scores highest. The classifier's positive-class
probability is the reward signal, exported as-is so an external RLHF
trainer can optimize the generator against the same objective.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .classifier import EnsembleModel, predict
from .corpus import Contract, Label, Revision
from .embedding import EmbeddingRecord, EmbeddingVector, VectorStore, cosine
from .errors import (
    AllCandidatesMalformed,
    InsufficientDemonstrations,
    ProviderError,
    ProviderUnavailable,
    ValidationError,
)
from .retrieval import related_clauses
from .synthgen import derive_sub_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizationConfig:
    n_demonstrations: int = 5
    best_of_n: int = 4
    temperature: float = 0.8
    top_p: float = 0.9
    top_k_sampling: int = 50
    max_new_tokens: int = 8192
    include_related_clauses: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.best_of_n < 1:
            raise ValidationError("best_of_n must be >= 1")
        if self.n_demonstrations < 1:
            raise ValidationError("n_demonstrations must be >= 1")


@dataclass(frozen=True)
class Candidate:
    text: str
    reward: float


@dataclass(frozen=True)
class OptimizationResult:
    source_revision_id: str
    candidates: tuple[Candidate, ...]
    chosen_index: int
    prompt_fingerprint: str

    @property
    def chosen(self) -> Candidate:
        return self.candidates[self.chosen_index]

    def to_dict(self) -> dict:
        return {
            "source_revision_id": self.source_revision_id,
            "candidates": [
                {"text": c.text, "reward": c.reward} for c in self.candidates
            ],
            "chosen_index": self.chosen_index,
            "prompt_fingerprint": self.prompt_fingerprint,
        }


@dataclass(frozen=True)
class DemonstrationTriple:
    provision_number: str
    provision_text: str
    unacceptable_text: str
    acceptable_text: str
    unacceptable_id: str


def _pair_key(revision_id: str) -> tuple[str, str] | None:
    for suffix in (":acc", ":unacc"):
        if revision_id.endswith(suffix):
            return revision_id[: -len(suffix)], suffix[1:]
    return None


def select_demonstrations(
    store: VectorStore,
    query: Revision,
    n: int,
    *,
    texts: Mapping[str, str],
    provisions: Mapping[str, str] | None = None,
    query_vector: EmbeddingVector | None = None,
    provider=None,
) -> list[DemonstrationTriple]:
    """Pick the n demonstration triples most similar to the query.

    Triples pair an unacceptable revision with an acceptable one of the same
    provision: synthetic revisions link through their shared pair id, real
    ones pair each unacceptable with its most cosine-similar acceptable.
    Ranking is by cosine between the query and the triple's unacceptable
    member, ties broken by ascending id.
    """
    vec = query_vector
    if vec is None:
        stored = store.get(query.id)
        vec = stored.vector if stored is not None else None
    if vec is None:
        if provider is None:
            raise ValidationError("query not in store; pass query_vector or provider")
        vec = provider.embed([query.text])[0]

    by_provision: dict[str, list[EmbeddingRecord]] = {}
    for record in store.records:
        by_provision.setdefault(record.provision_number, []).append(record)

    triples: list[tuple[float, str, DemonstrationTriple]] = []
    for number, records in by_provision.items():
        acceptables = sorted(
            (r for r in records if r.label is Label.ACCEPTABLE),
            key=lambda r: r.revision_id,
        )
        unacceptables = sorted(
            (r for r in records if r.label is Label.UNACCEPTABLE),
            key=lambda r: r.revision_id,
        )
        if not acceptables or not unacceptables:
            continue
        acceptable_by_pair = {}
        for record in acceptables:
            key = _pair_key(record.revision_id)
            if key and key[1] == "acc":
                acceptable_by_pair[key[0]] = record
        provision_text = (provisions or {}).get(number) or f"Provision {number}"
        for unacc in unacceptables:
            key = _pair_key(unacc.revision_id)
            if key and key[1] == "unacc" and key[0] in acceptable_by_pair:
                acc = acceptable_by_pair[key[0]]
            else:
                acc = max(
                    acceptables,
                    key=lambda r: (cosine(unacc.vector, r.vector), r.revision_id),
                )
            if unacc.revision_id not in texts or acc.revision_id not in texts:
                continue
            triple = DemonstrationTriple(
                provision_number=number,
                provision_text=provision_text,
                unacceptable_text=texts[unacc.revision_id],
                acceptable_text=texts[acc.revision_id],
                unacceptable_id=unacc.revision_id,
            )
            similarity = cosine(vec, unacc.vector)
            triples.append((similarity, unacc.revision_id, triple))

    if len(triples) < n:
        raise InsufficientDemonstrations(
            f"only {len(triples)} pairable triples, need {n}"
        )
    triples.sort(key=lambda item: (-item[0], item[1]))
    return [triple for _, _, triple in triples[:n]]


OPTIMIZATION_PROMPT_HEADER = (
    "Use the following examples of provisions and their revisions to learn how "
    "to transform unacceptable revisions into acceptable ones. Then, provide "
    "revised versions for the given query unacceptable revision."
)
RELATED_CLAUSES_SENTENCES = (
    "You are also provided with clauses from the same contract that may be "
    "contextually relevant to the query. Incorporate their meaning and "
    "constraints when rewriting."
)
COMPLETION_CUE = "Optimized Unacceptable Version:"


def build_optimization_prompt(
    demos: Sequence[DemonstrationTriple],
    related: Sequence[str],
    query_text: str,
) -> str:
    """Render the rewrite prompt; the related block is omitted when empty."""
    if not demos:
        raise ValidationError("at least one demonstration is required")
    header = OPTIMIZATION_PROMPT_HEADER
    if related:
        header = f"{header} {RELATED_CLAUSES_SENTENCES}"
    blocks = [header, ""]
    for i, demo in enumerate(demos, start=1):
        blocks.append(f"Demonstration {i}")
        blocks.append(f"Provision: {demo.provision_text}")
        blocks.append(f"Unacceptable revision: {demo.unacceptable_text}")
        blocks.append(f"Acceptable revision: {demo.acceptable_text}")
        blocks.append("")
    if related:
        blocks.append("Related Clauses (from current contract):")
        for clause in related:
            blocks.append(f"Related clause: {clause}")
        blocks.append("")
    blocks.append(f"Query Unacceptable Revision: {query_text.strip()}")
    blocks.append(COMPLETION_CUE)
    return "\n".join(blocks)


_CUE_RE = re.compile(re.escape(COMPLETION_CUE), re.IGNORECASE)


def _extract_candidate(reply: str) -> str:
    """Strip an echoed completion cue and surrounding whitespace."""
    matches = list(_CUE_RE.finditer(reply))
    if matches:
        reply = reply[matches[-1].end() :]
    return reply.strip()


def optimize(
    llm,
    model: EnsembleModel,
    store: VectorStore,
    contract: Contract | None,
    revision: Revision,
    config: OptimizationConfig = OptimizationConfig(),
    *,
    provider,
    texts: Mapping[str, str],
    provisions: Mapping[str, str] | None = None,
    scorer=None,
    related_texts: Sequence[str] | None = None,
    related_threshold: float = 0.5,
) -> OptimizationResult:
    """Sample best_of_n rewrites and keep the classifier-reward argmax.

    Candidates are sampled with deterministic per-index sub-seeds, embedded
    through ``provider``, and scored by the model's acceptable-class
    probability. Malformed (empty) replies are dropped; if every candidate
    is malformed the revision stays flagged and AllCandidatesMalformed is
    raised.
    """
    if provisions is None and contract is not None:
        provisions = {
            p.number: (p.template_text or p.text).strip() for p in contract.provisions
        }
    demos = select_demonstrations(
        store,
        revision,
        config.n_demonstrations,
        texts=texts,
        provisions=provisions,
        provider=provider,
    )
    related: Sequence[str] = []
    if config.include_related_clauses:
        if related_texts is not None:
            related = list(related_texts)
        elif scorer is not None and contract is not None:
            target = contract.provision(revision.provision_number)
            if target is not None and len(contract.provisions) >= 2:
                deps = related_clauses(
                    scorer, contract, target, threshold=related_threshold
                )
                by_number = {p.number: p for p in contract.provisions}
                related = [
                    by_number[d.target_number].text.strip()
                    for d in deps
                    if d.target_number in by_number
                ]
    prompt = build_optimization_prompt(demos, related, revision.text)
    fingerprint = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]

    candidate_texts: list[str] = []
    for index in range(config.best_of_n):
        reply = llm.complete(
            prompt,
            temperature=config.temperature,
            top_p=config.top_p,
            max_tokens=config.max_new_tokens,
            seed=derive_sub_seed(config.seed, index),
        )
        text = _extract_candidate(reply)
        if not text:
            log.warning("empty rewrite candidate %d for %s", index, revision.id)
            continue
        candidate_texts.append(text)
    if not candidate_texts:
        raise AllCandidatesMalformed(f"all {config.best_of_n} candidates unusable")

    vectors = provider.embed(candidate_texts)
    candidates = tuple(
        Candidate(text=text, reward=predict(model, vec).probability_acceptable)
        for text, vec in zip(candidate_texts, vectors)
    )
    chosen_index = max(range(len(candidates)), key=lambda i: candidates[i].reward)
    return OptimizationResult(
        source_revision_id=revision.id,
        candidates=candidates,
        chosen_index=chosen_index,
        prompt_fingerprint=fingerprint,
    )


def batch_optimize(
    llm,
    model: EnsembleModel,
    store: VectorStore,
    contract: Contract | None,
    revisions: Sequence[Revision],
    config: OptimizationConfig = OptimizationConfig(),
    *,
    provider,
    texts: Mapping[str, str],
    provisions: Mapping[str, str] | None = None,
    scorer=None,
    contract_id: str | None = None,
) -> dict:
    """Optimize every flagged revision; report per-revision results.

    The report is ordered by revision id and carries the flagged set's
    success rate before (original texts) and after (chosen candidates),
    null when there is nothing to measure. Per-revision failures are
    collected, not fatal; only ProviderUnavailable aborts.
    """
    ordered = sorted(revisions, key=lambda r: r.id)
    results: list[OptimizationResult] = []
    errors: list[dict] = []
    for revision in ordered:
        try:
            results.append(
                optimize(
                    llm, model, store, contract, revision, config,
                    provider=provider, texts=texts, provisions=provisions,
                    scorer=scorer,
                )
            )
        except ProviderUnavailable:
            raise
        except (InsufficientDemonstrations, AllCandidatesMalformed, ProviderError) as exc:
            errors.append({"revision_id": revision.id, "error": type(exc).__name__, "message": str(exc)})

    def rate(texts_to_score: list[str]) -> float | None:
        if not texts_to_score:
            return None
        vecs = provider.embed(texts_to_score)
        accepted = sum(
            1 for v in vecs if predict(model, v).label is Label.ACCEPTABLE
        )
        return accepted / len(texts_to_score)

    return {
        "contract_id": contract_id or (contract.id if contract is not None else None),
        "results": [r.to_dict() for r in results],
        "errors": errors,
        "success_rate_before": rate([r.text for r in ordered]),
        "success_rate_after": rate([r.chosen.text for r in results]),
    }
