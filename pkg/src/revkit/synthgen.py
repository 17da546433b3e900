"""Synthetic revision generation: prompting, parsing, kNN label filtering.

Each generation prompt shows a few demonstration pairs (provision text plus
an acceptable and an unacceptable revision) and asks for both revisions of a
query provision. Generated candidates only survive if the majority label of
their nearest real neighbors (L2, k=20) agrees with the synthetic label; an
exact tie discards, which biases the filter toward precision.
"""

from __future__ import annotations

import hashlib
import logging
import random
import re
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Sequence

from .corpus import Label, Provision, Revision, Source
from .embedding import EmbeddingVector, Metric, VectorStore
from .errors import (
    MalformedLLMOutput,
    ProviderError,
    ProviderUnavailable,
    ValidationError,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationConfig:
    n_demonstrations: int = 3
    temperature: float = 0.8
    top_p: float = 0.9
    top_k_sampling: int = 50
    max_new_tokens: int = 8192
    seed: int = 0

    def __post_init__(self):
        if self.n_demonstrations < 1:
            raise ValidationError("n_demonstrations must be >= 1")


@dataclass(frozen=True)
class SyntheticPair:
    provision_number: str
    acceptable_text: str
    unacceptable_text: str
    prompt_fingerprint: str

    def __post_init__(self):
        if not self.acceptable_text or not self.unacceptable_text:
            raise ValidationError("both revision texts must be non-empty")
        if self.acceptable_text == self.unacceptable_text:
            raise ValidationError("acceptable and unacceptable texts must differ")


@dataclass(frozen=True)
class DemonstrationPair:
    """One few-shot demonstration: a provision with both fallback revisions."""

    provision_number: str
    provision_text: str
    acceptable_text: str
    unacceptable_text: str


class FilterDecision(str, Enum):
    KEEP = "Keep"
    DISCARD = "Discard"


SYNTHETIC_PROMPT_HEADER = (
    "Use the following pairs of provisions and fallback revisions to understand "
    "what constitutes an acceptable and unacceptable revision. Then provide "
    "revisions for the given query provision."
)

REPHRASE_PROMPT = """Rephrase the following contract clause revision so that it is semantically identical but expressed using different wording. Do not change the meaning, intent, or legal interpretation of the revision. Ensure the rephrasing retains the same level of formality and contractual tone.

Original Revision: {text}

Rephrased Revision:"""


def build_synthetic_prompt(
    demos: Sequence[tuple[str, str, str]],
    query_provision: Provision,
) -> str:
    """Render the few-shot generation prompt.

    ``demos`` are (provision_text, acceptable_text, unacceptable_text)
    triples, rendered as numbered demonstration blocks in input order.
    """
    if not demos:
        raise ValidationError("at least one demonstration is required")
    blocks = [SYNTHETIC_PROMPT_HEADER, ""]
    for i, (provision_text, acceptable, unacceptable) in enumerate(demos, start=1):
        blocks.append(f"Demonstration {i}")
        blocks.append(f"Provision: {provision_text}")
        blocks.append(f"Acceptable revision: {acceptable}")
        blocks.append(f"Unacceptable revision: {unacceptable}")
        blocks.append("")
    blocks.append(f"Query Provision: {query_provision.text.strip()}")
    return "\n".join(blocks)


def build_rephrase_prompt(revision: Revision) -> str:
    """Render the semantic-equivalence paraphrase prompt for one revision."""
    return REPHRASE_PROMPT.format(text=revision.text.strip())


_SECTION_RE = re.compile(
    r"\b(?P<label>unacceptable|acceptable)\s+revision\s*:", re.IGNORECASE
)


def parse_pair(
    reply: str,
    provision_number: str = "",
    prompt_fingerprint: str = "",
) -> SyntheticPair:
    """Extract the acceptable/unacceptable sections from a generation reply.

    The scan is order-insensitive and case-insensitive; each section runs
    until the next section header or the end of the reply. Missing or empty
    sections raise MalformedLLMOutput.
    """
    matches = list(_SECTION_RE.finditer(reply))
    sections: dict[str, str] = {}
    for pos, match in enumerate(matches):
        label = match.group("label").lower()
        if label in sections:
            continue
        end = matches[pos + 1].start() if pos + 1 < len(matches) else len(reply)
        sections[label] = reply[match.end() : end].strip()
    acceptable = sections.get("acceptable", "")
    unacceptable = sections.get("unacceptable", "")
    if not acceptable or not unacceptable:
        missing = [k for k in ("acceptable", "unacceptable") if not sections.get(k)]
        raise MalformedLLMOutput(f"reply missing section(s): {', '.join(missing)}")
    if acceptable == unacceptable:
        raise MalformedLLMOutput("acceptable and unacceptable sections are identical")
    return SyntheticPair(
        provision_number=provision_number,
        acceptable_text=acceptable,
        unacceptable_text=unacceptable,
        prompt_fingerprint=prompt_fingerprint,
    )


def knn_filter(
    candidate: Revision,
    real_store: VectorStore,
    k: int = 20,
    *,
    candidate_vector: EmbeddingVector | None = None,
    provider=None,
) -> FilterDecision:
    """Keep a synthetic candidate only if its k nearest real neighbors agree.

    Neighbors come from an L2 query over the real labeled store. Keep
    requires a strict majority of neighbor labels equal to the candidate's
    label; an exact tie discards.
    """
    if candidate.label is Label.UNLABELED:
        raise ValidationError("candidate must carry a label")
    vec = candidate_vector
    if vec is None:
        if provider is None:
            raise ValidationError("pass candidate_vector or provider")
        vec = provider.embed([candidate.text])[0]
    neighbors = real_store.query(vec, metric=Metric.L2, top_k=k)
    agreeing = sum(1 for hit in neighbors if hit.record.label is candidate.label)
    return FilterDecision.KEEP if agreeing * 2 > len(neighbors) else FilterDecision.DISCARD


@dataclass
class GenerationReport:
    kept: list[Revision] = field(default_factory=list)
    discarded_count: int = 0
    malformed_count: int = 0
    error_count: int = 0
    manifest: dict = field(default_factory=dict)


def derive_sub_seed(seed: int, index: int) -> int:
    """Stable per-item seed for parallel-safe, reproducible sampling."""
    digest = hashlib.sha256(f"{seed}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def _sample_demos(
    demos_source: Sequence[DemonstrationPair],
    query: Provision,
    n: int,
    rng: random.Random,
) -> list[DemonstrationPair]:
    if len(demos_source) < n:
        raise ValidationError(
            f"need {n} demonstrations, only {len(demos_source)} available"
        )
    family = query.number.split(".")[0]
    in_family = [
        i for i, d in enumerate(demos_source)
        if d.provision_number.split(".")[0] == family
    ]
    chosen: list[int] = []
    if in_family:
        chosen.append(rng.choice(in_family))
    remaining = [i for i in range(len(demos_source)) if i not in chosen]
    chosen.extend(rng.sample(remaining, n - len(chosen)))
    return [demos_source[i] for i in chosen]


def generate_dataset(
    llm,
    provisions: Sequence[Provision],
    demos_source: Sequence[DemonstrationPair],
    config: GenerationConfig,
    real_store: VectorStore | None,
    *,
    embedder=None,
    run_timestamp: datetime | None = None,
) -> GenerationReport:
    """Generate labeled synthetic revisions for each query provision.

    One prompt per provision; each well-formed reply yields one acceptable
    and one unacceptable candidate, each filtered independently through
    :func:`knn_filter` when a real store is given. Per-item failures are
    aggregated; only ProviderUnavailable aborts the run. Deterministic for
    a fixed seed, demo source, and reply script.
    """
    if real_store is not None and embedder is None:
        raise ValidationError("kNN filtering requires an embedder")
    rng = random.Random(config.seed)
    stamp = run_timestamp or datetime.now(timezone.utc)
    report = GenerationReport()
    items: list[dict] = []
    for index, provision in enumerate(provisions):
        demos = _sample_demos(demos_source, provision, config.n_demonstrations, rng)
        prompt = build_synthetic_prompt(
            [(d.provision_text, d.acceptable_text, d.unacceptable_text) for d in demos],
            provision,
        )
        fingerprint = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]
        item = {"provision_number": provision.number, "prompt_fingerprint": fingerprint}
        try:
            reply = llm.complete(
                prompt,
                temperature=config.temperature,
                top_p=config.top_p,
                max_tokens=config.max_new_tokens,
                seed=derive_sub_seed(config.seed, index),
            )
        except ProviderUnavailable:
            raise
        except ProviderError as exc:
            log.warning("generation failed for provision %s: %s", provision.number, exc)
            report.error_count += 1
            items.append({**item, "status": "provider_error"})
            continue
        try:
            pair = parse_pair(reply, provision.number, fingerprint)
        except MalformedLLMOutput as exc:
            log.warning("malformed reply for provision %s: %s", provision.number, exc)
            report.malformed_count += 1
            items.append({**item, "status": "malformed"})
            continue
        kept_here = []
        for suffix, text, label in (
            ("acc", pair.acceptable_text, Label.ACCEPTABLE),
            ("unacc", pair.unacceptable_text, Label.UNACCEPTABLE),
        ):
            revision = Revision(
                id=f"syn:{fingerprint}:{index}:{suffix}",
                provision_number=provision.number,
                contract_id="synthetic",
                text=text,
                label=label,
                source=Source.SYNTHETIC,
                created_at=stamp,
            )
            if real_store is not None:
                vec = embedder.embed([revision.text])[0]
                decision = knn_filter(revision, real_store, candidate_vector=vec)
                if decision is FilterDecision.DISCARD:
                    report.discarded_count += 1
                    continue
            report.kept.append(revision)
            kept_here.append(suffix)
        items.append({**item, "status": "ok", "kept": kept_here})
    report.manifest = {
        "config": asdict(config),
        "run_timestamp": stamp.isoformat(),
        "items": items,
        "kept_count": len(report.kept),
        "discarded_count": report.discarded_count,
        "malformed_count": report.malformed_count,
        "error_count": report.error_count,
    }
    return report
