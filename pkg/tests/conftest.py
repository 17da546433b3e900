"""Shared fixtures: contract pairs, embedding stores, offline providers."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest

from revkit.corpus import Contract, ContractKind, Label, Provision, Revision, Source
from revkit.embedding import EmbeddingRecord, VectorStore
from revkit.providers import FallbackEmbedder

STAMP = datetime(2025, 6, 1, tzinfo=timezone.utc)

TEMPLATE_TEXTS = {
    "1": "The term of this agreement begins on the effective date and continues for twelve months.",
    "2": "Supplier shall invoice monthly and payment is due within thirty days of receipt.",
    "3": "Either party may terminate for material breach upon thirty days written notice.",
    "4": "Supplier shall maintain commercial general liability insurance of one million dollars.",
    "5": "Supplier shall indemnify Buyer against third-party claims arising from Supplier negligence.",
    "6": "All notices must be delivered in writing to the addresses listed on the signature page.",
    "7": "Neither party is liable for delays caused by events beyond its reasonable control.",
    "8": "This agreement is governed by the laws of the State of New York.",
    "9": "Supplier shall keep Buyer confidential information secret for five years after disclosure.",
}

TITLES = {
    "1": "Term",
    "2": "Payment",
    "3": "Termination",
    "4": "Insurance",
    "5": "Indemnification",
    "6": "Notices",
    "7": "Force Majeure",
    "8": "Governing Law",
    "9": "Confidentiality",
}


def make_template_contract() -> Contract:
    provisions = tuple(
        Provision(number=n, title=TITLES[n], text=TEMPLATE_TEXTS[n])
        for n in sorted(TEMPLATE_TEXTS, key=lambda s: int(s))
    )
    return Contract(id="template-svc", kind=ContractKind.SERVICE, provisions=provisions)


def make_negotiated_contract() -> Contract:
    """4 provisions with tracked edits, 3 differing without edits, 2 identical."""
    edited = {
        "1": "The term of this agreement begins on the effective date and continues for "
             "{--twelve--}{++thirty-six++} months.",
        "2": "Supplier shall invoice monthly and payment is due within {--thirty--}{++ninety++} "
             "days of receipt.",
        "4": "Supplier shall maintain commercial general liability insurance of "
             "{--one million--}{++two hundred thousand++} dollars.",
        "5": "Supplier shall indemnify Buyer against third-party claims arising from "
             "Supplier negligence{++, capped at the fees paid in the prior quarter++}.",
    }
    differing = {
        "3": "Either party may terminate for material breach upon sixty days written notice "
             "with an opportunity to cure.",
        "6": "All notices must be delivered in writing by certified mail to the addresses "
             "listed on the signature page.",
        "7": "Neither party is liable for delays caused by events beyond its reasonable "
             "control, including labor disputes.",
    }
    provisions = []
    for number in sorted(TEMPLATE_TEXTS, key=lambda s: int(s)):
        text = edited.get(number) or differing.get(number) or TEMPLATE_TEXTS[number]
        provisions.append(
            Provision(
                number=number,
                title=TITLES[number],
                text=text,
                template_text=TEMPLATE_TEXTS[number],
            )
        )
    return Contract(id="negotiated-svc", kind=ContractKind.SERVICE, provisions=tuple(provisions))


@pytest.fixture
def template_contract() -> Contract:
    return make_template_contract()


@pytest.fixture
def negotiated_contract() -> Contract:
    return make_negotiated_contract()


@pytest.fixture
def fallback() -> FallbackEmbedder:
    return FallbackEmbedder()


def make_revision(
    rid: str,
    text: str,
    label: Label = Label.ACCEPTABLE,
    provision: str = "1",
    source: Source = Source.FALLBACK,
) -> Revision:
    return Revision(
        id=rid,
        provision_number=provision,
        contract_id="fixture",
        text=text,
        label=label,
        source=source,
        created_at=STAMP,
    )


def build_store(revisions: list[Revision], embedder: FallbackEmbedder) -> VectorStore:
    store = VectorStore()
    vectors = embedder.embed([r.text for r in revisions])
    for revision, vector in zip(revisions, vectors):
        store.add(
            EmbeddingRecord(
                revision_id=revision.id,
                vector=vector,
                label=revision.label,
                provision_number=revision.provision_number,
            )
        )
    return store


# -- service-level corpus: two disjoint vocabularies the fallback embedder
#    separates cleanly, so the offline classifier flags deterministically ----

PAYMENT_TEMPLATE = "payment invoice due within 30 days of receipt per schedule"
LIABILITY_TEMPLATE = "liability capped limited to fees paid in year one"

REVIEW_FLAG_TEXT = "payment obligation waived deferred indefinitely forever going forward"
REVIEW_CLEAN_TEXT = "payment invoice due within 45 days of receipt per schedule"
REVIEW_AMBIGUOUS_TEXT = "payment invoice due waived deferred receipt forever schedule"
OPTIMIZE_REPLY = "payment invoice due within thirty days of receipt per schedule"


def make_labeled_corpus() -> list[Revision]:
    revisions = []
    for i in range(20):
        revisions.append(make_revision(
            f"ap{i:02d}", f"payment invoice due within {20 + i} days of receipt per schedule",
            Label.ACCEPTABLE, "2",
        ))
        revisions.append(make_revision(
            f"up{i:02d}", f"payment obligation waived deferred indefinitely forever case {i}",
            Label.UNACCEPTABLE, "2",
        ))
        revisions.append(make_revision(
            f"al{i:02d}", f"liability capped limited to fees paid in year {i}",
            Label.ACCEPTABLE, "5",
        ))
        revisions.append(make_revision(
            f"ul{i:02d}", f"unlimited liability indemnify all claims losses whatsoever {i}",
            Label.UNACCEPTABLE, "5",
        ))
    return revisions


def make_review_contract_dict() -> dict:
    return {
        "id": "contract-under-review",
        "kind": "Service",
        "provisions": [
            {"number": "2", "title": "Payment",
             "template_text": PAYMENT_TEMPLATE, "text": REVIEW_FLAG_TEXT},
            {"number": "3", "title": "Schedule",
             "template_text": PAYMENT_TEMPLATE, "text": REVIEW_CLEAN_TEXT},
            {"number": "5", "title": "Liability",
             "template_text": LIABILITY_TEMPLATE, "text": LIABILITY_TEMPLATE},
            {"number": "7", "title": "Hybrid",
             "template_text": PAYMENT_TEMPLATE, "text": REVIEW_AMBIGUOUS_TEXT},
        ],
    }


def make_service_config(script_path) -> dict:
    return {
        "llm": {"kind": "scripted", "script_path": str(script_path), "cycle": True},
        "classifier": {"K": 1, "epochs": 500, "seed": 0},
        "optimization": {"n_demonstrations": 2, "best_of_n": 2, "seed": 0},
        "service": {"retrain_min_decisions": 1},
    }
