"""Pipeline orchestration over a workspace: ingest, flag, optimize, review.

One Engine instance serves both the CLI and the HTTP API. Reads are
lock-free over immutable snapshots; every mutation funnels through the
workspace's single writer lock. The serving model is re-resolved from the
CURRENT pointer per call, so a retrain swap never changes predictions
mid-request.
"""

from __future__ import annotations

import logging
from datetime import datetime, timezone

from .. import optimizer as optimizer_mod
from ..classifier import EnsembleModel, predict, train_ensemble
from ..corpus import (
    Contract,
    Label,
    Revision,
    Source,
    detect_tracked_edits,
    diff_words,
    normalize_text,
)
from ..embedding import EmbeddingRecord, VectorStore
from ..errors import RevkitError, TooFewPoints, ValidationError, WorkspaceError
from .config import (
    build_embedder,
    build_llm,
    build_scorer,
    optimization_config,
    train_config,
)
from .workspace import (
    ConfidenceBand,
    FlagRecord,
    FlagStatus,
    ReviewDecision,
    Verdict,
    Workspace,
)

log = logging.getLogger(__name__)


class UnknownId(RevkitError):
    """Referenced contract or revision id does not exist."""


class DecisionConflict(RevkitError):
    """A decision already exists for this flag; pass force to override."""


def flag_sort_key(flag: FlagRecord) -> tuple:
    band_rank = 0 if flag.confidence_band is ConfidenceBand.AMBIGUOUS else 1
    return (band_rank, flag.probability_acceptable, flag.revision_id)


class Engine:
    def __init__(self, workspace: Workspace, config: dict):
        self.workspace = workspace
        self.config = config
        self._embedder = None
        self._llm = None
        self._scorer = None
        self._store: VectorStore | None = None

    # -- lazily built collaborators ----------------------------------------

    @property
    def embedder(self):
        if self._embedder is None:
            self._embedder = build_embedder(self.config)
        return self._embedder

    @property
    def llm(self):
        if self._llm is None:
            self._llm = build_llm(self.config)
        return self._llm

    @llm.setter
    def llm(self, client) -> None:
        self._llm = client

    @property
    def scorer(self):
        if self._scorer is None:
            self._scorer = build_scorer(self.config)
        return self._scorer

    @property
    def store(self) -> VectorStore:
        if self._store is None:
            self._store = self.workspace.open_store()
        return self._store

    def current_model(self) -> tuple[int, EnsembleModel]:
        loaded = self.workspace.load_current_model()
        if loaded is None:
            raise WorkspaceError("no trained model in workspace; run train-classifier")
        return loaded

    # -- ingestion and flagging -----------------------------------------------

    def extract_current_revisions(self, contract: Contract) -> list[Revision]:
        """Pull the under-review revision text out of each provision.

        Tracked edits are applied first; provisions whose normalized text
        matches their template carry no revision and are skipped.
        """
        revisions = []
        stamp = datetime.now(timezone.utc)
        for provision in contract.provisions:
            _has_edits, accepted, _original = detect_tracked_edits(provision.text)
            text = accepted.strip()
            if provision.template_text is not None and normalize_text(
                text
            ) == normalize_text(provision.template_text):
                continue
            revisions.append(
                Revision(
                    id=f"{contract.id}:{provision.number}",
                    provision_number=provision.number,
                    contract_id=contract.id,
                    text=text,
                    label=Label.UNLABELED,
                    source=Source.NEGOTIATED,
                    created_at=stamp,
                )
            )
        return revisions

    def classify_contract(
        self, contract: Contract
    ) -> tuple[list[Revision], list[FlagRecord]]:
        """Classify every current revision; flag Unacceptable or ambiguous ones."""
        _version, model = self.current_model()
        band = float(self.config["service"]["ambiguity_band"])
        revisions = self.extract_current_revisions(contract)
        flags: list[FlagRecord] = []
        if not revisions:
            return revisions, flags
        vectors = self.embedder.embed([r.text for r in revisions])
        for revision, vector in zip(revisions, vectors):
            prediction = predict(model, vector)
            ambiguous = abs(prediction.probability_acceptable - 0.5) < band
            if prediction.label is Label.UNACCEPTABLE or ambiguous:
                flags.append(
                    FlagRecord(
                        revision_id=revision.id,
                        contract_id=contract.id,
                        provision_number=revision.provision_number,
                        probability_acceptable=prediction.probability_acceptable,
                        confidence_band=(
                            ConfidenceBand.AMBIGUOUS if ambiguous else ConfidenceBand.CONFIDENT
                        ),
                    )
                )
        flags.sort(key=flag_sort_key)
        return revisions, flags

    def ingest_contract(self, contract: Contract) -> list[FlagRecord]:
        """Classify and persist a contract; returns its flags, queue-ordered."""
        revisions, flags = self.classify_contract(contract)
        self.workspace.save_contract_doc(
            Workspace.contract_doc(contract, revisions, flags)
        )
        return flags

    def flags_for(self, contract_id: str) -> list[FlagRecord]:
        doc = self.workspace.load_contract_doc(contract_id)
        if doc is None:
            raise UnknownId(f"unknown contract {contract_id!r}")
        flags = [FlagRecord.from_dict(d) for d in doc.get("flags", [])]
        flags.sort(key=flag_sort_key)
        return flags

    # -- review queue ---------------------------------------------------------

    def queue_item(self, revision_id: str) -> dict:
        """Full detail for one flagged revision, diffs included (UI payload)."""
        located = self.workspace.find_revision_doc(revision_id)
        if located is None:
            raise UnknownId(f"unknown revision {revision_id!r}")
        doc, revision_dict = located
        contract = doc["contract"]
        provision = next(
            (p for p in contract["provisions"] if p["number"] == revision_dict["provision_number"]),
            None,
        )
        template_text = (provision or {}).get("template_text") or ""
        revision_text = revision_dict["text"]
        flag = next(
            (f for f in doc.get("flags", []) if f["revision_id"] == revision_id), None
        )
        optimization = doc.get("optimizations", {}).get(revision_id)
        candidates = []
        if optimization:
            for candidate in optimization["candidates"]:
                candidates.append(
                    {
                        "text": candidate["text"],
                        "reward": candidate["reward"],
                        "diff": diff_words(revision_text, candidate["text"]).to_ops(),
                    }
                )
        return {
            "flag": flag,
            "provision": {
                "number": revision_dict["provision_number"],
                "title": (provision or {}).get("title", ""),
                "template_text": template_text,
            },
            "original_text": template_text,
            "revision_text": revision_text,
            "diff": diff_words(template_text, revision_text).to_ops() if template_text else [],
            "candidates": candidates,
            "chosen_index": optimization["chosen_index"] if optimization else None,
        }

    # -- optimization -----------------------------------------------------------

    def optimize_revision(self, revision_id: str, **overrides) -> dict:
        with self.workspace.write_lock:
            return self._optimize_revision_locked(revision_id, **overrides)

    def _optimize_revision_locked(self, revision_id: str, **overrides) -> dict:
        located = self.workspace.find_revision_doc(revision_id)
        if located is None:
            raise UnknownId(f"unknown revision {revision_id!r}")
        doc, revision_dict = located
        revision = Revision.from_dict(revision_dict)
        contract = self.workspace.load_contract(doc["contract"]["id"])
        _version, model = self.current_model()
        config = optimization_config(self.config, **overrides)
        result = optimizer_mod.optimize(
            self.llm,
            model,
            self.store,
            contract,
            revision,
            config,
            provider=self.embedder,
            texts=self.workspace.revision_texts(),
            scorer=self.scorer,
            related_threshold=float(self.config["retrieval"]["dependency_threshold"]),
        )
        doc.setdefault("optimizations", {})[revision_id] = result.to_dict()
        for flag in doc.get("flags", []):
            if flag["revision_id"] == revision_id and flag["status"] == FlagStatus.OPEN.value:
                flag["status"] = FlagStatus.OPTIMIZED.value
        self.workspace.save_contract_doc(doc)
        return result.to_dict()

    # -- decisions ----------------------------------------------------------------

    def decide(
        self,
        revision_id: str,
        verdict: Verdict,
        reviewer: str,
        *,
        candidate_index: int | None = None,
        final_text: str = "",
        force: bool = False,
    ) -> dict:
        """Record a review decision; Accept/Edit grow the labeled store by one.

        The decision is durable (fsynced) before anything else changes, and
        before the caller sees a success response.
        """
        with self.workspace.write_lock:
            return self._decide_locked(
                revision_id, verdict, reviewer,
                candidate_index=candidate_index, final_text=final_text, force=force,
            )

    def _decide_locked(
        self,
        revision_id: str,
        verdict: Verdict,
        reviewer: str,
        *,
        candidate_index: int | None = None,
        final_text: str = "",
        force: bool = False,
    ) -> dict:
        located = self.workspace.find_revision_doc(revision_id)
        if located is None:
            raise UnknownId(f"unknown revision {revision_id!r}")
        doc, revision_dict = located
        flag = next(
            (f for f in doc.get("flags", []) if f["revision_id"] == revision_id), None
        )
        if flag is None:
            raise UnknownId(f"revision {revision_id!r} is not flagged")
        if flag["status"] == FlagStatus.DECIDED.value and not force:
            raise DecisionConflict(f"revision {revision_id!r} already decided")

        optimization = doc.get("optimizations", {}).get(revision_id)
        if verdict is Verdict.ACCEPT:
            if candidate_index is None and optimization:
                candidate_index = int(optimization["chosen_index"])
            if candidate_index is not None:
                if not optimization:
                    raise ValidationError("no optimization candidates for this revision")
                candidates = optimization["candidates"]
                if not 0 <= candidate_index < len(candidates):
                    raise ValidationError(f"candidate_index {candidate_index} out of range")
                accepted_text = candidates[candidate_index]["text"]
            else:
                accepted_text = revision_dict["text"]
        elif verdict is Verdict.EDIT:
            accepted_text = final_text
        else:
            accepted_text = ""

        decision = ReviewDecision(
            revision_id=revision_id,
            verdict=verdict,
            reviewer=reviewer,
            final_text=final_text,
            candidate_index=candidate_index,
        )
        self.workspace.append_decision(decision)

        new_revision_id = None
        if verdict in (Verdict.ACCEPT, Verdict.EDIT):
            seq = sum(
                1 for d in self.workspace.load_decisions() if d.revision_id == revision_id
            )
            new_revision = Revision(
                id=f"{revision_id}:dec{seq}",
                provision_number=revision_dict["provision_number"],
                contract_id=revision_dict["contract_id"],
                text=accepted_text,
                label=Label.ACCEPTABLE,
                source=Source.NEGOTIATED,
            )
            self.workspace.append_revisions([new_revision])
            vector = self.embedder.embed([new_revision.text])[0]
            self.store.add(
                EmbeddingRecord(
                    revision_id=new_revision.id,
                    vector=vector,
                    label=new_revision.label,
                    provision_number=new_revision.provision_number,
                )
            )
            new_revision_id = new_revision.id

        flag["status"] = FlagStatus.DECIDED.value
        self.workspace.save_contract_doc(doc)
        return {
            "decision": decision.to_dict(),
            "new_revision_id": new_revision_id,
            "flag": flag,
        }

    # -- training ------------------------------------------------------------------

    def embed_missing(self) -> int:
        """Embed labeled revisions that are not yet in the vector store."""
        count = 0
        for revision in self.workspace.load_revisions():
            if self.store.get(revision.id) is not None:
                continue
            vector = self.embedder.embed([revision.text])[0]
            self.store.add(
                EmbeddingRecord(
                    revision_id=revision.id,
                    vector=vector,
                    label=revision.label,
                    provision_number=revision.provision_number,
                )
            )
            count += 1
        return count

    def _labeled_records(self) -> list[EmbeddingRecord]:
        return [r for r in self.store.records if r.label is not Label.UNLABELED]

    def train_model(self, **overrides) -> dict:
        """Train a new model version on the labeled store, unconditionally."""
        records = self._labeled_records()
        if not records:
            raise TooFewPoints("no labeled embeddings in store; run embed first")
        config = train_config(self.config, **overrides)
        model = train_ensemble(records, config)
        decision_count = len(self.workspace.load_decisions())
        version = self.workspace.save_model_version(model, decision_count)
        log.info("trained model version %d on %d records", version, len(records))
        return {"version": version, "records": len(records), "metrics": model.metrics}

    def retrain_snapshot(self, min_decisions: int | None = None, **overrides) -> dict:
        """Retrain when enough new decisions accumulated since the last snapshot."""
        threshold = (
            min_decisions
            if min_decisions is not None
            else int(self.config["service"]["retrain_min_decisions"])
        )
        decision_count = len(self.workspace.load_decisions())
        new_decisions = decision_count - self.workspace.decisions_at_last_train()
        if new_decisions < threshold:
            return {
                "status": "skipped",
                "reason": f"{new_decisions} new decisions < threshold {threshold}",
                "version": self.workspace.current_model_version(),
            }
        result = self.train_model(**overrides)
        return {"status": "trained", "new_decisions": new_decisions, **result}
