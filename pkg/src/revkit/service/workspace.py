"""Workspace persistence: one directory holding the whole engine state.

Layout:
    contracts/            one JSON document per ingested contract
    revisions.jsonl       append-only labeled revision store
    embeddings.bin/.idx   vector store sidecars
    models/               immutable model versions + CURRENT pointer
    decisions.jsonl       append-only review decisions
    config.json           engine configuration

The labeled revision and decision logs are append-only; every append is
flushed and fsynced before the caller proceeds, so an acknowledged write
survives a crash. Model versions are immutable files; serving swaps by
atomically replacing the CURRENT pointer.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from ..classifier import EnsembleModel, load_model, save_model
from ..corpus import Contract, Revision, contract_from_dict, contract_to_dict
from ..embedding import VectorStore
from ..errors import ValidationError, WorkspaceError


class Verdict(str, Enum):
    ACCEPT = "Accept"
    REJECT = "Reject"
    EDIT = "Edit"


class ConfidenceBand(str, Enum):
    CONFIDENT = "Confident"
    AMBIGUOUS = "Ambiguous"


class FlagStatus(str, Enum):
    OPEN = "Open"
    OPTIMIZED = "Optimized"
    DECIDED = "Decided"


@dataclass
class FlagRecord:
    revision_id: str
    contract_id: str
    provision_number: str
    probability_acceptable: float
    confidence_band: ConfidenceBand
    status: FlagStatus = FlagStatus.OPEN

    def to_dict(self) -> dict:
        return {
            "revision_id": self.revision_id,
            "contract_id": self.contract_id,
            "provision_number": self.provision_number,
            "probability_acceptable": self.probability_acceptable,
            "confidence_band": self.confidence_band.value,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlagRecord":
        return cls(
            revision_id=d["revision_id"],
            contract_id=d["contract_id"],
            provision_number=d["provision_number"],
            probability_acceptable=float(d["probability_acceptable"]),
            confidence_band=ConfidenceBand(d["confidence_band"]),
            status=FlagStatus(d["status"]),
        )


@dataclass(frozen=True)
class ReviewDecision:
    revision_id: str
    verdict: Verdict
    reviewer: str
    final_text: str = ""
    candidate_index: int | None = None
    decided_at: datetime | None = None

    def __post_init__(self):
        if self.verdict is Verdict.EDIT and not self.final_text.strip():
            raise ValidationError("Edit decisions require non-empty final_text")
        if self.decided_at is None:
            object.__setattr__(self, "decided_at", datetime.now(timezone.utc))

    def to_dict(self) -> dict:
        return {
            "revision_id": self.revision_id,
            "verdict": self.verdict.value,
            "reviewer": self.reviewer,
            "final_text": self.final_text,
            "candidate_index": self.candidate_index,
            "decided_at": self.decided_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReviewDecision":
        return cls(
            revision_id=d["revision_id"],
            verdict=Verdict(d["verdict"]),
            reviewer=d["reviewer"],
            final_text=d.get("final_text", ""),
            candidate_index=d.get("candidate_index"),
            decided_at=datetime.fromisoformat(d["decided_at"]),
        )


def _append_jsonl(path: Path, row: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


class Workspace:
    """Filesystem-backed state for one engine instance."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._write_lock = threading.RLock()

    @property
    def write_lock(self) -> threading.RLock:
        """Single-writer lock; reentrant so nested appends compose."""
        return self._write_lock

    @classmethod
    def init(cls, root: str | Path, config: dict | None = None) -> "Workspace":
        ws = cls(root)
        ws.contracts_dir.mkdir(parents=True, exist_ok=True)
        ws.models_dir.mkdir(parents=True, exist_ok=True)
        if config is not None:
            ws.config_path.write_text(
                json.dumps(config, indent=2), encoding="utf-8"
            )
        return ws

    @property
    def contracts_dir(self) -> Path:
        return self.root / "contracts"

    @property
    def models_dir(self) -> Path:
        return self.root / "models"

    @property
    def revisions_path(self) -> Path:
        return self.root / "revisions.jsonl"

    @property
    def decisions_path(self) -> Path:
        return self.root / "decisions.jsonl"

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def embeddings_base(self) -> Path:
        return self.root / "embeddings"

    def require_exists(self) -> None:
        if not self.root.is_dir():
            raise WorkspaceError(f"workspace {self.root} does not exist")

    # -- labeled revision store -------------------------------------------

    def append_revisions(self, revisions: list[Revision]) -> None:
        with self._write_lock:
            for revision in revisions:
                _append_jsonl(self.revisions_path, revision.to_dict())

    def load_revisions(self) -> list[Revision]:
        return [Revision.from_dict(d) for d in _read_jsonl(self.revisions_path)]

    def revision_texts(self) -> dict[str, str]:
        return {r.id: r.text for r in self.load_revisions()}

    # -- vector store -------------------------------------------------------

    def open_store(self) -> VectorStore:
        return VectorStore.open(self.embeddings_base)

    # -- contracts ----------------------------------------------------------

    def save_contract_doc(self, doc: dict) -> None:
        with self._write_lock:
            self.contracts_dir.mkdir(parents=True, exist_ok=True)
            path = self.contracts_dir / f"{doc['contract']['id']}.json"
            tmp = path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(doc, ensure_ascii=False, indent=2), encoding="utf-8")
            os.replace(tmp, path)

    def load_contract_doc(self, contract_id: str) -> dict | None:
        path = self.contracts_dir / f"{contract_id}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def list_contract_ids(self) -> list[str]:
        if not self.contracts_dir.is_dir():
            return []
        return sorted(p.stem for p in self.contracts_dir.glob("*.json"))

    def load_contract(self, contract_id: str) -> Contract | None:
        doc = self.load_contract_doc(contract_id)
        if doc is None:
            return None
        return contract_from_dict(doc["contract"])

    @staticmethod
    def contract_doc(contract: Contract, revisions: list[Revision], flags: list[FlagRecord]) -> dict:
        return {
            "contract": contract_to_dict(contract),
            "revisions": {r.id: r.to_dict() for r in revisions},
            "flags": [f.to_dict() for f in flags],
            "optimizations": {},
        }

    def find_revision_doc(self, revision_id: str) -> tuple[dict, dict] | None:
        """Locate (contract_doc, revision_dict) for an under-review revision."""
        for contract_id in self.list_contract_ids():
            doc = self.load_contract_doc(contract_id)
            if doc and revision_id in doc.get("revisions", {}):
                return doc, doc["revisions"][revision_id]
        return None

    # -- decisions ----------------------------------------------------------

    def append_decision(self, decision: ReviewDecision) -> None:
        with self._write_lock:
            _append_jsonl(self.decisions_path, decision.to_dict())

    def load_decisions(self) -> list[ReviewDecision]:
        return [ReviewDecision.from_dict(d) for d in _read_jsonl(self.decisions_path)]

    # -- model versions -------------------------------------------------------

    def _current_pointer(self) -> dict | None:
        pointer = self.models_dir / "CURRENT"
        if not pointer.exists():
            return None
        return json.loads(pointer.read_text(encoding="utf-8"))

    def current_model_version(self) -> int | None:
        pointer = self._current_pointer()
        return int(pointer["version"]) if pointer else None

    def decisions_at_last_train(self) -> int:
        pointer = self._current_pointer()
        return int(pointer.get("decision_count", 0)) if pointer else 0

    def model_path(self, version: int) -> Path:
        return self.models_dir / f"model-v{version}.json"

    def list_model_versions(self) -> list[int]:
        return sorted(
            int(p.stem.split("-v")[1]) for p in self.models_dir.glob("model-v*.json")
        )

    def save_model_version(self, model: EnsembleModel, decision_count: int) -> int:
        """Persist a new immutable model version and swap CURRENT atomically."""
        with self._write_lock:
            versions = self.list_model_versions()
            version = (versions[-1] + 1) if versions else 1
            self.models_dir.mkdir(parents=True, exist_ok=True)
            save_model(model, self.model_path(version))
            pointer = self.models_dir / "CURRENT"
            tmp = pointer.with_suffix(".tmp")
            tmp.write_text(
                json.dumps({"version": version, "decision_count": decision_count}),
                encoding="utf-8",
            )
            os.replace(tmp, pointer)
            return version

    def load_current_model(self) -> tuple[int, EnsembleModel] | None:
        version = self.current_model_version()
        if version is None:
            return None
        return version, load_model(self.model_path(version))
