"""Embedding vectors and the persistent exact nearest-neighbor store.

The store is deliberately exhaustive: at the corpus sizes this engine targets
(tens of thousands of vectors) brute-force search is fast, and exact scores
keep retrieval deterministic. Vectors persist as little-endian float32 in a
sidecar binary file indexed by a JSONL metadata file; the index line for a
record is only written after its vector bytes are durable, so a torn write
never surfaces as a partial record.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Label
from .errors import DimMismatch, EmptyStore, ProviderError, ValidationError, ZeroVector


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray  # float32, shape (dim,)
    model_id: str

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("embedding contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class EmbeddingRecord:
    revision_id: str
    vector: EmbeddingVector
    label: Label
    provision_number: str


class Metric(str, Enum):
    COSINE = "Cosine"
    L2 = "L2"


@dataclass(frozen=True)
class Hit:
    record: EmbeddingRecord
    score: float


def _check_dims(a: EmbeddingVector, b: EmbeddingVector) -> None:
    if a.dim != b.dim:
        raise DimMismatch(f"dims differ: {a.dim} vs {b.dim}")


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity in [-1, 1]; raises ZeroVector on a zero-norm input."""
    _check_dims(a, b)
    av = a.values.astype(np.float64)
    bv = b.values.astype(np.float64)
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for all-zero vector")
    value = float(np.dot(av, bv) / (na * nb))
    return max(-1.0, min(1.0, value))


def l2(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Euclidean distance between two vectors of equal dimension."""
    _check_dims(a, b)
    diff = a.values.astype(np.float64) - b.values.astype(np.float64)
    return float(np.linalg.norm(diff))


def embed_texts(provider, texts: Sequence[str]) -> list[EmbeddingVector]:
    """Embed a batch of texts through a provider, preserving order.

    The provider must return one vector per input; a count mismatch is a
    ProviderError and inconsistent dimensions within the batch a DimMismatch.
    """
    if not texts:
        raise ValidationError("texts must be non-empty")
    vectors = provider.embed(list(texts))
    if len(vectors) != len(texts):
        raise ProviderError(
            f"provider returned {len(vectors)} vectors for {len(texts)} inputs"
        )
    dims = {v.dim for v in vectors}
    if len(dims) > 1:
        raise DimMismatch(f"inconsistent dims in batch: {sorted(dims)}")
    return list(vectors)


class VectorStore:
    """Append-only collection of embedding records with exact queries.

    All records share one dimension and embedding model id. When opened over
    a base path, appends go straight to disk; reads always work off the
    in-memory snapshot.
    """

    def __init__(self):
        self._records: list[EmbeddingRecord] = []
        self._ids: set[str] = set()
        self._matrix: np.ndarray | None = None
        self._lock = threading.Lock()
        self._bin_path: Path | None = None
        self._idx_path: Path | None = None
        self.dim: int | None = None
        self.model_id: str | None = None

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple[EmbeddingRecord, ...]:
        return tuple(self._records)

    def get(self, revision_id: str) -> EmbeddingRecord | None:
        for record in self._records:
            if record.revision_id == revision_id:
                return record
        return None

    def add(self, record: EmbeddingRecord) -> None:
        with self._lock:
            self._validate(record)
            if self._bin_path is not None:
                self._append_to_disk(record)
            self._commit(record)

    def extend(self, records: Iterable[EmbeddingRecord]) -> None:
        for record in records:
            self.add(record)

    def _validate(self, record: EmbeddingRecord) -> None:
        if record.revision_id in self._ids:
            raise ValidationError(f"duplicate revision_id {record.revision_id!r}")
        if self.dim is None:
            self.dim = record.vector.dim
            self.model_id = record.vector.model_id
        else:
            if record.vector.dim != self.dim:
                raise DimMismatch(
                    f"store dim {self.dim}, record dim {record.vector.dim}"
                )
            if record.vector.model_id != self.model_id:
                raise ValidationError(
                    f"store model {self.model_id!r}, record model {record.vector.model_id!r}"
                )

    def _commit(self, record: EmbeddingRecord) -> None:
        self._records.append(record)
        self._ids.add(record.revision_id)
        self._matrix = None

    # -- persistence ------------------------------------------------------

    @classmethod
    def open(cls, base: str | Path) -> "VectorStore":
        """Load (or create) a store persisted at ``base`` (.bin/.idx sidecars)."""
        store = cls()
        base = Path(base)
        store._bin_path = base.with_suffix(".bin")
        store._idx_path = base.with_suffix(".idx")
        if store._idx_path.exists():
            blob = store._bin_path.read_bytes() if store._bin_path.exists() else b""
            with store._idx_path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    meta = json.loads(line)
                    count = int(meta["dim"])
                    offset = int(meta["offset"])
                    raw = blob[offset : offset + 4 * count]
                    values = np.frombuffer(raw, dtype="<f4").astype(np.float32)
                    record = EmbeddingRecord(
                        revision_id=meta["revision_id"],
                        vector=EmbeddingVector(values=values, model_id=meta["model_id"]),
                        label=Label(meta["label"]),
                        provision_number=meta["provision_number"],
                    )
                    store._validate(record)
                    store._commit(record)
        return store

    def _append_to_disk(self, record: EmbeddingRecord) -> None:
        assert self._bin_path is not None and self._idx_path is not None
        self._bin_path.parent.mkdir(parents=True, exist_ok=True)
        with self._bin_path.open("ab") as fh:
            offset = fh.tell()
            fh.write(record.vector.values.astype("<f4").tobytes())
            fh.flush()
            os.fsync(fh.fileno())
        meta = {
            "revision_id": record.revision_id,
            "label": record.label.value,
            "provision_number": record.provision_number,
            "offset": offset,
            "dim": record.vector.dim,
            "model_id": record.vector.model_id,
        }
        with self._idx_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(meta, ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def save(self, base: str | Path) -> None:
        """Write the full store to ``base`` and keep appending there."""
        base = Path(base)
        self._bin_path = base.with_suffix(".bin")
        self._idx_path = base.with_suffix(".idx")
        self._bin_path.parent.mkdir(parents=True, exist_ok=True)
        self._bin_path.write_bytes(b"")
        self._idx_path.write_text("")
        records, self._records, self._ids = self._records, [], set()
        self.dim = None
        self.model_id = None
        for record in records:
            self._append_to_disk(record)
            self._validate(record)
            self._commit(record)

    # -- queries ----------------------------------------------------------

    def _matrix_snapshot(self) -> tuple[list[EmbeddingRecord], np.ndarray]:
        with self._lock:
            if self._matrix is None and self._records:
                self._matrix = np.stack(
                    [r.vector.values for r in self._records]
                ).astype(np.float64)
            return list(self._records), self._matrix

    def query(
        self,
        query_vec: EmbeddingVector,
        metric: Metric = Metric.COSINE,
        top_k: int = 10,
        filter: Callable[[EmbeddingRecord], bool] | None = None,
    ) -> list[Hit]:
        """Exact top-k search, best-first, ties broken by ascending revision_id."""
        if top_k < 1:
            raise ValidationError("top_k must be positive")
        records, matrix = self._matrix_snapshot()
        if not records:
            raise EmptyStore("vector store is empty")
        if query_vec.dim != records[0].vector.dim:
            raise DimMismatch(f"store dim {records[0].vector.dim}, query dim {query_vec.dim}")
        q = query_vec.values.astype(np.float64)
        if metric is Metric.COSINE:
            qn = np.linalg.norm(q)
            if qn == 0.0:
                raise ZeroVector("cosine undefined for all-zero query")
            norms = np.linalg.norm(matrix, axis=1)
            safe = np.where(norms == 0.0, 1.0, norms)
            scores = (matrix @ q) / (safe * qn)
            scores = np.where(norms == 0.0, -math.inf, scores)
            better_first = True
        else:
            scores = np.linalg.norm(matrix - q, axis=1)
            better_first = False
        indexed = [
            (float(scores[i]), records[i].revision_id, records[i])
            for i in range(len(records))
            if filter is None or filter(records[i])
        ]
        if not indexed:
            raise EmptyStore("no records match the query filter")
        indexed.sort(key=lambda t: (-t[0] if better_first else t[0], t[1]))
        return [Hit(record=r, score=s) for s, _, r in indexed[:top_k]]
