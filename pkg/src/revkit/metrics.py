"""Distribution and pipeline metrics: Fréchet distance, success rate, export.

The Fréchet distance between Gaussian moment summaries of two embedding sets
measures how closely a synthetic dataset tracks the real one (lower is more
similar). Covariances are regularized with 1e-6 * I because high-dimensional
embeddings with few samples are routinely singular.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Label, Revision
from .embedding import EmbeddingVector, VectorStore
from .errors import DimMismatch, EmptySet, EmptyStore, TooFewVectors, ValidationError

log = logging.getLogger(__name__)

COVARIANCE_EPSILON = 1e-6


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray  # float64, shape (dim,)
    covariance: np.ndarray  # float64, shape (dim, dim)
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValidationError("covariance shape must match mean dimension")
        if not np.allclose(cov, cov.T, atol=1e-9):
            raise ValidationError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


def moments(vectors: Sequence[EmbeddingVector] | np.ndarray) -> MomentSummary:
    """Sample mean and regularized unbiased covariance of a vector set."""
    if isinstance(vectors, np.ndarray):
        X = np.asarray(vectors, dtype=np.float64)
    else:
        X = np.stack([v.values.astype(np.float64) for v in vectors]) if len(vectors) else np.empty((0, 0))
    if X.ndim != 2 or X.shape[0] < 2:
        raise TooFewVectors("moments need at least 2 vectors")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)
    cov = (cov + cov.T) / 2.0 + COVARIANCE_EPSILON * np.eye(X.shape[1])
    return MomentSummary(mean=mean, covariance=cov, count=X.shape[0])


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; negative eigenvalues are clamped to zero."""
    sym = (matrix + matrix.T) / 2.0
    eigenvalues, eigenvectors = np.linalg.eigh(sym)
    clamped = np.clip(eigenvalues, 0.0, None)
    return (eigenvectors * np.sqrt(clamped)) @ eigenvectors.T


def frechet_distance(a: MomentSummary, b: MomentSummary) -> float:
    """Fréchet distance between two Gaussian summaries.

    |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2}),
    with matrix roots taken through symmetric eigendecomposition. The inner
    product form keeps the argument symmetric, so no complex arithmetic
    appears, and clamping keeps the result non-negative.
    """
    if a.dim != b.dim:
        raise DimMismatch(f"dims differ: {a.dim} vs {b.dim}")
    mean_term = float(np.sum((a.mean - b.mean) ** 2))
    root_a = _psd_sqrt(a.covariance)
    inner = _psd_sqrt(root_a @ b.covariance @ root_a)
    trace_term = float(np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * np.trace(inner))
    return max(0.0, mean_term + trace_term)


def fid_datasets(
    real_vectors: Sequence[EmbeddingVector] | np.ndarray,
    synth_vectors: Sequence[EmbeddingVector] | np.ndarray,
    *,
    normalize: bool = False,
) -> float:
    """Fréchet distance between the real and synthetic embedding sets.

    Sample counts below dim/4 are allowed but warned about: the estimate is
    statistically noisy there. ``normalize`` L2-normalizes rows first.
    """
    real = _as_matrix(real_vectors)
    synth = _as_matrix(synth_vectors)
    if real.shape[0] >= 2 and synth.shape[0] >= 2:
        dim = real.shape[1]
        smallest = min(real.shape[0], synth.shape[0])
        if smallest < dim / 4:
            log.warning(
                "FID over %d samples in %d dims is noisy (below dim/4 guideline)",
                smallest, dim,
            )
    if normalize:
        real = _normalize(real)
        synth = _normalize(synth)
    return frechet_distance(moments(real), moments(synth))


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        return np.asarray(vectors, dtype=np.float64)
    return (
        np.stack([v.values.astype(np.float64) for v in vectors])
        if len(vectors)
        else np.empty((0, 0))
    )


def _normalize(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return X / norms


def success_rate(model, revisions: Sequence[Revision], provider) -> float:
    """Fraction of revisions the classifier predicts Acceptable."""
    from .classifier import predict

    if not revisions:
        raise EmptySet("no revisions to score")
    vectors = provider.embed([r.text for r in revisions])
    accepted = sum(
        1 for vec in vectors if predict(model, vec).label is Label.ACCEPTABLE
    )
    return accepted / len(revisions)


def success_rate_from_vectors(model, vectors: Sequence[EmbeddingVector]) -> float:
    """Success rate over pre-embedded candidates."""
    from .classifier import predict

    if not vectors:
        raise EmptySet("no vectors to score")
    accepted = sum(1 for vec in vectors if predict(model, vec).label is Label.ACCEPTABLE)
    return accepted / len(vectors)


def export_embeddings(store: VectorStore, path: str | Path) -> int:
    """Dump the store as JSONL for external projection/visualization tools.

    Each line carries {revision_id, label, provision_number, vector}.
    Returns the number of lines written.
    """
    records = store.records
    if not records:
        raise EmptyStore("nothing to export")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                json.dumps(
                    {
                        "revision_id": record.revision_id,
                        "label": record.label.value,
                        "provision_number": record.provision_number,
                        "vector": [float(x) for x in record.vector.values],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    return len(records)
