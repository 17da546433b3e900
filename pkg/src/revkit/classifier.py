"""Acceptability classification: clustered logistic ensemble and zero-shot LLM.

The discriminative path clusters revision embeddings with k-means and trains
one logistic-regression head per cluster; queries route to the nearest
centroid by cosine. Features are L2-normalized before training and
inference, which both stabilizes the fixed-step gradient descent and makes
predictions scale-invariant in the query vector. With normalized rows the
logistic loss gradient is Lipschitz with constant below 1/2 + lambda, so the
default 0.1 learning rate provably decreases the loss every epoch.
"""

from __future__ import annotations

import base64
import json
import math
import random
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Label, Revision
from .embedding import EmbeddingRecord, EmbeddingVector, Metric, VectorStore
from .errors import (
    DimMismatch,
    EmptyTestSet,
    MalformedLLMOutput,
    TooFewPoints,
    ValidationError,
    ZeroVector,
)

MODEL_FORMAT_VERSION = 1

KMEANS_TOL = 1e-6
KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class TrainConfig:
    K: int = 8
    learning_rate: float = 0.1
    epochs: int = 500
    l2_lambda: float = 1e-3
    seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError("K must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValidationError("val_fraction must be in (0, 1)")


@dataclass(frozen=True)
class LogisticHead:
    weights: np.ndarray  # float64, shape (dim,)
    bias: float
    final_loss: float
    loss_history: tuple[float, ...] = ()

    def probability(self, x: np.ndarray) -> float:
        return _sigmoid(float(np.dot(self.weights, x) + self.bias))


@dataclass(frozen=True)
class EnsembleModel:
    model_id: str
    dim: int
    centroids: np.ndarray  # float64, shape (K, dim)
    heads: tuple[LogisticHead, ...]
    train_config: TrainConfig
    metrics: dict

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])


@dataclass(frozen=True)
class Prediction:
    label: Label
    probability_acceptable: float
    cluster_id: int
    routing_similarity: float


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations: int


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _normalize_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroVector("cannot L2-normalize an all-zero feature row")
    return X / norms


def kmeans(vectors: np.ndarray, K: int, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding, deterministic for a seed.

    Iterates until the largest centroid shift drops below 1e-6 or 100
    rounds. An empty cluster is repaired by stealing the point currently
    farthest from its assigned centroid.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("vectors must be a 2-D array")
    n = X.shape[0]
    if n < K:
        raise TooFewPoints(f"{n} points for K={K}")
    rng = np.random.default_rng(seed)

    centroids = _kmeanspp_init(X, K, rng)
    assignments = np.zeros(n, dtype=np.int64)
    iterations = 0
    for iterations in range(1, KMEANS_MAX_ITER + 1):
        distances = _sq_distances(X, centroids)
        assignments = np.argmin(distances, axis=1)
        new_centroids = centroids.copy()
        for cluster in range(K):
            members = X[assignments == cluster]
            if len(members):
                new_centroids[cluster] = members.mean(axis=0)
        empty = [c for c in range(K) if not np.any(assignments == c)]
        if empty:
            point_dist = _sq_distances(X, new_centroids)[np.arange(n), assignments]
            taken: set[int] = set()
            for cluster in empty:
                order = np.argsort(-point_dist)
                steal = next(int(i) for i in order if int(i) not in taken)
                taken.add(steal)
                new_centroids[cluster] = X[steal]
                assignments[steal] = cluster
                point_dist[steal] = 0.0
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < KMEANS_TOL:
            break
    distances = _sq_distances(X, centroids)
    assignments = np.argmin(distances, axis=1)
    inertia = float(distances[np.arange(n), assignments].sum())
    return KMeansResult(
        centroids=centroids,
        assignments=assignments,
        inertia=inertia,
        iterations=iterations,
    )


def _kmeanspp_init(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    for _ in range(1, K):
        d2 = np.min(_sq_distances(X, X[chosen]), axis=1)
        total = float(d2.sum())
        if total <= 0.0:
            candidate = int(rng.integers(n))
        else:
            candidate = int(rng.choice(n, p=d2 / total))
        chosen.append(candidate)
    return X[chosen].copy()


def _sq_distances(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def logistic_loss_and_grad(
    weights: np.ndarray,
    bias: float,
    X: np.ndarray,
    y: np.ndarray,
    l2_lambda: float,
) -> tuple[float, np.ndarray, float]:
    """Regularized cross-entropy loss with its analytic gradient.

    Loss is mean cross-entropy plus (lambda/2)*|w|^2; the bias is not
    penalized. Computed via logaddexp for numerical stability.
    """
    z = X @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    loss += 0.5 * l2_lambda * float(np.dot(weights, weights))
    p = 1.0 / (1.0 + np.exp(-z))
    residual = p - y
    grad_w = X.T @ residual / len(y) + l2_lambda * weights
    grad_b = float(np.mean(residual))
    return loss, grad_w, grad_b


def train_logistic(X: np.ndarray, y: np.ndarray, config: TrainConfig) -> LogisticHead:
    """Full-batch gradient descent on the regularized cross-entropy.

    Rows of X are expected L2-normalized. If only one class is present the
    head degenerates to a constant probability: the class prior clipped to
    [0.01, 0.99], encoded as zero weights and a logit bias.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValidationError("X must be 2-D with one label per row")
    if len(y) == 0:
        raise TooFewPoints("no training rows")
    classes = set(np.unique(y).tolist())
    if not classes <= {0.0, 1.0}:
        raise ValidationError(f"labels must be 0/1, got {sorted(classes)}")
    if len(classes) == 1:
        prior = min(0.99, max(0.01, float(np.mean(y))))
        bias = math.log(prior / (1.0 - prior))
        loss, _, _ = logistic_loss_and_grad(np.zeros(X.shape[1]), bias, X, y, config.l2_lambda)
        return LogisticHead(
            weights=np.zeros(X.shape[1]), bias=bias, final_loss=loss, loss_history=(loss,)
        )

    weights = np.zeros(X.shape[1], dtype=np.float64)
    bias = 0.0
    history: list[float] = []
    for _epoch in range(config.epochs):
        loss, grad_w, grad_b = logistic_loss_and_grad(weights, bias, X, y, config.l2_lambda)
        history.append(loss)
        weights = weights - config.learning_rate * grad_w
        bias = bias - config.learning_rate * grad_b
    final_loss, _, _ = logistic_loss_and_grad(weights, bias, X, y, config.l2_lambda)
    history.append(final_loss)
    return LogisticHead(
        weights=weights, bias=bias, final_loss=final_loss, loss_history=tuple(history)
    )


def split_train_val(
    count: int, val_fraction: float, seed: int
) -> tuple[list[int], list[int]]:
    """Deterministic shuffle split; both sides are always non-empty."""
    if count < 2:
        raise TooFewPoints("need at least 2 records to split")
    indices = list(range(count))
    random.Random(seed).shuffle(indices)
    val_count = min(max(1, round(count * val_fraction)), count - 1)
    return indices[val_count:], indices[:val_count]


def _features_and_labels(
    records: Sequence[EmbeddingRecord],
) -> tuple[np.ndarray, np.ndarray]:
    if any(r.label is Label.UNLABELED for r in records):
        raise ValidationError("training records must be labeled")
    X = np.stack([r.vector.values.astype(np.float64) for r in records])
    y = np.array([1.0 if r.label is Label.ACCEPTABLE else 0.0 for r in records])
    return _normalize_rows(X), y


def train_ensemble(
    records: Sequence[EmbeddingRecord], config: TrainConfig
) -> EnsembleModel:
    """Cluster the training embeddings and fit one logistic head per cluster."""
    if len(records) < config.K * 2:
        raise TooFewPoints(f"{len(records)} records for K={config.K} (need >= {config.K * 2})")
    X, y = _features_and_labels(records)
    train_idx, val_idx = split_train_val(len(records), config.val_fraction, config.seed)
    X_train, y_train = X[train_idx], y[train_idx]
    X_val, y_val = X[val_idx], y[val_idx]
    if len(X_train) < config.K:
        raise TooFewPoints("training split smaller than K")

    clustering = kmeans(X_train, config.K, config.seed)
    heads: list[LogisticHead] = []
    per_cluster = []
    for cluster in range(config.K):
        mask = clustering.assignments == cluster
        if not mask.any():
            # duplicate centroids can leave a cluster empty; cosine routing
            # then never selects it, so an inert 0.5 head suffices
            head = LogisticHead(
                weights=np.zeros(X.shape[1]), bias=0.0, final_loss=0.0
            )
        else:
            head = train_logistic(X_train[mask], y_train[mask], config)
        heads.append(head)
        per_cluster.append(
            {
                "cluster_id": cluster,
                "count": int(mask.sum()),
                "positives": int(y_train[mask].sum()),
            }
        )

    model = EnsembleModel(
        model_id=records[0].vector.model_id,
        dim=X.shape[1],
        centroids=clustering.centroids,
        heads=tuple(heads),
        train_config=config,
        metrics={},
    )
    train_accuracy = _accuracy(model, X_train, y_train)
    val_accuracy = _accuracy(model, X_val, y_val)
    metrics = {
        "train_count": len(train_idx),
        "val_count": len(val_idx),
        "train_accuracy": train_accuracy,
        "val_accuracy": val_accuracy,
        "inertia": clustering.inertia,
        "kmeans_iterations": clustering.iterations,
        "per_cluster": per_cluster,
    }
    return EnsembleModel(
        model_id=model.model_id,
        dim=model.dim,
        centroids=model.centroids,
        heads=model.heads,
        train_config=config,
        metrics=metrics,
    )


def _route(model: EnsembleModel, x: np.ndarray) -> tuple[int, float]:
    xn = float(np.linalg.norm(x))
    if xn == 0.0:
        raise ZeroVector("cannot route an all-zero vector")
    norms = np.linalg.norm(model.centroids, axis=1)
    dots = model.centroids @ x
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = np.where(norms > 0.0, dots / (norms * xn), -np.inf)
    cluster = int(np.argmax(sims))  # ties resolve to the lowest cluster id
    return cluster, float(sims[cluster])


def _predict_row(model: EnsembleModel, x: np.ndarray) -> Prediction:
    cluster, similarity = _route(model, x)
    x_hat = x / np.linalg.norm(x)
    p = model.heads[cluster].probability(x_hat)
    label = Label.ACCEPTABLE if p >= 0.5 else Label.UNACCEPTABLE
    return Prediction(
        label=label,
        probability_acceptable=p,
        cluster_id=cluster,
        routing_similarity=similarity,
    )


def predict(model: EnsembleModel, vector: EmbeddingVector) -> Prediction:
    """Route to the nearest centroid by cosine and apply that cluster's head."""
    if vector.dim != model.dim:
        raise DimMismatch(f"model dim {model.dim}, vector dim {vector.dim}")
    return _predict_row(model, vector.values.astype(np.float64))


def _accuracy(model: EnsembleModel, X: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return 0.0
    correct = 0
    for row, target in zip(X, y):
        pred = _predict_row(model, row)
        predicted = 1.0 if pred.label is Label.ACCEPTABLE else 0.0
        correct += int(predicted == target)
    return correct / len(y)


def evaluate_classifier(
    model: EnsembleModel, records: Sequence[EmbeddingRecord]
) -> dict:
    """Accuracy, per-class F1, macro F1, and the confusion matrix.

    Acceptable is the positive class; the headline F1 reported by the CLI is
    f1_acceptable, with f1_unacceptable alongside.
    """
    if not records:
        raise EmptyTestSet("no test records")
    tp = fp = fn = tn = 0
    for record in records:
        if record.label is Label.UNLABELED:
            raise ValidationError("test records must be labeled")
        predicted = predict(model, record.vector).label
        actual = record.label
        if predicted is Label.ACCEPTABLE and actual is Label.ACCEPTABLE:
            tp += 1
        elif predicted is Label.ACCEPTABLE:
            fp += 1
        elif actual is Label.ACCEPTABLE:
            fn += 1
        else:
            tn += 1
    f1_acc = _f1(tp, fp, fn)
    f1_unacc = _f1(tn, fn, fp)
    return {
        "count": len(records),
        "accuracy": (tp + tn) / len(records),
        "f1_acceptable": f1_acc,
        "f1_unacceptable": f1_unacc,
        "macro_f1": (f1_acc + f1_unacc) / 2.0,
        "confusion": {"tp": tp, "fp": fp, "fn": fn, "tn": tn},
    }


def _f1(tp: int, fp: int, fn: int) -> float:
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if denominator else 0.0


# -- zero-shot LLM classification ------------------------------------------

ZERO_SHOT_HEADER = (
    "Below are examples of contract clause revisions labeled as either acceptable "
    "or unacceptable. Analyze the patterns in these examples and determine whether "
    "the given query revision should be classified as ACCEPTABLE or UNACCEPTABLE. "
    "Provide a brief justification for your classification."
)

_LABEL_LINE_RE = re.compile(r"\blabel\s*:\s*(acceptable|unacceptable)\b", re.IGNORECASE)
_JUSTIFICATION_RE = re.compile(r"\bjustification\s*:\s*(.*)", re.IGNORECASE | re.DOTALL)


def build_zero_shot_prompt(demonstrations: Sequence[tuple[str, Label]], query_text: str) -> str:
    """Few-shot acceptability prompt: labeled demonstrations then the query."""
    blocks = [ZERO_SHOT_HEADER, ""]
    for i, (text, label) in enumerate(demonstrations, start=1):
        blocks.append(f"Demonstration {i}")
        blocks.append(f"Revision: {text}")
        blocks.append(f"Label: {label.value.upper()}")
        blocks.append("")
    blocks.append(f"Query Revision: {query_text.strip()}")
    blocks.append("")
    blocks.append("Output:")
    blocks.append("Label: ACCEPTABLE")
    blocks.append("Justification: [Explain the decision]")
    return "\n".join(blocks)


def parse_zero_shot_reply(reply: str) -> tuple[Label, str]:
    match = _LABEL_LINE_RE.search(reply)
    if not match:
        raise MalformedLLMOutput("reply has no Label line")
    label = Label.ACCEPTABLE if match.group(1).lower() == "acceptable" else Label.UNACCEPTABLE
    justification_match = _JUSTIFICATION_RE.search(reply)
    justification = justification_match.group(1).strip() if justification_match else ""
    return label, justification


def zero_shot_classify(
    llm,
    store: VectorStore,
    revision: Revision,
    k_demos: int = 5,
    *,
    texts: Mapping[str, str],
    revision_vector: EmbeddingVector | None = None,
    provider=None,
) -> dict:
    """Classify a revision by prompting with its nearest labeled neighbors.

    Retrieves the top-k most similar acceptable and unacceptable revisions
    as demonstrations (cosine), interleaved in the prompt. ``texts`` maps
    revision ids in the store to their text.
    """
    vec = revision_vector
    if vec is None:
        if provider is None:
            raise ValidationError("pass revision_vector or provider")
        vec = provider.embed([revision.text])[0]
    demos: dict[Label, list[str]] = {}
    for label in (Label.ACCEPTABLE, Label.UNACCEPTABLE):
        hits = store.query(
            vec,
            metric=Metric.COSINE,
            top_k=k_demos,
            filter=lambda r, want=label: r.label is want and r.revision_id != revision.id,
        )
        if len(hits) < k_demos:
            raise ValidationError(
                f"store has only {len(hits)} {label.value} revisions, need {k_demos}"
            )
        demos[label] = [texts[h.record.revision_id] for h in hits]
    interleaved: list[tuple[str, Label]] = []
    for acc, unacc in zip(demos[Label.ACCEPTABLE], demos[Label.UNACCEPTABLE]):
        interleaved.append((acc, Label.ACCEPTABLE))
        interleaved.append((unacc, Label.UNACCEPTABLE))
    prompt = build_zero_shot_prompt(interleaved, revision.text)
    reply = llm.complete(prompt)
    label, justification = parse_zero_shot_reply(reply)
    return {"label": label, "justification": justification}


# -- serialization ----------------------------------------------------------


def _encode_array(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(data.shape),
        "data_b64": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def _decode_array(payload: dict) -> np.ndarray:
    raw = base64.b64decode(payload["data_b64"])
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return arr.reshape(payload["shape"])


def model_to_dict(model: EnsembleModel) -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "model_id": model.model_id,
        "dim": model.dim,
        "k": model.k,
        "centroids": _encode_array(model.centroids),
        "heads": [
            {
                "weights": _encode_array(head.weights),
                "bias": head.bias,
                "final_loss": head.final_loss,
            }
            for head in model.heads
        ],
        "train_config": asdict(model.train_config),
        "metrics": model.metrics,
    }


def model_from_dict(doc: dict) -> EnsembleModel:
    if "version" not in doc:
        raise ValidationError("model document missing version field")
    if doc["version"] != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {doc['version']}")
    heads = tuple(
        LogisticHead(
            weights=_decode_array(h["weights"]),
            bias=float(h["bias"]),
            final_loss=float(h["final_loss"]),
        )
        for h in doc["heads"]
    )
    return EnsembleModel(
        model_id=doc["model_id"],
        dim=int(doc["dim"]),
        centroids=_decode_array(doc["centroids"]),
        heads=heads,
        train_config=TrainConfig(**doc["train_config"]),
        metrics=doc.get("metrics", {}),
    )


def save_model(model: EnsembleModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2), encoding="utf-8")


def load_model(path: str | Path) -> EnsembleModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
