"""Pluggable endpoint clients: embedders, LLM chat completion, pair scorers.

Every provider has an embedded offline twin so the full pipeline runs with
no network: a feature-hashing embedder, a scripted LLM that replays canned
replies, and a scorer built on fallback-embedding cosine.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import httpx
import numpy as np

from .embedding import EmbeddingVector
from .errors import MalformedLLMOutput, ProviderError, ProviderUnavailable, ScorerUnavailable

FALLBACK_DIM = 256
FALLBACK_MODEL_ID = f"fallback-hash-{FALLBACK_DIM}"

_WORD_RE = re.compile(r"[a-z0-9]+")


class FallbackEmbedder:
    """Deterministic feature-hashing embedder (word unigrams, L2-normalized).

    No model weights, no network: each token hashes to one of ``dim`` buckets
    with a ±1 sign, which is enough signal for tests and offline runs.
    """

    def __init__(self, dim: int = FALLBACK_DIM):
        self.dim = dim
        self.model_id = f"fallback-hash-{dim}"

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        return [self._embed_one(text) for text in texts]

    def _embed_one(self, text: str) -> EmbeddingVector:
        vec = np.zeros(self.dim, dtype=np.float64)
        tokens = _WORD_RE.findall(text.lower()) or ["<empty>"]
        for token in tokens:
            digest = hashlib.md5(token.encode("utf-8")).digest()
            index = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[index] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return EmbeddingVector(values=(vec / norm).astype(np.float32), model_id=self.model_id)


class HttpEmbeddingProvider:
    """OpenAI-compatible embeddings endpoint: POST {model, input} -> {data: [...]}."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.model_id = model
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._timeout = timeout

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        try:
            response = httpx.post(
                self.endpoint,
                json={"model": self.model, "input": texts},
                headers=self._headers,
                timeout=self._timeout,
            )
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"embedding endpoint unreachable: {exc}") from exc
        if response.status_code // 100 != 2:
            raise ProviderError(
                f"embedding endpoint returned {response.status_code}: {response.text[:200]}"
            )
        try:
            data = response.json()["data"]
            rows = sorted(data, key=lambda item: item["index"])
            return [
                EmbeddingVector(
                    values=np.asarray(row["embedding"], dtype=np.float32),
                    model_id=self.model,
                )
                for row in rows
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed embeddings response: {exc}") from exc


class HttpLLMClient:
    """OpenAI-compatible chat completions endpoint."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None, timeout: float = 300.0):
        self.endpoint = endpoint
        self.model = model
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._timeout = timeout

    def complete(
        self,
        prompt: str,
        *,
        temperature: float = 0.8,
        top_p: float = 0.9,
        max_tokens: int = 8192,
        seed: int | None = None,
    ) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "top_p": top_p,
            "max_tokens": max_tokens,
        }
        if seed is not None:
            body["seed"] = seed
        try:
            response = httpx.post(
                self.endpoint, json=body, headers=self._headers, timeout=self._timeout
            )
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"LLM endpoint unreachable: {exc}") from exc
        if response.status_code // 100 != 2:
            raise ProviderError(
                f"LLM endpoint returned {response.status_code}: {response.text[:200]}"
            )
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat completion response: {exc}") from exc


class ScriptedLLMClient:
    """Replays canned replies in order; the offline stand-in for a live LLM.

    Received prompts are recorded on ``prompts`` so tests can assert on them.
    """

    def __init__(self, replies: list[str], cycle: bool = False):
        self._replies = list(replies)
        self._cursor = 0
        self._cycle = cycle
        self.prompts: list[str] = []

    @classmethod
    def from_file(cls, path: str | Path, cycle: bool = False) -> "ScriptedLLMClient":
        """Load replies from a JSONL file of {"reply": ...} records."""
        replies = []
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    replies.append(json.loads(line)["reply"])
        return cls(replies, cycle=cycle)

    def complete(self, prompt: str, **_sampling) -> str:
        self.prompts.append(prompt)
        if self._cursor >= len(self._replies):
            if not self._cycle or not self._replies:
                raise ProviderUnavailable("scripted LLM ran out of replies")
            self._cursor = 0
        reply = self._replies[self._cursor]
        self._cursor += 1
        return reply


class HttpScorerClient:
    """Cross-encoder scorer endpoint: POST {query, texts} -> {scores in [0,1]}."""

    def __init__(self, endpoint: str, api_key: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._timeout = timeout

    def score(self, query: str, texts: list[str]) -> list[float]:
        try:
            response = httpx.post(
                self.endpoint,
                json={"query": query, "texts": texts},
                headers=self._headers,
                timeout=self._timeout,
            )
        except httpx.HTTPError as exc:
            raise ScorerUnavailable(f"scorer endpoint unreachable: {exc}") from exc
        if response.status_code // 100 != 2:
            raise ScorerUnavailable(
                f"scorer endpoint returned {response.status_code}: {response.text[:200]}"
            )
        try:
            scores = [float(s) for s in response.json()["scores"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ScorerUnavailable(f"malformed scorer response: {exc}") from exc
        if len(scores) != len(texts):
            raise ScorerUnavailable(
                f"scorer returned {len(scores)} scores for {len(texts)} texts"
            )
        return scores


class EmbeddedScorer:
    """Offline pair scorer: fallback-embedding cosine mapped onto [0, 1]."""

    def __init__(self, embedder: FallbackEmbedder | None = None):
        self._embedder = embedder or FallbackEmbedder()

    def score(self, query: str, texts: list[str]) -> list[float]:
        vectors = self._embedder.embed([query] + texts)
        q = vectors[0].values.astype(np.float64)
        out = []
        for vec in vectors[1:]:
            t = vec.values.astype(np.float64)
            cos = float(np.dot(q, t))  # fallback vectors are unit-norm
            out.append((1.0 + max(-1.0, min(1.0, cos))) / 2.0)
        return out


def extract_json_object(reply: str) -> dict:
    """Pull the first balanced-braces JSON object out of an LLM reply.

    LLMs habitually wrap JSON in prose; scan for the first ``{`` whose
    braces balance and parse that span. Raises MalformedLLMOutput when no
    parseable object exists.
    """
    start = reply.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for idx in range(start, len(reply)):
            ch = reply[idx]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = reply[start : idx + 1]
                    try:
                        parsed = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(parsed, dict):
                        return parsed
                    break
        start = reply.find("{", start + 1)
    raise MalformedLLMOutput("no JSON object found in reply")
