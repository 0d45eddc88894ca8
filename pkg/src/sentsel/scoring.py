"""Classifier backends, chunked document classification and the two
classifier-derived sentence signals (entropy and leave-one-out importance)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .corpus import Document, Sentence, reference_tokenize
from .errors import BackendError, InvalidChunkConfig, SingleSentenceDocument

N_CLASSES = 6
DEFAULT_MAX_TOKENS = 512
DEFAULT_OVERLAP = 50


@dataclass(frozen=True)
class ClassScores:
    logits: tuple[float, ...]

    def __post_init__(self):
        logits = tuple(float(x) for x in self.logits)
        if not logits or not all(math.isfinite(x) for x in logits):
            raise BackendError(f"non-finite or empty logits: {self.logits!r}")
        object.__setattr__(self, "logits", logits)

    def __len__(self):
        return len(self.logits)

    def softmax(self) -> np.ndarray:
        z = np.asarray(self.logits, dtype=np.float64)
        e = np.exp(z - z.max())
        return e / e.sum()

    def argmax(self) -> int:
        # first maximum on ties
        return int(np.argmax(self.logits))


@runtime_checkable
class ScorerBackend(Protocol):
    max_tokens: int
    batch_size: int

    def classify(self, texts: Sequence[str]) -> list[ClassScores]:
        ...


@dataclass(frozen=True)
class Chunk:
    token_start: int
    token_end: int
    text: str


def chunk_spans(n_tokens: int, max_tokens: int = DEFAULT_MAX_TOKENS, overlap: int = DEFAULT_OVERLAP) -> list[tuple[int, int]]:
    if max_tokens < 1 or not 0 <= overlap < max_tokens:
        raise InvalidChunkConfig(f"need 0 <= overlap < max_tokens, got overlap={overlap}, max_tokens={max_tokens}")
    if n_tokens <= max_tokens:
        return [(0, n_tokens)]
    stride = max_tokens - overlap
    spans = []
    start = 0
    while True:
        end = min(start + max_tokens, n_tokens)
        spans.append((start, end))
        if end == n_tokens:
            return spans
        start += stride


def chunk_text(tokens: Sequence[str], max_tokens: int = DEFAULT_MAX_TOKENS, overlap: int = DEFAULT_OVERLAP) -> list[Chunk]:
    """Overlapping windows of at most ``max_tokens`` tokens; window ``i``
    starts at ``i * (max_tokens - overlap)`` and the last one is clamped to
    the end of the stream."""
    return [Chunk(s, e, " ".join(tokens[s:e])) for s, e in chunk_spans(len(tokens), max_tokens, overlap)]


def run_backend(backend: ScorerBackend, texts: Sequence[str]) -> list[ClassScores]:
    """Classify in batches of ``backend.batch_size``; failures are re-raised
    as BackendError carrying the index of the first item in the failed batch."""
    out: list[ClassScores] = []
    step = max(1, int(backend.batch_size))
    for start in range(0, len(texts), step):
        batch = list(texts[start:start + step])
        try:
            scores = backend.classify(batch)
        except BackendError as e:
            if e.chunk_index is not None:
                raise
            raise BackendError(str(e), chunk_index=start) from e
        except Exception as e:
            raise BackendError(f"{type(e).__name__}: {e}", chunk_index=start) from e
        if len(scores) != len(batch):
            raise BackendError(f"backend returned {len(scores)} results for {len(batch)} inputs", chunk_index=start)
        out.extend(scores)
    return out


def mean_scores(scores: Sequence[ClassScores]) -> ClassScores:
    # fsum is exactly rounded, so the mean does not depend on dispatch order
    n = len(scores)
    width = len(scores[0])
    if any(len(s) != width for s in scores):
        raise BackendError("inconsistent logit widths across chunks")
    return ClassScores(tuple(math.fsum(s.logits[c] for s in scores) / n for c in range(width)))


def classify_tokens(tokens: Sequence[str], backend: ScorerBackend, overlap: int = DEFAULT_OVERLAP) -> ClassScores:
    chunks = chunk_text(tokens, backend.max_tokens, overlap)
    return mean_scores(run_backend(backend, [c.text for c in chunks]))


def classify_text(text: str, backend: ScorerBackend, overlap: int = DEFAULT_OVERLAP) -> ClassScores:
    return classify_tokens(reference_tokenize(text), backend, overlap)


def classify_document(doc: Document, backend: ScorerBackend, overlap: int = DEFAULT_OVERLAP) -> ClassScores:
    if not doc.sentences:
        raise SingleSentenceDocument(f"{doc.doc_id}: document has no sentences")
    return classify_tokens(doc.tokens(), backend, overlap)


# --------------------------------------------------------------------------
# Sentence signals
# --------------------------------------------------------------------------

def entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def _negative_entropy(dists: list[np.ndarray], average: str) -> float:
    if average == "distribution":
        h = entropy(np.mean(dists, axis=0))
    elif average == "entropy":
        h = float(np.mean([entropy(d) for d in dists]))
    else:
        raise ValueError(f"unknown entropy averaging {average!r}")
    return 0.0 - h


def sentence_entropy_score(sentence: Sentence | str, backends: Sequence[ScorerBackend], average: str = "distribution") -> float:
    """Negative entropy (nats) of the sentence's class distribution; higher
    means more class-indicative. Lies in [-ln C, 0]."""
    if not backends:
        raise ValueError("at least one backend is required")
    text = sentence.text if isinstance(sentence, Sentence) else sentence
    dists = [run_backend(b, [text])[0].softmax() for b in backends]
    return _negative_entropy(dists, average)


def entropy_scores(doc: Document, backends: Sequence[ScorerBackend], average: str = "distribution") -> list[float]:
    """``sentence_entropy_score`` for every sentence, batched per backend."""
    if not backends:
        raise ValueError("at least one backend is required")
    per_backend = [[s.softmax() for s in run_backend(b, doc.texts)] for b in backends]
    return [_negative_entropy([pb[i] for pb in per_backend], average) for i in range(len(doc))]


def logit_distance(a: ClassScores, b: ClassScores, norm: str = "l1") -> float:
    diffs = [abs(x - y) for x, y in zip(a.logits, b.logits)]
    if norm == "l1":
        return math.fsum(diffs)
    if norm == "linf":
        return max(diffs)
    raise ValueError(f"unknown norm {norm!r}")


def sentence_importance_score(doc: Document, idx: int, backends: Sequence[ScorerBackend], norm: str = "l1",
                              overlap: int = DEFAULT_OVERLAP) -> float:
    """Mean over backends of the logit change when sentence ``idx`` is removed
    and the shortened document is re-chunked."""
    if len(doc) < 2:
        raise SingleSentenceDocument(f"{doc.doc_id}: leave-one-out needs at least two sentences")
    if not 0 <= idx < len(doc):
        raise IndexError(idx)
    reduced = doc.without(idx)
    deltas = [
        logit_distance(classify_document(doc, b, overlap), classify_document(reduced, b, overlap), norm)
        for b in backends
    ]
    return math.fsum(deltas) / len(deltas)


def importance_scores(doc: Document, backends: Sequence[ScorerBackend], norm: str = "l1",
                      overlap: int = DEFAULT_OVERLAP) -> list[float]:
    if len(doc) < 2:
        raise SingleSentenceDocument(f"{doc.doc_id}: leave-one-out needs at least two sentences")
    if not backends:
        raise ValueError("at least one backend is required")
    totals = [[] for _ in range(len(doc))]
    for b in backends:
        full = classify_document(doc, b, overlap)
        for i in range(len(doc)):
            totals[i].append(logit_distance(full, classify_document(doc.without(i), b, overlap), norm))
    return [math.fsum(t) / len(t) for t in totals]
