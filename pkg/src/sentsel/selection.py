"""From sentence signals to reduced inputs.

Covers selector training data for the four signal sources, 50/30/20
discretisation of continuous scores, selector context windows,
expected-value ranking, top-k selection, rank-weighted sampling and
assembly of the reduced text.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import Document, dump_jsonl_line
from .errors import ConfigError, MissingSignal, SchemaError, UnknownLabel
from .scoring import ScorerBackend, entropy_scores, importance_scores, run_backend

SEP = "[SEP]"
GAP = "[...]"
CONTEXT_SENTENCES = 3
SOURCES = ("evidence", "llm", "entropy", "importance")

LLM_USEFULNESS = {"not useful": 0, "slightly useful": 1, "highly useful": 2}


@dataclass(frozen=True)
class SelectorExample:
    doc_id: str
    sentence_index: int
    input_text: str
    species: str
    label: int
    source: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SentenceRanking:
    doc_id: str
    scores: tuple[float, ...]
    order: tuple[int, ...]

    @classmethod
    def from_scores(cls, doc_id: str, scores: Sequence[float]) -> "SentenceRanking":
        scores = tuple(float(s) for s in scores)
        return cls(doc_id, scores, tuple(rank_order(scores)))

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "scores": list(self.scores), "order": list(self.order)}


@dataclass(frozen=True)
class SelectionConfig:
    k: int = 15
    pool: int = 30
    mode: str = "deterministic"
    num_samples: int = 10
    seed: int = 0
    weighting: str = "linear_rank"

    def __post_init__(self):
        if not 1 <= self.k <= self.pool:
            raise ConfigError(f"need 1 <= k <= pool, got k={self.k}, pool={self.pool}")
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        if self.mode not in ("deterministic", "randomized"):
            raise ConfigError(f"unknown selection mode {self.mode!r}")
        if self.weighting not in ("linear_rank", "inverse_rank"):
            raise ConfigError(f"unknown weighting {self.weighting!r}")


def rank_order(scores: Sequence[float]) -> list[int]:
    """Indices by descending score, ties by ascending index."""
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def class_counts(n: int) -> tuple[int, int, int]:
    """(class-2, class-1, class-0) sizes: top ceil(20%), next ceil(30%), rest."""
    top = -(-2 * n // 10)
    mid = min(-(-3 * n // 10), n - top)
    return top, mid, n - top - mid


def discretize_scores(scores: Sequence[float]) -> list[int]:
    n = len(scores)
    top, mid, _ = class_counts(n)
    labels = [0] * n
    for rank, i in enumerate(rank_order(scores)):
        if rank < top:
            labels[i] = 2
        elif rank < top + mid:
            labels[i] = 1
    return labels


def selector_input(doc: Document, idx: int, context: int = CONTEXT_SENTENCES) -> str:
    texts = doc.texts
    before = " ".join(texts[max(0, idx - context):idx])
    after = " ".join(texts[idx + 1:idx + 1 + context])
    body = " ".join(part for part in (before, SEP, texts[idx], SEP, after) if part)
    return f"{doc.species}\n{body}"


def build_selector_example(doc: Document, idx: int, source: str, label: int,
                           context: int = CONTEXT_SENTENCES) -> SelectorExample:
    if not 0 <= idx < len(doc):
        raise IndexError(idx)
    return SelectorExample(doc.doc_id, idx, selector_input(doc, idx, context), doc.species, int(label), source)


def parse_usefulness(label: str) -> int:
    key = " ".join(str(label).split()).casefold()
    try:
        return LLM_USEFULNESS[key]
    except KeyError:
        raise UnknownLabel(f"unknown usefulness label {label!r}") from None


def derive_training_data(corpus: Iterable[Document], source: str, *,
                         llm_labels: Mapping[str, Sequence[str]] | None = None,
                         scores: Mapping[str, Sequence[float]] | None = None,
                         backends: Sequence[ScorerBackend] | None = None,
                         context: int = CONTEXT_SENTENCES,
                         **signal_options) -> list[SelectorExample]:
    """Selector training examples for one signal source.

    ``evidence`` needs ``evidence_indices`` on every document, ``llm`` needs
    per-sentence usefulness labels, and ``entropy``/``importance`` take
    either precomputed per-document ``scores`` or ``backends`` to compute
    them with.
    """
    if source not in SOURCES:
        raise ConfigError(f"unknown source {source!r}; expected one of {SOURCES}")
    examples = []
    for doc in corpus:
        if source == "evidence":
            if doc.evidence_indices is None:
                raise MissingSignal(source, f"{doc.doc_id} has no evidence_indices")
            labels = [int(i in doc.evidence_indices) for i in range(len(doc))]
        elif source == "llm":
            if llm_labels is None or doc.doc_id not in llm_labels:
                raise MissingSignal(source, f"no LLM labels for {doc.doc_id}")
            labels = [parse_usefulness(x) for x in llm_labels[doc.doc_id]]
        else:
            if scores is not None and doc.doc_id in scores:
                signal = list(scores[doc.doc_id])
            elif backends:
                fn = entropy_scores if source == "entropy" else importance_scores
                signal = fn(doc, backends, **signal_options)
            else:
                raise MissingSignal(source, f"no scores or backends for {doc.doc_id}")
            labels = discretize_scores(signal)
        if len(labels) != len(doc):
            raise MissingSignal(source, f"{doc.doc_id}: {len(labels)} labels for {len(doc)} sentences")
        examples.extend(build_selector_example(doc, i, source, lab, context) for i, lab in enumerate(labels))
    return examples


def rank_sentences(doc: Document, selector: ScorerBackend, context: int = CONTEXT_SENTENCES) -> SentenceRanking:
    """Expected class index under the selector's distribution, per sentence."""
    inputs = [selector_input(doc, i, context) for i in range(len(doc))]
    scores = []
    for cs in run_backend(selector, inputs):
        p = cs.softmax()
        scores.append(math.fsum(c * pc for c, pc in enumerate(p)))
    return SentenceRanking.from_scores(doc.doc_id, scores)


def _rng(seed: int, doc_id: str, stream: int | str) -> random.Random:
    digest = hashlib.sha256(f"{seed}\x1f{doc_id}\x1f{stream}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def random_ranking(doc: Document, seed: int) -> SentenceRanking:
    """Baseline ranking with uniformly random scores."""
    rng = _rng(seed, doc.doc_id, "random-ranking")
    return SentenceRanking.from_scores(doc.doc_id, [rng.random() for _ in range(len(doc))])


def select_top_k(ranking: SentenceRanking, k: int) -> list[int]:
    if k < 1:
        raise ConfigError("k must be >= 1")
    return sorted(ranking.order[:k])


def rank_weights(pool_size: int, weighting: str) -> list[float]:
    if weighting == "linear_rank":
        return [float(pool_size + 1 - r) for r in range(1, pool_size + 1)]
    if weighting == "inverse_rank":
        return [1.0 / r for r in range(1, pool_size + 1)]
    raise ConfigError(f"unknown weighting {weighting!r}")


def sample_selection(ranking: SentenceRanking, cfg: SelectionConfig, sample_index: int) -> list[int]:
    """Weighted draw without replacement from the top ``cfg.pool`` sentences.

    Draws are sequential with renormalisation over the remaining pool. The
    stream is derived from (seed, doc_id, sample_index) only, so results do
    not depend on scheduling.
    """
    if cfg.mode != "randomized":
        raise ConfigError("sample_selection requires mode='randomized'")
    pool = list(ranking.order[:cfg.pool])
    m = min(cfg.k, len(pool))
    if m == len(pool):
        return sorted(pool)
    weights = rank_weights(len(pool), cfg.weighting)
    rng = _rng(cfg.seed, ranking.doc_id, sample_index)
    chosen = []
    for _ in range(m):
        u = rng.random() * math.fsum(weights)
        acc, j = 0.0, len(weights) - 1
        for pos, w in enumerate(weights):
            acc += w
            if u < acc:
                j = pos
                break
        chosen.append(pool.pop(j))
        weights.pop(j)
    return sorted(chosen)


def assemble_input(doc: Document, indices: Sequence[int], style: str = "concatenated") -> str:
    texts = doc.texts
    if style == "concatenated":
        return " ".join(texts[i] for i in indices)
    if style != "gap_marked":
        raise ConfigError(f"unknown assembly style {style!r}")
    if not indices:
        return ""
    parts = []
    if indices[0] != 0:
        parts.append(GAP)
    for prev, cur in zip([None, *indices], indices):
        if prev is not None and cur != prev + 1:
            parts.append(GAP)
        parts.append(texts[cur])
    if indices[-1] != len(texts) - 1:
        parts.append(GAP)
    return " ".join(parts)


# --------------------------------------------------------------------------
# JSON-lines files
# --------------------------------------------------------------------------

def _read_jsonl(path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}: invalid JSON: {e.msg}", line=lineno) from None


def write_rankings(path, rankings: Iterable[SentenceRanking]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in rankings:
            f.write(dump_jsonl_line(r.to_dict()))


def read_rankings(path) -> dict[str, SentenceRanking]:
    out = {}
    for lineno, rec in _read_jsonl(path):
        try:
            r = SentenceRanking(str(rec["doc_id"]), tuple(float(s) for s in rec["scores"]),
                                tuple(int(i) for i in rec["order"]))
        except (KeyError, TypeError, ValueError):
            raise SchemaError(f"{path}: expected {{doc_id, scores, order}}", line=lineno) from None
        if sorted(r.order) != list(range(len(r.scores))):
            raise SchemaError(f"{path}: order is not a permutation of sentence indices", line=lineno)
        out[r.doc_id] = r
    return out


def write_examples(path, examples: Iterable[SelectorExample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ex in examples:
            f.write(dump_jsonl_line(ex.to_dict()))


def read_examples(path) -> list[SelectorExample]:
    out = []
    for lineno, rec in _read_jsonl(path):
        try:
            out.append(SelectorExample(**rec))
        except TypeError:
            raise SchemaError(f"{path}: malformed selector example", line=lineno) from None
    return out


def write_selections(path, rows: Iterable[tuple[str, int, Sequence[int]]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc_id, sample_index, indices in rows:
            f.write(dump_jsonl_line({"doc_id": doc_id, "sample_index": sample_index, "indices": list(indices)}))


def read_llm_labels(path) -> dict[str, list[str]]:
    out = {}
    for lineno, rec in _read_jsonl(path):
        if "doc_id" not in rec or not isinstance(rec.get("labels"), list):
            raise SchemaError(f"{path}: expected {{doc_id, labels}}", line=lineno)
        out[str(rec["doc_id"])] = [str(x) for x in rec["labels"]]
    return out


def read_scores(path) -> dict[str, list[float]]:
    out = {}
    for lineno, rec in _read_jsonl(path):
        if "doc_id" not in rec or not isinstance(rec.get("scores"), list):
            raise SchemaError(f"{path}: expected {{doc_id, scores}}", line=lineno)
        out[str(rec["doc_id"])] = [float(x) for x in rec["scores"]]
    return out
