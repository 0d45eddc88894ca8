"""Classification metrics, ranking agreement and the efficiency benchmark."""

from __future__ import annotations

import csv
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Document, ImpactCategory, reference_tokenize
from .errors import AllZeroGains, DocIdMismatch, LengthMismatch, MalformedResponse, UnknownLabel
from .inference import GenerationClient, build_llm_prompt, majority_vote, parse_llm_answer
from .scoring import DEFAULT_OVERLAP, ScorerBackend, chunk_text, mean_scores, run_backend
from .selection import (
    SelectionConfig,
    SentenceRanking,
    assemble_input,
    rank_sentences,
    sample_selection,
    select_top_k,
    selector_input,
)

N = len(ImpactCategory)


# --------------------------------------------------------------------------
# F1
# --------------------------------------------------------------------------

@dataclass
class EvalReport:
    macro_f1: float
    micro_f1: float
    per_class: dict[str, dict[str, float]]
    confusion: list[list[int]]
    n: int
    averaged_over: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(preds: Sequence[ImpactCategory], golds: Sequence[ImpactCategory]) -> np.ndarray:
    """Rows are gold classes, columns predicted classes."""
    m = np.zeros((N, N), dtype=np.int64)
    np.add.at(m, (np.asarray([int(g) for g in golds]), np.asarray([int(p) for p in preds])), 1)
    return m


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_f1(preds: Sequence[ImpactCategory], golds: Sequence[ImpactCategory], macro_over: str = "present") -> EvalReport:
    """Per-class, macro and micro F1 with 0/0 taken as 0.

    ``macro_over="present"`` averages over classes occurring in golds or
    preds; ``"all"`` averages over all six.
    """
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions for {len(golds)} gold labels")
    if not golds:
        raise LengthMismatch("need at least one prediction")
    cm = confusion_matrix(preds, golds)
    tp = np.diag(cm)
    pred_tot = cm.sum(axis=0)
    gold_tot = cm.sum(axis=1)
    per_class = {}
    f1s = {}
    for c in ImpactCategory:
        p = _ratio(int(tp[c]), int(pred_tot[c]))
        r = _ratio(int(tp[c]), int(gold_tot[c]))
        f = _ratio(2 * int(tp[c]), int(pred_tot[c] + gold_tot[c]))  # equals 2pr/(p+r) with one rounding
        f1s[c] = f
        per_class[c.label] = {"precision": p, "recall": r, "f1": f, "support": int(gold_tot[c])}
    if macro_over == "present":
        classes = sorted(set(preds) | set(golds))
    elif macro_over == "all":
        classes = list(ImpactCategory)
    else:
        raise ValueError(f"unknown macro averaging {macro_over!r}")
    macro = math.fsum(f1s[c] for c in classes) / len(classes)
    micro = int(tp.sum()) / len(golds)
    return EvalReport(macro, micro, per_class, cm.tolist(), len(golds), [ImpactCategory(c).label for c in classes])


# --------------------------------------------------------------------------
# NDCG
# --------------------------------------------------------------------------

def compute_ndcg(order: Sequence[int], gains: Sequence[float], k: int | None = None, gain: str = "linear") -> float:
    g = np.asarray(gains, dtype=np.float64)
    if (g < 0).any():
        raise ValueError("gains must be non-negative")
    if not (g > 0).any():
        raise AllZeroGains("NDCG is undefined when every gain is zero")
    if gain == "exponential":
        g = np.exp2(g) - 1.0
    elif gain != "linear":
        raise ValueError(f"unknown gain scheme {gain!r}")
    k = len(order) if k is None else min(k, len(order))
    discounts = 1.0 / np.log2(np.arange(2, k + 2, dtype=np.float64))
    dcg = float(np.dot(g[np.asarray(order[:k], dtype=np.int64)], discounts)) if k else 0.0
    ideal = np.sort(g)[::-1][:k]
    idcg = float(np.dot(ideal, discounts[:len(ideal)]))
    return min(1.0, max(0.0, dcg / idcg))


@dataclass
class AgreementMatrix:
    selectors: list[str]
    truths: list[str]
    values: list[list[float]]
    documents: list[list[int]]

    def to_dict(self) -> dict:
        return {
            "selectors": self.selectors,
            "truths": self.truths,
            "ndcg": {s: dict(zip(self.truths, row)) for s, row in zip(self.selectors, self.values)},
            "documents": {s: dict(zip(self.truths, row)) for s, row in zip(self.selectors, self.documents)},
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["selector", *self.truths])
            for name, row in zip(self.selectors, self.values):
                w.writerow([name, *(f"{v:.6f}" for v in row)])


def _order_of(r) -> Sequence[int]:
    return r.order if isinstance(r, SentenceRanking) else r


def agreement_matrix(rankings: Mapping[str, Mapping[str, SentenceRanking | Sequence[int]]],
                     ground_truths: Mapping[str, Mapping[str, Sequence[float]]],
                     k: int | None = None, gain: str = "linear") -> AgreementMatrix:
    """Mean NDCG of each selector's orders against each ground truth.

    Documents whose truth gains are all zero carry no ranking information
    and are left out of that cell's mean.
    """
    ids = None
    for group in (*rankings.values(), *ground_truths.values()):
        if ids is None:
            ids = set(group)
        elif set(group) != ids:
            raise DocIdMismatch("rankings and ground truths must cover the same doc_ids")
    values, docs = [], []
    for sel, per_doc in rankings.items():
        row, counts = [], []
        for truth, gains_by_doc in ground_truths.items():
            scores = []
            for doc_id in sorted(per_doc):
                gains = gains_by_doc[doc_id]
                if not any(g > 0 for g in gains):
                    continue
                scores.append(compute_ndcg(_order_of(per_doc[doc_id]), gains, k, gain))
            row.append(math.fsum(scores) / len(scores) if scores else float("nan"))
            counts.append(len(scores))
        values.append(row)
        docs.append(counts)
    return AgreementMatrix(list(rankings), list(ground_truths), values, docs)


def evidence_gains(doc: Document) -> list[float]:
    ev = doc.evidence_indices or frozenset()
    return [1.0 if i in ev else 0.0 for i in range(len(doc))]


# --------------------------------------------------------------------------
# Benchmark
# --------------------------------------------------------------------------

STAGES = ("ranking", "selection", "inference", "parsing")


@dataclass
class PipelineVariant:
    """One way of producing predictions for the benchmark.

    Exactly one of ``backend`` and ``client`` is set. ``cfg=None`` means the
    full text is used; otherwise rankings come from ``rankings`` if given,
    else from running ``selector``.
    """

    name: str
    backend: ScorerBackend | None = None
    client: GenerationClient | None = None
    cfg: SelectionConfig | None = None
    rankings: Mapping[str, SentenceRanking] | None = None
    selector: ScorerBackend | None = None
    overlap: int = DEFAULT_OVERLAP
    max_new_tokens: int = 96


@dataclass
class BenchmarkReport:
    variant: str
    repetitions: int
    workers: int
    n_documents: int
    stage_seconds: dict[str, float]
    total_seconds: float
    tokens_processed: dict[str, int]
    documents_per_second: float
    reduction_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def _ntok(text: str) -> int:
    return len(reference_tokenize(text))


def _run_once(docs: Sequence[Document], v: PipelineVariant):
    secs = dict.fromkeys(STAGES, 0.0)
    toks = dict.fromkeys(STAGES, 0)
    samples = 0
    for doc in docs:
        t0 = time.perf_counter()
        ranking = None
        if v.cfg is not None:
            if v.rankings is not None:
                ranking = v.rankings[doc.doc_id]
            else:
                ranking = rank_sentences(doc, v.selector)
                toks["ranking"] += sum(_ntok(selector_input(doc, i)) for i in range(len(doc)))
        t1 = time.perf_counter()

        style = "concatenated" if v.backend is not None else "gap_marked"
        if v.cfg is None:
            texts = [doc.text]
        elif v.cfg.mode == "deterministic":
            texts = [assemble_input(doc, select_top_k(ranking, v.cfg.k), style)]
        else:
            texts = [assemble_input(doc, sample_selection(ranking, v.cfg, s), style) for s in range(v.cfg.num_samples)]
        samples += len(texts)
        toks["selection"] += sum(_ntok(t) for t in texts)
        t2 = time.perf_counter()

        if v.backend is not None:
            outputs = []
            for text in texts:
                chunks = chunk_text(reference_tokenize(text), v.backend.max_tokens, v.overlap)
                toks["inference"] += sum(c.token_end - c.token_start for c in chunks)
                outputs.append(run_backend(v.backend, [c.text for c in chunks]))
        else:
            mode = "full_text" if v.cfg is None else "extracted"
            outputs = []
            for text in texts:
                prompt = build_llm_prompt(text, doc.species, mode)
                toks["inference"] += _ntok(prompt)
                outputs.append(v.client.generate(prompt, v.max_new_tokens))
        t3 = time.perf_counter()

        if v.backend is not None:
            votes = [ImpactCategory(mean_scores(o).argmax()) for o in outputs]
        else:
            votes = []
            for o in outputs:
                toks["parsing"] += _ntok(o)
                try:
                    votes.append(parse_llm_answer(o).category)
                except (MalformedResponse, UnknownLabel):
                    pass
        if votes:
            majority_vote(votes)
        t4 = time.perf_counter()
        for stage, dt in zip(STAGES, (t1 - t0, t2 - t1, t3 - t2, t4 - t3)):
            secs[stage] += dt
    return secs, toks, samples


def run_benchmark(docs: Sequence[Document], variants: Sequence[PipelineVariant], repetitions: int = 3) -> list[BenchmarkReport]:
    """Median wall-clock per stage over ``repetitions`` runs of each variant.

    ``reduction_ratio`` is the token count of the assembled inputs divided
    by the full-text token count times the number of inputs per document,
    i.e. the average fraction of a document that one input keeps.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    full_tokens = sum(d.token_count for d in docs)
    reports = []
    for v in variants:
        runs = [_run_once(docs, v) for _ in range(repetitions)]
        stage_seconds = {s: statistics.median(r[0][s] for r in runs) for s in STAGES}
        total = statistics.median(sum(r[0].values()) for r in runs)
        toks, samples = runs[0][1], runs[0][2]
        per_doc_inputs = samples / len(docs) if docs else 1
        ratio = toks["selection"] / (full_tokens * per_doc_inputs) if full_tokens else 1.0
        reports.append(BenchmarkReport(
            variant=v.name,
            repetitions=repetitions,
            workers=1,
            n_documents=len(docs),
            stage_seconds=stage_seconds,
            total_seconds=total,
            tokens_processed=dict(toks),
            documents_per_second=len(docs) / total if total > 0 else float("inf"),
            reduction_ratio=ratio,
        ))
    return reports


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, ensure_ascii=False, allow_nan=True)
        f.write("\n")
