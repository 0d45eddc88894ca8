"""Fuzzy alignment of assessment evidence sentences to full-text sentences.

Extracted full texts rarely reproduce the assessors' quotes verbatim, and the
PDF conversion sometimes breaks one sentence in two.  Each evidence sentence
is therefore compared against every document sentence and every pair of
adjacent sentences, scored by longest common word subsequence.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .corpus import Document, dump_jsonl_line, reference_tokenize
from .errors import ConfigError

EXACT = "exact"
FUZZY = "fuzzy"
BORDERLINE = "borderline"
UNMATCHED = "unmatched"

# (evidence_text, candidate_text, score) -> accept?
Adjudicator = Callable[[str, str, float], bool]


def reject_all(evidence: str, candidate: str, score: float) -> bool:
    return False


@dataclass(frozen=True)
class AlignConfig:
    t_match: float = 0.80
    t_borderline: float = 0.65
    adjudicator: Adjudicator = field(default=reject_all, compare=False)

    def __post_init__(self):
        if not 0 < self.t_borderline < self.t_match <= 1:
            raise ConfigError(
                f"thresholds must satisfy 0 < t_borderline < t_match <= 1, "
                f"got t_borderline={self.t_borderline}, t_match={self.t_match}"
            )


@dataclass(frozen=True)
class MatchResult:
    evidence_id: int
    matched_indices: tuple[int, ...]
    score: float
    status: str

    def to_dict(self, doc_id=None) -> dict:
        out = {} if doc_id is None else {"doc_id": doc_id}
        out.update(
            evidence_id=self.evidence_id,
            matched_indices=list(self.matched_indices),
            score=self.score,
            status=self.status,
        )
        return out


def normalize_for_match(text: str) -> list[str]:
    text = unicodedata.normalize("NFKC", text).lower()
    return [t for t in reference_tokenize(text) if any(ch.isalnum() for ch in t)]


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            if x == y:
                cur.append(prev[j] + 1)
            else:
                cur.append(cur[j] if cur[j] > prev[j + 1] else prev[j + 1])
        prev = cur
    return prev[-1]


def match_score(a: Sequence[str], b: Sequence[str]) -> float:
    if not a or not b:
        return 0.0
    return lcs_length(a, b) / max(len(a), len(b))


def _upper_bound(ev: Sequence[str], ev_counts: Counter, cand: Sequence[str]) -> float:
    # LCS is bounded by the multiset intersection size.
    if not ev or not cand:
        return 0.0
    overlap = sum((ev_counts & Counter(cand)).values())
    return overlap / max(len(ev), len(cand))


def _best_candidate(ev: list[str], sents: list[list[str]]):
    """Best (score, indices) over single sentences and adjacent pairs.

    Candidates are visited singles first, then pairs, each in document
    order; only a strictly higher score replaces the incumbent, which gives
    the single-over-pair and earliest-index tie-breaks.
    """
    best_score, best_idx = 0.0, ()
    ev_counts = Counter(ev)
    candidates = [((i,), s) for i, s in enumerate(sents)]
    candidates += [((i, i + 1), sents[i] + sents[i + 1]) for i in range(len(sents) - 1)]
    for idx, toks in candidates:
        if not toks:
            continue
        if min(len(ev), len(toks)) / max(len(ev), len(toks)) <= best_score:
            continue
        if _upper_bound(ev, ev_counts, toks) <= best_score:
            continue
        score = match_score(ev, toks)
        if score > best_score:
            best_score, best_idx = score, idx
            if score == 1.0:
                break
    return best_score, best_idx


def align_evidence(doc: Document, evidence_texts: Sequence[str], cfg: AlignConfig | None = None) -> list[MatchResult]:
    cfg = cfg or AlignConfig()
    sents = [normalize_for_match(s.text) for s in doc.sentences]
    texts = doc.texts
    results = []
    for eid, evidence in enumerate(evidence_texts):
        ev = normalize_for_match(evidence)
        score, idx = _best_candidate(ev, sents) if ev else (0.0, ())
        if score >= 1.0:
            status = EXACT
        elif score >= cfg.t_match:
            status = FUZZY
        elif score >= cfg.t_borderline:
            candidate = " ".join(texts[i] for i in idx)
            status = BORDERLINE if cfg.adjudicator(evidence, candidate, score) else UNMATCHED
        else:
            status = UNMATCHED
        if status == UNMATCHED:
            idx = ()
        results.append(MatchResult(eid, tuple(idx), score, status))
    return results


def evidence_indices_from(results: Iterable[MatchResult]) -> frozenset[int]:
    return frozenset(i for r in results for i in r.matched_indices)


def summarize(results: Iterable[MatchResult]) -> dict:
    counts = Counter(r.status for r in results)
    return {
        "total_evidence": sum(counts.values()),
        "matched": counts[EXACT] + counts[FUZZY],
        "borderline_accepted": counts[BORDERLINE],
        "unmatched": counts[UNMATCHED],
    }


def write_alignment_report(path, per_doc: Iterable[tuple[str, list[MatchResult]]]) -> dict:
    """Write one line per (doc_id, evidence_id) followed by a summary record."""
    everything = []
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc_id, results in per_doc:
            for r in results:
                f.write(dump_jsonl_line(r.to_dict(doc_id)))
            everything.extend(results)
        summary = {"summary": summarize(everything)}
        f.write(dump_jsonl_line(summary))
    return summary["summary"]


def read_alignment_report(path) -> tuple[list[dict], dict]:
    rows, summary = [], {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "summary" in rec:
                summary = rec["summary"]
            else:
                rows.append(rec)
    return rows, summary
