"""Document-level prediction for classifier backends and generation clients."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Protocol, Sequence, runtime_checkable

from .corpus import Document, ImpactCategory, dump_jsonl_line
from .errors import ClientError, ConfigError, EmptySpecies, MalformedResponse, SchemaError, UnknownLabel
from .scoring import DEFAULT_OVERLAP, ClassScores, ScorerBackend, classify_document, classify_text
from .selection import SelectionConfig, SentenceRanking, assemble_input, sample_selection, select_top_k

TEXT_SLOT = "[SCIENTIFIC FULL TEXT]"
SPECIES_SLOT = "[SPECIES NAME]"
CATEGORIES_SLOT = "[CATEGORY DESCRIPTIONS]"
EXTRACTION_NOTICE = (
    "The following text consists of sentences extracted from a scientific paper, "
    "with left-out sentences indicated by \"[...]\"."
)
DEFAULT_MAX_NEW_TOKENS = 96
ALL_ABSTAINED = "all_samples_malformed"


@runtime_checkable
class GenerationClient(Protocol):
    def generate(self, prompt: str, max_new_tokens: int) -> str:
        ...


@lru_cache(maxsize=None)
def _asset(name: str) -> str:
    return resources.files("sentsel").joinpath("assets", name).read_text(encoding="utf-8")


def prompt_template(summary: bool = True) -> str:
    template = _asset("prompt_template_v1.txt").replace(
        CATEGORIES_SLOT, _asset("eicat_categories_v1.txt").rstrip("\n")
    )
    if not summary:
        template = "\n\n".join(p for p in template.split("\n\n") if not p.startswith("Summary:"))
    return template


def build_llm_prompt(body_text: str, species: str, mode: str = "full_text", summary: bool = True) -> str:
    if not species or not species.strip():
        raise EmptySpecies("species name is required")
    if mode not in ("full_text", "extracted"):
        raise ConfigError(f"unknown prompt mode {mode!r}")
    # Split on the slots first so the body and species are never re-scanned.
    out = []
    for i, piece in enumerate(prompt_template(summary).split(TEXT_SLOT)):
        if i:
            out.append(body_text)
        out.append(species.join(piece.split(SPECIES_SLOT)))
    prompt = "".join(out)
    if mode == "extracted":
        prompt = f"{EXTRACTION_NOTICE}\n\n{prompt}"
    return prompt


@dataclass(frozen=True)
class ParsedAnswer:
    summary: str
    category: ImpactCategory


_ANSWER_LABELS = {c.label.casefold(): c for c in ImpactCategory}


def _match_label(answer: str) -> ImpactCategory:
    words = answer.split()
    if words and words[-1].strip(".").casefold() == "end":
        words = words[:-1]
    text = " ".join(words)
    start, end = 0, len(text)
    while start < end and not text[start].isalnum():
        start += 1
    while end > start and not text[end - 1].isalnum():
        end -= 1
    key = " ".join(text[start:end].split()).casefold()
    try:
        return _ANSWER_LABELS[key]
    except KeyError:
        raise UnknownLabel(f"answer {answer[:80]!r} is not one of {ImpactCategory.labels()}") from None


def parse_llm_answer(response: str) -> ParsedAnswer:
    summary = None
    answer = None
    for line in response.splitlines():
        s = line.strip()
        head = s[:8].casefold()
        if summary is None and head == "summary:":
            summary = s[8:].strip()
        elif answer is None and head[:7] == "answer:":
            answer = s[7:].strip()
        if summary is not None and answer is not None:
            break
    if answer is None:
        raise MalformedResponse("response has no 'Answer:' line")
    return ParsedAnswer(summary or "", _match_label(answer))


# --------------------------------------------------------------------------
# Predictions and voting
# --------------------------------------------------------------------------

@dataclass
class Prediction:
    doc_id: str
    category: ImpactCategory
    votes: dict[ImpactCategory, int] = field(default_factory=dict)
    summary: str | None = None
    sample_inputs_used: int = 1
    abstentions: int = 0
    diagnostic: str | None = None

    def to_dict(self) -> dict:
        out = {
            "doc_id": self.doc_id,
            "category": self.category.label,
            "votes": {c.label: self.votes[c] for c in sorted(self.votes)},
        }
        if self.summary is not None:
            out["summary"] = self.summary
        out["sample_inputs_used"] = self.sample_inputs_used
        out["abstentions"] = self.abstentions
        if self.diagnostic:
            out["diagnostic"] = self.diagnostic
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Prediction":
        return cls(
            doc_id=str(data["doc_id"]),
            category=ImpactCategory.parse(data["category"]),
            votes={ImpactCategory.parse(k): int(v) for k, v in data.get("votes", {}).items()},
            summary=data.get("summary"),
            sample_inputs_used=int(data.get("sample_inputs_used", 1)),
            abstentions=int(data.get("abstentions", 0)),
            diagnostic=data.get("diagnostic"),
        )


def majority_vote(votes: Sequence[ImpactCategory], confidences: Sequence[float] | None = None) -> ImpactCategory:
    """Most frequent category.

    Ties go to the tied category with the highest mean confidence over its
    own votes (when confidences are given), then to the less severe
    category in enum order.
    """
    if not votes:
        raise ValueError("no votes")
    counts = Counter(votes)
    top = max(counts.values())
    tied = sorted(c for c, n in counts.items() if n == top)
    if len(tied) == 1 or confidences is None:
        return tied[0]
    mean_conf = {}
    for c in tied:
        vals = [conf for v, conf in zip(votes, confidences) if v == c]
        mean_conf[c] = math.fsum(vals) / len(vals)
    best = max(mean_conf.values())
    return min(c for c in tied if mean_conf[c] == best)


def _check_selection(ranking, cfg):
    if cfg is not None and cfg.mode == "randomized" and ranking is None:
        raise ConfigError("randomized selection needs a ranking")
    if ranking is not None and cfg is None:
        cfg = SelectionConfig()
    return cfg


def predict_with_classifier(doc: Document, ranking: SentenceRanking | None, cfg: SelectionConfig | None,
                            backend: ScorerBackend, overlap: int = DEFAULT_OVERLAP) -> Prediction:
    cfg = _check_selection(ranking, cfg)
    if ranking is None:
        scores = classify_document(doc, backend, overlap)
        return Prediction(doc.doc_id, ImpactCategory(scores.argmax()))
    if cfg.mode == "deterministic":
        text = assemble_input(doc, select_top_k(ranking, cfg.k))
        return Prediction(doc.doc_id, ImpactCategory(classify_text(text, backend, overlap).argmax()))

    votes, confs = [], []
    for s in range(cfg.num_samples):
        text = assemble_input(doc, sample_selection(ranking, cfg, s))
        scores: ClassScores = classify_text(text, backend, overlap)
        c = scores.argmax()
        votes.append(ImpactCategory(c))
        confs.append(float(scores.softmax()[c]))
    return Prediction(doc.doc_id, majority_vote(votes, confs), dict(Counter(votes)),
                      sample_inputs_used=cfg.num_samples)


def _generate(client: GenerationClient, prompt: str, max_new_tokens: int) -> str:
    try:
        return client.generate(prompt, max_new_tokens)
    except ClientError:
        raise
    except Exception as e:
        raise ClientError(f"{type(e).__name__}: {e}") from e


def predict_with_llm(doc: Document, ranking: SentenceRanking | None, cfg: SelectionConfig | None,
                     client: GenerationClient, summary: bool = True,
                     max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS) -> Prediction:
    """Prompt, generate and parse. Unparseable answers abstain; if every
    sample abstains the document is labelled Data Deficient and flagged."""
    cfg = _check_selection(ranking, cfg)
    if ranking is None:
        bodies, mode = [doc.text], "full_text"
    elif cfg.mode == "deterministic":
        bodies, mode = [assemble_input(doc, select_top_k(ranking, cfg.k), "gap_marked")], "extracted"
    else:
        bodies = [assemble_input(doc, sample_selection(ranking, cfg, s), "gap_marked") for s in range(cfg.num_samples)]
        mode = "extracted"

    parsed: list[ParsedAnswer] = []
    abstentions = 0
    for body in bodies:
        response = _generate(client, build_llm_prompt(body, doc.species, mode, summary), max_new_tokens)
        try:
            parsed.append(parse_llm_answer(response))
        except (MalformedResponse, UnknownLabel):
            abstentions += 1

    randomized = ranking is not None and cfg.mode == "randomized"
    if not parsed:
        return Prediction(doc.doc_id, ImpactCategory.DATA_DEFICIENT, {}, None, len(bodies), abstentions, ALL_ABSTAINED)
    votes = [p.category for p in parsed]
    winner = majority_vote(votes)
    first_summary = next(p.summary for p in parsed if p.category == winner)
    return Prediction(doc.doc_id, winner, dict(Counter(votes)) if randomized else {}, first_summary,
                      len(bodies), abstentions)


def write_predictions(path, predictions: Sequence[Prediction]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for p in predictions:
            f.write(dump_jsonl_line(p.to_dict()))


def read_predictions(path) -> list[Prediction]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                out.append(Prediction.from_dict(json.loads(line)))
            except Exception as e:
                raise SchemaError(f"{path}: bad prediction record ({e})", line=lineno) from None
    return out
