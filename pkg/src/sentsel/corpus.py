"""Documents, impact labels, segmentation, ingestion, splits and persistence."""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import random
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    EmptyInput,
    InvalidRatios,
    MissingField,
    SchemaError,
    UnknownCategory,
)

log = logging.getLogger(__name__)

CORPUS_FORMAT = "sentsel.corpus"
CORPUS_VERSION = 1
SPLIT_NAMES = ("train", "val", "test")


class ImpactCategory(enum.IntEnum):
    """The six EICAT impact classes, in order of increasing severity
    (Data Deficient last)."""

    MINIMAL_CONCERN = 0
    MINOR = 1
    MODERATE = 2
    MAJOR = 3
    MASSIVE = 4
    DATA_DEFICIENT = 5

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, text: str) -> "ImpactCategory":
        key = " ".join(str(text).replace("_", " ").split()).casefold()
        try:
            return _ALIASES[key]
        except KeyError:
            raise UnknownCategory(text) from None

    @classmethod
    def labels(cls) -> list[str]:
        return [c.label for c in cls]


_LABELS = {
    ImpactCategory.MINIMAL_CONCERN: "Minimal",
    ImpactCategory.MINOR: "Minor",
    ImpactCategory.MODERATE: "Moderate",
    ImpactCategory.MAJOR: "Major",
    ImpactCategory.MASSIVE: "Massive",
    ImpactCategory.DATA_DEFICIENT: "Data Deficient",
}

# Answer labels, assessment-table names, and the standard two-letter EICAT codes.
_ALIASES = {
    "minimal": ImpactCategory.MINIMAL_CONCERN,
    "minimal concern": ImpactCategory.MINIMAL_CONCERN,
    "mc": ImpactCategory.MINIMAL_CONCERN,
    "minor": ImpactCategory.MINOR,
    "mn": ImpactCategory.MINOR,
    "moderate": ImpactCategory.MODERATE,
    "mo": ImpactCategory.MODERATE,
    "major": ImpactCategory.MAJOR,
    "major risk": ImpactCategory.MAJOR,
    "mr": ImpactCategory.MAJOR,
    "massive": ImpactCategory.MASSIVE,
    "mv": ImpactCategory.MASSIVE,
    "data deficient": ImpactCategory.DATA_DEFICIENT,
    "datadeficient": ImpactCategory.DATA_DEFICIENT,
    "dd": ImpactCategory.DATA_DEFICIENT,
}


# --------------------------------------------------------------------------
# Tokenization and segmentation
# --------------------------------------------------------------------------

def _is_word_char(ch: str) -> bool:
    return ch.isalnum()


def reference_tokenize(text: str) -> list[str]:
    """Whitespace split, then peel leading and trailing punctuation off each
    word as single-character tokens.

    >>> reference_tokenize("Lates niloticus (Nile perch)!")
    ['Lates', 'niloticus', '(', 'Nile', 'perch', ')', '!']
    """
    tokens: list[str] = []
    for word in text.split():
        start, end = 0, len(word)
        while start < end and not _is_word_char(word[start]):
            start += 1
        while end > start and not _is_word_char(word[end - 1]):
            end -= 1
        tokens.extend(word[:start])
        if start < end:
            tokens.append(word[start:end])
        tokens.extend(word[end:])
    return tokens


def count_tokens(text: str) -> int:
    return len(reference_tokenize(text))


ABBREVIATIONS = frozenset({
    "e.g.", "i.e.", "et al.", "al.", "cf.", "ca.", "approx.", "vs.", "viz.",
    "fig.", "figs.", "tab.", "eq.", "eqs.", "ref.", "refs.", "suppl.",
    "sp.", "spp.", "ssp.", "subsp.", "var.", "gen.", "nov.", "sect.",
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jan.", "feb.", "aug.",
    "sept.", "oct.", "dec.",
})

_TERMINALS = ".!?"
_CLOSERS = "\"')]}”’»"
_OPENERS = "\"'([{“‘«"


def _ends_sentence(words: Sequence[str], i: int) -> bool:
    core = words[i].rstrip(_CLOSERS)
    if not core or core[-1] not in _TERMINALS:
        return False
    nxt = words[i + 1].lstrip(_OPENERS)
    if not nxt or not (nxt[0].isupper() or nxt[0].isdigit()):
        return False
    if core[-1] == ".":
        word = core.lstrip(_OPENERS).lower()
        if word in ABBREVIATIONS:
            return False
        if i > 0 and f"{words[i - 1].lstrip(_OPENERS).lower()} {word}" in ABBREVIATIONS:
            return False
    return True


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str
    token_count: int = field(default=-1, compare=False)

    def __post_init__(self):
        if self.token_count < 0:
            object.__setattr__(self, "token_count", count_tokens(self.text))


def segment_sentences(raw_text: str) -> list[Sentence]:
    """Rule-based sentence splitter.

    A boundary falls after a word ending in ``.``, ``!`` or ``?`` (closing
    quotes and brackets allowed) when the next word starts with an uppercase
    letter or digit, unless the word is a listed abbreviation. Whitespace
    inside a sentence collapses to single spaces.
    """
    words = raw_text.split()
    if not words:
        raise EmptyInput("text is empty or whitespace-only")
    sentences: list[Sentence] = []
    start = 0
    for i in range(len(words) - 1):
        if _ends_sentence(words, i):
            sentences.append(Sentence(len(sentences), " ".join(words[start:i + 1])))
            start = i + 1
    sentences.append(Sentence(len(sentences), " ".join(words[start:])))
    return sentences


# --------------------------------------------------------------------------
# Documents
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Document:
    doc_id: str
    species: str
    title: str
    sentences: tuple[Sentence, ...]
    label: ImpactCategory | None = None
    evidence_indices: frozenset[int] | None = None

    def __post_init__(self):
        if not isinstance(self.doc_id, str) or not self.doc_id:
            raise SchemaError("doc_id must be a non-empty string")
        if not isinstance(self.species, str) or not self.species.strip():
            raise SchemaError(f"{self.doc_id}: species must be non-empty")
        object.__setattr__(self, "sentences", tuple(self.sentences))
        for i, s in enumerate(self.sentences):
            if s.index != i:
                raise SchemaError(f"{self.doc_id}: sentence indices must be contiguous from 0")
            if not s.text or "\n" in s.text or "\r" in s.text:
                raise SchemaError(f"{self.doc_id}: sentence {i} is empty or contains a line break")
        if self.evidence_indices is not None:
            ev = frozenset(self.evidence_indices)
            if any(not 0 <= j < len(self.sentences) for j in ev):
                raise SchemaError(f"{self.doc_id}: evidence index out of range")
            object.__setattr__(self, "evidence_indices", ev)

    @classmethod
    def from_text(cls, doc_id, species, raw_text, title="", label=None, evidence_indices=None):
        return cls(doc_id, species, title, tuple(segment_sentences(raw_text)), label, evidence_indices)

    def __len__(self):
        return len(self.sentences)

    @property
    def texts(self) -> list[str]:
        return [s.text for s in self.sentences]

    @property
    def text(self) -> str:
        return " ".join(self.texts)

    @property
    def token_count(self) -> int:
        return sum(s.token_count for s in self.sentences)

    def tokens(self) -> list[str]:
        out: list[str] = []
        for s in self.sentences:
            out.extend(reference_tokenize(s.text))
        return out

    def select(self, indices: Iterable[int]) -> "Document":
        """Sub-document made of the given sentences, re-indexed in document order."""
        keep = sorted(set(indices))
        remap = {old: new for new, old in enumerate(keep)}
        sentences = tuple(
            Sentence(new, self.sentences[old].text, self.sentences[old].token_count)
            for new, old in enumerate(keep)
        )
        evidence = None
        if self.evidence_indices is not None:
            evidence = frozenset(remap[j] for j in self.evidence_indices if j in remap)
        return Document(self.doc_id, self.species, self.title, sentences, self.label, evidence)

    def without(self, idx: int) -> "Document":
        return self.select(j for j in range(len(self.sentences)) if j != idx)

    def replace(self, **changes) -> "Document":
        fields = dict(
            doc_id=self.doc_id, species=self.species, title=self.title,
            sentences=self.sentences, label=self.label,
            evidence_indices=self.evidence_indices,
        )
        fields.update(changes)
        return Document(**fields)


# --------------------------------------------------------------------------
# Assessment ingestion
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AssessmentRecord:
    doc_id: str
    species: str
    publication: str
    category: ImpactCategory
    evidence: tuple[str, ...] = ()


def slugify(text: str, max_len: int = 80) -> str:
    ascii_text = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode()
    slug = re.sub(r"[^a-z0-9]+", "-", ascii_text.lower()).strip("-")
    return slug[:max_len].rstrip("-") or "doc"


def _cell(row: Mapping[str, str], name: str) -> str:
    value = row.get(name)
    return value.strip() if isinstance(value, str) else ""


def ingest_assessments(rows: Iterable[Mapping[str, str]], delimiter: str = "|") -> list[AssessmentRecord]:
    records = []
    for n, row in enumerate(rows, start=1):
        species = _cell(row, "species")
        if not species:
            raise MissingField("species", n)
        raw_category = _cell(row, "category")
        if not raw_category:
            raise MissingField("category", n)
        try:
            category = ImpactCategory.parse(raw_category)
        except UnknownCategory:
            raise UnknownCategory(raw_category, n) from None
        publication = _cell(row, "publication")
        doc_id = _cell(row, "doc_id")
        if not doc_id:
            if not publication:
                raise MissingField("publication", n)
            doc_id = slugify(publication)
        evidence = tuple(
            part.strip() for part in _cell(row, "evidence").split(delimiter) if part.strip()
        )
        records.append(AssessmentRecord(doc_id, species, publication, category, evidence))
    return records


def read_assessments_csv(path, delimiter: str = "|") -> list[AssessmentRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: missing header row", line=1)
        missing = {"species", "category"} - set(reader.fieldnames)
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}", line=1)
        return ingest_assessments(reader, delimiter)


def merge_records(records: Iterable[AssessmentRecord]) -> dict[str, AssessmentRecord]:
    """Group rows by doc_id, concatenating evidence. Conflicting species or
    category for one doc_id is a schema error."""
    merged: dict[str, AssessmentRecord] = {}
    for rec in records:
        prev = merged.get(rec.doc_id)
        if prev is None:
            merged[rec.doc_id] = rec
            continue
        if prev.species != rec.species or prev.category != rec.category:
            raise SchemaError(f"conflicting assessments for document {rec.doc_id!r}")
        merged[rec.doc_id] = AssessmentRecord(
            prev.doc_id, prev.species, prev.publication, prev.category, prev.evidence + rec.evidence
        )
    return merged


def documents_from_assessments(records, texts_dir) -> list[Document]:
    """Join assessment records with extracted full texts at
    ``<texts_dir>/<doc_id>.txt``. Records without a usable text are skipped."""
    texts_dir = Path(texts_dir)
    docs = []
    for doc_id, rec in sorted(merge_records(records).items()):
        path = texts_dir / f"{doc_id}.txt"
        if not path.is_file():
            log.warning("no full text for %s, skipping", doc_id)
            continue
        raw = path.read_text(encoding="utf-8")
        if not raw.strip():
            log.warning("empty full text for %s, skipping", doc_id)
            continue
        docs.append(Document.from_text(doc_id, rec.species, raw, title=rec.publication, label=rec.category))
    return docs


# --------------------------------------------------------------------------
# Splits
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusSplit:
    assignment: Mapping[str, str]

    def split_of(self, species: str) -> str:
        return self.assignment[species]

    def select(self, corpus: Iterable[Document], name: str) -> list[Document]:
        return [d for d in corpus if self.assignment.get(d.species) == name]

    def counts(self) -> dict[str, int]:
        out = {name: 0 for name in SPLIT_NAMES}
        for name in self.assignment.values():
            out[name] += 1
        return out


def build_splits(corpus: Sequence[Document], ratios=(0.82, 0.08, 0.10), seed: int = 0) -> CorpusSplit:
    """Species-disjoint train/val/test assignment.

    Validation and test receive ``floor(ratio * S)`` species each; every
    remaining species goes to train.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidRatios(f"ratios must be three non-negative fractions summing to 1, got {ratios!r}")
    if not corpus:
        raise InvalidRatios("cannot split an empty corpus")
    species = sorted({d.species for d in corpus})
    random.Random(seed).shuffle(species)
    n = len(species)
    n_val = math.floor(ratios[1] * n + 1e-9)
    n_test = math.floor(ratios[2] * n + 1e-9)
    n_train = n - n_val - n_test
    assignment = {}
    for i, sp in enumerate(species):
        if i < n_train:
            assignment[sp] = "train"
        elif i < n_train + n_val:
            assignment[sp] = "val"
        else:
            assignment[sp] = "test"
    return CorpusSplit(dict(sorted(assignment.items())))


def save_splits(path, split: CorpusSplit) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dict(sorted(split.assignment.items())), f, indent=2, ensure_ascii=False)
        f.write("\n")


def load_splits(path) -> CorpusSplit:
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: {e.msg}", line=e.lineno) from None
    if not isinstance(data, dict) or any(v not in SPLIT_NAMES for v in data.values()):
        raise SchemaError(f"{path}: expected an object mapping species to {SPLIT_NAMES}")
    return CorpusSplit(data)


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------

_DOC_FIELDS = {"doc_id", "species", "title", "sentences", "label", "evidence_indices"}


def document_to_dict(doc: Document) -> dict:
    out = {
        "doc_id": doc.doc_id,
        "species": doc.species,
        "title": doc.title,
        "sentences": [{"index": s.index, "text": s.text} for s in doc.sentences],
    }
    if doc.label is not None:
        out["label"] = doc.label.label
    if doc.evidence_indices is not None:
        out["evidence_indices"] = sorted(doc.evidence_indices)
    return out


def document_from_dict(data: Mapping) -> Document:
    if not isinstance(data, Mapping):
        raise SchemaError("document record must be an object")
    unknown = set(data) - _DOC_FIELDS
    if unknown:
        raise SchemaError(f"unknown fields {sorted(unknown)}")
    for name in ("doc_id", "species", "sentences"):
        if name not in data:
            raise SchemaError(f"missing {name}")
    try:
        sentences = tuple(Sentence(int(s["index"]), str(s["text"])) for s in data["sentences"])
    except (KeyError, TypeError, ValueError):
        raise SchemaError("sentences must be a list of {index, text} objects") from None
    label = data.get("label")
    if label is not None:
        label = ImpactCategory.parse(label)
    evidence = data.get("evidence_indices")
    if evidence is not None:
        evidence = frozenset(int(j) for j in evidence)
    return Document(
        data["doc_id"], data["species"], str(data.get("title", "")), sentences, label, evidence
    )


def dump_jsonl_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def save_corpus(path, docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_jsonl_line({"format": CORPUS_FORMAT, "version": CORPUS_VERSION}))
        for doc in docs:
            f.write(dump_jsonl_line(document_to_dict(doc)))


def load_corpus(path) -> list[Document]:
    docs: list[Document] = []
    seen: set[str] = set()
    header = False
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"invalid JSON: {e.msg}", line=lineno) from None
            if not header:
                if not isinstance(data, dict) or data.get("format") != CORPUS_FORMAT:
                    raise SchemaError("missing corpus header record", line=lineno)
                if data.get("version") != CORPUS_VERSION:
                    raise SchemaError(f"unsupported corpus version {data.get('version')!r}", line=lineno)
                header = True
                continue
            try:
                doc = document_from_dict(data)
            except (SchemaError, UnknownCategory, TypeError, ValueError) as e:
                raise SchemaError(str(e), line=lineno) from None
            if doc.doc_id in seen:
                raise SchemaError(f"duplicate doc_id {doc.doc_id!r}", line=lineno)
            seen.add(doc.doc_id)
            docs.append(doc)
    if not header:
        raise SchemaError("missing corpus header record", line=1)
    return docs
