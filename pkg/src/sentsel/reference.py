"""Desk-scale reference classifier.

Multinomial logistic regression over hashed unigram and bigram counts,
trained with seeded mini-batch gradient descent. It implements the
``ScorerBackend`` contract, so it can stand in for a document classifier
or a sentence selector.

Selector inputs (species line, then ``... [SEP] target [SEP] ...``) are
featurized by region: target-sentence n-grams and context n-grams live in
separate feature spaces, and mentions of the assessed species are replaced
by a placeholder token so the model can tell the target species apart from
other species mentioned in the text.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .corpus import Document, reference_tokenize
from .errors import NoLabeledData, SchemaError
from .scoring import DEFAULT_MAX_TOKENS, DEFAULT_OVERLAP, N_CLASSES, ClassScores, chunk_text

FEATURE_DIM = 2 ** 18
SEP = "[SEP]"
SPECIES_TOKEN = "<species>"

MAGIC = b"SSLR"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")  # magic, version, feature_dim, class_count, max_tokens


@dataclass(frozen=True)
class Hyperparameters:
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 2.0
    l2: float = 1e-4
    class_balance: bool = False
    feature_dim: int = FEATURE_DIM
    max_tokens: int = DEFAULT_MAX_TOKENS
    overlap: int = DEFAULT_OVERLAP


def _hash(feature: str, dim: int) -> int:
    return zlib.crc32(feature.encode("utf-8")) % dim


def _ngrams(tokens: Sequence[str], prefix: str) -> list[str]:
    feats = [prefix + t for t in tokens]
    feats.extend(f"{prefix}{a} {b}" for a, b in zip(tokens, tokens[1:]))
    return feats


def _mask_species(tokens: list[str], species: list[str]) -> list[str]:
    if not species:
        return tokens
    out, i, n = [], 0, len(species)
    while i < len(tokens):
        if tokens[i:i + n] == species:
            out.append(SPECIES_TOKEN)
            i += n
        else:
            out.append(tokens[i])
            i += 1
    return out


def _lower_tokens(text: str) -> list[str]:
    return reference_tokenize(text.lower())


def feature_strings(text: str) -> list[str]:
    head, sep, body = text.partition("\n")
    if sep and body.count(SEP) == 2:
        species = _lower_tokens(head)
        before, target, after = body.split(SEP)
        ctx = _mask_species(_lower_tokens(before), species) + _mask_species(_lower_tokens(after), species)
        tgt = _mask_species(_lower_tokens(target), species)
        return _ngrams(tgt, "t:") + _ngrams(ctx, "c:")
    return _ngrams(_lower_tokens(text), "")


def featurize(texts: Iterable[str], dim: int = FEATURE_DIM) -> sparse.csr_matrix:
    """Hashed n-gram rows with sublinear counts (1 + ln tf), L2-normalised."""
    indptr, indices, data = [0], [], []
    for text in texts:
        counts: dict[int, float] = {}
        for f in feature_strings(text):
            h = _hash(f, dim)
            counts[h] = counts.get(h, 0.0) + 1.0
        keys = sorted(counts)
        vals = 1.0 + np.log(np.array([counts[k] for k in keys], dtype=np.float64))
        if len(vals):
            vals /= np.sqrt((vals ** 2).sum())
        indices.extend(keys)
        data.extend(vals.tolist())
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, dim),
    )


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class ReferenceClassifier:
    def __init__(self, weights: np.ndarray, bias: np.ndarray, max_tokens: int = DEFAULT_MAX_TOKENS, batch_size: int = 64):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.max_tokens = int(max_tokens)
        self.batch_size = int(batch_size)

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]

    def logits(self, texts: Sequence[str]) -> np.ndarray:
        X = featurize(texts, self.feature_dim)
        return np.asarray(X @ self.weights) + self.bias

    def classify(self, texts: Sequence[str]) -> list[ClassScores]:
        if not texts:
            return []
        return [ClassScores(tuple(row)) for row in self.logits(texts)]

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        return _softmax_rows(self.logits(texts))

    def __eq__(self, other):
        return (
            isinstance(other, ReferenceClassifier)
            and self.max_tokens == other.max_tokens
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )


def fit_reference(texts: Sequence[str], labels: Sequence[int], n_classes: int,
                  hp: Hyperparameters = Hyperparameters(), seed: int = 0) -> ReferenceClassifier:
    if len(texts) == 0:
        raise NoLabeledData("no labelled training inputs")
    y = np.asarray(labels, dtype=np.int64)
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    X = featurize(texts, hp.feature_dim)
    n = X.shape[0]
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0
    sample_w = np.ones(n)
    if hp.class_balance:
        counts = np.bincount(y, minlength=n_classes).astype(np.float64)
        present = counts > 0
        cw = np.zeros(n_classes)
        cw[present] = n / (present.sum() * counts[present])
        sample_w = cw[y]

    W = np.zeros((hp.feature_dim, n_classes))
    b = np.zeros(n_classes)
    rng = np.random.default_rng(seed)
    for _ in range(hp.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hp.batch_size):
            idx = order[start:start + hp.batch_size]
            xb = X[idx]
            cols = np.unique(xb.indices)
            xs = xb[:, cols]
            Wc = W[cols]
            p = _softmax_rows(np.asarray(xs @ Wc) + b)
            g = (p - Y[idx]) * sample_w[idx, None] / len(idx)
            W[cols] = Wc - hp.learning_rate * (np.asarray(xs.T @ g) + hp.l2 * Wc)
            b -= hp.learning_rate * g.sum(axis=0)
    return ReferenceClassifier(W, b, max_tokens=hp.max_tokens)


def document_training_inputs(docs: Iterable[Document], max_tokens: int, overlap: int) -> tuple[list[str], list[int]]:
    """One input per chunk, each labelled with its document's category."""
    texts, labels = [], []
    for doc in docs:
        if doc.label is None:
            continue
        for chunk in chunk_text(doc.tokens(), max_tokens, overlap):
            texts.append(chunk.text)
            labels.append(int(doc.label))
    return texts, labels


def train_reference_classifier(docs: Iterable[Document], hp: Hyperparameters = Hyperparameters(),
                               seed: int = 0) -> ReferenceClassifier:
    texts, labels = document_training_inputs(docs, hp.max_tokens, hp.overlap)
    if not texts:
        raise NoLabeledData("no labelled documents to train on")
    return fit_reference(texts, labels, N_CLASSES, hp, seed)


# --------------------------------------------------------------------------
# Weight files: header, bias, then only the non-zero feature rows.
# --------------------------------------------------------------------------

def save_weights(path, model: ReferenceClassifier) -> None:
    rows = np.flatnonzero(np.any(model.weights != 0.0, axis=1)).astype("<u4")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, model.feature_dim, model.n_classes, model.max_tokens))
        f.write(struct.pack("<I", len(rows)))
        f.write(model.bias.astype("<f8").tobytes())
        f.write(rows.tobytes())
        f.write(model.weights[rows].astype("<f8").tobytes())


def load_weights(path) -> ReferenceClassifier:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size + 4:
        raise SchemaError(f"{path}: truncated weight file")
    magic, version, dim, n_classes, max_tokens = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise SchemaError(f"{path}: not a reference-classifier weight file")
    if version != VERSION:
        raise SchemaError(f"{path}: unsupported weight file version {version}")
    (n_rows,) = struct.unpack_from("<I", raw, _HEADER.size)
    off = _HEADER.size + 4
    expected = off + 8 * n_classes + 4 * n_rows + 8 * n_rows * n_classes
    if len(raw) != expected:
        raise SchemaError(f"{path}: weight file size {len(raw)} does not match header ({expected})")
    bias = np.frombuffer(raw, "<f8", n_classes, off).astype(np.float64)
    off += 8 * n_classes
    rows = np.frombuffer(raw, "<u4", n_rows, off).astype(np.int64)
    off += 4 * n_rows
    vals = np.frombuffer(raw, "<f8", n_rows * n_classes, off).reshape(n_rows, n_classes)
    W = np.zeros((dim, n_classes))
    W[rows] = vals
    return ReferenceClassifier(W, bias, max_tokens=max_tokens)
