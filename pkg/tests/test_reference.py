import random

import numpy as np
import pytest

from sentsel.corpus import Document, ImpactCategory
from sentsel.errors import NoLabeledData, SchemaError
from sentsel.reference import (
    Hyperparameters,
    ReferenceClassifier,
    feature_strings,
    featurize,
    fit_reference,
    load_weights,
    save_weights,
    train_reference_classifier,
)
from sentsel.scoring import ScorerBackend, classify_document

SMALL = Hyperparameters(epochs=10, feature_dim=2 ** 12)


def separable(n=200, seed=0):
    rng = random.Random(seed)
    vocab = [["alpha", "beta", "gamma", "delta"], ["omega", "sigma", "kappa", "theta"]]
    shared = ["the", "a", "of", "study"]
    texts, labels = [], []
    for i in range(n):
        y = i % 2
        words = [rng.choice(vocab[y] + shared) for _ in range(rng.randint(5, 15))]
        if not any(w in vocab[y] for w in words):
            words.append(vocab[y][0])
        texts.append(" ".join(words))
        labels.append(y)
    return texts, labels


def test_separable_training_accuracy():
    texts, labels = separable()
    model = fit_reference(texts, labels, 2, SMALL, seed=0)
    acc = np.mean(model.predict_proba(texts).argmax(axis=1) == np.array(labels))
    assert acc >= 0.99


def test_empty_training_set():
    with pytest.raises(NoLabeledData):
        fit_reference([], [], 2)
    unlabeled = [Document.from_text("d", "sp", "Text here.")]
    with pytest.raises(NoLabeledData):
        train_reference_classifier(unlabeled)


def test_same_seed_bit_identical():
    texts, labels = separable(60)
    a = fit_reference(texts, labels, 2, SMALL, seed=3)
    b = fit_reference(texts, labels, 2, SMALL, seed=3)
    assert a == b
    assert fit_reference(texts, labels, 2, SMALL, seed=4) != a


def test_is_a_scorer_backend():
    model = fit_reference(*separable(20), 2, SMALL)
    assert isinstance(model, ScorerBackend)
    assert model.classify([]) == []
    assert len(model.classify(["alpha beta"])[0]) == 2


def test_features_are_l2_normalised():
    X = featurize(["a a b", "c"], 2 ** 10)
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    assert np.allclose(norms, 1.0)
    assert featurize([""], 2 ** 10).nnz == 0


def test_selector_features_mask_species_and_mark_regions():
    text = "Lates niloticus\nBefore text. [SEP] Lates niloticus ate fish. [SEP] After."
    feats = feature_strings(text)
    assert "t:<species>" in feats
    assert "t:<species> ate" in feats
    assert "c:before" in feats and "c:after" in feats
    assert not any("niloticus" in f for f in feats)
    assert feature_strings("Plain text.") == ["plain", "text", ".", "plain text", "text ."]


def test_weight_file_roundtrip(tmp_path):
    model = fit_reference(*separable(40), 2, SMALL)
    path = tmp_path / "w.bin"
    save_weights(path, model)
    back = load_weights(path)
    assert back == model
    save_weights(tmp_path / "w2.bin", back)
    assert path.read_bytes() == (tmp_path / "w2.bin").read_bytes()


@pytest.mark.parametrize("mutate", [
    lambda b: b[:10],
    lambda b: b"XXXX" + b[4:],
    lambda b: b + b"\x00",
])
def test_corrupt_weight_files(tmp_path, mutate):
    model = fit_reference(*separable(20), 2, SMALL)
    path = tmp_path / "w.bin"
    save_weights(path, model)
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(SchemaError):
        load_weights(path)


def test_document_classifier_learns_keywords():
    words = {c: f"kw{int(c)}" for c in ImpactCategory}
    docs = []
    rng = random.Random(1)
    for i in range(60):
        c = ImpactCategory(i % 6)
        sents = [f"Filler sentence number {rng.randint(0, 99)}." for _ in range(10)]
        sents.insert(rng.randrange(11), f"The {words[c]} signal.")
        docs.append(Document.from_text(f"d{i}", "sp", " ".join(sents), label=c))
    model = train_reference_classifier(docs, Hyperparameters(epochs=30, feature_dim=2 ** 12), seed=0)
    correct = sum(ImpactCategory(classify_document(d, model).argmax()) == d.label for d in docs)
    assert correct / len(docs) >= 0.95
    assert model.n_classes == 6 and model.max_tokens == 512
    assert isinstance(model, ReferenceClassifier)
