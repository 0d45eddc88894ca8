"""Full-text versus evidence-selected classification on a synthetic corpus."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .corpus import build_splits
from .evaluation import compute_f1, compute_ndcg, evidence_gains
from .inference import predict_with_classifier
from .reference import Hyperparameters, fit_reference, train_reference_classifier
from .selection import SelectionConfig, derive_training_data, rank_sentences, select_top_k
from .synthetic import SyntheticConfig, generate_corpus

EXPERIMENT_RATIOS = (0.7, 0.0, 0.3)


@dataclass
class ExperimentResult:
    seed: int
    n_train: int
    n_test: int
    full_macro_f1: float
    selected_macro_f1: float
    full_micro_f1: float
    selected_micro_f1: float
    selector_ndcg: float

    @property
    def gap(self) -> float:
        return self.selected_macro_f1 - self.full_macro_f1

    def to_dict(self) -> dict:
        return {**asdict(self), "gap": self.gap}


def run_selection_experiment(seed: int, cfg: SyntheticConfig = SyntheticConfig(),
                             hp: Hyperparameters = Hyperparameters(), k: int = 15,
                             ratios=EXPERIMENT_RATIOS) -> ExperimentResult:
    """Train one reference classifier on full texts and one on top-``k``
    selections from an evidence-trained selector, then score both on the
    held-out species."""
    docs = generate_corpus(seed, cfg)
    split = build_splits(docs, ratios, seed)
    train, test = split.select(docs, "train"), split.select(docs, "test")
    golds = [d.label for d in test]

    full = train_reference_classifier(train, hp, seed)
    full_report = compute_f1([predict_with_classifier(d, None, None, full, hp.overlap).category for d in test], golds)

    examples = derive_training_data(train, "evidence")
    selector = fit_reference([e.input_text for e in examples], [e.label for e in examples], 2, hp, seed)
    rankings = {d.doc_id: rank_sentences(d, selector) for d in docs}
    selected = train_reference_classifier([d.select(select_top_k(rankings[d.doc_id], k)) for d in train], hp, seed)
    sel_cfg = SelectionConfig(k=k, pool=max(k, SelectionConfig.pool))
    sel_report = compute_f1(
        [predict_with_classifier(d, rankings[d.doc_id], sel_cfg, selected, hp.overlap).category for d in test], golds)

    ndcg = sum(compute_ndcg(rankings[d.doc_id].order, evidence_gains(d), k) for d in test) / len(test)
    return ExperimentResult(seed, len(train), len(test), full_report.macro_f1, sel_report.macro_f1,
                            full_report.micro_f1, sel_report.micro_f1, ndcg)
