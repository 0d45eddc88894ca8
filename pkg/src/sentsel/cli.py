"""Command line entry point: ``sentsel <command> [options]``.

Every option can also be set in a TOML file passed with ``--config``; each
command reads the table of the same name (``[classify]``, ``[train-ref]``,
...), and the top level may set ``workers``. Flags beat the config file,
which beats the built-in defaults. Unknown keys are rejected.

Exit status: 0 success, 1 usage or configuration error, 2 data or schema
error, 3 backend or client failure. Failures also print one JSON object on
standard error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from types import SimpleNamespace
from typing import Any, Callable, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .alignment import AlignConfig, align_evidence, evidence_indices_from, write_alignment_report
from .corpus import (
    documents_from_assessments,
    load_corpus,
    load_splits,
    merge_records,
    read_assessments_csv,
    save_corpus,
    save_splits,
    build_splits,
)
from .errors import ConfigError, DocIdMismatch, MissingField, MissingSignal, SentselError
from .evaluation import PipelineVariant, agreement_matrix, compute_f1, evidence_gains, run_benchmark, write_json
from .inference import (
    DEFAULT_MAX_NEW_TOKENS,
    predict_with_classifier,
    predict_with_llm,
    read_predictions,
    write_predictions,
)
from .mock import EchoClient, LatencyBackend
from .reference import Hyperparameters, fit_reference, load_weights, save_weights, train_reference_classifier
from .remote import HttpGenerationClient, HttpScorerBackend
from .scoring import DEFAULT_MAX_TOKENS, DEFAULT_OVERLAP, entropy_scores, importance_scores
from .selection import (
    SOURCES,
    SelectionConfig,
    derive_training_data,
    discretize_scores,
    parse_usefulness,
    random_ranking,
    rank_sentences,
    read_examples,
    read_llm_labels,
    read_rankings,
    read_scores,
    select_top_k,
    write_examples,
    write_rankings,
)
from .synthetic import SyntheticConfig, generate_corpus

log = logging.getLogger("sentsel")

BACKEND_URL_ENV = "SENTSEL_BACKEND_URL"
LLM_URL_ENV = "SENTSEL_LLM_URL"


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class Opt:
    flag: str
    default: Any = None
    kind: str = "str"  # str | path | int | float | bool | floats | list
    help: str = ""
    choices: tuple | None = None
    required: bool = False
    env: str | None = None

    @property
    def dest(self) -> str:
        return self.flag.lstrip("-").replace("-", "_")

    @property
    def key(self) -> str:
        return self.flag.lstrip("-")


def _check_type(opt: Opt, value):
    ok = {
        "str": lambda v: isinstance(v, str),
        "path": lambda v: isinstance(v, str),
        "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "float": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        "bool": lambda v: isinstance(v, bool),
        "floats": lambda v: isinstance(v, list) and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v),
        "list": lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
    }[opt.kind]
    if not ok(value):
        raise ConfigError(f"config key {opt.key!r} has the wrong type ({type(value).__name__})")
    if opt.kind == "float":
        value = float(value)
    elif opt.kind == "floats":
        value = [float(x) for x in value]
    if opt.choices and value not in opt.choices:
        raise ConfigError(f"config key {opt.key!r} must be one of {list(opt.choices)}")
    return value


def _add(parser: argparse.ArgumentParser, opt: Opt) -> None:
    shown = "required" if opt.required else f"default: {opt.default}"
    if opt.env:
        shown += f"; env {opt.env}"
    kw: dict[str, Any] = {"dest": opt.dest, "default": argparse.SUPPRESS, "help": f"{opt.help} ({shown})"}
    if opt.kind == "bool":
        kw["action"] = argparse.BooleanOptionalAction
    elif opt.kind == "floats":
        kw.update(nargs="+", type=float, metavar="X")
    elif opt.kind == "list":
        kw.update(action="append", metavar="VALUE")
    else:
        kw["type"] = {"int": int, "float": float}.get(opt.kind, str)
        if opt.choices:
            kw["choices"] = opt.choices
    parser.add_argument(opt.flag, **kw)


# --------------------------------------------------------------------------
# Shared option groups
# --------------------------------------------------------------------------

def _corpus_opts(required=True) -> list[Opt]:
    return [
        Opt("--corpus", kind="path", required=required, help="corpus JSONL file"),
        Opt("--splits", kind="path", help="split file; with --subset restricts the corpus"),
        Opt("--subset", choices=("train", "val", "test"), help="which split to use"),
    ]


def _selection_opts() -> list[Opt]:
    d = SelectionConfig()
    return [
        Opt("--mode", d.mode, choices=("deterministic", "randomized"), help="selection mode"),
        Opt("--k", d.k, "int", help="sentences per selected input"),
        Opt("--pool", d.pool, "int", help="top-ranked pool for randomized sampling"),
        Opt("--samples", d.num_samples, "int", help="sampled inputs per document in randomized mode"),
        Opt("--seed", d.seed, "int", help="seed for sampled selections"),
        Opt("--weighting", d.weighting, choices=("linear_rank", "inverse_rank"), help="sampling weights by rank"),
    ]


def _predictor_opts() -> list[Opt]:
    return [
        Opt("--weights", kind="path", help="reference-classifier weight file"),
        Opt("--backend-url", env=BACKEND_URL_ENV, help="HTTP scorer backend base URL"),
        Opt("--llm-url", env=LLM_URL_ENV, help="HTTP generation backend base URL"),
        Opt("--llm-echo", False, "bool", help="use the offline keyword-echo generation mock"),
        Opt("--timeout", 60.0, "float", help="HTTP timeout in seconds"),
        Opt("--overlap", DEFAULT_OVERLAP, "int", help="chunk overlap in tokens"),
        Opt("--summary", True, "bool", help="ask the LLM for a summary line before the answer"),
        Opt("--max-new-tokens", DEFAULT_MAX_NEW_TOKENS, "int", help="generation budget for LLM answers"),
    ]


# --------------------------------------------------------------------------
# Helpers
# --------------------------------------------------------------------------

def pmap(fn: Callable, items: Sequence, workers: int) -> list:
    """Map in a thread pool; results come back in input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _docs(o):
    docs = load_corpus(o.corpus)
    if o.subset and not o.splits:
        raise ConfigError("--subset needs --splits")
    if o.splits:
        split = load_splits(o.splits)
        docs = split.select(docs, o.subset or "train")
    return docs


def _scorer_list(o) -> list:
    backends = [load_weights(p) for p in (o.weights or [])]
    backends += [HttpScorerBackend(u, timeout=o.timeout) for u in (o.backend_url or [])]
    return backends


def _predictor(o):
    chosen = [name for name, v in (("weights", o.weights), ("backend-url", o.backend_url),
                                   ("llm-url", o.llm_url), ("llm-echo", o.llm_echo)) if v]
    if len(chosen) != 1:
        raise ConfigError(f"choose exactly one of --weights, --backend-url, --llm-url, --llm-echo (got {chosen or 'none'})")
    if o.weights:
        return "scorer", load_weights(o.weights)
    if o.backend_url:
        return "scorer", HttpScorerBackend(o.backend_url, timeout=o.timeout)
    if o.llm_url:
        return "llm", HttpGenerationClient(o.llm_url, timeout=o.timeout)
    return "llm", EchoClient()


def _rankings_for(docs, path) -> dict:
    rankings = read_rankings(path)
    missing = [d.doc_id for d in docs if d.doc_id not in rankings]
    if missing:
        raise DocIdMismatch(f"{path} has no ranking for {missing[0]!r} ({len(missing)} missing)")
    for d in docs:
        if len(rankings[d.doc_id].order) != len(d):
            raise DocIdMismatch(f"ranking for {d.doc_id!r} does not match its sentence count")
    return rankings


def _named(values: Sequence[str], flag: str) -> list[tuple[str, str]]:
    out = []
    for v in values:
        name, sep, rest = v.partition("=")
        if not sep or not name or not rest:
            raise ConfigError(f"{flag} expects NAME=VALUE, got {v!r}")
        out.append((name, rest))
    return out


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_synth(o):
    cfg = SyntheticConfig(n_docs=o.n_docs, signal_sentences=o.signal_sentences, distractors=o.distractors)
    docs = generate_corpus(o.seed, cfg)
    save_corpus(o.out, docs)
    if o.export_dir:
        root = Path(o.export_dir)
        (root / "texts").mkdir(parents=True, exist_ok=True)
        with open(root / "assessments.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["doc_id", "species", "publication", "category", "evidence"])
            for d in docs:
                ev = " | ".join(d.sentences[i].text for i in sorted(d.evidence_indices))
                w.writerow([d.doc_id, d.species, d.title, d.label.label, ev])
        for d in docs:
            texts = d.texts
            paragraphs = [" ".join(texts[i:i + 8]) for i in range(0, len(texts), 8)]
            (root / "texts" / f"{d.doc_id}.txt").write_text("\n\n".join(paragraphs) + "\n", encoding="utf-8")
    return {"documents": len(docs)}


def cmd_ingest(o):
    records = read_assessments_csv(o.assessments, o.delimiter)
    docs = documents_from_assessments(records, o.texts)
    save_corpus(o.out, docs)
    return {"records": len(records), "documents": len(docs)}


def cmd_align(o):
    docs = load_corpus(o.corpus)
    records = merge_records(read_assessments_csv(o.assessments, o.delimiter))
    cfg = AlignConfig(t_match=o.t_match, t_borderline=o.t_borderline)

    def one(doc):
        rec = records.get(doc.doc_id)
        if rec is None:
            return doc, []
        results = align_evidence(doc, rec.evidence, cfg)
        return doc.replace(evidence_indices=evidence_indices_from(results)), results

    done = pmap(one, docs, o.workers)
    summary = write_alignment_report(o.report, [(d.doc_id, r) for d, r in done])
    save_corpus(o.out, [d for d, _ in done])
    return summary


def cmd_split(o):
    docs = load_corpus(o.corpus)
    if len(o.ratios) != 3:
        raise ConfigError("--ratios takes exactly three numbers")
    split = build_splits(docs, tuple(o.ratios), o.seed)
    save_splits(o.out, split)
    return split.counts()


def cmd_score(o):
    docs = _docs(o)
    backends = _scorer_list(o)
    if not backends:
        raise ConfigError("score needs at least one --weights or --backend-url")
    if o.signal == "entropy":
        def fn(d):
            return entropy_scores(d, backends, o.average)
    else:
        def fn(d):
            return importance_scores(d, backends, o.norm, o.overlap)
    scores = pmap(fn, docs, o.workers)
    with open(o.out, "w", encoding="utf-8", newline="\n") as f:
        for d, s in zip(docs, scores):
            f.write(json.dumps({"doc_id": d.doc_id, "signal": o.signal, "scores": s}, ensure_ascii=False) + "\n")
    return {"documents": len(docs), "signal": o.signal}


def cmd_derive(o):
    docs = _docs(o)
    llm_labels = read_llm_labels(o.llm_labels) if o.llm_labels else None
    scores = read_scores(o.scores) if o.scores else None
    backends = _scorer_list(o) or None
    examples = derive_training_data(docs, o.source, llm_labels=llm_labels, scores=scores,
                                    backends=backends, context=o.context)
    write_examples(o.out, examples)
    return {"examples": len(examples), "source": o.source}


def _hyperparameters(o) -> Hyperparameters:
    return Hyperparameters(epochs=o.epochs, batch_size=o.batch_size, learning_rate=o.learning_rate, l2=o.l2,
                           class_balance=o.class_balance, max_tokens=o.max_tokens, overlap=o.overlap)


def cmd_train_ref(o):
    hp = _hyperparameters(o)
    if o.examples:
        if o.corpus:
            raise ConfigError("give either --corpus or --examples, not both")
        examples = read_examples(o.examples)
        if not examples:
            raise MissingSignal("examples", f"{o.examples} is empty")
        labels = [e.label for e in examples]
        model = fit_reference([e.input_text for e in examples], labels, max(2, max(labels) + 1), hp, o.seed)
        n = len(examples)
    else:
        if not o.corpus:
            raise ConfigError("train-ref needs --corpus or --examples")
        docs = _docs(o)
        if o.rankings:
            rankings = _rankings_for(docs, o.rankings)
            docs = [d.select(select_top_k(rankings[d.doc_id], o.k)) for d in docs]
        model = train_reference_classifier(docs, hp, o.seed)
        n = len(docs)
    save_weights(o.out, model)
    return {"trained_on": n, "classes": model.n_classes}


def cmd_rank(o):
    docs = _docs(o)
    if o.random:
        if o.selector_weights or o.selector_url:
            raise ConfigError("--random cannot be combined with a selector")
        rankings = [random_ranking(d, o.seed) for d in docs]
    else:
        if bool(o.selector_weights) == bool(o.selector_url):
            raise ConfigError("choose exactly one of --selector-weights, --selector-url, --random")
        selector = load_weights(o.selector_weights) if o.selector_weights else HttpScorerBackend(
            o.selector_url, timeout=o.timeout)
        rankings = pmap(lambda d: rank_sentences(d, selector, o.context), docs, o.workers)
    write_rankings(o.out, rankings)
    return {"documents": len(rankings)}


def _selection(o, with_rankings: bool) -> SelectionConfig | None:
    if not with_rankings:
        if o.mode == "randomized":
            raise ConfigError("randomized mode needs --rankings")
        return None
    return SelectionConfig(k=o.k, pool=o.pool, mode=o.mode, num_samples=o.samples, seed=o.seed,
                           weighting=o.weighting)


def cmd_classify(o):
    docs = _docs(o)
    rankings = _rankings_for(docs, o.rankings) if o.rankings else None
    cfg = _selection(o, rankings is not None)
    kind, predictor = _predictor(o)

    def one(doc):
        r = rankings[doc.doc_id] if rankings else None
        if kind == "scorer":
            return predict_with_classifier(doc, r, cfg, predictor, o.overlap)
        return predict_with_llm(doc, r, cfg, predictor, o.summary, o.max_new_tokens)

    preds = pmap(one, docs, o.workers)
    write_predictions(o.out, preds)
    return {"documents": len(preds), "abstentions": sum(p.abstentions for p in preds)}


def cmd_eval(o):
    from .reports import plot_confusion, write_confusion_csv

    preds = read_predictions(o.predictions)
    gold = {d.doc_id: d.label for d in load_corpus(o.corpus)}
    golds = []
    for p in preds:
        if p.doc_id not in gold:
            raise DocIdMismatch(f"prediction for unknown document {p.doc_id!r}")
        if gold[p.doc_id] is None:
            raise MissingField("label", p.doc_id)
        golds.append(gold[p.doc_id])
    report = compute_f1([p.category for p in preds], golds, o.macro_over)
    write_json(o.out, report.to_dict())
    if o.csv:
        write_confusion_csv(o.csv, report)
    if o.figure:
        plot_confusion(report, o.figure)
    return {"macro_f1": report.macro_f1, "micro_f1": report.micro_f1, "n": report.n}


def _truth_gains(docs, spec: str) -> dict[str, list[float]]:
    kind, _, path = spec.partition(":")
    if kind == "evidence" and not path:
        out = {}
        for d in docs:
            if d.evidence_indices is None:
                raise MissingSignal("evidence", f"{d.doc_id} has no evidence_indices")
            out[d.doc_id] = evidence_gains(d)
        return out
    if kind == "scores" and path:
        scores = read_scores(path)
        return {d.doc_id: [float(x) for x in discretize_scores(scores[d.doc_id])] for d in docs if d.doc_id in scores}
    if kind == "llm" and path:
        labels = read_llm_labels(path)
        return {d.doc_id: [float(parse_usefulness(x)) for x in labels[d.doc_id]] for d in docs if d.doc_id in labels}
    raise ConfigError(f"--truth source must be evidence, scores:PATH or llm:PATH, got {spec!r}")


def cmd_agree(o):
    from .reports import plot_agreement

    docs = _docs(o)
    if not o.rankings or not o.truth:
        raise ConfigError("agree needs at least one --rankings and one --truth")
    rankings = {}
    for name, path in _named(o.rankings, "--rankings"):
        rk = _rankings_for(docs, path)
        rankings[name] = {d.doc_id: rk[d.doc_id] for d in docs}
    truths = {name: _truth_gains(docs, spec) for name, spec in _named(o.truth, "--truth")}
    matrix = agreement_matrix(rankings, truths, o.k, o.gain)
    matrix.write_csv(o.out)
    if o.json:
        write_json(o.json, matrix.to_dict())
    if o.figure:
        plot_agreement(matrix, o.figure)
    return {"selectors": len(matrix.selectors), "truths": len(matrix.truths)}


def cmd_bench(o):
    from .reports import plot_benchmark, write_benchmark_csv

    docs = _docs(o)
    kind, predictor = _predictor(o)
    if kind == "scorer" and o.latency_per_token > 0:
        predictor = LatencyBackend(predictor, o.latency_per_token)
    rankings = _rankings_for(docs, o.rankings) if o.rankings else None
    slot = {"backend": predictor} if kind == "scorer" else {"client": predictor}
    variants = [PipelineVariant("full", overlap=o.overlap, max_new_tokens=o.max_new_tokens, **slot)]
    if rankings is not None:
        sel = _selection(o, True)
        variants.append(PipelineVariant(f"top-{o.k}", cfg=SelectionConfig(k=o.k, pool=max(o.k, o.pool)),
                                        rankings=rankings, overlap=o.overlap, max_new_tokens=o.max_new_tokens, **slot))
        if sel.mode == "randomized":
            variants.append(PipelineVariant(f"sampled-{o.k}x{o.samples}", cfg=sel, rankings=rankings,
                                            overlap=o.overlap, max_new_tokens=o.max_new_tokens, **slot))
    reports = run_benchmark(docs, variants, o.repetitions)
    write_json(o.out, [r.to_dict() for r in reports])
    if o.csv:
        write_benchmark_csv(o.csv, reports)
    if o.figure:
        plot_benchmark(reports, o.figure)
    return {r.variant: {"total_seconds": r.total_seconds, "reduction_ratio": r.reduction_ratio} for r in reports}


# --------------------------------------------------------------------------
# Command table
# --------------------------------------------------------------------------

_HP = Hyperparameters()

COMMANDS: dict[str, tuple[str, list[Opt], Callable]] = {
    "synth": ("generate a synthetic labelled corpus", [
        Opt("--out", kind="path", required=True, help="corpus JSONL to write"),
        Opt("--n-docs", SyntheticConfig.n_docs, "int", help="number of documents"),
        Opt("--signal-sentences", SyntheticConfig.signal_sentences, "int", help="evidence sentences per document"),
        Opt("--distractors", SyntheticConfig.distractors, "int", help="non-evidence sentences per document"),
        Opt("--seed", 0, "int", help="generator seed"),
        Opt("--export-dir", kind="path", help="also write assessments.csv and texts/ for the ingest command"),
    ], cmd_synth),
    "ingest": ("join an assessment CSV with full texts into a corpus", [
        Opt("--assessments", kind="path", required=True, help="assessment CSV (species, publication, category, evidence)"),
        Opt("--texts", kind="path", required=True, help="directory holding <doc_id>.txt full texts"),
        Opt("--out", kind="path", required=True, help="corpus JSONL to write"),
        Opt("--delimiter", "|", help="separator between evidence sentences in the CSV"),
    ], cmd_ingest),
    "align": ("map assessor evidence onto document sentences", [
        Opt("--corpus", kind="path", required=True, help="corpus JSONL file"),
        Opt("--assessments", kind="path", required=True, help="assessment CSV holding the evidence"),
        Opt("--out", kind="path", required=True, help="corpus JSONL with evidence_indices filled in"),
        Opt("--report", kind="path", required=True, help="alignment report JSONL"),
        Opt("--delimiter", "|", help="separator between evidence sentences in the CSV"),
        Opt("--t-match", AlignConfig.t_match, "float", help="minimum score for a fuzzy match"),
        Opt("--t-borderline", AlignConfig.t_borderline, "float", help="minimum score for adjudication"),
    ], cmd_align),
    "split": ("species-disjoint train/val/test split", [
        Opt("--corpus", kind="path", required=True, help="corpus JSONL file"),
        Opt("--out", kind="path", required=True, help="split JSON to write"),
        Opt("--ratios", [0.82, 0.08, 0.10], "floats", help="train, val and test fractions"),
        Opt("--seed", 0, "int", help="shuffle seed"),
    ], cmd_split),
    "score": ("per-sentence entropy or leave-one-out importance scores", [
        *_corpus_opts(),
        Opt("--out", kind="path", required=True, help="scores JSONL to write"),
        Opt("--signal", "entropy", choices=("entropy", "importance"), help="which signal"),
        Opt("--weights", kind="list", help="reference weight file, repeatable for an ensemble"),
        Opt("--backend-url", kind="list", env=BACKEND_URL_ENV, help="HTTP scorer URL, repeatable"),
        Opt("--timeout", 60.0, "float", help="HTTP timeout in seconds"),
        Opt("--average", "distribution", choices=("distribution", "entropy"), help="ensemble averaging for entropy"),
        Opt("--norm", "l1", choices=("l1", "linf"), help="logit distance for importance"),
        Opt("--overlap", DEFAULT_OVERLAP, "int", help="chunk overlap in tokens"),
    ], cmd_score),
    "derive": ("selector training examples from one signal source", [
        *_corpus_opts(),
        Opt("--out", kind="path", required=True, help="examples JSONL to write"),
        Opt("--source", "evidence", choices=SOURCES, help="signal source"),
        Opt("--llm-labels", kind="path", help="per-sentence usefulness labels JSONL (source llm)"),
        Opt("--scores", kind="path", help="scores JSONL from the score command (entropy, importance)"),
        Opt("--weights", kind="list", help="compute entropy or importance on the fly with these weights"),
        Opt("--backend-url", kind="list", help="compute entropy or importance on the fly with these scorers"),
        Opt("--timeout", 60.0, "float", help="HTTP timeout in seconds"),
        Opt("--context", 3, "int", help="neighbouring sentences on each side of the target"),
    ], cmd_derive),
    "train-ref": ("train the hashed n-gram reference classifier", [
        *_corpus_opts(required=False),
        Opt("--examples", kind="path", help="train a sentence selector on derived examples instead"),
        Opt("--rankings", kind="path", help="train on top-k selected sentences under these rankings"),
        Opt("--k", SelectionConfig.k, "int", help="sentences kept per document with --rankings"),
        Opt("--out", kind="path", required=True, help="weight file to write"),
        Opt("--epochs", _HP.epochs, "int", help="passes over the training inputs"),
        Opt("--batch-size", _HP.batch_size, "int", help="mini-batch size"),
        Opt("--learning-rate", _HP.learning_rate, "float", help="SGD step size"),
        Opt("--l2", _HP.l2, "float", help="L2 penalty"),
        Opt("--class-balance", _HP.class_balance, "bool", help="weight examples by inverse class frequency"),
        Opt("--max-tokens", DEFAULT_MAX_TOKENS, "int", help="chunk size in tokens"),
        Opt("--overlap", DEFAULT_OVERLAP, "int", help="chunk overlap in tokens"),
        Opt("--seed", 0, "int", help="shuffling seed"),
    ], cmd_train_ref),
    "rank": ("rank each document's sentences with a selector", [
        *_corpus_opts(),
        Opt("--out", kind="path", required=True, help="rankings JSONL to write"),
        Opt("--selector-weights", kind="path", help="selector weight file from train-ref --examples"),
        Opt("--selector-url", help="HTTP selector backend URL"),
        Opt("--random", False, "bool", help="uniformly random baseline ranking"),
        Opt("--seed", 0, "int", help="seed for the random baseline"),
        Opt("--context", 3, "int", help="neighbouring sentences on each side of the target"),
        Opt("--timeout", 60.0, "float", help="HTTP timeout in seconds"),
    ], cmd_rank),
    "classify": ("predict impact categories", [
        *_corpus_opts(),
        Opt("--out", kind="path", required=True, help="predictions JSONL to write"),
        Opt("--rankings", kind="path", help="rankings JSONL; without it the full text is used"),
        *_selection_opts(),
        *_predictor_opts(),
    ], cmd_classify),
    "eval": ("macro and micro F1 of predictions against corpus labels", [
        Opt("--predictions", kind="path", required=True, help="predictions JSONL"),
        Opt("--corpus", kind="path", required=True, help="corpus JSONL with gold labels"),
        Opt("--out", kind="path", required=True, help="report JSON to write"),
        Opt("--macro-over", "present", choices=("present", "all"), help="classes averaged in macro F1"),
        Opt("--csv", kind="path", help="also write the confusion matrix as CSV"),
        Opt("--figure", kind="path", help="also render the confusion matrix as PNG"),
    ], cmd_eval),
    "agree": ("NDCG agreement between selectors and ground truths", [
        *_corpus_opts(),
        Opt("--rankings", kind="list", help="NAME=PATH rankings, repeatable"),
        Opt("--truth", kind="list", help="NAME=evidence, NAME=scores:PATH or NAME=llm:PATH, repeatable"),
        Opt("--k", None, "int", help="NDCG cutoff; the full ranking when unset"),
        Opt("--gain", "linear", choices=("linear", "exponential"), help="gain function"),
        Opt("--out", kind="path", required=True, help="agreement matrix CSV to write"),
        Opt("--json", kind="path", help="also write the matrix with document counts as JSON"),
        Opt("--figure", kind="path", help="also render a heatmap PNG"),
    ], cmd_agree),
    "bench": ("time full-text against selected-input pipelines", [
        *_corpus_opts(),
        Opt("--rankings", kind="path", help="rankings JSONL for the selected variants"),
        *_selection_opts(),
        *_predictor_opts(),
        Opt("--latency-per-token", 0.0, "float", help="mock seconds per classified token added to the scorer"),
        Opt("--repetitions", 3, "int", help="runs per variant; the median is reported"),
        Opt("--out", kind="path", required=True, help="benchmark JSON to write"),
        Opt("--csv", kind="path", help="also write a per-variant CSV"),
        Opt("--figure", kind="path", help="also render a stacked stage-time chart PNG"),
    ], cmd_bench),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sentsel", description="Sentence selection for long-document impact classification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", default=None, help="TOML config file with one table per command")
    parser.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                        help="document-level worker threads; output order is unaffected (default: 1)")
    parser.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"),
                        help="logging verbosity on standard error (default: WARNING)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, (help_text, opts, _) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        for opt in opts:
            _add(p, opt)
    return parser


def load_config(path) -> dict:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML in {path}: {e}") from None
    for key, value in data.items():
        if key == "workers":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError("config key 'workers' must be an integer")
        elif key not in COMMANDS:
            raise ConfigError(f"unknown config key {key!r}")
        elif not isinstance(value, dict):
            raise ConfigError(f"config key {key!r} must be a table")
        else:
            # check every table, not only the one for the command being run
            by_key = {o.key: o for o in COMMANDS[key][1]}
            for name, v in value.items():
                if name not in by_key:
                    raise ConfigError(f"unknown key {name!r} in config table [{key}]")
                _check_type(by_key[name], v)
    return data


def resolve_options(command: str, flags: dict, config: dict) -> SimpleNamespace:
    """Merge defaults, environment, config table and flags, in rising precedence."""
    opts = COMMANDS[command][1]
    by_key = {o.key: o for o in opts}
    values = {o.dest: o.default for o in opts}
    for o in opts:
        if o.env and os.environ.get(o.env):
            values[o.dest] = [os.environ[o.env]] if o.kind == "list" else os.environ[o.env]
    for key, value in config.get(command, {}).items():
        if key not in by_key:
            raise ConfigError(f"unknown key {key!r} in config table [{command}]")
        values[by_key[key].dest] = _check_type(by_key[key], value)
    values.update({k: v for k, v in flags.items() if k in values})
    values["workers"] = flags.get("workers", config.get("workers", 1))
    if values["workers"] < 1:
        raise ConfigError("--workers must be >= 1")
    for o in opts:
        if o.required and values[o.dest] is None:
            raise ConfigError(f"missing required option {o.flag} (flag or [{command}] {o.key})")
    return SimpleNamespace(**values)


def _fail(err: Exception, code: int) -> int:
    payload = {"error": type(err).__name__, "message": str(err), "exit_code": code}
    for attr in ("line", "row", "chunk_index"):
        if getattr(err, attr, None) is not None:
            payload[attr] = getattr(err, attr)
    print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        logging.basicConfig(level=ns.log_level, format="%(levelname)s %(name)s: %(message)s")
        config = load_config(ns.config) if ns.config else {}
        flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "log_level")}
        options = resolve_options(ns.command, flags, config)
        summary = COMMANDS[ns.command][2](options)
    except SentselError as e:
        return _fail(e, e.exit_code)
    except FileNotFoundError as e:
        return _fail(e, 2)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        return _fail(e, 2)
    if summary is not None:
        _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
