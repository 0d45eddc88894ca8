"""Deterministic stand-in backends and generation clients for offline runs."""

from __future__ import annotations

import time
from typing import Callable, Mapping, Sequence

from .corpus import ImpactCategory, reference_tokenize
from .scoring import DEFAULT_MAX_TOKENS, N_CLASSES, ClassScores


class ConstantBackend:
    """Returns the same logits for every input."""

    def __init__(self, logits: Sequence[float], max_tokens: int = DEFAULT_MAX_TOKENS, batch_size: int = 8):
        self.logits = tuple(float(x) for x in logits)
        self.max_tokens = max_tokens
        self.batch_size = batch_size

    def classify(self, texts):
        return [ClassScores(self.logits) for _ in texts]


class KeywordCountBackend:
    """Logit ``c`` is the number of occurrences of class ``c``'s keyword."""

    def __init__(self, keywords: Sequence[str], max_tokens: int = DEFAULT_MAX_TOKENS, batch_size: int = 8):
        self.keywords = [k.lower() for k in keywords]
        self.max_tokens = max_tokens
        self.batch_size = batch_size

    def classify(self, texts):
        out = []
        for text in texts:
            toks = [t.lower() for t in reference_tokenize(text)]
            out.append(ClassScores(tuple(float(toks.count(k)) for k in self.keywords)))
        return out


class FunctionBackend:
    def __init__(self, fn: Callable[[str], Sequence[float]], max_tokens: int = DEFAULT_MAX_TOKENS, batch_size: int = 8):
        self.fn = fn
        self.max_tokens = max_tokens
        self.batch_size = batch_size

    def classify(self, texts):
        return [ClassScores(tuple(self.fn(t))) for t in texts]


class LatencyBackend:
    """Wraps a backend and sleeps ``seconds_per_token`` for every token it
    is asked to classify, to model inference cost proportional to length."""

    def __init__(self, inner=None, seconds_per_token: float = 1e-4):
        self.inner = inner or ConstantBackend([0.0] * N_CLASSES)
        self.seconds_per_token = seconds_per_token
        self.max_tokens = self.inner.max_tokens
        self.batch_size = self.inner.batch_size

    def classify(self, texts):
        n = sum(len(reference_tokenize(t)) for t in texts)
        time.sleep(n * self.seconds_per_token)
        return self.inner.classify(texts)


class FixedClient:
    def __init__(self, text: str):
        self.text = text

    def generate(self, prompt, max_new_tokens):
        return self.text


class ScriptedClient:
    """Returns responses from a list in call order, cycling when exhausted."""

    def __init__(self, responses: Sequence[str]):
        self.responses = list(responses)
        self.calls = 0

    def generate(self, prompt, max_new_tokens):
        r = self.responses[self.calls % len(self.responses)]
        self.calls += 1
        return r


BODY_START = "This is a scientific paper about an invasive species: "
BODY_END = "This is the end of the scientific text."


def prompt_body(prompt: str) -> str:
    start = prompt.find(BODY_START)
    end = prompt.rfind(BODY_END)
    if start < 0 or end < 0:
        return prompt
    return prompt[start + len(BODY_START):end]


class EchoClient:
    """Greedy-style mock: answers with the category whose keyword occurs most
    often in the prompt body (ties to the less severe category), or Data
    Deficient when none occurs."""

    def __init__(self, keywords: Mapping[ImpactCategory, str] | None = None):
        if keywords is None:
            keywords = {c: c.label.split()[0].lower() for c in ImpactCategory}
        self.keywords = {ImpactCategory(c): k.lower() for c, k in keywords.items()}

    def generate(self, prompt, max_new_tokens):
        toks = [t.lower() for t in reference_tokenize(prompt_body(prompt))]
        counts = {c: toks.count(k) for c, k in self.keywords.items()}
        best = max(counts.values(), default=0)
        if best == 0:
            category = ImpactCategory.DATA_DEFICIENT
        else:
            category = min(c for c, n in counts.items() if n == best)
        return f"Summary: The text mentions {self.keywords.get(category, 'nothing')} most often.\nAnswer: {category.label}\nEND."
