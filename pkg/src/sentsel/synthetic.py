"""Synthetic impact-assessment corpora with known evidence sentences.

Each document has a handful of signal sentences stating the impact of its
own species, a few sentences describing a different impact caused by some
other species, and many neutral distractors. Evidence indices point at the
signal sentences.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import Document, ImpactCategory, Sentence
from .errors import ConfigError

IMPACT_PHRASES = {
    ImpactCategory.MINIMAL_CONCERN: [
        "had no detectable effect on the performance of",
        "left the growth of individual {taxon} unchanged among",
        "showed negligible interaction with",
    ],
    ImpactCategory.MINOR: [
        "reduced the growth rate of individual",
        "lowered the body condition of",
        "slowed the foraging efficiency of",
    ],
    ImpactCategory.MODERATE: [
        "caused population declines of",
        "decreased the abundance of",
        "halved the breeding density of",
    ],
    ImpactCategory.MAJOR: [
        "caused the local extinction of",
        "eliminated the reversible subpopulation of",
        "extirpated the lake populations of",
    ],
    ImpactCategory.MASSIVE: [
        "drove to global extinction the endemic",
        "caused irreversible community collapse among",
        "permanently eradicated every remaining",
    ],
    ImpactCategory.DATA_DEFICIENT: [
        "has never been assessed for effects on",
        "lacks any quantitative impact record for",
        "remains unstudied regarding consequences for",
    ],
}

SIGNAL_TEMPLATES = [
    "In our study plots, {sp} {phrase} native {taxon}.",
    "Field surveys showed that {sp} {phrase} the resident {taxon}.",
    "Over the monitoring period {sp} {phrase} local {taxon}.",
    "We observed that {sp} {phrase} co-occurring {taxon}.",
]

SPECIES_NEUTRAL = [
    "{sp} was first recorded in the region in {year}.",
    "Specimens of {sp} were identified using standard keys.",
    "The introduction pathway of {sp} is thought to be the aquarium trade.",
    "{sp} occupies shallow habitats with dense vegetation.",
    "Genetic samples of {sp} were collected at {n} sites.",
]

FILLER = [
    "Samples were collected at {n} sites between {month} and {month2}.",
    "Water temperature ranged from {n} to {n2} degrees across the survey.",
    "Statistical analyses were performed using mixed effects models.",
    "Each transect was visited {n} times during the {season} season.",
    "We thank the field assistants for their help with data collection.",
    "Sediment cores were stored at low temperature prior to analysis.",
    "The study area comprises {n} lakes of varying depth and size.",
    "Invasive species are a major driver of global environmental change.",
    "Previous studies have examined dispersal in related taxa.",
    "Funding was provided by a regional research council.",
    "Table {n} summarises the environmental variables measured.",
    "Plots were separated by at least {n} metres to avoid interference.",
    "Abundance data were log transformed before analysis.",
    "All procedures followed the relevant animal welfare guidelines.",
    "Vegetation cover was estimated visually in {n} quadrats.",
    "Rainfall during the {season} season exceeded the long term average.",
]

TAXA = ["fish", "amphibians", "molluscs", "birds", "plants", "insects", "crustaceans", "reptiles"]
MONTHS = ["January", "March", "May", "June", "August", "October"]
SEASONS = ["wet", "dry", "breeding", "winter", "summer"]
_SYLLABLES = ["la", "to", "ni", "cus", "mar", "pha", "dre", "ssa", "bo", "ri", "tel", "xu", "gon", "vi", "sta", "mel"]


@dataclass(frozen=True)
class SyntheticConfig:
    n_docs: int = 120
    signal_sentences: int = 5
    distractors: int = 100
    other_species_min: int = 2
    other_species_max: int = 6
    species_neutral: int = 6

    def __post_init__(self):
        distinct = len(SIGNAL_TEMPLATES) * min(len(v) for v in IMPACT_PHRASES.values()) * len(TAXA)
        if not 1 <= self.signal_sentences <= distinct:
            raise ConfigError(f"signal_sentences must lie in 1..{distinct}")
        if self.n_docs < 1 or self.distractors < self.other_species_max:
            raise ConfigError("need n_docs >= 1 and distractors >= other_species_max")


def _name(rng: random.Random, used: set[str]) -> str:
    while True:
        genus = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 3))).capitalize()
        epithet = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 3)))
        name = f"{genus} {epithet}"
        if name not in used:
            used.add(name)
            return name


def _fill(template: str, rng: random.Random, **extra) -> str:
    values = dict(
        taxon=rng.choice(TAXA), year=rng.randint(1950, 2020), n=rng.randint(2, 40), n2=rng.randint(41, 90),
        month=rng.choice(MONTHS), month2=rng.choice(MONTHS), season=rng.choice(SEASONS),
    )
    values.update(extra)
    phrase = values.get("phrase")
    if phrase:
        values["phrase"] = phrase.format(**values)
    return template.format(**values)


def impact_sentence(rng: random.Random, species: str, category: ImpactCategory) -> str:
    return _fill(rng.choice(SIGNAL_TEMPLATES), rng, sp=species, phrase=rng.choice(IMPACT_PHRASES[category]))


def generate_corpus(seed: int = 0, cfg: SyntheticConfig = SyntheticConfig()) -> list[Document]:
    """Balanced over the six categories; one species per document."""
    rng = random.Random(seed)
    used: set[str] = set()
    species = [_name(rng, used) for _ in range(cfg.n_docs)]
    outsiders = [_name(rng, used) for _ in range(max(10, cfg.n_docs // 4))]
    categories = list(ImpactCategory)
    docs = []
    for i, sp in enumerate(species):
        label = categories[i % len(categories)]
        other_label = rng.choice([c for c in categories if c != label])
        n_other = rng.randint(cfg.other_species_min, cfg.other_species_max)
        n_neutral = min(cfg.species_neutral, cfg.distractors - n_other)
        n_filler = cfg.distractors - n_other - n_neutral

        signal: list[str] = []
        while len(signal) < cfg.signal_sentences:
            s = impact_sentence(rng, sp, label)
            if s not in signal:
                signal.append(s)
        others = []
        for _ in range(n_other):
            other = rng.choice(outsiders + species[:i] + species[i + 1:])
            others.append(impact_sentence(rng, other, other_label))
        neutral = [_fill(rng.choice(SPECIES_NEUTRAL), rng, sp=sp) for _ in range(n_neutral)]
        filler = [_fill(rng.choice(FILLER), rng) for _ in range(n_filler)]

        tagged = [(t, True) for t in signal] + [(t, False) for t in others + neutral + filler]
        rng.shuffle(tagged)
        sentences = tuple(Sentence(j, t) for j, (t, _) in enumerate(tagged))
        evidence = frozenset(j for j, (_, is_signal) in enumerate(tagged) if is_signal)
        docs.append(Document(f"doc{i:04d}", sp, f"Impact study {i} on {sp}", sentences, label, evidence))
    return docs
