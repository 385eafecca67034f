"""Synthetic clinical-style corpus with a known label mechanism.

Documents are mixtures of topic clusters plus Zipfian filler. Two clusters
carry the class signal (one per class); the rest are shared. Words inside a
cluster co-occur heavily, so count-based embeddings place them near each
other, which is what the neighbor perturbation relies on.
"""

from __future__ import annotations

import numpy as np

from .text import NUMBER_TOKEN, Document

POSITIVE_WORDS = (
    "intubated unresponsive pressors sepsis arrest coma hypotension vasopressin lactate "
    "dnr comfort agonal anuric bradycardic hemorrhage shock ventilated sedated mottled gasping"
).split()
NEGATIVE_WORDS = (
    "stable ambulating alert oriented tolerating discharge improving afebrile eating walking "
    "comfortable independent normal cleared extubated pleasant baseline resolved denies home"
).split()
SHARED_TOPICS = {
    "cardiac": "heart rhythm sinus murmur echo troponin ekg atrial systolic diastolic valve cardiology".split(),
    "resp": "lungs breath sounds clear wheeze oxygen saturation cannula chest xray effusion".split(),
    "renal": "kidney creatinine urine foley diuresis bun electrolytes potassium sodium fluids".split(),
    "neuro": "neuro pupils reactive gcs sedation propofol fentanyl responsive commands moving".split(),
    "meds": "coumadin heparin insulin aspirin statin lasix metoprolol vancomycin zosyn tylenol".split(),
    "social": "family wife daughter son updated meeting plan code status discussed goals".split(),
}
_SYLLABLES = "ka lo mi ne ru sa te vi do pa ze fu gi ho ja ly qu xe wo ba".split()


def _filler_words(n: int) -> list[str]:
    words = []
    i = 0
    while len(words) < n:
        a, b = divmod(i, len(_SYLLABLES))
        a2, a1 = divmod(a, len(_SYLLABLES))
        w = _SYLLABLES[a1] + _SYLLABLES[b] + (_SYLLABLES[a2 % len(_SYLLABLES)] if a2 else "")
        words.append(w)
        i += 1
    return words


def synthetic_corpus(
    n_docs: int = 2000,
    seed: int = 0,
    length_range: tuple[int, int] = (60, 120),
    n_filler: int = 300,
    signal: float = 0.18,
    prefix: str = "syn",
) -> list[Document]:
    """Generate ``n_docs`` labeled documents; roughly balanced classes."""
    rng = np.random.default_rng(seed)
    filler = _filler_words(n_filler)
    zipf = 1.0 / np.arange(1, n_filler + 1)
    zipf /= zipf.sum()
    topics = list(SHARED_TOPICS.values())
    docs = []
    for i in range(n_docs):
        label = int(rng.random() < 0.5)
        own = POSITIVE_WORDS if label else NEGATIVE_WORDS
        other = NEGATIVE_WORDS if label else POSITIVE_WORDS
        chosen = [topics[j] for j in rng.choice(len(topics), size=2, replace=False)]
        n = int(rng.integers(length_range[0], length_range[1] + 1))
        toks = []
        for _ in range(n):
            r = rng.random()
            if r < signal:
                toks.append(own[rng.integers(len(own))])
            elif r < signal + 0.03:
                toks.append(other[rng.integers(len(other))])
            elif r < 0.6:
                t = chosen[rng.integers(len(chosen))]
                toks.append(t[rng.integers(len(t))])
            elif r < 0.65:
                toks.append(NUMBER_TOKEN)
            else:
                toks.append(filler[rng.choice(n_filler, p=zipf)])
        docs.append(Document(f"{prefix}{i}", label, tuple(toks)))
    return docs


def train_test_split(docs, test_fraction: float = 0.2, seed: int = 0):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(docs))
    n_test = int(round(test_fraction * len(docs)))
    test = [docs[i] for i in sorted(order[:n_test])]
    train = [docs[i] for i in sorted(order[n_test:])]
    return train, test
