"""Shared fixtures-in-code for the test suite."""

import numpy as np

from salieval.textmodel import AttentionClassifier, ClassifierConfig, Vocab, make_sample

KEYWORDS = {1: ("good", "great", "fine"), 2: ("bad", "awful", "poor")}
FILLER = ("the", "a", "movie", "plot", "actor", "scene", "was", "it", "and", "very")


def planted_corpus(rng, n, length=(6, 12)):
    """Tiny two-class corpus where 1-2 planted keywords decide the label."""
    out = []
    for i in range(n):
        label = int(rng.integers(1, 3))
        L = int(rng.integers(*length))
        words = [FILLER[int(rng.integers(len(FILLER)))] for _ in range(L)]
        for _ in range(1 + int(rng.integers(2))):
            kw = KEYWORDS[label][int(rng.integers(3))]
            words[int(rng.integers(L))] = kw
        out.append(make_sample(f"s{i}", " ".join(words), label))
    return out


def small_model(classes=2, vocab_words=None, **kw):
    vocab = Vocab(vocab_words or [f"w{i}" for i in range(12)])
    kw.setdefault("embed_dim", 16)
    kw.setdefault("heads", 2)
    return AttentionClassifier(ClassifierConfig(classes=classes, **kw), vocab)


def linearized(model):
    """Copy of a model with the attention/ff outputs zeroed: the residual path
    makes logits an exact linear function of the input embeddings."""
    params = {k: v.copy() for k, v in model.params.items()}
    for l in range(model.config.layers):
        params[f"l{l}_wo"][:] = 0.0
        params[f"l{l}_ff2"][:] = 0.0
    return AttentionClassifier(model.config, model.vocab, params=params)
