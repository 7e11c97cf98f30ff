import numpy as np
import pytest

from helpers import planted_corpus
from salieval.textmodel import ClassifierConfig, train


@pytest.fixture(scope="session")
def trained2():
    """A 2-class classifier trained on a planted-keyword corpus, plus the corpus."""
    corpus = planted_corpus(np.random.default_rng(42), 160)
    model, _ = train(ClassifierConfig(classes=2, seed=7), corpus,
                     epochs=8, learning_rate=0.05)
    return model, corpus
