"""Synthetic corpora drawn from the model's own generative mechanism.

These recipes back the experiment suite and the acceptance checks: licensed
news corpora are out of reach, so qualitative findings are reproduced on
corpora whose true themes are known by construction.
"""

from __future__ import annotations

import numpy as np

from .core import ModelParams, generate_corpus
from .errors import InputError

__all__ = ["block_model", "rare_tail_model", "sample_pair"]


def block_model(n_themes: int, n_words: int, within: float = 0.9,
                alpha=None) -> ModelParams:
    """Well-separated themes: each theme spreads `within` of its mass
    uniformly over its own block of words and the rest uniformly everywhere.
    """
    if not 0 < within <= 1:
        raise InputError("within-block mass must be in (0, 1]")
    if n_words < n_themes:
        raise InputError("need at least one word per theme")
    beta = np.full((n_words, n_themes), (1.0 - within) / n_words)
    bounds = np.linspace(0, n_words, n_themes + 1).astype(int)
    for t in range(n_themes):
        block = slice(bounds[t], bounds[t + 1])
        beta[block, t] += within / (bounds[t + 1] - bounds[t])
    if alpha is None:
        alpha = np.full(n_themes, 1.0 / n_themes)
    return ModelParams.from_probs(np.asarray(alpha, dtype=float), beta)


def rare_tail_model(n_themes: int, n_head: int, n_tail: int, rng, *,
                    head_concentration: float = 0.25,
                    tail_mass: float = 0.5) -> ModelParams:
    """Themes with a moderately informative frequent head and a long
    uninformative rare tail.

    Head word distributions are Dirichlet draws with shared support, so the
    frequent words separate themes only statistically.  The tail is shared
    by every theme with Zipf-decaying weights: individually rare words carry
    no true theme signal, but their thousands of parameters readily overfit
    a poor initialization and lock EM into local maxima.  This is the regime
    where incremental-vocabulary estimation pays off: the head alone is
    low-dimensional and reliable, and tail parameters entered from a good
    soft clustering stay benign.
    """
    if not 0 < tail_mass < 1:
        raise InputError("tail_mass must be in (0, 1)")
    if n_head < 1 or n_tail < 1:
        raise InputError("need at least one head word and one tail word")
    beta = np.zeros((n_head + n_tail, n_themes))
    for t in range(n_themes):
        head = rng.dirichlet(np.full(n_head, head_concentration))
        beta[:n_head, t] = (1.0 - tail_mass) * head
    zipf = 1.0 / np.arange(1, n_tail + 1)
    beta[n_head:, :] = (tail_mass * zipf / zipf.sum())[:, np.newaxis]
    return ModelParams.from_probs(np.full(n_themes, 1.0 / n_themes), beta)


def sample_pair(params: ModelParams, n_train: int, n_test: int,
                doc_length, rng):
    """Draw a (train, test) corpus pair with true theme assignments."""
    train_counts, train_themes = generate_corpus(params, n_train, doc_length, rng)
    test_counts, test_themes = generate_corpus(params, n_test, doc_length, rng)
    return (train_counts, train_themes), (test_counts, test_themes)
